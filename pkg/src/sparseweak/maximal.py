"""Dyadic maximal operators on the root cube.

Every operator here is a supremum over the dyadic cubes containing a cell,
from the root cube down to the cell itself.  Per-cube quantities are computed
level by level and a top-down sweep carries the running maximum to the cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import DyadicCube, GridFunction, blocks, cube_slices, frac_average_levels, refine
from .young import YoungFunction, _phi_unchecked

__all__ = [
    "OperatorParams",
    "dyadic_frac_maximal",
    "luxemburg_norm",
    "luxemburg_levels",
    "orlicz_maximal",
    "iterated_bound_weight",
]

LUXEMBURG_MAX_ITER = 80


@dataclass(frozen=True)
class OperatorParams:
    alpha: float = 0.0
    nu: float = 1.0
    phi: YoungFunction | None = None

    def validate(self, d: int) -> None:
        if not 0 <= self.alpha < d:
            raise DomainError(f"alpha must lie in [0, {d}), got {self.alpha}")
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")


def _sweep_max(levels: list[np.ndarray]) -> np.ndarray:
    run = levels[0]
    for a in levels[1:]:
        run = np.maximum(refine(run), a)
    return run


def dyadic_frac_maximal(f: GridFunction, alpha: float = 0.0) -> GridFunction:
    """M_alpha f(x) = max over dyadic Q containing x of |Q|^(alpha/d - 1) int_Q f."""
    return GridFunction(_sweep_max(frac_average_levels(f, alpha)))


def _luxemburg_rows(phi: YoungFunction, rows: np.ndarray) -> np.ndarray:
    """Luxemburg norm of each row: inf{lam > 0 : mean(phi(row / lam)) <= 1}."""
    n = rows.shape[0]
    out = np.zeros(n)
    top = rows.max(axis=1)
    live = np.flatnonzero(top > 0)
    if live.size == 0:
        return out
    r = rows[live]

    def excess(lam, idx):
        return _phi_unchecked(phi, r[idx] / lam[:, None]).mean(axis=1) > 1.0

    hi = top[live].copy()
    idx = np.arange(live.size)
    while idx.size:
        bad = excess(hi[idx], idx)
        idx = idx[bad]
        hi[idx] *= 2.0
    lo = hi.copy()
    idx = np.arange(live.size)
    while idx.size:
        ok = ~excess(lo[idx], idx)
        idx = idx[ok]
        lo[idx] *= 0.5
    # invariant: mean phi(r/lo) > 1 >= mean phi(r/hi)
    idx = np.arange(live.size)
    for _ in range(LUXEMBURG_MAX_ITER):
        mid = 0.5 * (lo[idx] + hi[idx])
        done = (mid == lo[idx]) | (mid == hi[idx])
        idx, mid = idx[~done], mid[~done]
        if idx.size == 0:
            break
        above = excess(mid, idx)
        lo[idx[above]] = mid[above]
        hi[idx[~above]] = mid[~above]
    out[live] = hi
    return out


def luxemburg_norm(w: GridFunction, q: DyadicCube, phi: YoungFunction) -> float:
    """Luxemburg average of w over q with respect to phi."""
    if q.d != w.d or q.level > w.L:
        raise DomainError(f"{q} does not belong to the grid of w")
    cells = w.values[cube_slices(q, w.L)].reshape(1, -1)
    return float(_luxemburg_rows(phi, cells)[0])


def luxemburg_levels(w: GridFunction, phi: YoungFunction) -> list[np.ndarray]:
    """Luxemburg averages of every dyadic cube, one array per level."""
    out = []
    for lev in range(w.L + 1):
        norms = _luxemburg_rows(phi, blocks(w.values, lev))
        out.append(norms.reshape((1 << lev,) * w.d))
    return out


def orlicz_maximal(w: GridFunction, phi: YoungFunction) -> GridFunction:
    """M_phi w(x) = max over dyadic Q containing x of the Luxemburg average on Q."""
    return GridFunction(_sweep_max(luxemburg_levels(w, phi)))


def iterated_bound_weight(w: GridFunction, phi: YoungFunction, alpha: float = 0.0) -> GridFunction:
    """The composed weight M_alpha(M_phi w)."""
    return dyadic_frac_maximal(orlicz_maximal(w, phi), alpha)
