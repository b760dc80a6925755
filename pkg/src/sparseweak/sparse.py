"""Sparse families of dyadic cubes, the fractional sparse operator, and the
level-set / layer stratification used by the weak-type argument.

Packing modes
-------------
``carleson`` (default)
    sum of |P| over family cubes P contained in Q is at most |Q| / lambda0.
``union``
    the volume of the union of those P is at most |Q| / lambda0.  Since Q is
    one of them this always holds; the mode exists for comparison only.
``children``
    the family children of Q occupy at most lambda0 |Q|.  This is the form
    the bottom-part estimate consumes, and it makes the depth-u bottom sets
    shrink like lambda0^u.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import DomainError, PreconditionError
from .grid import (DyadicCube, GridFunction, cube_mask, frac_average_levels,
                   refine, root)

__all__ = [
    "SparseFamily",
    "PackingReport",
    "RegularityReport",
    "LayerDecomposition",
    "PACKING_MODES",
    "family_parents",
    "verify_sparse",
    "verify_n_regular",
    "generate_sparse",
    "cube_averages",
    "sparse_operator",
    "level_sets",
    "layer_decompose",
    "decompose",
    "decomposition_sets",
    "bottom_decay",
    "read_family",
    "write_family",
    "sparse_from_spec",
]

PACKING_MODES = ("carleson", "union", "children")


class SparseBudgetWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SparseFamily:
    """A finite set of dyadic cubes of one grid, with its sparseness data.

    ``partial`` is set by the generator when the packing budget ran out
    before the requested size was reached.
    """

    d: int
    L: int
    cubes: tuple[DyadicCube, ...]
    lambda0: float
    n_regular: int | None = None
    partial: bool = False

    def __post_init__(self):
        if not 0 < self.lambda0 < 1:
            raise DomainError(f"lambda0 must lie in (0, 1), got {self.lambda0}")
        if self.n_regular is not None and self.n_regular < 1:
            raise DomainError(f"N must be a positive integer, got {self.n_regular}")
        cubes = sorted(set(self.cubes))
        for q in cubes:
            if q.d != self.d or q.level > self.L:
                raise DomainError(f"{q} does not belong to the d={self.d}, L={self.L} grid")
        object.__setattr__(self, "cubes", tuple(cubes))

    def __len__(self) -> int:
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def __contains__(self, q) -> bool:
        return q in self.members

    @cached_property
    def members(self) -> frozenset[DyadicCube]:
        return frozenset(self.cubes)

    def with_cubes(self, cubes) -> SparseFamily:
        return SparseFamily(self.d, self.L, tuple(cubes), self.lambda0, self.n_regular)


class PackingReport(NamedTuple):
    passed: bool
    ratio: float
    bound: float
    worst_cube: DyadicCube | None
    mode: str


class RegularityReport(NamedTuple):
    passed: bool
    max_children: int
    worst_cube: DyadicCube | None


def family_parents(cubes) -> dict[DyadicCube, DyadicCube | None]:
    """Map each cube to its nearest strict ancestor within the collection."""
    members = set(cubes)
    out = {}
    for q in members:
        out[q] = next((a for a in q.ancestors() if a in members), None)
    return out


def _family_children(cubes) -> dict[DyadicCube, list[DyadicCube]]:
    kids: dict[DyadicCube, list[DyadicCube]] = {q: [] for q in cubes}
    for q, a in family_parents(cubes).items():
        if a is not None:
            kids[a].append(q)
    return kids


def verify_sparse(S: SparseFamily, mode: str = "carleson") -> PackingReport:
    """Check the packing condition of S in the chosen mode; report the worst cube."""
    if mode not in PACKING_MODES:
        raise DomainError(f"unknown packing mode {mode!r}")
    if not S.cubes:
        return PackingReport(True, 0.0, 1.0 / S.lambda0, None, mode)
    parents = family_parents(S.cubes)
    if mode == "carleson":
        sums = {q: q.volume for q in S.cubes}
        for p in S.cubes:
            a = parents[p]
            while a is not None:
                sums[a] += p.volume
                a = parents[a]
        ratios = {q: sums[q] / q.volume for q in S.cubes}
        bound = 1.0 / S.lambda0
    elif mode == "union":
        # Q itself is among its own dyadic subcubes, so the union is Q.
        ratios = {q: 1.0 for q in S.cubes}
        bound = 1.0 / S.lambda0
    else:
        kid_vol = {q: 0.0 for q in S.cubes}
        for p, a in parents.items():
            if a is not None:
                kid_vol[a] += p.volume
        ratios = {q: kid_vol[q] / q.volume for q in S.cubes}
        bound = S.lambda0
    worst = max(S.cubes, key=lambda q: (ratios[q], -q.level))
    return PackingReport(ratios[worst] <= bound, ratios[worst], bound, worst, mode)


def verify_n_regular(S: SparseFamily, N: int) -> RegularityReport:
    """Check that every cube has at most N maximal strict subcubes in S."""
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N}")
    if not S.cubes:
        return RegularityReport(True, 0, None)
    kids = _family_children(S.cubes)
    worst = max(S.cubes, key=lambda q: (len(kids[q]), -q.level))
    n = len(kids[worst])
    return RegularityReport(n <= N, n, worst)


def generate_sparse(seed, d: int, L: int, lambda0: float, N: int, level_gap: int = 2,
                    target_size: int = 50, children_budget: bool = True) -> SparseFamily:
    """Random N-regular sparse family, deterministic in ``seed``.

    Cubes are grown breadth first from the root.  Each accepted cube proposes
    between 1 and N distinct descendants ``level_gap`` levels down; a proposal
    is dropped if it would push any accepted ancestor over the Carleson budget
    1/lambda0, or (with ``children_budget``) if the proposing cube's children
    would cover more than lambda0 of it.
    """
    if N is None or N < 1:
        raise PreconditionError(f"N must be at least 1, got {N}")
    if level_gap < 1:
        raise PreconditionError(f"level_gap must be at least 1, got {level_gap}")
    if not 0 < lambda0 < 1:
        raise PreconditionError(f"lambda0 must lie in (0, 1), got {lambda0}")
    if target_size < 1:
        raise PreconditionError(f"target_size must be at least 1, got {target_size}")
    if d < 1 or L < 0:
        raise PreconditionError(f"invalid grid d={d}, L={L}")
    rng = np.random.default_rng(seed)
    top = root(d)
    parent: dict[DyadicCube, DyadicCube | None] = {top: None}
    sums = {top: top.volume}
    kid_vol = {top: 0.0}
    accepted = [top]
    queue = deque([top])
    side = 1 << level_gap
    n_sub = side ** d
    while queue and len(accepted) < target_size:
        q = queue.popleft()
        lev = q.level + level_gap
        if lev > L:
            continue
        k = min(int(rng.integers(1, N + 1)), n_sub)
        for o in rng.choice(n_sub, size=k, replace=False):
            if len(accepted) >= target_size:
                break
            offs = np.unravel_index(int(o), (side,) * d)
            p = DyadicCube(lev, tuple(i * side + int(j) for i, j in zip(q.index, offs)))
            vol = p.volume
            if children_budget and kid_vol[q] + vol > lambda0 * q.volume:
                continue
            chain = []
            a = q
            while a is not None:
                chain.append(a)
                a = parent[a]
            if any(sums[a] + vol > a.volume / lambda0 for a in chain):
                continue
            for a in chain:
                sums[a] += vol
            kid_vol[q] += vol
            parent[p] = q
            sums[p] = vol
            kid_vol[p] = 0.0
            accepted.append(p)
            queue.append(p)
    partial = len(accepted) < target_size
    if partial:
        warnings.warn(f"sparse generator stopped at {len(accepted)} of {target_size} cubes",
                      SparseBudgetWarning, stacklevel=2)
    return SparseFamily(d, L, tuple(accepted), lambda0, N, partial)


# --------------------------------------------------------------------------
# the operator
# --------------------------------------------------------------------------

def cube_averages(f: GridFunction, cubes, alpha: float = 0.0) -> np.ndarray:
    """Fractional averages of f over the given cubes, in the given order."""
    levels = frac_average_levels(f, alpha)
    return np.array([levels[q.level][q.index] for q in cubes], dtype=float)


def _check_family(f: GridFunction, S: SparseFamily) -> None:
    if S.d != f.d or S.L != f.L:
        raise DomainError(f"family grid (d={S.d}, L={S.L}) does not match function grid "
                          f"(d={f.d}, L={f.L})")


def _accumulate(L: int, d: int, cubes, vals) -> np.ndarray:
    """Per-cell sum over cubes containing the cell of the per-cube values."""
    per_level = [np.zeros((1 << lev,) * d) for lev in range(L + 1)]
    for q, v in zip(cubes, vals):
        per_level[q.level][q.index] += v
    run = per_level[0]
    for a in per_level[1:]:
        run = refine(run) + a
    return run


def sparse_operator(f: GridFunction, S: SparseFamily, alpha: float = 0.0,
                    nu: float = 1.0) -> GridFunction:
    """A f = (sum_{Q in S} <f>_{alpha,Q}^nu chi_Q)^(1/nu)."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    _check_family(f, S)
    avgs = cube_averages(f, S.cubes, alpha)
    if nu == 1:
        return GridFunction(_accumulate(f.L, f.d, S.cubes, avgs))
    acc = _accumulate(f.L, f.d, S.cubes, avgs ** nu)
    return GridFunction(acc ** (1.0 / nu))


# --------------------------------------------------------------------------
# stratification
# --------------------------------------------------------------------------

def _bucket(a: float, lambda1: float) -> int:
    """The k with lambda1^(-k-1) < a <= lambda1^(-k)."""
    k = math.floor(-math.log(a) / math.log(lambda1))
    while a > lambda1 ** (-k):
        k -= 1
    while a <= lambda1 ** (-k - 1):
        k += 1
    return k


def level_sets(S: SparseFamily, f: GridFunction, alpha: float, lambda1: float
               ) -> dict[int, list[DyadicCube]]:
    """Group the cubes of S by the size of their fractional averages.

    Cubes with average above 1/lambda1 are removed first and cubes with zero
    average are dropped, so every key k is at least 1.
    """
    if not lambda1 > 2:
        raise PreconditionError(f"lambda1 must exceed 2, got {lambda1}")
    _check_family(f, S)
    out: dict[int, list[DyadicCube]] = {}
    for q, a in zip(S.cubes, cube_averages(f, S.cubes, alpha)):
        if a <= 0 or a > 1.0 / lambda1:
            continue
        out.setdefault(_bucket(float(a), lambda1), []).append(q)
    return dict(sorted(out.items()))


def layer_decompose(cubes) -> dict[int, list[DyadicCube]]:
    """Peel off maximal cubes repeatedly: layer 0 holds the maximal cubes,
    layer v+1 the maximal cubes of what remains after layers 0..v."""
    remaining = set(cubes)
    out: dict[int, list[DyadicCube]] = {}
    v = 0
    while remaining:
        top = sorted(q for q in remaining
                     if not any(a in remaining for a in q.ancestors()))
        out[v] = top
        remaining.difference_update(top)
        v += 1
    return out


@dataclass
class LayerDecomposition:
    """Level sets S_k, their layers S_{k,v}, and the sets E_Q, for one f."""

    d: int
    L: int
    alpha: float
    lambda1: float
    levels: dict[int, list[DyadicCube]]
    layers: dict[tuple[int, int], list[DyadicCube]]
    averages: dict[DyadicCube, float]
    layer_of: dict[DyadicCube, int] = field(default_factory=dict)
    e_sets: dict[DyadicCube, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def u(k: int) -> int:
        return 1 << k

    def layers_of(self, k: int) -> dict[int, list[DyadicCube]]:
        return {v: qs for (kk, v), qs in self.layers.items() if kk == k}

    def k_of(self, q: DyadicCube) -> int:
        for k, qs in self.levels.items():
            if q in qs:
                return k
        raise DomainError(f"{q} is not in any level set")


def decompose(S: SparseFamily, f: GridFunction, alpha: float, lambda1: float
              ) -> LayerDecomposition:
    levels = level_sets(S, f, alpha, lambda1)
    avgs = dict(zip(S.cubes, cube_averages(f, S.cubes, alpha)))
    dec = LayerDecomposition(S.d, S.L, alpha, lambda1, levels, {},
                             {q: float(avgs[q]) for qs in levels.values() for q in qs})
    for k, qs in levels.items():
        layers = layer_decompose(qs)
        for v, cubes in layers.items():
            dec.layers[(k, v)] = cubes
            for q in cubes:
                dec.layer_of[q] = v
        for v, cubes in layers.items():
            for q in cubes:
                dec.e_sets[q] = decomposition_sets(layers, q, k, S.L)[0]
    return dec


def _mask_of(cubes, L: int, d: int) -> np.ndarray:
    m = np.zeros((1 << L,) * d, dtype=bool)
    for q in cubes:
        s = 1 << (L - q.level)
        m[tuple(slice(i * s, (i + 1) * s) for i in q.index)] = True
    return m.reshape(-1)


def _find_layer(layers: dict[int, list[DyadicCube]], q: DyadicCube) -> int:
    for v, cubes in layers.items():
        if q in cubes:
            return v
    raise DomainError(f"{q} does not appear in any layer")


def decomposition_sets(layers: dict[int, list[DyadicCube]], q: DyadicCube, k: int,
                       L: int) -> tuple[np.ndarray, np.ndarray]:
    """E_Q and Q_u for q in layer v of S_k, as flat finest-cell index arrays.

    E_Q is q minus its subcubes in layer v+1; Q_u is the union of its
    subcubes in layer v+u, u = 2^k.
    """
    v = _find_layer(layers, q)
    u = 1 << k
    nxt = [p for p in layers.get(v + 1, ()) if q.contains(p)]
    bottom = [p for p in layers.get(v + u, ()) if q.contains(p)]
    qm = cube_mask(q, L)
    e = qm & ~_mask_of(nxt, L, q.d)
    return np.flatnonzero(e), np.flatnonzero(_mask_of(bottom, L, q.d))


def bottom_decay(dec: LayerDecomposition, k: int) -> tuple[dict[int, float], float | None]:
    """Largest |union of depth-j layer subcubes of Q| / |Q| over Q in S_k, per j >= 1,
    with the geometric ratio fitted to the positive values (None if fewer than two)."""
    layers = dec.layers_of(k)
    depth: dict[int, float] = {}
    for v, cubes in layers.items():
        for q in cubes:
            for j in range(1, len(layers) - v):
                vol = sum(p.volume for p in layers[v + j] if q.contains(p))
                depth[j] = max(depth.get(j, 0.0), vol / q.volume)
    pos = [(j, r) for j, r in sorted(depth.items()) if r > 0]
    if len(pos) < 2:
        return depth, None
    js = np.array([j for j, _ in pos], dtype=float)
    lr = np.log([r for _, r in pos])
    slope = np.polyfit(js, lr, 1)[0]
    return depth, float(np.exp(slope))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def write_family(S: SparseFamily, path) -> None:
    with open(path, "w") as fh:
        n = "none" if S.n_regular is None else str(S.n_regular)
        fh.write(f"{S.d} {S.L} {S.lambda0!r} {n}\n")
        for q in S.cubes:
            fh.write(" ".join(map(str, (q.level,) + q.index)) + "\n")


def read_family(path) -> SparseFamily:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or len(lines[0]) != 4:
        raise DomainError(f"{path}: header must be 'd L lambda0 N'")
    d, L = int(lines[0][0]), int(lines[0][1])
    lambda0 = float(lines[0][2])
    n = None if lines[0][3].lower() == "none" else int(lines[0][3])
    cubes = []
    for row in lines[1:]:
        if len(row) != d + 1:
            raise DomainError(f"{path}: cube line {' '.join(row)!r} needs {d + 1} integers")
        cubes.append(DyadicCube(int(row[0]), tuple(int(x) for x in row[1:])))
    return SparseFamily(d, L, tuple(cubes), lambda0, n)


def sparse_from_spec(spec: dict, seed=None) -> SparseFamily:
    """A family from ``{"file": path}`` or generator parameters."""
    if "file" in spec:
        return read_family(spec["file"])
    return generate_sparse(
        spec.get("seed", seed),
        int(spec["d"]), int(spec["L"]), float(spec["lambda0"]), int(spec["N"]),
        int(spec.get("level_gap", 2)), int(spec.get("target_size", 50)),
        bool(spec.get("children_budget", True)),
    )
