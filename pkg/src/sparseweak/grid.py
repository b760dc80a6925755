"""Dyadic cubes of the root cube [0,1)^d and piecewise-constant grid functions.

A cube at level l has side 2^-l and is addressed by its integer index vector.
Grid functions are constant on the finest cells (level L) and are stored as
arrays of shape (2^L,)*d, so that the flattened (C order) view lists cells in
lexicographic order of their index vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "DyadicCube",
    "GridFunction",
    "MAX_CELLS_LOG2",
    "root",
    "cube_relations",
    "cube_slices",
    "cube_mask",
    "cube_cells",
    "coarsen_sum",
    "refine",
    "blocks",
    "integrate",
    "frac_average",
    "frac_average_levels",
    "measure",
    "random_uniform",
    "spike",
    "constant",
    "grid_from_spec",
    "read_grid_function",
    "write_grid_function",
]

MAX_CELLS_LOG2 = 24
# random values are drawn on a 2^-28 lattice, so that every cube integral
# (at most 2^24 cells) is an exact double
LATTICE_BITS = 28


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        if self.level < 0:
            raise DomainError(f"negative level {self.level}")
        if len(self.index) < 1:
            raise DomainError("a cube needs at least one coordinate")
        n = 1 << self.level
        if any(i < 0 or i >= n for i in self.index):
            raise DomainError(f"index {self.index} out of range at level {self.level}")

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def volume(self) -> float:
        return 2.0 ** (-self.level * self.d)

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    def parent(self) -> DyadicCube | None:
        if self.level == 0:
            return None
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def ancestor(self, level: int) -> DyadicCube:
        if not 0 <= level <= self.level:
            raise DomainError(f"no ancestor at level {level} for a level-{self.level} cube")
        shift = self.level - level
        return DyadicCube(level, tuple(i >> shift for i in self.index))

    def children(self) -> list[DyadicCube]:
        out = []
        for offs in np.ndindex(*(2,) * self.d):
            out.append(DyadicCube(self.level + 1,
                                  tuple(2 * i + o for i, o in zip(self.index, offs))))
        return out

    def contains(self, other: DyadicCube) -> bool:
        """Whether ``other`` is a (not necessarily strict) subcube of this cube."""
        if other.d != self.d:
            raise DomainError("cubes of different dimension")
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def ancestors(self) -> Iterator[DyadicCube]:
        """Strict ancestors, nearest first."""
        q = self.parent()
        while q is not None:
            yield q
            q = q.parent()

    def __str__(self) -> str:
        return f"Q(level={self.level}, index={self.index})"


def root(d: int) -> DyadicCube:
    return DyadicCube(0, (0,) * d)


def cube_relations(q: DyadicCube, max_level: int | None = None
                   ) -> tuple[DyadicCube | None, list[DyadicCube], Callable[[DyadicCube], bool]]:
    """Parent, children, and a containment predicate for ``q``."""
    if max_level is not None and q.level >= max_level:
        raise DomainError(f"cube at level {q.level} has no children below level {max_level}")
    return q.parent(), q.children(), q.contains


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nonnegative piecewise-constant function on the level-L cells of [0,1)^d."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim < 1:
            raise DomainError("grid function needs at least one dimension")
        n = v.shape[0]
        if n < 1 or n & (n - 1) or any(s != n for s in v.shape):
            raise DomainError(f"grid shape {v.shape} is not (2^L,)*d")
        if n.bit_length() - 1 > MAX_CELLS_LOG2 or (n.bit_length() - 1) * v.ndim > MAX_CELLS_LOG2:
            raise DomainError("grid exceeds 2^24 cells")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("grid function values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_flat(cls, d: int, L: int, flat: Sequence[float]) -> GridFunction:
        flat = np.asarray(flat, dtype=float)
        if flat.size != 1 << (L * d):
            raise DomainError(f"expected {1 << (L * d)} values for d={d}, L={L}, got {flat.size}")
        return cls(flat.reshape((1 << L,) * d))

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def L(self) -> int:
        return self.values.shape[0].bit_length() - 1

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.L * self.d)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @cached_property
    def integrals(self) -> list[np.ndarray]:
        """Per-level cube integrals, coarsest first, by pairwise tree summation."""
        levels = [self.values * self.cell_volume]
        for _ in range(self.L):
            levels.append(coarsen_sum(levels[-1]))
        levels.reverse()
        for a in levels:
            a.setflags(write=False)
        return levels

    def scaled(self, c: float) -> GridFunction:
        return GridFunction(self.values * c)

    def same_grid(self, other: GridFunction) -> bool:
        return self.values.shape == other.values.shape

    def __repr__(self) -> str:
        return f"GridFunction(d={self.d}, L={self.L})"


def coarsen_sum(a: np.ndarray) -> np.ndarray:
    """Sum each 2x...x2 block of a (2n,)*d array into an (n,)*d array."""
    d = a.ndim
    n = a.shape[0] // 2
    b = a.reshape(sum(((n, 2) for _ in range(d)), ()))
    return b.sum(axis=tuple(range(1, 2 * d, 2)))


def refine(a: np.ndarray, times: int = 1) -> np.ndarray:
    """Copy every entry of an (n,)*d array onto its 2^times-fold refinement."""
    if times == 0:
        return a
    r = 1 << times
    for ax in range(a.ndim):
        a = np.repeat(a, r, axis=ax)
    return a


def blocks(values: np.ndarray, level: int) -> np.ndarray:
    """Rows are the cells of each level-``level`` cube, cubes in lexicographic order."""
    d = values.ndim
    n = 1 << level
    s = values.shape[0] // n
    b = values.reshape(sum(((n, s) for _ in range(d)), ()))
    b = b.transpose(tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2)))
    return b.reshape(n ** d, s ** d)


def cube_slices(q: DyadicCube, L: int) -> tuple[slice, ...]:
    if q.level > L:
        raise DomainError(f"cube level {q.level} is finer than the grid resolution {L}")
    s = 1 << (L - q.level)
    return tuple(slice(i * s, (i + 1) * s) for i in q.index)


def cube_mask(q: DyadicCube, L: int) -> np.ndarray:
    """Flat boolean mask of the finest cells inside q."""
    m = np.zeros((1 << L,) * q.d, dtype=bool)
    m[cube_slices(q, L)] = True
    return m.reshape(-1)


def cube_cells(q: DyadicCube, L: int) -> np.ndarray:
    return np.flatnonzero(cube_mask(q, L))


def _check_cube(f: GridFunction, q: DyadicCube) -> None:
    if q.d != f.d:
        raise DomainError(f"cube dimension {q.d} does not match grid dimension {f.d}")
    if q.level > f.L:
        raise DomainError(f"cube level {q.level} exceeds grid resolution {f.L}")


def integrate(f: GridFunction, q: DyadicCube) -> float:
    _check_cube(f, q)
    return float(f.integrals[q.level][q.index])


def _check_alpha(alpha: float, d: int) -> None:
    if not (0 <= alpha < d):
        raise DomainError(f"alpha must lie in [0, {d}), got {alpha}")


def frac_average(f: GridFunction, q: DyadicCube, alpha: float = 0.0) -> float:
    """|Q|^(alpha/d - 1) times the integral of f over Q."""
    _check_alpha(alpha, f.d)
    return 2.0 ** (q.level * (f.d - alpha)) * integrate(f, q)


def frac_average_levels(f: GridFunction, alpha: float = 0.0) -> list[np.ndarray]:
    """Fractional averages of every dyadic cube, one array per level."""
    _check_alpha(alpha, f.d)
    return [2.0 ** (lev * (f.d - alpha)) * a for lev, a in enumerate(f.integrals)]


def measure(w: GridFunction, cells) -> float:
    """w-measure of a set of finest cells (flat indices or a flat boolean mask)."""
    cells = np.asarray(cells)
    if cells.dtype == bool:
        if cells.shape != (w.n_cells,):
            raise DomainError("mask does not match the grid")
        return float(np.sum(w.flat[cells]) * w.cell_volume)
    if cells.size == 0:
        return 0.0
    idx = np.unique(cells.astype(np.int64))
    if idx[0] < 0 or idx[-1] >= w.n_cells:
        raise DomainError("cell index out of range")
    return float(np.sum(w.flat[idx]) * w.cell_volume)


# --------------------------------------------------------------------------
# generators and serialization
# --------------------------------------------------------------------------

def _lattice(x: np.ndarray) -> np.ndarray:
    return np.floor(x * 2.0 ** LATTICE_BITS) / 2.0 ** LATTICE_BITS


def random_uniform(d: int, L: int, seed, high: float = 1.0, low: float = 0.0) -> GridFunction:
    """Values uniform on [low, high), drawn from a 2^-28 lattice of [0, 1)."""
    if not 0 <= low <= high:
        raise DomainError(f"need 0 <= low <= high, got low={low}, high={high}")
    rng = np.random.default_rng(seed)
    u = _lattice(rng.random((1 << L,) * d))
    if low == 0:
        return GridFunction(u * high)
    return GridFunction(low + u * (high - low))


def spike(d: int, L: int, seed=None, height: float = 1.0, width: int = 0,
          position: Sequence[int] | None = None) -> GridFunction:
    """``height`` on one dyadic cube of side 2^(width - L), zero elsewhere.

    Without ``position`` the cube is drawn uniformly using ``seed``.
    """
    if not 0 <= width <= L:
        raise DomainError(f"spike width must lie in [0, {L}]")
    level = L - width
    if position is None:
        rng = np.random.default_rng(seed)
        position = tuple(int(i) for i in rng.integers(0, 1 << level, size=d))
    q = DyadicCube(level, tuple(position))
    v = np.zeros((1 << L,) * d)
    v[cube_slices(q, L)] = height
    return GridFunction(v)


def constant(d: int, L: int, c: float = 1.0) -> GridFunction:
    return GridFunction(np.full((1 << L,) * d, float(c)))


def grid_from_spec(spec: dict, d: int | None = None, L: int | None = None) -> GridFunction:
    """Build a grid function from an inline or generator description.

    Accepted forms: ``{"d":, "L":, "values": [...]}`` or
    ``{"generator": "random-uniform"|"spike"|"constant", "seed":, "params": {...}}``.
    """
    d = spec.get("d", d)
    L = spec.get("L", L)
    if d is None or L is None:
        raise DomainError("grid spec needs d and L")
    d, L = int(d), int(L)
    if d < 1 or L < 0 or d * L > MAX_CELLS_LOG2:
        raise DomainError(f"invalid grid d={d}, L={L}")
    if "values" in spec:
        return GridFunction.from_flat(d, L, spec["values"])
    gen = spec.get("generator")
    params = dict(spec.get("params") or {})
    seed = spec.get("seed")
    if gen == "random-uniform":
        return random_uniform(d, L, seed, **params)
    if gen == "spike":
        return spike(d, L, seed, **params)
    if gen == "constant":
        return constant(d, L, **params)
    raise DomainError(f"unknown grid generator {gen!r}")


def write_grid_function(f: GridFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{f.d} {f.L}\n")
        fh.write("\n".join(format(float(x), ".17g") for x in f.flat))
        fh.write("\n")


def read_grid_function(path) -> GridFunction:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise DomainError(f"{path}: missing 'd L' header")
    d, L = int(tokens[0]), int(tokens[1])
    if d < 1 or L < 0 or d * L > MAX_CELLS_LOG2:
        raise DomainError(f"{path}: invalid header d={d}, L={L}")
    return GridFunction.from_flat(d, L, [float(t) for t in tokens[2:]])

