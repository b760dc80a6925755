import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseweak.errors import DomainError
from sparseweak.grid import (DyadicCube, GridFunction, blocks, coarsen_sum, constant,
                             cube_cells, cube_mask, cube_relations, frac_average, grid_from_spec,
                             integrate, measure, random_uniform, read_grid_function, refine,
                             root, spike, write_grid_function)


def test_cube_basics():
    q = DyadicCube(2, (1, 3))
    assert q.d == 2
    assert q.volume == 1 / 16
    assert q.side == 0.25
    assert q.parent() == DyadicCube(1, (0, 1))
    assert q.ancestor(0) == root(2)
    assert len(q.children()) == 4
    assert all(q.contains(c) for c in q.children())
    assert q.contains(q)
    assert not q.children()[0].contains(q)
    assert list(q.ancestors()) == [DyadicCube(1, (0, 1)), root(2)]
    assert root(1).parent() is None


@pytest.mark.parametrize("level,index", [(-1, (0,)), (1, (2,)), (0, ())])
def test_cube_rejects(level, index):
    with pytest.raises(DomainError):
        DyadicCube(level, index)


def test_cube_relations():
    parent, kids, contains = cube_relations(DyadicCube(1, (1,)))
    assert parent == root(1)
    assert kids == [DyadicCube(2, (2,)), DyadicCube(2, (3,))]
    assert contains(DyadicCube(3, (7,)))
    with pytest.raises(DomainError):
        cube_relations(DyadicCube(3, (0,)), max_level=3)


def test_grid_function_validation():
    with pytest.raises(DomainError):
        GridFunction(np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        GridFunction(np.array([1.0, np.nan]))
    with pytest.raises(DomainError):
        GridFunction(np.ones(3))
    with pytest.raises(DomainError):
        GridFunction.from_flat(1, 2, [1.0, 2.0])
    f = GridFunction.from_flat(2, 1, [1, 2, 3, 4])
    assert f.values[0, 1] == 2 and f.values[1, 0] == 3
    with pytest.raises(ValueError):
        f.values[0, 0] = 5


def test_integrals_by_hand():
    f = GridFunction.from_flat(1, 2, [1, 0, 0, 0])
    assert integrate(f, root(1)) == 0.25
    assert frac_average(f, DyadicCube(1, (0,))) == 0.5
    assert frac_average(f, DyadicCube(2, (0,))) == 1.0
    # |Q|^{alpha/d - 1} with alpha = 1/2 on a level-2 cube: 4^{1/2} * 1/4
    assert frac_average(f, DyadicCube(2, (0,)), 0.5) == 0.5
    with pytest.raises(DomainError):
        frac_average(f, root(1), 1.0)
    with pytest.raises(DomainError):
        integrate(f, DyadicCube(3, (0,)))


def test_partition_identity_exact():
    for d, L in ((1, 10), (2, 5), (3, 3)):
        f = random_uniform(d, L, seed=d)
        for lev in range(L):
            for idx in np.ndindex(*(1 << lev,) * d):
                q = DyadicCube(lev, idx)
                assert sum(integrate(f, c) for c in q.children()) == integrate(f, q)
            if lev > 2:
                break


def test_levels_are_pairwise_sums():
    f = random_uniform(2, 4, seed=5)
    ints = f.integrals
    assert len(ints) == 5
    for lev in range(4):
        assert np.array_equal(coarsen_sum(ints[lev + 1]), ints[lev])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), c=st.sampled_from([0.0, 0.5, 3.0, 0.125, 1e3]),
       alpha=st.sampled_from([0.0, 0.25, 0.5, 0.9]))
def test_homogeneity_and_monotonicity(seed, c, alpha):
    f = random_uniform(1, 6, seed)
    g = GridFunction(f.values + random_uniform(1, 6, seed + 1).values)
    rng = np.random.default_rng(seed)
    lev = int(rng.integers(0, 7))
    q = DyadicCube(lev, (int(rng.integers(0, 1 << lev)),))
    a = frac_average(f, q, alpha)
    assert frac_average(f.scaled(c), q, alpha) == pytest.approx(c * a, rel=1e-15, abs=0)
    assert frac_average(f, q, alpha) <= frac_average(g, q, alpha)


def test_blocks_and_masks_agree():
    v = np.arange(64.0).reshape(8, 8)
    b = blocks(v, 2)
    for row, idx in enumerate(np.ndindex(4, 4)):
        q = DyadicCube(2, idx)
        assert sorted(b[row]) == sorted(v.reshape(-1)[cube_cells(q, 3)])
        assert cube_mask(q, 3).sum() == 4
    assert np.array_equal(refine(np.array([[1, 2], [3, 4]]), 1)[1:3, 1:3], [[1, 2], [3, 4]])


def test_measure_forms():
    w = GridFunction.from_flat(1, 2, [1, 2, 3, 4])
    assert measure(w, [0, 3, 3]) == 5 / 4
    assert measure(w, np.array([True, False, False, True])) == 5 / 4
    assert measure(w, []) == 0.0
    with pytest.raises(DomainError):
        measure(w, [4])


def test_generators_are_seeded_and_on_lattice():
    a = random_uniform(1, 8, seed=7)
    assert np.array_equal(a.values, random_uniform(1, 8, seed=7).values)
    assert not np.array_equal(a.values, random_uniform(1, 8, seed=8).values)
    assert np.all(a.values * 2.0 ** 28 == np.floor(a.values * 2.0 ** 28))
    b = random_uniform(1, 8, seed=7, low=0.25, high=0.5)
    assert b.values.min() >= 0.25 and b.values.max() < 0.5
    s = spike(2, 4, height=3.0, width=1, position=(1, 2))
    assert s.values.sum() == 12.0
    assert constant(1, 3, 2.0).values.sum() == 16.0


def test_grid_spec_and_file_round_trip(tmp_path):
    f = grid_from_spec({"generator": "random-uniform", "seed": 3}, d=2, L=3)
    assert np.array_equal(f.values, random_uniform(2, 3, 3).values)
    g = grid_from_spec({"d": 1, "L": 1, "values": [0.5, 1.5]})
    assert g.flat.tolist() == [0.5, 1.5]
    with pytest.raises(DomainError):
        grid_from_spec({"generator": "nope"}, d=1, L=2)
    with pytest.raises(DomainError):
        grid_from_spec({"generator": "constant"}, d=5, L=5)
    p = tmp_path / "f.txt"
    write_grid_function(f, p)
    assert np.array_equal(read_grid_function(p).values, f.values)
    p.write_text("1 2\n1 2 3\n")
    with pytest.raises(DomainError):
        read_grid_function(p)
