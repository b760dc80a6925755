"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Regression constants were produced by the first build and are reproduced
exactly here.
"""

import hashlib
import math
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import naive_frac_maximal
from sparseweak.grid import random_uniform
from sparseweak.maximal import dyadic_frac_maximal, orlicz_maximal
from sparseweak.sparse import (SparseBudgetWarning, decompose, generate_sparse, verify_n_regular,
                               verify_sparse)
from sparseweak.weaktype import (exceptional_set, format_trend_table, lemma_check,
                                 run_experiment, sanity_suite)
from sparseweak.young import builtin_young, c_phi, conjugate

# first-build regression anchors
PINNED_MAX_RATIO = 1.4140697566786613
PINNED_C = 0.0
PINNED_DEEP_C = {"chain": 0.03696762195693192, "branch": 0.13570892539200652}
PINNED_FS_MAX = 0.601552012276593
PINNED_TREND_SHA256 = "92a38fc050faca3d77ce63933f7493a0d7affaa13a1187b0140fb593ea9206ae"

SUITE = dict(d=1, L=10, nu=1.0, alpha=0.5, N=2, young={"kind": "loglog", "delta": 1.0},
             trials=200, seed=0)
FRESH_SEEDS = (1, 2, 3, 4, 5)

# suites deep enough for the exceptional set to be nonempty
DEEP = {
    "chain": dict(d=1, L=12, alpha=0.0, lambda0=0.25, lambda1=3.0, N=1, level_gap=1,
                  target_size=13, children_budget=False, trials=50, seed=11,
                  f={"generator": "random-uniform", "params": {"low": 0.28, "high": 1 / 3}}),
    "branch": dict(d=1, L=14, alpha=0.0, lambda0=0.25, lambda1=3.0, N=2, level_gap=1,
                   target_size=40, children_budget=False, trials=50, seed=12,
                   f={"generator": "random-uniform", "params": {"low": 0.25, "high": 1 / 3}}),
}


@contextmanager
def criterion(n, title, budget, already=0.0):
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        dt = time.perf_counter() - t0 + already
        ok = ok and dt < budget
        line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {title} ({dt:.2f}s, budget {budget}s)"
        ACCEPTANCE_LINES.append(line)
        print(line)
    assert dt < budget, f"criterion {n} took {dt:.2f}s, budget {budget}s"


@pytest.fixture(scope="module")
def suite_report():
    t0 = time.perf_counter()
    rep = run_experiment(SUITE)
    return rep, time.perf_counter() - t0


def test_criterion_1_young_closed_forms():
    with criterion(1, "c_phi(t^2) and power conjugates", 1.0):
        assert abs(c_phi(builtin_young("power", p=2)).value - 0.4082108) <= 1e-6
        for p in (1.5, 2.0, 3.0):
            phi = builtin_young("power", p=p)
            q = p / (p - 1)
            for s in np.logspace(-3, 3, 60):
                closed = s ** q / (q * p ** (q / p))
                assert abs(conjugate(phi, s) - closed) <= 1e-9 * closed


def test_criterion_2_divergence_classifier():
    with criterion(2, "linear diverges, loglog scales finite", 5.0):
        assert c_phi(builtin_young("linear")).divergent
        for delta in (0.25, 0.5, 1.0, 2.0):
            res = c_phi(builtin_young("loglog", delta=delta))
            assert not res.divergent and math.isfinite(res.value)


def test_criterion_3_orlicz_reduction():
    with criterion(3, "linear Orlicz maximal equals M", 10.0):
        lin = builtin_young("linear")
        for seed in range(100):
            w = random_uniform(1, 8, seed)
            a = orlicz_maximal(w, lin).values
            b = dyadic_frac_maximal(w, 0.0).values
            assert np.all(np.abs(a - b) <= 1e-12)


def test_criterion_4_maximal_oracle():
    with criterion(4, "tree sweep equals all-cubes enumeration", 30.0):
        rng = np.random.default_rng(2024)
        for seed in range(50):
            d = 1 + seed % 2
            L = int(rng.integers(1, 7)) if d == 1 else int(rng.integers(1, 6))
            alpha = float(rng.choice([0.0, 0.25, 0.5, 0.75]))
            f = random_uniform(d, L, seed)
            got = dyadic_frac_maximal(f, alpha).values
            ref = naive_frac_maximal(f.values, alpha)
            assert np.all(np.abs(got - ref) <= 1e-15 * np.abs(ref))


def test_criterion_5_generator_soundness():
    with criterion(5, "1000 generated families verify", 30.0):
        rng = np.random.default_rng(5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SparseBudgetWarning)
            for seed in range(1000):
                d = 1 + seed % 2
                L = 10 if d == 1 else 5
                N = int(rng.integers(1, 5))
                lam0 = float(rng.choice([0.125, 0.25, 0.5, 0.75]))
                S = generate_sparse(seed, d, L, lam0, N, int(rng.integers(1, 4)),
                                    int(rng.integers(5, 60)), bool(seed % 3))
                assert verify_sparse(S).passed
                assert verify_n_regular(S, N).passed


def test_criterion_6_decomposition_invariants():
    with criterion(6, "layers, E_Q disjointness, coverage, bottom average", 60.0):
        lam0, lam1 = 0.125, 4.0
        checked = 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SparseBudgetWarning)
            for seed in range(60):
                S = generate_sparse(seed, 1, 12, lam0, 2, 3 + seed % 2, 60, True)
                f = random_uniform(1, 12, [seed, 6], high=0.5)
                w = random_uniform(1, 12, [seed, 7])
                for alpha in (0.0, 0.5):
                    dec = decompose(S, f, alpha, lam1)
                    eps = exceptional_set(f, w, S, alpha, 1.0, lam1, check=False)
                    for k, qs in dec.levels.items():
                        layers = dec.layers_of(k)
                        flat = [q for v in sorted(layers) for q in layers[v]]
                        assert len(flat) == len(set(flat)) == len(qs)
                        seen = np.zeros(f.n_cells, dtype=int)
                        for q in qs:
                            seen[dec.e_sets[q]] += 1
                        assert seen.max() <= 1
                        e = lemma_check(k, f, w, S, builtin_young("loglog", delta=1.0), alpha,
                                        1.0, lam0, lam1, eps=eps, dec=dec, rhs=1.0)
                        assert e.cover_ok and e.bottom_avg_ok
                        checked += len(qs)
        assert checked > 500


def test_criterion_7_weak_type_desk_scale(suite_report):
    rep, first = suite_report
    with criterion(7, f"max ratio pinned at {PINNED_MAX_RATIO!r}", 120.0, first):
        assert len(rep.trials) == 200
        assert all(math.isfinite(t.ratio) and t.rhs > 0 for t in rep.trials)
        assert rep.aggregate["max_ratio"] == PINNED_MAX_RATIO
        for s in FRESH_SEEDS:
            fresh = run_experiment({**SUITE, "seed": s, "lemma": False})
            m = fresh.aggregate["max_ratio"]
            assert PINNED_MAX_RATIO / 2 <= m <= 2 * PINNED_MAX_RATIO


def test_criterion_8_lemma_ledger(suite_report):
    rep, _ = suite_report
    with criterion(8, "per-level lemma with pinned C, band consistency", 120.0):
        def holds(trials, C):
            for t in trials:
                assert t.band_consistent and t.lemma_assembly_ok
                for e in t.lemma_ledger:
                    if e.n_cubes:
                        slack = 1e-12 * max(1.0, e.lhs_k)
                        assert e.lhs_k <= e.layer_bound + C * e.rhs / e.psi_inv + slack
                        assert e.layer_ok and e.split_ok and e.cover_ok
        assert max(t.c_max for t in rep.trials) == PINNED_C
        holds(rep.trials, PINNED_C)
        for name, cfg in DEEP.items():
            deep = run_experiment(cfg)
            assert any(t.lemma_w_eps > 0 for t in deep.trials)
            assert max(t.c_max for t in deep.trials) == PINNED_DEEP_C[name]
            holds(deep.trials, PINNED_DEEP_C[name])


def test_criterion_9_sanity_suite():
    with criterion(9, "Fefferman-Stein, monotonicity, deterministic trend", 60.0):
        a = sanity_suite()
        assert len(a.fs_ratios) == 100
        assert a.fs_max <= PINNED_FS_MAX and a.fs_max == PINNED_FS_MAX
        assert a.monotone_checked == 100 and a.monotone_violations == 0
        table = format_trend_table(a.trend)
        assert hashlib.sha256(table.encode()).hexdigest() == PINNED_TREND_SHA256
        assert format_trend_table(sanity_suite({"trials": 1}).trend) == table
