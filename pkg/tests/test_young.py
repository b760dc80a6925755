import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from sparseweak.errors import BoundedConjugateRange, DomainError
from sparseweak.young import (builtin_young, c_phi, check_young, conjugate, conjugate_inverse,
                              eval_phi, log_phi, young_from_spec, young_to_spec)

from oracles import loglog_conjugate_inverse_mp

P2 = builtin_young("power", p=2)
LINEAR = builtin_young("linear")
LL1 = builtin_young("loglog", delta=1.0)
TABLE = builtin_young("table", table=[[1, 1], [2, 3], [3, 6]])
CATALOG = [P2, builtin_young("power", p=1.5), builtin_young("power", p=3), LL1,
           builtin_young("loglog", delta=0.5), builtin_young("loglog", delta=2.0)]


def power_conjugate_closed(p, s):
    q = p / (p - 1)
    return s ** q / (q * p ** (q / p))


def brute_conjugate(phi, s, t_max):
    """Bounded scalar maximization of s t - phi(t), independent of the log-domain solver."""
    res = minimize_scalar(lambda t: -(s * t - float(eval_phi(phi, t))), bounds=(0, t_max),
                          method="bounded", options={"xatol": 1e-14 * t_max, "maxiter": 2000})
    return max(-res.fun, 0.0)


# -- evaluation -------------------------------------------------------------

def test_eval_examples():
    assert eval_phi(P2, 0.0) == 0.0
    assert eval_phi(P2, 3.0) == 9.0
    assert eval_phi(LL1, 0.0) == 0.0


@pytest.mark.parametrize("t", [-1.0, math.inf, math.nan])
def test_eval_rejects_bad_arguments(t):
    with pytest.raises(DomainError):
        eval_phi(P2, t)


def test_eval_vectorized_and_table():
    np.testing.assert_allclose(eval_phi(TABLE, np.array([0.5, 1.5, 2.5, 4.0])),
                               [0.5, 2.0, 4.5, 9.0])


def test_log_phi_matches_direct_evaluation():
    for phi in CATALOG:
        for t in (1e-3, 1.0, 50.0):
            assert log_phi(phi, math.log(t)) == pytest.approx(math.log(eval_phi(phi, t)), rel=1e-12)


def test_loglog_far_beyond_cap_is_finite_in_log_domain():
    assert math.isfinite(log_phi(LL1, 1e6))


# -- construction -----------------------------------------------------------

def test_builtin_valid_and_degenerate():
    assert not P2.degenerate
    assert LINEAR.degenerate
    builtin_young("loglog", delta=0.5)


@pytest.mark.parametrize("kw", [{"kind": "power", "p": 1.0}, {"kind": "power", "p": 0.5},
                                {"kind": "loglog", "delta": 0.0}, {"kind": "nope"}])
def test_builtin_rejections(kw):
    with pytest.raises(DomainError):
        builtin_young(**kw)


def test_table_rejects_nonconvex():
    with pytest.raises(DomainError):
        builtin_young("table", table=[[1, 2], [2, 3]])
    with pytest.raises(DomainError):
        builtin_young("table", table=[[1, 0], [2, 0]])


def test_spec_round_trip():
    for phi in (P2, LL1, LINEAR, TABLE):
        assert young_from_spec(young_to_spec(phi)) == phi


@pytest.mark.parametrize("phi", CATALOG + [LINEAR, TABLE])
def test_sampled_invariants(phi):
    check_young(phi)
    rng = np.random.default_rng(0)
    t1, t2 = rng.random(500) * 50, rng.random(500) * 50
    th = rng.random(500)
    lhs = eval_phi(phi, th * t1 + (1 - th) * t2)
    rhs = th * eval_phi(phi, t1) + (1 - th) * eval_phi(phi, t2)
    assert np.all(lhs <= rhs + 1e-9 * (1 + rhs))


# -- conjugate --------------------------------------------------------------

def test_conjugate_examples():
    assert conjugate(P2, 2.0) == pytest.approx(1.0, rel=1e-9)
    assert conjugate(P2, 0.001) == pytest.approx(2.5e-7, rel=1e-9)
    assert conjugate(LINEAR, 0.5) == 0.0
    assert conjugate(LINEAR, 2.0) == math.inf


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_power_conjugate_closed_form(p):
    phi = builtin_young("power", p=p)
    for s in np.logspace(-3, 3, 60):
        assert conjugate(phi, s) == pytest.approx(power_conjugate_closed(p, s), rel=1e-9)


@pytest.mark.parametrize("delta,s", [(0.25, 1.01), (0.25, 1.5), (0.25, 2.0)]
                         + [(d, s) for d in (1.0, 2.0) for s in (1.01, 1.5, 3.0, 8.0)])
def test_loglog_conjugate_against_bounded_search(delta, s):
    phi = builtin_young("loglog", delta=delta)
    t_max = 2.0
    while s - (eval_phi(phi, 2 * t_max) - eval_phi(phi, t_max)) / t_max > 0:
        t_max *= 2
    assert conjugate(phi, s) == pytest.approx(brute_conjugate(phi, s, 2 * t_max), rel=1e-7)


def test_table_conjugate_against_bounded_search():
    for s in (0.5, 1.2, 2.0, 2.9):
        t = np.linspace(0.0, 3.0, 30001)
        assert conjugate(TABLE, s) == pytest.approx(np.max(s * t - eval_phi(TABLE, t)), abs=1e-12)
    assert conjugate(TABLE, 3.5) == math.inf


@settings(max_examples=200, deadline=None)
@given(s=st.floats(1e-3, 30.0), t=st.floats(1e-3, 1e3), i=st.integers(0, len(CATALOG) - 1))
def test_fenchel_young(s, t, i):
    phi = CATALOG[i]
    assert s * t <= eval_phi(phi, t) + conjugate(phi, s) + 1e-8 * (1 + s * t)


def test_conjugate_domain():
    with pytest.raises(DomainError):
        conjugate(P2, 0.0)


# -- conjugate inverse --------------------------------------------------------

def test_conjugate_inverse_examples():
    assert conjugate_inverse(P2, 2.0) == pytest.approx(4.0, rel=1e-9)
    assert conjugate_inverse(P2, 16.0) == pytest.approx(512.0, rel=1e-9)


def test_conjugate_inverse_power_closed_form_huge_argument():
    # psi^{-1}(y) = 2 sqrt(y) in log2 form
    for lg in (1.0, 100.0, 2.0 ** 20, 2.0 ** 40):
        got = conjugate_inverse(P2, lg)
        if lg < 2000:
            assert got == pytest.approx(2.0 * 2.0 ** (lg / 2), rel=1e-9)
        else:
            assert math.isinf(got) or math.log2(got) == pytest.approx(1 + lg / 2, rel=1e-12)


def test_loglog_inverse_at_two_to_the_twenty():
    got = conjugate_inverse(LL1, 2.0 ** 20)
    # frozen from the mpmath oracle
    assert got == pytest.approx(726818.4980028252, rel=1e-9)
    assert got == pytest.approx(2 ** 20 * math.log(2), rel=1e-5)


@pytest.mark.parametrize("delta,lg", [(0.5, 0.5), (0.5, 40.0), (1.0, 3.0), (2.0, 300.0)])
def test_loglog_inverse_matches_mpmath(delta, lg):
    phi = builtin_young("loglog", delta=delta)
    assert conjugate_inverse(phi, lg) == pytest.approx(loglog_conjugate_inverse_mp(delta, lg),
                                                       rel=1e-9)


@pytest.mark.parametrize("phi", CATALOG)
def test_round_trip(phi):
    for lg in np.logspace(-2, np.log10(900), 20):
        s = conjugate_inverse(phi, lg)
        assert math.log2(conjugate(phi, s)) == pytest.approx(lg, rel=1e-7, abs=1e-7 * 1)
        assert conjugate(phi, s) == pytest.approx(2.0 ** lg, rel=1e-7)


def test_linear_inverse_is_refused():
    with pytest.raises(BoundedConjugateRange):
        conjugate_inverse(LINEAR, 2.0)


def test_table_inverse_saturates():
    # psi is finite up to the last slope 3 and infinite beyond
    assert conjugate_inverse(TABLE, 100.0) == 3.0
    s = conjugate_inverse(TABLE, 1.0)
    assert conjugate(TABLE, s) == pytest.approx(2.0, rel=1e-9)


# -- c_phi ------------------------------------------------------------------

def test_c_phi_power_two():
    res = c_phi(P2, 1e-9)
    closed = sum(2.0 ** -(1 + 2 ** (k - 1)) for k in range(1, 8))
    assert res.value == pytest.approx(0.4082108, abs=1e-6)
    assert res.value == pytest.approx(closed, rel=1e-12)
    assert not res.divergent and res.converged


def test_c_phi_linear_diverges():
    assert c_phi(LINEAR, 1e-9).divergent


def test_c_phi_loglog_pinned():
    # partial sums over the same number of terms, recomputed with the mpmath oracle
    res = c_phi(LL1, 1e-9)
    assert not res.divergent and res.terms == 31
    assert res.value == pytest.approx(LL1_ORACLE_31, rel=1e-9)
    res2 = c_phi(builtin_young("loglog", delta=2.0), 1e-9)
    assert res2.terms == 17
    assert res2.value == pytest.approx(LL2_ORACLE_17, rel=1e-9)


@pytest.mark.parametrize("delta", [0.25, 0.5, 1.0, 2.0])
def test_c_phi_loglog_finite(delta):
    res = c_phi(builtin_young("loglog", delta=delta), 1e-9)
    assert not res.divergent and math.isfinite(res.value)


def test_c_phi_monotone_in_phi():
    ll2 = builtin_young("loglog", delta=2.0)
    assert c_phi(LINEAR).value >= c_phi(LL1).value >= c_phi(ll2).value


def test_c_phi_table_boundary():
    # conjugate saturates at slope 3, terms stay at 1/3 > 1e-3
    assert c_phi(TABLE).divergent
    steep = builtin_young("table", table=[[1, 1], [2, 5001]])
    res = c_phi(steep)
    assert not res.divergent and not res.converged and res.terms == 64


LL1_ORACLE_31 = 0.9310587218168426
LL2_ORACLE_17 = 0.43109415178974236
