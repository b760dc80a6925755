"""Weak-L1 norms, the exceptional set, the per-level lemma ledger and the
randomized weak-type experiment.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DivergenceError, DomainError, PreconditionError
from .grid import GridFunction, cube_mask, grid_from_spec
from .maximal import dyadic_frac_maximal, iterated_bound_weight
from .sparse import (SparseFamily, _accumulate, decompose, family_parents,
                     generate_sparse, sparse_operator)
from .young import (YoungFunction, builtin_young, c_phi, conjugate_inverse,
                    young_from_spec)

__all__ = [
    "ExceptionalSet",
    "LemmaEntry",
    "WeakTypeReport",
    "ExperimentReport",
    "SanityReport",
    "weak_norm",
    "weak_norm_bruteforce",
    "band_masses",
    "check_parameters",
    "exceptional_set",
    "lemma_check",
    "lemma_ledger",
    "run_trial",
    "run_experiment",
    "sanity_suite",
    "format_trend_table",
    "DEFAULT_EXPERIMENT",
]


def _same_grid(a: GridFunction, b: GridFunction) -> None:
    if not a.same_grid(b):
        raise DomainError(f"{a!r} and {b!r} live on different grids")


def weak_norm(g: GridFunction, w: GridFunction) -> float:
    """sup_{lam>0} lam * w({g > lam}) for piecewise-constant g.

    The supremum is approached as lam increases to one of the values v of g,
    so it equals the largest v * w({g >= v}).
    """
    _same_grid(g, w)
    gv = g.flat
    order = np.argsort(-gv, kind="stable")
    gs = gv[order]
    mass = np.cumsum(w.flat[order]) * w.cell_volume
    last = np.ones(gs.size, dtype=bool)
    last[:-1] = gs[:-1] != gs[1:]
    last &= gs > 0
    if not last.any():
        return 0.0
    return float(np.max(gs[last] * mass[last]))


def weak_norm_bruteforce(g: GridFunction, w: GridFunction) -> float:
    """Reference value: for every distinct positive value v, v * w({g >= v})."""
    _same_grid(g, w)
    best = 0.0
    for v in np.unique(g.flat):
        if v > 0:
            best = max(best, float(v) * float(np.sum(w.flat[g.flat >= v])) * w.cell_volume)
    return best


def band_masses(g: GridFunction, w: GridFunction, base: float) -> list[tuple[int, float]]:
    """w-mass of each band base*2^j < g <= base*2^(j+1), j = 0, 1, ...  up to max g."""
    _same_grid(g, w)
    top = float(g.flat.max(initial=0.0))
    out = []
    j = 0
    while base * 2.0 ** j < top:
        lo, hi = base * 2.0 ** j, base * 2.0 ** (j + 1)
        sel = (g.flat > lo) & (g.flat <= hi)
        out.append((j, float(np.sum(w.flat[sel])) * w.cell_volume))
        j += 1
    return out


def _band_lhs(g: GridFunction, w: GridFunction) -> float:
    """Largest lam * w({lam < g <= 2 lam}) over lam = 2^j."""
    pos = g.flat[g.flat > 0]
    if pos.size == 0:
        return 0.0
    j0 = math.floor(math.log2(pos.min())) - 1
    j1 = math.ceil(math.log2(pos.max()))
    best = 0.0
    for j in range(j0, j1 + 1):
        lam = 2.0 ** j
        sel = (g.flat > lam) & (g.flat <= 2 * lam)
        best = max(best, lam * float(np.sum(w.flat[sel])) * w.cell_volume)
    return best


def check_parameters(lambda0: float, lambda1: float, alpha: float, d: int) -> None:
    """Raise PreconditionError naming the first violated parameter condition."""
    if not lambda1 > 2:
        raise PreconditionError(f"need lambda1 > 2, got lambda1={lambda1}")
    series = 2.0 / (lambda1 * (lambda1 - 2.0))
    if not series < 1:
        raise PreconditionError(
            f"need (1/lambda1) * sum_k 2^k/lambda1^k < 1, got {series:.6g} for lambda1={lambda1}")
    prod = lambda1 * lambda0 ** (1.0 - alpha / d)
    if not prod < 1:
        raise PreconditionError(
            f"need lambda1 * lambda0^(1 - alpha/d) < 1, got {prod:.6g} "
            f"(lambda0={lambda0}, lambda1={lambda1}, alpha={alpha}, d={d})")


@dataclass
class ExceptionalSet:
    """Cells with lambda1 < A f <= 2 lambda1 where the removal maximal function
    is at most 1/lambda1."""

    cells: np.ndarray
    lambda1: float
    band: tuple[float, float]
    removal: str

    @property
    def size(self) -> int:
        return int(self.cells.size)


def _removal_maximal(f: GridFunction, alpha: float, removal: str) -> GridFunction:
    if removal == "frac":
        return dyadic_frac_maximal(f, alpha)
    if removal == "plain":
        return dyadic_frac_maximal(f, 0.0)
    raise DomainError(f"removal must be 'frac' or 'plain', got {removal!r}")


def exceptional_set(f: GridFunction, w: GridFunction, S: SparseFamily, alpha: float,
                    nu: float, lambda1: float, removal: str = "frac",
                    check: bool = True, Af: GridFunction | None = None) -> ExceptionalSet:
    """The exceptional set; ``removal`` picks M_alpha f ('frac') or M f ('plain')."""
    _same_grid(f, w)
    if check:
        check_parameters(S.lambda0, lambda1, alpha, f.d)
    if Af is None:
        Af = sparse_operator(f, S, alpha, nu)
    mf = _removal_maximal(f, alpha, removal)
    a = Af.flat
    sel = (a > lambda1) & (a <= 2 * lambda1) & ~(mf.flat > 1.0 / lambda1)
    return ExceptionalSet(np.flatnonzero(sel), lambda1, (lambda1, 2 * lambda1), removal)


@dataclass
class LemmaEntry:
    """Per-level record of the lemma's quantities.

    ``c_k`` is the smallest constant that makes the lemma's inequality hold
    for this level on this instance.
    """

    k: int
    n_cubes: int
    n_layers: int
    lhs_k: float
    layer_bound: float
    layer_sum: float
    bottom_sum: float
    split_sum: float
    rhs: float
    psi_inv: float
    c_k: float
    layer_ok: bool
    split_ok: bool
    cover_ok: bool
    bottom_avg_ok: bool
    bottom_avg_margin: float


def _avg_over_cells(f: GridFunction, cells: np.ndarray, level: int, alpha: float) -> float:
    return 2.0 ** (level * (f.d - alpha)) * float(np.sum(f.flat[cells])) * f.cell_volume


def lemma_check(k: int, f: GridFunction, w: GridFunction, S: SparseFamily, phi: YoungFunction,
                alpha: float, nu: float, lambda0: float, lambda1: float, *,
                eps: ExceptionalSet | None = None, dec=None, rhs: float | None = None,
                rtol: float = 1e-12) -> LemmaEntry:
    """Evaluate both sides of the per-level lemma and its two internal estimates."""
    if not nu >= 1:
        raise PreconditionError(f"the lemma needs nu >= 1, got nu={nu}")
    if eps is None:
        eps = exceptional_set(f, w, S, alpha, nu, lambda1)
    if dec is None:
        dec = decompose(S, f, alpha, lambda1)
    if rhs is None:
        rhs = _rhs_integral(f, w, phi, alpha)
    psi_inv = conjugate_inverse(phi, 2.0 ** k) if not phi.degenerate else math.nan
    cubes = dec.levels.get(k, [])
    if not cubes:
        return LemmaEntry(k, 0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, rhs, psi_inv, 0.0,
                          True, True, True, True, math.inf)

    L, d = f.L, f.d
    u = 1 << k
    emask = np.zeros(f.n_cells, dtype=bool)
    emask[eps.cells] = True
    wv = w.flat * w.cell_volume
    w_eps = float(np.sum(wv[emask]))
    a = {q: dec.averages[q] for q in cubes}
    layer_of = {q: dec.layer_of[q] for q in cubes}
    layers = dec.layers_of(k)

    # left side: integral over eps of A^{S_k} f times w
    vals = np.array([a[q] for q in cubes])
    acc = _accumulate(L, d, cubes, vals if nu == 1 else vals ** nu).reshape(-1)
    ak = acc if nu == 1 else acc ** (1.0 / nu)
    lhs = float(np.sum(ak[emask] * wv[emask]))

    qmask = {q: cube_mask(q, L) for q in cubes}
    w_e = {}
    for q in cubes:
        e = dec.e_sets[q]
        w_e[q] = float(np.sum(wv[e[emask[e]]]))

    # layer part: each E_{Q'} is charged to its S_k ancestors at most u-1 layers up
    parent = family_parents(cubes)
    layer_sum = 0.0
    for qp in cubes:
        anc = qp
        while anc is not None and layer_of[qp] - layer_of[anc] <= u - 1:
            layer_sum += a[anc] * w_e[qp]
            anc = parent[anc]
    layer_bound = (2.0 / lambda1) ** k * w_eps

    # bottom part and the split of the left side over cubes
    bottom_sum = 0.0
    split_sum = 0.0
    cover_ok = True
    for q in cubes:
        v = layer_of[q]
        in_q = qmask[q] & emask
        split_sum += a[q] * float(np.sum(wv[in_q]))
        bottom = np.zeros(f.n_cells, dtype=bool)
        for p in layers.get(v + u, ()):
            if q.contains(p):
                bottom |= qmask[p]
        bottom_sum += a[q] * float(np.sum(wv[bottom & emask]))
        covered = bottom.copy()
        for l in range(0, min(u, len(layers) - v)):
            for p in layers.get(v + l, ()):
                if q.contains(p):
                    covered[dec.e_sets[p]] = True
        if np.any(qmask[q] & ~covered):
            cover_ok = False

    # bottom-average lower bound
    factor = 1.0 - lambda1 * lambda0 ** (1.0 - alpha / d)
    margin = math.inf
    for q in cubes:
        lo = _avg_over_cells(f, dec.e_sets[q], q.level, alpha)
        margin = min(margin, lo - factor * a[q])
    bottom_ok = margin >= -rtol * max(1.0, max(a.values()))

    c_k = 0.0
    if rhs > 0:
        c_k = max(lhs - layer_bound, 0.0) * psi_inv / rhs
    slack = rtol * max(1.0, lhs, split_sum)
    return LemmaEntry(
        k=k, n_cubes=len(cubes), n_layers=len(layers), lhs_k=lhs,
        layer_bound=layer_bound, layer_sum=layer_sum, bottom_sum=bottom_sum,
        split_sum=split_sum, rhs=rhs, psi_inv=psi_inv, c_k=c_k,
        layer_ok=layer_sum <= layer_bound + slack,
        split_ok=lhs <= split_sum + slack and split_sum <= layer_sum + bottom_sum + slack,
        cover_ok=cover_ok, bottom_avg_ok=bottom_ok, bottom_avg_margin=margin,
    )


def _rhs_integral(f: GridFunction, w: GridFunction, phi: YoungFunction, alpha: float,
                  weight: GridFunction | None = None) -> float:
    """The exact cell sum of f * M_alpha(M_phi w)."""
    if weight is None:
        weight = iterated_bound_weight(w, phi, alpha)
    return float(np.sum(f.flat * weight.flat)) * f.cell_volume


@dataclass
class LemmaLedger:
    entries: list[LemmaEntry]
    w_eps: float
    assembled: float
    assembly_ok: bool
    eps_cells: int

    @property
    def c_max(self) -> float:
        return max((e.c_k for e in self.entries), default=0.0)


def lemma_ledger(f: GridFunction, w: GridFunction, S: SparseFamily, phi: YoungFunction,
                 alpha: float, nu: float, lambda1: float, removal: str = "frac",
                 weight: GridFunction | None = None, Af: GridFunction | None = None,
                 check: bool = True) -> LemmaLedger:
    """Lemma entries for every nonempty level set plus the assembly inequality
    w(eps) <= (1/lambda1) * sum_k (layer part + bottom part)."""
    eps = exceptional_set(f, w, S, alpha, nu, lambda1, removal, check=check, Af=Af)
    dec = decompose(S, f, alpha, lambda1)
    rhs = _rhs_integral(f, w, phi, alpha, weight)
    entries = [lemma_check(k, f, w, S, phi, alpha, nu, S.lambda0, lambda1,
                           eps=eps, dec=dec, rhs=rhs) for k in dec.levels]
    w_eps = float(np.sum(w.flat[eps.cells])) * w.cell_volume
    assembled = sum(e.layer_sum + e.bottom_sum for e in entries) / lambda1
    ok = w_eps <= assembled + 1e-12 * max(1.0, assembled)
    return LemmaLedger(entries, w_eps, assembled, ok, eps.size)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

DEFAULT_EXPERIMENT: dict[str, Any] = {
    "d": 1,
    "L": 10,
    "alpha": 0.5,
    "nu": 1.0,
    "lambda0": 1.0 / 32,
    "lambda1": 4.0,
    "N": 2,
    "level_gap": 1,
    "target_size": 40,
    "children_budget": False,
    "young": {"kind": "loglog", "delta": 1.0},
    "f": {"generator": "random-uniform", "params": {}},
    "w": {"generator": "random-uniform", "params": {}},
    "trials": 200,
    "seed": 0,
    "removal": "frac",
    "lemma": True,
    "threads": None,
}


@dataclass
class WeakTypeReport:
    trial: int
    seed: int
    lhs: float
    rhs: float
    ratio: float
    band_lhs: float
    c_phi: float
    n_cubes: int
    lemma_ledger: list[LemmaEntry] = field(default_factory=list)
    lemma_w_eps: float = 0.0
    lemma_assembled: float = 0.0
    lemma_assembly_ok: bool = True
    band_consistent: bool = True

    @property
    def c_max(self) -> float:
        return max((e.c_k for e in self.lemma_ledger), default=0.0)


@dataclass
class ExperimentReport:
    config: dict
    trials: list[WeakTypeReport]
    c_phi: float

    @property
    def ratios(self) -> np.ndarray:
        return np.array([t.ratio for t in self.trials], dtype=float)

    @property
    def aggregate(self) -> dict[str, float]:
        r = self.ratios
        if r.size == 0:
            return {"max_ratio": 0.0, "mean_ratio": 0.0, "p95_ratio": 0.0, "c_phi": 0.0}
        return {
            "max_ratio": float(r.max()),
            "mean_ratio": float(r.mean()),
            "p95_ratio": float(np.percentile(r, 95)),
            "c_phi": self.c_phi,
        }


def trial_seeds(master, n: int) -> list[int]:
    """Per-trial integer seeds split deterministically from the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]


def _resolve(config: dict) -> dict:
    cfg = dict(DEFAULT_EXPERIMENT)
    cfg.update({k: v for k, v in config.items() if v is not None})
    return cfg


def run_trial(cfg: dict, trial: int, seed: int, phi: YoungFunction, cphi: float) -> WeakTypeReport:
    d, L = int(cfg["d"]), int(cfg["L"])
    alpha, nu, lambda1 = float(cfg["alpha"]), float(cfg["nu"]), float(cfg["lambda1"])
    f = grid_from_spec({**cfg["f"], "seed": [seed, 0]}, d, L)
    w = grid_from_spec({**cfg["w"], "seed": [seed, 1]}, d, L)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        S = generate_sparse([seed, 2], d, L, float(cfg["lambda0"]), int(cfg["N"]),
                            int(cfg["level_gap"]), int(cfg["target_size"]),
                            bool(cfg["children_budget"]))
    Af = sparse_operator(f, S, alpha, nu)
    weight = iterated_bound_weight(w, phi, alpha)
    lhs = weak_norm(Af, w)
    rhs = cphi * _rhs_integral(f, w, phi, alpha, weight)
    ratio = lhs / rhs if rhs > 0 else 0.0
    rep = WeakTypeReport(trial, seed, lhs, rhs, ratio, _band_lhs(Af, w), cphi, len(S))
    bands = band_masses(Af, w, lambda1)
    above = float(np.sum(w.flat[Af.flat > lambda1])) * w.cell_volume
    rep.band_consistent = math.isclose(sum(m for _, m in bands), above,
                                       rel_tol=1e-12, abs_tol=1e-300)
    if cfg.get("lemma"):
        led = lemma_ledger(f, w, S, phi, alpha, nu, lambda1, cfg.get("removal", "frac"),
                           weight=weight, Af=Af)
        rep.lemma_ledger = led.entries
        rep.lemma_w_eps = led.w_eps
        rep.lemma_assembled = led.assembled
        rep.lemma_assembly_ok = led.assembly_ok
    return rep


def _threads(cfg: dict) -> int:
    n = cfg.get("threads")
    if n is None:
        n = int(os.environ.get("SPARSEWEAK_THREADS", "1") or 1)
    if n == 0:
        n = os.cpu_count() or 1
    return max(1, int(n))


def run_experiment(config: dict) -> ExperimentReport:
    """Randomized weak-type trials; deterministic in ``config['seed']`` at any thread count."""
    cfg = _resolve(config)
    phi = young_from_spec(cfg["young"])
    cp = c_phi(phi)
    if cp.divergent:
        raise DivergenceError(
            f"c_phi diverges for {cfg['young']}; the estimate does not apply")
    if float(cfg["nu"]) < 1:
        raise PreconditionError(f"the weak-type estimate needs nu >= 1, got nu={cfg['nu']}")
    d = int(cfg["d"])
    if not 0 <= float(cfg["alpha"]) < d:
        raise PreconditionError(f"alpha must lie in [0, {d}), got {cfg['alpha']}")
    if cfg.get("lemma"):
        check_parameters(float(cfg["lambda0"]), float(cfg["lambda1"]), float(cfg["alpha"]), d)
    n = int(cfg["trials"])
    seeds = trial_seeds(cfg["seed"], n)
    jobs = list(enumerate(seeds))

    def one(job):
        return run_trial(cfg, job[0], job[1], phi, cp.value)

    threads = _threads(cfg)
    if threads > 1 and n > 1:
        with ThreadPoolExecutor(threads) as ex:
            trials = list(ex.map(one, jobs))
    else:
        trials = [one(j) for j in jobs]
    return ExperimentReport(cfg, trials, cp.value)


# --------------------------------------------------------------------------
# sanity suite
# --------------------------------------------------------------------------

DEFAULT_SANITY: dict[str, Any] = {
    "d": 1,
    "L": 8,
    "trials": 100,
    "seed": 0,
    "alpha": 0.5,
    "delta": 1.0,
    "lambda0": 0.25,
    "N": 2,
    "level_gap": 1,
    "target_size": 60,
    "adversarial": {"levels": [6, 8, 10], "spikes": 4, "iterations": 60, "seed": 3},
}


@dataclass
class SanityReport:
    fs_ratios: list[float]
    fs_max: float
    monotone_checked: int
    monotone_violations: int
    trend: list[dict]
    config: dict


def sanity_suite(config: dict | None = None) -> SanityReport:
    """Three checks: the dyadic Fefferman-Stein ratio, pointwise ordering of
    the composed weights, and an adversarial search over spiky weights."""
    cfg = dict(DEFAULT_SANITY)
    cfg.update({k: v for k, v in (config or {}).items() if v is not None})
    d, L = int(cfg["d"]), int(cfg["L"])
    alpha = float(cfg["alpha"])
    lin = builtin_young("linear")
    ll = builtin_young("loglog", delta=float(cfg["delta"]))
    seeds = trial_seeds(cfg["seed"], int(cfg["trials"]))

    fs = []
    violations = 0
    for s in seeds:
        f = grid_from_spec({"generator": "random-uniform", "seed": [s, 0]}, d, L)
        w = grid_from_spec({"generator": "random-uniform", "seed": [s, 1]}, d, L)
        w = GridFunction(w.values ** 4)
        mw = dyadic_frac_maximal(w, 0.0)
        den = float(np.sum(f.flat * mw.flat)) * f.cell_volume
        fs.append(weak_norm(dyadic_frac_maximal(f, 0.0), w) / den if den > 0 else 0.0)
        big = iterated_bound_weight(w, ll, alpha).flat
        small = iterated_bound_weight(w, lin, alpha).flat
        violations += int(np.count_nonzero(big < small))

    trend = _adversarial(cfg, alpha)
    return SanityReport(fs, max(fs, default=0.0), len(seeds), violations, trend, cfg)


def _adversarial(cfg: dict, alpha: float) -> list[dict]:
    adv = dict(DEFAULT_SANITY["adversarial"])
    adv.update(cfg.get("adversarial") or {})
    d = int(cfg["d"])
    rows = []
    for L in adv["levels"]:
        L = int(L)
        rng = np.random.default_rng([int(adv["seed"]), L])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            S = generate_sparse([int(adv["seed"]), L, 1], d, L, float(cfg["lambda0"]),
                                int(cfg["N"]), int(cfg["level_gap"]),
                                int(cfg["target_size"]), False)
        f = grid_from_spec({"generator": "random-uniform", "seed": [int(adv["seed"]), L, 2]}, d, L)
        Af = sparse_operator(f, S, alpha, 1.0)
        n = f.n_cells
        pos = rng.integers(0, n, size=int(adv["spikes"]))

        def ratio(pos):
            wv = np.bincount(pos, minlength=n).astype(float)
            w = GridFunction.from_flat(d, L, wv)
            den = float(np.sum(f.flat * dyadic_frac_maximal(w, alpha).flat)) * f.cell_volume
            return weak_norm(Af, w) / den if den > 0 else 0.0

        start = best = ratio(pos)
        accepted = 0
        for _ in range(int(adv["iterations"])):
            cand = pos.copy()
            cand[rng.integers(0, cand.size)] = rng.integers(0, n)
            r = ratio(cand)
            if r > best:
                best, pos = r, cand
                accepted += 1
        rows.append({"L": L, "cubes": len(S), "initial_ratio": start, "best_ratio": best,
                     "accepted_moves": accepted})
    return rows


def format_trend_table(rows: list[dict]) -> str:
    lines = ["L,cubes,initial_ratio,best_ratio,accepted_moves"]
    for r in rows:
        lines.append(f"{r['L']},{r['cubes']},{r['initial_ratio']:.17g},"
                     f"{r['best_ratio']:.17g},{r['accepted_moves']}")
    return "\n".join(lines) + "\n"
