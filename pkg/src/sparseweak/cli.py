"""Command-line front end.

Exit status: 0 on success, 1 on a validation error, 2 when a computation is
refused (for instance a divergent c_phi).

Config files are INI files.  Values are read as JSON when they parse as JSON
and as plain strings otherwise.  Recognized sections::

    [grid]        d, L
    [young]       kind, p, delta, table
    [sparse]      file | seed, lambda0, N, level_gap, target_size, children_budget
    [operator]    alpha, nu, lambda1, removal
    [function]    file | generator, seed, params | values
    [weight]      same keys as [function]
    [experiment]  trials, seed, threads, lemma
    [adversarial] levels, spikes, iterations, seed
    [output]      json, csv

Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import warnings

from . import __version__
from .errors import BoundedConjugateRange, DivergenceError, DomainError, PreconditionError
from .grid import grid_from_spec, read_grid_function, write_grid_function
from .maximal import dyadic_frac_maximal, iterated_bound_weight, orlicz_maximal
from .report import dumps, emit_report
from .sparse import (PACKING_MODES, decompose, read_family, sparse_from_spec,
                     sparse_operator, verify_n_regular, verify_sparse, write_family)
from .weaktype import format_trend_table, run_experiment, sanity_suite
from .young import c_phi, conjugate, conjugate_inverse, eval_phi, young_from_spec

__all__ = ["main", "run_cli", "load_config"]


class ConfigError(ValueError):
    pass


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path) -> dict[str, dict]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep 'L' distinct from 'l'
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return {sec: {k: _value(v) for k, v in parser[sec].items()} for sec in parser.sections()}


def _section(cfg: dict, name: str) -> dict:
    return dict(cfg.get(name, {}))


def _override(base: dict, **flags) -> dict:
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _young_spec(cfg: dict, args) -> dict:
    spec = _override(_section(cfg, "young"), kind=getattr(args, "kind", None),
                     p=getattr(args, "p", None), delta=getattr(args, "delta", None))
    table = getattr(args, "table", None)
    if table is not None:
        spec["table"] = json.loads(table)
    return spec


def _grid_spec(sec: dict, grid: dict) -> dict:
    if "file" in sec:
        if not os.path.isfile(sec["file"]):
            raise ConfigError(f"grid function file not found: {sec['file']}")
        return sec
    return {**grid, **sec}


def _load_grid(spec: dict):
    if "file" in spec:
        return read_grid_function(spec["file"])
    return grid_from_spec(spec)


def _function_arg(value: str | None, sec: dict, grid: dict) -> dict:
    """A function given on the command line is a file path or inline JSON."""
    if value is None:
        return _grid_spec(sec, grid)
    if os.path.isfile(value):
        return {"file": value}
    try:
        spec = json.loads(value)
    except json.JSONDecodeError:
        raise ConfigError(f"function file not found: {value}") from None
    return {**grid, **spec}


def _check_writable(path) -> None:
    if path is None:
        return
    folder = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(folder) or not os.access(folder, os.W_OK):
        raise ConfigError(f"cannot write to {path}")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _cmd_young(args, cfg) -> int:
    phi = young_from_spec(_young_spec(cfg, args))
    if args.eval is not None:
        print(f"phi({args.eval!r}) = {eval_phi(phi, args.eval):.17g}")
    if args.conjugate is not None:
        print(f"psi({args.conjugate!r}) = {conjugate(phi, args.conjugate):.17g}")
    if args.inverse is not None:
        print(f"psi^-1(2^{args.inverse!r}) = {conjugate_inverse(phi, args.inverse):.17g}")
    if args.cphi or (args.eval is None and args.conjugate is None and args.inverse is None):
        res = c_phi(phi, args.tol)
        if res.divergent:
            print(f"c_phi diverges for {phi.kind} Young function", file=sys.stderr)
            return 2
        print(f"c_phi = {res.value:.17g} (terms={res.terms}, converged={res.converged})")
    return 0


def _family_spec(cfg: dict, args) -> dict:
    grid = _section(cfg, "grid")
    sec = _override(_section(cfg, "sparse"), file=getattr(args, "family", None))
    if "file" in sec:
        if not os.path.isfile(sec["file"]):
            raise ConfigError(f"family file not found: {sec['file']}")
        return {"file": sec["file"]}
    sec = _override({**grid, **sec}, d=getattr(args, "d", None), L=getattr(args, "L", None),
                    lambda0=getattr(args, "lambda0", None), N=getattr(args, "N", None),
                    level_gap=getattr(args, "gap", None),
                    target_size=getattr(args, "size", None), seed=getattr(args, "seed", None))
    missing = [k for k in ("d", "L", "lambda0", "N") if k not in sec]
    if missing:
        raise ConfigError(f"sparse family needs {', '.join(missing)}")
    return sec


def _cmd_build_sparse(args, cfg) -> int:
    spec = _family_spec(cfg, args)
    _check_writable(args.out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        S = sparse_from_spec(spec)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    pk = verify_sparse(S, args.mode)
    print(f"cubes: {len(S)}")
    print(f"packing ({pk.mode}): {'pass' if pk.passed else 'fail'} "
          f"ratio={pk.ratio:.17g} bound={pk.bound:.17g} worst={pk.worst_cube}")
    if S.n_regular is not None:
        rg = verify_n_regular(S, S.n_regular)
        print(f"{S.n_regular}-regular: {'pass' if rg.passed else 'fail'} "
              f"max_children={rg.max_children} worst={rg.worst_cube}")
    if args.out:
        write_family(S, args.out)
    return 0


def _cmd_apply(args, cfg) -> int:
    grid = _section(cfg, "grid")
    op = _override(_section(cfg, "operator"), alpha=args.alpha, nu=args.nu)
    fspec = _function_arg(args.function, _section(cfg, "function"), grid)
    sspec = _family_spec(cfg, args)
    _check_writable(args.out)
    f = _load_grid(fspec)
    S = read_family(sspec["file"]) if "file" in sspec else sparse_from_spec(sspec)
    g = sparse_operator(f, S, float(op.get("alpha", 0.0)), float(op.get("nu", 1.0)))
    _emit_grid(g, args.out)
    return 0


def _emit_grid(g, out) -> None:
    if out:
        write_grid_function(g, out)
    else:
        print(f"{g.d} {g.L}")
        print(" ".join(format(float(x), ".17g") for x in g.flat))


def _cmd_maximal(args, cfg) -> int:
    grid = _section(cfg, "grid")
    op = _override(_section(cfg, "operator"), alpha=args.alpha)
    fspec = _function_arg(args.function, _section(cfg, "function"), grid)
    _check_writable(args.out)
    young = _young_spec(cfg, args)
    phi = young_from_spec(young) if young.get("kind") else None
    f = _load_grid(fspec)
    alpha = float(op.get("alpha", 0.0))
    if phi is None:
        g = dyadic_frac_maximal(f, alpha)
    elif args.orlicz_only:
        g = orlicz_maximal(f, phi)
    else:
        g = iterated_bound_weight(f, phi, alpha)
    _emit_grid(g, args.out)
    return 0


def _cmd_decompose(args, cfg) -> int:
    grid = _section(cfg, "grid")
    op = _override(_section(cfg, "operator"), alpha=args.alpha, lambda1=args.lambda1)
    fspec = _function_arg(args.function, _section(cfg, "function"), grid)
    sspec = _family_spec(cfg, args)
    f = _load_grid(fspec)
    S = read_family(sspec["file"]) if "file" in sspec else sparse_from_spec(sspec)
    dec = decompose(S, f, float(op.get("alpha", 0.0)), float(op.get("lambda1", 4.0)))
    doc = {}
    for k, cubes in dec.levels.items():
        layers = dec.layers_of(k)
        doc[str(k)] = {
            "u": 1 << k,
            "cubes": len(cubes),
            "layers": {str(v): [[q.level, *q.index] for q in qs] for v, qs in layers.items()},
        }
    print(dumps(doc))
    return 0


def _experiment_config(cfg: dict, args) -> dict:
    grid = _section(cfg, "grid")
    sp = _section(cfg, "sparse")
    op = _section(cfg, "operator")
    ex = _section(cfg, "experiment")
    out = {}
    out.update({k: grid[k] for k in ("d", "L") if k in grid})
    out.update({k: sp[k] for k in ("lambda0", "N", "level_gap", "target_size",
                                    "children_budget") if k in sp})
    out.update({k: op[k] for k in ("alpha", "nu", "lambda1", "removal") if k in op})
    out.update({k: ex[k] for k in ("trials", "seed", "threads", "lemma") if k in ex})
    if "young" in cfg:
        out["young"] = _section(cfg, "young")
    for sec, key in (("function", "f"), ("weight", "w")):
        if sec in cfg:
            s = _section(cfg, sec)
            s.pop("seed", None)
            out[key] = s
    if "adversarial" in cfg:
        out["adversarial"] = _section(cfg, "adversarial")
    return _override(out, trials=getattr(args, "trials", None),
                     seed=getattr(args, "seed", None), threads=getattr(args, "threads", None))


def _outputs(cfg: dict, args) -> tuple[str | None, str | None]:
    o = _section(cfg, "output")
    js = args.json if args.json is not None else o.get("json")
    cs = args.csv if args.csv is not None else o.get("csv")
    _check_writable(js)
    _check_writable(cs)
    return js, cs


def _cmd_weaktype(args, cfg) -> int:
    conf = _experiment_config(cfg, args)
    js, cs = _outputs(cfg, args)
    rep = run_experiment(conf)
    agg = rep.aggregate
    print(f"trials={len(rep.trials)} max_ratio={agg['max_ratio']:.17g} "
          f"mean_ratio={agg['mean_ratio']:.17g} p95_ratio={agg['p95_ratio']:.17g} "
          f"c_phi={agg['c_phi']:.17g}")
    if js:
        emit_report(rep, "json", js)
    if cs:
        emit_report(rep, "csv", cs)
    return 0


def _cmd_sanity(args, cfg) -> int:
    conf = _experiment_config(cfg, args)
    js, cs = _outputs(cfg, args)
    rep = sanity_suite(conf)
    print(f"fefferman_stein max_ratio={rep.fs_max:.17g} over {len(rep.fs_ratios)} trials")
    print(f"monotonicity violations={rep.monotone_violations} of {rep.monotone_checked} weights")
    sys.stdout.write(format_trend_table(rep.trend))
    if js:
        emit_report(rep, "json", js)
    if cs:
        emit_report(rep, "csv", cs)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparseweak", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file")
        return sp

    y = common(sub.add_parser("young", help="Young function engine"))
    y.add_argument("--kind", choices=["power", "loglog", "linear", "table"])
    y.add_argument("--p", type=float)
    y.add_argument("--delta", type=float)
    y.add_argument("--table", help="JSON list of [t, phi(t)] knots")
    y.add_argument("--cphi", action="store_true", help="print c_phi")
    y.add_argument("--tol", type=float, default=1e-9)
    y.add_argument("--eval", type=float, metavar="T")
    y.add_argument("--conjugate", type=float, metavar="S")
    y.add_argument("--inverse", type=float, metavar="LOG2Y")

    b = common(sub.add_parser("build-sparse", help="generate and verify a sparse family"))
    b.add_argument("--family", help="verify an existing family file instead")
    b.add_argument("--d", type=int)
    b.add_argument("--L", type=int)
    b.add_argument("--lambda0", type=float)
    b.add_argument("--N", type=int)
    b.add_argument("--gap", type=int)
    b.add_argument("--size", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--mode", choices=PACKING_MODES, default="carleson")
    b.add_argument("--out")

    a = common(sub.add_parser("apply", help="apply the fractional sparse operator"))
    a.add_argument("--function", help="grid function file or inline JSON spec")
    a.add_argument("--family", help="sparse family file")
    a.add_argument("--alpha", type=float)
    a.add_argument("--nu", type=float)
    a.add_argument("--out")

    m = common(sub.add_parser("maximal", help="dyadic maximal operators"))
    m.add_argument("--function", help="grid function file or inline JSON spec")
    m.add_argument("--alpha", type=float)
    m.add_argument("--kind", choices=["power", "loglog", "linear", "table"],
                   help="compose with the Orlicz maximal function of this Young function")
    m.add_argument("--p", type=float)
    m.add_argument("--delta", type=float)
    m.add_argument("--orlicz-only", action="store_true")
    m.add_argument("--out")

    dcp = common(sub.add_parser("decompose", help="level sets and layers of a family"))
    dcp.add_argument("--function")
    dcp.add_argument("--family")
    dcp.add_argument("--alpha", type=float)
    dcp.add_argument("--lambda1", type=float)

    for name, hlp in (("weaktype", "randomized weak-type experiment"),
                      ("sanity", "Fefferman-Stein, monotonicity and adversarial checks")):
        w = common(sub.add_parser(name, help=hlp))
        w.add_argument("--trials", type=int)
        w.add_argument("--seed", type=int)
        w.add_argument("--threads", type=int)
        w.add_argument("--json")
        w.add_argument("--csv")
    return p


COMMANDS = {
    "young": _cmd_young,
    "build-sparse": _cmd_build_sparse,
    "apply": _cmd_apply,
    "maximal": _cmd_maximal,
    "decompose": _cmd_decompose,
    "weaktype": _cmd_weaktype,
    "sanity": _cmd_sanity,
}


def run_cli(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, cfg)
    except (DivergenceError, BoundedConjugateRange) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError, PreconditionError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
