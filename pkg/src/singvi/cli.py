"""Command-line entry point: ``singvi <command> [options]``.

Every command writes CSV or JSON.  Data files carry the resolved configuration
in a header (``# config: {...}`` for CSV, a ``"config"`` key for JSON) and,
unless ``--no-timestamp`` is given, a generation timestamp.  Exit status is 0 on
success, 2 on invalid input and 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConditioningError, DomainError, NumericalFailure, UnsupportedModelError
from .normal_form import NormalForm, compute_rlct

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class _ArgError(Exception):
    pass


def _fmt(x):
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x) or math.isnan(x):
            return str(x)
        return format(x, ".17g")
    return "" if x is None else str(x)


def parse_n_grid(text: str):
    """``a:b:count`` (log-spaced, inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, count = text.split(":")
            a, b, count = float(a), float(b), int(count)
            if count < 1 or a <= 0 or b <= 0:
                raise ValueError
            if count == 1:
                grid = [a]
            else:
                grid = list(np.logspace(math.log10(a), math.log10(b), count))
        else:
            grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _ArgError(f"invalid --n-grid {text!r}") from None
    if not grid or any(not (v > 0) or math.isinf(v) for v in grid):
        raise _ArgError("--n-grid values must be positive and finite")
    # round log-spaced points that land within float noise of an integer
    grid = [float(round(v)) if abs(v - round(v)) < 1e-9 * v else v for v in grid]
    return sorted(set(grid))


def _parse_list(s, conv, flag):
    try:
        return [conv(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise _ArgError(f"invalid {flag} {s!r}") from None


def _int_or_float(v):
    f = float(v)
    return int(f) if f.is_integer() else f


def resolve_model(args, required=True):
    if getattr(args, "model", None):
        return NormalForm.from_json(args.model)
    if getattr(args, "lambdas", None):
        return NormalForm.from_lambdas(_parse_list(args.lambdas, float, "--lambda"))
    if getattr(args, "k", None) is not None:
        if args.h is None:
            raise _ArgError("--k needs --h")
        k = _parse_list(args.k, _int_or_float, "--k")
        h = _parse_list(args.h, _int_or_float, "--h")
        return NormalForm(tuple(k), tuple(h))
    if required:
        raise _ArgError("specify a model with --model, --k/--h or --lambda")
    return None


def _resolved_config(args, model, grid):
    cfg = {"command": args.command, "version": __version__}
    if model is not None:
        cfg["model"] = model.to_dict()
    if grid is not None:
        cfg["n_grid"] = grid
    for key in ("seed", "tol", "samples", "coords", "n_data", "wn_const", "mc_samples",
                "methods", "workers"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    return cfg


def _timestamp(args):
    if args.no_timestamp:
        return None
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _render_csv(cfg, ts, header, rows):
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
    if ts:
        buf.write(f"# generated: {ts}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and (math.isinf(obj) or math.isnan(obj)):
        return str(obj)
    return obj


def _render_json(cfg, ts, payload):
    doc = dict(payload)
    doc["config"] = cfg
    if ts:
        doc["generated"] = ts
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def _emit(args, text):
    if args.out:
        path = Path(args.out)
        tmp = path.with_name(path.name + ".part")
        tmp.write_text(text)
        os.replace(tmp, path)
    else:
        sys.stdout.write(text)


def _map(args, fn, items):
    workers = max(1, int(getattr(args, "workers", 1) or 1))
    if workers == 1:
        return [fn(v) for v in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- commands ------------------------------------------------------------------

def cmd_rlct(args):
    model = resolve_model(args)
    res = compute_rlct(model)
    payload = res.to_dict()
    if args.out:
        _emit(args, _render_json(_resolved_config(args, model, None), _timestamp(args),
                                 {**payload, "per_coord_lambda": list(res.per_coord_lambda),
                                  "argmin_indices": list(res.argmin_indices)}))
    else:
        print(json.dumps(_jsonable(payload)))


def cmd_evidence(args):
    from . import evidence as ev

    model = resolve_model(args)
    grid = parse_n_grid(args.n_grid)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = set(methods) - {"exact_rep", "quadrature", "monte_carlo"}
    if bad:
        raise _ArgError(f"unknown method(s) {sorted(bad)}")

    def one(n):
        rows = []
        for m in methods:
            if m == "exact_rep":
                try:
                    e = ev.evidence_exact_rep(model, n)
                except UnsupportedModelError:
                    continue
            elif m == "quadrature":
                e = ev.evidence_quadrature(model, n, args.tol)
                if not e.converged:
                    raise NumericalFailure(f"quadrature tolerance not reached at n={n}")
            else:
                e = ev.evidence_mc(model, n, args.samples, args.seed, args.workers)
            rows.append((n, e.log_value, e.method, e.error, None))
        return rows

    rows = [r for block in _map(args, one, grid) for r in block]
    cfg = _resolved_config(args, model, grid)
    _emit(args, _render_csv(cfg, _timestamp(args),
                            ["n", "log_Z", "method", "error", "lambda_hat"], rows))


def cmd_bounds_fit(args):
    from . import evidence as ev

    model = resolve_model(args)
    grid = parse_n_grid(args.n_grid)
    fit = ev.check_theorem21_bounds(model, grid)
    method = "exact_rep"
    try:
        ev.evidence_exact_rep(model, grid[0])
    except (UnsupportedModelError, ConditioningError):
        method = "quadrature"
    rows = [(n, lz, method, None, fit.lambda_hat) for n, lz in zip(fit.n_grid, fit.log_z)]
    cfg = _resolved_config(args, model, grid)
    _emit(args, _render_csv(cfg, _timestamp(args),
                            ["n", "log_Z", "method", "error", "lambda_hat"], rows))
    summary = {"lambda_hat": fit.lambda_hat, "loglog_coef": fit.loglog_coef,
               "lambda": fit.lambda_true, "multiplicity": fit.multiplicity,
               "band": fit.band}
    if args.out:
        print(json.dumps(_jsonable(summary), sort_keys=True))


def cmd_cavi(args):
    from . import cavi

    model = resolve_model(args)
    grid = parse_n_grid(args.n_grid)

    def one(n):
        mu1, mu2, tr = cavi.solve_fixed_point(model, n, tol=args.tol, max_iter=args.max_iter)
        if not tr.converged:
            raise NumericalFailure(f"fixed point not reached at n={n}")
        e = cavi.elbo_at(cavi.CaviState(mu1, mu2, n, model))
        return (n, mu1, mu2, e, tr.iterations)

    rows = _map(args, one, grid)
    cfg = _resolved_config(args, model, grid)
    _emit(args, _render_csv(cfg, _timestamp(args),
                            ["n", "mu1_star", "mu2_star", "elbo", "iterations"], rows))


def cmd_slope_fit(args):
    from . import cavi

    model = resolve_model(args)
    grid = parse_n_grid(args.n_grid)
    fit = cavi.elbo_slope_fit(model, grid)
    cfg = _resolved_config(args, model, grid)
    _emit(args, _render_json(cfg, _timestamp(args), fit.to_dict()))


def cmd_nn(args):
    from . import nn_example as nn

    grid = parse_n_grid(args.n_grid)
    systems = ["original", "transformed"] if args.coords == "both" else [args.coords]
    if "original" in systems and any(not float(n).is_integer() for n in grid):
        raise _ArgError("original coordinates need integer sample sizes")

    def one(n):
        rows = []
        for cs in systems:
            if cs == "transformed":
                tr = nn.cavi_transformed(n, tol=args.tol)
                rows.append((n, args.seed, cs, tr.final_elbo, tr.F1[-1], tr.F2[-1],
                             tr.iterations))
            else:
                tr = nn.cavi_original(nn.simulate(int(n), args.seed), tol=args.tol)
                rows.append((n, args.seed, cs, tr.final_elbo, None, None, tr.iterations))
            if not tr.converged:
                raise NumericalFailure(f"{cs} CAVI did not converge at n={n}")
        return rows

    rows = [r for block in _map(args, one, grid) for r in block]
    cfg = _resolved_config(args, None, grid)
    _emit(args, _render_csv(cfg, _timestamp(args),
                            ["n", "seed", "coordinate_system", "elbo", "F1", "F2",
                             "iterations"], rows))


def cmd_theorem23(args):
    from . import evidence as ev

    if args.nn:
        from . import nn_example as nn

        data = nn.simulate(args.n_data, args.seed)
        model, n, wn = nn.theorem23_inputs(data)
    else:
        model = resolve_model(args)
        if args.n is None:
            raise _ArgError("--n is required unless --nn is given")
        n = args.n
        wn = args.wn_const
    rep = ev.theorem23_check(model, n, wn, args.mc_samples, args.seed, args.workers)
    cfg = _resolved_config(args, model, None)
    cfg["n"] = n
    _emit(args, _render_json(cfg, _timestamp(args), rep.to_dict()))


# -- parser --------------------------------------------------------------------

def _default_seed():
    env = os.environ.get("SE_SEED")
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        return None


def build_parser():
    p = argparse.ArgumentParser(prog="singvi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True, grid=None):
        if model:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--model", help="JSON model file {k, h, d, b}")
            g.add_argument("--k", help="comma-separated k multi-index")
            g.add_argument("--lambda", dest="lambdas",
                           help="comma-separated thresholds; synthesizes one model")
            sp.add_argument("--h", help="comma-separated h multi-index (with --k)")
        if grid is not None:
            sp.add_argument("--n-grid", default=grid, help="a:b:count (log-spaced) or a list")
        sp.add_argument("--seed", type=int, default=_default_seed())
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", help="output path (stdout if omitted)")
        sp.add_argument("--no-timestamp", action="store_true")

    sp = sub.add_parser("rlct", help="RLCT and multiplicity of a normal form")
    common(sp)
    sp.set_defaults(func=cmd_rlct)

    sp = sub.add_parser("evidence", help="log Z_K(n) by several methods")
    common(sp, grid="1e2:1e4:3")
    sp.add_argument("--methods", default="exact_rep,quadrature,monte_carlo")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.set_defaults(func=cmd_evidence)

    sp = sub.add_parser("bounds-fit", help="regress log Z_K(n) on log n and log log n")
    common(sp, grid="1e2:1e8:9")
    sp.set_defaults(func=cmd_bounds_fit)

    sp = sub.add_parser("cavi", help="CAVI fixed points over an n grid")
    common(sp, grid="1e2:1e8:7")
    sp.add_argument("--max-iter", type=int, default=10_000)
    sp.set_defaults(func=cmd_cavi, tol=1e-12)

    sp = sub.add_parser("slope-fit", help="slope of the fixed-point ELBO in log n")
    common(sp, grid="1e2:1e6:5")
    sp.set_defaults(func=cmd_slope_fit)

    sp = sub.add_parser("nn", help="tanh regression example")
    common(sp, model=False, grid="1e2:1e6:5")
    sp.add_argument("--coords", choices=["original", "transformed", "both"],
                    default="transformed")
    sp.set_defaults(func=cmd_nn)

    sp = sub.add_parser("theorem23", help="Monte Carlo check of the evidence decomposition")
    common(sp)
    sp.add_argument("--n", type=float)
    sp.add_argument("--wn-const", type=float, default=None)
    sp.add_argument("--nn", action="store_true", help="use a simulated tanh-regression dataset")
    sp.add_argument("--n-data", type=int, default=500)
    sp.add_argument("--mc-samples", type=int, default=1_000_000)
    sp.set_defaults(func=cmd_theorem23)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        print("error: SE_SEED must be an integer", file=sys.stderr)
        return EXIT_INVALID
    if hasattr(args, "tol") and not args.tol > 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        args.func(args)
    except (_ArgError, DomainError, UnsupportedModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, ConditioningError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
