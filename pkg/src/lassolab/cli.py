"""Command-line entry point: ``lassolab <subcommand> [flags]``.

Exit codes: 0 success, 1 error raised by a module (message on stderr),
2 usage error. ``verify`` exits 0 iff no certified draw violates the bound.
All JSON outputs carry ``"schema": 1``. Set LASSOLAB_LOG to quiet, info or
debug to control log output on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import covering, design as dm, entropy, geometry, lasso, oracle
from .config import ExperimentConfig, dumps, run_probcheck, run_verify, zero_based
from .errors import InputError, LassoLabError, ParameterError
from .harness import NoiseModel, draw_noise, parse_rule, select_lambda

log = logging.getLogger("lassolab")

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("LASSOLAB_LOG", "quiet").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _index_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from exc
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("indices are 1-based")
    return vals


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from exc


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _write_csv(rows: list[dict], path: str):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _summary(msg: str, args):
    # keep stdout clean when the JSON itself goes there
    stream = sys.stderr if getattr(args, "out", None) is None else sys.stdout
    print(msg, file=stream)


def _load_design(args) -> dm.DesignMatrix:
    if not args.design:
        raise InputError("--design is required")
    return dm.read_csv(args.design, rescale=args.rescale)


def _signal(args, design) -> np.ndarray:
    if args.f0:
        f0 = np.loadtxt(args.f0, delimiter=",", ndmin=1)
        if f0.shape != (design.n,):
            raise InputError(f"f0 must have {design.n} entries")
        return f0
    if args.beta0:
        b = np.asarray(args.beta0, dtype=float)
        if b.shape != (design.p,):
            raise InputError(f"--beta0 needs {design.p} entries")
        return design.X @ b
    raise InputError("give --beta0 or --f0")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    params = {k: v for k, v in (("r", args.r), ("blocks", args.blocks), ("jitter", args.jitter),
                                ("m", args.m), ("C", args.C)) if v is not None}
    d = dm.generate(args.kind, args.n, args.p, params, args.seed)
    if not args.out:
        raise InputError("--out is required for gen")
    dm.write_csv(d, args.out)
    print(f"gen: wrote {args.kind} design n={d.n} p={d.p} to {args.out}")
    return 0


def cmd_diag(args) -> int:
    d = _load_design(args)
    S = zero_based(args.S)
    rep = geometry.geometry_report(d, S, args.L, seed=args.seed)
    _write(dumps(rep.to_dict()), args.out)
    _summary(f"diag: phi2={rep.phi2:.6g} lambda1_min2={rep.lambda1_min2:.6g} "
             f"lambda_min2={rep.lambda_min2:.6g} phi2_re<={rep.phi2_re:.6g}", args)
    return 0


def cmd_cover(args) -> int:
    d = _load_design(args)
    prof = covering.covering_profile(d, args.radii, include_signs=args.signs, max_points=args.max_points)
    _write(dumps(prof.to_dict()), args.out)
    if args.csv:
        rows = [{"radius": r, "packing": pk, "covering_upper": cu,
                 "covering_exact": "" if prof.covering_exact is None else prof.covering_exact[i]}
                for i, (r, pk, cu) in enumerate(zip(prof.radii, prof.packing_sizes, prof.covering_upper))]
        _write_csv(rows, args.csv)
    _summary(f"cover: {prof.n_points} points, packing sizes {prof.packing_sizes}", args)
    return 0


def cmd_entropy(args) -> int:
    d = _load_design(args)
    noise = NoiseModel(args.noise, args.sigma, args.K if args.noise == "gaussian" else None)
    if args.alpha is not None and args.A is not None:
        alpha, A = args.alpha, args.A
    else:
        alpha, A = entropy.polynomial_alpha_A(args.source, d.n, args.constant, m=args.m, W=args.W)
    params = entropy.EntropyBoundParams(alpha=alpha, A=A, K=noise.K_cert, sigma0=noise.sigma0, t=args.t, n=d.n)
    prof = covering.covering_profile(d, include_signs=True, max_points=args.max_points)
    rows = entropy.entropy_table(d.spectrum, prof, args.deltas, d.n)
    out = {"schema": 1, "constants": params.to_dict(), "failure_bound": params.failure_bound, "table": rows}
    _write(dumps(out), args.out)
    if args.csv:
        _write_csv(rows, args.csv)
    _summary(f"entropy: alpha={alpha:.6g} A={A:.6g} lambda0={params.lambda0:.6g} B={params.B:.6g}", args)
    return 0


def cmd_lasso(args) -> int:
    d = _load_design(args)
    if args.y:
        y = np.loadtxt(args.y, delimiter=",", ndmin=1)
    else:
        noise = NoiseModel(args.noise, args.sigma)
        y = _signal(args, d) + draw_noise(noise, d.n, args.seed)
    if args.lam is None:
        raise InputError("--lambda is required")
    res = lasso.fit(d, y, args.lam)
    out = {
        "schema": 1,
        "lambda": res.lam,
        "beta_hat": res.beta_hat.tolist(),
        "support": [int(j) + 1 for j in np.flatnonzero(res.beta_hat)],
        "objective": res.objective,
        "kkt_residual": res.kkt_residual,
        "iterations": res.iterations,
        "converged": res.converged,
    }
    _write(dumps(out), args.out)
    _summary(f"lasso: {len(out['support'])} nonzeros, kkt={res.kkt_residual:.3g}, converged={res.converged}", args)
    return 0


def cmd_oracle(args) -> int:
    d = _load_design(args)
    f0 = _signal(args, d)
    S = zero_based(args.S)
    if args.lambda0 is None:
        raise InputError("--lambda0 is required")
    kind, _ = parse_rule(args.lambda_rule)
    lam, part = select_lambda(d, f0, S, args.lambda_rule, args.lambda0, args.alpha, args.c)
    if args.S1 is not None:
        part = geometry.SupportPartition.from_S1(S, zero_based(args.S1))
    rep = oracle.theorem_rhs(d, f0, part, lam, args.lambda0, args.alpha, rule=kind, c=args.c)
    _write(dumps(rep.to_dict()), args.out)
    _summary(f"oracle: lambda={lam:.6g} rhs_total={rep.rhs_total:.6g}", args)
    return 0


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        if not args.design:
            raise InputError("give --config or --design")
        cfg = ExperimentConfig(design={"path": args.design, "rescale": args.rescale})
        cfg.S = args.S
        if args.beta0 is not None:
            cfg.beta0 = args.beta0
    for key, val in (("alpha", args.alpha), ("lambda_rule", args.lambda_rule), ("c", args.c),
                     ("draws", args.draws), ("seed", args.seed), ("threads", args.threads)):
        if val is not None:
            setattr(cfg, key, val)
    if args.lambda0 is not None:
        cfg.lambda0 = args.lambda0
    return cfg


def cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    rep = run_verify(cfg)
    out = args.out or cfg.out
    _write(dumps(rep.to_dict()), out)
    if args.csv:
        _write_csv(rep.records, args.csv)
    v = rep.aggregates["violations_given_certificate"]
    print(f"verify: {rep.draws} draws, {rep.aggregates['certified_draws']} certified, {v} violations",
          file=sys.stdout if out else sys.stderr)
    return 0 if v == 0 else 1


def cmd_probcheck(args) -> int:
    cfg = _config_from_args(args)
    rep = run_probcheck(cfg)
    out = args.out or cfg.out
    _write(dumps(rep), out)
    print(f"probcheck: failure frequency {rep['failure_frequency']:.6g} at lambda0={rep['lambda0']:.6g}"
          + (f", bound {rep['bound']:.6g}" if rep["bound"] is not None else ""),
          file=sys.stdout if out else sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _lambda0_arg(text: str):
    if text in ("per_draw", "theoretical", "pilot"):
        return text
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lambda0 {text!r}") from exc
    if not v > 0:
        raise argparse.ArgumentTypeError("lambda0 must be positive")
    return v


def _rule_arg(text: str) -> str:
    try:
        parse_rule(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lassolab", description="Lasso oracle-inequality toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, design=True):
        if design:
            p.add_argument("--design", help="design CSV (n rows, p columns)")
            p.add_argument("--rescale", action="store_true", help="shrink columns with norm > 1")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="generate a synthetic design")
    common(p, design=False)
    p.add_argument("--kind", required=True, choices=dm.FAMILIES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--r", type=float)
    p.add_argument("--blocks", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--m", type=float)
    p.add_argument("--C", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("diag", help="compatibility and eigenvalue diagnostics for S")
    common(p)
    p.add_argument("--S", type=_index_list, required=True)
    p.add_argument("--L", type=float, default=6.0)
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser("cover", help="packing, covering and decorrelation numbers")
    common(p)
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--signs", action="store_true", help="use the signed point set")
    p.add_argument("--max-points", type=int, default=12)
    p.add_argument("--csv", help="also write radius,packing,covering_upper,covering_exact")
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("entropy", help="entropy bounds and lambda0 constants")
    common(p)
    p.add_argument("--source", choices=("eigen", "cover"), default="eigen")
    p.add_argument("--m", type=float)
    p.add_argument("--W", type=float)
    p.add_argument("--constant", type=float, default=1.0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--A", type=float)
    p.add_argument("--noise", choices=("gaussian", "bounded_uniform", "rademacher"), default="gaussian")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--K", type=float)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--deltas", type=_float_list, default=[0.1, 0.25, 0.5])
    p.add_argument("--max-points", type=int, default=12)
    p.add_argument("--csv", help="also write delta,eigen_bound,cover_bound,below_1_over_n")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("lasso", help="fit the Lasso")
    common(p)
    p.add_argument("--y", help="response CSV (one value per line)")
    p.add_argument("--beta0", type=_float_list)
    p.add_argument("--f0", help="signal CSV (one value per line)")
    p.add_argument("--noise", choices=("gaussian", "bounded_uniform", "rademacher"), default="gaussian")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float)
    p.set_defaults(func=cmd_lasso)

    p = sub.add_parser("oracle", help="evaluate the oracle-inequality right-hand side")
    common(p)
    p.add_argument("--beta0", type=_float_list)
    p.add_argument("--f0")
    p.add_argument("--S", type=_index_list, required=True)
    p.add_argument("--S1", type=_index_list, help="split to report (default: the rule's split)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lambda-rule", type=_rule_arg, default="classic")
    p.add_argument("--c", type=float, default=1.0)
    p.set_defaults(func=cmd_oracle)

    for name, func, helptext in (("verify", cmd_verify, "Monte Carlo check of the oracle inequality"),
                                 ("probcheck", cmd_probcheck, "Monte Carlo check of the noise-event probability")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="experiment JSON")
        p.add_argument("--design")
        p.add_argument("--rescale", action="store_true")
        p.add_argument("--out")
        p.add_argument("--csv", help="per-draw records as CSV (verify only)")
        p.add_argument("--S", type=_index_list, default=[1])
        p.add_argument("--beta0", type=_float_list)
        p.add_argument("--alpha", type=float)
        p.add_argument("--lambda0", type=_lambda0_arg)
        p.add_argument("--lambda-rule", type=_rule_arg)
        p.add_argument("--c", type=float)
        p.add_argument("--draws", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.set_defaults(func=func)
    return ap


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    log.debug("running %s", args.command)
    try:
        return args.func(args)
    except LassoLabError as exc:
        print(f"lassolab {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"lassolab {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
