"""Command-line interface: ``kroncov {estimate,simulate,phase,diagnose}``.

Exit codes: 0 success/converged, 2 parse or config error, 3 rank failure,
4 no convergence within ``--max-iters``, 5 divergence towards the boundary.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .diagnostics import (
    MODES,
    discriminant_2x2,
    is_degenerate_2x2,
    multistart_uniqueness,
    rank_necessary_check,
    threshold_verdict,
    zeta_2x2,
)
from .exceptions import DimensionMismatch, RankDeficientUpdate, SampleFileError, ZeroSample
from .experiment import load_config, phase_csv, run_phase
from .gaussian import DEFAULT_MAX_ITERS, KroneckerPair, gff_estimate
from .io import dump_json, format_samples, read_samples, result_record
from .linalg import SpdMatrix, kron, random_spd
from .robust import DEFAULT_MAX_ITERS as RFF_MAX_ITERS
from .robust import rff_estimate
from .sampling import MatrixNormalParams, parse_tail, sample_elliptical, sample_matrix_normal

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_RANK = 3
EXIT_MAX_ITERS = 4
EXIT_BOUNDARY = 5

STATUS_EXIT = {"converged": EXIT_OK, "max_iters": EXIT_MAX_ITERS, "diverged_to_boundary": EXIT_BOUNDARY}


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _fail(msg: str, code: int) -> int:
    print(f"kroncov: error: {msg}", file=sys.stderr)
    return code


def cmd_estimate(args) -> int:
    try:
        x = read_samples(args.input)
    except (OSError, SampleFileError, DimensionMismatch) as exc:
        return _fail(str(exc), EXIT_PARSE)
    if args.estimator == "rff" and args.mean_mode != "known_zero":
        return _fail("rff requires --mean-mode known_zero", EXIT_PARSE)

    norm = "spectral_both" if args.estimator == "rff" else "spectral_p"
    if args.init == "random":
        rng = np.random.default_rng(args.seed)
        init = KroneckerPair(SpdMatrix(random_spd(x.p, rng)), SpdMatrix(random_spd(x.q, rng))).normalized(norm)
    else:
        init = KroneckerPair.identity(x.p, x.q, norm)
    try:
        if args.estimator == "rff":
            res = rff_estimate(x, init=init, tol=args.tol, max_iters=args.max_iters or RFF_MAX_ITERS)
        else:
            known = np.zeros((x.p, x.q)) if args.mean_mode == "known_zero" else None
            res = gff_estimate(x, init=init, known_mean=known, tol=args.tol, max_iters=args.max_iters or DEFAULT_MAX_ITERS)
    except RankDeficientUpdate as exc:
        return _fail(f"{exc}; too few samples for p={x.p}, q={x.q}, n={x.n}", EXIT_RANK)
    except ZeroSample as exc:
        return _fail(str(exc), EXIT_PARSE)

    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("iteration", "objective"))
        for i, v in enumerate(res.objective_trace, 1):
            w.writerow((i, repr(v)))
        text = buf.getvalue()
    else:
        text = dump_json(result_record(res, args.estimator, args.mean_mode, x.n))
    _emit(text, args.out)
    code = STATUS_EXIT[res.status]
    if code:
        print(f"kroncov: estimator stopped with status {res.status} (residual {res.residual:.3e})", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    try:
        tail, nu = parse_tail(args.model)
    except ValueError as exc:
        return _fail(str(exc), EXIT_PARSE)
    if min(args.p, args.q, args.n) < 1:
        return _fail("p, q and n must be positive", EXIT_PARSE)
    if args.factors == "random":
        rng = np.random.default_rng(np.random.SeedSequence((args.seed, 1)))
        P0, Q0 = SpdMatrix(random_spd(args.p, rng)), SpdMatrix(random_spd(args.q, rng))
    else:
        P0, Q0 = SpdMatrix(np.eye(args.p)), SpdMatrix(np.eye(args.q))
    if tail == "gaussian":
        x = sample_matrix_normal(MatrixNormalParams.centered(P0, Q0), args.n, args.seed)
    else:
        x = sample_elliptical(kron(P0, Q0), tail, args.n, args.seed, args.p, args.q, nu=nu)
    comment = f"model={args.model} factors={args.factors} seed={args.seed}"
    _emit(format_samples(x, comment), args.out)
    return EXIT_OK


def cmd_phase(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        return _fail(str(exc), EXIT_PARSE)
    except SampleFileError as exc:
        return _fail(str(exc), EXIT_PARSE)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if args.starts is not None:
        overrides["k_starts"] = args.starts
    if overrides:
        try:
            cfg = type(cfg).from_dict({**cfg.to_dict(), **overrides})
        except ValueError as exc:
            return _fail(f"invalid config: {exc}", EXIT_PARSE)
    rows, _ = run_phase(cfg, workers=args.workers)
    _emit(phase_csv(rows), args.out)
    return EXIT_OK


def diagnose_report(x, starts=None, seed=0) -> dict:
    rep = {"p": x.p, "q": x.q, "n": x.n, "modes": {}}
    for mode in MODES:
        v = threshold_verdict(x.p, x.q, x.n, mode)
        entry = {
            "regime": v.regime,
            "lower": v.lower,
            "upper": v.upper,
            "rank_check": rank_necessary_check(x, mode),
        }
        if starts:
            try:
                r = multistart_uniqueness(x, mode, k_starts=starts, seed=seed)
                entry["multistart"] = r.verdict if r.cluster_count else "rank_fail"
            except ZeroSample:
                entry["multistart"] = "zero_sample"
        rep["modes"][mode] = entry
    if x.p == 2 and x.q == 2 and x.n == 2:
        rep["discriminant"] = discriminant_2x2(x[0], x[1])
        rep["zeta"] = zeta_2x2(x)
        # known-mean prediction from the sign of D; too close to 0 to call
        if is_degenerate_2x2(x[0], x[1]):
            rep["d_prediction"] = "inconclusive"
        else:
            rep["d_prediction"] = "unique" if rep["discriminant"] < 0 else "non_unique"
    return rep


def _format_diagnose(rep: dict) -> str:
    lines = [f"p={rep['p']} q={rep['q']} n={rep['n']}"]
    for mode, e in rep["modes"].items():
        line = (
            f"{mode}: regime={e['regime']} lower={e['lower']:.6g} upper={e['upper']:.6g} "
            f"rank_check={'true' if e['rank_check'] else 'false'}"
        )
        if "multistart" in e:
            line += f" multistart={e['multistart']}"
        lines.append(line)
    if "discriminant" in rep:
        lines.append(f"D={rep['discriminant']!r}")
        lines.append(f"zeta={rep['zeta']}")
        lines.append(f"d_prediction={rep['d_prediction']}")
    return "\n".join(lines) + "\n"


def cmd_diagnose(args) -> int:
    try:
        x = read_samples(args.input)
    except (OSError, SampleFileError, DimensionMismatch) as exc:
        return _fail(str(exc), EXIT_PARSE)
    rep = diagnose_report(x, starts=args.starts, seed=args.seed or 0)
    _emit(dump_json(rep) if args.format == "record" else _format_diagnose(rep), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kroncov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="fit Kronecker factors to a sample file")
    p.add_argument("input")
    p.add_argument("--estimator", choices=("gff", "rff"), default="gff")
    p.add_argument("--mean-mode", choices=("known_zero", "unknown"), default=None)
    p.add_argument("--init", choices=("identity", "random"), default="identity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("record", "csv"), default="record")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="write a synthetic sample file")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--model", default="matrix_normal", help="matrix_normal, race or student_t(nu)")
    p.add_argument("--factors", choices=("identity", "random"), default="identity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("phase", help="Monte Carlo uniqueness frequencies over n (CSV)")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--starts", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("diagnose", help="threshold, rank and 2x2 diagnostics for a sample file")
    p.add_argument("input")
    p.add_argument("--starts", type=int, default=None, help="also run a multistart probe with this many starts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("text", "record"), default="text")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "estimate" and args.mean_mode is None:
        args.mean_mode = "known_zero" if args.estimator == "rff" else "unknown"
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
