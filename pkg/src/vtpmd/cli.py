"""Command-line entry point: ``vtpmd <subcommand> ...`` (or ``python -m vtpmd``).

Exit codes: 0 success, 1 operation error, 2 bad arguments.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, decomp
from .cifar import load_cifar10
from .compress import compress_model, prune_report
from .decomp import EnergyFraction, FixedRank, FullRank
from .errors import VtpmdError
from .pipeline import evaluate, fit_model_scores, rng_for, seed_from_env
from .prune_model import prune_model
from .scorefit import DEFAULT_ITERS, DEFAULT_LAMBDA
from .vit import PRESETS, init_model
from .weights import (
    load_scores,
    load_tensors,
    load_weights,
    save_scores,
    save_tensors,
    save_weights,
)


def _write_report(path, report):
    text = json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def cmd_init(args):
    cfg = PRESETS[args.preset]
    model = init_model(cfg, rng_for(seed_from_env(), 0))
    save_weights(model, args.out, args.dtype)


def _factor_tensors(name, method, A, rank_tol):
    if method == "svd":
        f = decomp.svd(A)
        return {"U": f.U, "sigma": f.sigma, "V": f.V}
    if method == "qr":
        f = decomp.qr_full(A)
        return {"Q": f.Q, "R": f.R}
    if method == "qrp":
        f = decomp.qr_pivoted(A, rank_tol)
        return {"Q": f.Q, "R1": f.R1, "S": f.S, "perm": f.perm, "rank": np.array([f.rank])}
    if method == "cod":
        f = decomp.cod(A, rank_tol)
        return {"Q": f.Q, "L": f.L, "U": f.U, "rank": np.array([f.rank])}
    if method == "lu":
        f = decomp.lu(A)
        return {"perm": f.perm, "L": f.L, "U": f.U}
    if method == "chol":
        return {"R": decomp.cholesky(A).R}
    raise ValueError(method)


def cmd_decompose(args):
    t = load_tensors(args.inp)
    if args.tensor not in t:
        raise VtpmdError(f"no tensor {args.tensor!r} in {args.inp}")
    A = t[args.tensor]
    if A.ndim != 2:
        raise VtpmdError(f"tensor {args.tensor!r} is {A.ndim}-D, need a matrix")
    factors = _factor_tensors(args.tensor, args.method, A, args.rank_tol)
    save_tensors(args.out, {f"{args.tensor}.{k}": v for k, v in factors.items()})


def cmd_fit_scores(args):
    model = load_weights(args.model)
    calib = None
    if args.calib:
        calib = {k[len("calib."):]: v for k, v in load_tensors(args.calib).items()
                 if k.startswith("calib.")}
    scores = fit_model_scores(model, args.lam, args.iters, calib, seed_from_env())
    save_scores(args.out, scores)


def _scope(s):
    return "global" if s == "global" else "per-layer"


def cmd_prune(args):
    model = load_weights(args.model)
    scores = load_scores(args.scores)
    pruned, _ = prune_model(model, scores, args.rate, _scope(args.scope))
    save_weights(pruned, args.out)
    if args.report:
        _write_report(args.report, prune_report(model, pruned, args.rate, Path(args.model).stem))


def cmd_compress(args):
    model = load_weights(args.model)
    scores = load_scores(args.scores) if args.scores else None
    if scores is None and args.rate > 0:
        raise VtpmdError("--scores is required when --rate > 0")
    if args.rank is not None:
        policy = FixedRank(args.rank)
    elif args.energy is not None:
        policy = EnergyFraction(args.energy)
    else:
        policy = FullRank()
    out, report = compress_model(model, scores, args.rate, args.method, policy,
                                 _scope(args.scope), Path(args.model).stem, args.jobs)
    save_weights(out, args.out)
    if args.report:
        _write_report(args.report, report)


def cmd_eval(args):
    model = load_weights(args.model)
    res = evaluate(model, load_cifar10(args.data), args.limit, jobs=args.jobs)
    print(f"accuracy {res['accuracy']:.6f} n {res['n']}")


def lstsq_problem(kind, m, n, eps, seed):
    rng = rng_for(seed, 2)
    if kind == "lauchli":
        A = decomp.lauchli(n, eps)
    else:
        A = rng.standard_normal((m, n))
    x = rng.standard_normal(n)
    return A, A @ x


def cmd_lstsq_bench(args):
    A, b = lstsq_problem(args.kind, args.m, args.n, args.eps, seed_from_env())
    ref = decomp.exact_lstsq(A, b)
    rep = decomp.lstsq_compare(A, b, ref, repeats=args.repeats)
    if args.json:
        d = {"kind": args.kind, "eps": args.eps, **rep.to_dict()}
        print(json.dumps(d, indent=2))
        return
    print(f"{args.kind} {A.shape[0]}x{A.shape[1]}  eps={args.eps:g}")
    print(f"{'method':<18}{'rel. error':>14}{'residual':>14}{'time [s]':>12}")
    for meth, r in rep.results.items():
        if r.failure:
            print(f"{meth:<18}{'FAILED':>14}{'-':>14}{r.wall_time:>12.2e}  {r.failure}")
        else:
            print(f"{meth:<18}{r.solution_error:>14.3e}{r.residual_norm:>14.3e}{r.wall_time:>12.2e}")


def format_report(d):
    cols = ["name", "shape_before", "shape_after", "rank", "params_before", "params_after",
            "flops_before", "flops_after", "rel_err"]

    def cell(row, c):
        v = row.get(c)
        if v is None:
            return "-"
        if isinstance(v, list):
            return "x".join(str(x) for x in v)
        if c == "rel_err":
            return f"{v:.3e}"
        return str(v)

    rows = [[cell(r, c) for c in cols] for r in d["layers"]]
    tot = d["totals"]
    rows.append(["TOTAL", "", "", ""] + [str(tot[c]) for c in cols[4:8]] + [""])
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    lines = [f"model {d['model_name']}  rate {d['rate']}  method {d['method']}  policy {d['policy']}",
             "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cols, widths)))]
    for r in rows:
        lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def cmd_report(args):
    d = json.loads(Path(args.inp).read_text(encoding="utf-8"))
    print(format_report(d))


def build_parser():
    p = argparse.ArgumentParser(prog="vtpmd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("init", help="write a randomly initialised model (seeded by VTPMD_SEED)")
    s.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    s.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_init)

    s = sub.add_parser("decompose", help="factor one tensor of a container")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--tensor", required=True)
    s.add_argument("--method", choices=["svd", "qr", "qrp", "cod", "lu", "chol"], required=True)
    s.add_argument("--rank-tol", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_decompose)

    s = sub.add_parser("fit-scores", help="fit L1-sparsified importance scores per prunable site")
    s.add_argument("--model", required=True)
    s.add_argument("--calib", default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    s.add_argument("--iters", type=int, default=DEFAULT_ITERS)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fit_scores)

    s = sub.add_parser("prune", help="prune a model by its importance scores")
    s.add_argument("--model", required=True)
    s.add_argument("--scores", required=True)
    s.add_argument("--rate", type=float, required=True)
    s.add_argument("--scope", choices=["global", "per-layer"], default="per-layer")
    s.add_argument("--out", required=True)
    s.add_argument("--report", default=None)
    s.set_defaults(fn=cmd_prune)

    s = sub.add_parser("compress", help="prune, then factor every block projection")
    s.add_argument("--model", required=True)
    s.add_argument("--scores", default=None)
    s.add_argument("--rate", type=float, default=0.0)
    s.add_argument("--scope", choices=["global", "per-layer"], default="per-layer")
    s.add_argument("--method", choices=["svd", "qrp", "lu"], default="svd")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--rank", type=int, default=None)
    g.add_argument("--energy", type=float, default=None)
    g.add_argument("--full", action="store_true", help="keep every component (default)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--report", default=None)
    s.set_defaults(fn=cmd_compress)

    s = sub.add_parser("eval", help="top-1 accuracy on a CIFAR-10 binary batch")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--limit", type=int, default=10000)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("lstsq-bench", help="normal equations vs QR vs SVD on one least-squares problem")
    s.add_argument("--m", type=int, default=50)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--kind", choices=["random", "lauchli"], default="random")
    s.add_argument("--eps", type=float, default=1e-7)
    s.add_argument("--repeats", type=int, default=20)
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_lstsq_bench)

    s = sub.add_parser("report", help="print a JSON compression report as a table")
    s.add_argument("--in", dest="inp", required=True)
    s.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (VtpmdError, OSError, ValueError) as exc:
        print(f"vtpmd {args.cmd}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
