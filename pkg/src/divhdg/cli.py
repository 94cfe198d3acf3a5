"""Command-line entry point: benchmark sweeps and the verification suite.

Examples::

    divhdg-bench --problem cavity --k 2 --inv-h 8 --inv-h 16 \\
        --tau 0 --tau 1 --tau 100 --format md
    divhdg-bench --problem elast-steady --inv-lambda 1e-4 --lambda inf
    divhdg-bench --verify small
"""

import argparse
import sys

from .bench import ExperimentGrid, emit, run_grid
from .verify import run_verification


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="divhdg-bench",
        description="Iteration-count sweeps and dense verification for the "
        "divergence-conforming HDG saddle point solver.",
    )
    p.add_argument(
        "--problem",
        choices=["cavity", "step", "elast-steady", "elast-unsteady"],
        default="cavity",
    )
    p.add_argument("--k", type=int, default=2, help="polynomial degree")
    p.add_argument(
        "--inv-h",
        type=int,
        action="append",
        default=None,
        help="mesh refinement 1/h (repeatable)",
    )
    p.add_argument("--mu", type=float, default=1.0, help="viscosity")
    p.add_argument(
        "--tau",
        type=float,
        action="append",
        default=None,
        help="reaction coefficient (repeatable)",
    )
    p.add_argument(
        "--inv-lambda",
        type=float,
        action="append",
        default=None,
        help="inverse compressibility 1/lambda (repeatable)",
    )
    p.add_argument(
        "--lambda",
        dest="lam",
        action="append",
        default=None,
        metavar="LAMBDA",
        help="compressibility lambda; 'inf' selects the incompressible "
        "limit (same as --inv-lambda 0); repeatable",
    )
    p.add_argument("--alpha", type=float, default=8.0, help="penalty scale")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--maxit", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    p.add_argument("--out", default=None, metavar="PATH")
    p.add_argument(
        "--verify",
        choices=["small", "full"],
        default=None,
        help="run the dense verification suite instead of a sweep",
    )
    p.add_argument("--schur-mode", choices=["exact", "approx"], default="exact")
    p.add_argument(
        "--smoother", choices=["patch-sgs", "jacobi"], default="patch-sgs"
    )
    p.add_argument(
        "--allow-large",
        action="store_true",
        help="permit mesh sizes past the desk-scale caps",
    )
    return p


def _inv_lambdas(args) -> list:
    vals = list(args.inv_lambda or [])
    for lam in args.lam or []:
        if str(lam).strip().lower() in ("inf", "infinity"):
            vals.append(0.0)
        else:
            x = float(lam)
            if x <= 0.0:
                raise ValueError("--lambda must be positive or 'inf'")
            vals.append(1.0 / x)
    return vals or [0.0]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.verify is not None:
        return run_verification(args.verify)

    inv_hs = args.inv_h or ([8, 16, 32, 64] if args.k <= 2 else [8, 16, 32])
    grid = ExperimentGrid(
        problem=args.problem,
        ks=[args.k],
        inv_hs=inv_hs,
        mus=[args.mu],
        taus=list(args.tau or [0.0]),
        inv_lambdas=_inv_lambdas(args),
        alpha=args.alpha,
        tol=args.tol,
        maxit=args.maxit,
        seed=args.seed,
        fmt=args.format,
        schur_mode=args.schur_mode,
        smoother=args.smoother,
        allow_large=args.allow_large,
    )
    text = emit(run_grid(grid), args.format)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
