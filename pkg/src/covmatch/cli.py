"""Command-line front-end.

Commands write CSV to standard output and diagnostics to standard error.
Exit codes: 0 success, 2 usage error, 3 data or file error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from covmatch import theory
from covmatch.errors import CovmatchError, ParameterError
from covmatch.experiment import ExperimentSweep, SimulationConfig, build_covariances, run_sweep
from covmatch.featureio import read_features, read_vector
from covmatch.selection import METHODS, covariance_shift, mean_shift, select

SWEEP_FLAGS = {"cos-phi": "cos_phi", "rho-s": "rho_s", "eta": "eta_scale", "ns": "n_s"}


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _floats(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _method(text: str) -> str:
    name = text.replace("-", "_")
    if name not in METHODS:
        raise argparse.ArgumentTypeError(
            f"unknown method {text!r}; choose from {', '.join(m.replace('_', '-') for m in METHODS)}"
        )
    return name


def _pca_dim(text: str):
    if text.lower() in ("none", "0"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"PCA dimension must be an integer or 'none', got {text!r}") from None


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------


def cmd_simulate(args) -> str:
    base = SimulationConfig(
        regime=args.regime,
        p=args.p,
        n_t=args.nt,
        n_s=args.ns,
        rho_t=args.rho_t,
        rho_s=args.rho_s,
        mu_scale=args.mu_scale,
        cos_phi=args.cos_phi,
        eta_scale=args.eta,
        sigma=args.sigma,
        beta_radius=args.beta_radius,
        identity_cov=args.identity_cov,
        zero_mean=args.zero_mean,
        trace_scale=not args.no_trace_scale,
        resample_beta=args.resample_beta,
    )
    parameter = SWEEP_FLAGS[args.sweep]
    grid = args.grid if args.grid is not None else [getattr(base, parameter)]
    sweep = ExperimentSweep(parameter, tuple(grid), base, args.trials, args.seed)
    return run_sweep(sweep, workers=args.workers, theory_only=args.theory_only).to_csv()


# ----------------------------------------------------------------------------
# solve
# ----------------------------------------------------------------------------


def _solve_spectra(args, regime: str):
    """Return ``(lambda_s, lambda_t)`` for ``over`` or the M-spectrum for ``under``."""
    p = args.p
    if args.identity_spectrum:
        if p is None:
            raise ParameterError("--identity-spectrum needs --p")
        return (np.ones(p), np.ones(p)) if regime == "over" else np.ones(p)
    if regime == "under" and args.lam is not None:
        lam = np.array(args.lam)
        if p is not None and p != lam.size:
            raise ParameterError(f"--p {p} disagrees with {lam.size} eigenvalues")
        return lam
    if regime == "over" and (args.lambda_s is not None or args.lambda_t is not None):
        if args.lambda_s is None or args.lambda_t is None:
            raise ParameterError("over regime needs both --lambda-s and --lambda-t")
        ls, lt = np.array(args.lambda_s), np.array(args.lambda_t)
        if ls.size != lt.size or (p is not None and p != ls.size):
            raise ParameterError("eigenvalue lists and --p disagree in length")
        return ls, lt
    if p is None:
        raise ParameterError("give --p with KMS parameters, or an explicit spectrum")
    config = SimulationConfig(
        regime=regime, p=p, n_t=0, n_s=0, rho_t=args.rho_t, rho_s=args.rho_s,
        trace_scale=not args.no_trace_scale,
    )
    cov_t, cov_s = build_covariances(config)
    if regime == "under":
        return theory.m_spectrum(cov_s, cov_t)
    return np.diag(cov_s.matrix).copy(), np.diag(cov_t.matrix).copy()


def cmd_solve(args) -> str:
    rows = []
    if args.regime == "under":
        lam = _solve_spectra(args, "under")
        fp = theory.solve_under_fixed_point(lam, args.n, args.ns)
        risk = args.sigma**2 / args.n * float(np.sum(1.0 / (lam * fp.alpha1 + fp.alpha2)))
        rows += [("alpha1", fp.alpha1), ("alpha2", fp.alpha2), ("risk", risk),
                 ("residual", fp.residual), ("boundary", fp.boundary)]
    else:
        ls, lt = _solve_spectra(args, "over")
        spectral = theory.SpectralData.sphere_average(ls, lt, args.beta_radius)
        fp = theory.solve_over_fixed_point(spectral, args.n, args.ns)
        risk = theory.risk_over_from_fixed_point(spectral, fp, args.n, args.sigma)
        rows += [(name, getattr(fp, name)) for name in ("a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4")]
        rows += [("V", risk.v), ("B", risk.b), ("total", risk.total)]
        rows += [(f"residual{i + 1}", r) for i, r in enumerate(fp.residuals)]
    return "name,value\n" + "".join(f"{name},{_fmt(value)}\n" for name, value in rows)


# ----------------------------------------------------------------------------
# select / metrics
# ----------------------------------------------------------------------------


def cmd_select(args) -> str:
    real = read_features(args.real)
    pool = read_features(args.pool)
    reference = read_vector(args.ref_vector) if args.ref_vector else None
    result = select(args.method, real, pool, args.k, args.pca_dim, args.seed, reference, args.n_t)
    lines = ["rank,index,id,objective"]
    for rank, (index, value) in enumerate(zip(result.indices, result.objective_trace)):
        lines.append(f"{rank},{int(index)},{pool.ids[index]},{_fmt(value)}")
    if args.metrics:
        chosen = pool.data[result.indices]
        lines.append(f"# covariance_shift={_fmt(covariance_shift(chosen, real))}")
        lines.append(f"# mean_shift={_fmt(mean_shift(chosen, real))}")
    return "\n".join(lines) + "\n"


def cmd_metrics(args) -> str:
    a, b = read_features(args.a), read_features(args.b)
    return (
        "metric,value\n"
        f"covariance_shift,{_fmt(covariance_shift(a, b))}\n"
        f"mean_shift,{_fmt(mean_shift(a, b))}\n"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo risk against its deterministic equivalent")
    sim.add_argument("--regime", choices=("under", "over", "synthetic-only"), default="under")
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--nt", type=int, default=0)
    sim.add_argument("--ns", type=int, required=True)
    sim.add_argument("--rho-t", type=float, default=0.9)
    sim.add_argument("--rho-s", type=float, default=0.5)
    sim.add_argument("--mu-scale", type=float, default=2.0, help="mean norms are mu_scale * sqrt(p)")
    sim.add_argument("--cos-phi", type=float, default=1.0)
    sim.add_argument("--eta", type=float, default=1.0, help="extra scale on Sigma_s")
    sim.add_argument("--sigma", type=float, default=1.0)
    sim.add_argument("--beta-radius", type=float, default=1.0)
    sim.add_argument("--identity-cov", action="store_true")
    sim.add_argument("--zero-mean", action="store_true")
    sim.add_argument("--no-trace-scale", action="store_true")
    sim.add_argument("--resample-beta", action="store_true")
    sim.add_argument("--sweep", choices=tuple(SWEEP_FLAGS), default="cos-phi")
    sim.add_argument("--grid", type=_floats)
    sim.add_argument("--trials", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--theory-only", action="store_true", help="skip Monte Carlo; empirical columns are nan")
    sim.set_defaults(handler=cmd_simulate)

    solve = sub.add_parser("solve", help="solve the fixed-point systems and print coefficients")
    solve.add_argument("--regime", choices=("under", "over"), default="under")
    solve.add_argument("--p", type=int)
    solve.add_argument("--n", type=int, required=True)
    solve.add_argument("--ns", type=int, required=True)
    solve.add_argument("--identity-spectrum", action="store_true")
    solve.add_argument("--lambda", dest="lam", type=_floats, help="eigenvalues of M^T M (under)")
    solve.add_argument("--lambda-s", type=_floats)
    solve.add_argument("--lambda-t", type=_floats)
    solve.add_argument("--rho-s", type=float, default=0.5)
    solve.add_argument("--rho-t", type=float, default=0.9)
    solve.add_argument("--no-trace-scale", action="store_true")
    solve.add_argument("--sigma", type=float, default=1.0)
    solve.add_argument("--beta-radius", type=float, default=1.0)
    solve.set_defaults(handler=cmd_solve)

    sel = sub.add_parser("select", help="select synthetic rows from a pool")
    sel.add_argument("--real", required=True)
    sel.add_argument("--pool", required=True)
    sel.add_argument("--method", type=_method, required=True)
    sel.add_argument("--k", type=int, required=True)
    sel.add_argument("--pca-dim", type=_pca_dim, default=32)
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--ref-vector")
    sel.add_argument("--n-t", type=int, help="training-set size for alpha matching (default: real rows)")
    sel.add_argument("--metrics", action="store_true")
    sel.set_defaults(handler=cmd_select)

    met = sub.add_parser("metrics", help="covariance and mean shift between two feature files")
    met.add_argument("--a", required=True)
    met.add_argument("--b", required=True)
    met.set_defaults(handler=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        output = args.handler(args)
    except CovmatchError as exc:
        print(f"covmatch {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    sys.stdout.write(output)
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
