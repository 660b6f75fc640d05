"""Command-line interface: ``nlcap <command> [options]``.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration
error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import sweep
from .channel import REFERENCE_PARAMS, ChannelParams, to_fluctuation_coords
from .condpdf import (
    cond_entropy_pointwise,
    cond_entropy_pointwise_quadrature,
    cond_pdf_from_coords,
    cond_pdf_moments_leading,
    mean_shift_first_order,
)
from .errors import InvalidParameter, NlcapError, NonConvergence
from .inputopt import (
    asymptotic_large,
    delta_lambdas,
    p_opt_correction,
    p_opt_leading,
    solve_leading,
)
from .montecarlo import SimConfig, convergence_audit, default_n_steps, ensemble_stats

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3

UNITS = "units: power mW, gamma 1/(mW km), Q mW/km, L km, capacities nat/symbol"
SWEEP_HEADER = [
    "P_mW", "snr", "gamma_tilde", "C0_nat", "dC_nat", "dC_prime_nat",
    "C_total_nat", "lower_bound_nat", "u", "v", "flags",
]
PDF_HEADER = ["x0", "y0", "mu", "p0", "dp1", "dp2", "total", "flag"]
Z_LIMIT = 4.0


class ConfigError(Exception):
    """Bad command-line configuration; mapped to exit code 2."""


def _fmt(x) -> str:
    """17 significant digits, which round-trips binary64."""
    return format(float(x), ".17g")


def _params(args) -> ChannelParams:
    try:
        return ChannelParams(args.gamma, args.Q, args.L)
    except InvalidParameter as exc:
        raise ConfigError(f"invalid channel parameters: {exc}") from exc


def _header(params: ChannelParams) -> str:
    return (
        f"# gamma={params.gamma} 1/(mW km)  Q={params.noise_density_Q} mW/km  "
        f"L={params.length_L} km"
    )


def _emit(args, doc: dict, text: str):
    if args.json:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True, allow_nan=True)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(text)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


# capacity-sweep ------------------------------------------------------------


def cmd_capacity_sweep(args) -> int:
    params = _params(args)
    try:
        res = sweep(
            params,
            args.pmin,
            args.pmax,
            args.points,
            spacing="log" if args.log else "lin",
            allow_out_of_region=not args.strict_region,
        )
    except InvalidParameter as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for r in res.reports:
        rows.append(
            [_fmt(v) for v in (
                r.power_P, r.snr, r.gamma_tilde, r.c0, r.dC, r.dC_prime,
                r.c_total, r.lower_bound, r.u, r.v,
            )]
            + [";".join(r.flags)]
        )
    out = Path(args.output)
    _write_csv(out, SWEEP_HEADER, rows)
    lines = [_header(params)]
    ext = {}
    for name, e in (("min", res.minimum), ("max", res.maximum)):
        if e is None:
            continue
        ext[name] = {"P_mW": e.power_P, "gamma_tilde": e.gamma_tilde, "dC_prime_nat": e.dC_prime}
        lines.append(
            f"{name} dC_prime_nat={_fmt(e.dC_prime)} P_mW={_fmt(e.power_P)} "
            f"gamma_tilde={_fmt(e.gamma_tilde)}"
        )
    extrema_path = out.with_suffix(".extrema.txt")
    extrema_path.write_text("\n".join(lines) + "\n")
    doc = {
        "params": {"gamma": params.gamma, "Q": params.noise_density_Q, "L": params.length_L},
        "rows": [dict(zip(SWEEP_HEADER, row)) for row in rows],
        "extrema": ext,
        "csv": str(out),
        "failed": res.failed,
    }
    _emit(args, doc, "\n".join(lines[1:]) + f"\nwrote {out} and {extrema_path}\n")
    return EXIT_NONCONVERGENCE if res.failed else EXIT_OK


# pdf-eval ------------------------------------------------------------------


def _parse_complex_list(values, name):
    out = []
    for v in values:
        for item in v.split(","):
            item = item.strip()
            if not item:
                continue
            try:
                out.append(complex(item.replace(" ", "")))
            except ValueError as exc:
                raise ConfigError(f"{name}: cannot parse {item!r} as a complex number") from exc
    return out


def _read_pairs(path):
    X, Y = [], []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                X.append(complex(float(row["X_re"]), float(row["X_im"])))
                Y.append(complex(float(row["Y_re"]), float(row["Y_im"])))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return X, Y


def cmd_pdf_eval(args) -> int:
    params = _params(args)
    if args.input:
        X, Y = _read_pairs(args.input)
    else:
        X = _parse_complex_list(args.X or [], "--X")
        Y = _parse_complex_list(args.Y or [], "--Y")
    if len(X) == 1 and len(Y) > 1:
        X = X * len(Y)
    if not X or len(X) != len(Y):
        raise ConfigError("need matching, non-empty --X and --Y lists (or --input)")
    X = np.array(X)
    Y = np.array(Y)
    good = np.abs(X) > 0
    n = X.size
    cols = {k: np.full(n, math.nan) for k in PDF_HEADER[:-1]}
    flags = np.array(["error:zero_input"] * n, dtype=object)
    if good.any():
        c = to_fluctuation_coords(X[good], Y[good], params)
        v = cond_pdf_from_coords(c, params)
        fields = dict(zip(PDF_HEADER[:-1], (c.x0, c.y0, c.mu, v.p0, v.dp1, v.dp2, v.total)))
        for k, arr in fields.items():
            cols[k][good] = arr
        flags[good] = np.where(np.atleast_1d(v.flag), "1", "0")
    rows = [[_fmt(cols[k][i]) for k in PDF_HEADER[:-1]] + [flags[i]] for i in range(n)]
    if args.json:
        doc = {"params": {"gamma": params.gamma, "Q": params.noise_density_Q, "L": params.length_L},
               "rows": [dict(zip(PDF_HEADER, r)) for r in rows]}
        _emit(args, doc, "")
        if args.output not in (None, "-"):
            _write_csv(args.output, PDF_HEADER, rows)
    else:
        _write_csv(args.output, PDF_HEADER, rows)
    return EXIT_OK


# opt-input -----------------------------------------------------------------


def cmd_opt_input(args) -> int:
    params = _params(args)
    if (args.P is None) == (args.gamma_tilde is None):
        raise ConfigError("give exactly one of --P and --gamma-tilde")
    if args.P is not None:
        if args.P <= 0:
            raise ConfigError("--P must be > 0")
        P = args.P
        g = params.gamma_tilde(P)
    else:
        g = args.gamma_tilde
        if g < 0:
            raise ConfigError("--gamma-tilde must be >= 0")
        if g > 0 and params.gamma == 0:
            raise ConfigError("--gamma-tilde > 0 needs --gamma > 0")
        P = params.power_for_gamma_tilde(g) if g > 0 else 1.0
    sol = solve_leading(g)
    corr = delta_lambdas(P, params, sol)
    lines = [
        _header(params),
        f"P_mW={_fmt(P)} gamma_tilde={_fmt(g)} branch={sol.branch}",
        f"u=lambda0*P={_fmt(sol.u)}",
        f"v=pi*N0*P={_fmt(sol.v)}",
        f"delta_lambda1={_fmt(corr.dl1)}",
        f"delta_lambda2_per_mW={_fmt(corr.dl2)}",
        f"constraint_residual_0={_fmt(sol.residuals[0])}",
        f"constraint_residual_1={_fmt(sol.residuals[1])}",
        f"moment_residual_0={_fmt(corr.moment0_residual)}",
        f"moment_residual_2={_fmt(corr.moment2_residual)}",
    ]
    doc = {
        "P_mW": P, "gamma_tilde": g, "u": sol.u, "v": sol.v, "branch": sol.branch,
        "delta_lambda1": corr.dl1, "delta_lambda2": corr.dl2,
        "constraint_residuals": list(sol.residuals),
        "moment_residuals": [corr.moment0_residual, corr.moment2_residual],
    }
    if g >= 10:
        ua, va = asymptotic_large(g)
        log2 = math.log(g) ** 2
        eu, ev = (ua - sol.u) / sol.u, (va - sol.v) / sol.v
        lines.append(
            f"asymptotic u={_fmt(ua)} v={_fmt(va)} rel_err_u*log^2={_fmt(eu * log2)} "
            f"rel_err_v*log^2={_fmt(ev * log2)}"
        )
        doc["asymptotic"] = {"u": ua, "v": va, "rel_err_u": eu, "rel_err_v": ev,
                             "log2_gamma_tilde": log2}
    if args.output:
        rho = np.linspace(0.0, 6.0 * math.sqrt(P), args.grid_points)
        p0 = p_opt_leading(rho, P, params, sol)
        p1 = p_opt_correction(rho, P, params, sol, corr)
        _write_csv(args.output, ["rho", "p0_density", "p1_density"],
                   [[_fmt(a), _fmt(b), _fmt(c)] for a, b, c in zip(rho, p0, p1)])
        lines.append(f"wrote {args.output}")
        doc["csv"] = args.output
    _emit(args, doc, "\n".join(lines) + "\n")
    return EXIT_OK


# mc-validate ---------------------------------------------------------------


def _z(est, ref, se):
    return (est - ref) / se if se > 0 else (0.0 if est == ref else math.inf)


def cmd_mc_validate(args) -> int:
    params = _params(args)
    X = _parse_complex_list([args.X], "--X")[0]
    if X == 0:
        raise ConfigError("--X must be non-zero")
    rho = abs(X)
    mu = params.gamma * params.length_L * rho**2
    steps = args.steps or default_n_steps(mu / math.sqrt(3.0))
    try:
        cfg = SimConfig(steps, args.samples, args.seed, args.scheme)
    except InvalidParameter as exc:
        raise ConfigError(str(exc)) from exc
    st = ensemble_stats(X, params, cfg)
    cov = cond_pdf_moments_leading(mu, params)
    mx, my = mean_shift_first_order(rho, params)
    h_ref = cond_entropy_pointwise_quadrature(rho, params)
    h0, dh = cond_entropy_pointwise(rho, params)
    checks = [
        ("cov_xx", st.cov[0, 0], cov[0, 0], st.cov_stderr[0, 0]),
        ("cov_xy", st.cov[0, 1], cov[0, 1], st.cov_stderr[0, 1]),
        ("cov_yy", st.cov[1, 1], cov[1, 1], st.cov_stderr[1, 1]),
        ("mean_x0", st.mean_x0, mx, st.mean_x0_stderr),
        ("mean_y0", st.mean_y0, my, st.mean_y0_stderr),
        ("cross_entropy", st.cross_entropy, h_ref, st.cross_entropy_stderr),
        ("energy_excess", st.energy_excess, params.noise_power, st.energy_excess_stderr),
    ]
    table = [(name, est, ref, se, _z(est, ref, se)) for name, est, ref, se in checks]
    ok = all(abs(z) <= Z_LIMIT for *_, z in table)
    lines = [
        _header(params),
        f"# X={X} mu={_fmt(mu)} snr={_fmt(rho**2 / params.noise_power)} n_steps={steps} "
        f"samples={cfg.n_samples} seed={cfg.seed} scheme={cfg.scheme}",
        f"# closed-form H0+dH={_fmt(h0 + dh)} nat",
        f"{'quantity':15s} {'mc':>24s} {'analytic':>24s} {'stderr':>12s} {'z':>8s}",
    ]
    for name, est, ref, se, z in table:
        lines.append(f"{name:15s} {est:24.16e} {ref:24.16e} {se:12.4e} {z:8.3f}")
    lines.append(f"flagged_fraction {st.flagged_fraction:.3e}")
    doc = {
        "X": [X.real, X.imag], "mu": mu, "n_steps": steps, "samples": cfg.n_samples,
        "seed": cfg.seed, "scheme": cfg.scheme,
        "checks": {name: {"mc": est, "analytic": ref, "stderr": se, "z": z}
                   for name, est, ref, se, z in table},
        "flagged_fraction": st.flagged_fraction,
        "passed": ok,
    }
    if not args.no_audit:
        audit_cfg = SimConfig(steps, max(1000, cfg.n_samples // 10), cfg.seed, cfg.scheme)
        rep = convergence_audit(X, params, audit_cfg)
        names = ["mean_x0", "mean_y0", "cov_xx", "cov_xy", "cov_yy"]
        lines.append(f"# convergence audit n_steps={rep.n_steps} samples={audit_cfg.n_samples}")
        for i, nm in enumerate(names):
            lines.append(
                f"audit {nm:8s} drift_N_4N={rep.drift[i]:+.4e} stderr={rep.stderr[i]:.4e} "
                f"slope={rep.slopes[i]:.3f}"
            )
        doc["audit"] = {
            "n_steps": list(rep.n_steps),
            "drift": dict(zip(names, rep.drift.tolist())),
            "stderr": dict(zip(names, rep.stderr.tolist())),
            "slopes": dict(zip(names, rep.slopes.tolist())),
        }
    lines.append("PASS" if ok else f"FAIL (some |z| > {Z_LIMIT})")
    _emit(args, doc, "\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_VALIDATION


# gnuplot -------------------------------------------------------------------

GNUPLOT_TEMPLATE = """\
# dC' = dC - 1/SNR against input power, from a capacity-sweep CSV
set datafile separator ','
set key autotitle columnhead
set logscale x
set xlabel 'P, mW'
set ylabel "{{/Symbol D}}C', nat/symb"
set format y '%.1e'
set grid
set terminal pngcairo size 900,600
set output '{stem}_low.png'
set xrange [{lo_min}:{lo_max}]
plot '{csv}' using 1:6 with lines lw 2 title "{{/Symbol D}}C'"
set output '{stem}_high.png'
set xrange [{hi_min}:{hi_max}]
plot '{csv}' using 1:6 with lines lw 2 title "{{/Symbol D}}C'"
"""


def cmd_gnuplot(args) -> int:
    stem = Path(args.csv).with_suffix("").name
    script = GNUPLOT_TEMPLATE.format(
        csv=args.csv, stem=stem, lo_min=0.01, lo_max=10, hi_min=1, hi_max=1000
    )
    if args.output:
        Path(args.output).write_text(script)
    doc = {"script": script, "output": args.output}
    _emit(args, doc, script if not args.output else f"wrote {args.output}\n")
    return EXIT_OK


# parser --------------------------------------------------------------------


def _add_channel(p):
    ref = REFERENCE_PARAMS
    p.add_argument("--gamma", type=float, default=ref.gamma,
                   help=f"Kerr nonlinearity, 1/(mW km) (default {ref.gamma})")
    p.add_argument("--Q", type=float, default=ref.noise_density_Q,
                   help=f"noise power per unit length, mW/km (default {ref.noise_density_Q})")
    p.add_argument("--L", type=float, default=ref.length_L,
                   help=f"fiber length, km (default {ref.length_L})")
    p.add_argument("--json", action="store_true", help="print one JSON document to stdout")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="nlcap",
        description="Capacity of the zero-dispersion nonlinear fiber channel "
        f"at next-to-leading order in 1/SNR. {UNITS}.",
    )
    parser.add_argument("--version", action="version", version=f"nlcap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("capacity-sweep", help="C0, dC, dC' over a power grid (CSV)",
                       description=f"Capacity sweep. {UNITS}.")
    _add_channel(p)
    p.add_argument("--pmin", type=float, default=0.01, help="lowest power, mW")
    p.add_argument("--pmax", type=float, default=1000.0, help="highest power, mW")
    p.add_argument("--points", type=int, default=200, help="number of grid points")
    sp = p.add_mutually_exclusive_group()
    sp.add_argument("--log", action="store_true", default=True, help="log spacing (default)")
    sp.add_argument("--lin", dest="log", action="store_false", help="linear spacing")
    p.add_argument("--strict-region", action="store_true",
                   help="reject grids leaving [10 QL, 0.1/(gamma^2 Q L^3)] instead of "
                   "tagging rows out_of_region")
    p.add_argument("-o", "--output", default="capacity_sweep.csv",
                   help="CSV path; extrema go to the sibling .extrema.txt")
    p.set_defaults(func=cmd_capacity_sweep)

    p = sub.add_parser("pdf-eval", help="conditional PDF P[Y|X] at given pairs (CSV)",
                       description=f"Evaluate the NLO conditional PDF, 1/mW. {UNITS}; "
                       "complex amplitudes in sqrt(mW), e.g. 1+0.01j.")
    _add_channel(p)
    p.add_argument("--X", action="append", help="input amplitude(s), comma separated")
    p.add_argument("--Y", action="append", help="output amplitude(s), comma separated")
    p.add_argument("--input", help="CSV with columns X_re,X_im,Y_re,Y_im")
    p.add_argument("-o", "--output", default="-", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_pdf_eval)

    p = sub.add_parser("opt-input", help="optimal input distribution and its O(Q) correction",
                       description=f"Optimal input distribution. {UNITS}.")
    _add_channel(p)
    p.add_argument("--P", type=float, help="average input power, mW")
    p.add_argument("--gamma-tilde", type=float, help="dimensionless gamma L P/sqrt(3)")
    p.add_argument("--grid-points", type=int, default=200, help="radial grid size for the CSV")
    p.add_argument("-o", "--output", help="CSV of rho,p0_density,p1_density on [0, 6 sqrt(P)]")
    p.set_defaults(func=cmd_opt_input)

    p = sub.add_parser("mc-validate", help="Monte-Carlo check of the conditional PDF",
                       description=f"Monte-Carlo validation at one input. {UNITS}; "
                       "exit 1 if any |z| > 4.")
    _add_channel(p)
    p.add_argument("--X", default="1", help="input amplitude, sqrt(mW) (default 1)")
    p.add_argument("--samples", type=int, default=10**5, help="ensemble size")
    p.add_argument("--steps", type=int, help="steps along the fiber (default from gamma_tilde)")
    p.add_argument("--seed", type=int, default=0, help="64-bit seed")
    p.add_argument("--scheme", choices=("splitting", "euler"), default="splitting")
    p.add_argument("--no-audit", action="store_true", help="skip the step-refinement audit")
    p.set_defaults(func=cmd_mc_validate)

    p = sub.add_parser("gnuplot", help="gnuplot script for dC' plots from a sweep CSV",
                       description="Emit a gnuplot script plotting dC' (nat/symbol) vs P (mW).")
    p.add_argument("--csv", default="capacity_sweep.csv", help="capacity-sweep CSV")
    p.add_argument("-o", "--output", help="script path (default stdout)")
    p.add_argument("--json", action="store_true", help="print one JSON document to stdout")
    p.set_defaults(func=cmd_gnuplot)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"nlcap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"nlcap: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except InvalidParameter as exc:
        print(f"nlcap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NlcapError as exc:
        print(f"nlcap: numerical error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
