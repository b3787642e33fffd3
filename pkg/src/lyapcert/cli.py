"""Command-line front end.

    lyapcert rate --method fgm --mu 1 --L 100
    lyapcert sweep --methods gm,tmm --kappa 1:1000:50log --out rates.dat
    lyapcert check cert.json --trials 100 --dim 20
    lyapcert simulate --method tmm --L 100 --iters 50
    lyapcert restart-opt --L 100 --nmax 40

Exit codes: 0 success, 1 usage or I/O error, 2 no certificate in the bracket,
3 solver returned an unknown status.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys

import numpy as np

from . import variants
from .assembly import Restriction
from .core import PRESETS, FunctionClass, InvalidMethodError, custom_method, make_preset
from .solver import (
    BackendUnknown,
    LyapunovCertificate,
    NoCertificateWithinBracket,
    PresetRate,
    SolverSettings,
    bisect_rate,
    sweep,
)
from .verify import (
    check_certificate_algebraic,
    check_decrease_on_trajectory,
    lyapunov_values,
    random_logsumexp,
    random_quadratic,
    simulate_els_gd,
    simulate_els_hbm,
    simulate_method,
    simulate_restarted_fgm,
)

log = logging.getLogger("lyapcert")

EXIT_OK, EXIT_USAGE, EXIT_NO_CERT, EXIT_UNKNOWN = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- parsing helpers ----------------------------------------------------------------


def parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_ints(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise UsageError(f"periods must be positive integers, got {text!r}")
    return out


_GRID = re.compile(r"^\s*([^:]+):([^:]+):(\d+)\s*(log|lin)?\s*$")


def parse_kappa_grid(text: str) -> np.ndarray:
    """``min:max:count[log|lin]``; log spacing is the default."""
    m = _GRID.match(text)
    if not m:
        raise UsageError(f"kappa grid must look like min:max:count[log|lin], got {text!r}")
    try:
        lo, hi, count = float(m.group(1)), float(m.group(2)), int(m.group(3))
    except ValueError:
        raise UsageError(f"kappa grid bounds must be numbers, got {text!r}") from None
    if not (1.0 <= lo <= hi) or count < 1:
        raise UsageError(f"need 1 <= min <= max and count >= 1, got {text!r}")
    if count == 1:
        return np.array([lo])
    if m.group(4) == "lin":
        return np.linspace(lo, hi, count)
    return np.geomspace(lo, hi, count)


def function_class(args) -> FunctionClass:
    try:
        return FunctionClass(args.mu, args.L)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def settings_from(args) -> SolverSettings:
    kw = {}
    for name in ("tol_rho", "eps_feas", "rho_max"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if kw.get("tol_rho", 1.0) <= 0 or kw.get("eps_feas", 1.0) <= 0 or kw.get("rho_max", 1.0) <= 0:
        raise UsageError("--tol-rho, --eps-feas and --rho-max must be positive")
    return SolverSettings(**kw)


def method_from(args, cls):
    name = args.method.upper()
    if name == "CUSTOM":
        if args.alpha is None or args.beta is None or args.gamma is None:
            raise UsageError("custom methods need --alpha, --beta and --gamma")
        beta, gamma = parse_floats(args.beta), parse_floats(args.gamma)
        if args.N is not None and len(beta) != args.N + 1:
            raise UsageError(f"--N {args.N} needs {args.N + 1} beta values, got {len(beta)}")
        try:
            return custom_method(args.alpha, beta, gamma)
        except InvalidMethodError as exc:
            raise UsageError(str(exc)) from None
    if name not in PRESETS:
        raise UsageError(f"unknown method {args.method!r}")
    return make_preset(name, cls)


# -- table I/O ------------------------------------------------------------------------


def format_value(v: float) -> str:
    return repr(float(v))


def write_table(stream, header: list[str], rows: list[list[float]]) -> None:
    stream.write("# " + " ".join(header) + "\n")
    for row in rows:
        stream.write(" ".join(format_value(v) for v in row) + "\n")


def read_table(text: str) -> tuple[list[str], list[list[float]]]:
    header, rows = [], []
    for line in text.splitlines():
        if line.startswith("#"):
            header = line[1:].split()
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    return header, rows


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w"), True
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _emit(args, text: str) -> None:
    out, close = _open_out(args.out)
    try:
        out.write(text)
    finally:
        if close:
            out.close()


# -- commands ---------------------------------------------------------------------------


def cmd_rate(args) -> int:
    cls = function_class(args)
    settings = settings_from(args)
    if args.els:
        fn = variants.els_gd_rate if args.els == "gd" else variants.els_hbm_rate
        res = fn(cls, settings)
    elif args.restart:
        res = variants.restart_rate(cls, args.restart, settings, rho_max=min(settings.rho_max, variants.RESTART_RHO_MAX))
    else:
        spec = method_from(args, cls)
        res = bisect_rate(spec, cls, settings, args.restrict)
    _emit(args, res.certificate.dumps() + "\n")
    log.info("rho* = %.6f", res.rho_star)
    return EXIT_OK


def _iterations(rho: float) -> float:
    return -1.0 / math.log(rho) if 0.0 < rho < 1.0 else math.inf


def cmd_sweep(args) -> int:
    settings = settings_from(args)
    kappas = parse_kappa_grid(args.kappa)
    columns: list[tuple[str, object]] = []
    if args.methods:
        for name in args.methods.split(","):
            if name.upper() not in PRESETS:
                raise UsageError(f"unknown method {name!r}")
            columns.append((name.lower(), PresetRate(name.upper(), settings, args.restrict)))
    if args.els:
        for kind in args.els.split(","):
            if kind not in ("gd", "hbm"):
                raise UsageError(f"--els takes gd and/or hbm, got {kind!r}")
            columns.append((f"els_{kind}", variants.VariantRate(kind, settings)))
    periods = parse_ints(args.restart) if args.restart else []
    for N in periods:
        columns.append((f"restart_{N}", variants.VariantRate("restart", settings, N)))
    if not columns:
        raise UsageError("nothing to sweep; give --methods, --els or --restart")

    results = {name: {row.kappa: row for row in sweep(fn, kappas, args.jobs)} for name, fn in columns}
    header = ["kappa"] + [name for name, _ in columns]
    best_col = None
    if periods:
        nmax = args.nmax or max(periods)
        best_col = {}
        for k in kappas:
            try:
                best_col[float(k)] = variants.optimize_restart_period(
                    FunctionClass(1.0, k), nmax, settings, prune=True
                ).rho_star
            except (NoCertificateWithinBracket, BackendUnknown) as exc:
                best_col[float(k)] = None
                log.warning("kappa=%g optimal period: %s", k, exc)
        header += [f"restart_opt_1..{nmax}", "restart_reference"]

    rows = []
    for k in sorted(float(v) for v in kappas):
        values = []
        for name, _ in columns:
            r = results[name][k]
            if r.rho is None:
                log.warning("kappa=%g %s dropped: %s", k, name, r.error)
            values.append(r.rho)
        if best_col is not None:
            values += [best_col[k], variants.restart_reference_bound(k)]
        if any(v is None for v in values):
            log.warning("dropping row kappa=%g", k)
            continue
        if args.iterations:
            values = [_iterations(v) for v in values]
        rows.append([k] + values)
    out, close = _open_out(args.out)
    try:
        write_table(out, header, rows)
    finally:
        if close:
            out.close()
    return EXIT_OK


def _load_certificate(path) -> LyapunovCertificate:
    try:
        with open(path) as fh:
            return LyapunovCertificate.loads(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except (ValueError, KeyError, TypeError, StopIteration) as exc:
        raise UsageError(f"malformed certificate {path}: {exc}") from None


def _trajectory(cert: LyapunovCertificate, fn, rng, iters: int):
    meta = cert.problem
    kind = meta.get("kind", "fixed_step")
    start = lambda: fn.x_star + rng.standard_normal(fn.d)
    if kind == "fixed_step":
        N = int(meta["N"])
        spec = custom_method(meta["alpha"], meta["beta"], meta["gamma"])
        return simulate_method(spec, fn, [start() for _ in range(N + 1)], iters)
    if kind == "els_gd":
        return simulate_els_gd(fn, start(), iters)
    if kind == "els_hbm":
        return simulate_els_hbm(fn, start(), start(), iters)
    if kind == "restart":
        schedule = variants.momentum_sequence(int(meta["N_inner"]))
        cycles = max(1, iters // schedule.N_inner)
        return simulate_restarted_fgm(fn, schedule.theta, start(), cycles, meta["L"])
    raise UsageError(f"unknown certificate kind {kind!r}")


def run_checks(cert: LyapunovCertificate, trials: int, dim: int, seed: int, iters: int = 200,
               family: str = "quadratic", tol: float = 1e-8) -> tuple[bool, list[str]]:
    """Algebraic check plus decrease along ``trials`` random trajectories."""
    report = check_certificate_algebraic(cert)
    lines = report.lines()
    ok = report.passed
    if trials <= 0:
        return ok, lines
    cls = FunctionClass(cert.problem["mu"], cert.problem["L"])
    rng = np.random.default_rng(seed)
    failures = 0
    for i in range(trials):
        use_lse = family == "logsumexp" or (family == "mixed" and i % 2 == 1)
        fn = random_logsumexp(cls, dim, rng) if use_lse else random_quadratic(cls, dim, rng)
        traj = _trajectory(cert, fn, rng, iters)
        d = check_decrease_on_trajectory(cert, traj, tol)
        if not d.passed:
            failures += 1
            lines.append(f"FAIL trajectory {i} ({fn.kind}) worst_step_excess={d.worst_step_excess:.3e}")
    lines.append(f"{'PASS' if failures == 0 else 'FAIL'} decrease on {trials} trajectories ({failures} failed)")
    return ok and failures == 0, lines


def cmd_check(args) -> int:
    cert = _load_certificate(args.certificate)
    try:
        ok, lines = run_checks(cert, args.trials, args.dim, args.seed, args.iters, args.family)
    except ValueError as exc:
        raise UsageError(f"certificate does not match its program: {exc}") from None
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_NO_CERT


def cmd_simulate(args) -> int:
    cls = function_class(args)
    rng = np.random.default_rng(args.seed)
    fn = random_logsumexp(cls, args.dim, rng) if args.family == "logsumexp" else random_quadratic(cls, args.dim, rng)
    cert = _load_certificate(args.certificate) if args.certificate else None
    if cert is not None:
        traj = _trajectory(cert, fn, rng, args.iters)
    else:
        spec = method_from(args, cls)
        traj = simulate_method(spec, fn, [fn.x_star + rng.standard_normal(fn.d) for _ in range(spec.degree + 1)], args.iters)
    header = ["k", "f_gap", "dist"]
    ks = list(range(traj.N, traj.K + 1))
    cols = [
        [traj.f[k] - traj.f_star for k in ks],
        [float(np.linalg.norm(traj.x[k] - traj.x_star)) for k in ks],
    ]
    if cert is not None:
        header.append("lyapunov")
        cols.append(list(lyapunov_values(cert, traj)))
    rows = [[float(k)] + [c[i] for c in cols] for i, k in enumerate(ks)]
    out, close = _open_out(args.out)
    try:
        write_table(out, header, rows)
    finally:
        if close:
            out.close()
    return EXIT_OK


def cmd_restart_opt(args) -> int:
    cls = function_class(args)
    settings = settings_from(args)
    res = variants.optimize_restart_period(cls, args.nmax, settings, prune=args.prune)
    doc = {
        "N_star": res.N_star,
        "rho_star": res.rho_star,
        "reference_bound": variants.restart_reference_bound(cls.kappa()),
        "rates": {str(N): r for N, r in res.rates.items()},
        "failures": {str(N): m for N, m in res.failures.items()},
    }
    _emit(args, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


# -- argument parser ---------------------------------------------------------------------


def _add_solver_flags(p):
    p.add_argument("--tol-rho", type=float, help="bisection tolerance on rho (default 1e-4)")
    p.add_argument("--eps-feas", type=float, help="strict-feasibility threshold (default 1e-7)")
    p.add_argument("--rho-max", type=float, help="upper end of the bisection bracket (default 1.5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default stdout)")


def _add_class_flags(p):
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--L", type=float, default=10.0)


def _add_method_flags(p):
    p.add_argument("--method", default="gm", help="gm, hbm, fgm, tmm or custom")
    p.add_argument("--N", type=int, help="degree of a custom method")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", help="comma-separated beta_0..beta_N")
    p.add_argument("--gamma", help="comma-separated gamma_0..gamma_N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lyapcert", description="Certified linear rates of first-order methods.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    restrictions = [r.value for r in Restriction]

    p = sub.add_parser("rate", help="bisect the best certified rate and print the certificate")
    _add_class_flags(p)
    _add_method_flags(p)
    p.add_argument("--restrict", choices=restrictions, default="none")
    p.add_argument("--els", choices=["gd", "hbm"], help="exact line search variant instead of --method")
    p.add_argument("--restart", type=int, help="restarted fast gradient method with this period")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("sweep", help="certified rates over a kappa grid (mu = 1)")
    p.add_argument("--kappa", required=True, help="min:max:count[log|lin]")
    p.add_argument("--methods", help="comma-separated presets")
    p.add_argument("--els", help="gd, hbm or gd,hbm")
    p.add_argument("--restart", help="comma-separated restart periods")
    p.add_argument("--nmax", type=int, help="largest period for the optimal-period column")
    p.add_argument("--restrict", choices=restrictions, default="none")
    p.add_argument("--iterations", action="store_true", help="emit -1/log(rho) instead of rho")
    p.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="verify a certificate file")
    p.add_argument("certificate")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--family", choices=["quadratic", "logsumexp", "mixed"], default="quadratic")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="run a method on a random test function")
    _add_class_flags(p)
    _add_method_flags(p)
    p.add_argument("--certificate", help="also report this certificate's Lyapunov values")
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--family", choices=["quadratic", "logsumexp"], default="quadratic")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("restart-opt", help="best restart period for the fast gradient method")
    _add_class_flags(p)
    p.add_argument("--nmax", type=int, default=40)
    p.add_argument("--prune", action="store_true", help="skip periods that cannot beat the incumbent")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_restart_opt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoCertificateWithinBracket as exc:
        print(f"no certificate: {exc}", file=sys.stderr)
        return EXIT_NO_CERT
    except BackendUnknown as exc:
        print(f"solver status unknown: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
