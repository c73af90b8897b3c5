"""Command-line sweeps: ``pfrelay outage``, ``pfrelay capacity``, ``pfrelay selftest``.

SNRs and sweep grids are given in dB.  A grid is ``start:step:stop``
(inclusive) or a single value.  ``--config FILE`` reads ``key = value``
lines using the long flag names (``snr-sr-db = 0``); flags given on the
command line win.

Exit codes: 0 success, 2 bad flags, 3 numeric failure, 4 I/O error.
"""

import argparse
import csv
import io
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import channel_analysis as ca
from . import monte_carlo as mc
from . import special_functions as sf

EXIT_OK, EXIT_FLAGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

NUMERIC_ERRORS = (ca.SeriesTermError, sf.QuadratureError, sf.PoleCollisionError,
                  sf.PoleError, FloatingPointError, OverflowError, ZeroDivisionError)


class FlagError(ValueError):
    pass


@dataclass
class SweepResult:
    """One CSV row.  Failed evaluations leave NaNs and name the error in ``status``."""

    command: str
    n_s: int
    n_r: int
    snr_sr_db: float
    snr_rd_db: float
    sweep_var: str
    sweep_db: float
    sweep_linear: float
    analytic: float = math.nan
    analytic_raw: float = math.nan
    asymptotic: float = math.nan
    asymptotic_high_snr: float = math.nan
    numeric_quadrature: float = math.nan
    mc_value: float = math.nan
    mc_std_error: float = math.nan
    K: int = 50
    L: int = 5
    W: float = math.nan
    wall_ms: float = math.nan
    status: str = "ok"


CSV_HEADER = [f.name for f in fields(SweepResult)]


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def parse_grid(text):
    """``"a:step:b"`` -> inclusive list of floats; ``"a"`` -> ``[a]``."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise FlagError(f"bad grid {text!r}; expected start:step:stop") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3:
        raise FlagError(f"bad grid {text!r}; expected start:step:stop")
    start, step, stop = vals
    if step == 0 or (stop - start) / step < 0:
        raise FlagError(f"grid {text!r} does not reach its stop value")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    # integer multiples of the step keep the points free of drift
    return [round(start + i * step, 12) for i in range(n)]


def format_value(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    # .12g switches to scientific notation below 1e-4
    return format(float(v), ".12g")


def write_csv(rows, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        d = asdict(r)
        w.writerow([format_value(d[k]) for k in CSV_HEADER])


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _common(p, sweep_flag, sweep_default, sweep_help):
    p.add_argument("--config", help="key = value file supplying any flag")
    p.add_argument("--ns", type=int, default=2, help="source antennas")
    p.add_argument("--nr", type=int, default=2, help="relay antennas")
    p.add_argument("--snr-sr-db", type=float, default=0.0, help="first-hop average SNR (dB)")
    p.add_argument(sweep_flag, default=sweep_default, help=sweep_help)
    p.add_argument("--trials", type=int, default=10**6, help="Monte-Carlo trials (0 skips)")
    p.add_argument("--seed", type=int, default=1, help="Monte-Carlo seed")
    p.add_argument("--K", type=int, default=50, help="outer series truncation")
    p.add_argument("--L", type=int, default=5, help="inner series truncation")
    p.add_argument("--W", type=float, default=None, help="contour half-length override")
    p.add_argument("--jobs", type=int, default=1, help="grid points evaluated at once")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--format", default="csv", choices=["csv"])
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall_ms empty so reruns are byte-identical")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pfrelay",
        description="Outage and capacity sweeps for a pinhole/Rayleigh project-and-forward relay.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("outage", help="sweep the outage threshold")
    _common(p, "--th-db", "-30:1:10", "threshold grid in dB, start:step:stop")
    p.add_argument("--snr-rd-db", type=float, default=10.0, help="second-hop average SNR (dB)")

    p = sub.add_parser("capacity", help="sweep the balance ratio beta = snr_rd/snr_sr")
    _common(p, "--beta", "-20:10:20", "beta grid in dB, start:step:stop")
    p.add_argument("--numeric-quadrature", action="store_true",
                   help="add the quadrature-of-density capacity column (slow)")

    p = sub.add_parser("selftest", help="run the built-in consistency checks")
    p.add_argument("--config", help="key = value file supplying any flag")
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--W", type=float, default=None)
    return parser


def read_config(path):
    """Turn a ``key = value`` file into argv tokens."""
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FlagError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if flag in ("--K", "--L", "--W") or key in ("K", "L", "W"):
                flag = "--" + key.upper()
            if value.lower() in ("true", "yes", "on"):
                tokens.append(flag)
            elif value.lower() in ("false", "no", "off"):
                continue
            else:
                tokens += [flag, value]
    return tokens


VALUE_FLAGS = ("--th-db", "--beta", "--snr-sr-db", "--snr-rd-db")


def _attach_values(argv):
    """Glue values such as ``-30:1:10`` to their flag so argparse does not
    mistake them for options."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def parse_args(argv):
    parser = build_parser()
    argv = _attach_values(argv)
    args = parser.parse_args(argv)
    if args.config:
        # file values first, so anything repeated on the command line wins
        tokens = _attach_values(read_config(args.config))
        args = parser.parse_args(argv[:1] + tokens + argv[1:])
    return args


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _point_outage(args, th_db):
    cfg = ca.SystemConfig(args.ns, args.nr, db_to_linear(args.snr_sr_db),
                          db_to_linear(args.snr_rd_db))
    trunc = ca.Truncation(args.K, args.L)
    g = db_to_linear(th_db)
    row = SweepResult("outage", args.ns, args.nr, args.snr_sr_db, args.snr_rd_db,
                      "th", th_db, g, K=args.K, L=args.L,
                      W=sf.UNIVARIATE_W if args.W is None else args.W)
    t0 = time.perf_counter()
    try:
        res = ca.outage_exact(g, cfg, trunc, args.W)
        row.analytic, row.analytic_raw = res.value, res.raw
        row.asymptotic = ca.outage_asymptotic(g, cfg)
    except NUMERIC_ERRORS as exc:
        row.status = type(exc).__name__
    if args.trials > 0:
        est = mc.simulate_outage(g, cfg, mc.SimConfig(args.trials, args.seed))
        row.mc_value, row.mc_std_error = est.value, est.std_error
    if not args.no_timing:
        row.wall_ms = round(1e3 * (time.perf_counter() - t0), 3)
    return row


def _point_capacity(args, beta_db):
    snr_sr = db_to_linear(args.snr_sr_db)
    beta = db_to_linear(beta_db)
    cfg = ca.SystemConfig(args.ns, args.nr, snr_sr, snr_sr * beta)
    trunc = ca.Truncation(args.K, args.L)
    row = SweepResult("capacity", args.ns, args.nr, args.snr_sr_db,
                      args.snr_sr_db + beta_db, "beta", beta_db, beta, K=args.K, L=args.L,
                      W=ca.CAPACITY_W if args.W is None else args.W)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ca.TruncationWarning)
            row.analytic = row.analytic_raw = ca.capacity_exact(cfg, trunc, args.W)
        row.asymptotic = ca.capacity_asymptotic_large_beta(cfg, args.W)
        row.asymptotic_high_snr = ca.capacity_asymptotic_high_snr(cfg)
        if args.numeric_quadrature:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ca.CapacityQuadratureWarning)
                row.numeric_quadrature = ca.capacity_numeric_quadrature(cfg, trunc, args.W)
    except NUMERIC_ERRORS as exc:
        row.status = type(exc).__name__
    if args.trials > 0:
        est = mc.simulate_capacity(cfg, mc.SimConfig(args.trials, args.seed))
        row.mc_value, row.mc_std_error = est.value, est.std_error
    if not args.no_timing:
        row.wall_ms = round(1e3 * (time.perf_counter() - t0), 3)
    return row


def _validate(args):
    if args.ns < 2 or args.nr < 2:
        raise FlagError("--ns and --nr must be at least 2")
    if args.K < 0 or args.L < 0:
        raise FlagError("--K and --L must be non-negative")
    if args.W is not None and not args.W > 0:
        raise FlagError("--W must be positive")
    if args.trials < 0:
        raise FlagError("--trials must be non-negative")
    if not 0 <= args.seed < 2**64:
        raise FlagError("--seed must be an unsigned 64-bit integer")
    if args.jobs < 1:
        raise FlagError("--jobs must be at least 1")


def run_sweep(args):
    _validate(args)
    if args.command == "outage":
        point, grid = _point_outage, parse_grid(args.th_db)
    else:
        point, grid = _point_capacity, parse_grid(args.beta)
    if args.jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            # map keeps grid order whatever the completion order
            return list(pool.map(point, [args] * len(grid), grid))
    return [point(args, v) for v in grid]


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def selftest_checks(K=50, L=5, W=None):
    """Run the consistency checks; returns a list of ``(name, passed, detail)``."""
    results = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported as such
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))

    wu = sf.UNIVARIATE_W if W is None else W
    wb = sf.BIVARIATE_W if W is None else W

    def uni(spec, z, w=wu):
        c = sf.auto_contour_univariate(spec, W=w)
        return sf.meijer_g(spec, z, c)

    exp_spec = sf.MeijerGSpec(1, 0, (), (0,))
    log_spec = sf.MeijerGSpec(1, 2, (1, 1), (1, 0))

    def identities():
        worst = 0.0
        for z in (0.1, 1.0, 5.0):
            worst = max(worst, abs(uni(exp_spec, z) - math.exp(-z)))
        for z in (0.5, 1.0, 3.0):
            worst = max(worst, abs(uni(log_spec, z) - math.log1p(z)))
        for nu in (0, 1, 2):
            spec = sf.MeijerGSpec(2, 0, (), (nu / 2, -nu / 2))
            for z in (0.25, 1.0, 4.0):
                ref = sf.modified_bessel_k(nu, 2 * math.sqrt(z))
                worst = max(worst, abs(0.5 * uni(spec, z) - ref))
        return worst < 1e-6, f"max abs error {worst:.2e}"

    def contour_convergence():
        worst = 0.0
        for spec, z in ((exp_spec, 0.1), (log_spec, 3.0)):
            a, b = uni(spec, z, wu), uni(spec, z, 2 * wu)
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
        return worst < 1e-5, f"max relative change on doubling W={wu:g}: {worst:.2e}"

    def factorization():
        spec = sf.BivariateGSpec(cm2=(1, 1), dn2=(1,), dq2=(0,), fn3=(0,))
        x, y = 0.7, 1.3
        c = sf.auto_contour_bivariate(spec, x, y, W=wb)
        val = sf.bivariate_meijer_g(spec, x, y, c)
        ref = math.log1p(x) * math.exp(-y)
        err = abs(val - ref) / ref
        return err < 1e-4, f"relative error {err:.2e}"

    def normalization():
        from scipy import integrate
        worst_mass, worst_mean = 0.0, 0.0
        for ns, nr, snr in ((2, 2, 1.0), (4, 2, 10.0), (2, 3, 0.5)):
            cfg = ca.SystemConfig(ns, nr, snr, 1.0)
            top = 200 * snr * ns * nr
            pts = [0, snr, 10 * snr * ns * nr, top]
            mass = sum(integrate.quad(lambda g: ca.pdf_gamma_sr(g, cfg), a, b,
                                      epsabs=1e-12, epsrel=1e-12, limit=200)[0]
                       for a, b in zip(pts[:-1], pts[1:]))
            mean = sum(integrate.quad(lambda g: g * ca.pdf_gamma_sr(g, cfg), a, b,
                                      epsabs=1e-12, epsrel=1e-12, limit=200)[0]
                       for a, b in zip(pts[:-1], pts[1:]))
            worst_mass = max(worst_mass, abs(mass - 1))
            worst_mean = max(worst_mean, abs(mean / (ns * nr * snr) - 1))
        return (worst_mass < 1e-6 and worst_mean < 5e-3,
                f"mass error {worst_mass:.1e}, mean error {worst_mean:.1e}")

    def truncation():
        # low-threshold points, where the outage series should be settled
        worst = 0.0
        for ns, nr in ((2, 2), (4, 2)):
            cfg = ca.SystemConfig(ns, nr, 1.0, 1.0)
            g = 1e-3 * cfg.snr_rd
            a = ca.outage_exact(g, cfg, ca.Truncation(K, L), W).raw
            b = ca.outage_exact(g, cfg, ca.Truncation(K + 10, L + 2), W).raw
            worst = max(worst, abs(a - b))
        return worst < 1e-6, f"(K,L)=({K},{L}) vs ({K + 10},{L + 2}): change {worst:.2e}"

    check("meijer-g identities", identities)
    check("contour convergence", contour_convergence)
    check("bivariate factorization", factorization)
    check("pdf normalization", normalization)
    check("truncation stability", truncation)
    return results


def run_selftest(args, out):
    if args.W is not None and not args.W > 0:
        raise FlagError("--W must be positive")
    if args.K < 0 or args.L < 0:
        raise FlagError("--K and --L must be non-negative")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sf.ContourWarning)
        warnings.simplefilter("ignore", ca.TruncationWarning)
        results = selftest_checks(args.K, args.L, args.W)
    width = max(len(n) for n, _, _ in results)
    for name, ok, detail in results:
        out.write(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}\n")
    failed = sum(not ok for _, ok, _ in results)
    out.write(f"{len(results) - failed}/{len(results)} checks passed\n")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports its own message
        return EXIT_OK if exc.code == 0 else EXIT_FLAGS
    except FlagError as exc:
        print(f"pfrelay: error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except OSError as exc:
        print(f"pfrelay: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "selftest":
            return run_selftest(args, sys.stdout)
        rows = run_sweep(args)
    except (FlagError, ValueError) as exc:
        print(f"pfrelay: error: {exc}", file=sys.stderr)
        return EXIT_FLAGS

    buf = io.StringIO()
    write_csv(rows, buf)
    try:
        if args.out == "-":
            sys.stdout.write(buf.getvalue())
        else:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
    except OSError as exc:
        print(f"pfrelay: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO

    failed = [r for r in rows if r.status != "ok"]
    if failed:
        print(f"pfrelay: {len(failed)} grid point(s) failed numerically", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK
