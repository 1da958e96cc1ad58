"""Command-line front end.

Subcommands: ``fit``, ``infer``, ``simulate``, ``validate-pivot``,
``coverage`` and ``width-curve``. JSON goes to ``--output`` (or stdout);
experiment drivers also write a per-row CSV with ``--csv``.

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical error. Failures
print a JSON object ``{"error": {...}}`` on stderr.
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_tobit2
from .errors import (
    InvariantViolation,
    NonPDCovariance,
    NonPositiveVariance,
    ParseError,
    TobitError,
)
from .polyhedral_pivot import (
    naive_test,
    pivot_context,
    significance_test,
    target_eta,
)
from .probit import ProbitFit
from .simulate import (
    COVERAGE_MODELS,
    TRUNCATIONS,
    SimDesign,
    coverage_experiment,
    gen_tobit1,
    gen_tobit2,
    gen_tobit3,
    interval_width_curve,
    pivot_uniformity_experiment,
    replication_rng,
    write_csv,
)
from .two_step import (
    Tobit1Data,
    Tobit2Data,
    Tobit3Data,
    TwoStepFit,
    aft_data,
    fit_tobit1,
    fit_tobit2,
    fit_tobit3,
)

MODELS = ("tobit1", "tobit2", "tobit3", "aft")
SEED_ENV = "TOBITINF_SEED"
MISSING = {"", "na", "nan"}


class UsageError(Exception):
    exit_status = 2
    code = "usage_error"


# ---------------------------------------------------------------- CSV input


def _prefixed(header, prefix, exclude=()):
    return [h for h in header if h.startswith(prefix) and h not in exclude]


def _required_columns(header, model):
    if model == "tobit1":
        named = {"y": "y"}
        groups = {"X": _prefixed(header, "x")}
    elif model == "aft":
        named = {"t": "t", "T": "T"}
        groups = {"X": _prefixed(header, "x")}
    elif model == "tobit3":
        named = {"y1": "y1", "y2": "y2"}
        groups = {"X1": _prefixed(header, "x1_"), "X2": _prefixed(header, "x2_")}
    elif model == "tobit2":
        named = {"z": "z", "y2": "y2"}
        groups = {"X1": _prefixed(header, "x1_"), "X2": _prefixed(header, "x2_")}
    else:
        raise UsageError(f"unknown model {model!r}")
    for col in named.values():
        if col not in header:
            raise ParseError(f"missing required column {col!r}")
    for key, cols in groups.items():
        if not cols:
            want = "x*" if key == "X" else key.lower() + "_*"
            raise ParseError(f"no covariate columns matching {want!r}")
    return named, groups


def load_csv(path, model):
    """Read a headered CSV into the dataset type for ``model``.

    Covariate columns are taken in header order. For ``tobit2`` the ``y2``
    cell of an unselected row may be empty or ``NA``.

    Returns
    -------
    data, summary
        ``summary`` holds the row and censored counts.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        named, groups = _required_columns(header, model)
        pos = {h: i for i, h in enumerate(header)}
        cols = list(named.values()) + [c for g in groups.values() for c in g]
        values = {c: [] for c in cols}
        for r, row in enumerate(reader):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"row {r} (line {reader.line_num}): {len(row)} fields, expected {len(header)}"
                )
            for c in cols:
                cell = row[pos[c]].strip()
                if cell.lower() in MISSING and model == "tobit2" and c == "y2":
                    values[c].append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"row {r} (line {reader.line_num}), column {c!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(f"row {r} (line {reader.line_num}), column {c!r}: non-finite value")
                values[c].append(v)
    n = len(values[cols[0]])
    if n == 0:
        raise ParseError(f"{path} has no data rows")
    arr = {c: np.array(v) for c, v in values.items()}
    mats = {k: np.column_stack([arr[c] for c in g]) for k, g in groups.items()}
    if model == "tobit1":
        data = Tobit1Data(mats["X"], arr["y"])
    elif model == "aft":
        data = aft_data(mats["X"], arr["t"], arr["T"])
    elif model == "tobit3":
        data = Tobit3Data(mats["X1"], arr["y1"], mats["X2"], arr["y2"])
    else:
        z = arr["z"]
        if np.any((z == 1) & np.isnan(arr["y2"])):
            k = int(np.flatnonzero((z == 1) & np.isnan(arr["y2"]))[0])
            raise InvariantViolation(f"y2 missing at selected row {k}")
        data = Tobit2Data(mats["X1"], z, mats["X2"], arr["y2"])
    summary = {
        "n_rows": n,
        "n_censored": int(n - data.selected.sum()),
        "columns": {k: list(g) for k, g in groups.items()},
    }
    return data, summary


# ------------------------------------------------------------ fits <-> JSON


def _fit_record(fit):
    d = fit.to_dict()
    d.pop("selected_rows")
    return d


def fit_model(data, model):
    """Run the two-step fit and return ``(fits, record)``."""
    if model in ("tobit1", "aft"):
        fit = fit_tobit1(data)
        return {"main": fit}, {"model": model, "fit": _fit_record(fit)}
    if model == "tobit3":
        f1, f2 = fit_tobit3(data)
        rec = {"model": model, "equation1": _fit_record(f1), "equation2": _fit_record(f2)}
        return {"equation1": f1, "equation2": f2}, rec
    fit = fit_tobit2(data)
    return {"main": fit}, {"model": model, "fit": _fit_record(fit)}


def _fit_from_record(rec):
    # enough of a fit to drive inference; floats round-trip exactly through JSON
    gamma = np.asarray(rec["gamma_hat"], dtype=float)
    pr = rec["probit"]
    return TwoStepFit(
        alpha_hat=np.asarray(rec["alpha_hat"], dtype=float),
        lambda_hat=np.empty(0),
        Z_hat=np.empty((0, gamma.size)),
        gamma_hat=gamma,
        selected_rows=np.empty(0, dtype=int),
        y_bar=np.empty(0),
        probit=ProbitFit(np.asarray(rec["alpha_hat"]), pr["loglik"], pr["iterations"], pr["converged"], pr["grad_norm"]),
        sigma2_hat=rec.get("sigma2_hat"),
        n_total=rec["n_total"],
        extra={k: rec[k] for k in ("tau_hat", "sigma12_hat", "sigma_hat", "model") if k in rec},
    )


def load_fit(path, model, n_rows):
    try:
        with open(path) as fh:
            rec = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read fit file {path}: {exc}") from None
    if rec.get("model") != model:
        raise UsageError(f"fit file is for model {rec.get('model')!r}, not {model!r}")
    keys = ("equation1", "equation2") if model == "tobit3" else ("main",)
    src = ("equation1", "equation2") if model == "tobit3" else ("fit",)
    fits = {k: _fit_from_record(rec[s]) for k, s in zip(keys, src)}
    for f in fits.values():
        if f.n_total != n_rows:
            raise InvariantViolation(
                f"fit file was made from {f.n_total} rows, data has {n_rows}"
            )
    return fits, rec


# ---------------------------------------------------------------- inference


def _pivot_record(name, j, estimate, ctx, alpha, null_value):
    corr = significance_test(ctx, null_value, alpha)
    naive = naive_test(ctx, null_value, alpha)
    return {
        "coefficient": name,
        "index": j,
        "two_step_estimate": estimate,
        "eta_y": ctx.eta_y,
        "sd": ctx.sd,
        "v_minus": ctx.v_minus,
        "v_plus": ctx.v_plus,
        "v_zero": ctx.v_zero,
        "corrected": {
            "lower": corr.lower,
            "upper": corr.upper,
            "p_value": corr.p_value,
            "pivot": corr.pivot_value,
            "reject": corr.reject,
        },
        "naive": {
            "lower": naive.lower,
            "upper": naive.upper,
            "p_value": naive.p_value,
            "pivot": naive.pivot_value,
            "reject": naive.reject,
        },
    }


def infer(data, model, fits, alpha=0.05, sigma=None, sigma2=None, sigma12=None,
          null_value=0.0, B=1000, seed=0, n_jobs=1):
    """Per-coefficient corrected and naive inference.

    Variances come from ``sigma``/``sigma2``/``sigma12`` when given (exact
    pivot) and otherwise from the fit (plug-in).
    """
    out = {"model": model, "alpha": alpha, "null_value": null_value}
    sel = data.selected
    records = []
    if model in ("tobit1", "aft"):
        fit = fits["main"]
        known = sigma is not None
        s2 = sigma**2 if known else fit.scale_hat**2
        if not s2 > 0:
            raise NonPositiveVariance("plug-in sigma is not positive; pass --sigma")
        y = data.y[sel]
        for j in range(data.X.shape[1]):
            eta, Sig, con = target_eta("tobit1-beta", data.X[sel], j, sigma2=s2)
            ctx = pivot_context(y, con, Sig, eta)
            records.append(_pivot_record(f"beta[{j}]", j, float(fit.beta_hat[j]), ctx, alpha, null_value))
        out["variance"] = {"source": "known" if known else "plug-in", "sigma2": s2}
    elif model == "tobit3":
        f1, f2 = fits["equation1"], fits["equation2"]
        given = [v is not None for v in (sigma, sigma2, sigma12)]
        if any(given) and not all(given):
            raise UsageError("tobit3 needs --sigma, --sigma2 and --sigma12 together")
        known = all(given)
        if known:
            s11, s22, s12 = sigma**2, sigma2**2, sigma12
        else:
            s11, s22, s12 = f1.scale_hat**2, f2.sigma2_hat, f2.extra["sigma12_hat"]
        if not (s11 > 0 and s11 * s22 - s12**2 > 0):
            raise NonPDCovariance("error covariance is not positive definite")
        X1b, X2b = data.X1[sel], data.X2[sel]
        y1 = data.y1[sel]
        for j in range(X1b.shape[1]):
            eta, Sig, con = target_eta("tobit3-beta1", X1b, j, sigma2=s11)
            ctx = pivot_context(y1, con, Sig, eta)
            records.append(_pivot_record(f"beta1[{j}]", j, float(f1.beta_hat[j]), ctx, alpha, null_value))
        ystack = np.concatenate([y1, data.y2[sel]])
        for j in range(X2b.shape[1]):
            eta, Sig, con = target_eta(
                "tobit3-beta2", X1b, j, sigma2=s11, X2_bar=X2b, sigma2_2=s22, sigma12=s12
            )
            ctx = pivot_context(ystack, con, Sig, eta)
            records.append(_pivot_record(f"beta2[{j}]", j, float(f2.beta_hat[j]), ctx, alpha, null_value))
        out["variance"] = {
            "source": "known" if known else "plug-in",
            "sigma1_sq": s11,
            "sigma2_sq": s22,
            "sigma12": s12,
        }
    else:
        fit = fits["main"]
        cfg = BootstrapConfig(B=B, seed=seed, alpha=alpha)
        for j in range(data.X2.shape[1]):
            res = bootstrap_tobit2(data, fit, j, cfg, n_jobs=n_jobs)
            rec = {"coefficient": f"beta2[{j}]", "index": j, "two_step_estimate": res.estimate}
            rec["bootstrap"] = res.to_dict()
            records.append(rec)
        out["bootstrap"] = {"B": B, "seed": seed, "method": cfg.method}
    out["coefficients"] = records
    return out


# -------------------------------------------------------------- simulation


def _design(args, **overrides):
    kw = dict(
        n=args.n,
        p=args.p,
        p2=args.p2,
        sigma2=args.sigma1_sq,
        sigma2_2=args.sigma2_sq,
        sigma12=args.sigma12,
        signal=args.signal,
        seed=args.seed,
        replications=getattr(args, "replications", 1),
    )
    kw.update(overrides)
    try:
        return SimDesign(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def simulate_dataset(design, model):
    """One dataset from ``design`` as CSV-ready rows plus the true coefficients."""
    rng = replication_rng(design.seed, 0)
    if model == "tobit1":
        data, truth = gen_tobit1(design, rng)
        rows = [{"y": data.y[i], **{f"x{k + 1}": data.X[i, k] for k in range(design.p)}}
                for i in range(design.n)]
        return rows, {"beta": truth["beta"].tolist()}
    gen = gen_tobit3 if model == "tobit3" else gen_tobit2
    data, truth = gen(design, rng)
    first = ("y1", data.y1) if model == "tobit3" else ("z", data.z)
    rows = []
    for i in range(design.n):
        r = {first[0]: first[1][i], "y2": data.y2[i] if data.selected[i] else ("" if model == "tobit2" else 0.0)}
        r.update({f"x1_{k + 1}": data.X1[i, k] for k in range(design.p)})
        r.update({f"x2_{k + 1}": data.X2[i, k] for k in range(design.p2)})
        rows.append(r)
    return rows, {"beta1": truth["beta1"].tolist(), "beta2": truth["beta2"].tolist()}


# -------------------------------------------------------------------- main


def _emit(obj, path, pretty):
    text = json.dumps(obj, indent=2 if pretty else None, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _level(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="tobitinf", description="Two-step Tobit fits with selection-corrected inference.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="JSON output path (default: stdout)")
    common.add_argument("--pretty", action="store_true", help="indent the JSON")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${SEED_ENV} or 0)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--model", required=True, choices=MODELS)
    data.add_argument("--input", "-i", required=True, help="CSV with a header row")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--p", type=int, default=10)
    sim.add_argument("--p2", type=int, default=None)
    sim.add_argument("--sigma1-sq", type=float, default=1.0, help="error variance (first equation)")
    sim.add_argument("--sigma2-sq", type=float, default=1.0, help="outcome error variance")
    sim.add_argument("--sigma12", type=float, default=0.0, help="error covariance")
    sim.add_argument("--signal", type=float, default=1.0, help="scale of the drawn coefficients")
    sim.add_argument("--csv", help="per-row CSV output path")

    sub.add_parser("fit", parents=[common, data], help="two-step fit")

    q = sub.add_parser("infer", parents=[common, data], help="corrected intervals and tests")
    q.add_argument("--fit", dest="fit_path", help="reuse a JSON file written by `fit`")
    q.add_argument("--alpha", type=_level, default=0.05, help="significance level (intervals cover 1 - alpha)")
    q.add_argument("--null", type=float, default=0.0, help="null value of each test")
    q.add_argument("--sigma", type=float, help="known error sd (exact pivot); tobit3: first equation")
    q.add_argument("--sigma2", type=float, help="tobit3: known outcome error sd")
    q.add_argument("--sigma12", type=float, help="tobit3: known error covariance")
    q.add_argument("--B", type=int, default=1000, help="bootstrap replications (tobit2)")
    q.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("simulate", parents=[common, sim], help="write one simulated dataset")
    s.add_argument("--model", required=True, choices=("tobit1", "tobit2", "tobit3"))

    v = sub.add_parser("validate-pivot", parents=[common, sim], help="pivot uniformity check")
    v.add_argument("--count", type=int, default=10_000)
    v.add_argument("--coef", type=int, default=0)
    v.add_argument("--shift", type=float, default=0.0, help="evaluate at truth + shift * sd")

    c = sub.add_parser("coverage", parents=[common, sim], help="coverage experiment")
    c.add_argument("--model", required=True, choices=COVERAGE_MODELS)
    c.add_argument("--replications", type=int, default=1000)
    c.add_argument("--alpha", type=_level, default=0.05)
    c.add_argument("--coef", type=int, default=0)
    c.add_argument("--plug-in", action="store_true", help="use estimated instead of true variances")
    c.add_argument("--B", type=int, default=1000)
    c.add_argument("--jobs", type=int, default=1)

    w = sub.add_parser("width-curve", parents=[common], help="interval widths for a truncated scalar")
    w.add_argument("--truncation", choices=sorted(TRUNCATIONS), default="both")
    w.add_argument("--sigma", type=float, default=1.0)
    w.add_argument("--alpha", type=_level, default=0.05)
    w.add_argument("--points", type=int, default=119)
    w.add_argument("--csv", help="per-row CSV output path")
    return p


def run(args):
    if args.seed is None:
        args.seed = _default_seed()
    cmd = args.command
    if cmd in ("fit", "infer"):
        data, summary = load_csv(args.input, args.model)
        if cmd == "fit":
            _, rec = fit_model(data, args.model)
            rec["data"] = summary
            _emit(rec, args.output, args.pretty)
            return 0
        if args.fit_path:
            fits, _ = load_fit(args.fit_path, args.model, summary["n_rows"])
        else:
            fits, _ = fit_model(data, args.model)
        if args.model != "tobit3" and (args.sigma2 is not None or args.sigma12 is not None):
            raise UsageError("--sigma2/--sigma12 apply to tobit3 only")
        if args.sigma is not None and args.model == "tobit2":
            raise UsageError("tobit2 inference is by bootstrap; --sigma does not apply")
        for name in ("sigma", "sigma2"):
            v = getattr(args, name)
            if v is not None and not v > 0:
                raise UsageError(f"--{name} must be positive")
        if args.B < 100:
            raise UsageError("--B must be at least 100")
        rec = infer(
            data, args.model, fits, alpha=args.alpha, sigma=args.sigma, sigma2=args.sigma2,
            sigma12=args.sigma12, null_value=args.null, B=args.B, seed=args.seed, n_jobs=args.jobs,
        )
        rec["data"] = summary
        _emit(rec, args.output, args.pretty)
        return 0
    if cmd == "simulate":
        design = _design(args)
        rows, truth = simulate_dataset(design, args.model)
        if args.csv:
            write_csv(rows, args.csv)
        _emit({"model": args.model, "design": design.to_dict(), "truth": truth}, args.output, args.pretty)
        return 0
    if cmd == "validate-pivot":
        if args.count <= 0:
            raise UsageError("--count must be positive")
        rep = pivot_uniformity_experiment(_design(args), args.count, j=args.coef, mu_shift=args.shift)
        if args.csv:
            write_csv([{"pivot": float(u)} for u in rep.pivots], args.csv)
        _emit(rep.to_dict(), args.output, args.pretty)
        return 0
    if cmd == "coverage":
        rep = coverage_experiment(
            args.model, _design(args), alpha=args.alpha, j=args.coef,
            sigma_known=not args.plug_in, boot_B=args.B, n_jobs=args.jobs,
        )
        if args.csv:
            write_csv(rep.rows, args.csv)
        _emit(rep.to_dict(), args.output, args.pretty)
        return 0
    lo, hi = TRUNCATIONS[args.truncation]
    top = hi if math.isfinite(hi) else 6.0
    grid = np.linspace(lo + 0.05, top - 0.05, args.points)
    rows = interval_width_curve(args.sigma, args.truncation, grid, args.alpha)
    if args.csv:
        write_csv(rows, args.csv)
    _emit({"truncation": args.truncation, "sigma": args.sigma, "alpha": args.alpha, "rows": rows},
          args.output, args.pretty)
    return 0


def _report(exc, status):
    err = {
        "code": getattr(exc, "code", "error"),
        "type": type(exc).__name__,
        "message": str(exc),
        "exit_status": status,
    }
    sys.stderr.write(json.dumps({"error": err}, sort_keys=True) + "\n")
    return status


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except UsageError as exc:
        return _report(exc, 2)
    except TobitError as exc:
        return _report(exc, exc.exit_status)
    except ValueError as exc:
        # preconditions outside the TobitError tree, e.g. a bad design value
        return _report(exc, 3)
    except ArithmeticError as exc:
        return _report(exc, 4)


if __name__ == "__main__":
    sys.exit(main())
