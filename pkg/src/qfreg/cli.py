"""Command-line entry point: ``qfreg project|fit|residuals|predict|simulate``.

Exit codes: 0 success, 2 invalid input or domain violation, 3 numerical
accuracy failure or failed simulation checks, 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _stringio
import math
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

from . import _core, density, qlm, simulate
from . import io as qio
from .encoding import GaussianQuantile, empirical_quantile, project_d1
from .errors import ConsistencyError, DataFormatError, InputOutputError, QfregError

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_ACCURACY = 3
EXIT_IO = 4


def _emit(text: str, out) -> None:
    """Write ``text`` to ``out`` (a path) or to stdout."""
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InputOutputError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# -- project ------------------------------------------------------------------------


def project_tables(pre_path, post_path, validate_hu: bool = False):
    """Project every subject of two count tables; returns ``(ids, x, y, warnings)``."""
    pre = qio.read_count_table(pre_path, validate_hu)
    post = qio.read_count_table(post_path, validate_hu)
    if set(pre) != set(post):
        missing = sorted(set(pre) ^ set(post))
        raise ConsistencyError(f"subject columns differ between the tables: {', '.join(missing[:5])}")
    ids = list(pre)
    x = [project_d1(empirical_quantile(pre[i])) for i in ids]
    y = [project_d1(empirical_quantile(post[i])) for i in ids]
    warnings = [f"subject {i}: constant histogram gives sigma = 0 ({tag})"
                for i, qx, qy in zip(ids, x, y) for tag, q in (("pre", qx), ("post", qy)) if q.sigma == 0]
    return ids, x, y, warnings


def cmd_project(args) -> int:
    ids, x, y, warnings = project_tables(args.pre, args.post, args.validate_hu)
    for w in warnings:
        _warn(w)
    if args.out is None:
        buf = _stringio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(qio.PARAM_COLUMNS)
        for sid, qx, qy in zip(ids, x, y):
            w.writerow([sid] + [qio.format_float(v) for v in (qx.mu, qx.sigma, qy.mu, qy.sigma)])
        sys.stdout.write(buf.getvalue())
    else:
        qio.write_param_table(args.out, ids, x, y)
    return EXIT_OK


# -- fit ----------------------------------------------------------------------------


def fit_report(f: qlm.QlmFit, alpha: float) -> dict:
    cis = qlm.confidence_intervals(f, alpha)
    tests = qlm.summary_tests(f)
    return {
        "command": "fit",
        "n": f.n,
        "alpha": alpha,
        "estimates": f.estimates(),
        "ml_estimates": {"beta0": f.beta0_hat, "beta1": f.beta1_hat, "beta2": f.beta2_ml,
                         "sigma2": f.sigma2_ml, "beta": f.beta_ml},
        "standard_errors": f.standard_errors(),
        "confidence_intervals": {k: [v.lower, v.upper] for k, v in cis.items()},
        "tests": {k: {"statistic": t.statistic, "p_value": t.p_value, "null": t.null} for k, t in tests.items()},
        "ancillary": {"mu_qx_bar": f.mu_qx_bar, "sigma_qx_bar": f.sigma_qx_bar, "w": f.w,
                      "mu_qy_bar": f.mu_qy_bar, "sigma_qy_bar": f.sigma_qy_bar,
                      "argmin_ratio": f.argmin_ratio + 1},
        "warnings": list(f.warnings),
    }


def _stars(p: float) -> str:
    if not p == p:
        return ""
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return mark
    return ""


def _pfmt(p: float) -> str:
    if not p == p:
        return "NA"
    if p < 2.2e-16:
        return "<2e-16"
    return f"{p:.3g}" if p < 0.001 else f"{p:.3f}".rstrip("0").rstrip(".") if p < 1 else "1"


def format_fit_summary(report: dict) -> str:
    """Console summary built only from values present in ``report``."""
    est, se, tests = report["estimates"], report["standard_errors"], report["tests"]
    ci, a = report["confidence_intervals"], report["alpha"]
    names = ("beta0", "beta1", "beta2", "sigma2", "beta")
    lines = [f"Quantile regression fit, n = {report['n']}", "", "Coefficients:"]
    lines += ["         " + "".join(f"{k:>14}" for k in names),
              "         " + "".join(f"{est[k]:>14.7g}" for k in names), ""]
    lines += [f"Confidence intervals ({100 * (1 - a):g}%):"]
    lines += [f"  {k:<8}{ci[k][0]:>16.7f}{ci[k][1]:>16.7f}" for k in names]
    lines += ["", f"{'':10}{'Estimate':>11}{'Std. Error':>12}{'t value':>10}  Pr(>|t|)"]
    for k in ("beta0", "beta1"):
        t = tests[k]
        lines.append(f"{k:<10}{est[k]:>11.5f}{se[k]:>12.5f}{t['statistic']:>10.3f}  "
                     f"{_pfmt(t['p_value']):>8} {_stars(t['p_value'])}")
    lines += [f"{'':10}{'Estimate':>11}{'Std. Error':>12}{'stat':>11}  P-val (H0: par >= 1)"]
    for k in ("beta2", "sigma2", "beta"):
        t = tests[k]
        lines.append(f"{k:<10}{est[k]:>11.3e}{se[k]:>12.3e}{t['statistic']:>11.3f}  "
                     f"{_pfmt(t['p_value']):>8} {_stars(t['p_value'])}")
    anc = report["ancillary"]
    lines += ["---", "Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1", "",
              f"mu_qx_bar = {anc['mu_qx_bar']:.4f}   sigma_qx_bar = {anc['sigma_qx_bar']:.4f}   "
              f"w = {anc['w']:.3f}"]
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    data = qio.read_param_table(args.params)
    f = qlm.fit(data)
    report = fit_report(f, args.alpha)
    for w in f.warnings:
        _warn(w)
    sys.stdout.write(format_fit_summary(report))
    if args.out is not None:
        qio.write_report(args.out, report)
    return EXIT_OK


# -- residuals ----------------------------------------------------------------------


def residual_rows(data, f: qlm.QlmFit, threshold: float, tol: float) -> list[dict]:
    pairs = qlm.residuals(f, data)
    ids = data.ids or tuple(str(i + 1) for i in range(data.n))
    rows = []
    for i, (sid, r) in enumerate(zip(ids, pairs)):
        p = density.residual_pvalue(f, i, r, tol)
        rows.append({"id": sid, "mu_e": r.mu_e, "sigma_e": r.sigma_e, "p_value": p,
                     "outlier": p < threshold})
    return rows


def cmd_residuals(args) -> int:
    if not 0.0 < args.flag_threshold < 1.0:
        raise DataFormatError("--flag-threshold must lie in (0, 1)")
    data = qio.read_param_table(args.params)
    f = qlm.fit(data)
    rows = residual_rows(data, f, args.flag_threshold, args.tol)
    buf = _stringio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("id", "mu_e", "sigma_e", "p_value", "outlier"))
    for r in rows:
        w.writerow((r["id"], qio.format_float(r["mu_e"]), qio.format_float(r["sigma_e"]),
                    qio.format_float(r["p_value"]), int(r["outlier"])))
    _emit(buf.getvalue(), args.out)
    flagged = [r["id"] for r in rows if r["outlier"]]
    print(f"{len(flagged)} of {len(rows)} subjects flagged at p < {args.flag_threshold:g}: "
          f"{', '.join(flagged) if flagged else 'none'}", file=sys.stderr)
    return EXIT_OK


# -- predict ------------------------------------------------------------------------


def _probe(text: str) -> tuple[float, float]:
    try:
        s, t = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"probe must be 's,t', got {text!r}") from None
    return s, t


def predict_report(f: qlm.QlmFit, new_x: GaussianQuantile, alphas, probes=(), tol: float = 1e-7) -> dict:
    pred = qlm.predict_mean_response(f, new_x)
    d = density.MeanResponseDensity.from_fit(f, new_x)
    levels = {}
    for a in alphas:
        L = density.hdr_threshold(d, a, tol)
        levels[format(a, "g")] = {
            "alpha": a,
            "threshold": L,
            "mass": density.level_set_mass(d, L),
            "probes": [{"s": s, "t": t, "density": d.pdf(s, t), "inside": density.region_membership(d, L, (s, t))}
                       for s, t in [(pred.mu, pred.sigma), *probes]],
        }
    return {
        "command": "predict",
        "new_x": {"mu": new_x.mu, "sigma": new_x.sigma},
        "prediction": {"mu": pred.mu, "sigma": pred.sigma},
        "density_mode": {"s": d.mode[0], "t": d.mode[1], "density": d.max_density},
        "support_lower_t": d.t_lower,
        "regions": levels,
    }


def cmd_predict(args) -> int:
    data = qio.read_param_table(args.params)
    f = qlm.fit(data)
    new_x = GaussianQuantile(args.mu, args.sigma)
    alphas = args.alpha or [0.05]
    report = predict_report(f, new_x, alphas, args.probe or (), args.tol)
    if args.grid_out is not None:
        d = density.MeanResponseDensity.from_fit(f, new_x)
        grid = density.density_grid(d)
        qio.write_grid(args.grid_out, grid)
        report["grid"] = {"path": str(args.grid_out), "total_mass": grid.metadata["total_mass"]}
    p = report["prediction"]
    print(f"predicted mean response: mu = {p['mu']:.6f}, sigma = {p['sigma']:.6f}")
    for r in report["regions"].values():
        inside = ", ".join("in" if q["inside"] else "out" for q in r["probes"])
        print(f"alpha = {r['alpha']:g}: L = {r['threshold']:.6e}  mass = {r['mass']:.6f}  probes: {inside}")
    if args.out is not None:
        qio.write_report(args.out, report)
    return EXIT_OK


# -- simulate -----------------------------------------------------------------------


def default_config_path():
    return resources.files("qfreg").joinpath("data", "simulate_default.json")


def _design(spec):
    if spec == "lung":
        data = qio.load_lung_params()
        return tuple(data.x)
    try:
        return tuple(GaussianQuantile(float(m), float(s)) for m, s in spec)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"design must be 'lung' or a list of [mu, sigma] pairs ({exc})") from exc


def _truth(spec: dict, design) -> simulate.TrueModel:
    keys = ("beta0", "beta1", "beta2", "sigma2", "beta")
    missing = [k for k in keys if k not in spec]
    if missing:
        raise DataFormatError(f"truth is missing {', '.join(missing)}")
    return simulate.TrueModel(*(float(spec[k]) for k in keys), design=design)


def run_simulation_config(config: dict, seed: int | None = None) -> dict:
    """Run every check described by ``config``; returns the report document."""
    if not isinstance(config, dict):
        raise DataFormatError("config must be a JSON object")
    for k in ("truth", "reps", "seed"):
        if k not in config:
            raise DataFormatError(f"config is missing '{k}'")
    seed = int(config["seed"] if seed is None else seed)
    reps = config["reps"]
    if not isinstance(reps, int) or isinstance(reps, bool):
        raise DataFormatError("reps must be an integer")
    alpha = float(config.get("alpha", 0.05))
    truth_spec = config["truth"]
    design = _design(truth_spec.get("design", "lung"))
    truth = _truth(truth_spec, design)
    index = int(config.get("residual_index", 1)) - 1

    est = simulate.mc_estimator_check(truth, reps, seed, alpha)
    model = simulate.mc_model_check(truth, reps, seed, index)
    checks = list(est.checks) + list(model.checks)
    sections = {"estimators": est.to_dict(), "model": model.to_dict()}

    cheb = config.get("chebyshev")
    if cheb is not None:
        ct = simulate.TrueModel(truth.beta0, truth.beta1, float(cheb["beta2"]), truth.sigma2,
                                float(cheb["beta"]), design)
        c = simulate.chebyshev_check(ct, float(cheb["eps"]), reps, seed)
        checks.append(c)
        sections["chebyshev"] = c
    lb = config.get("lemma_b1")
    if lb is not None:
        res = []
        for k, th in enumerate(lb["thetas"]):
            res += simulate.lemma_b1_check(th, int(lb.get("draws", 100_000)), seed + k)
        checks += res
        sections["lemma_b1"] = res

    def plain(v):
        if isinstance(v, simulate.CheckResult):
            return asdict(v)
        if isinstance(v, list):
            return [plain(x) for x in v]
        return v

    return {
        "command": "simulate",
        "config": config,
        "seed": seed,
        "rng": simulate.RNG_ALGORITHM,
        "kernel_backend": _core.BACKEND,
        "passed": all(c.passed for c in checks),
        "failed_checks": sorted(c.name for c in checks if not c.passed),
        **{k: plain(v) for k, v in sections.items()},
    }


def cmd_simulate(args) -> int:
    if args.config is None:
        with resources.as_file(default_config_path()) as p:
            config = qio.read_report(p)
    else:
        config = qio.read_report(args.config)
    report = run_simulation_config(config, args.seed)
    text = qio.dumps_report(report)
    _emit(text, args.out)
    status = "all checks passed" if report["passed"] else f"FAILED: {', '.join(report['failed_checks'])}"
    print(f"simulate: {status}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_ACCURACY


# -- entry point --------------------------------------------------------------------


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 < a < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return a


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfreg", description="Regression of Gaussian quantile functions.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("project", help="project two count tables onto Gaussian quantile parameters")
    sp.add_argument("pre", help="count table of the explanatory histograms")
    sp.add_argument("post", help="count table of the response histograms")
    sp.add_argument("--out", help="parameter table to write (default: stdout)")
    sp.add_argument("--validate-hu", action="store_true", help="reject values outside [-1023, -200]")
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("fit", help="fit the model and print the summary")
    sp.add_argument("params", help="parameter table")
    sp.add_argument("--alpha", type=_alpha, default=0.05)
    sp.add_argument("--out", help="JSON report to write")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("residuals", help="residual pairs with outlier p-values")
    sp.add_argument("params", help="parameter table")
    sp.add_argument("--flag-threshold", type=float, default=0.01)
    sp.add_argument("--tol", type=_positive, default=1e-10, help="absolute tolerance of each p-value")
    sp.add_argument("--out", help="CSV to write (default: stdout)")
    sp.set_defaults(func=cmd_residuals)

    sp = sub.add_parser("predict", help="mean-response prediction and its density region")
    sp.add_argument("params", help="parameter table")
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--sigma", type=_positive, required=True)
    sp.add_argument("--alpha", type=_alpha, action="append", help="may be repeated (default 0.05)")
    sp.add_argument("--probe", type=_probe, action="append", help="point 's,t' to classify; may be repeated")
    sp.add_argument("--tol", type=_positive, default=1e-7, help="mass tolerance of the threshold solver")
    sp.add_argument("--grid-out", help="density grid CSV (metadata goes to <path>.json)")
    sp.add_argument("--out", help="JSON report to write")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("simulate", help="Monte-Carlo validation of the sampling laws")
    sp.add_argument("config", nargs="?", help="JSON config (default: the bundled lung configuration)")
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--out", help="JSON report to write (default: stdout)")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QfregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
