"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--points 20000] [--repeat 3]

Both backends are imported directly, so the environment switch is not
needed.  Prints one line per kernel with the best-of-``repeat`` time of each
backend, the speedup and the largest relative disagreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qfreg import _pycore, density, io

try:
    from qfreg import _ccore
except ImportError:  # pragma: no cover
    _ccore = None


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(points: int):
    f = __import__("qfreg").fit(io.load_lung_params())
    rd = density.ResidualDensity.from_fit(f, 8)
    md = density.MeanResponseDensity.from_fit(f, __import__("qfreg").GaussianQuantile(-750.0, 120.0))
    small = density.MeanResponseDensity.from_fit(f, __import__("qfreg").GaussianQuantile(-750.0, 60.0))
    t_res = np.linspace(1e-3, rd.t_upper, points)
    tau_m = np.linspace(1e-3, md.tau_upper, points)
    tau_s = np.linspace(1e-3, small.tau_upper, points)
    p = np.linspace(1e-6, 1 - 1e-6, points)
    x = np.linspace(-8, 8, points)
    b = np.linspace(0.0, 120.0, points)
    return [
        ("norm_cdf", lambda k: k.norm_cdf(x)),
        ("norm_ppf", lambda k: k.norm_ppf(p)),
        ("reg_lower_gamma(43, .)", lambda k: k.reg_lower_gamma(43.0, b)),
        ("residual_t_density", lambda k: k.residual_t_density(t_res, rd.n, rd.weight, rd.nu1, rd.nu2, rd.theta)),
        ("mean_response_t_density (c > 0)", lambda k: k.mean_response_t_density(tau_m, md.n, md.lam, md.c, md.K)),
        ("mean_response_t_density (c < 0)",
         lambda k: k.mean_response_t_density(tau_s, small.n, small.lam, small.c, small.K)),
    ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ccore is None:
        print("compiled core not built; nothing to compare")
        return 1
    print(f"{'kernel':<34}{'python s':>11}{'compiled s':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, run in cases(args.points):
        tp, yp = _best(lambda: run(_pycore), args.repeat)
        tc, yc = _best(lambda: run(_ccore), args.repeat)
        scale = np.maximum(np.abs(yp), 1e-300)
        diff = float(np.max(np.abs(yp - yc) / scale))
        print(f"{name:<34}{tp:>11.4f}{tc:>12.5f}{tp / tc:>10.1f}{diff:>15.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
