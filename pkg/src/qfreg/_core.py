"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``QFREG_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the pure-Python kernels are used.  Both expose the same names.
"""

from __future__ import annotations

import os

from . import _pycore


def _want_pure() -> bool:
    return os.environ.get("QFREG_PURE_PYTHON", "") not in ("", "0")


if _want_pure():
    kernels = _pycore
else:
    try:
        from . import _ccore as kernels  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        kernels = _pycore

BACKEND: str = kernels.BACKEND

norm_cdf = kernels.norm_cdf
norm_ppf = kernels.norm_ppf
reg_lower_gamma = kernels.reg_lower_gamma
residual_t_density = kernels.residual_t_density
mean_response_t_density = kernels.mean_response_t_density

__all__ = [
    "BACKEND",
    "norm_cdf",
    "norm_ppf",
    "reg_lower_gamma",
    "residual_t_density",
    "mean_response_t_density",
]
