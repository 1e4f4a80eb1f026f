"""Adaptive quadrature behind a small contract (backed by QUADPACK)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

from scipy import integrate as _integrate

from .errors import ConvergenceError, InvalidArgumentError


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_subdivisions: int = 512

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.max_subdivisions < 8:
            raise InvalidArgumentError("max_subdivisions must be >= 8")


DEFAULT_SPEC = QuadratureSpec()


def integrate(f, lo: float, hi: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    if hi < lo:
        raise InvalidArgumentError(f"lo={lo} exceeds hi={hi}")
    if hi == lo:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = _integrate.quad(
            f, lo, hi,
            epsabs=spec.abs_tol, epsrel=spec.rel_tol,
            limit=spec.max_subdivisions, full_output=1,
        )
    value, abserr, info = out[0], out[1], out[2]
    if len(out) > 3 and info.get("last", 0) >= spec.max_subdivisions:
        raise ConvergenceError(
            f"subdivision budget of {spec.max_subdivisions} exhausted on [{lo}, {hi}]",
            estimate=value, abserr=abserr,
        )
    return float(value)
