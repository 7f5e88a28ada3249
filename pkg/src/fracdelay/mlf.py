"""Mittag-Leffler function E_alpha(z) and Gamma on the real line.

Two evaluation branches are used for ``0 < alpha <= 1``:

* ``z <= switch``: the defining power series ``sum z^k / Gamma(alpha k + 1)``,
  summed exactly with :func:`math.fsum` (positive ``z``) or in extended
  precision with mpmath (negative ``z``, where the series alternates).
* ``z > switch``: the exponential form ``exp(z^(1/alpha)) / alpha`` minus the
  algebraic correction.  For ``alpha < 1`` the correction has the exact
  integral representation

  .. math::

      F_\\alpha(z) = \\frac{z \\sin(\\alpha\\pi)}{\\alpha\\pi}
          \\int_0^\\infty \\frac{e^{-v^{1/\\alpha}}}
          {v^2 - 2 v z \\cos(\\alpha\\pi) + z^2} dv

  whose large-``z`` expansion is ``sum_k z^(-k) / Gamma(1 - alpha k)``.  The
  integral is used while it matters at double precision, the first terms of the
  expansion once it does not.

Everything here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.special import rgamma

__all__ = [
    "MlfDomainError",
    "MlfOverflowError",
    "MlfNonConvergenceError",
    "MlfParams",
    "default_switch",
    "gamma_fn",
    "ml_eval",
    "ml_log_eval",
    "ml_log_eval_many",
]

_LOG_DBL_MAX = math.log(np.finfo(float).max)
# beyond this exponent the correction is below 1e-19 of the leading term
_CORRECTION_NEGLIGIBLE = 45.0


class MlfDomainError(ValueError):
    pass


class MlfOverflowError(OverflowError):
    pass


class MlfNonConvergenceError(ArithmeticError):
    pass


def default_switch(alpha: float) -> float:
    """Series/asymptotic seam: the series peak sits near k = 50 terms."""
    return max((50.0 * alpha) ** alpha, 1.001)


@dataclass(frozen=True)
class MlfParams:
    alpha: float
    series_tol: float = 1e-16
    max_terms: int = 500
    asymptotic_switch: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise MlfDomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.series_tol > 0.0:
            raise MlfDomainError("series_tol must be positive")
        if self.max_terms < 10:
            raise MlfDomainError("max_terms must be at least 10")
        if self.asymptotic_switch is not None and not self.asymptotic_switch > 1.0:
            raise MlfDomainError("asymptotic_switch must exceed 1")

    @property
    def switch(self) -> float:
        if self.asymptotic_switch is None:
            return default_switch(self.alpha)
        return self.asymptotic_switch


def gamma_fn(x: float) -> float:
    """Gamma function for positive real ``x``."""
    x = float(x)
    if not x > 0.0:
        raise MlfDomainError(f"gamma_fn needs x > 0, got {x}")
    try:
        return math.gamma(x)
    except OverflowError:
        raise MlfOverflowError(f"Gamma({x}) exceeds the double range") from None


def _params(alpha, params):
    if params is None:
        return MlfParams(alpha)
    if params.alpha != alpha:
        raise MlfDomainError("params.alpha does not match alpha")
    return params


def _series_positive(alpha, z, tol, max_terms):
    if z == 0.0:
        return 1.0
    lz = math.log(z)
    terms = []
    partial = 0.0
    small = 0
    for k in range(max_terms):
        arg = alpha * k + 1.0
        if arg < 171.0 and k * lz < 700.0:
            term = z**k / math.gamma(arg)
        else:
            term = math.exp(k * lz - math.lgamma(arg))
        terms.append(term)
        partial += term
        small = small + 1 if term < tol * partial else 0
        if small >= 3:
            return math.fsum(terms)
    raise MlfNonConvergenceError(
        f"series for E_{alpha}({z}) did not converge in {max_terms} terms"
    )


def _series_negative(alpha, z, tol, max_terms):
    # alternating series; the largest term is about exp(|z|^(1/alpha))
    digits_lost = abs(z) ** (1.0 / alpha) / math.log(10.0)
    if digits_lost > 300:
        raise MlfNonConvergenceError(
            f"series for E_{alpha}({z}) cancels too heavily to evaluate"
        )
    with mpmath.workdps(30 + int(digits_lost)):
        zm = mpmath.mpf(z)
        # alpha * k must be formed at working precision: a rounded Gamma
        # argument perturbs the huge middle terms by more than the result
        am = mpmath.mpf(alpha)
        partial = mpmath.mpf(0)
        small = 0
        for k in range(max_terms):
            term = zm**k * mpmath.rgamma(am * k + 1)
            partial += term
            small = small + 1 if abs(term) < tol * abs(partial) else 0
            if small >= 3:
                return float(partial)
    raise MlfNonConvergenceError(
        f"series for E_{alpha}({z}) did not converge in {max_terms} terms"
    )


def _correction(alpha, z):
    """Algebraic part subtracted from exp(z^(1/alpha))/alpha, for z > 0."""
    if alpha == 1.0:
        return 0.0
    expo = z ** (1.0 / alpha)
    if expo - math.log(alpha) > _CORRECTION_NEGLIGIBLE:
        return float(sum(rgamma(1.0 - alpha * k) / z**k for k in range(1, 4)))
    s, c = math.sin(alpha * math.pi), math.cos(alpha * math.pi)
    inv = 1.0 / alpha

    def integrand(v):
        return math.exp(-(v**inv)) / (v * v - 2.0 * v * z * c + z * z)

    # the denominator peaks at v = z cos(alpha pi) when that is positive
    if c > 0.0:
        peak = z * c
        left, _ = quad(integrand, 0.0, peak, epsabs=0.0, epsrel=1e-13, limit=200)
        right, _ = quad(integrand, peak, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
        val = left + right
    else:
        val, _ = quad(integrand, 0.0, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return z * s / (alpha * math.pi) * val


def ml_eval(alpha: float, z: float, params: MlfParams | None = None) -> float:
    """E_alpha(z) for real ``z``.

    Raises :class:`MlfOverflowError` when the value is not representable; use
    :func:`ml_log_eval` in that regime.
    """
    p = _params(alpha, params)
    z = float(z)
    if not math.isfinite(z):
        raise MlfDomainError(f"z must be finite, got {z}")
    if z < 0.0:
        return _series_negative(p.alpha, z, p.series_tol, p.max_terms)
    if z <= p.switch:
        return _series_positive(p.alpha, z, p.series_tol, p.max_terms)
    expo = z ** (1.0 / p.alpha)
    if expo - math.log(p.alpha) >= _LOG_DBL_MAX:
        raise MlfOverflowError(f"E_{p.alpha}({z}) exceeds the double range")
    return math.exp(expo) / p.alpha - _correction(p.alpha, z)


def ml_log_eval(alpha: float, z: float, params: MlfParams | None = None) -> float:
    """ln E_alpha(z) for ``z >= 0``, finite for any finite ``z``."""
    p = _params(alpha, params)
    z = float(z)
    if not (math.isfinite(z) and z >= 0.0):
        raise MlfDomainError(f"ml_log_eval needs finite z >= 0, got {z}")
    if z <= p.switch:
        return math.log(_series_positive(p.alpha, z, p.series_tol, p.max_terms))
    expo = z ** (1.0 / p.alpha)
    if p.alpha == 1.0:
        return expo
    # ln(e^S / alpha - F) = S - ln(alpha) + ln(1 - alpha F e^-S)
    rel = p.alpha * _correction(p.alpha, z) * math.exp(-expo)
    return expo - math.log(p.alpha) + math.log1p(-rel)


def ml_log_eval_many(alpha: float, zs, params: MlfParams | None = None) -> np.ndarray:
    """Elementwise :func:`ml_log_eval` over an array of non-negative arguments."""
    p = _params(alpha, params)
    zs = np.asarray(zs, dtype=float)
    out = np.empty(zs.shape)
    flat_in, flat_out = zs.ravel(), out.ravel()
    cache: dict[float, float] = {}
    for i, z in enumerate(flat_in):
        z = float(z)
        if z not in cache:
            cache[z] = ml_log_eval(p.alpha, z, p)
        flat_out[i] = cache[z]
    return out
