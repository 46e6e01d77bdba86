"""Closed-form convergence-rate exponents and their cross-consistency.

Every exponent is a pure function of its order parameters. Two printed
pointwise exponents disagree with each other; ``pointwise_exponent_gap``
computes both and their difference instead of guessing which one was meant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "RateParams",
    "effective_rate_strong",
    "rate_corollary",
    "rate_lemma_weak",
    "theorem_exponents",
    "pointwise_exponent_gap",
    "localization_constant",
    "one_minus_kappa",
]

# Realization of the "h to the power one-minus" convention: an explicit
# near-one exponent 1 - kappa with this default.
DEFAULT_KAPPA = 0.01


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def _finite(name: str, x: float) -> float:
    x = float(x)
    _require(math.isfinite(x), f"{name} must be finite, got {x!r}")
    return x


@dataclass(frozen=True)
class RateParams:
    """Order parameters of the rate machinery.

    p: a-priori sup-moment order; s: pointwise-moment order (s > p);
    q: target pointwise order (q < s); eta: target sup order (eta < p);
    alpha, beta: strong-error orders; gamma: stopping-threshold exponent
    (threshold h^-gamma); delta: localized-error exponent; rho: loss
    exponent tying delta = (1 - rho*gamma)/2; kappa: the explicit stand-in
    for "one minus an arbitrarily small exponent".
    """

    p: float
    s: float
    q: float
    eta: float
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 1.0
    delta: float = 0.5
    rho: float = 1.0
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self) -> None:
        for name in ("p", "s", "q", "eta", "alpha", "beta", "gamma", "delta", "rho", "kappa"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        _require(0.0 < self.eta < self.p, f"need 0 < eta < p, got eta={self.eta}, p={self.p}")
        _require(0.0 < self.q < self.s, f"need 0 < q < s, got q={self.q}, s={self.s}")
        _require(self.p < self.s, f"need p < s, got p={self.p}, s={self.s}")
        _require(self.gamma > 0.0, "gamma must be positive")
        _require(self.delta > 0.0, "delta must be positive")
        _require(self.rho > 0.0, "rho must be positive")
        _require(self.kappa > 0.0, "kappa must be positive")


def effective_rate_strong(gamma: float, delta: float, p: float, eta: float) -> float:
    """min(gamma*(p-eta)/eta, delta): localized rate vs moment-transfer rate."""
    gamma = _finite("gamma", gamma)
    delta = _finite("delta", delta)
    p = _finite("p", p)
    eta = _finite("eta", eta)
    _require(gamma > 0.0, "gamma must be positive")
    _require(delta > 0.0, "delta must be positive")
    _require(0.0 < eta < p, f"need 0 < eta < p, got eta={eta}, p={p}")
    return min(gamma * (p - eta) / eta, delta)


def rate_corollary(p: float, eta: float, rho: float) -> float:
    """(1/2)*(p-eta)/(p-eta+eta*rho/2), the balanced sup-error exponent."""
    p = _finite("p", p)
    eta = _finite("eta", eta)
    rho = _finite("rho", rho)
    _require(0.0 < eta < p, f"need 0 < eta < p, got eta={eta}, p={p}")
    _require(rho > 0.0, "rho must be positive")
    gap = p - eta
    return 0.5 * gap / (gap + eta * rho / 2.0)


def rate_lemma_weak(p: float, s: float, q: float, rho: float) -> float:
    """p(s-q) / (2p(s-q) + (p+rho)*q*s), the balanced pointwise exponent."""
    p = _finite("p", p)
    s = _finite("s", s)
    q = _finite("q", q)
    rho = _finite("rho", rho)
    _require(0.0 < q < s, f"need 0 < q < s, got q={q}, s={s}")
    _require(0.0 < p < s, f"need 0 < p < s, got p={p}, s={s}")
    _require(rho > 0.0, "rho must be positive")
    gap = s - q
    return p * gap / (2.0 * p * gap + (p + rho) * q * s)


def theorem_exponents(alpha: float, eta: float) -> tuple[float, float]:
    """Main strong-convergence exponents (pointwise order alpha, sup order eta).

    Returns ((1/2)(3-alpha)/(3+25/3*alpha), (1/2)(1-eta)/(1+3*eta)).
    """
    alpha = _finite("alpha", alpha)
    eta = _finite("eta", eta)
    _require(0.0 < alpha < 2.0, f"need 0 < alpha < 2, got {alpha}")
    _require(0.0 < eta < 1.0, f"need 0 < eta < 1, got {eta}")
    pointwise = 0.5 * (3.0 - alpha) / (3.0 + (25.0 / 3.0) * alpha)
    uniform = 0.5 * (1.0 - eta) / (1.0 + 3.0 * eta)
    return pointwise, uniform


def pointwise_exponent_gap(alpha: float) -> tuple[float, float, float]:
    """The two printed pointwise exponents and their difference.

    The headline form (1/2)(3-alpha)/(3+25/3*alpha) and the balanced form
    rate_lemma_weak(1, 3, alpha, 8) = (3-alpha)/(6+25*alpha) do not agree
    (at alpha=1: 3/34 vs 2/31). Both are reported; no adjudication.
    """
    alpha = _finite("alpha", alpha)
    _require(0.0 < alpha < 2.0, f"need 0 < alpha < 2, got {alpha}")
    headline = 0.5 * (3.0 - alpha) / (3.0 + (25.0 / 3.0) * alpha)
    balanced = rate_lemma_weak(1.0, 3.0, alpha, 8.0)
    return headline, balanced, headline - balanced


def localization_constant(p: float, eta: float) -> float:
    """Moment-transfer constant 2^((p-eta)/p) * 2^eta."""
    p = _finite("p", p)
    eta = _finite("eta", eta)
    _require(0.0 < eta < p, f"need 0 < eta < p, got eta={eta}, p={p}")
    return 2.0 ** ((p - eta) / p + eta)


def one_minus_kappa(kappa: float = DEFAULT_KAPPA) -> float:
    """Concrete exponent for the "one minus" step-size power convention."""
    kappa = _finite("kappa", kappa)
    _require(0.0 < kappa < 1.0, f"need 0 < kappa < 1, got {kappa}")
    return 1.0 - kappa
