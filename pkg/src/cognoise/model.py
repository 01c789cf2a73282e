"""Choice probabilities of the noisy Bayesian decision maker.

All functions are pure. Amounts for the probit rules are integer cents (only
their ratio enters); the random-utility benchmark works in euros.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

PHI_FLOOR = 1e-300
PHI_CEIL = 1.0 - 1e-16
NUMBER_THRESHOLD = 0.5


class DeterministicLimitError(ValueError):
    """Both noise terms are zero, so the choice rule is a step function."""


def _check_finite(**kwargs):
    for name, value in kwargs.items():
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} must be finite, got {value!r}")


def norm_cdf(z):
    """Standard normal CDF via erfc, clamped away from exact 0 and 1."""
    if np.ndim(z) == 0:
        v = 0.5 * math.erfc(-float(z) / math.sqrt(2.0))
        return min(max(v, PHI_FLOOR), PHI_CEIL)
    return np.clip(special.ndtr(np.asarray(z, dtype=float)), PHI_FLOOR, PHI_CEIL)


@dataclass(frozen=True)
class IndividualParams:
    beta: float
    nu_so: float
    nu_b: float
    mu_r: float
    sigma_r: float = 1.0

    def __post_init__(self):
        _check_finite(beta=self.beta, nu_so=self.nu_so, nu_b=self.nu_b,
                      mu_r=self.mu_r, sigma_r=self.sigma_r)
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.nu_so < 0 or self.nu_b < 0:
            raise ValueError("noise SDs must be non-negative")
        if self.mu_r <= 0:
            raise ValueError(f"mu_r must be positive, got {self.mu_r}")
        if self.sigma_r != 1.0:
            raise ValueError("sigma_r is a normalisation and must equal 1")

    @property
    def b(self) -> float:
        return self.beta / (1.0 - self.beta)

    @property
    def alpha(self) -> float:
        return evidence_weight(self.nu_so, self.sigma_r)

    @property
    def delta(self) -> float:
        return prior_threshold(self.mu_r, self.alpha)


@dataclass(frozen=True)
class NumberParams:
    nu_ab: float
    mu_rp: float
    threshold: float = NUMBER_THRESHOLD

    def __post_init__(self):
        _check_finite(nu_ab=self.nu_ab, mu_rp=self.mu_rp)
        if self.nu_ab < 0:
            raise ValueError("nu_ab must be non-negative")
        if self.mu_rp <= 0:
            raise ValueError("mu_rp must be positive")
        if self.threshold != NUMBER_THRESHOLD:
            raise ValueError("the number-comparison threshold is fixed at 1/2")

    @property
    def alpha(self) -> float:
        return evidence_weight(self.nu_ab, 1.0)

    @property
    def delta(self) -> float:
        return prior_threshold(self.mu_rp, self.alpha)


@dataclass(frozen=True)
class RandomUtilityParams:
    beta: float
    sigma_ru: float

    def __post_init__(self):
        _check_finite(beta=self.beta, sigma_ru=self.sigma_ru)
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.sigma_ru <= 0:
            raise ValueError("sigma_ru must be positive")


def evidence_weight(nu, sigma_r=1.0):
    """Bayesian shrinkage weight sigma^2 / (sigma^2 + nu^2) on the signal."""
    _check_finite(nu=nu, sigma_r=sigma_r)
    if np.any(np.asarray(nu) < 0) or np.any(np.asarray(sigma_r) <= 0):
        raise ValueError("need nu >= 0 and sigma_r > 0")
    s2 = np.square(sigma_r)
    out = s2 / (s2 + np.square(nu))
    return float(out) if np.ndim(out) == 0 else out


def prior_threshold(mu_r, alpha):
    """Threshold induced by shrinkage toward the prior mean: mu_r^-(1 - alpha)."""
    _check_finite(mu_r=mu_r, alpha=alpha)
    if np.any(np.asarray(mu_r) <= 0):
        raise ValueError("mu_r must be positive")
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0) or np.any(a > 1):
        raise ValueError("alpha must lie in (0, 1]")
    out = np.exp(-(1.0 - a) * np.log(mu_r))
    return float(out) if np.ndim(out) == 0 else out


def _log_ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    _check_finite(num=num, den=den)
    if np.any(den <= 0):
        raise ValueError("denominator amount must be positive")
    if np.any(num < 0):
        raise ValueError("amounts must be non-negative")
    with np.errstate(divide="ignore"):
        return np.log(num / den)


def _finish(z, zero_mask):
    p = norm_cdf(z)
    if np.ndim(p) == 0:
        return 0.0 if bool(zero_mask) else float(p)
    return np.where(zero_mask, 0.0, p)


def prob_self(p: IndividualParams, self_amt, other_amt):
    """Probability of taking ``self`` over giving ``other``.

    A zero ``self`` amount is an unambiguous choice for ``other`` and gets
    probability exactly 0.
    """
    if p.nu_so == 0 and p.nu_b == 0:
        raise DeterministicLimitError("both noise SDs are zero")
    lr = _log_ratio(self_amt, other_amt)
    a = p.alpha
    scale = math.sqrt(p.nu_so**2 * a**2 + p.nu_b**2)
    zero = np.isneginf(lr)
    safe = np.where(zero, 0.0, lr)
    z = (a * safe - math.log(p.b) - math.log(p.delta)) / scale
    return _finish(z, zero)


def prob_self_linear(p: IndividualParams, self_amt, other_amt):
    """Linear-encoding counterpart of :func:`prob_self` with Gaussian priors."""
    if p.nu_so == 0 and p.nu_b == 0:
        raise DeterministicLimitError("both noise SDs are zero")
    s = np.asarray(self_amt, dtype=float)
    o = np.asarray(other_amt, dtype=float)
    _check_finite(self_amt=s, other_amt=o)
    if np.any(o <= 0) or np.any(s < 0):
        raise ValueError("need self >= 0 and other > 0")
    a = p.alpha
    delta = 1.0 - (1.0 - a) * p.mu_r
    scale = math.sqrt(p.nu_so**2 * a**2 + p.nu_b**2)
    z = (a * (s / o) - p.b - delta) / scale
    p_ = norm_cdf(z)
    return float(p_) if np.ndim(p_) == 0 else p_


def prob_A(p: NumberParams, a_amt, b_amt):
    """Probability of judging A larger than half of B."""
    if p.nu_ab <= 0:
        raise DeterministicLimitError("nu_ab must be positive")
    a_arr = np.asarray(a_amt, dtype=float)
    if np.any(a_arr <= 0):
        raise ValueError("A must be positive")
    lr = _log_ratio(a_arr, b_amt)
    a = p.alpha
    z = (a * lr - math.log(p.threshold) - math.log(p.delta)) / (a * p.nu_ab)
    out = norm_cdf(z)
    return float(out) if np.ndim(out) == 0 else out


def prob_self_random_utility(p: RandomUtilityParams, self_eur, other_eur):
    """Logit benchmark over weighted euro amounts."""
    s = np.asarray(self_eur, dtype=float)
    o = np.asarray(other_eur, dtype=float)
    _check_finite(self_eur=s, other_eur=o)
    u_self = p.sigma_ru * (1.0 - p.beta) * s
    u_other = p.sigma_ru * p.beta * o
    m = np.maximum(u_self, u_other)
    e_self = np.exp(u_self - m)
    out = e_self / (e_self + np.exp(u_other - m))
    return float(out) if np.ndim(out) == 0 else out


def indifference_ratio(p: IndividualParams) -> float:
    """Ratio self/other at which :func:`prob_self` equals one half."""
    # exp((ln b + ln delta) / alpha); the noise term nu_b only scales the probit
    return math.exp((math.log(p.b) + math.log(p.delta)) / p.alpha)


RULES: dict[str, Callable] = {
    "altruism": prob_self,
    "linear": prob_self_linear,
    "number": prob_A,
}


def _pair(trial) -> tuple[float, float]:
    if hasattr(trial, "self_cents"):
        return trial.self_cents, trial.other_cents
    s, o = trial
    return s, o


def mean_choice_over_grid(p, grid: Iterable, rule: str | Callable = "altruism") -> float:
    """Average choice probability over a grid of (self, other) cent pairs."""
    pairs: Sequence = [_pair(t) for t in grid]
    if not pairs:
        raise ValueError("grid must not be empty")
    s = np.array([x[0] for x in pairs], dtype=float)
    o = np.array([x[1] for x in pairs], dtype=float)
    if rule == "random-utility":
        probs = prob_self_random_utility(p, s / 100.0, o / 100.0)
    else:
        fn = RULES[rule] if isinstance(rule, str) else rule
        probs = fn(p, s, o)
    return float(np.mean(probs))
