"""(epsilon, delta) accounting for the Poisson-subsampled Gaussian mechanism.

Two independent routes:

* ``rdp_epsilon``: Renyi-DP of the sampled Gaussian over a fixed grid of
  orders (closed-form binomial sum for integer orders, the absolute-value
  two-sided series bound for fractional orders), composed additively and converted with
  eps = RDP(alpha) + log(1/delta) / (alpha - 1).
* ``moments_epsilon``: log-moments of the privacy loss at integer lambda,
  evaluated by direct quadrature of both density ratios (rounded up by the
  quadrature error estimate), composed additively and converted with eps = (alpha(lambda) + log(1/delta)) / lambda.

A zero noise multiplier yields :data:`UNBOUNDED`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

UNBOUNDED = math.inf
RDP_ORDERS = tuple(np.arange(1.25, 64.0 + 1e-9, 0.25).tolist())
MOMENT_ORDERS = tuple(range(1, 33))
QUAD_STEPS_PER_SIGMA = 200
FRAC_MAX_TERMS = 1000
QUAD_LOG_MARGIN = 1e-12


@dataclass(frozen=True)
class DpConfig:
    sigma: float = 0.0
    delta: float = 1e-3

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class DpLedger:
    delta: float = 1e-3
    rounds: list[tuple[float, float]] = field(default_factory=list)
    eps_rdp: float = 0.0
    eps_moments: float = 0.0


def _log_add(a: float, b: float) -> float:
    lo, hi = min(a, b), max(a, b)
    if lo == -math.inf:
        return hi
    return math.log1p(math.exp(lo - hi)) + hi


def _log_erfc(x: float) -> float:
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    log_a = -math.inf
    for i in range(alpha + 1):
        coef = (
            special.gammaln(alpha + 1) - special.gammaln(i + 1) - special.gammaln(alpha - i + 1)
            + i * math.log(q) + (alpha - i) * math.log1p(-q)
        )
        log_a = _log_add(log_a, coef + (i * i - i) / (2.0 * sigma**2))
    return float(log_a)


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    # two-sided series of Mironov, Talwar & Zhang, summed with |binom(alpha, i)|,
    # which upper-bounds the signed series
    log_a0, log_a1 = -math.inf, -math.inf
    last0, last1 = -math.inf, -math.inf
    z0 = sigma**2 * math.log(1.0 / q - 1.0) + 0.5
    for i in range(FRAC_MAX_TERMS):
        log_coef = special.gammaln(alpha + 1) - special.gammaln(i + 1) - special.gammaln(alpha - i + 1)
        j = alpha - i
        log_t0 = log_coef + i * math.log(q) + j * math.log1p(-q)
        log_t1 = log_coef + j * math.log(q) + i * math.log1p(-q)
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2.0) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2.0) * sigma))
        log_s0 = log_t0 + (i * i - i) / (2.0 * sigma**2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2.0 * sigma**2) + log_e1
        log_a0 = _log_add(log_a0, log_s0)
        log_a1 = _log_add(log_a1, log_s1)
        total = _log_add(log_a0, log_a1)
        if log_s0 < last0 and log_s1 < last1 and max(log_s0, log_s1) < total - 30:
            return total
        last0, last1 = log_s0, log_s1
    return math.inf  # not converged: this order drops out of the minimum


@lru_cache(maxsize=4096)
def rdp_sampled_gaussian(q: float, sigma: float, alpha: float) -> float:
    """RDP of one round of the Poisson-subsampled Gaussian at order ``alpha``."""
    if sigma == 0:
        return math.inf
    if q == 0:
        return 0.0
    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    if float(alpha).is_integer():
        return _log_a_int(q, sigma, int(alpha)) / (alpha - 1)
    return _log_a_frac(q, sigma, alpha) / (alpha - 1)


def _rdp_totals(rounds) -> np.ndarray:
    totals = np.zeros(len(RDP_ORDERS))
    for (q, sigma), count in _counts(rounds).items():
        totals += count * np.array([rdp_sampled_gaussian(q, sigma, a) for a in RDP_ORDERS])
    return totals


def _counts(rounds) -> dict:
    out: dict = {}
    for q, sigma in rounds:
        out[(float(q), float(sigma))] = out.get((float(q), float(sigma)), 0) + 1
    return out


def rdp_epsilon(ledger: DpLedger, delta: float | None = None) -> float:
    delta = ledger.delta if delta is None else delta
    if not ledger.rounds:
        return 0.0
    if any(s == 0 for _, s in ledger.rounds):
        return UNBOUNDED
    orders = np.array(RDP_ORDERS)
    eps = _rdp_totals(ledger.rounds) + math.log(1.0 / delta) / (orders - 1.0)
    return float(np.min(eps))


def _log_integral(logf: np.ndarray, h: float) -> float:
    # composite Simpson in log space
    w = np.ones(logf.size)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return float(special.logsumexp(logf + np.log(w))) + math.log(h / 3.0)


@lru_cache(maxsize=1024)
def log_moment(q: float, sigma: float, lam: int, steps_per_sigma: int = QUAD_STEPS_PER_SIGMA) -> float:
    """alpha(lambda) = log max(E_mu0[(mu0/mu)^lambda], E_mu[(mu/mu0)^lambda]) by quadrature.

    mu0 = N(0, sigma^2) and mu = (1 - q) mu0 + q N(1, sigma^2).
    """
    if sigma == 0:
        return math.inf
    if q == 0:
        return 0.0
    lo = -(lam + 2.0 + 12.0 * sigma)
    hi = lam + 2.0 + 12.0 * sigma
    n = int(math.ceil((hi - lo) / sigma * steps_per_sigma))
    n += -n % 4  # Simpson at h and 2h both need an even interval count
    z = np.linspace(lo, hi, n + 1)
    h = (hi - lo) / n
    log_mu0 = -0.5 * (z / sigma) ** 2 - math.log(sigma * math.sqrt(2.0 * math.pi))
    log_mu1 = -0.5 * ((z - 1.0) / sigma) ** 2 - math.log(sigma * math.sqrt(2.0 * math.pi))
    if q == 1.0:
        log_mu = log_mu1
    else:
        log_mu = np.logaddexp(math.log1p(-q) + log_mu0, math.log(q) + log_mu1)
    ratio = log_mu - log_mu0
    out = -math.inf
    for logf in (log_mu + lam * ratio, log_mu0 - lam * ratio):
        fine, coarse = _log_integral(logf, h), _log_integral(logf[::2], 2 * h)
        # round up by the Richardson error estimate so the result stays an upper bound
        out = max(out, fine + abs(fine - coarse) + QUAD_LOG_MARGIN)
    return out


def moments_epsilon(ledger: DpLedger, delta: float | None = None, steps_per_sigma: int = QUAD_STEPS_PER_SIGMA) -> float:
    delta = ledger.delta if delta is None else delta
    if not ledger.rounds:
        return 0.0
    if any(s == 0 for _, s in ledger.rounds):
        return UNBOUNDED
    lams = np.array(MOMENT_ORDERS, dtype=float)
    totals = np.zeros(lams.size)
    for (q, sigma), count in _counts(ledger.rounds).items():
        totals += count * np.array([log_moment(q, sigma, int(l), steps_per_sigma) for l in lams])
    return float(np.min((totals + math.log(1.0 / delta)) / lams))


def ledger_append(ledger: DpLedger, q: float, sigma: float) -> DpLedger:
    if not 0.0 < q <= 1.0:
        raise ValueError(f"sampling fraction must lie in (0, 1], got {q}")
    ledger.rounds.append((float(q), float(sigma)))
    ledger.eps_rdp = rdp_epsilon(ledger)
    ledger.eps_moments = moments_epsilon(ledger)
    return ledger
