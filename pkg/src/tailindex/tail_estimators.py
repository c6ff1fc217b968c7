"""Tail-event estimators of the tail index and their deviation bounds.

The basic estimator compares the empirical probabilities of exceeding two
consecutive exponential thresholds::

    p_hat(k) = #{X_i > e^k} / n
    alpha_hat(k) = log p_hat(k) - log p_hat(k+1)

Exceedances are strict, so an observation equal to a threshold does not count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist_models import Dataset, DistributionModel, SecondOrderParams
from .errors import DegenerateEstimate, DegenerateSpacing, EmptyTail, InvalidBase


class Method(enum.Enum):
    TAIL_EVENT = "TailEvent"
    GENERALIZED = "Generalized"
    QUANTILE_DUAL = "QuantileDual"
    HILL = "Hill"
    ORACLE_TAIL_EVENT = "OracleTailEvent"
    ADAPTIVE = "Adaptive"


@dataclass
class EstimateReport:
    alpha_hat: float
    k_used: object
    method: Method
    n: int
    seed: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def csv_row(self):
        """Fields for one CSV row: method, k_or_params, alpha_hat, n, seed, diagnostics."""
        diag = ";".join(
            f"{k}={_fmt(v)}" for k, v in self.diagnostics.items() if not isinstance(v, (list, dict))
        )
        return [
            self.method.value,
            format_k(self.k_used),
            _fmt(self.alpha_hat),
            str(self.n),
            "external" if self.seed is None else str(self.seed),
            diag,
        ]


CSV_HEADER = ["method", "k_or_params", "alpha_hat", "n", "seed", "diagnostics"]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def format_k(k):
    if isinstance(k, tuple):
        return "(" + ",".join(_fmt(float(x)) for x in k) + ")"
    return str(k)


def threshold(k):
    """The k-th exponential threshold e^k."""
    return math.exp(k)


def empirical_tail_prob(data: Dataset, k) -> float:
    return data.count_above(threshold(k)) / data.n


@dataclass
class TailProbTable:
    """Empirical exceedance probabilities p_hat(k) for k = 0..k_max.

    ``analytic`` holds the model's p_k when a model was supplied.
    """

    n: int
    entries: dict
    analytic: Optional[dict] = None

    @property
    def k_max(self):
        return max(self.entries)

    def counts(self):
        return {k: round(p * self.n) for k, p in self.entries.items()}


def tail_prob_table(data: Dataset, k_max=None, model: Optional[DistributionModel] = None):
    """Tabulate p_hat(k) from k = 0 up to the first empty tail (or ``k_max``)."""
    if k_max is None:
        top = float(data.sorted_values[-1])
        k_max = max(0, math.ceil(math.log(top))) if top > 1 else 0
    ks = np.arange(k_max + 1)
    thresholds = np.exp(ks.astype(float))
    above = data.n - np.searchsorted(data.sorted_values, thresholds, side="right")
    entries = {int(k): float(c) / data.n for k, c in zip(ks, above)}
    analytic = None
    if model is not None:
        analytic = {int(k): float(model.survival(t)) for k, t in zip(ks, thresholds)}
    return TailProbTable(data.n, entries, analytic)


def alpha_hat_k(data: Dataset, k) -> EstimateReport:
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    c_k = data.count_above(threshold(k))
    c_next = data.count_above(threshold(k + 1))
    if c_next == 0:
        raise EmptyTail(f"no observation exceeds e^{k + 1}; k={k} is too large for n={data.n}")
    p_k, p_next = c_k / data.n, c_next / data.n
    return EstimateReport(
        alpha_hat=math.log(p_k) - math.log(p_next),
        k_used=k,
        method=Method.TAIL_EVENT,
        n=data.n,
        seed=data.seed,
        diagnostics={"p_k": p_k, "p_k1": p_next},
    )


def alpha_hat_uv(data: Dataset, u, v) -> EstimateReport:
    """Tail-event estimator for arbitrary thresholds u > v >= 1.

    With (v, u) = (e^k, e^(k+1)) this is exactly :func:`alpha_hat_k`.
    """
    u, v = float(u), float(v)
    if not (u > v >= 1):
        raise ValueError(f"need u > v >= 1, got u={u}, v={v}")
    c_u = data.count_above(u)
    c_v = data.count_above(v)
    if c_u == 0:
        raise EmptyTail(f"no observation exceeds u={u}")
    q_u, q_v = c_u / data.n, c_v / data.n
    # log(u / v) rather than log u - log v: exact for u = e * v thresholds
    est = (math.log(q_v) - math.log(q_u)) / math.log(u / v)
    return EstimateReport(
        alpha_hat=est,
        k_used=(u, v),
        method=Method.GENERALIZED,
        n=data.n,
        seed=data.seed,
        diagnostics={"q_u": q_u, "q_v": q_v},
    )


def _floor_count(q, n):
    """floor(q n), treating products within rounding error of an integer as that integer.

    Without this, q = m/n can give q * n = m - 1e-13 and select the wrong
    order statistic.
    """
    x = q * n
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, r):
        return int(r)
    return math.floor(x)


def dual_thresholds(data: Dataset, q_u, q_v):
    """Order statistics X_(n - floor(q n)) used by the quantile form, as (u_hat, v_hat)."""
    q_u, q_v = float(q_u), float(q_v)
    n = data.n
    m_u, m_v = _floor_count(q_u, n), _floor_count(q_v, n)
    if not (1 >= q_v > q_u) or m_u < 1:
        raise ValueError(f"need 1 >= q_v > q_u >= 1/n, got q_u={q_u}, q_v={q_v}, n={n}")
    if m_v > n - 1:
        raise ValueError(f"q_v={q_v} points below the smallest order statistic for n={n}")
    xs = data.sorted_values
    # X_(j) is xs[j - 1]
    return float(xs[n - m_u - 1]), float(xs[n - m_v - 1])


def alpha_tilde_quantile(data: Dataset, q_u, q_v) -> EstimateReport:
    """Order-statistic counterpart of :func:`alpha_hat_uv`.

    The tail probabilities are fixed and the thresholds are read off the
    sample: u_hat = X_(n - floor(q_u n)), v_hat = X_(n - floor(q_v n)).
    """
    u_hat, v_hat = dual_thresholds(data, q_u, q_v)
    if not u_hat > v_hat:
        raise DegenerateSpacing(f"order statistics tie at {u_hat}; q_u, q_v too close for this sample")
    if v_hat <= 0:
        raise InvalidBase("order statistics must be positive")
    est = (math.log(q_v) - math.log(q_u)) / (math.log(u_hat) - math.log(v_hat))
    return EstimateReport(
        alpha_hat=est,
        k_used=(float(q_u), float(q_v)),
        method=Method.QUANTILE_DUAL,
        n=data.n,
        seed=data.seed,
        diagnostics={"u_hat": u_hat, "v_hat": v_hat},
    )


def hill(data: Dataset, r) -> EstimateReport:
    """Ratio-of-logs Hill variant.

    Returns the inverse of the average of log X_(n-i+1) / log X_(n-m+1) over
    the m = floor(r n) largest observations. This is not the log-spacings
    Hill estimator: on exact Pareto data it tends to
    alpha log u / (alpha log u + 1), with u the reference order statistic,
    rather than to alpha.
    """
    r = float(r)
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    n = data.n
    m = _floor_count(r, n)
    if m < 1:
        raise ValueError(f"floor(r n) = 0 for r={r}, n={n}")
    top = data.sorted_values[n - m:]
    ref = float(top[0])
    if ref <= 1:
        raise InvalidBase(f"reference order statistic {ref} is not above 1")
    ratio = float(np.mean(np.log(top)) / math.log(ref))
    return EstimateReport(
        alpha_hat=1.0 / ratio,
        k_used=m,
        method=Method.HILL,
        n=n,
        seed=data.seed,
        diagnostics={"r": r, "reference": ref},
    )


def oracle_k(alpha, beta, n) -> int:
    """floor(log(n) / (alpha (2 beta + 1)) + 1), the bias-variance balancing index."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return math.floor(math.log(n) / (alpha * (2.0 * beta + 1.0)) + 1.0)


def oracle_estimate(data: Dataset, alpha, beta) -> EstimateReport:
    k = oracle_k(alpha, beta, data.n)
    rep = alpha_hat_k(data, k)
    rep.method = Method.ORACLE_TAIL_EVENT
    return rep


def consistency_k(n) -> int:
    """ceil(log log n); grows slowly enough for almost-sure consistency."""
    if n <= math.e:
        raise ValueError("log log n must be positive")
    return math.ceil(math.log(math.log(n)))


def rough_k(n) -> int:
    """(log log n)^2 rounded half-up to an integer index."""
    if n <= 1:
        raise ValueError("n must exceed 1")
    return math.floor(math.log(math.log(n)) ** 2 + 0.5) if n > math.e else 0


def rough_then_plugin_k(data: Dataset, beta):
    """Pilot estimate at k = round((log log n)^2), then plug it into the oracle index.

    Returns ``(alpha_rough, k1)``.
    """
    n = data.n
    if n < 16:
        raise ValueError("need n >= 16 for the pilot threshold")
    alpha_rough = alpha_hat_k(data, rough_k(n)).alpha_hat
    if alpha_rough <= 0:
        raise DegenerateEstimate("pilot estimate is 0; the plug-in index is undefined")
    return alpha_rough, oracle_k(alpha_rough, beta, n)


def plugin_estimate(data: Dataset, beta) -> EstimateReport:
    alpha_rough, k1 = rough_then_plugin_k(data, beta)
    rep = alpha_hat_k(data, k1)
    rep.diagnostics["alpha_rough"] = alpha_rough
    return rep


def deviation_bound(k, n, delta, params: SecondOrderParams, mode="analytic", p=None) -> float:
    """Right-hand side of the large deviation inequality for alpha_hat(k).

    ``mode="empirical"`` uses the supplied tail probability ``p`` (true or
    plugged in) for p_(k+1); ``mode="analytic"`` replaces it by its lower
    bound C e^(-(k+1) alpha - 1).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    a, b, C, Cp = params.alpha, params.beta, params.C, params.Cprime
    log_term = math.log(2.0 / delta)
    bias = 3.0 * Cp / C * math.exp(-k * a * b)
    if mode == "empirical":
        if p is None or p <= 0:
            raise ValueError("empirical mode needs p > 0")
        return 6.0 * math.sqrt(log_term / (n * p)) + bias
    if mode == "analytic":
        return 6.0 * math.sqrt(math.exp((k + 1) * a + 1.0) * log_term / (C * n)) + bias
    raise ValueError(f"unknown mode {mode!r}")


def deviation_conditions(k, n, delta, params: SecondOrderParams, p_next):
    """Whether the large deviation inequality applies at index k.

    Requires p_(k+1) >= 16 log(2/delta) / n and e^(-k alpha beta) <= C / (2 C').
    """
    floor = 16.0 * math.log(2.0 / delta) / n
    bias_ok = math.exp(-k * params.alpha * params.beta) <= params.C / (2.0 * params.Cprime)
    return {"count_floor": floor, "count_ok": p_next >= floor, "bias_ok": bias_ok}


def stochastic_radius(n, delta, p):
    """6 sqrt(log(2/delta) / (n p)), the pure deviation part of the bound."""
    return 6.0 * math.sqrt(math.log(2.0 / delta) / (n * p))


def bernstein_radius(n, delta, p):
    """2 sqrt(p log(2/delta) / n), the Bernoulli Bernstein deviation of p_hat."""
    return 2.0 * math.sqrt(p * math.log(2.0 / delta) / n)
