"""Lepski-type data-driven choice of the threshold index.

The selected index is the smallest k whose tail has enough observations and
whose estimate agrees with every later admissible estimate::

    k_hat = min { k : p_hat(k+1) > floor and for all admissible k' > k,
                  |alpha_hat(k') - alpha_hat(k)| <= A / sqrt(n p_hat(k'+1)) }

with floor = 24 log(2/delta) / n. Admissible means p_hat(k'+1) > floor.

This module never sees the true distribution parameters. The comparison
constant A is passed in by the caller, computed either from known constants
(:func:`threshold_A`) or from range bounds (:func:`threshold_A_eps`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .dist_models import Dataset, SecondOrderParams
from .errors import NoAdmissibleK
from .tail_estimators import EstimateReport, Method, tail_prob_table


@dataclass(frozen=True)
class AdaptiveConfig:
    delta: float
    A: float
    count_floor_multiplier: float = 24.0

    def __post_init__(self):
        if not 0 < self.delta < 0.25:
            raise ValueError(f"delta must lie in (0, 1/4), got {self.delta}")
        if not self.A > 0:
            raise ValueError(f"A must be positive, got {self.A}")
        if not self.count_floor_multiplier > 0:
            raise ValueError("count_floor_multiplier must be positive")

    def floor(self, n):
        return self.count_floor_multiplier * math.log(2.0 / self.delta) / n


@dataclass(frozen=True)
class RangeBounds:
    """Ranges alpha in [alpha1, alpha2], C in [C1, C2], beta >= beta1, and C'."""

    alpha1: float
    alpha2: float
    beta1: float
    C1: float
    C2: float
    Cprime: float

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "C1", "C2", "Cprime"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha1 > self.alpha2:
            raise ValueError("need alpha1 <= alpha2")
        if self.C1 > self.C2:
            raise ValueError("need C1 <= C2")

    def log_factor(self, eps, n):
        """log((2/eps) (1 + log((C2 + C') n) / alpha1))."""
        return math.log(2.0 / eps * (1.0 + math.log((self.C2 + self.Cprime) * n) / self.alpha1))


def threshold_A(delta, params: SecondOrderParams) -> float:
    """Smallest A(delta) allowed when (alpha, C, C') are known.

    6 sqrt(2 (C + C') log(2/delta)) (2 sqrt(e^(2 alpha + 1) / C) + C'/C)
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    a, C, Cp = params.alpha, params.C, params.Cprime
    return (
        6.0
        * math.sqrt(2.0 * (C + Cp) * math.log(2.0 / delta))
        * (2.0 * math.sqrt(math.exp(2.0 * a + 1.0) / C) + Cp / C)
    )


def threshold_A_eps(eps, n, bounds: RangeBounds) -> float:
    """A(eps) from range bounds, using the worst-case alpha2, C1, C2, C'."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if n < 2:
        raise ValueError("n must be at least 2")
    b = bounds
    return (
        6.0
        * math.sqrt(2.0 * (b.C2 + b.Cprime))
        * math.sqrt(b.log_factor(eps, n))
        * (2.0 * math.sqrt(math.exp(2.0 * b.alpha2 + 1.0) / b.C1) + b.Cprime / b.C1)
    )


def delta_from_eps(eps, n, bounds: RangeBounds) -> float:
    """Per-index confidence delta matching an overall failure probability eps."""
    return eps / (1.0 + math.log((bounds.C2 + bounds.Cprime) * n) / bounds.alpha1)


def config_from_bounds(eps, n, bounds: RangeBounds) -> AdaptiveConfig:
    return AdaptiveConfig(delta=delta_from_eps(eps, n, bounds), A=threshold_A_eps(eps, n, bounds))


@dataclass(frozen=True)
class Comparison:
    k: int
    k_prime: int
    alpha_k: float
    alpha_kprime: float
    abs_diff: float
    bound: float

    @property
    def passed(self):
        return self.abs_diff <= self.bound


TRACE_HEADER = ["k", "k_prime", "alpha_k", "alpha_kprime", "abs_diff", "bound", "pass"]


def trace_rows(trace: Sequence[Comparison]):
    return [
        [
            str(c.k),
            str(c.k_prime),
            f"{c.alpha_k:.17g}",
            f"{c.alpha_kprime:.17g}",
            f"{c.abs_diff:.17g}",
            f"{c.bound:.17g}",
            "1" if c.passed else "0",
        ]
        for c in trace
    ]


def select_k_from_probs(probs: Sequence[float], n, config: AdaptiveConfig):
    """Run the selection rule on a sequence of tail probabilities p_0, p_1, ...

    ``probs`` may be empirical or population values; the latter is useful for
    checking the rule without sampling noise.

    Returns ``(k_hat, trace)``.
    """
    floor = config.floor(n)
    # p is nonincreasing, so the admissible set is an initial segment of k's.
    admissible = [k for k in range(len(probs) - 1) if probs[k + 1] > floor]
    if not admissible:
        raise NoAdmissibleK(
            f"no k has p_hat(k+1) above the count floor {floor:.6g}; n={n} too small for delta={config.delta}"
        )
    est = {k: math.log(probs[k]) - math.log(probs[k + 1]) for k in admissible}
    trace = []
    for k in admissible:
        ok = True
        for kp in admissible:
            if kp <= k:
                continue
            cmp = Comparison(
                k, kp, est[k], est[kp], abs(est[kp] - est[k]), config.A / math.sqrt(n * probs[kp + 1])
            )
            trace.append(cmp)
            ok = ok and cmp.passed
        if ok:
            return k, trace
    raise AssertionError("unreachable: the last admissible k has nothing to compare against")


def select_k(data: Dataset, config: AdaptiveConfig):
    table = tail_prob_table(data)
    probs = [table.entries[k] for k in range(table.k_max + 1)]
    return select_k_from_probs(probs, data.n, config)


def adaptive_estimate(data: Dataset, config: AdaptiveConfig) -> EstimateReport:
    table = tail_prob_table(data)
    probs = [table.entries[k] for k in range(table.k_max + 1)]
    k_hat, trace = select_k_from_probs(probs, data.n, config)
    p_k, p_next = probs[k_hat], probs[k_hat + 1]
    return EstimateReport(
        alpha_hat=math.log(p_k) - math.log(p_next),
        k_used=k_hat,
        method=Method.ADAPTIVE,
        n=data.n,
        seed=data.seed,
        diagnostics={
            "k_hat": k_hat,
            "floor": config.floor(data.n),
            "delta": config.delta,
            "A": config.A,
            "p_k": p_k,
            "p_k1": p_next,
            "trace": trace,
        },
    )


@dataclass
class SampleSizeReport:
    ok: bool
    n: float
    threshold: float
    terms: dict = field(default_factory=dict)
    binding: Optional[str] = None


def _report(n, scale, terms):
    binding = max(terms, key=terms.get)
    thr = scale * terms[binding]
    return SampleSizeReport(ok=n > thr, n=n, threshold=thr, terms=terms, binding=binding)


def sample_size_ok(n, params: SecondOrderParams, delta, which="adaptive", bounds=None, eps=None):
    """Check a sufficient sample-size condition and name the binding term.

    ``which`` is ``"oracle"``, ``"adaptive"`` or ``"range_bounds"``; the last
    needs ``bounds`` and ``eps`` and ignores ``params`` and ``delta``.
    """
    if which == "range_bounds":
        if bounds is None or eps is None:
            raise ValueError("range_bounds mode needs bounds and eps")
        b = bounds
        c1 = min(1.0, b.C1)
        cp = max(1.0, b.Cprime)
        e2 = math.exp(2.0 * b.alpha2)
        terms = {
            "count": 32.0 * (2.0 * cp / c1 ** (1.0 + b.beta1)) ** (1.0 / b.beta1),
            "bias": (2.0 * cp / c1) ** (2.0 + 1.0 / b.beta1),
            "floor": (32.0 * e2 / c1) ** (1.0 + 1.0 / (2.0 * b.beta1)),
            "candidate": (96.0 * e2 / c1) ** (2.0 + 1.0 / b.beta1),
        }
        return _report(n, b.log_factor(eps, n), terms)

    a, be, C, Cp = params.alpha, params.beta, params.C, params.Cprime
    L = math.log(2.0 / delta)
    e2 = math.exp(2.0 * a)
    if which == "oracle":
        terms = {
            "bias": (2.0 * Cp / C) ** ((2.0 * be + 1.0) / be),
            "floor": (32.0 * L * e2 / C) ** ((2.0 * be + 1.0) / (2.0 * be)),
        }
        return _report(n, 1.0, terms)
    if which == "adaptive":
        terms = {
            "count": 32.0 * (2.0 * Cp / C ** (1.0 + be)) ** (1.0 / be),
            "bias": (2.0 * Cp / C) ** ((2.0 * be + 1.0) / be),
            "floor": (32.0 * e2 / C) ** ((2.0 * be + 1.0) / (2.0 * be)),
            "candidate": (96.0 * e2 / C) ** ((2.0 * be + 1.0) / be),
        }
        return _report(n, L, terms)
    raise ValueError(f"unknown mode {which!r}")


def constants_B(params: SecondOrderParams, delta, A=None, which="B1", bounds: Optional[RangeBounds] = None):
    """Constants in the high-probability error bounds.

    B1 = 6 sqrt(e^(2 alpha + 1) log(2/delta) / C)
    B2 = (B1 + 2 A sqrt(e^(2 alpha) / C)) / sqrt(log(2/delta))
    B3 depends only on the range bounds.
    """
    a, C, Cp = params.alpha, params.C, params.Cprime
    L = math.log(2.0 / delta)
    b1 = 6.0 * math.sqrt(math.exp(2.0 * a + 1.0) * L / C)
    if which == "B1":
        return b1
    if which == "B2":
        if A is None:
            raise ValueError("B2 needs A")
        return (b1 + 2.0 * A * math.sqrt(math.exp(2.0 * a) / C)) / math.sqrt(L)
    if which == "B3":
        if bounds is None:
            raise ValueError("B3 needs range bounds")
        b = bounds
        return (
            6.0 * math.sqrt(math.exp(2.0 * b.alpha2 + 1.0) / b.C1)
            + 3.0 * b.Cprime / b.C1
            + 24.0 * math.exp(2.0 * b.alpha2) / b.C1 * math.sqrt(2.0 * math.e * (b.C2 + b.Cprime))
            + 12.0 * math.exp(b.alpha2) * b.Cprime / b.C1 * math.sqrt(2.0 * (b.C2 + b.Cprime) / b.C1)
        )
    raise ValueError(f"unknown constant {which!r}")
