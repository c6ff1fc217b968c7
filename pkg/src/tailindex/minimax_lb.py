"""Fano lower-bound construction for adaptive tail-index estimation.

:func:`build_family` produces M piecewise Pareto laws F_1..F_M whose tail
indices alpha_i = alpha - t_i are well separated while their pairwise KL
divergences stay below the Fano budget, so no estimator can tell them apart
at the (n / log log n)^(-beta/(2 beta + 1)) scale. KL divergences are
available in closed form and, independently, by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dist_models import DistributionModel, ExactPareto, PiecewiseLB, SecondOrderParams, verify_membership
from .errors import SupportMismatch, TooSmallN


def upsilon(alpha, beta):
    """min(1, alpha^2 / (8 exp(1 / (alpha (2 beta - 1)))))."""
    return min(1.0, alpha**2 / (8.0 * math.exp(1.0 / (alpha * (2.0 * beta - 1.0)))))


def find_M(n):
    """Smallest integer M >= 2 with floor(log(n / log M)) + 1 = M.

    The scan covers 2..ceil(4 log n); returns None when no integer qualifies.
    """
    log_n = math.log(n)
    for M in range(2, math.ceil(4 * log_n) + 1):
        if math.floor(log_n - math.log(math.log(M))) + 1 == M:
            return M
    return None


def separation_constant(beta):
    """c(beta) = 1 - exp(-1 / (2 (2 beta + 1)^2))."""
    return -math.expm1(-1.0 / (2.0 * (2.0 * beta + 1.0) ** 2))


def lb_scale(alpha, beta, beta_j):
    """B(alpha, beta, beta_j); ``beta_j = inf`` takes the limiting exponent 1/2."""
    expo = 0.5 if math.isinf(beta_j) else beta_j / (2.0 * beta_j + 1.0)
    ratio = alpha**2 / (8.0 * math.exp(1.0 / (alpha * (2.0 * beta - 1.0))))
    return min(1.0, ratio**expo) / (4.0 * (2.0 * beta + 1.0) ** 2)


def lb_constants(alpha1, beta1, beta_j=math.inf):
    """Constants of the lower bound stated over alpha in [alpha1, 2 alpha1], beta >= beta1.

    The family is built at alpha = 2 alpha1 and beta = beta1 + 1. Returns
    ``(c_beta, B, C1, B4)`` where c_beta = c(beta), B = B(alpha, beta, beta_j),
    C1 = exp(-1 / (2 alpha1 (2 beta1 + 1))) and B4 = B(alpha, beta, inf).
    """
    alpha, beta = 2.0 * alpha1, beta1 + 1.0
    c1 = math.exp(-1.0 / (alpha * (2.0 * beta - 1.0)))
    return (
        separation_constant(beta),
        lb_scale(alpha, beta, beta_j),
        c1,
        lb_scale(alpha, beta, math.inf),
    )


@dataclass(frozen=True)
class Member:
    index: int
    beta_i: float
    gamma_i: float
    K_i: float
    t_i: float
    alpha_i: float
    alpha: float

    @property
    def model(self):
        return PiecewiseLB(self.alpha, self.t_i, self.K_i)


@dataclass
class LowerBoundFamily:
    alpha: float
    beta: float
    n: float
    M: int
    upsilon: float
    members: list
    conditions: dict = field(default_factory=dict)

    @property
    def F0(self):
        return ExactPareto(self.alpha, 1.0)

    @property
    def Cprime(self):
        return 1.0 / (self.alpha * (self.beta - 1.0))

    def class_params(self, i):
        """Class S(alpha - t_i, beta_i, K_i^(-t_i), 1/(alpha (beta - 1))) containing F_i (1-based)."""
        m = self.members[i - 1]
        return SecondOrderParams(m.alpha_i, m.beta_i, m.K_i ** (-m.t_i), self.Cprime)

    def rows(self):
        return [
            [str(m.index)] + [f"{v:.17g}" for v in (m.beta_i, m.gamma_i, m.K_i, m.t_i, m.alpha_i)]
            for m in self.members
        ]


FAMILY_HEADER = ["i", "beta_i", "gamma_i", "K_i", "t_i", "alpha_i"]


def _sufficient_conditions(alpha, beta, n, ups, members):
    """Evaluate the sufficient largeness conditions on n (reported, not enforced)."""
    first = 8.0 * math.exp(2.0 / (alpha * (2.0 * beta - 1.0) ** 2)) / alpha**2 <= math.log(math.log(n) / 2.0)
    mn = min(alpha, 1.0 / alpha) / 2.0
    second = all(
        mn * n ** (m.beta_i / (2 * m.beta_i + 1)) > math.log(n / ups) ** (m.beta_i / (2 * m.beta_i + 1) + 1)
        for m in members
    )
    # stated over alpha1 = alpha / 2, beta1 = beta - 1
    a1, b1 = alpha / 2.0, beta - 1.0
    inner = min(1.0, a1**2 / 8.0 * math.exp(-2.0 / (a1 * (2.0 * b1 + 1.0) ** 2)))
    nassump = (min(a1, 1.0 / a1) / 2.0) ** ((2.0 * b1 + 1.0) / b1) * n > math.log(n / inner)
    return {"first_n": first, "second_n": second, "nassumption": nassump, "n_gt_exp16": n > math.exp(16)}


def build_family(alpha, beta, n) -> LowerBoundFamily:
    """Construct the M perturbed Pareto laws used in the Fano argument.

    Hard requirements (raising :class:`TooSmallN`): n >= 2, a fixed point M
    exists, gamma_i > 0, K_i > 1, alpha_i >= alpha/2 and pairwise separation.
    The sufficient largeness conditions on n are evaluated and stored in
    ``family.conditions``.
    """
    alpha, beta, n = float(alpha), float(beta), float(n)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not beta > 1:
        raise ValueError(f"the construction needs beta > 1, got {beta}")
    if n < 2:
        raise TooSmallN("n_ge_2", f"n={n}")
    M = find_M(n)
    if M is None:
        raise TooSmallN("fixed_point_M", f"no integer M with floor(log(n/log M)) + 1 = M for n={n}")
    ups = upsilon(alpha, beta)
    llM = math.log(math.log(M))
    base = n / (ups * math.log(M))
    if not base > 1:
        raise TooSmallN("K_gt_1", f"n / (upsilon log M) = {base} <= 1")
    members = []
    for i in range(1, M + 1):
        b_i = beta - i / M
        g_i = b_i / (2 * b_i + 1) * (1.0 + math.log(ups) / llM) if llM > 0 else -math.inf
        if not g_i > 0:
            raise TooSmallN("gamma_positive", f"gamma_{i} = {g_i} <= 0 (upsilon={ups:.6g}, M={M})")
        K_i = base ** (1.0 / (alpha * (2 * b_i + 1)))
        t_i = base ** (-b_i / (2 * b_i + 1))
        members.append(Member(i, b_i, g_i, K_i, t_i, alpha - t_i, alpha))

    for m in members:
        if not m.alpha_i >= alpha / 2:
            raise TooSmallN("alpha_i_ge_half", f"alpha_{m.index} = {m.alpha_i} < alpha/2")
    c = separation_constant(beta)
    for a in members:
        for b in members:
            if a.index < b.index and abs(a.alpha_i - b.alpha_i) < c * max(a.t_i, b.t_i):
                raise TooSmallN("separation", f"members {a.index}, {b.index} too close")

    conditions = _sufficient_conditions(alpha, beta, n, ups, members)
    return LowerBoundFamily(alpha, beta, n, M, ups, members, conditions)


def kl_f0_fi(alpha, t, K):
    """KL(F_0, F_i) = K^-alpha (log(alpha/(alpha - t)) - t/alpha)."""
    _check_tK(alpha, t, K)
    # -log1p(-x) - x keeps precision for small t
    x = t / alpha
    return K ** (-alpha) * (-math.log1p(-x) - x)


def kl_fi_f0(alpha, t, K):
    """KL(F_i, F_0) = K^-alpha (log((alpha - t)/alpha) + t/(alpha - t))."""
    _check_tK(alpha, t, K)
    x = t / alpha
    return K ** (-alpha) * (math.log1p(-x) + t / (alpha - t))


def kl_upper(alpha, t, K):
    """2 t^2 K^-alpha / alpha^2, valid for both directions when t <= alpha/2."""
    return 2.0 * t * t * K ** (-alpha) / alpha**2


def _check_tK(alpha, t, K):
    if not 0 < t < alpha:
        raise ValueError("need 0 < t < alpha")
    if not K > 1:
        raise ValueError("need K > 1")


def kl_fi_fj_bound(family: LowerBoundFamily, i, j):
    """Closed-form upper bound on KL(F_i, F_j), i != j (1-based indices)."""
    if i == j:
        raise ValueError("i and j must differ")
    a, b = family.members[i - 1], family.members[j - 1]
    al = family.alpha
    pref = 2.0 * math.exp(1.0 / (al * (2.0 * family.beta - 1.0))) / al**2
    return pref * (a.t_i**2 * a.K_i ** (-al) + b.t_i**2 * b.K_i ** (-al))


def _tail_kl(p_tail, q_tail, X):
    """Analytic integral of f_p log(f_p/f_q) over [X, inf) for pure power-law densities.

    Densities are exp(lc) x^-(r+1); requires r_p > 0.
    """
    lp, rp, _ = p_tail
    lq, rq, _ = q_tail
    lX = math.log(X)
    mass = math.exp(lp - rp * lX) / rp  # int f_p
    mean_log = mass * (lX + 1.0 / rp)  # int f_p log x
    return (lp - lq) * mass + (rq - rp) * mean_log


_LOG_X_MAX = 700.0


def kl_numeric(p: DistributionModel, q: DistributionModel, tail_factor=1e3):
    """KL(p, q) by adaptive quadrature in u = log x.

    Beyond a cutoff where both densities are exact power laws the remainder
    is integrated analytically; otherwise quadrature runs up to x = e^700.
    """
    lo = p.support_left
    if q.support_left > lo * (1 + 1e-14):
        raise SupportMismatch(f"p charges [{lo}, {q.support_left}) where q has no mass")
    kinks = sorted({b for b in (*p.breakpoints, *q.breakpoints) if b >= lo})
    X = max(kinks) * tail_factor
    pt, qt = p.power_tail(), q.power_tail()
    analytic_tail = pt is not None and qt is not None and pt[2] <= X and qt[2] <= X

    def integrand(u):
        if u > _LOG_X_MAX:
            return 0.0  # x itself is no longer representable
        x = math.exp(u)
        lp = float(p.log_density(x))
        if lp == -math.inf:
            return 0.0
        return math.exp(lp + u) * (lp - float(q.log_density(x)))

    edges = [math.log(b) for b in kinks] + [math.log(X)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += integrate.quad(integrand, a, b, epsabs=1e-16, epsrel=1e-12, limit=200)[0]
    if analytic_tail:
        total += _tail_kl(pt, qt, X)
    else:
        total += integrate.quad(integrand, edges[-1], math.inf, epsabs=1e-16, epsrel=1e-12, limit=200)[0]
    return total


@dataclass
class FanoReport:
    M: int
    upsilon: float
    avg_kl_term: float
    prob_lower: float
    budget_ok: bool

    def rows(self):
        return [
            ["M", str(self.M)],
            ["upsilon", f"{self.upsilon:.17g}"],
            ["avg_kl_term", f"{self.avg_kl_term:.17g}"],
            ["fano_lower_bound", f"{self.prob_lower:.17g}"],
        ]


def fano_inequality(nkl, M=None):
    """Fano lower bound on P(Z != Y) from a matrix of n KL(P_j, P_j').

    Returns ``(prob_lower, avg_kl_term)`` with the probability clipped to [0, 1].
    """
    nkl = np.asarray(nkl, dtype=float)
    M = nkl.shape[0] if M is None else M
    if M < 2:
        raise ValueError("need at least two hypotheses")
    avg = float(nkl.sum()) / M**2
    prob = 1.0 - (avg + math.log(2.0)) / math.log(M)
    return min(1.0, max(0.0, prob)), avg


def pairwise_nkl(family: LowerBoundFamily, audit=False):
    """Matrix of n KL(F_i, F_j): closed-form bounds, or quadrature when ``audit``."""
    M = family.M
    out = np.zeros((M, M))
    models = [m.model for m in family.members] if audit else None
    for i in range(1, M + 1):
        for j in range(1, M + 1):
            if i == j:
                continue
            kl = kl_numeric(models[i - 1], models[j - 1]) if audit else kl_fi_fj_bound(family, i, j)
            out[i - 1, j - 1] = family.n * kl
    return out


def fano_bound(family: LowerBoundFamily, audit=False) -> FanoReport:
    prob, avg = fano_inequality(pairwise_nkl(family, audit), family.M)
    return FanoReport(family.M, family.upsilon, avg, prob, avg <= 0.5 * math.log(family.M))


def check_membership(family: LowerBoundFamily, points=200, span=1e6):
    """Largest membership violation over all members on a log grid of [1, span]."""
    grid = np.geomspace(1.0, span, points)
    return max(
        verify_membership(m.model, family.class_params(m.index), grid).max_violation
        for m in family.members
    )


def separation_margins(family: LowerBoundFamily):
    """min over pairs of |alpha_i - alpha_j| - c(beta) max(t_i, t_j)."""
    c = separation_constant(family.beta)
    ms = family.members
    return min(
        abs(a.alpha_i - b.alpha_i) - c * max(a.t_i, b.t_i)
        for k, a in enumerate(ms)
        for b in ms[k + 1:]
    )
