import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tailindex.dist_models import ExactPareto, PerturbedPareto, PiecewiseLB
from tailindex.errors import SupportMismatch, TooSmallN
from tailindex.minimax_lb import (
    FAMILY_HEADER,
    build_family,
    check_membership,
    fano_bound,
    fano_inequality,
    find_M,
    kl_f0_fi,
    kl_fi_f0,
    kl_fi_fj_bound,
    kl_numeric,
    kl_upper,
    lb_constants,
    lb_scale,
    separation_constant,
    separation_margins,
    upsilon,
)

from . import oracles


@pytest.fixture(scope="module")
def family():
    return build_family(2, 2, 1e8)


def test_upsilon_formula():
    assert upsilon(2, 2) == pytest.approx(4 / (8 * math.exp(1 / 6)), rel=1e-15)
    assert upsilon(2, 2) == pytest.approx(0.4232409, abs=1e-7)
    assert upsilon(10, 2) == 1.0
    assert upsilon(2, 2) == oracles.upsilon(2, 2)


def test_find_M_fixed_point():
    for n in (math.exp(math.e), 1e3, 1e8, 1e15):
        M = find_M(n)
        assert M is not None
        assert math.floor(math.log(n / math.log(M))) + 1 == M
        assert all(math.floor(math.log(n / math.log(m))) + 1 != m for m in range(2, M))


def test_family_invariants(family):
    f = family
    assert f.M == find_M(1e8)
    assert math.log(f.n) / 2 < f.M < 2 * math.log(f.n)
    for m in f.members:
        assert m.beta_i == pytest.approx(f.beta - m.index / f.M)
        assert m.K_i == pytest.approx((f.n / (f.upsilon * math.log(f.M))) ** (1 / (f.alpha * (2 * m.beta_i + 1))))
        assert m.t_i == pytest.approx(m.K_i ** (-f.alpha * m.beta_i), rel=1e-12)
        assert m.alpha_i == f.alpha - m.t_i
        assert f.alpha / 2 <= m.alpha_i < f.alpha
        assert m.gamma_i > 0


def test_family_ordering(family):
    ts = [m.t_i for m in family.members]
    alphas = [m.alpha_i for m in family.members]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    assert all(a > b for a, b in zip(alphas, alphas[1:]))


def test_family_rows(family):
    rows = family.rows()
    assert len(rows) == family.M and all(len(r) == len(FAMILY_HEADER) for r in rows)


def test_family_conditions_reported(family):
    assert family.conditions["n_gt_exp16"]
    assert set(family.conditions) == {"first_n", "second_n", "nassumption", "n_gt_exp16"}


def test_build_family_errors():
    with pytest.raises(ValueError):
        build_family(2, 1, 1e8)
    with pytest.raises(TooSmallN) as info:
        build_family(2, 2, 10)
    assert info.value.condition in {"gamma_positive", "fixed_point_M", "K_gt_1", "alpha_i_ge_half", "separation"}
    with pytest.raises(TooSmallN) as info:
        build_family(2, 2, 1.5)
    assert info.value.condition == "n_ge_2"


def test_kl_closed_form_examples():
    assert kl_f0_fi(1, 0.5, 2) == pytest.approx(0.5 * (math.log(2) - 0.5), rel=1e-14)
    assert kl_f0_fi(1, 0.5, 2) == pytest.approx(0.0965736, abs=1e-7)
    assert kl_fi_f0(1, 0.5, 2) == pytest.approx(0.5 * (math.log(0.5) + 1), rel=1e-14)
    assert kl_fi_f0(1, 0.5, 2) == pytest.approx(0.153426, abs=1e-6)


def test_kl_vanishes_as_t_shrinks():
    assert kl_f0_fi(1.5, 1e-8, 3) < 1e-16
    assert kl_fi_f0(1.5, 1e-8, 3) < 1e-16


def test_kl_closed_forms_match_x_space_quadrature():
    for a, t, K in ((1, 0.5, 2), (2, 0.3, 10), (0.7, 0.6, 1.5)):
        assert kl_f0_fi(a, t, K) == pytest.approx(oracles.kl_piecewise_vs_pareto(a, t, K), rel=1e-7)
        assert kl_fi_f0(a, t, K) == pytest.approx(oracles.kl_piecewise_vs_pareto(a, t, K, reverse=True), rel=1e-7)


def test_kl_numeric_identity_and_cross_checks():
    p = PiecewiseLB(1, 0.5, 2)
    assert abs(kl_numeric(p, p)) < 1e-10
    assert abs(kl_numeric(ExactPareto(1, 1), ExactPareto(1, 1))) < 1e-10
    assert kl_numeric(ExactPareto(1, 1), p) == pytest.approx(kl_f0_fi(1, 0.5, 2), rel=1e-6)
    assert kl_numeric(p, ExactPareto(1, 1)) == pytest.approx(kl_fi_f0(1, 0.5, 2), rel=1e-6)


def test_kl_numeric_exact_pareto_pair():
    # KL(Par(a), Par(b)) with common support [1, inf) = log(a/b) + b/a - 1
    a, b = 2.0, 1.3
    assert kl_numeric(ExactPareto(a, 1), ExactPareto(b, 1)) == pytest.approx(math.log(a / b) + b / a - 1, rel=1e-9)


def test_kl_numeric_perturbed_is_finite_and_positive():
    p = PerturbedPareto(1, 1, 1, 0.5)
    q = ExactPareto(1, 1)
    v = kl_numeric(p, q)
    assert math.isfinite(v) and v > 0


def test_kl_numeric_support_mismatch():
    with pytest.raises(SupportMismatch):
        kl_numeric(ExactPareto(1, 1), ExactPareto(1, 4))


def test_kl_upper_bounds_both_directions():
    for a in (0.5, 1, 2, 4):
        for frac in (0.05, 0.2, 0.5):
            t = frac * a
            assert kl_f0_fi(a, t, 3) <= kl_upper(a, t, 3)
            assert kl_fi_f0(a, t, 3) <= kl_upper(a, t, 3)


def test_pairwise_bound_symmetric_and_rejects_diagonal(family):
    assert kl_fi_fj_bound(family, 2, 5) == kl_fi_fj_bound(family, 5, 2)
    with pytest.raises(ValueError):
        kl_fi_fj_bound(family, 3, 3)


def test_pairwise_quadrature_below_bound_first_pair(family):
    p, q = family.members[0].model, family.members[1].model
    assert kl_numeric(p, q) <= kl_fi_fj_bound(family, 1, 2)


def test_fano_inequality_examples():
    M = 7
    prob, avg = fano_inequality(np.zeros((M, M)))
    assert avg == 0 and prob == pytest.approx(1 - math.log(2) / math.log(M))
    # M = 2 with the averaged term equal to log 2: 1 - 2 log 2 / log 2 = -1, clipped
    prob, avg = fano_inequality(np.full((2, 2), math.log(2)))
    assert avg == pytest.approx(math.log(2)) and prob == 0.0


def test_fano_bound_at_large_n(family):
    rep = fano_bound(family)
    assert rep.prob_lower >= 0.25
    assert rep.budget_ok and rep.avg_kl_term <= 0.5 * math.log(family.M)
    assert rep.M == family.M and rep.upsilon == family.upsilon


def test_membership_and_separation(family):
    assert check_membership(family) <= 0
    assert separation_margins(family) >= 0


def test_separation_constant_examples():
    assert separation_constant(1) == pytest.approx(1 - math.exp(-1 / 18), rel=1e-14)
    assert separation_constant(1) == pytest.approx(0.0540405, abs=1e-7)


@given(st.floats(0.01, 100))
def test_separation_constant_in_unit_interval(beta):
    c = separation_constant(beta)
    assert 0 < c <= 1
    # 1 - e^-u <= u, the direction that actually holds
    assert c <= 1 / (2 * (2 * beta + 1) ** 2)


def test_lb_constants_limits():
    c, B, C1, B4 = lb_constants(1.0, 1.0, math.inf)
    assert c == separation_constant(2.0)
    assert B == B4 == lb_scale(2.0, 2.0, math.inf)
    assert C1 == pytest.approx(math.exp(-1 / (2 * 1.0 * 3)))
    assert lb_scale(2.0, 2.0, 1e12) == pytest.approx(B4, rel=1e-9)
    ratio = 4 / (8 * math.exp(1 / 6))
    assert B4 == pytest.approx(min(1, ratio**0.5) / (4 * 25))


@pytest.mark.parametrize("alpha,beta,n", [(2, 2, 1e10), (2, 3, 1e8), (4, 2, 1e8), (4, 3, 1e12), (2, 1.5, 1e12)])
def test_kl_budget_when_size_conditions_hold(alpha, beta, n):
    fam = build_family(alpha, beta, n)
    assert fam.conditions["first_n"] and fam.conditions["second_n"]
    rep = fano_bound(fam)
    assert rep.avg_kl_term <= 0.5 * math.log(fam.M)
    assert rep.prob_lower >= 0.25
