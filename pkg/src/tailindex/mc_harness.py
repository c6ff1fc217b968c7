"""Seeded Monte Carlo experiments: estimator sweeps, rate fits and coverage.

Every trial draws its own dataset from a seed derived from
(base_seed, n, trial_index), and every configured method is applied to that
same dataset. Results are returned in canonical (n, trial, method) order, so
output is identical whether trials run serially or in worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng
from .adaptive_select import AdaptiveConfig, RangeBounds, adaptive_estimate, config_from_bounds, threshold_A
from .dist_models import Dataset, DistributionModel, SecondOrderParams, sample
from .errors import EstimationError, InsufficientData
from .tail_estimators import (
    EstimateReport,
    alpha_hat_k,
    alpha_hat_uv,
    alpha_tilde_quantile,
    bernstein_radius,
    consistency_k,
    format_k,
    hill,
    oracle_estimate,
    plugin_estimate,
    stochastic_radius,
)


_METHOD_RE = re.compile(r"^\s*([\w-]+)\s*(?:\((.*)\)|:(.*)|\s+(.*))?\s*$")

_KINDS = {"oracle", "adaptive", "plugin", "tail_event", "consistency", "hill", "uv", "quantile_dual"}


@dataclass(frozen=True)
class MethodSpec:
    """An estimator and its options, e.g. ``hill(r=0.01)``."""

    kind: str
    options: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown method {self.kind!r}; choose from {sorted(_KINDS)}")

    def get(self, key, default=None):
        return dict(self.options).get(key, default)

    @property
    def label(self):
        if not self.options:
            return self.kind
        return f"{self.kind}(" + ",".join(f"{k}={v}" for k, v in self.options) + ")"


def parse_method(text) -> MethodSpec:
    """Parse ``name(k=v,...)``, ``name:k=v,...`` or ``name k=v ...``; dashes map to underscores."""
    m = _METHOD_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse method {text!r}")
    kind = m.group(1).replace("-", "_")
    body = next((g for g in m.group(2, 3, 4) if g is not None), "")
    opts = []
    for item in re.split(r"[,\s]+", body.strip()):
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value in method options, got {item!r}")
        opts.append((key.strip(), value.strip()))
    return MethodSpec(kind, tuple(opts))


def _float_opt(spec, key, default=None):
    v = spec.get(key)
    if v is None:
        if default is None:
            raise ValueError(f"method {spec.kind} needs option {key}")
        return default
    return float(v)


def adaptive_config(spec: MethodSpec, n, truth: Optional[SecondOrderParams]) -> AdaptiveConfig:
    """Resolve an adaptive method's A.

    ``A=<number>`` is used as given. ``A=auto`` computes threshold_A from the
    ground-truth constants. With ``eps`` and range bounds present, A and delta
    come from the bounds instead.
    """
    if spec.get("eps") is not None:
        bounds = RangeBounds(
            *(_float_opt(spec, k) for k in ("alpha1", "alpha2", "beta1", "C1", "C2", "Cprime"))
        )
        return config_from_bounds(_float_opt(spec, "eps"), n, bounds)
    delta = _float_opt(spec, "delta", 0.05)
    A = spec.get("A", "auto")
    if A == "auto":
        if truth is None:
            raise ValueError("A=auto needs ground-truth parameters")
        A = threshold_A(delta, truth)
    return AdaptiveConfig(delta=delta, A=float(A), count_floor_multiplier=_float_opt(spec, "floor", 24.0))


def apply_method(spec: MethodSpec, data: Dataset, truth: Optional[SecondOrderParams] = None) -> EstimateReport:
    kind = spec.kind
    if kind == "oracle":
        if truth is None:
            raise ValueError("the oracle method needs ground-truth parameters")
        return oracle_estimate(data, truth.alpha, truth.beta)
    if kind == "plugin":
        beta = spec.get("beta")
        if beta is None:
            if truth is None:
                raise ValueError("plugin needs beta")
            beta = truth.beta
        return plugin_estimate(data, float(beta))
    if kind == "adaptive":
        return adaptive_estimate(data, adaptive_config(spec, data.n, truth))
    if kind == "tail_event":
        return alpha_hat_k(data, int(_float_opt(spec, "k")))
    if kind == "consistency":
        return alpha_hat_k(data, consistency_k(data.n))
    if kind == "hill":
        return hill(data, _float_opt(spec, "r"))
    if kind == "uv":
        return alpha_hat_uv(data, _float_opt(spec, "u"), _float_opt(spec, "v"))
    if kind == "quantile_dual":
        return alpha_tilde_quantile(data, _float_opt(spec, "q_u"), _float_opt(spec, "q_v"))
    raise AssertionError(kind)


@dataclass(frozen=True)
class ExperimentConfig:
    model: DistributionModel
    params: SecondOrderParams
    n_grid: tuple
    trials: int
    base_seed: int
    methods: tuple

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("n_grid must be a nonempty strictly increasing list of positive sizes")
        if int(self.trials) < 1:
            raise ValueError("trials must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        methods = tuple(m if isinstance(m, MethodSpec) else parse_method(m) for m in self.methods)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "base_seed", rng.check_seed(self.base_seed))
        object.__setattr__(self, "methods", methods)


@dataclass(frozen=True)
class TrialRecord:
    n: int
    trial: int
    seed: int
    method: str
    alpha_hat: float
    abs_error: float
    k_or_params: str
    flags: str = ""

    @property
    def failed(self):
        return bool(self.flags)


def _run_trial(config: ExperimentConfig, n, trial):
    seed = rng.trial_seed(config.base_seed, n, trial)
    data = sample(config.model, n, seed)
    out = []
    for spec in config.methods:
        try:
            rep = apply_method(spec, data, config.params)
        except EstimationError as exc:
            out.append(TrialRecord(n, trial, seed, spec.label, math.nan, math.nan, "", type(exc).__name__))
            continue
        out.append(
            TrialRecord(
                n, trial, seed, spec.label, rep.alpha_hat, abs(rep.alpha_hat - config.params.alpha), format_k(rep.k_used)
            )
        )
    return out


def _run_chunk(args):
    config, jobs = args
    return [rec for n, t in jobs for rec in _run_trial(config, n, t)]


def run_experiment(config: ExperimentConfig, workers=1) -> list:
    """Run every (n, trial) cell; estimator failures are recorded in ``flags``."""
    jobs = [(n, t) for n in config.n_grid for t in range(config.trials)]
    if workers <= 1:
        records = _run_chunk((config, jobs))
    else:
        chunks = [jobs[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks]) for r in part]
    order = {spec.label: i for i, spec in enumerate(config.methods)}
    records.sort(key=lambda r: (r.n, r.trial, order[r.method]))
    return records


TRIAL_HEADER = ["n", "trial", "seed", "method", "alpha_hat", "abs_error", "k_or_params", "flags"]
SUMMARY_HEADER = ["n", "method", "median_error", "q25", "q75", "fail_count"]
RATE_HEADER = ["method", "slope", "intercept", "r_squared"]


def _g(x):
    return f"{x:.17g}"


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def records_csv(records: Sequence[TrialRecord]) -> str:
    return _csv(
        TRIAL_HEADER,
        (
            [r.n, r.trial, r.seed, r.method, _g(r.alpha_hat), _g(r.abs_error), r.k_or_params, r.flags]
            for r in records
        ),
    )


def parse_records_csv(text) -> list:
    rows = csv.DictReader(io.StringIO(text))
    return [
        TrialRecord(
            int(r["n"]),
            int(r["trial"]),
            int(r["seed"]),
            r["method"],
            float(r["alpha_hat"]),
            float(r["abs_error"]),
            r["k_or_params"],
            r["flags"],
        )
        for r in rows
    ]


@dataclass(frozen=True)
class SummaryRow:
    n: int
    method: str
    median_error: float
    q25: float
    q75: float
    fail_count: int


def summarize(records: Sequence[TrialRecord]) -> list:
    groups = {}
    for r in records:
        groups.setdefault((r.n, r.method), []).append(r)
    out = []
    for (n, method), rs in groups.items():
        errs = np.array([r.abs_error for r in rs if not r.failed])
        fails = sum(r.failed for r in rs)
        if errs.size:
            q25, med, q75 = np.quantile(errs, [0.25, 0.5, 0.75])
        else:
            q25 = med = q75 = math.nan
        out.append(SummaryRow(n, method, float(med), float(q25), float(q75), fails))
    return out


def summary_csv(rows) -> str:
    return _csv(
        SUMMARY_HEADER,
        ([r.n, r.method, _g(r.median_error), _g(r.q25), _g(r.q75), r.fail_count] for r in rows),
    )


@dataclass
class RateFit:
    method: str
    slope: float
    intercept: float
    r_squared: float
    points: list = field(default_factory=list)


def fit_rate(records: Sequence[TrialRecord], method, min_sizes=3, min_trials=30) -> RateFit:
    """Least-squares fit of log(median abs error) against log n.

    Failed trials are left out of the medians. Needs at least ``min_sizes``
    sample sizes, each with ``min_trials`` successful trials.
    """
    by_n = {}
    for r in records:
        if r.method == method and not r.failed:
            by_n.setdefault(r.n, []).append(r.abs_error)
    usable = {n: e for n, e in by_n.items() if len(e) >= min_trials}
    if len(usable) < min_sizes:
        raise InsufficientData(
            f"{method}: need {min_sizes} sample sizes with >= {min_trials} successful trials, "
            f"have {len(usable)}"
        )
    ns = sorted(usable)
    x = np.log(np.array(ns, dtype=float))
    y = np.log(np.array([np.median(usable[n]) for n in ns]))
    if not np.all(np.isfinite(y)):
        raise InsufficientData(f"{method}: a median error is zero")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(method, float(slope), float(intercept), r2, list(zip(x.tolist(), y.tolist())))


def rate_csv(fits) -> str:
    return _csv(RATE_HEADER, ([f.method, _g(f.slope), _g(f.intercept), _g(f.r_squared)] for f in fits))


# Coverage of deviation inequalities.


class BoundSpec:
    """An inequality whose probability of holding is checked by simulation."""

    guaranteed = 0.0

    def holds(self, data: Dataset, model: DistributionModel) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Bernstein(BoundSpec):
    """|p_hat(k) - p_k| <= 2 sqrt(p_k log(2/delta) / n), with probability 1 - delta."""

    k: int
    delta: float

    @property
    def guaranteed(self):
        return 1.0 - self.delta

    def holds(self, data, model):
        p = float(model.survival(math.exp(self.k)))
        p_hat = data.count_above(math.exp(self.k)) / data.n
        return abs(p_hat - p) <= bernstein_radius(data.n, self.delta, p)


@dataclass(frozen=True)
class LargeDeviation(BoundSpec):
    """|alpha_hat(k) - (log p_k - log p_(k+1))| <= 6 sqrt(log(2/delta) / (n p_(k+1))).

    Holds with probability 1 - 2 delta when p_(k+1) >= 16 log(2/delta)/n.
    An empty tail counts as a violation.
    """

    k: int
    delta: float

    @property
    def guaranteed(self):
        return 1.0 - 2.0 * self.delta

    def holds(self, data, model):
        p_k = float(model.survival(math.exp(self.k)))
        p_next = float(model.survival(math.exp(self.k + 1)))
        try:
            est = alpha_hat_k(data, self.k).alpha_hat
        except EstimationError:
            return False
        target = math.log(p_k) - math.log(p_next)
        return abs(est - target) <= stochastic_radius(data.n, self.delta, p_next)


@dataclass(frozen=True)
class LargeDeviationBiased(BoundSpec):
    """|alpha_hat(k) - alpha| <= 6 sqrt(log(2/delta)/(n p_(k+1))) + (3C'/C) e^(-k alpha beta)."""

    k: int
    delta: float
    params: SecondOrderParams

    @property
    def guaranteed(self):
        return 1.0 - 2.0 * self.delta

    def holds(self, data, model):
        p_next = float(model.survival(math.exp(self.k + 1)))
        try:
            est = alpha_hat_k(data, self.k).alpha_hat
        except EstimationError:
            return False
        a = self.params
        bias = 3.0 * a.Cprime / a.C * math.exp(-self.k * a.alpha * a.beta)
        return abs(est - a.alpha) <= stochastic_radius(data.n, self.delta, p_next) + bias


@dataclass(frozen=True)
class StochasticDominance(BoundSpec):
    """p_hat(k) <= 24 log(2/delta)/n for every k beyond the last index K with p_K >= 16 log(2/delta)/n.

    By monotonicity of p_hat it suffices to check k = K + 1.
    """

    delta: float

    @property
    def guaranteed(self):
        return 1.0 - self.delta

    def last_index(self, model, n):
        floor = 16.0 * math.log(2.0 / self.delta) / n
        K = 0
        while float(model.survival(math.exp(K + 1))) >= floor:
            K += 1
        return K

    def holds(self, data, model):
        K = self.last_index(model, data.n)
        return data.count_above(math.exp(K + 1)) / data.n <= 24.0 * math.log(2.0 / self.delta) / data.n


@dataclass(frozen=True)
class Vacuous(BoundSpec):
    guaranteed = 1.0

    def holds(self, data, model):
        return True


@dataclass(frozen=True)
class CoverageResult:
    hits: int
    trials: int
    guaranteed: float

    @property
    def frequency(self):
        return self.hits / self.trials

    @property
    def sigma(self):
        g = self.guaranteed
        return math.sqrt(g * (1.0 - g) / self.trials)


def coverage_of(spec: BoundSpec, datasets, model: DistributionModel) -> CoverageResult:
    """Fraction of the given datasets on which the inequality holds."""
    hits = trials = 0
    for d in datasets:
        trials += 1
        hits += bool(spec.holds(d, model))
    if trials == 0:
        raise InsufficientData("no datasets")
    return CoverageResult(hits, trials, spec.guaranteed)


def coverage(spec: BoundSpec, model: DistributionModel, n, trials, base_seed) -> CoverageResult:
    """Simulate ``trials`` seeded datasets of size n and count how often ``spec`` holds."""
    datasets = (sample(model, n, rng.trial_seed(base_seed, n, t)) for t in range(trials))
    return coverage_of(spec, datasets, model)
