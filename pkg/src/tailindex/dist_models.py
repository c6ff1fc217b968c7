"""Second-order Pareto distribution families, sampling and class membership.

Three families are provided:

* :class:`ExactPareto`, survival ``C x^-alpha`` from ``C^(1/alpha)`` on;
* :class:`PerturbedPareto`, survival ``C x^-alpha (1 + c x^(-alpha beta))``;
* :class:`PiecewiseLB`, a Pareto law whose tail index drops from ``alpha`` to
  ``alpha - t`` beyond a kink at ``K``. These are the alternatives used in the
  Fano lower-bound construction.

Survival functions, quantiles and densities accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import rng
from .errors import ConvergenceError, ModelError

_RTOL = 1e-14
_MAX_ITER = 200


def _scalar_or_array(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ModelError(f"{name} must be a positive finite real, got {value}")
    return value


@dataclass(frozen=True)
class SecondOrderParams:
    """Parameters (alpha, beta, C, C') of a class S(alpha, beta, C, C')."""

    alpha: float
    beta: float
    C: float
    Cprime: float

    def __post_init__(self):
        for name in ("alpha", "beta", "C", "Cprime"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))


@dataclass(frozen=True)
class ExactPareto:
    alpha: float
    C: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))
        object.__setattr__(self, "C", _positive("C", self.C))

    @property
    def support_left(self):
        return self.C ** (1.0 / self.alpha)

    @property
    def breakpoints(self):
        return (self.support_left,)

    def canonical(self):
        return f"exact_pareto(alpha={self.alpha!r},C={self.C!r})"

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            s = np.where(x <= self.support_left, 1.0, self.C * x ** (-self.alpha))
        return _scalar_or_array(s, x)

    def quantile(self, p):
        p = _check_prob(p)
        return _scalar_or_array((self.C / p) ** (1.0 / self.alpha), p)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ld = math.log(self.alpha * self.C) - (self.alpha + 1.0) * np.log(x)
        return _scalar_or_array(np.where(x >= self.support_left, ld, -np.inf), x)

    def power_tail(self):
        """(log coefficient, exponent r, start) with density coef * x^-(r+1) beyond start."""
        return math.log(self.alpha * self.C), self.alpha, self.support_left


@dataclass(frozen=True)
class PerturbedPareto:
    """Pareto law with a signed second-order perturbation.

    The support starts where the perturbed survival function reaches 1.
    Negative ``c`` is accepted as long as the survival function stays
    nonincreasing on the support; otherwise construction fails.
    """

    alpha: float
    beta: float
    C: float
    c: float
    support_left: float = field(init=False, repr=False, compare=False)
    _y_left: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("alpha", "beta", "C"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        c = float(self.c)
        if not math.isfinite(c):
            raise ModelError(f"c must be finite, got {c}")
        object.__setattr__(self, "c", c)

        # Work in y = x^-alpha, where survival is C (y + c y^(beta+1)).
        if c >= 0:
            y_hi = 1.0 / self.C
        else:
            # Survival stops increasing in y (so decreasing in x) at y_max.
            log_y_max = math.log(-1.0 / (c * (self.beta + 1.0))) / self.beta
            y_max = math.exp(log_y_max) if log_y_max < 700 else math.inf
            y_hi = min(1.0 / self.C, y_max)
            while y_hi < y_max and self._surv_y(y_hi) < 1.0:
                y_hi = min(2.0 * y_hi, y_max)
            if self._surv_y(y_hi) < 1.0:
                raise ModelError(
                    "survival never reaches 1 while monotone; |c| too large for this (alpha, beta, C)"
                )
        y_left = float(self._invert(np.array([1.0]), y_hi)[0])
        object.__setattr__(self, "_y_left", y_left)
        object.__setattr__(self, "support_left", y_left ** (-1.0 / self.alpha))

    def _surv_y(self, y):
        return self.C * (y + self.c * y ** (self.beta + 1.0))

    def _invert(self, p, y_hi):
        """Solve C (y + c y^(beta+1)) = p on (0, y_hi] by safeguarded Newton.

        Newton steps that leave the current bracket are replaced by bisection,
        so convergence never depends on the starting point.
        """
        C, c, beta = self.C, self.c, self.beta
        lo = np.zeros_like(p)
        hi = np.full_like(p, y_hi)
        y = np.minimum(p / C, hi)
        for _ in range(_MAX_ITER):
            yb = y**beta
            g = C * (y + c * y * yb) - p
            gp = C * (1.0 + c * (beta + 1.0) * yb)
            above = g > 0
            hi = np.where(above, y, hi)
            lo = np.where(above, lo, y)
            with np.errstate(divide="ignore", invalid="ignore"):
                y_new = y - g / gp
            outside = ~((y_new > lo) & (y_new < hi))
            y_new = np.where(outside, 0.5 * (lo + hi), y_new)
            y_new = np.where(g == 0, y, y_new)
            done = np.abs(y_new - y) <= _RTOL * y_new
            y = y_new
            if done.all():
                return y
        raise ConvergenceError("quantile inversion did not converge; malformed model?")

    @property
    def breakpoints(self):
        return (self.support_left,)

    def canonical(self):
        return (
            f"perturbed_pareto(alpha={self.alpha!r},beta={self.beta!r},"
            f"C={self.C!r},c={self.c!r})"
        )

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            y = x ** (-self.alpha)
            s = np.where(x <= self.support_left, 1.0, self._surv_y(y))
        return _scalar_or_array(s, x)

    def quantile(self, p):
        p = _check_prob(p)
        y = self._invert(np.atleast_1d(p).astype(float), self._y_left)
        x = y ** (-1.0 / self.alpha)
        return _scalar_or_array(x if np.ndim(p) else x[0], p)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.alpha, self.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            dens = self.C * a * np.exp(-(a + 1.0) * lx) * (
                1.0 + self.c * (1.0 + b) * np.exp(-a * b * lx)
            )
            ld = np.log(dens)
        return _scalar_or_array(np.where(x >= self.support_left, ld, -np.inf), x)

    def power_tail(self):
        if self.c == 0:
            return math.log(self.alpha * self.C), self.alpha, self.support_left
        return None


@dataclass(frozen=True)
class PiecewiseLB:
    """Survival x^-alpha on [1, K], continued as K^-t x^-(alpha - t) beyond K."""

    alpha: float
    t: float
    K: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))
        object.__setattr__(self, "t", _positive("t", self.t))
        object.__setattr__(self, "K", _positive("K", self.K))
        if not self.t < self.alpha:
            raise ModelError(f"need 0 < t < alpha, got t={self.t}, alpha={self.alpha}")
        if not self.K > 1:
            raise ModelError(f"need K > 1, got {self.K}")

    support_left = 1.0

    @property
    def breakpoints(self):
        return (1.0, self.K)

    def canonical(self):
        return f"piecewise_lb(alpha={self.alpha!r},t={self.t!r},K={self.K!r})"

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        a, t, K = self.alpha, self.t, self.K
        with np.errstate(divide="ignore"):
            s = np.where(
                x <= 1.0,
                1.0,
                np.where(x <= K, x ** (-a), K ** (-t) * x ** (-(a - t))),
            )
        return _scalar_or_array(s, x)

    def quantile(self, p):
        p = _check_prob(p)
        a, t, K = self.alpha, self.t, self.K
        with np.errstate(over="ignore"):
            x = np.where(
                p >= K ** (-a),
                p ** (-1.0 / a),
                (K ** (-t) / p) ** (1.0 / (a - t)),
            )
        return _scalar_or_array(x, p)

    def log_density(self, x):
        # right-limit value at the kink
        x = np.asarray(x, dtype=float)
        a, t, K = self.alpha, self.t, self.K
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            body = math.log(a) - (a + 1.0) * lx
            tail = math.log(a - t) - t * math.log(K) - (a - t + 1.0) * lx
            ld = np.where(x < K, body, tail)
        return _scalar_or_array(np.where(x >= 1.0, ld, -np.inf), x)

    def power_tail(self):
        a, t, K = self.alpha, self.t, self.K
        return math.log(a - t) - t * math.log(K), a - t, K


DistributionModel = Union[ExactPareto, PerturbedPareto, PiecewiseLB]


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p <= 1))):
        raise ValueError("probabilities must lie in (0, 1]")
    return p


def survival(model: DistributionModel, x):
    """Evaluate 1 - F(x)."""
    return model.survival(x)


def quantile(model: DistributionModel, p):
    """Return x with survival(model, x) = p, for p in (0, 1]."""
    return model.quantile(p)


def density(model: DistributionModel, x):
    return np.exp(model.log_density(x))


def default_params(model: DistributionModel) -> SecondOrderParams:
    """Class parameters a model is known to satisfy.

    Exact Pareto laws sit in every S(alpha, beta, C, C'), so beta and C' are
    placeholders there. Piecewise laws need their beta from the construction
    that produced them and are not handled here.
    """
    if isinstance(model, ExactPareto):
        return SecondOrderParams(model.alpha, 1.0, model.C, 1e-12)
    if isinstance(model, PerturbedPareto):
        cp = abs(model.c) * model.C
        return SecondOrderParams(model.alpha, model.beta, model.C, cp if cp > 0 else 1e-12)
    raise ModelError(f"no default class parameters for {model.canonical()}")


_MODEL_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")
_MODEL_TYPES = {
    "exact_pareto": ExactPareto,
    "perturbed_pareto": PerturbedPareto,
    "piecewise_lb": PiecewiseLB,
}


def make_model(family, **kwargs) -> DistributionModel:
    try:
        cls = _MODEL_TYPES[family]
    except KeyError:
        raise ModelError(f"unknown model family {family!r}") from None
    try:
        return cls(**{k: float(v) for k, v in kwargs.items()})
    except TypeError as exc:
        raise ModelError(f"bad parameters for {family}: {exc}") from None


def parse_model(text) -> DistributionModel:
    """Inverse of ``model.canonical()``."""
    m = _MODEL_RE.match(text)
    if not m:
        raise ModelError(f"cannot parse model string {text!r}")
    kwargs = {}
    for item in filter(None, (s.strip() for s in m.group(2).split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ModelError(f"expected key=value in model string, got {item!r}")
        kwargs[key.strip()] = value.strip()
    return make_model(m.group(1), **kwargs)


@dataclass(frozen=True)
class Dataset:
    """An i.i.d. sample and where it came from.

    ``seed`` is None for data not produced by :func:`sample`.
    """

    values: np.ndarray
    seed: Optional[int] = None
    model: Optional[str] = None
    rng: Optional[str] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a dataset needs a nonempty one-dimensional sample")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.size

    @cached_property
    def sorted_values(self):
        s = np.sort(self.values)
        s.setflags(write=False)
        return s

    def count_above(self, threshold):
        """Number of observations strictly greater than ``threshold``."""
        return self.n - int(np.searchsorted(self.sorted_values, threshold, side="right"))


def sample(model: DistributionModel, n, seed) -> Dataset:
    """Draw n values by inverse transform from Philox uniforms."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    seed = rng.check_seed(seed)
    values = np.atleast_1d(model.quantile(rng.uniforms(seed, n)))
    return Dataset(values, seed=seed, model=model.canonical(), rng=rng.RNG_NAME)


@dataclass(frozen=True)
class MembershipReport:
    max_violation: float
    worst_x: float
    grid_size: int

    @property
    def member(self):
        return self.max_violation <= 0.0


def default_grid(model: DistributionModel, points=200, span=1e6):
    lo = model.support_left
    return np.geomspace(lo, lo * span, points)


def verify_membership(model: DistributionModel, params: SecondOrderParams, grid=None):
    """Largest excess of |1 - F(x) - C x^-alpha| over C' x^-alpha(1+beta) on a grid.

    The model lies in S(params) on the grid iff the returned ``max_violation``
    is at most 0.
    """
    x = default_grid(model) if grid is None else np.asarray(grid, dtype=float)
    if x.size == 0:
        raise ValueError("empty grid")
    if np.any(x < model.support_left * (1 - 1e-15)):
        raise ValueError("grid points must not lie left of the support")
    a, b, C, Cp = params.alpha, params.beta, params.C, params.Cprime
    excess = np.abs(model.survival(x) - C * x ** (-a)) - Cp * x ** (-a * (1.0 + b))
    i = int(np.argmax(excess))
    return MembershipReport(float(excess[i]), float(x[i]), int(x.size))


class DatasetFormatError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


def format_dataset(data: Dataset) -> str:
    seed = "external" if data.seed is None else str(data.seed)
    model = data.model if data.model else "external"
    lines = [f"# seed={seed} model={model}"]
    lines.extend(f"{v:.17g}" for v in data.values)
    return "\n".join(lines) + "\n"


def write_dataset(data: Dataset, path):
    Path(path).write_text(format_dataset(data))


def read_dataset(path) -> Dataset:
    """Parse the one-value-per-line format; '#' lines are comments or the header."""
    path = Path(path)
    text = path.read_text()
    values = []
    seed = None
    model = None
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not seen_header:
                seen_header = True
                fields = dict(
                    tok.split("=", 1) for tok in line[1:].split() if "=" in tok
                )
                if fields.get("seed", "external") != "external":
                    try:
                        seed = rng.check_seed(int(fields["seed"]))
                    except ValueError:
                        raise DatasetFormatError(path, lineno, f"bad seed {fields['seed']!r}") from None
                if fields.get("model", "external") != "external":
                    model = fields["model"]
            continue
        try:
            v = float(line)
        except ValueError:
            raise DatasetFormatError(path, lineno, f"not a number: {line!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise DatasetFormatError(path, lineno, f"values must be positive and finite, got {line}")
        values.append(v)
    if not values:
        raise DatasetFormatError(path, 0, "no values")
    return Dataset(np.array(values), seed=seed, model=model, rng=rng.RNG_NAME if seed is not None else None)
