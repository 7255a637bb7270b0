"""Synthetic joint distributions with analytically known Bayes behavior.

Each scenario fixes a joint law of (X, Y) for which the regression
function eta(x) = E[Y | X=x] is available in closed form and the optimal
risk is available either in closed form or through adaptive quadrature.
That makes every simulated network checkable against exact ground truth.

Catalog (ids accepted by :func:`make_scenario`):

* ``gauss_mix_1d``   -- two unit-variance Gaussians at +-mu, equal priors.
* ``gauss_mix_2d``   -- isotropic Gaussian pair at +-(1,1)/sqrt(2).
* ``checkerboard_2d`` -- uniform X on the unit square, k x k board with a
  piecewise-constant posterior.
* ``sine_1d``        -- uniform X on [0,1], Y = sin(2 pi X) + Gaussian noise.
* ``cityscape_2d``   -- uniform X on the unit square; a binary "toxin"
  indicator, positive where a Gaussian bump field exceeds a threshold,
  observed through label flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import expit
from scipy.stats import norm


class IntegrationError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, requested: float, achieved: float):
        super().__init__(
            f"quadrature reached absolute error {achieved:.3e}, "
            f"requested {requested:.3e}"
        )
        self.requested = requested
        self.achieved = achieved


class _Untrainable:
    """Marker value: a sensor's region carries (near-)zero probability mass."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNTRAINABLE"


UNTRAINABLE = _Untrainable()


@dataclass(frozen=True)
class Example:
    """One labeled training pair; ``x`` has shape (d,), ``y`` is 0/1 or real."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if not np.all(np.isfinite(self.x)) or not math.isfinite(self.y):
            raise ValueError("example coordinates and label must be finite")


@dataclass(frozen=True)
class Region:
    """Closed Euclidean ball: membership is ||x - center||_2 <= radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.atleast_1d(np.asarray(self.center, dtype=float))
        )
        if self.radius < 0:
            raise ValueError("region radius must be nonnegative")

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return math.dist(x, self.center) <= self.radius


class Scenario:
    """Base distribution interface.

    Instances are immutable after construction and safe to share across
    workers; all randomness comes from caller-supplied generators.
    """

    id: str
    dimension: int
    task: str  # "classification" | "regression"
    params: dict

    #: (lo, hi) corner arrays of an axis-aligned support box, or None.
    support_box: Optional[tuple[np.ndarray, np.ndarray]] = None

    # -- sampling ---------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int):
        """Draw ``size`` i.i.d. pairs; returns (xs (size,d), ys (size,))."""
        xs = self.sample_x(rng, size)
        return xs, self.sample_y_given_x(xs, rng)

    def sample_x(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample_y_given_x(self, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # -- ground truth -----------------------------------------------------

    def eta(self, xs: np.ndarray) -> np.ndarray:
        """Regression function E[Y | X=x], vectorized over rows of ``xs``."""
        raise NotImplementedError

    def closed_form_bayes_risk(self) -> Optional[float]:
        return None

    def noise_variance(self, xs: np.ndarray) -> np.ndarray:
        """Var(Y | X=x); defined for regression scenarios."""
        raise NotImplementedError(f"{self.id} is not a regression scenario")

    def conditional_second_moment(self, xs: np.ndarray) -> np.ndarray:
        """E[Y^2 | X=x] for regression scenarios."""
        return self.eta(xs) ** 2 + self.noise_variance(xs)

    def second_moment(self) -> float:
        """E[Y^2]; available for regression scenarios."""
        raise NotImplementedError

    def integrate_mean(self, f: Callable[[np.ndarray], float], tol: float) -> float:
        """E[f(X)] by adaptive quadrature to absolute tolerance ``tol``."""
        raise NotImplementedError

    # -- conditional sampling ---------------------------------------------

    #: set True by scenarios registering a direct conditional X sampler.
    has_direct_conditional = False

    def direct_conditional_x(self, centers, radius, rng):
        """Draw one X per row of ``centers`` from P_X given X in the ball.

        Returns (xs, untrainable_mask); only available when
        ``has_direct_conditional`` is True.
        """
        raise NotImplementedError


def _as_points(xs, d):
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1 and d == 1:
        return xs[:, None]
    return xs


class GaussianPairScenario(Scenario):
    """Equal-prior pair of isotropic Gaussians at ``+-mu``.

    eta(x) = sigmoid(2 <x, mu> / sigma^2); the optimal rule thresholds the
    projection on mu and errs with probability Phi(-||mu|| / sigma).
    """

    task = "classification"

    def __init__(self, id: str, mu: np.ndarray, sigma: float):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.id = id
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.dimension = self.mu.shape[0]
        self.sigma = float(sigma)
        self.params = {"sigma": self.sigma}
        self._mu_norm = float(np.linalg.norm(self.mu))
        if self._mu_norm <= 0:
            raise ValueError("class means must be separated")
        self._axis = self.mu / self._mu_norm

    def sample_x(self, rng, size):
        labels = rng.random(size) < 0.5
        signs = np.where(labels, 1.0, -1.0)
        return signs[:, None] * self.mu + self.sigma * rng.standard_normal(
            (size, self.dimension)
        )

    def sample_y_given_x(self, xs, rng):
        xs = _as_points(xs, self.dimension)
        return (rng.random(xs.shape[0]) < self.eta(xs)).astype(np.int64)

    def eta(self, xs):
        xs = _as_points(xs, self.dimension)
        return expit(2.0 * (xs @ self.mu) / self.sigma**2)

    def closed_form_bayes_risk(self):
        return float(norm.cdf(-self._mu_norm / self.sigma))

    def _t_density(self, t):
        # distribution of <X, mu/||mu||>: mixture of two 1-d Gaussians
        m, s = self._mu_norm, self.sigma
        return 0.5 * (
            np.exp(-0.5 * ((t - m) / s) ** 2) + np.exp(-0.5 * ((t + m) / s) ** 2)
        ) / (s * math.sqrt(2 * math.pi))

    def integrate_mean(self, f, tol):
        # Integrands of interest depend on x only through its projection on
        # the class axis; integrate along that line against the pushforward.
        g = lambda t: f(t * self._axis) * self._t_density(t)
        lo, err_lo = integrate.quad(g, -np.inf, 0.0, epsabs=tol / 4, limit=300)
        hi, err_hi = integrate.quad(g, 0.0, np.inf, epsabs=tol / 4, limit=300)
        if err_lo + err_hi > tol:
            raise IntegrationError(tol, err_lo + err_hi)
        return lo + hi


class UniformBoxScenario(Scenario):
    """Common machinery for X uniform on the unit box [0,1]^d."""

    has_direct_conditional = True

    def __init__(self):
        d = self.dimension
        self.support_box = (np.zeros(d), np.ones(d))

    def sample_x(self, rng, size):
        return rng.random((size, self.dimension))

    def direct_conditional_x(self, centers, radius, rng):
        # Uniform X conditioned on a ball is uniform on ball-intersect-box:
        # propose uniformly in the clipped bounding box, accept inside the
        # ball. Acceptance is bounded below (~pi/4 in 2-d), so a handful of
        # rounds settles every row.
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        n, d = centers.shape
        lo = np.clip(centers - radius, 0.0, 1.0)
        hi = np.clip(centers + radius, 0.0, 1.0)
        nearest = np.clip(centers, 0.0, 1.0)
        reachable = np.sum((nearest - centers) ** 2, axis=1) <= radius**2
        empty_box = np.any(hi < lo, axis=1)
        untrainable = ~reachable | empty_box | (radius <= 0)
        xs = np.full((n, d), np.nan)
        pending = np.flatnonzero(~untrainable)
        r2 = radius**2
        while pending.size:
            prop = lo[pending] + rng.random((pending.size, d)) * (
                hi[pending] - lo[pending]
            )
            ok = np.sum((prop - centers[pending]) ** 2, axis=1) <= r2
            xs[pending[ok]] = prop[ok]
            pending = pending[~ok]
        return xs, untrainable

    def integrate_mean(self, f, tol):
        if self.dimension == 1:
            val, err = integrate.quad(
                lambda x: f(np.array([x])), 0.0, 1.0, epsabs=tol / 2, limit=300
            )
        elif self.dimension == 2:
            val, err = integrate.dblquad(
                lambda y, x: f(np.array([x, y])),
                0.0,
                1.0,
                0.0,
                1.0,
                epsabs=tol / 2,
            )
        else:
            raise NotImplementedError("quadrature beyond d=2 not supported")
        if err > tol:
            raise IntegrationError(tol, err)
        return val


class CheckerboardScenario(UniformBoxScenario):
    """k x k checkerboard on the unit square with two posterior levels.

    Cells where floor(k x1) + floor(k x2) is even carry P(Y=1|x) = p_on,
    odd cells carry p_off.
    """

    task = "classification"
    dimension = 2

    def __init__(self, k: int = 4, p_on: float = 0.8, p_off: float = 0.2):
        if k < 1:
            raise ValueError("k must be >= 1")
        if not (0 <= p_on <= 1 and 0 <= p_off <= 1):
            raise ValueError("posterior levels must lie in [0,1]")
        self.id = "checkerboard_2d"
        self.k = int(k)
        self.p_on = float(p_on)
        self.p_off = float(p_off)
        self.params = {"k": self.k, "p_on": self.p_on, "p_off": self.p_off}
        super().__init__()

    def sample_y_given_x(self, xs, rng):
        xs = _as_points(xs, 2)
        return (rng.random(xs.shape[0]) < self.eta(xs)).astype(np.int64)

    def eta(self, xs):
        xs = _as_points(xs, 2)
        cells = np.clip((xs * self.k).astype(np.int64), 0, self.k - 1)
        even = (cells.sum(axis=1) % 2) == 0
        return np.where(even, self.p_on, self.p_off)

    def closed_form_bayes_risk(self):
        k2 = self.k * self.k
        w_on = math.ceil(k2 / 2) / k2  # even-parity cells (one extra if k odd)
        return w_on * min(self.p_on, 1 - self.p_on) + (1 - w_on) * min(
            self.p_off, 1 - self.p_off
        )


class CityscapeScenario(UniformBoxScenario):
    """Binary field over the unit square observed through label flips.

    A Gaussian bump field exp(-||x-center||^2 / (2 spread^2)) marks the
    positive zone where it exceeds ``threshold`` (a disc); labels flip with
    probability ``flip``, so eta is 1-flip inside the disc and flip outside.
    """

    task = "classification"
    dimension = 2

    def __init__(
        self,
        center=(0.5, 0.5),
        spread: float = 0.2,
        threshold: float = 0.5,
        flip: float = 0.1,
    ):
        if not (0 < threshold < 1):
            raise ValueError("threshold must lie strictly in (0,1)")
        if spread <= 0:
            raise ValueError("spread must be positive")
        if not (0 <= flip <= 1):
            raise ValueError("flip probability must lie in [0,1]")
        self.id = "cityscape_2d"
        self.center = np.asarray(center, dtype=float)
        self.spread = float(spread)
        self.threshold = float(threshold)
        self.flip = float(flip)
        self.zone_radius = self.spread * math.sqrt(2.0 * math.log(1.0 / self.threshold))
        self.params = {
            "center": tuple(self.center),
            "spread": self.spread,
            "threshold": self.threshold,
            "flip": self.flip,
        }
        super().__init__()

    def field(self, xs):
        xs = _as_points(xs, 2)
        d2 = np.sum((xs - self.center) ** 2, axis=1)
        return np.exp(-0.5 * d2 / self.spread**2)

    def sample_y_given_x(self, xs, rng):
        xs = _as_points(xs, 2)
        return (rng.random(xs.shape[0]) < self.eta(xs)).astype(np.int64)

    def eta(self, xs):
        xs = _as_points(xs, 2)
        inside = np.sum((xs - self.center) ** 2, axis=1) <= self.zone_radius**2
        return np.where(inside, 1.0 - self.flip, self.flip)

    def closed_form_bayes_risk(self):
        return min(self.flip, 1 - self.flip)


class SineScenario(UniformBoxScenario):
    """Regression: X uniform on [0,1], Y = sin(2 pi X) + N(0, noise^2)."""

    task = "regression"
    dimension = 1

    def __init__(self, noise: float = 0.1):
        if noise < 0:
            raise ValueError("noise must be nonnegative")
        self.id = "sine_1d"
        self.noise = float(noise)
        self.params = {"noise": self.noise}
        super().__init__()

    def sample_y_given_x(self, xs, rng):
        xs = _as_points(xs, 1)
        return self.eta(xs) + self.noise * rng.standard_normal(xs.shape[0])

    def eta(self, xs):
        xs = _as_points(xs, 1)
        return np.sin(2.0 * math.pi * xs[:, 0])

    def noise_variance(self, xs):
        xs = _as_points(xs, 1)
        return np.full(xs.shape[0], self.noise**2)

    def closed_form_bayes_risk(self):
        return self.noise**2

    def second_moment(self):
        # integral of sin^2 over one period is 1/2
        return 0.5 + self.noise**2


_CATALOG = {
    "gauss_mix_1d": lambda mu=1.0, sigma=1.0: GaussianPairScenario(
        "gauss_mix_1d", [float(mu)], sigma
    ),
    "gauss_mix_2d": lambda sigma=1.0: GaussianPairScenario(
        "gauss_mix_2d", np.array([1.0, 1.0]) / math.sqrt(2.0), sigma
    ),
    "checkerboard_2d": CheckerboardScenario,
    "sine_1d": SineScenario,
    "cityscape_2d": CityscapeScenario,
}

SCENARIO_IDS = tuple(sorted(_CATALOG))


def make_scenario(scenario_id: str, **params) -> Scenario:
    """Instantiate a catalog scenario by id with keyword parameters."""
    try:
        factory = _CATALOG[scenario_id]
    except KeyError:
        raise ValueError(
            f"unknown scenario {scenario_id!r}; known: {', '.join(SCENARIO_IDS)}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {scenario_id!r}: {exc}") from None


# ---------------------------------------------------------------------------
# operations


def sample_example(scenario: Scenario, rng: np.random.Generator) -> Example:
    """One i.i.d. draw from the scenario's joint distribution."""
    xs, ys = scenario.sample(rng, 1)
    return Example(xs[0], float(ys[0]))


def rejection_conditional_example(
    scenario: Scenario, region: Region, rng: np.random.Generator, max_rejects: int
):
    """Redraw joint samples until X lands in ``region``.

    Returns UNTRAINABLE after ``max_rejects`` consecutive misses (the region
    carries too little mass to train on).
    """
    if max_rejects < 1:
        raise ValueError("max_rejects must be >= 1")
    for _ in range(max_rejects):
        xs, ys = scenario.sample(rng, 1)
        if region.contains(xs[0]):
            return Example(xs[0], float(ys[0]))
    return UNTRAINABLE


def sample_conditional_example(
    scenario: Scenario,
    region: Region,
    rng: np.random.Generator,
    max_rejects: int = 10_000,
):
    """Draw (X, Y) conditioned on X in ``region``.

    Uses the scenario's direct conditional sampler when one is registered
    (distributionally equivalent to rejection); otherwise falls back to
    generic rejection. Returns UNTRAINABLE for (near-)zero-mass regions.
    """
    if region.radius <= 0:
        raise ValueError("conditional sampling needs a region with radius > 0")
    if scenario.has_direct_conditional:
        xs, untrainable = scenario.direct_conditional_x(
            region.center[None, :], region.radius, rng
        )
        if untrainable[0]:
            return UNTRAINABLE
        y = scenario.sample_y_given_x(xs, rng)[0]
        return Example(xs[0], float(y))
    return rejection_conditional_example(scenario, region, rng, max_rejects)


def sample_conditional_batch(
    scenario: Scenario,
    centers: np.ndarray,
    radius: float,
    rng: np.random.Generator,
    max_rejects: int = 10_000,
):
    """Per-row conditional draws: one (X, Y) per center, shared radius.

    Returns (xs, ys, untrainable_mask); untrainable rows hold NaN.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    n, d = centers.shape
    if n == 0:
        return np.empty((0, d)), np.empty(0), np.zeros(0, dtype=bool)
    if scenario.has_direct_conditional:
        xs, untrainable = scenario.direct_conditional_x(centers, radius, rng)
    else:
        # Batched generic rejection: each round redraws the still-pending
        # rows from the joint law; every row gets at most max_rejects draws.
        xs = np.full((n, d), np.nan)
        pending = np.arange(n)
        r2 = radius**2
        for _ in range(max_rejects):
            prop, _ = scenario.sample(rng, pending.size)
            ok = np.sum((prop - centers[pending]) ** 2, axis=1) <= r2
            xs[pending[ok]] = prop[ok]
            pending = pending[~ok]
            if not pending.size:
                break
        untrainable = np.zeros(n, dtype=bool)
        untrainable[pending] = True
    ys = np.full(n, np.nan)
    trained = ~untrainable
    if trained.any():
        ys[trained] = scenario.sample_y_given_x(xs[trained], rng)
    return xs, ys, untrainable


def regression_function(scenario: Scenario, x) -> float:
    """eta(x) = E[Y | X=x] in closed form."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(scenario.eta(x[None, :])[0])


def bayes_classifier(scenario: Scenario, x) -> int:
    """Optimal label: 1 iff eta(x) >= 1/2 (ties resolve to 1)."""
    if scenario.task != "classification":
        raise ValueError(f"{scenario.id} is not a classification scenario")
    return int(regression_function(scenario, x) >= 0.5)


def numerical_bayes_risk(scenario: Scenario, tol: float = 1e-6) -> float:
    """Optimal risk by quadrature: E[min(eta, 1-eta)] or E[Var(Y|X)]."""
    if scenario.task == "classification":
        f = lambda x: float(np.minimum(scenario.eta(x[None, :]), 1 - scenario.eta(x[None, :]))[0])
    else:
        f = lambda x: float(scenario.noise_variance(x[None, :])[0])
    return scenario.integrate_mean(f, tol)


def numerical_classifier_risk(scenario: Scenario, tol: float = 1e-5) -> float:
    """Zero-one risk of the bayes_classifier code path, by quadrature."""

    def f(x):
        e = float(scenario.eta(x[None, :])[0])
        return 1.0 - e if bayes_classifier(scenario, x) == 1 else e

    return scenario.integrate_mean(f, tol)


def bayes_risk(scenario: Scenario, tol: float = 1e-6) -> float:
    """Optimal expected loss: closed form when known, else quadrature."""
    closed = scenario.closed_form_bayes_risk()
    if closed is not None:
        return closed
    return numerical_bayes_risk(scenario, tol)
