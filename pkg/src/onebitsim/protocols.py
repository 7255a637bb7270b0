"""Sensor decision rules, fusion rules, and bandwidth schedules.

Five protocols, identified by the strings in :data:`PROTOCOLS`:

* ``cls_abstain``    -- vote the stored label when the query falls in the
  sensor's ball, otherwise abstain; fusion is the vote-fraction >= 1/2
  majority (ties go to 1).
* ``cls_noabstain``  -- same informative branch, but silent sensors must
  guess with a fair coin fixed at training time; fusion is the strict
  majority over all n votes (ties go to 0).
* ``reg_abstain``    -- in-ball sensors encode their real label in a coin
  bias (y / 2c + 1/2, censored to a fair coin when |y| > c); fusion shifts
  and scales the vote fraction back into label units.
* ``reg_noabstain``  -- every sensor votes with a bias from a registered
  response-probability family; the scaled-mean fusion rule is permutation
  invariant and Lipschitz in the average Hamming distance.
* ``specialists``    -- sensors own a random region, train on data
  conditioned to that region, and vote only for queries inside it.

The tie conventions differ on purpose between the >= 1/2 rules and the
strict > 1/2 rule; tests pin them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .scenarios import Example, Region

PROTOCOLS = (
    "cls_abstain",
    "cls_noabstain",
    "reg_abstain",
    "reg_noabstain",
    "specialists",
)

#: Response alphabet sizes: 3 symbols (log2(3) bits) when abstention is
#: available, 2 symbols (1 bit) when every sensor must vote.
BITS_PER_QUERY = {
    "cls_abstain": math.log2(3.0),
    "reg_abstain": math.log2(3.0),
    "specialists": math.log2(3.0),
    "cls_noabstain": 1.0,
    "reg_noabstain": 1.0,
}

COIN_MODES = ("per_sensor", "per_query")


class ScheduleViolationWarning(UserWarning):
    """A run was configured outside the sufficient consistency conditions."""


class ProtocolViolationError(ValueError):
    """A fusion rule received responses its protocol cannot produce."""


class FamilyValidationError(ValueError):
    """A response-probability family produced a value outside [0,1]."""


class Response(enum.Enum):
    VOTE0 = "vote0"
    VOTE1 = "vote1"
    ABSTAIN = "abstain"

    @property
    def is_vote(self) -> bool:
        return self is not Response.ABSTAIN

    @property
    def vote(self) -> int:
        if self is Response.ABSTAIN:
            raise ValueError("abstention carries no vote")
        return 1 if self is Response.VOTE1 else 0


def vote_response(label) -> Response:
    if label not in (0, 1):
        raise ValueError(f"vote label must be 0 or 1, got {label!r}")
    return Response.VOTE1 if label == 1 else Response.VOTE0


def in_ball(x, center, radius: float) -> bool:
    """Closed Euclidean ball membership; the one distance test used
    everywhere so protocol and oracle decisions agree bit-for-bit."""
    return math.dist(np.atleast_1d(x), np.atleast_1d(center)) <= radius


@dataclass(frozen=True)
class Schedule:
    """Power-law bandwidth and amplitude sequences.

    r_n = r0 * n^(-beta) shrinks the ball radius; c_n = c0 * n^gamma grows
    the label amplitude bound, unless ``clamp`` pins c_n to a constant
    (valid when |Y| is known to be bounded by it).
    """

    r0: float
    beta: float
    c0: float = 1.0
    gamma: float = 0.0
    clamp: Optional[float] = None

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0 (r_n may not grow)")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0 (c_n may not shrink)")
        if self.clamp is not None and self.clamp <= 0:
            raise ValueError("clamp must be positive when set")


def schedule_eval(schedule: Schedule, n: int) -> tuple[float, float]:
    """(r_n, c_n) at network size n >= 1."""
    if n < 1:
        raise ValueError("schedule is defined for n >= 1")
    r_n = schedule.r0 * float(n) ** -schedule.beta
    if schedule.clamp is not None:
        c_n = schedule.clamp
    else:
        c_n = schedule.c0 * float(n) ** schedule.gamma
    return r_n, c_n


SATISFIES = "satisfies"
VIOLATES = "violates"
ALWAYS_INCONSISTENT = "always_inconsistent"


@dataclass(frozen=True)
class ScheduleVerdict:
    """Outcome of checking a schedule against sufficient conditions.

    A violation does not prove inconsistency -- the conditions are
    sufficient only -- except for regression without abstention, which no
    schedule can rescue.
    """

    status: str
    reason: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == SATISFIES


def validate_schedule(schedule: Schedule, protocol: str, d: int) -> ScheduleVerdict:
    """Check the power-law exponents against a protocol's sufficient
    consistency conditions in dimension d."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if protocol == "reg_noabstain":
        return ScheduleVerdict(
            ALWAYS_INCONSISTENT,
            "no permutation-invariant fusion rule that is Lipschitz in the "
            "average Hamming distance is universally consistent here",
        )
    bd = schedule.beta * d
    if schedule.beta <= 0:
        return ScheduleVerdict(VIOLATES, "beta = 0: r_n does not shrink")
    if protocol in ("cls_abstain", "specialists"):
        if bd >= 1:
            return ScheduleVerdict(VIOLATES, f"beta*d = {bd:g} >= 1")
        return ScheduleVerdict(SATISFIES)
    if protocol == "cls_noabstain":
        if bd >= 0.5:
            return ScheduleVerdict(VIOLATES, f"beta*d = {bd:g} >= 1/2")
        return ScheduleVerdict(SATISFIES)
    # reg_abstain
    if schedule.clamp is None and schedule.gamma <= 0:
        return ScheduleVerdict(
            VIOLATES, "c_n must diverge (gamma > 0) unless clamp bounds |Y|"
        )
    eff_gamma = 0.0 if schedule.clamp is not None else schedule.gamma
    total = 2 * eff_gamma + bd
    if total >= 1:
        return ScheduleVerdict(VIOLATES, f"2*gamma + beta*d = {total:g} >= 1")
    return ScheduleVerdict(SATISFIES)


@dataclass(frozen=True)
class SensorState:
    """One sensor's stored training datum plus protocol-specific extras.

    ``datum`` is None for a sensor whose region could not be trained;
    ``region_center`` is set for specialists; ``fixed_coin`` is the
    training-time coin realization for classification without abstention.
    """

    datum: Optional[Example]
    region_center: Optional[np.ndarray] = None
    fixed_coin: Optional[int] = None


def _require_datum(sensor: SensorState) -> Example:
    if sensor.datum is None:
        raise ValueError("sensor has no training datum")
    return sensor.datum


# ---------------------------------------------------------------------------
# classification with abstention


def respond_cls_abstain(sensor: SensorState, query_x, r_n: float) -> Response:
    """Vote the stored label if the training point lies within r_n of the
    query, otherwise abstain."""
    datum = _require_datum(sensor)
    if in_ball(datum.x, query_x, r_n):
        return vote_response(datum.y)
    return Response.ABSTAIN


def fuse_cls_abstain(responses: Sequence[Response], default_label: int = 0) -> int:
    """Majority over the non-abstaining votes; a vote-1 fraction of exactly
    1/2 resolves to 1. All-abstain falls back to the default label."""
    votes = [r.vote for r in responses if r.is_vote]
    if not votes:
        return default_label
    return 1 if 2 * sum(votes) >= len(votes) else 0


# ---------------------------------------------------------------------------
# classification without abstention


def respond_cls_noabstain(sensor: SensorState, query_x, r_n: float) -> Response:
    """Informative vote inside the ball; outside it, replay the sensor's
    fixed fair-coin realization (the same guess on every query)."""
    datum = _require_datum(sensor)
    if in_ball(datum.x, query_x, r_n):
        return vote_response(datum.y)
    if sensor.fixed_coin is None:
        raise ValueError("sensor has no fixed coin; draw one at training time")
    return vote_response(sensor.fixed_coin)


def fuse_cls_noabstain(responses: Sequence[Response]) -> int:
    """Strict majority over all votes: 1 only if the mean vote exceeds 1/2,
    so an exact tie resolves to 0 (note the asymmetry with the abstention
    rule's >= 1/2)."""
    n = len(responses)
    total = 0
    for r in responses:
        if not r.is_vote:
            raise ProtocolViolationError("abstention is not allowed here")
        total += r.vote
    return 1 if 2 * total > n else 0


# ---------------------------------------------------------------------------
# regression with abstention


def respond_reg_abstain(
    sensor: SensorState, query_x, r_n: float, c_n: float, coin: float
) -> Response:
    """Encode the real label in a coin bias of y/(2 c_n) + 1/2.

    Labels beyond the amplitude bound are censored to a fair coin; a query
    outside the sensor's ball draws an abstention. ``coin`` is one uniform
    [0,1) variate, fresh per (sensor, query).
    """
    if c_n <= 0:
        raise ValueError("c_n must be positive")
    datum = _require_datum(sensor)
    if not in_ball(query_x, datum.x, r_n):
        return Response.ABSTAIN
    if abs(datum.y) <= c_n:
        bias = datum.y / (2.0 * c_n) + 0.5
    else:
        bias = 0.5
    return Response.VOTE1 if coin < bias else Response.VOTE0


def fuse_reg_abstain(
    responses: Sequence[Response], c_n: float, default_value: float = 0.0
) -> float:
    """Decode the vote fraction back into label units:
    2 c_n (vote fraction - 1/2). All-abstain yields the default value."""
    votes = [r.vote for r in responses if r.is_vote]
    if not votes:
        return default_value
    return 2.0 * c_n * (sum(votes) / len(votes) - 0.5)


# ---------------------------------------------------------------------------
# regression without abstention


@dataclass(frozen=True)
class ClipBallBias:
    """Default response-probability family member.

    Inside the radius-r ball: clip(y / (2c) + 1/2) with a fixed amplitude
    c; outside: a fair guess. As r shrinks with n this family converges
    pointwise, which is what makes it the canonical no-go demonstration.
    """

    c: float
    r: float

    def __call__(self, x, xi, yi) -> float:
        if in_ball(x, xi, self.r):
            return min(1.0, max(0.0, yi / (2.0 * self.c) + 0.5))
        return 0.5


@dataclass(frozen=True)
class LipschitzFusionSpec:
    """A response-probability function paired with the Lipschitz constant
    of the scaled-mean fusion built on top of it."""

    lipschitz_c: float
    bias: Callable[..., float]

    def __post_init__(self):
        if self.lipschitz_c <= 0:
            raise ValueError("lipschitz constant must be positive")


def make_clip_ball_spec(c: float, r: float) -> LipschitzFusionSpec:
    """Instantiate the default family; the scaled-mean fusion with
    amplitude c is 2c-Lipschitz in the average Hamming distance."""
    if c <= 0:
        raise ValueError("amplitude c must be positive")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return LipschitzFusionSpec(lipschitz_c=2.0 * c, bias=ClipBallBias(c, r))


FUSION_FAMILIES = {"clip_ball": make_clip_ball_spec}


def make_fusion_spec(family: str, **params) -> LipschitzFusionSpec:
    try:
        factory = FUSION_FAMILIES[family]
    except KeyError:
        raise FamilyValidationError(
            f"unknown fusion family {family!r}; known: {', '.join(FUSION_FAMILIES)}"
        ) from None
    return factory(**params)


def validate_fusion_family(
    spec: LipschitzFusionSpec, probes: Sequence[tuple]
) -> None:
    """Spot-check a family on probe triples (x, xi, yi); probabilities
    outside [0,1] fail registration."""
    for x, xi, yi in probes:
        b = spec.bias(x, xi, yi)
        if not (0.0 <= b <= 1.0):
            raise FamilyValidationError(
                f"response probability {b!r} outside [0,1] at probe "
                f"(x={x!r}, xi={xi!r}, yi={yi!r})"
            )


def respond_reg_noabstain(
    sensor: SensorState, query_x, spec: LipschitzFusionSpec, coin: float
) -> Response:
    """Vote 1 with the family's probability a(x, X_i, Y_i); never abstain."""
    datum = _require_datum(sensor)
    bias = spec.bias(query_x, datum.x, datum.y)
    if not (0.0 <= bias <= 1.0):
        raise FamilyValidationError(f"response probability {bias!r} outside [0,1]")
    return Response.VOTE1 if coin < bias else Response.VOTE0


def fuse_reg_noabstain_scaledmean(responses: Sequence[Response], c: float) -> float:
    """2c (mean vote - 1/2): permutation invariant (it sees only the vote
    count) and Lipschitz with constant 2c in the average Hamming distance."""
    n = len(responses)
    if n == 0:
        return 0.0
    total = 0
    for r in responses:
        if not r.is_vote:
            raise ProtocolViolationError("abstention is not allowed here")
        total += r.vote
    return 2.0 * c * (total / n - 0.5)


# ---------------------------------------------------------------------------
# specialists


def draw_specialist_centers(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n region centers i.i.d. uniform on the unit box [0,1]^d."""
    return rng.random((n, d))


def assign_specialist_regions(
    n: int, d: int, r_n: float, rng: np.random.Generator
) -> list[Region]:
    """Uniform random regions of common radius r_n over [0,1]^d."""
    centers = draw_specialist_centers(n, d, rng)
    return [Region(centers[i], r_n) for i in range(n)]


def respond_specialist(sensor: SensorState, query_x, r_n: float) -> Response:
    """Vote the stored label iff the query falls in the sensor's own region
    (centered at its assigned point, not at its training point). Sensors
    whose region could not be trained abstain permanently."""
    if sensor.region_center is None:
        raise ValueError("specialist sensor has no region center")
    if sensor.datum is None:
        return Response.ABSTAIN
    if in_ball(query_x, sensor.region_center, r_n):
        return vote_response(sensor.datum.y)
    return Response.ABSTAIN


def fuse_specialist(responses: Sequence[Response], default_label: int = 0) -> int:
    """Majority over the responders (ties to 1); no responders falls back
    to the default label."""
    return fuse_cls_abstain(responses, default_label)


def is_all_abstain(responses: Sequence[Response]) -> bool:
    return all(not r.is_vote for r in responses)
