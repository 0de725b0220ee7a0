"""Audio events, emission schedules, perception, and trigger classification.

The perceived direction of a sound is geometric pseudo-truth: within the
source's room the bearing points straight at the source, across rooms it
points at the first doorway on the shortest path toward it.  Labels come
from a pluggable labeler whose confusion matrix models classifier noise.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .geometry import bearing_deg, wrap_deg
from .world import Floorplan, Pose, initial_route_bearing, room_of

AUDIO_CLASSES = ("thud", "glass_break", "smoke_alarm", "speech", "appliance_hum", "door_slam")
PERIODICITIES = ("aperiodic", "periodic", "semiperiodic")

DEFAULT_PERIOD = 10
DEFAULT_TRIGGERS: Mapping[str, str] = {"thud": "fall", "smoke_alarm": "fire"}
DEFAULT_GROUNDING: Mapping[str, str] = {"fall": "agent", "fire": "object"}


class AcousticsError(Exception):
    """Raised for invalid audio events or observation preconditions."""


def emission_steps(periodicity: str, period: int, horizon: int) -> tuple[int, ...]:
    """Step indices at which an event emits sound over an episode horizon."""
    if periodicity == "aperiodic":
        return (0,)
    if periodicity in ("periodic", "semiperiodic"):
        return tuple(range(0, horizon, period))
    raise AcousticsError(f"unknown periodicity {periodicity!r}")


@dataclass(frozen=True)
class AudioEvent:
    """A sound source with its emission schedule.

    Semiperiodic events keep emitting but their reported direction becomes
    a uniformly random bearing from ``cutoff_step`` on.
    """

    source: tuple[float, float]
    true_class: str
    periodicity: str
    emission_schedule: tuple[int, ...]
    period: int = DEFAULT_PERIOD
    cutoff_step: Optional[int] = None

    def __post_init__(self):
        if self.true_class not in AUDIO_CLASSES:
            raise AcousticsError(f"unknown audio class {self.true_class!r}")
        if self.periodicity not in PERIODICITIES:
            raise AcousticsError(f"unknown periodicity {self.periodicity!r}")
        if self.periodicity == "aperiodic" and self.emission_schedule != (0,):
            raise AcousticsError("aperiodic events emit exactly once, at step 0")
        if self.periodicity != "aperiodic":
            expect = tuple(range(0, self.emission_schedule[-1] + 1, self.period))
            if self.emission_schedule != expect:
                raise AcousticsError("periodic emissions must be evenly spaced from step 0")
        if self.periodicity == "semiperiodic" and self.cutoff_step is None:
            raise AcousticsError("semiperiodic events need a cutoff step")


def make_event(
    source,
    true_class: str,
    periodicity: str,
    period: int = DEFAULT_PERIOD,
    horizon: int = 500,
    cutoff_step: Optional[int] = None,
) -> AudioEvent:
    return AudioEvent(
        source=(float(source[0]), float(source[1])),
        true_class=true_class,
        periodicity=periodicity,
        emission_schedule=emission_steps(periodicity, period, horizon),
        period=period,
        cutoff_step=cutoff_step,
    )


class Labeler:
    """Samples perceived labels from a row-stochastic confusion matrix.

    One labeler instance carries one seeded generator, so an episode's label
    sequence is reproducible.  The same generator also drives bearing noise
    and the scrambled directions of semiperiodic events past cutoff.
    """

    def __init__(self, confusion: np.ndarray, seed: int = 0):
        mat = np.asarray(confusion, dtype=float)
        if mat.shape != (len(AUDIO_CLASSES), len(AUDIO_CLASSES)):
            raise AcousticsError(f"confusion matrix must be {len(AUDIO_CLASSES)}x{len(AUDIO_CLASSES)}")
        if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-9):
            raise AcousticsError("confusion matrix rows must be nonnegative and sum to 1")
        self.confusion = mat
        self.seed = int(seed)
        self.rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xA0D10]))
        self._identity = bool(np.array_equal(mat, np.eye(len(AUDIO_CLASSES))))

    def sample(self, true_class: str) -> str:
        i = AUDIO_CLASSES.index(true_class)
        if self._identity:
            return true_class
        j = self.rng.choice(len(AUDIO_CLASSES), p=self.confusion[i])
        return AUDIO_CLASSES[int(j)]


def identity_labeler(seed: int = 0) -> Labeler:
    return Labeler(np.eye(len(AUDIO_CLASSES)), seed=seed)


def uniform_confusion(accuracy: float) -> np.ndarray:
    """Confusion matrix with ``accuracy`` on the diagonal, rest uniform."""
    n = len(AUDIO_CLASSES)
    off = (1.0 - accuracy) / (n - 1)
    return np.full((n, n), off) + np.eye(n) * (accuracy - off)


@dataclass(frozen=True)
class AudioObservation:
    label: str
    bearing: float
    step: int

    def __post_init__(self):
        if self.label not in AUDIO_CLASSES:
            raise AcousticsError(f"unknown audio class {self.label!r}")
        if not 0.0 <= self.bearing < 360.0:
            raise AcousticsError(f"bearing {self.bearing} outside [0, 360)")


def _heard_emission(event: AudioEvent, step: int) -> Optional[int]:
    """Latest emission audible at ``step``, if any.

    An instantaneous (aperiodic) emission is only audible at its own step; a
    repeating one stays audible until the next emission replaces it.
    """
    schedule = event.emission_schedule
    i = bisect.bisect_right(schedule, step) - 1
    if i < 0:
        return None
    emitted = schedule[i]
    window = 1 if event.periodicity == "aperiodic" else event.period
    return emitted if step - emitted < window else None


def observe_audio(
    event: AudioEvent,
    agent: Pose,
    plan: Floorplan,
    labeler: Labeler,
    step: int,
    direction_noise_sigma: float = 0.0,
) -> Optional[AudioObservation]:
    """Perceive the event at a step, or None when nothing is audible."""
    if not plan.grid.is_free(event.source):
        raise AcousticsError(f"audio source {event.source} is inside a wall")
    if not plan.grid.is_free(agent.xy):
        raise AcousticsError(f"listener pose {agent.xy} is not in free space")
    if _heard_emission(event, step) is None:
        return None

    if event.periodicity == "semiperiodic" and step >= event.cutoff_step:
        bearing = float(labeler.rng.uniform(0.0, 360.0))
    elif room_of(plan.rooms, agent.xy) == room_of(plan.rooms, event.source):
        bearing = bearing_deg(agent.xy, event.source)
    else:
        bearing = initial_route_bearing(plan, agent.xy, event.source)
    if direction_noise_sigma > 0.0:
        bearing = wrap_deg(bearing + labeler.rng.normal(0.0, direction_noise_sigma))
    return AudioObservation(label=labeler.sample(event.true_class), bearing=bearing, step=step)


def is_emergency_trigger(
    label: str, trigger_map: Mapping[str, str] = DEFAULT_TRIGGERS
) -> Optional[str]:
    """Emergency kind associated with an audio label, or None."""
    return trigger_map.get(label)


def grounding_of(kind: str, grounding_map: Mapping[str, str] = DEFAULT_GROUNDING) -> str:
    """Whether an emergency kind is located via agents or via static objects."""
    try:
        return grounding_map[kind]
    except KeyError:
        raise KeyError(f"no grounding configured for emergency kind {kind!r}") from None
