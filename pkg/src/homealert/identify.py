"""Pluggable emergency detector with a geometric simulated implementation.

The simulated detector answers "is an emergency visible from this pose?"
from pure geometry: the target must be within range, inside the field of
view, and unoccluded.  Optional seeded false-negative / false-positive
rates model an imperfect visual classifier; with both rates at zero the
detector is a deterministic oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .episodes import GroundTruth
from .geometry import ang_diff_deg, bearing_deg
from .world import Floorplan, Pose, line_of_sight

# Calibration targets for the noisy profile: detector-caused misses should
# stay a small share of failures and false reports should stay rare.  These
# are tuning defaults, not measured truth.
REALISTIC_FNR = 0.02
REALISTIC_FPR = 0.0002


class DetectorError(Exception):
    pass


def sees(plan: Floorplan, pose: Pose, point, fov_deg: float, range_m: float) -> bool:
    """Visibility of a point: within range, inside the FOV cone, unoccluded."""
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    if dx * dx + dy * dy > range_m * range_m:
        return False
    if ang_diff_deg(bearing_deg(pose.xy, point), pose.heading) > fov_deg / 2.0:
        return False
    return line_of_sight(plan.grid, pose.xy, point)


@dataclass(frozen=True)
class DetectorVerdict:
    emergency: bool
    kind: Optional[str]
    reason: str  # in-view | occluded | out-of-range | misclassified

    def __post_init__(self):
        if self.emergency and self.kind is None:
            raise DetectorError("a positive verdict needs an emergency kind")


@dataclass
class SimulatedDetector:
    fov_deg: float = 90.0
    range_m: float = 5.0
    false_negative_rate: float = 0.0
    false_positive_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.false_negative_rate <= 1.0 or not 0.0 <= self.false_positive_rate <= 1.0:
            raise DetectorError("noise rates must lie in [0, 1]")
        self._rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), 0xD37EC7]))

    @property
    def noiseless(self) -> bool:
        return self.false_negative_rate == 0.0 and self.false_positive_rate == 0.0

    def spawn(self, seed: int) -> "SimulatedDetector":
        """Copy with a fresh per-episode noise stream."""
        return SimulatedDetector(
            fov_deg=self.fov_deg,
            range_m=self.range_m,
            false_negative_rate=self.false_negative_rate,
            false_positive_rate=self.false_positive_rate,
            seed=seed,
        )

    def sees(self, plan: Floorplan, pose: Pose, point) -> bool:
        """Pure geometric visibility of a point from a pose."""
        return sees(plan, pose, point, self.fov_deg, self.range_m)


def _geometry_reason(detector: SimulatedDetector, plan: Floorplan, pose: Pose, point) -> str:
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    if dx * dx + dy * dy > detector.range_m**2:
        return "out-of-range"
    if ang_diff_deg(bearing_deg(pose.xy, point), pose.heading) > detector.fov_deg / 2.0:
        return "out-of-range"
    if not line_of_sight(plan.grid, pose.xy, point):
        return "occluded"
    return "in-view"


def detect(
    detector: SimulatedDetector,
    ground_truth: GroundTruth,
    pose: Pose,
    plan: Floorplan,
) -> DetectorVerdict:
    """Run one detection from the agent's current pose.

    A real emergency entity (fallen human or fire source) in clear view
    yields a positive verdict, subject to the false-negative rate.  A
    distractor in view is correctly rejected.  Views with no emergency may
    produce a false positive at the configured rate.
    """
    if ground_truth.emergency:
        target = ground_truth.human_pose if ground_truth.kind == "fall" else ground_truth.source
        reason = _geometry_reason(detector, plan, pose, target)
        if reason == "in-view":
            if detector.false_negative_rate > 0.0 and detector._rng.random() < detector.false_negative_rate:
                return DetectorVerdict(False, None, "misclassified")
            return DetectorVerdict(True, ground_truth.kind, "in-view")
        return DetectorVerdict(False, None, reason)

    # no emergency present; check whether the distractor (if any) is in view
    reason = _geometry_reason(detector, plan, pose, ground_truth.source)
    if detector.false_positive_rate > 0.0 and detector._rng.random() < detector.false_positive_rate:
        spurious = "fall" if ground_truth.distractor else "fire"
        return DetectorVerdict(True, spurious, "misclassified")
    return DetectorVerdict(False, None, reason)


def make_detector(profile: str, seed: int = 0) -> SimulatedDetector:
    """Build a detector from a CLI profile string.

    Accepted forms: ``oracle``, ``realistic``, or ``noisy:<fnr>,<fpr>``.
    """
    if profile == "oracle":
        return SimulatedDetector(seed=seed)
    if profile == "realistic":
        return SimulatedDetector(
            false_negative_rate=REALISTIC_FNR, false_positive_rate=REALISTIC_FPR, seed=seed
        )
    if profile.startswith("noisy:"):
        try:
            fnr_s, fpr_s = profile[len("noisy:"):].split(",")
            return SimulatedDetector(
                false_negative_rate=float(fnr_s), false_positive_rate=float(fpr_s), seed=seed
            )
        except ValueError as exc:
            raise DetectorError(f"bad noisy profile {profile!r}; expected noisy:<fnr>,<fpr>") from exc
    raise DetectorError(f"unknown detector profile {profile!r}")
