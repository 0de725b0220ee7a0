"""Bayesian room-posterior engine for locating an audio source.

The posterior over rooms is the product of a prior, a label likelihood read
off the scene graph (agent belief for falls, fire-trait sums for fires),
and a two-valued direction likelihood: rooms whose approach path leaves the
agent roughly along the perceived bearing get 0.99, all others 0.01.  Rooms
searched without success are down-weighted and the search continues until
something is found or the whole scene is cleared.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .acoustics import AudioObservation, DEFAULT_TRIGGERS, grounding_of, is_emergency_trigger
from .geometry import ang_diff_deg
from .scenegraph import PDSG, agent_room_distribution, trait_room_likelihood
from .world import Floorplan, NoPathError, Pose, initial_route_bearing, path_field, room_of
from .world import _path_length_m

BELIEF_TOL = 1e-9
DIRECTION_MATCH_P = 0.99
DIRECTION_MISMATCH_P = 0.01
DEFAULT_DIRECTION_THRESHOLD_DEG = 30.0
DEFAULT_CLEAR_FACTOR = 0.01

TRAIT_BY_KIND: Mapping[str, str] = {"fire": "fire_cause"}


class InferenceError(Exception):
    """Raised for invalid posterior inputs."""


@dataclass(frozen=True)
class RoomPosterior:
    """Probability of each room being the audio source.

    ``degenerate`` marks a posterior returned unchanged because the evidence
    zeroed out every room.
    """

    probs: Mapping[int, float]
    degenerate: bool = False

    def __post_init__(self):
        if not self.probs:
            raise InferenceError("posterior needs at least one room")
        if any(p < 0 for p in self.probs.values()):
            raise InferenceError("posterior values must be nonnegative")
        if abs(sum(self.probs.values()) - 1.0) > BELIEF_TOL:
            raise InferenceError(f"posterior sums to {sum(self.probs.values())}")

    def __getitem__(self, room_id: int) -> float:
        return self.probs[room_id]

    def argmax(self) -> int:
        best = max(self.probs.values())
        return min(r for r, p in self.probs.items() if p == best)


def init_prior(room_ids: Sequence[int]) -> RoomPosterior:
    """Uniform prior over the scene's rooms."""
    rooms = list(room_ids)
    if not rooms:
        raise InferenceError("cannot build a prior over zero rooms")
    return RoomPosterior({rid: 1.0 / len(rooms) for rid in rooms})


def direction_likelihood(
    plan: Floorplan,
    agent: Pose,
    bearing: float,
    room_id: int,
    threshold: float = DEFAULT_DIRECTION_THRESHOLD_DEG,
) -> float:
    """Step likelihood of a room given the perceived audio bearing.

    The room's approach bearing is the first leg of the shortest path from
    the agent to the room centroid (toward the first doorway when the room
    is elsewhere).  Compatible rooms score 0.99, incompatible ones 0.01.
    The agent's own room is always compatible: containment is the degenerate
    approach path and must not be penalized.
    """
    if not 0.0 < threshold <= 180.0:
        raise InferenceError(f"threshold {threshold} outside (0, 180]")
    if room_of(plan.rooms, agent.xy) == room_id:
        return DIRECTION_MATCH_P
    try:
        approach = initial_route_bearing(plan, agent.xy, plan.room_centroid(room_id))
    except NoPathError:
        return DIRECTION_MISMATCH_P
    if ang_diff_deg(approach, bearing) <= threshold:
        return DIRECTION_MATCH_P
    return DIRECTION_MISMATCH_P


def direction_likelihoods(
    plan: Floorplan,
    agent: Pose,
    bearing: float,
    threshold: float = DEFAULT_DIRECTION_THRESHOLD_DEG,
) -> dict[int, float]:
    return {
        rid: direction_likelihood(plan, agent, bearing, rid, threshold)
        for rid in plan.room_ids()
    }


def label_likelihood(
    graph: PDSG,
    kind: str,
    agent_id: str = "human",
    grounding_map: Optional[Mapping[str, str]] = None,
) -> dict[int, float]:
    """Per-room likelihood of the audio label given the scene graph.

    Agent-grounded kinds read the agent node's room belief; object-grounded
    kinds read the trait sums for the kind's trait (falling back to uniform
    when no object carries it).
    """
    grounding = grounding_of(kind, grounding_map) if grounding_map else grounding_of(kind)
    if grounding == "agent":
        return agent_room_distribution(graph, agent_id)
    trait = TRAIT_BY_KIND.get(kind, "fire_cause")
    return trait_room_likelihood(graph, trait)


def posterior_update(
    prior: RoomPosterior,
    label_lik: Mapping[int, float],
    dir_lik: Mapping[int, float],
) -> RoomPosterior:
    """Element-wise Bayes update, renormalized.

    When the product has no mass anywhere the prior is returned unchanged
    with the ``degenerate`` flag set, so one inconsistent observation cannot
    kill an episode.
    """
    rooms = set(prior.probs)
    if rooms != set(label_lik) or rooms != set(dir_lik):
        raise InferenceError("prior and likelihoods must cover the same rooms")
    product = {r: prior.probs[r] * label_lik[r] * dir_lik[r] for r in rooms}
    total = sum(product.values())
    if total <= 0.0:
        return replace(prior, degenerate=True)
    return RoomPosterior({r: v / total for r, v in product.items()})


def clear_room(
    posterior: RoomPosterior,
    room_id: int,
    clear_factor: float = DEFAULT_CLEAR_FACTOR,
) -> RoomPosterior:
    """Down-weight a searched room and renormalize."""
    if room_id not in posterior.probs:
        raise InferenceError(f"unknown room {room_id}")
    scaled = {
        r: (p * clear_factor if r == room_id else p) for r, p in posterior.probs.items()
    }
    total = sum(scaled.values())
    if total <= 0.0:
        return replace(posterior, degenerate=True)
    return RoomPosterior({r: v / total for r, v in scaled.items()})


def select_target(posterior: RoomPosterior, agent: Pose, plan: Floorplan) -> int:
    """Highest-probability room; ties broken by path distance, then by id."""
    best_p = max(posterior.probs.values())
    candidates = sorted(r for r, p in posterior.probs.items() if p == best_p)
    if len(candidates) == 1:
        return candidates[0]
    field_ = path_field(plan.grid, agent.xy)
    scored = []
    for rid in candidates:
        try:
            cells = field_.cells_to(plan.room_centroid(rid))
            dist = _path_length_m(cells, plan.grid.resolution)
        except NoPathError:
            dist = float("inf")
        scored.append((dist, rid))
    scored.sort()
    return scored[0][1]


def reobserve(
    posterior: RoomPosterior,
    observation: AudioObservation,
    graph: PDSG,
    plan: Floorplan,
    agent: Pose,
    threshold: float = DEFAULT_DIRECTION_THRESHOLD_DEG,
    trigger_map: Mapping[str, str] = DEFAULT_TRIGGERS,
    use_direction: bool = True,
    use_label: bool = True,
    agent_id: str = "human",
) -> RoomPosterior:
    """Fold a fresh observation into the posterior.

    Likelihoods are recomputed from the current pose and graph; the current
    posterior serves as the prior.  A label that maps to no emergency kind
    contributes a uniform label term (only the direction is informative).
    The ``use_*`` switches exist for ablation runs.
    """
    rooms = list(posterior.probs)
    kind = is_emergency_trigger(observation.label, trigger_map)
    if use_label and kind is not None:
        label_lik = label_likelihood(graph, kind, agent_id=agent_id)
    else:
        label_lik = {r: 1.0 for r in rooms}
    if use_direction:
        dir_lik = direction_likelihoods(plan, agent, observation.bearing, threshold)
    else:
        dir_lik = {r: 1.0 for r in rooms}
    return posterior_update(posterior, label_lik, dir_lik)


@dataclass(frozen=True)
class EmergencyBelief:
    """Decision-level search state: suspected kind and rooms already cleared."""

    status: str = "none-suspected"  # none-suspected | searching | confirmed | cleared
    kind: Optional[str] = None
    rooms_cleared: frozenset[int] = frozenset()

    def suspect(self, kind: str) -> "EmergencyBelief":
        return replace(self, status="searching", kind=kind)

    def confirm(self, kind: str) -> "EmergencyBelief":
        if self.status not in ("searching", "none-suspected"):
            raise InferenceError(f"cannot confirm from status {self.status!r}")
        return replace(self, status="confirmed", kind=kind)

    def mark_cleared(self, room_id: int, total_rooms: int) -> "EmergencyBelief":
        cleared = self.rooms_cleared | {room_id}
        status = "cleared" if len(cleared) >= total_rooms else self.status
        return replace(self, rooms_cleared=cleared, status=status)
