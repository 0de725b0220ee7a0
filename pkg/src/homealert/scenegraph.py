"""Scene graph over rooms, places, and objects, with probabilistic agent nodes.

Static objects hang off rooms through containment edges and carry trait
probabilities (e.g. how likely an object is to cause a fire).  Dynamic
agents are not pinned to a single room: each agent node stores a belief
distribution over rooms that can be sharpened or decayed as the scene is
observed.  Graphs are immutable values; updates return new graphs, so one
graph can be shared read-only across parallel episode runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .world import Floorplan, LocationError, room_of

BELIEF_TOL = 1e-9
DEFAULT_CLEAR_FACTOR = 0.01


class SceneGraphError(Exception):
    """Base class for scene-graph errors."""


class ConfigurationError(SceneGraphError):
    """Raised when build inputs violate a precondition."""


@dataclass(frozen=True)
class RoomNode:
    id: int
    label: str
    centroid: tuple[float, float]


@dataclass(frozen=True)
class PlaceNode:
    id: str
    position: tuple[float, float]
    parent_room: int


@dataclass(frozen=True)
class SceneObject:
    """A placed object before graph construction: label + metric position."""

    label: str
    position: tuple[float, float]


@dataclass(frozen=True)
class StaticObjectNode:
    id: str
    label: str
    position: tuple[float, float]
    parent_room: int
    traits: Mapping[str, float]


@dataclass(frozen=True)
class AgentNode:
    id: str
    room_belief: Mapping[int, float]


@dataclass(frozen=True)
class PDSG:
    """Three-layer scene graph: rooms, places, objects (+ agent nodes)."""

    rooms: tuple[RoomNode, ...]
    places: tuple[PlaceNode, ...]
    objects: tuple[StaticObjectNode, ...]
    agents: tuple[AgentNode, ...]
    edges: tuple[tuple[str, str], ...]

    def room_ids(self) -> tuple[int, ...]:
        return tuple(r.id for r in self.rooms)

    def agent(self, agent_id: str) -> AgentNode:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"unknown agent {agent_id!r}")

    def to_dict(self) -> dict:
        return {
            "rooms": [
                {"id": r.id, "label": r.label, "centroid": list(r.centroid)}
                for r in self.rooms
            ],
            "places": [
                {"id": p.id, "position": list(p.position), "parent_room": p.parent_room}
                for p in self.places
            ],
            "objects": [
                {
                    "id": o.id,
                    "label": o.label,
                    "position": list(o.position),
                    "parent_room": o.parent_room,
                    "traits": dict(sorted(o.traits.items())),
                }
                for o in self.objects
            ],
            "agents": [
                {
                    "id": a.id,
                    "room_belief": {str(k): v for k, v in sorted(a.room_belief.items())},
                }
                for a in self.agents
            ],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PDSG":
        return cls(
            rooms=tuple(
                RoomNode(int(r["id"]), r["label"], tuple(r["centroid"]))
                for r in doc["rooms"]
            ),
            places=tuple(
                PlaceNode(p["id"], tuple(p["position"]), int(p["parent_room"]))
                for p in doc["places"]
            ),
            objects=tuple(
                StaticObjectNode(
                    o["id"], o["label"], tuple(o["position"]), int(o["parent_room"]),
                    {k: float(v) for k, v in o["traits"].items()},
                )
                for o in doc["objects"]
            ),
            agents=tuple(
                AgentNode(a["id"], {int(k): float(v) for k, v in a["room_belief"].items()})
                for a in doc["agents"]
            ),
            edges=tuple((e[0], e[1]) for e in doc["edges"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "PDSG":
        return cls.from_dict(json.loads(text))


def _normalized(values: Mapping[int, float]) -> dict[int, float]:
    total = sum(values.values())
    if total <= 0:
        raise ConfigurationError("distribution has no mass to normalize")
    return {k: v / total for k, v in values.items()}


def build_pdsg(
    plan: Floorplan,
    objects: Sequence[SceneObject],
    heatmap: Mapping[int, float],
    trait_table: Mapping[str, Mapping[str, float]],
    agent_id: str = "human",
) -> PDSG:
    """Assemble the scene graph for one floorplan.

    ``heatmap`` must assign a nonnegative weight to every room; it is
    renormalized into the agent node's room belief.  ``trait_table`` maps an
    object label to its trait probabilities, all in [0, 1].
    """
    room_ids = plan.room_ids()
    missing = [r for r in room_ids if r not in heatmap]
    if missing:
        raise ConfigurationError(f"heatmap missing rooms {missing}")
    if any(v < 0 for v in heatmap.values()):
        raise ConfigurationError("heatmap values must be nonnegative")
    for label, traits in trait_table.items():
        for name, value in traits.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(
                    f"trait {name!r} of {label!r} outside [0, 1]: {value}"
                )

    rooms = tuple(
        RoomNode(rid, plan.room_label(rid), plan.room_centroid(rid)) for rid in room_ids
    )
    places = tuple(
        PlaceNode(f"place_{rid}", plan.room_centroid(rid), rid) for rid in room_ids
    )
    nodes = []
    edges = []
    for i, obj in enumerate(objects):
        try:
            rid = room_of(plan.rooms, obj.position)
        except LocationError as exc:
            raise ConfigurationError(f"object {obj.label!r} placed in a wall") from exc
        node = StaticObjectNode(
            id=f"{obj.label}_{i}",
            label=obj.label,
            position=tuple(obj.position),
            parent_room=rid,
            traits=dict(trait_table.get(obj.label, {})),
        )
        nodes.append(node)
        edges.append((node.id, f"place_{rid}"))
    for p in places:
        edges.append((p.id, f"room_{p.parent_room}"))

    belief = _normalized({rid: float(heatmap[rid]) for rid in room_ids})
    agent = AgentNode(agent_id, belief)
    return PDSG(rooms, places, tuple(nodes), (agent,), tuple(edges))


def agent_room_distribution(graph: PDSG, agent_id: str) -> dict[int, float]:
    """Copy of an agent's belief over rooms; sums to 1."""
    return dict(graph.agent(agent_id).room_belief)


def trait_room_likelihood(graph: PDSG, trait: str) -> dict[int, float]:
    """Per-room likelihood from summed object trait probabilities.

    Rooms accumulate the trait values of their objects and the totals are
    normalized.  When no object in the scene carries the trait, the result
    falls back to uniform so downstream inference degrades gracefully.
    """
    sums = {r.id: 0.0 for r in graph.rooms}
    for obj in graph.objects:
        sums[obj.parent_room] += float(obj.traits.get(trait, 0.0))
    total = sum(sums.values())
    if total <= 0.0:
        return {rid: 1.0 / len(sums) for rid in sums}
    return {rid: v / total for rid, v in sums.items()}


def update_agent_belief(
    graph: PDSG,
    agent_id: str,
    room_id: int,
    seen: bool,
    clear_factor: float = DEFAULT_CLEAR_FACTOR,
) -> PDSG:
    """Return a new graph with one agent's belief updated for a room visit.

    Seeing the agent collapses the belief onto that room.  Not seeing it
    multiplies the room's mass by ``clear_factor`` and renormalizes, so a
    room is down-weighted but never permanently ruled out.
    """
    agent = graph.agent(agent_id)
    if room_id not in agent.room_belief:
        raise KeyError(f"unknown room {room_id}")
    if seen:
        belief = {rid: (1.0 if rid == room_id else 0.0) for rid in agent.room_belief}
    else:
        scaled = {
            rid: (p * clear_factor if rid == room_id else p)
            for rid, p in agent.room_belief.items()
        }
        belief = _normalized(scaled)
    agents = tuple(
        replace(a, room_belief=belief) if a.id == agent_id else a for a in graph.agents
    )
    return replace(graph, agents=agents)


def check_graph_invariants(graph: PDSG) -> None:
    """Raise SceneGraphError when structural or belief invariants fail."""
    for agent in graph.agents:
        total = sum(agent.room_belief.values())
        if abs(total - 1.0) > BELIEF_TOL:
            raise SceneGraphError(f"belief of {agent.id!r} sums to {total}")
        if any(not 0.0 <= p <= 1.0 + BELIEF_TOL for p in agent.room_belief.values()):
            raise SceneGraphError(f"belief of {agent.id!r} has values outside [0, 1]")
        if set(agent.room_belief) != set(graph.room_ids()):
            raise SceneGraphError(f"belief of {agent.id!r} does not cover all rooms")
    parents: dict[str, str] = {}
    for child, parent in graph.edges:
        if child in parents:
            raise SceneGraphError(f"node {child!r} has two parents")
        parents[child] = parent
    for obj in graph.objects:
        if any(not 0.0 <= v <= 1.0 for v in obj.traits.values()):
            raise SceneGraphError(f"object {obj.id!r} has trait outside [0, 1]")
