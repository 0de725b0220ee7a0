"""Episode generation: scenarios, activity schedules, and noisy heatmaps.

An episode pins down one home, one audio event with ground truth, the agent
spawn, and the (noise-added) per-room human-activity heatmap the agent is
given.  Generation is a pure function of (seed, class, polarity, params),
so batches are reproducible and safe to build in parallel.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .acoustics import AudioEvent, DEFAULT_PERIOD, PERIODICITIES, make_event
from .scenegraph import SceneObject
from .world import (
    Floorplan,
    GenerationParams,
    Pose,
    generate_floorplan,
    line_of_sight,
    room_of,
)

BELIEF_TOL = 1e-9
CLASSES = ("fall", "fire")
POLARITIES = ("positive", "negative")
DISTRACTORS = ("box", "suitcase")

_EP_STREAM = 0xE915


class EpisodeError(Exception):
    """Raised when an episode cannot be generated as requested."""


@dataclass(frozen=True)
class ScheduleEntry:
    start_hour: float
    end_hour: float
    activity: str
    rooms: Mapping[str, float]


@dataclass(frozen=True)
class ActivitySchedule:
    """Daily routine: contiguous time ranges with room distributions."""

    entries: tuple[ScheduleEntry, ...]

    def __post_init__(self):
        entries = sorted(self.entries, key=lambda e: e.start_hour)
        if not entries or entries[0].start_hour != 0.0 or entries[-1].end_hour != 24.0:
            raise EpisodeError("schedule must cover the full 24h day")
        for prev, cur in zip(entries, entries[1:]):
            if prev.end_hour != cur.start_hour:
                raise EpisodeError("schedule entries must be contiguous and non-overlapping")
        for e in entries:
            if abs(sum(e.rooms.values()) - 1.0) > BELIEF_TOL:
                raise EpisodeError(f"room distribution of {e.activity!r} does not sum to 1")
        object.__setattr__(self, "entries", tuple(entries))

    def entry_at(self, time_hour: float) -> ScheduleEntry:
        for e in self.entries:
            if e.start_hour <= time_hour < e.end_hour:
                return e
        if time_hour == 24.0:
            return self.entries[-1]
        raise EpisodeError(f"no schedule entry covers {time_hour}")

    def label_occupancy(self) -> dict[str, float]:
        """Fraction of the day spent in each room label."""
        occ: dict[str, float] = {}
        for e in self.entries:
            dur = (e.end_hour - e.start_hour) / 24.0
            for label, p in e.rooms.items():
                occ[label] = occ.get(label, 0.0) + dur * p
        return occ


DEFAULT_SCHEDULE = ActivitySchedule(
    (
        ScheduleEntry(0.0, 7.0, "sleeping", {"bedroom": 1.0}),
        ScheduleEntry(7.0, 8.0, "morning_routine", {"bathroom": 0.6, "kitchen": 0.4}),
        ScheduleEntry(8.0, 12.0, "working", {"office": 0.9, "living_room": 0.1}),
        ScheduleEntry(12.0, 13.0, "lunch", {"kitchen": 1.0}),
        ScheduleEntry(13.0, 17.0, "working", {"office": 0.8, "living_room": 0.2}),
        ScheduleEntry(17.0, 19.0, "cooking", {"kitchen": 0.9, "living_room": 0.1}),
        ScheduleEntry(19.0, 22.0, "relaxing", {"living_room": 0.9, "bedroom": 0.1}),
        ScheduleEntry(22.0, 24.0, "winding_down", {"bedroom": 0.8, "bathroom": 0.2}),
    )
)

# Trait probabilities per object label; stands in for an external annotator
# and is plain editable configuration, not ground truth.
DEFAULT_TRAITS: Mapping[str, Mapping[str, float]] = {
    "stove": {"fire_cause": 0.9, "trip_hazard": 0.0},
    "toaster": {"fire_cause": 0.6, "trip_hazard": 0.0},
    "heater": {"fire_cause": 0.5, "trip_hazard": 0.1},
    "hair_dryer": {"fire_cause": 0.4, "trip_hazard": 0.1},
    "candle": {"fire_cause": 0.3, "trip_hazard": 0.0},
    "computer": {"fire_cause": 0.2, "trip_hazard": 0.1},
    "lamp": {"fire_cause": 0.1, "trip_hazard": 0.2},
    "tv": {"fire_cause": 0.1, "trip_hazard": 0.0},
    "sofa": {"fire_cause": 0.0, "trip_hazard": 0.0},
    "bed": {"fire_cause": 0.0, "trip_hazard": 0.0},
    "sink": {"fire_cause": 0.0, "trip_hazard": 0.0},
    "rug": {"fire_cause": 0.0, "trip_hazard": 0.6},
    "box": {"fire_cause": 0.0, "trip_hazard": 0.3},
    "suitcase": {"fire_cause": 0.0, "trip_hazard": 0.3},
}

DEFAULT_OBJECTS: Mapping[str, Sequence[str]] = {
    "kitchen": ("stove", "toaster", "sink"),
    "living_room": ("sofa", "tv", "candle"),
    "bedroom": ("bed", "lamp"),
    "office": ("computer", "heater"),
    "bathroom": ("hair_dryer", "sink"),
    "hallway": ("rug",),
}


@dataclass(frozen=True)
class Heatmap:
    """Per-room prior of human presence after optional Gaussian noise."""

    values: Mapping[int, float]
    sigma_applied: float = 0.0

    def __post_init__(self):
        if any(v < 0 for v in self.values.values()):
            raise EpisodeError("heatmap values must be nonnegative")
        if abs(sum(self.values.values()) - 1.0) > BELIEF_TOL:
            raise EpisodeError("heatmap must sum to 1")


def sample_human_room(schedule: ActivitySchedule, time_hour: float, rng: np.random.Generator) -> str:
    """Room label the human occupies at a time of day."""
    if not 0.0 <= time_hour <= 24.0:
        raise EpisodeError(f"time of day {time_hour} outside [0, 24]")
    entry = schedule.entry_at(time_hour)
    labels = sorted(entry.rooms)
    probs = np.array([entry.rooms[k] for k in labels])
    return labels[int(rng.choice(len(labels), p=probs / probs.sum()))]


def make_heatmap(
    schedule: ActivitySchedule,
    sigma: float,
    rng: np.random.Generator,
    plan: Floorplan,
) -> Heatmap:
    """Noise-added per-room heatmap from the schedule's occupancy fractions.

    Label mass is split evenly among same-label rooms; labels the plan does
    not contain contribute nothing.  Gaussian noise is added per room,
    negatives clamp to zero, and the result renormalizes (uniform fallback
    when everything clamps).
    """
    if sigma < 0:
        raise EpisodeError("sigma must be nonnegative")
    occ = schedule.label_occupancy()
    room_ids = plan.room_ids()
    counts: dict[str, int] = {}
    for rid in room_ids:
        counts[plan.room_label(rid)] = counts.get(plan.room_label(rid), 0) + 1
    base = np.array(
        [occ.get(plan.room_label(rid), 0.0) / counts[plan.room_label(rid)] for rid in room_ids]
    )
    if base.sum() <= 0:
        base = np.ones(len(room_ids))
    base = base / base.sum()
    if sigma > 0:
        base = np.clip(base + rng.normal(0.0, sigma, size=len(room_ids)), 0.0, None)
        if base.sum() <= 0:
            base = np.ones(len(room_ids))
    base = base / base.sum()
    return Heatmap(values={rid: float(base[i]) for i, rid in enumerate(room_ids)},
                   sigma_applied=float(sigma))


@dataclass(frozen=True)
class GroundTruth:
    emergency: bool
    kind: Optional[str]
    source: tuple[float, float]
    source_room: int
    human_pose: Optional[tuple[float, float]] = None
    distractor: Optional[str] = None


@dataclass(frozen=True)
class EpisodeParams:
    """Everything the generator needs beyond (seed, class, polarity)."""

    floorplan: GenerationParams = GenerationParams()
    schedule: ActivitySchedule = DEFAULT_SCHEDULE
    sigma: float = 0.05
    trait_table: Mapping[str, Mapping[str, float]] = field(default_factory=lambda: DEFAULT_TRAITS)
    objects_per_room: Mapping[str, Sequence[str]] = field(default_factory=lambda: DEFAULT_OBJECTS)
    period: int = DEFAULT_PERIOD
    step_budget: int = 500
    spawn_excludes_source_room: bool = True
    spawn_visibility_range: float = 5.0
    floorplan_seed: Optional[int] = None


@dataclass(frozen=True)
class EpisodeSpec:
    """One generated scenario, fully determined and serializable."""

    episode_id: str
    seed: int
    floorplan_seed: int
    floorplan_params: GenerationParams
    category: str
    polarity: str
    audio_event: AudioEvent
    ground_truth: GroundTruth
    agent_spawn: Pose
    heatmap: Heatmap
    objects: tuple[SceneObject, ...]
    labeler_seed: int
    step_budget: int = 500
    direction_noise_sigma: float = 0.0

    def floorplan(self) -> Floorplan:
        return _cached_plan(self.floorplan_seed, self.floorplan_params)

    def to_dict(self) -> dict:
        ev = self.audio_event
        gt = self.ground_truth
        return {
            "episode_id": self.episode_id,
            "seed": self.seed,
            "class": self.category,
            "polarity": self.polarity,
            "floorplan": {"seed": self.floorplan_seed,
                          "params": _params_to_dict(self.floorplan_params)},
            "audio_event": {
                "source": list(ev.source),
                "true_class": ev.true_class,
                "periodicity": ev.periodicity,
                "period": ev.period,
                "cutoff_step": ev.cutoff_step,
            },
            "ground_truth": {
                "emergency": gt.emergency,
                "kind": gt.kind,
                "source": list(gt.source),
                "source_room": gt.source_room,
                "human_pose": list(gt.human_pose) if gt.human_pose else None,
                "distractor": gt.distractor,
            },
            "agent_spawn": {"x": self.agent_spawn.x, "y": self.agent_spawn.y,
                            "heading": self.agent_spawn.heading},
            "heatmap": {"values": {str(k): v for k, v in sorted(self.heatmap.values.items())},
                        "sigma_applied": self.heatmap.sigma_applied},
            "objects": [{"label": o.label, "position": list(o.position)} for o in self.objects],
            "labeler_seed": self.labeler_seed,
            "step_budget": self.step_budget,
            "direction_noise_sigma": self.direction_noise_sigma,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EpisodeSpec":
        params = _params_from_dict(doc["floorplan"]["params"])
        ev = doc["audio_event"]
        gt = doc["ground_truth"]
        spawn = doc["agent_spawn"]
        return cls(
            episode_id=doc["episode_id"],
            seed=int(doc["seed"]),
            floorplan_seed=int(doc["floorplan"]["seed"]),
            floorplan_params=params,
            category=doc["class"],
            polarity=doc["polarity"],
            audio_event=make_event(
                tuple(ev["source"]), ev["true_class"], ev["periodicity"],
                period=int(ev["period"]), horizon=int(doc["step_budget"]),
                cutoff_step=ev["cutoff_step"],
            ),
            ground_truth=GroundTruth(
                emergency=bool(gt["emergency"]),
                kind=gt["kind"],
                source=tuple(gt["source"]),
                source_room=int(gt["source_room"]),
                human_pose=tuple(gt["human_pose"]) if gt["human_pose"] else None,
                distractor=gt["distractor"],
            ),
            agent_spawn=Pose(spawn["x"], spawn["y"], spawn["heading"]),
            heatmap=Heatmap({int(k): float(v) for k, v in doc["heatmap"]["values"].items()},
                            float(doc["heatmap"]["sigma_applied"])),
            objects=tuple(SceneObject(o["label"], tuple(o["position"])) for o in doc["objects"]),
            labeler_seed=int(doc["labeler_seed"]),
            step_budget=int(doc["step_budget"]),
            direction_noise_sigma=float(doc["direction_noise_sigma"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "EpisodeSpec":
        return cls.from_dict(json.loads(text))


def _params_to_dict(p: GenerationParams) -> dict:
    return {
        "room_count": list(p.room_count),
        "area_m2": list(p.area_m2),
        "resolution": p.resolution,
        "min_room_m": p.min_room_m,
        "door_width_m": p.door_width_m,
        "extra_door_prob": p.extra_door_prob,
        "aspect": list(p.aspect),
        "max_retries": p.max_retries,
    }


def _params_from_dict(d: dict) -> GenerationParams:
    return GenerationParams(
        room_count=tuple(d["room_count"]),
        area_m2=tuple(d["area_m2"]),
        resolution=float(d["resolution"]),
        min_room_m=float(d["min_room_m"]),
        door_width_m=float(d["door_width_m"]),
        extra_door_prob=float(d["extra_door_prob"]),
        aspect=tuple(d["aspect"]),
        max_retries=int(d["max_retries"]),
    )


@functools.lru_cache(maxsize=16)
def _cached_plan(seed: int, params: GenerationParams) -> Floorplan:
    return generate_floorplan(seed, params)


def _interior_free_cells(plan: Floorplan, room_id: Optional[int] = None) -> np.ndarray:
    """(N, 2) array of (ix, iy) free cells excluding doorway cells."""
    if room_id is None:
        mask = plan.grid.free_mask().copy()
        for (ix, iy) in plan._portal_cells:
            mask[iy, ix] = False
    else:
        mask = plan.room_interior_mask(room_id)
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys])


def _pick_cell(rng: np.random.Generator, cells: np.ndarray, plan: Floorplan) -> tuple[float, float]:
    ix, iy = cells[int(rng.integers(len(cells)))]
    return plan.grid.cell_center((int(ix), int(iy)))


def place_objects(
    plan: Floorplan,
    objects_per_room: Mapping[str, Sequence[str]],
    rng: np.random.Generator,
) -> tuple[SceneObject, ...]:
    """Scatter the configured furnishings over each room's interior cells."""
    placed = []
    for rid in plan.room_ids():
        cells = _interior_free_cells(plan, rid)
        for label in objects_per_room.get(plan.room_label(rid), ()):
            placed.append(SceneObject(label, _pick_cell(rng, cells, plan)))
    return tuple(placed)


def _sample_spawn(
    rng: np.random.Generator,
    plan: Floorplan,
    source: tuple[float, float],
    source_room: int,
    params: EpisodeParams,
) -> Pose:
    """Spawn pose outside the source room and without an immediate view.

    Excluding cells that already see the source keeps the optimal path
    length strictly positive, so path-efficiency metrics stay well defined.
    """
    if params.spawn_excludes_source_room:
        candidates = [
            _interior_free_cells(plan, rid)
            for rid in plan.room_ids()
            if rid != source_room
        ]
        cells = np.concatenate([c for c in candidates if len(c)])
    else:
        cells = _interior_free_cells(plan)
    rng_range = params.spawn_visibility_range
    for _ in range(200):
        point = _pick_cell(rng, cells, plan)
        dx = point[0] - source[0]
        dy = point[1] - source[1]
        if dx * dx + dy * dy <= rng_range * rng_range and line_of_sight(plan.grid, point, source):
            continue
        heading = 15.0 * int(rng.integers(0, 24))
        return Pose(point[0], point[1], heading)
    raise EpisodeError("could not find a spawn cell hidden from the source")


def _sample_human_position(
    rng: np.random.Generator,
    plan: Floorplan,
    schedule: ActivitySchedule,
    time_hour: float,
) -> tuple[tuple[float, float], int]:
    """Pick the fallen human's cell via the activity schedule.

    The schedule's room distribution is restricted to labels present in this
    plan; when none are present the room is drawn uniformly.
    """
    entry = schedule.entry_at(time_hour)
    present = {plan.room_label(rid) for rid in plan.room_ids()}
    usable = {k: v for k, v in entry.rooms.items() if k in present and v > 0}
    if usable:
        labels = sorted(usable)
        probs = np.array([usable[k] for k in labels])
        label = labels[int(rng.choice(len(labels), p=probs / probs.sum()))]
        rooms = [rid for rid in plan.room_ids() if plan.room_label(rid) == label]
    else:
        rooms = list(plan.room_ids())
    room = rooms[int(rng.integers(len(rooms)))]
    cells = _interior_free_cells(plan, room)
    return _pick_cell(rng, cells, plan), room


def generate_episode(
    seed: int,
    category: str,
    polarity: str,
    params: EpisodeParams = EpisodeParams(),
) -> EpisodeSpec:
    """Generate one fully specified scenario."""
    if category not in CLASSES:
        raise EpisodeError(f"unknown class {category!r}")
    if polarity not in POLARITIES:
        raise EpisodeError(f"unknown polarity {polarity!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _EP_STREAM]))
    fp_seed = params.floorplan_seed
    if fp_seed is None:
        fp_seed = int(rng.integers(0, 2**31))
    else:
        rng.integers(0, 2**31)  # keep the stream aligned either way
    plan = _cached_plan(fp_seed, params.floorplan)
    objects = place_objects(plan, params.objects_per_room, rng)
    heatmap = make_heatmap(params.schedule, params.sigma, rng, plan)
    time_hour = float(rng.uniform(0.0, 24.0))
    budget = params.step_budget

    if category == "fall":
        periodicity = "aperiodic"
        cutoff = None
        if polarity == "positive":
            source, source_room = _sample_human_position(rng, plan, params.schedule, time_hour)
            gt = GroundTruth(True, "fall", source, source_room, human_pose=source)
        else:
            cells = _interior_free_cells(plan)
            source = _pick_cell(rng, cells, plan)
            source_room = room_of(plan.rooms, source)
            distractor = DISTRACTORS[int(rng.integers(len(DISTRACTORS)))]
            gt = GroundTruth(False, None, source, source_room, distractor=distractor)
        true_class = "thud"
    else:
        periodicity = PERIODICITIES[int(rng.integers(len(PERIODICITIES)))]
        cutoff = (
            int(rng.integers(budget // 4, 3 * budget // 4))
            if periodicity == "semiperiodic"
            else None
        )
        fire_objects = [
            o for o in objects if params.trait_table.get(o.label, {}).get("fire_cause", 0.0) > 0
        ]
        if polarity == "positive":
            if not fire_objects:
                raise EpisodeError("no object with a fire_cause trait in the scene")
            obj = fire_objects[int(rng.integers(len(fire_objects)))]
            source = obj.position
            source_room = room_of(plan.rooms, source)
            gt = GroundTruth(True, "fire", source, source_room)
        else:
            cells = _interior_free_cells(plan)
            taken = {o.position for o in fire_objects}
            for _ in range(200):
                source = _pick_cell(rng, cells, plan)
                if source not in taken:
                    break
            source_room = room_of(plan.rooms, source)
            gt = GroundTruth(False, None, source, source_room)
        true_class = "smoke_alarm"

    event = make_event(gt.source, true_class, periodicity, period=params.period,
                       horizon=budget, cutoff_step=cutoff)
    spawn = _sample_spawn(rng, plan, gt.source, gt.source_room, params)
    labeler_seed = int(rng.integers(0, 2**31))
    episode_id = f"{category}-{polarity[:3]}-{int(seed):08d}"
    return EpisodeSpec(
        episode_id=episode_id,
        seed=int(seed),
        floorplan_seed=fp_seed,
        floorplan_params=params.floorplan,
        category=category,
        polarity=polarity,
        audio_event=event,
        ground_truth=gt,
        agent_spawn=spawn,
        heatmap=heatmap,
        objects=objects,
        labeler_seed=labeler_seed,
        step_budget=budget,
    )


def generate_batch(
    seed: int,
    count: int,
    params: EpisodeParams = EpisodeParams(),
    categories: Sequence[str] = CLASSES,
    positive_fraction: float = 0.5,
) -> list[EpisodeSpec]:
    """Generate ``count`` episodes cycling classes and polarities evenly."""
    episodes = []
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0xBA7C4]))
    n_pos = int(round(count * positive_fraction))
    for i in range(count):
        category = categories[i % len(categories)]
        # Bresenham-style spread keeps polarities evenly interleaved
        polarity = "positive" if (i * n_pos) // count < ((i + 1) * n_pos) // count else "negative"
        episodes.append(generate_episode(int(rng.integers(0, 2**31)), category, polarity, params))
    return episodes
