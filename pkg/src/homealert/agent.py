"""Discrete action model, episode execution, and the two search policies.

The agent moves on a 15-degree / 0.15 m action lattice.  ``ours_policy``
listens for a trigger sound, maintains a Bayesian room posterior, and sweeps
rooms in posterior order, clearing each one it searches without success.
``df_policy`` is the unguided baseline: it chases the perceived bearing
through doorways and falls back to proximity-ordered exploration once the
bearing information is used up.  Both run the emergency detector after
every action and scan 360 degrees on entering a new room.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .acoustics import (
    AudioObservation,
    DEFAULT_TRIGGERS,
    Labeler,
    grounding_of,
    identity_labeler,
    is_emergency_trigger,
    observe_audio,
)
from .episodes import EpisodeSpec
from .geometry import ang_diff_deg, bearing_deg, wrap_deg
from .identify import DetectorVerdict, SimulatedDetector, detect
from .inference import (
    EmergencyBelief,
    RoomPosterior,
    clear_room,
    direction_likelihoods,
    init_prior,
    label_likelihood,
    posterior_update,
    reobserve,
    select_target,
)
from .scenegraph import PDSG, build_pdsg, update_agent_belief
from .world import (
    Floorplan,
    LocationError,
    NoPathError,
    Pose,
    motion_clear,
    nearest_nav_cell,
    path_field,
    room_of,
)

TURN_DEG = 15.0
STEP_M = 0.15
HARD_STEP_CAP = 100_000


@dataclass(frozen=True)
class Action:
    name: str  # turn_left | turn_right | forward | listen | declare | stop
    declare_kind: Optional[str] = None

    def __str__(self) -> str:
        if self.name == "declare":
            return f"declare:{self.declare_kind}"
        return self.name


TURN_LEFT = Action("turn_left")
TURN_RIGHT = Action("turn_right")
FORWARD = Action("forward")
LISTEN = Action("listen")
STOP = Action("stop")


def declare(kind: str) -> Action:
    return Action("declare", declare_kind=kind)


def step(plan: Floorplan, pose: Pose, action: Action) -> tuple[Pose, bool]:
    """Apply one action; forward moves are blocked by walls.

    A forward step collides when its destination cell is occupied or when
    the swept segment crosses a wall cell (a 0.15 m step can span a thin
    wall, so checking the destination alone would tunnel through it).
    """
    if action.name == "turn_left":
        return Pose(pose.x, pose.y, wrap_deg(pose.heading + TURN_DEG)), False
    if action.name == "turn_right":
        return Pose(pose.x, pose.y, wrap_deg(pose.heading - TURN_DEG)), False
    if action.name == "forward":
        rad = math.radians(pose.heading)
        target = (pose.x + STEP_M * math.cos(rad), pose.y + STEP_M * math.sin(rad))
        if not plan.grid.is_free(target) or not motion_clear(plan.grid, pose.xy, target):
            return pose, True
        return Pose(target[0], target[1], pose.heading), False
    return pose, False


@dataclass
class StepRecord:
    index: int
    action: Action
    pose: Pose
    collided: bool = False
    observation: Optional[AudioObservation] = None
    posterior: Optional[RoomPosterior] = None
    verdict: Optional[DetectorVerdict] = None


@dataclass
class Trace:
    """Execution record of one episode run."""

    episode_id: str
    policy: str
    records: list[StepRecord]
    outcome: Optional[str]
    termination: str  # declared | cleared | budget | collision-abort
    steps_used: int
    path_length: float
    collisions: int
    rooms_visited: tuple[int, ...]
    aborted: bool = False

    def to_dict(self, episode: Optional[EpisodeSpec] = None) -> dict:
        doc = {
            "episode_id": self.episode_id,
            "policy": self.policy,
            "outcome": self.outcome,
            "termination": self.termination,
            "steps_used": self.steps_used,
            "path_length": self.path_length,
            "collisions": self.collisions,
            "rooms_visited": list(self.rooms_visited),
            "aborted": self.aborted,
            "records": [
                {
                    "i": r.index,
                    "action": str(r.action),
                    "pose": [r.pose.x, r.pose.y, r.pose.heading],
                    "collided": r.collided,
                    "observation": (
                        {"label": r.observation.label, "bearing": r.observation.bearing,
                         "step": r.observation.step}
                        if r.observation else None
                    ),
                    "posterior": (
                        {str(k): v for k, v in sorted(r.posterior.probs.items())}
                        if r.posterior else None
                    ),
                    "verdict": (
                        {"emergency": r.verdict.emergency, "kind": r.verdict.kind,
                         "reason": r.verdict.reason}
                        if r.verdict else None
                    ),
                }
                for r in self.records
            ],
        }
        if episode is not None:
            doc["episode"] = episode.to_dict()
        return doc

    def to_json(self, episode: Optional[EpisodeSpec] = None) -> str:
        return json.dumps(self.to_dict(episode), sort_keys=True, separators=(",", ":"))


@dataclass
class PolicyConfig:
    """Run-level configuration shared by both policies."""

    detector: SimulatedDetector = field(default_factory=SimulatedDetector)
    labeler_confusion: Optional[np.ndarray] = None  # None -> identity labeler
    relisten_interval: int = 10
    scan_turn_steps: int = 24
    direction_threshold: float = 30.0
    clear_factor: float = 0.01
    collision_policy: str = "continue"  # continue | abort
    step_budget: Optional[int] = None  # None -> episode's budget
    use_direction: bool = True
    use_label: bool = True
    coverage_radius_frac: float = 0.95
    waypoint_tol: float = 0.12
    agent_node: str = "human"


class _Terminated(Exception):
    def __init__(self, outcome: Optional[str], termination: str):
        self.outcome = outcome
        self.termination = termination


class _Retarget(Exception):
    pass


class _RoomCoverage:
    """Tracks which interior cells of each room have been swept by a scan.

    Rooms that form a filled rectangle are convex, so coverage is a pure
    distance test.  Irregular (hand-built) rooms additionally require line
    of sight from the scan pose.
    """

    def __init__(self, plan: Floorplan, radius: float):
        self.plan = plan
        self.radius = radius
        self.centers: dict[int, np.ndarray] = {}
        self.covered: dict[int, np.ndarray] = {}
        self.convex: dict[int, bool] = {}
        res = plan.grid.resolution
        for rid in plan.room_ids():
            ys, xs = np.nonzero(plan.room_interior_mask(rid))
            pts = np.column_stack([(xs + 0.5) * res, (ys + 0.5) * res])
            self.centers[rid] = pts
            self.covered[rid] = np.zeros(len(pts), dtype=bool)
            w = xs.max() - xs.min() + 1 if len(xs) else 0
            h = ys.max() - ys.min() + 1 if len(ys) else 0
            self.convex[rid] = w * h == len(xs)

    def sweep_from(self, rid: int, pose: Pose) -> None:
        pts = self.centers[rid]
        d2 = (pts[:, 0] - pose.x) ** 2 + (pts[:, 1] - pose.y) ** 2
        reach = d2 <= self.radius**2
        if not self.convex[rid]:
            for i in np.nonzero(reach & ~self.covered[rid])[0]:
                if not line_of_sight(self.plan.grid, pose.xy, tuple(pts[i])):
                    reach[i] = False
        self.covered[rid] |= reach

    def full(self, rid: int) -> bool:
        return bool(self.covered[rid].all())

    def nearest_uncovered(self, rid: int, pose: Pose) -> Optional[tuple[float, float]]:
        pts = self.centers[rid]
        open_idx = np.nonzero(~self.covered[rid])[0]
        if len(open_idx) == 0:
            return None
        d2 = (pts[open_idx, 0] - pose.x) ** 2 + (pts[open_idx, 1] - pose.y) ** 2
        best = open_idx[int(np.argmin(d2))]
        return (float(pts[best, 0]), float(pts[best, 1]))


class _PolicyRun:
    """Shared episode-execution machinery for both policies."""

    policy_name = "base"

    def __init__(self, episode: EpisodeSpec, config: PolicyConfig):
        self.episode = episode
        self.config = config
        self.plan = episode.floorplan()
        self.pose = episode.agent_spawn
        self.budget = config.step_budget if config.step_budget is not None else episode.step_budget
        self.budget = min(self.budget, HARD_STEP_CAP)
        if config.labeler_confusion is None:
            self.labeler = identity_labeler(seed=episode.labeler_seed)
        else:
            self.labeler = Labeler(config.labeler_confusion, seed=episode.labeler_seed)
        self.detector = config.detector.spawn(
            seed=(episode.seed * 1_000_003 + config.detector.seed) & 0x7FFFFFFF
        )
        self.records: list[StepRecord] = []
        self.collisions = 0
        self.forward_count = 0
        self.last_listen = -(10**9)
        self.coverage = _RoomCoverage(self.plan, config.coverage_radius_frac * config.detector.range_m)
        self.current_room = room_of(self.plan.rooms, self.pose.xy)
        self.rooms_visited: list[int] = [self.current_room]
        self.entry_scanned: set[int] = set()
        self.pending_entry_scan = True  # the spawn room counts as newly entered
        self.in_scan = False
        self.pending_retarget = False

    # -- primitive execution ------------------------------------------------

    def act(self, action: Action) -> StepRecord:
        if len(self.records) >= self.budget:
            raise _Terminated(None, "budget")
        new_pose, collided = step(self.plan, self.pose, action)
        self.pose = new_pose
        if collided:
            self.collisions += 1
        elif action.name == "forward":
            self.forward_count += 1
        rec = StepRecord(index=len(self.records), action=action, pose=self.pose, collided=collided)
        self.records.append(rec)
        if collided and self.config.collision_policy == "abort":
            raise _Terminated(None, "collision-abort")
        verdict = detect(self.detector, self.episode.ground_truth, self.pose, self.plan)
        if verdict.emergency or verdict.reason in ("in-view", "misclassified"):
            rec.verdict = verdict
        if verdict.emergency:
            self._declare(verdict.kind)
        room = room_of(self.plan.rooms, self.pose.xy)
        if room != self.current_room:
            self.current_room = room
            if room not in self.rooms_visited:
                self.rooms_visited.append(room)
            if room not in self.entry_scanned:
                self.pending_entry_scan = True
        return rec

    def _declare(self, kind: str) -> None:
        if len(self.records) < self.budget:
            rec = StepRecord(
                index=len(self.records), action=declare(kind), pose=self.pose,
                verdict=DetectorVerdict(True, kind, "in-view"),
            )
            self.records.append(rec)
        raise _Terminated(kind, "declared")

    # -- listening ------------------------------------------------------

    def listen_now(self) -> Optional[AudioObservation]:
        rec = self.act(LISTEN)
        self.last_listen = len(self.records)
        obs = observe_audio(
            self.episode.audio_event, self.pose, self.plan, self.labeler,
            step=rec.index, direction_noise_sigma=self.episode.direction_noise_sigma,
        )
        if obs is not None:
            rec.observation = obs
            self.process_observation(obs, rec)
        return obs

    def listen_if_due(self) -> None:
        if len(self.records) - self.last_listen >= self.config.relisten_interval:
            self.listen_now()

    def process_observation(self, obs: AudioObservation, rec: StepRecord) -> None:
        raise NotImplementedError

    def on_room_covered(self, rid: int) -> None:
        pass

    # -- scanning -------------------------------------------------------

    def scan_360(self) -> None:
        if self.in_scan:
            return
        self.in_scan = True
        try:
            for _ in range(self.config.scan_turn_steps):
                self.listen_if_due()
                self.act(TURN_LEFT)
        finally:
            self.in_scan = False
        rid = self.current_room
        already_full = self.coverage.full(rid)
        self.coverage.sweep_from(rid, self.pose)
        if not already_full and self.coverage.full(rid):
            self.on_room_covered(rid)

    def maybe_entry_scan(self) -> None:
        if self.pending_entry_scan and not self.in_scan:
            self.pending_entry_scan = False
            self.entry_scanned.add(self.current_room)
            self.scan_360()

    def check_retarget(self) -> None:
        if self.pending_retarget and not self.in_scan:
            self.pending_retarget = False
            raise _Retarget()

    # -- navigation -------------------------------------------------------

    def _align_to(self, bearing: float) -> None:
        lattice = wrap_deg(round(bearing / TURN_DEG) * TURN_DEG)
        delta = (lattice - self.pose.heading) % 360.0
        if delta > 180.0:
            delta -= 360.0
        turns = int(round(delta / TURN_DEG))
        action = TURN_LEFT if turns > 0 else TURN_RIGHT
        for _ in range(abs(turns)):
            self.act(action)

    def _decimate(self, points: list[tuple[float, float]]) -> list[tuple[float, float]]:
        """Keep only the corner waypoints of a cell-center path."""
        if len(points) <= 2:
            return points[1:] if len(points) == 2 else []
        out = []
        for prev, cur, nxt in zip(points, points[1:], points[2:]):
            d1 = (cur[0] - prev[0], cur[1] - prev[1])
            d2 = (nxt[0] - cur[0], nxt[1] - cur[1])
            if abs(d1[0] * d2[1] - d1[1] * d2[0]) > 1e-9:
                out.append(cur)
        out.append(points[-1])
        return out

    def goto(self, point: tuple[float, float]) -> None:
        """Drive near a free point, re-planning on collisions."""
        tol = self.config.waypoint_tol
        stall = 0
        waypoints = self._plan_waypoints(point)
        goal = waypoints[-1] if waypoints else tuple(point)
        while True:
            self.check_retarget()
            self.listen_if_due()
            self.maybe_entry_scan()
            while waypoints and math.dist(self.pose.xy, waypoints[0]) <= tol:
                waypoints.pop(0)
            if not waypoints:
                if math.dist(self.pose.xy, goal) <= max(tol, STEP_M):
                    return
                waypoints = self._plan_waypoints(point)
                if not waypoints:
                    return
            target = waypoints[0]
            self._align_to(bearing_deg(self.pose.xy, target))
            rec = self.act(FORWARD)
            if rec.collided:
                stall += 1
                if stall % 8 == 0:
                    self.act(TURN_LEFT)
                if stall > 100:
                    raise NoPathError(f"stuck navigating to {point}")
                waypoints = self._plan_waypoints(point)
            else:
                stall = 0

    def _plan_waypoints(self, point) -> list[tuple[float, float]]:
        """Waypoints toward a point, planned with one cell of wall clearance.

        Start and goal snap to the nearest clearance cell; the plain grid is
        the fallback when the inflated one cannot connect them.
        """
        grid = self.plan.grid
        try:
            start = nearest_nav_cell(grid, self.pose.xy)
            goal = nearest_nav_cell(grid, point)
            field_ = path_field(grid, grid.cell_center(start), nav=True)
            cells = field_.cells_to(grid.cell_center(goal))
        except (NoPathError, LocationError):
            cells = path_field(grid, self.pose.xy).cells_to(point)
        centers = [grid.cell_center(c) for c in cells]
        waypoints = self._decimate(centers)
        if centers and math.dist(self.pose.xy, centers[0]) > self.config.waypoint_tol:
            waypoints.insert(0, centers[0])
        return waypoints

    def sweep_room(self, rid: int) -> None:
        """Visit and fully scan one room (unless a detection ends the run)."""
        if not self.coverage.full(rid):
            self.goto(self.plan.room_centroid(rid))
        while not self.coverage.full(rid):
            self.check_retarget()
            target = self.coverage.nearest_uncovered(rid, self.pose)
            if target is None:
                break
            self.goto(target)
            self.scan_360()

    # -- trace assembly ---------------------------------------------------

    def finish(self, outcome: Optional[str], termination: str) -> Trace:
        return Trace(
            episode_id=self.episode.episode_id,
            policy=self.policy_name,
            records=self.records,
            outcome=outcome,
            termination=termination,
            steps_used=len(self.records),
            path_length=STEP_M * self.forward_count,
            collisions=self.collisions,
            rooms_visited=tuple(self.rooms_visited),
            aborted=termination == "collision-abort",
        )


class _OursRun(_PolicyRun):
    policy_name = "ours"

    def __init__(self, episode: EpisodeSpec, graph: PDSG, config: PolicyConfig):
        super().__init__(episode, config)
        self.graph = graph
        self.posterior: Optional[RoomPosterior] = None
        self.kind: Optional[str] = None
        self.belief = EmergencyBelief()
        self.cleared: set[int] = set()
        self.current_target: Optional[int] = None

    def process_observation(self, obs: AudioObservation, rec: StepRecord) -> None:
        cfg = self.config
        if self.posterior is None:
            kind = is_emergency_trigger(obs.label)
            if kind is None:
                return
            self.kind = kind
            self.belief = self.belief.suspect(kind)
            prior = init_prior(self.plan.room_ids())
            if cfg.use_label:
                label_lik = label_likelihood(self.graph, kind, agent_id=cfg.agent_node)
            else:
                label_lik = {r: 1.0 for r in self.plan.room_ids()}
            if cfg.use_direction:
                dir_lik = direction_likelihoods(self.plan, self.pose, obs.bearing,
                                                cfg.direction_threshold)
            else:
                dir_lik = {r: 1.0 for r in self.plan.room_ids()}
            self.posterior = posterior_update(prior, label_lik, dir_lik)
        else:
            self.posterior = reobserve(
                self.posterior, obs, self.graph, self.plan, self.pose,
                threshold=cfg.direction_threshold,
                use_direction=cfg.use_direction, use_label=cfg.use_label,
                agent_id=cfg.agent_node,
            )
        rec.posterior = self.posterior
        if self.current_target is not None:
            if self._pick_target() != self.current_target:
                self.pending_retarget = True

    def on_room_covered(self, rid: int) -> None:
        if rid in self.cleared:
            return
        self.cleared.add(rid)
        self.belief = self.belief.mark_cleared(rid, self.plan.n_rooms)
        if self.posterior is not None:
            self.posterior = clear_room(self.posterior, rid, self.config.clear_factor)
        if self.kind is not None and grounding_of(self.kind) == "agent":
            self.graph = update_agent_belief(
                self.graph, self.config.agent_node, rid, seen=False,
                clear_factor=self.config.clear_factor,
            )

    def _pick_target(self) -> int:
        open_rooms = {r: p for r, p in self.posterior.probs.items() if r not in self.cleared}
        if not open_rooms:
            return self.posterior.argmax()
        total = sum(open_rooms.values())
        if total <= 0:
            sub = RoomPosterior({r: 1.0 / len(open_rooms) for r in open_rooms})
        else:
            sub = RoomPosterior({r: p / total for r, p in open_rooms.items()})
        return select_target(sub, self.pose, self.plan)

    def run(self) -> Trace:
        try:
            # listen first: an instantaneous emission is only audible at step 0
            while True:
                if self.posterior is None:
                    self.listen_now()
                    self.maybe_entry_scan()
                    continue
                if len(self.cleared) >= self.plan.n_rooms:
                    return self.finish(None, "cleared")
                self.current_target = self._pick_target()
                try:
                    self.sweep_room(self.current_target)
                except _Retarget:
                    continue
                except NoPathError:
                    self.on_room_covered(self.current_target)
                finally:
                    self.current_target = None
        except _Terminated as end:
            return self.finish(end.outcome, end.termination)


class _DFRun(_PolicyRun):
    policy_name = "df"

    def __init__(self, episode: EpisodeSpec, config: PolicyConfig):
        super().__init__(episode, config)
        self.bearing: Optional[float] = None
        self.bearing_fresh = False
        self.crossed: set[int] = set()  # portal indices used since the last observation

    def process_observation(self, obs: AudioObservation, rec: StepRecord) -> None:
        if self.bearing is None and is_emergency_trigger(obs.label) is None:
            return
        self.bearing = obs.bearing
        self.bearing_fresh = True
        self.crossed.clear()

    def _best_portal(self) -> Optional[int]:
        """Portal of the current room best aligned with the heard bearing."""
        options = []
        for i, portal in enumerate(self.plan.portals):
            if self.current_room not in portal.rooms or i in self.crossed:
                continue
            dev = ang_diff_deg(bearing_deg(self.pose.xy, portal.midpoint), self.bearing)
            options.append((dev, i))
        if not options:
            return None
        options.sort()
        return options[0][1]

    def _cross_portal(self, index: int) -> None:
        portal = self.plan.portals[index]
        self.crossed.add(index)
        self.goto(portal.midpoint)
        other = portal.other_room(self.current_room)
        if other == self.current_room:  # already crossed while approaching
            return
        target = self.coverage.nearest_uncovered(other, self.pose)
        if target is None:
            ys, xs = np.nonzero(self.plan.room_interior_mask(other))
            res = self.plan.grid.resolution
            d2 = ((xs + 0.5) * res - self.pose.x) ** 2 + ((ys + 0.5) * res - self.pose.y) ** 2
            k = int(np.argmin(d2))
            target = ((xs[k] + 0.5) * res, (ys[k] + 0.5) * res)
        self.goto(target)

    def _follow_bearing(self) -> None:
        """Walk the heard direction; cross the best-aligned doorway at walls."""
        self.bearing_fresh = False
        while not self.bearing_fresh:
            self.listen_if_due()
            if self.bearing_fresh:
                return
            self.maybe_entry_scan()
            self._align_to(self.bearing)
            rec = self.act(FORWARD)
            if rec.collided:
                portal = self._best_portal()
                if portal is None:
                    return  # direction information is used up
                self._cross_portal(portal)

    def _nearest_open_room(self) -> Optional[int]:
        open_rooms = [r for r in self.plan.room_ids() if not self.coverage.full(r)]
        if not open_rooms:
            return None
        field_ = path_field(self.plan.grid, self.pose.xy)
        dists = [(field_.distance_to(self.plan.room_centroid(r)), r) for r in open_rooms]
        dists.sort()
        return dists[0][1]

    def run(self) -> Trace:
        try:
            # listen first, as in ours: step-0 emissions must not be missed
            while True:
                if self.bearing is None:
                    self.listen_now()
                    self.maybe_entry_scan()
                    continue
                if self.bearing_fresh:
                    self._follow_bearing()
                    continue
                rid = self._nearest_open_room()
                if rid is None:
                    return self.finish(None, "cleared")
                try:
                    self.sweep_room(rid)
                except _Retarget:  # pragma: no cover - DF never retargets
                    continue
                except NoPathError:
                    self.coverage.covered[rid][:] = True
                if self.bearing_fresh:
                    continue
        except _Terminated as end:
            return self.finish(end.outcome, end.termination)


def ours_policy(episode: EpisodeSpec, graph: PDSG, config: Optional[PolicyConfig] = None) -> Trace:
    """Run the posterior-guided search policy on one episode."""
    return _OursRun(episode, graph, config or PolicyConfig()).run()


def df_policy(episode: EpisodeSpec, config: Optional[PolicyConfig] = None) -> Trace:
    """Run the direction-following baseline on one episode."""
    return _DFRun(episode, config or PolicyConfig()).run()


def build_episode_graph(episode: EpisodeSpec, trait_table=None, agent_id: str = "human") -> PDSG:
    """Scene graph for an episode from its placed objects and heatmap."""
    from .episodes import DEFAULT_TRAITS

    return build_pdsg(
        episode.floorplan(),
        episode.objects,
        dict(episode.heatmap.values),
        trait_table if trait_table is not None else DEFAULT_TRAITS,
        agent_id=agent_id,
    )
