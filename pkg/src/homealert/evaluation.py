"""Metrics, the batch harness, ablation runner, and trace rendering.

Navigation quality is scored with oracle stopping: an episode counts as an
AudioGoal success the moment any recorded pose visualizes the audio source,
regardless of whether the policy declared anything.  Emergency-report
quality (EDFNR / EDFPR) reads only the policy's own declared outcome; the
two metric families touch disjoint trace fields.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .acoustics import make_event
from .agent import PolicyConfig, Trace, build_episode_graph, df_policy, ours_policy
from .episodes import EpisodeSpec, Heatmap
from .identify import SimulatedDetector, make_detector, sees
from .world import Floorplan, NoPathError, path_field

CSV_COLUMNS = (
    "episode_id", "class", "polarity", "policy", "ag_success",
    "pl", "opl", "spl", "outcome", "steps", "collisions",
)

VARIANTS = ("full", "no-direction", "no-label", "periodic-falls")


class MetricError(Exception):
    pass


def ag_success(trace: Trace, episode: EpisodeSpec, plan: Floorplan,
               fov_deg: float = 90.0, range_m: float = 5.0) -> bool:
    """Oracle-stopping AudioGoal success: was the source ever visualized?"""
    source = episode.ground_truth.source
    return any(sees(plan, rec.pose, source, fov_deg, range_m) for rec in trace.records)


def optimal_path_length(episode: EpisodeSpec, plan: Floorplan,
                        fov_deg: float = 90.0, range_m: float = 5.0) -> float:
    """Shortest-path length from spawn to the nearest source-visualizing cell.

    Success is visual, not positional, so the optimum ends at the first cell
    from which the source is in range with line of sight (the field of view
    is free: turning costs steps, not path length).
    """
    grid = plan.grid
    field_ = path_field(grid, episode.agent_spawn.xy)
    dist = field_._dist
    order = np.argsort(dist, kind="stable")
    source = episode.ground_truth.source
    res = grid.resolution
    w = grid.width
    for node in order:
        d = dist[node]
        if not np.isfinite(d):
            break
        cx = ((node % w) + 0.5) * res
        cy = ((node // w) + 0.5) * res
        if (cx - source[0]) ** 2 + (cy - source[1]) ** 2 > range_m * range_m:
            continue
        center = (cx, cy)
        from .world import line_of_sight

        if line_of_sight(grid, center, source):
            return float(d)
    raise MetricError("source is not visualizable from any reachable cell")


def spl(success: bool, path_length: float, optimal_length: float) -> float:
    """Success weighted by normalized inverse path length."""
    if optimal_length <= 0:
        raise MetricError(f"optimal path length must be positive, got {optimal_length}")
    if not success:
        return 0.0
    return optimal_length / max(path_length, optimal_length)


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    category: str
    polarity: str
    policy: str
    ag_success: bool
    pl: float
    opl: float
    spl: float
    outcome: Optional[str]
    steps: int
    collisions: int
    termination: str
    detector_fn_seen: bool

    def csv_row(self) -> list[str]:
        return [
            self.episode_id,
            self.category,
            self.polarity,
            self.policy,
            "1" if self.ag_success else "0",
            f"{self.pl:.6f}",
            f"{self.opl:.6f}",
            f"{self.spl:.6f}",
            self.outcome or "",
            str(self.steps),
            str(self.collisions),
        ]


def evaluate_episode(episode: EpisodeSpec, trace: Trace,
                     fov_deg: float = 90.0, range_m: float = 5.0) -> EpisodeResult:
    plan = episode.floorplan()
    success = ag_success(trace, episode, plan, fov_deg, range_m)
    opl = optimal_path_length(episode, plan, fov_deg, range_m)
    fn_seen = any(
        rec.verdict is not None and rec.verdict.reason == "misclassified" and not rec.verdict.emergency
        for rec in trace.records
    )
    return EpisodeResult(
        episode_id=episode.episode_id,
        category=episode.category,
        polarity=episode.polarity,
        policy=trace.policy,
        ag_success=success,
        pl=trace.path_length,
        opl=opl,
        spl=spl(success, trace.path_length, opl),
        outcome=trace.outcome,
        steps=trace.steps_used,
        collisions=trace.collisions,
        termination=trace.termination,
        detector_fn_seen=fn_seen,
    )


@dataclass(frozen=True)
class Metrics:
    ag_sr: float
    ag_spl: float
    edfnr: float
    edfpr: float
    n_episodes: int
    n_positive: int
    n_negative: int
    per_class: dict
    failure_histogram: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _failure_bucket(r: EpisodeResult) -> str:
    if r.termination == "collision-abort":
        return "collision-abort"
    if r.detector_fn_seen:
        return "detector-miss"
    return "budget-exhausted"


def _metrics_of(results: Sequence[EpisodeResult]) -> dict:
    n = len(results)
    pos = [r for r in results if r.polarity == "positive"]
    neg = [r for r in results if r.polarity == "negative"]
    missed = [r for r in pos if r.outcome is None or r.outcome != r.category]
    spurious = [r for r in neg if r.outcome is not None]
    return {
        "ag_sr": sum(r.ag_success for r in results) / n if n else 0.0,
        "ag_spl": sum(r.spl for r in results) / n if n else 0.0,
        "edfnr": len(missed) / len(pos) if pos else 0.0,
        "edfpr": len(spurious) / len(neg) if neg else 0.0,
        "missed": missed,
    }


def aggregate(results_or_pairs, fov_deg: float = 90.0, range_m: float = 5.0) -> Metrics:
    """Fold per-episode results (or raw (episode, trace) pairs) into Metrics."""
    results: list[EpisodeResult] = []
    for item in results_or_pairs:
        if isinstance(item, EpisodeResult):
            results.append(item)
        else:
            episode, trace = item
            results.append(evaluate_episode(episode, trace, fov_deg, range_m))
    if not results:
        raise MetricError("cannot aggregate zero results")
    results = sorted(results, key=lambda r: r.episode_id)
    top = _metrics_of(results)
    per_class = {}
    for category in ("fall", "fire"):
        for polarity in ("positive", "negative"):
            sub = [r for r in results if r.category == category and r.polarity == polarity]
            if not sub:
                continue
            m = _metrics_of(sub)
            per_class[f"{category}-{polarity}"] = {
                "n": len(sub),
                "ag_sr": m["ag_sr"],
                "ag_spl": m["ag_spl"],
                "edfnr": m["edfnr"],
                "edfpr": m["edfpr"],
            }
    histogram = {"budget-exhausted": 0, "collision-abort": 0, "detector-miss": 0}
    for r in top["missed"]:
        histogram[_failure_bucket(r)] += 1
    return Metrics(
        ag_sr=top["ag_sr"],
        ag_spl=top["ag_spl"],
        edfnr=top["edfnr"],
        edfpr=top["edfpr"],
        n_episodes=len(results),
        n_positive=sum(r.polarity == "positive" for r in results),
        n_negative=sum(r.polarity == "negative" for r in results),
        per_class=per_class,
        failure_histogram=histogram,
    )


# ---------------------------------------------------------------------------
# batch harness
# ---------------------------------------------------------------------------

def run_episode(episode: EpisodeSpec, policy: str, config: PolicyConfig) -> Trace:
    if policy == "ours":
        return ours_policy(episode, build_episode_graph(episode), config)
    if policy == "df":
        return df_policy(episode, config)
    raise MetricError(f"unknown policy {policy!r}")


def _worker(args) -> dict:
    episode_doc, policy, config = args
    episode = EpisodeSpec.from_dict(episode_doc)
    trace = run_episode(episode, policy, config)
    result = evaluate_episode(
        episode, trace, config.detector.fov_deg, config.detector.range_m
    )
    return dataclasses.asdict(result)


def load_manifest(manifest_path: Union[str, Path]) -> tuple[list[EpisodeSpec], list[dict]]:
    """Read a manifest and its episode files; unreadable files become error records."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    episodes = []
    errors = []
    for rel in doc["episodes"]:
        path = manifest_path.parent / rel
        try:
            episodes.append(EpisodeSpec.from_json(path.read_text()))
        except Exception as exc:  # noqa: BLE001 - resilience is the contract here
            errors.append({"file": str(path), "error": f"{type(exc).__name__}: {exc}"})
    return episodes, errors


def write_manifest(episodes: Sequence[EpisodeSpec], out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for ep in episodes:
        name = f"{ep.episode_id}.json"
        (out_dir / name).write_text(ep.to_json())
        names.append(name)
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps({"count": len(names), "episodes": names},
                                   sort_keys=True, separators=(",", ":")))
    return manifest


@dataclass
class BatchOutput:
    metrics: Metrics
    results: list[EpisodeResult]
    errors: list[dict]
    csv_text: str


def run_batch(
    episodes_or_manifest,
    policy: str = "ours",
    detector: Union[str, SimulatedDetector] = "oracle",
    jobs: int = 1,
    out_dir: Optional[Union[str, Path]] = None,
    config: Optional[PolicyConfig] = None,
    save_traces: bool = False,
) -> BatchOutput:
    """Run one policy over a batch and aggregate.

    ``episodes_or_manifest`` is either a manifest path or an in-memory
    episode sequence.  Results are keyed and sorted by episode id, so the
    output is byte-identical no matter the worker count.
    """
    errors: list[dict] = []
    if isinstance(episodes_or_manifest, (str, Path)):
        episodes, errors = load_manifest(episodes_or_manifest)
    else:
        episodes = list(episodes_or_manifest)
    if config is None:
        config = PolicyConfig()
    if isinstance(detector, str):
        detector = make_detector(detector, seed=config.detector.seed)
    config = replace(config, detector=detector)

    traces: dict[str, Trace] = {}
    results: list[EpisodeResult] = []
    if jobs <= 1 or len(episodes) <= 1:
        for ep in episodes:
            try:
                trace = run_episode(ep, policy, config)
                results.append(evaluate_episode(ep, trace, detector.fov_deg, detector.range_m))
                if save_traces:
                    traces[ep.episode_id] = trace
            except Exception as exc:  # noqa: BLE001
                errors.append({"file": ep.episode_id, "error": f"{type(exc).__name__}: {exc}"})
    else:
        args = [(ep.to_dict(), policy, config) for ep in episodes]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for ep, res in zip(episodes, pool.map(_worker, args)):
                results.append(EpisodeResult(**res))
    results.sort(key=lambda r: r.episode_id)
    metrics = aggregate(results, detector.fov_deg, detector.range_m)
    csv_text = results_csv(results)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "results.csv").write_text(csv_text)
        (out_dir / "metrics.json").write_text(
            json.dumps(metrics.to_dict(), sort_keys=True, indent=2)
        )
        if errors:
            (out_dir / "errors.json").write_text(json.dumps(errors, sort_keys=True, indent=2))
        if save_traces:
            trace_dir = out_dir / "traces"
            trace_dir.mkdir(exist_ok=True)
            by_id = {ep.episode_id: ep for ep in episodes}
            for eid, trace in traces.items():
                (trace_dir / f"{eid}.trace.json").write_text(trace.to_json(by_id[eid]))
    return BatchOutput(metrics=metrics, results=results, errors=errors, csv_text=csv_text)


def results_csv(results: Sequence[EpisodeResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(results, key=lambda x: (x.episode_id, x.policy)):
        writer.writerow(r.csv_row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

def parse_variant(variant: str) -> tuple[str, Optional[float]]:
    if variant in VARIANTS:
        return variant, None
    if variant.startswith("heatmap-noise:"):
        try:
            return "heatmap-noise", float(variant.split(":", 1)[1])
        except ValueError:
            pass
    raise MetricError(
        f"unknown variant {variant!r}; expected one of {VARIANTS} or heatmap-noise:<sigma>"
    )


def _renoise_heatmap(episode: EpisodeSpec, sigma: float) -> EpisodeSpec:
    rng = np.random.default_rng(
        np.random.SeedSequence([episode.seed & 0xFFFFFFFF, int(sigma * 1e6) & 0xFFFFFFFF, 0xAB1A7])
    )
    rooms = sorted(episode.heatmap.values)
    vals = np.array([episode.heatmap.values[r] for r in rooms])
    vals = np.clip(vals + rng.normal(0.0, sigma, size=len(vals)), 0.0, None)
    if vals.sum() <= 0:
        vals = np.ones(len(vals))
    vals = vals / vals.sum()
    heatmap = Heatmap(values={r: float(v) for r, v in zip(rooms, vals)},
                      sigma_applied=episode.heatmap.sigma_applied + sigma)
    return replace(episode, heatmap=heatmap)


def _force_periodic(episode: EpisodeSpec) -> EpisodeSpec:
    if episode.category != "fall":
        return episode
    ev = episode.audio_event
    event = make_event(ev.source, ev.true_class, "periodic", period=ev.period,
                       horizon=episode.step_budget)
    return replace(episode, audio_event=event)


def apply_variant(episodes: Sequence[EpisodeSpec], variant: str,
                  config: Optional[PolicyConfig] = None) -> tuple[list[EpisodeSpec], PolicyConfig]:
    """Transform a batch and config for one ablation variant."""
    name, sigma = parse_variant(variant)
    config = config or PolicyConfig()
    if name == "full":
        return list(episodes), config
    if name == "no-direction":
        return list(episodes), replace(config, use_direction=False)
    if name == "no-label":
        return list(episodes), replace(config, use_label=False)
    if name == "periodic-falls":
        return [_force_periodic(ep) for ep in episodes], config
    return [_renoise_heatmap(ep, sigma) for ep in episodes], config


def run_ablation(
    episodes_or_manifest,
    variant: str,
    detector: Union[str, SimulatedDetector] = "oracle",
    jobs: int = 1,
    out_dir: Optional[Union[str, Path]] = None,
    config: Optional[PolicyConfig] = None,
) -> BatchOutput:
    """Run the guided policy under one ablation variant."""
    errors: list[dict] = []
    if isinstance(episodes_or_manifest, (str, Path)):
        episodes, errors = load_manifest(episodes_or_manifest)
    else:
        episodes = list(episodes_or_manifest)
    episodes, config = apply_variant(episodes, variant, config)
    out = run_batch(episodes, policy="ours", detector=detector, jobs=jobs,
                    out_dir=out_dir, config=config)
    out.errors = errors + out.errors
    return out


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

_SCALE = 40.0  # SVG pixels per meter

_ROOM_FILL = "#e07030"


def _svg_y(plan: Floorplan, y: float) -> float:
    return (plan.grid.height * plan.grid.resolution - y) * _SCALE


def render_trace(trace: Trace, episode: EpisodeSpec, plan: Floorplan, out_path) -> Path:
    """Write a deterministic SVG of one run: map, heatmap shading, trajectory."""
    res = plan.grid.resolution
    w_px = plan.grid.width * res * _SCALE
    h_px = plan.grid.height * res * _SCALE
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w_px:.0f}" height="{h_px:.0f}" '
        f'viewBox="0 0 {w_px:.2f} {h_px:.2f}">',
        f'<rect width="{w_px:.2f}" height="{h_px:.2f}" fill="#ffffff"/>',
    ]
    # heatmap shading per room (alpha scaled by the room's prior mass)
    max_v = max(episode.heatmap.values.values()) or 1.0
    cells = plan.rooms.cells
    for rid in plan.room_ids():
        alpha = 0.06 + 0.44 * episode.heatmap.values[rid] / max_v
        for iy in range(plan.grid.height):
            row = cells[iy] == rid
            if not row.any():
                continue
            xs = np.nonzero(row)[0]
            splits = np.nonzero(np.diff(xs) > 1)[0]
            for run in np.split(xs, splits + 1):
                x0 = run[0] * res * _SCALE
                y0 = _svg_y(plan, (iy + 1) * res)
                parts.append(
                    f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{len(run) * res * _SCALE:.2f}" '
                    f'height="{res * _SCALE:.2f}" fill="{_ROOM_FILL}" opacity="{alpha:.3f}"/>'
                )
    # walls
    occ = plan.grid.occupied
    for iy in range(plan.grid.height):
        xs = np.nonzero(occ[iy])[0]
        if len(xs) == 0:
            continue
        splits = np.nonzero(np.diff(xs) > 1)[0]
        for run in np.split(xs, splits + 1):
            x0 = run[0] * res * _SCALE
            y0 = _svg_y(plan, (iy + 1) * res)
            parts.append(
                f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{len(run) * res * _SCALE:.2f}" '
                f'height="{res * _SCALE:.2f}" fill="#303030"/>'
            )
    # room labels
    for rid in plan.room_ids():
        cx, cy = plan.room_centroid(rid)
        parts.append(
            f'<text x="{cx * _SCALE:.2f}" y="{_svg_y(plan, cy):.2f}" font-size="10" '
            f'fill="#404040" text-anchor="middle">{plan.room_label(rid)}</text>'
        )
    # trajectory (position changes only; turns do not move)
    points = [episode.agent_spawn.xy]
    declare_at = None
    for rec in trace.records:
        if rec.pose.xy != points[-1]:
            points.append(rec.pose.xy)
        if rec.action.name == "declare":
            declare_at = rec.pose.xy
    if len(points) > 1:
        path = " ".join(f"{x * _SCALE:.2f},{_svg_y(plan, y):.2f}" for x, y in points)
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="#10a010" stroke-width="1.5"/>'
        )
    sx, sy = episode.agent_spawn.xy
    parts.append(
        f'<rect x="{sx * _SCALE - 4:.2f}" y="{_svg_y(plan, sy) - 4:.2f}" width="8" height="8" '
        f'fill="#1060d0"/>'
    )
    gx, gy = episode.ground_truth.source
    parts.append(
        f'<circle cx="{gx * _SCALE:.2f}" cy="{_svg_y(plan, gy):.2f}" r="5" fill="#d02020"/>'
    )
    if declare_at is not None:
        dx, dy = declare_at
        parts.append(
            f'<circle cx="{dx * _SCALE:.2f}" cy="{_svg_y(plan, dy):.2f}" r="6" fill="none" '
            f'stroke="#8020c0" stroke-width="2"/>'
        )
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(parts))
    return out_path
