"""Command-line interface: generate episodes, run batches, ablate, render.

A JSON file pointed to by the HOMEALERT_CONFIG environment variable can
override generation defaults (keys: sigma, count, step_budget, seed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .agent import PolicyConfig, Trace
from .episodes import EpisodeParams, EpisodeSpec, generate_batch, generate_episode
from .evaluation import render_trace, run_ablation, run_batch, write_manifest
from .identify import make_detector

CONFIG_ENV = "HOMEALERT_CONFIG"


def _env_defaults() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"warning: could not read {CONFIG_ENV}={path}: {exc}", file=sys.stderr)
        return {}


def _build_parser(defaults: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homealert",
        description="Household-emergency search simulation and evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate an episode batch + manifest")
    gen.add_argument("--seed", type=int, default=defaults.get("seed", 0))
    gen.add_argument("--count", type=int, default=defaults.get("count", 128))
    gen.add_argument("--class", dest="category", choices=("fall", "fire", "mixed"),
                     default="mixed")
    gen.add_argument("--polarity-mix", type=float, default=0.5,
                     help="fraction of positive episodes")
    gen.add_argument("--sigma", type=float, default=defaults.get("sigma", 0.05),
                     help="heatmap noise level")
    gen.add_argument("--out-dir", required=True)

    run = sub.add_parser("run", help="run a policy over a manifest")
    run.add_argument("--manifest", required=True)
    run.add_argument("--policy", choices=("ours", "df"), default="ours")
    run.add_argument("--detector", default="oracle",
                     help="oracle | realistic | noisy:<fnr>,<fpr>")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--save-traces", action="store_true")

    abl = sub.add_parser("ablate", help="run an ablation variant over a manifest")
    abl.add_argument("--manifest", required=True)
    abl.add_argument("--variant", required=True,
                     help="full | no-direction | no-label | periodic-falls | heatmap-noise:<sigma>")
    abl.add_argument("--detector", default="oracle")
    abl.add_argument("--jobs", type=int, default=1)
    abl.add_argument("--out", required=True)

    ren = sub.add_parser("render", help="render a saved trace to SVG")
    ren.add_argument("--trace", required=True,
                     help="trace JSON file with an embedded episode")
    ren.add_argument("--out", required=True)
    return parser


def _cmd_generate(args) -> int:
    params = EpisodeParams(sigma=args.sigma)
    if args.category == "mixed":
        episodes = generate_batch(args.seed, args.count, params,
                                  positive_fraction=args.polarity_mix)
    else:
        episodes = generate_batch(args.seed, args.count, params,
                                  categories=(args.category,),
                                  positive_fraction=args.polarity_mix)
    manifest = write_manifest(episodes, args.out_dir)
    print(f"wrote {len(episodes)} episodes to {manifest}")
    return 0


def _cmd_run(args) -> int:
    detector = make_detector(args.detector)
    out = run_batch(
        args.manifest, policy=args.policy, detector=detector, jobs=args.jobs,
        out_dir=args.out, save_traces=args.save_traces,
    )
    m = out.metrics
    print(f"episodes={m.n_episodes} ag_sr={m.ag_sr:.3f} ag_spl={m.ag_spl:.3f} "
          f"edfnr={m.edfnr:.3f} edfpr={m.edfpr:.3f}")
    for record in out.errors:
        print(f"error: {record['file']}: {record['error']}", file=sys.stderr)
    return 1 if out.errors else 0


def _cmd_ablate(args) -> int:
    detector = make_detector(args.detector)
    out = run_ablation(args.manifest, args.variant, detector=detector,
                       jobs=args.jobs, out_dir=args.out)
    m = out.metrics
    print(f"variant={args.variant} ag_sr={m.ag_sr:.3f} ag_spl={m.ag_spl:.3f} "
          f"edfnr={m.edfnr:.3f} edfpr={m.edfpr:.3f}")
    return 1 if out.errors else 0


def _cmd_render(args) -> int:
    doc = json.loads(Path(args.trace).read_text())
    if "episode" not in doc:
        print("trace file has no embedded episode; re-run with --save-traces",
              file=sys.stderr)
        return 2
    episode = EpisodeSpec.from_dict(doc["episode"])
    trace = _trace_from_dict(doc)
    render_trace(trace, episode, episode.floorplan(), args.out)
    print(f"wrote {args.out}")
    return 0


def _trace_from_dict(doc: dict) -> Trace:
    from .acoustics import AudioObservation
    from .agent import Action, StepRecord
    from .world import Pose

    records = []
    for r in doc["records"]:
        name = r["action"]
        kind = None
        if name.startswith("declare:"):
            name, kind = "declare", name.split(":", 1)[1]
        obs = r.get("observation")
        records.append(
            StepRecord(
                index=r["i"],
                action=Action(name, kind),
                pose=Pose(*r["pose"]),
                collided=r.get("collided", False),
                observation=AudioObservation(**obs) if obs else None,
            )
        )
    return Trace(
        episode_id=doc["episode_id"],
        policy=doc["policy"],
        records=records,
        outcome=doc["outcome"],
        termination=doc["termination"],
        steps_used=doc["steps_used"],
        path_length=doc["path_length"],
        collisions=doc["collisions"],
        rooms_visited=tuple(doc["rooms_visited"]),
        aborted=doc.get("aborted", False),
    )


def main(argv=None) -> int:
    parser = _build_parser(_env_defaults())
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "run": _cmd_run,
        "ablate": _cmd_ablate,
        "render": _cmd_render,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
