"""Command-line entry points: run, reach, eval, timing, render, serve, gen-world."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .harness import (
    ScenarioConfig,
    eval_suite,
    load_scenario,
    make_oracle,
    reachability_suite,
    run_scenario,
    timing_compare,
)
from .render import render_annotated, render_run, save_png
from .segmentation import SegmentationConfig, frame_from_json, list_frames, load_frame
from .server import load_labels, serve_labeling
from .world import TerrainClass, WorldGenSpec, generate_world, load_world, save_world


def _load_frames_dir(directory: str):
    frames = []
    for fid in list_frames(directory):
        patch, frame, cell_size = load_frame(directory, fid)
        frames.append((patch, frame, cell_size))
    if not frames:
        raise SystemExit(f"no frames in {directory}")
    return frames


def cmd_run(args) -> int:
    config = load_scenario(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.step_budget is not None:
        config = replace(config, step_budget=args.step_budget)
    if args.export_frames:
        config = replace(config, export_frames=args.export_frames)
    log = run_scenario(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.write_jsonl(out / "run_log.jsonl")
    with open(out / "summary.csv", "w", newline="") as f:
        row = log.summary_row()
        writer = csv.DictWriter(f, fieldnames=list(row))
        writer.writeheader()
        writer.writerow(row)
    print(f"outcome={log.outcome} steps={log.elapsed_steps} "
          f"sim_time={log.elapsed_steps * config.dt:.2f}s queries={log.oracle_queries}")
    return 0 if log.outcome == "success" else 1


def cmd_reach(args) -> int:
    config = load_scenario(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    report = reachability_suite(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "reachability.csv")
    for row in report.per_goal:
        avg = "-" if row["avg_time_s"] is None else f"{row['avg_time_s']:.2f}"
        print(f"goal={row['goal']} success_rate={row['success_rate']:.2f} avg_time_s={avg}")
    return 0


def _build_oracle(args):
    cfg = ScenarioConfig(p_fp=args.p_fp, p_fn=args.p_fn,
                         oracle_cmd=args.oracle_cmd.split() if args.oracle_cmd else None,
                         oracle_url=args.oracle_url)
    return make_oracle(args.oracle, cfg, args.seed or 0)


def cmd_eval(args) -> int:
    frames = _load_frames_dir(args.frames)
    oracle = _build_oracle(args)
    labels = load_labels(args.frames) if args.labels else None
    from .drivability import PromptSpec
    prompt = PromptSpec(cardinality=args.cardinality, style=args.style)
    result = eval_suite(frames, oracle, prompt, labels=labels, csv_path=args.csv)
    miou = "-" if result["miou"] is None else f"{result['miou']:.4f}"
    print(f"frames={len(result['per_frame'])} mIoU={miou} "
          f"mean_rubric={result['mean_rubric']:.3f}")
    if result["missing_labels"]:
        print(f"missing labels for frames: {result['missing_labels']}")
    return 0


def cmd_timing(args) -> int:
    frames = _load_frames_dir(args.frames)
    patches = [f[0] for f in frames]
    cfg = SegmentationConfig(n_side=args.n_side, margin=1)
    rows = timing_compare(patches, cfg)
    for row in rows:
        print(f"frame={row['frame_id']} components={row['n_components']} "
              f"point={row['t_point'] * 1e3:.2f}ms full={row['t_full'] * 1e3:.2f}ms "
              f"ratio={row['ratio']:.3f}")
    mean_ratio = sum(r["ratio"] for r in rows) / len(rows)
    print(f"mean point/full ratio: {mean_ratio:.3f}")
    return 0


def cmd_render(args) -> int:
    layers = args.layers.split(",") if args.layers else ["terrain"]
    inp = Path(args.input)
    if inp.suffix == ".jsonl":
        if not args.world:
            raise SystemExit("rendering a run log requires --world")
        world = load_world(args.world)
        trace = []
        with open(inp) as f:
            for line in f:
                rec = json.loads(line)
                trace.append((rec["x"], rec["y"]))
        img = render_run(world, layers, trace_xy=trace)
    else:
        data = json.loads(inp.read_text())
        patch, frame = frame_from_json(data)
        img = render_annotated(patch.classes, frame, scale=8)
    save_png(img, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    server = serve_labeling(args.frames, args.port, args.host)
    host, port = server.server_address[:2]
    print(f"labeling server listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_gen_world(args) -> int:
    spec_kwargs = {}
    if args.spec:
        spec_kwargs = yaml.safe_load(Path(args.spec).read_text()) or {}
        for key in ("corridor_class",):
            if key in spec_kwargs:
                spec_kwargs[key] = TerrainClass(spec_kwargs[key])
        if "background_classes" in spec_kwargs:
            spec_kwargs["background_classes"] = tuple(
                TerrainClass(c) for c in spec_kwargs["background_classes"])
        if "drivable_classes" in spec_kwargs:
            spec_kwargs["drivable_classes"] = frozenset(
                TerrainClass(c) for c in spec_kwargs["drivable_classes"])
    world = generate_world(args.seed, WorldGenSpec(**spec_kwargs))
    save_world(world, args.out)
    print(f"wrote {args.out} ({world.width}x{world.height}, anchors={world.anchors})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="offroad-nav",
                                     description="Deterministic off-road navigation benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one closed-loop scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--step-budget", type=int, dest="step_budget")
    p.add_argument("--export-frames", dest="export_frames")
    p.add_argument("--out", default="out_run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reach", help="reachability suite over configured goals")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out_reach")
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("eval", help="mIoU + rubric evaluation over a frames dir")
    p.add_argument("--frames", required=True)
    p.add_argument("--oracle", default="gt", choices=["gt", "noisy", "extern"])
    p.add_argument("--p-fp", type=float, default=0.0, dest="p_fp")
    p.add_argument("--p-fn", type=float, default=0.0, dest="p_fn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle-cmd", dest="oracle_cmd")
    p.add_argument("--oracle-url", dest="oracle_url")
    p.add_argument("--cardinality", default="MNP", choices=["SNP", "MNP"])
    p.add_argument("--style", default="full_context",
                   choices=["specific", "general", "full_context"])
    p.add_argument("--labels", action="store_true",
                   help="score against labels saved by the labeling UI")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("timing", help="point prompting vs exhaustive extraction")
    p.add_argument("--frames", required=True)
    p.add_argument("--n-side", type=int, default=8, dest="n_side")
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("render", help="render a frame JSON or run-log JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--layers", default="terrain,trace")
    p.add_argument("--world")
    p.add_argument("--out", default="render.png")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="labeling HTTP service over a frames dir")
    p.add_argument("--frames", required=True)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("gen-world", help="generate and save a synthetic world")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spec", help="YAML file of world-generation fields")
    p.add_argument("--out", default="world.ofrw")
    p.set_defaults(func=cmd_gen_world)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
