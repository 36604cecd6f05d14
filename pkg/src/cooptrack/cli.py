"""Command-line front end.

Subcommands: simulate | track | evaluate | compare | train-velocity.
`compare` chains simulate -> track(P) -> track(C) -> evaluate over a scene
batch and writes plot-ready CSV tables.  Exit codes: 0 success, 2 config
error, 3 data error, 4 numerical failure.
"""

import argparse
import concurrent.futures
import csv
import json
import os
import sys

import numpy as np

from . import pipeline
from . import scene_sim
from . import velocity as velocity_mod
from .config import RunConfig, load_config
from .errors import ConfigError, CoopTrackError, DataError, NumericalError
from .forest import RegressionForest
from .metrics import motap


def _atomic_write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, payload):
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows, cfg: RunConfig):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(f"# config={cfg.config_hash()} seed={cfg.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _scene_specs(cfg: RunConfig, occlusions_by_kind):
    """One SceneSpec per configured scene, seeds drawn from the master seed."""
    rng = np.random.default_rng(cfg.seed)
    scenes_cfg = cfg.scenes
    noise = scenes_cfg["noise"]
    specs = []
    for kind, count_key, params_key in (
            (scene_sim.KIND_STARTING, "n_starting", "starting"),
            (scene_sim.KIND_TURNING, "n_turning", "turning")):
        params = scenes_cfg[params_key]
        for i in range(int(scenes_cfg[count_key])):
            seed = int(rng.integers(2 ** 63))
            specs.append(scene_sim.SceneSpec(
                kind=kind, seed=seed, occlusions=occlusions_by_kind,
                **params, **noise))
    return specs


def _scene_id(spec: scene_sim.SceneSpec, index: int) -> str:
    short = "starting" if spec.kind == scene_sim.KIND_STARTING else "turning"
    return f"{short}_{index:04d}"


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir
    scenes_cfg = cfg.scenes
    occl = []
    if not args.no_occlusion:
        occl = scene_sim.aligned_occlusions(scenes_cfg["occlusion_durations"],
                                            scenes_cfg["occlusion_end_offset"])
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"config": cfg.config_hash(), "seed": cfg.seed, "scenes": []}
    counters = {}
    for spec in _scene_specs(cfg, tuple(occl)):
        index = counters.get(spec.kind, 0)
        counters[spec.kind] = index + 1
        scene_id = _scene_id(spec, index)
        scene = scene_sim.generate_scene(spec, scene_id=scene_id)
        path = os.path.join(out_dir, scene_id)
        scene_sim.write_scene(scene, path)
        manifest["scenes"].append({"scene_id": scene_id, "path": path,
                                   "seed": spec.seed, "kind": spec.kind})
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"wrote {len(manifest['scenes'])} scenes to {out_dir}")
    return 0


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    scene = scene_sim.read_scene(args.scene_dir)
    out_dir = args.out or args.scene_dir
    track_rows, assign_rows = pipeline.run_tracking(scene, args.model, cfg)
    path = pipeline.write_track_output(out_dir, args.model, track_rows,
                                       assign_rows, cfg, scene.scene_id)
    print(f"wrote {path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    scene = scene_sim.read_scene(args.scene_dir)
    rows = pipeline.read_track_output(args.tracks)
    model_id = args.model_id or os.path.basename(args.tracks)
    report = pipeline.evaluate_rows(scene, rows, cfg, model_id)
    if args.tracks_b:
        rows_b = pipeline.read_track_output(args.tracks_b)
        report_b = pipeline.evaluate_rows(scene, rows_b, cfg,
                                          args.model_id_b or
                                          os.path.basename(args.tracks_b))
        a = (report["mota"], report["motp"])
        b = (report_b["mota"], report_b["motp"])
        report = {"a": report, "b": report_b,
                  "motap_ab": motap(a, b, cfg.metric),
                  "motap_ba": motap(b, a, cfg.metric)}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        _atomic_write_text(args.out, text + "\n")
    print(text)
    return 0


def _compare_one_scene(payload):
    """Worker: run all occlusion variants of one scene; returns result rows."""
    raw_cfg, kind, index, seed, variants = payload
    cfg = RunConfig(raw_cfg)
    scenes_cfg = cfg.scenes
    params_key = "starting" if kind == scene_sim.KIND_STARTING else "turning"
    results = []
    for label, occl in variants:
        spec = scene_sim.SceneSpec(kind=kind, seed=seed, occlusions=occl,
                                   **scenes_cfg[params_key], **scenes_cfg["noise"])
        scene_id = f"{_scene_id(spec, index)}_{label}"
        scene = scene_sim.generate_scene(spec, scene_id=scene_id)
        reports = pipeline.track_and_evaluate(scene, cfg)
        results.append((kind, label, index, scene_id, reports))
    return results


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    scenes_cfg = cfg.scenes
    durations = [float(d) for d in scenes_cfg["occlusion_durations"]]
    aligned = scene_sim.aligned_occlusions(durations,
                                           scenes_cfg["occlusion_end_offset"])
    variants = [("none", ())]
    variants += [(f"occ{dur:g}s", (tup,))
                 for tup, dur in zip(aligned, sorted(durations))]

    rng = np.random.default_rng(cfg.seed)
    jobs = []
    for kind, count_key in ((scene_sim.KIND_STARTING, "n_starting"),
                            (scene_sim.KIND_TURNING, "n_turning")):
        for i in range(int(scenes_cfg[count_key])):
            seed = int(rng.integers(2 ** 63))
            jobs.append((cfg.raw, kind, i, seed, variants))

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            all_results = list(pool.map(_compare_one_scene, jobs))
    else:
        all_results = [_compare_one_scene(job) for job in jobs]

    per_scene_rows = []
    grouped = {}
    for scene_results in all_results:
        for kind, label, index, scene_id, reports in scene_results:
            grouped.setdefault((kind, label), []).append(reports)
            for model in cfg.models:
                rep = reports[model]
                per_scene_rows.append((
                    scene_id, kind, label, model,
                    f"{rep['motp']:.6f}", f"{rep['mota']:.6f}",
                    rep["frame_counts"]["matches"], rep["frame_counts"]["dm"],
                    rep["frame_counts"]["lm"]))

    summary_rows = []
    for (kind, label), report_list in sorted(grouped.items()):
        row = [kind, label, len(report_list)]
        for model in cfg.models:
            agg = pipeline.aggregate([r[model] for r in report_list])
            row += [f"{agg['motp'][stat]:.6f}" for stat in ("min", "max", "mean")]
            row += [f"{agg['mota'][stat]:.6f}" for stat in ("min", "max", "mean")]
        if set(cfg.models) >= {"P", "C"}:
            sum_pc = sum(motap((r["P"]["mota"], r["P"]["motp"]),
                               (r["C"]["mota"], r["C"]["motp"]), cfg.metric)
                         for r in report_list)
            sum_cp = sum(motap((r["C"]["mota"], r["C"]["motp"]),
                               (r["P"]["mota"], r["P"]["motp"]), cfg.metric)
                         for r in report_list)
            row += [sum_pc, sum_cp]
        summary_rows.append(tuple(row))

    per_scene_header = ("scene_id", "kind", "occlusion", "model", "motp", "mota",
                        "matches", "dm", "lm")
    summary_header = ["kind", "occlusion", "n_scenes"]
    for model in cfg.models:
        summary_header += [f"motp_{model}_{s}" for s in ("min", "max", "mean")]
        summary_header += [f"mota_{model}_{s}" for s in ("min", "max", "mean")]
    if set(cfg.models) >= {"P", "C"}:
        summary_header += ["sum_motap_PC", "sum_motap_CP"]
    _write_csv(os.path.join(out_dir, "per_scene.csv"), per_scene_header,
               per_scene_rows, cfg)
    _write_csv(os.path.join(out_dir, "summary.csv"), tuple(summary_header),
               summary_rows, cfg)
    print(f"wrote {os.path.join(out_dir, 'per_scene.csv')} and summary.csv "
          f"({len(per_scene_rows)} rows)")
    return 0


def cmd_train_velocity(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    vcfg = cfg.velocity
    model, report = velocity_mod.train_velocity_model(
        seed=cfg.seed, n_scenes=int(vcfg["training_scenes"]),
        n_trees=int(vcfg["n_trees"]), max_depth=int(vcfg["max_depth"]),
        n_bins=int(vcfg["n_bins"]),
        holdout_fraction=float(vcfg["holdout_fraction"]))
    _atomic_write_text(os.path.join(out_dir, "forest_with_gnss.json"),
                       model.with_gnss.to_json() + "\n")
    _atomic_write_text(os.path.join(out_dir, "forest_no_gnss.json"),
                       model.no_gnss.to_json() + "\n")
    _write_json(os.path.join(out_dir, "rmse_report.json"), report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def load_velocity_model(directory) -> velocity_mod.VelocityModel:
    """Read the forest pair written by train-velocity."""
    def _read(name):
        path = os.path.join(directory, name)
        try:
            with open(path) as fh:
                return RegressionForest.from_json(fh.read())
        except OSError as exc:
            raise DataError(f"{path}: {exc}") from exc
    return velocity_mod.VelocityModel(with_gnss=_read("forest_with_gnss.json"),
                                      no_gnss=_read("forest_no_gnss.json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cooptrack",
        description="Cooperative cyclist tracking testbed")
    parser.add_argument("--config", help="JSON config file (defaults otherwise)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic scene directories")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--no-occlusion", action="store_true",
                   help="skip the configured occlusion windows")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run one tracking model over a scene")
    p.add_argument("scene_dir")
    p.add_argument("--model", choices=("P", "C"), required=True,
                   help="P: position only, C: cooperative")
    p.add_argument("--out", help="output directory (default: scene dir)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="MOTP/MOTA report for a track file")
    p.add_argument("scene_dir")
    p.add_argument("--tracks", required=True, help="tracks CSV to evaluate")
    p.add_argument("--tracks-b", help="second tracks CSV for a pairwise verdict")
    p.add_argument("--model-id")
    p.add_argument("--model-id-b")
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare",
                       help="simulate + track both models + evaluate, batched")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--jobs", type=int, default=1, help="scene-level parallelism")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train-velocity",
                       help="train the velocity forests on synthetic rides")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_train_velocity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except CoopTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
