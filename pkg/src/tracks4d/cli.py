"""Command-line entry point: generate, query, stats, curate, eval.

Settings merge with config-file < environment < flags precedence. Every
value that influenced a run is echoed as JSON either into the archive
metadata (generate) or onto stdout, so any output can be reproduced.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import curate as curate_mod
from . import metrics as metrics_mod
from .archive import ArchiveError, read_archive, storage_estimate
from .camera import NoSurfaceError
from .scene import SceneSpec, generate_clip
from .trajectory import RIG_PATTERNS

ENV_PREFIX = "TRACKS4D_"


def _resolve(name: str, flag_value, config: dict, default, cast=str):
    """config file < environment < explicit flag."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if env is not None:
        return cast(env)
    if name in config:
        return config[name]
    return default


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    seed = _resolve("seed", args.seed, cfg, 0, int)
    rig = _resolve("rig", args.rig, cfg, "independent")
    if rig not in RIG_PATTERNS:
        print(f"error: unknown rig {rig!r}; choose from {RIG_PATTERNS}",
              file=sys.stderr)
        return 2
    spec = SceneSpec(
        n_dynamic=_resolve("dynamic", args.dynamic, cfg, 2, int),
        include_figure=not args.no_figure,
        n_times=_resolve("frames", args.frames, cfg, 16, int),
        extent=_resolve("extent", args.extent, cfg, 6.0, float),
        seed=seed,
    )
    resolved = {
        "seed": seed, "rig": rig,
        "cameras": _resolve("cameras", args.cameras, cfg, 4, int),
        "width": _resolve("width", args.width, cfg, 64, int),
        "height": _resolve("height", args.height, cfg, 64, int),
        "surface_tol": _resolve("surface-tol", args.surface_tol, cfg, 1e-3, float),
    }
    reports = generate_clip(
        spec, rig, args.out, n_cameras=resolved["cameras"],
        width=resolved["width"], height=resolved["height"], seed=seed,
        surface_tol=resolved["surface_tol"], store_rgb=args.store_rgb,
        use_encoder=not args.raster_bary,
        metadata={"resolved_config": resolved},
    )
    over = sum(r.n_over_tolerance for r in reports)
    worst = max((r.worst_residual for r in reports), default=0.0)
    print(json.dumps({"out": str(args.out), "frames": spec.n_times,
                      "cameras": resolved["cameras"],
                      "encode_over_tolerance": over,
                      "encode_worst_residual": worst,
                      "resolved_config": resolved}))
    return 0


def cmd_query(args) -> int:
    with read_archive(args.archive) as a:
        if args.dpm is not None:
            pm = a.query_dpm(args.frame, ref=args.ref, t_j=args.dpm)
            np.savez(args.out or "dpm.npz", points=pm.points, valid=pm.valid)
            print(json.dumps({"frame": args.frame, "time": args.dpm,
                              "ref": args.ref,
                              "out": args.out or "dpm.npz",
                              "valid_pixels": int(pm.valid.sum())}))
            return 0
        track, kind = a.query_track(args.frame, tuple(args.pixel),
                                    ref=args.ref)
        times = args.times if args.times else list(range(a.n_times))
        print(json.dumps({
            "frame": args.frame, "pixel": list(args.pixel), "kind": kind,
            "ref": args.ref,
            "track": [[track[t, 0], track[t, 1], track[t, 2]] for t in times],
            "times": times,
        }))
    return 0


def cmd_stats(args) -> int:
    with read_archive(args.archive) as a:
        rep = a.size_report()
        rep.update({"height": a.height, "width": a.width,
                    "n_times": a.n_times, "n_cameras": a.n_cameras,
                    "n_meshes": len(a.meshes),
                    "union_vertices": a.union.n_vertices,
                    "union_faces": a.union.n_faces})
        print(json.dumps(rep))
        print(f"actual          {rep['actual_bytes']:>16,} B", file=sys.stderr)
        print(f"dense equivalent{rep['dense_equivalent_bytes']:>16,} B "
              f"({rep['dense_to_actual_ratio']:.0f}x)", file=sys.stderr)
        print(f"pixel records   {rep['pixel_record_bytes']:>16,} B",
              file=sys.stderr)
        print(f"vertex tracks   {rep['vertex_track_bytes']:>16,} B",
              file=sys.stderr)
    return 0


def cmd_curate(args) -> int:
    cfg = _load_config(args.config)
    iou_thr = _resolve("iou-threshold", args.iou_threshold, cfg,
                       curate_mod.MOTION_IOU_THRESHOLD, float)
    area_thr = _resolve("area-threshold", args.area_threshold, cfg,
                        curate_mod.OCCLUSION_AREA_THRESHOLD, int)
    ratio_thr = _resolve("ratio-threshold", args.ratio_threshold, cfg,
                         curate_mod.OCCLUSION_RATIO_THRESHOLD, float)
    out = {"thresholds": {"iou": iou_thr, "area": area_thr,
                          "ratio": ratio_thr},
           "motion": {}, "occlusion": {}}
    with read_archive(args.archive) as a:
        union = a.union
        masks = curate_mod.birdseye_masks(union)
        for obj_id, mk in sorted(masks.items()):
            rep = curate_mod.motion_filter(list(mk), iou_threshold=iou_thr)
            out["motion"][str(obj_id)] = {
                "keep": rep.keep, "min_iou": rep.min_iou,
                "mean_iou": rep.mean_iou, "reason": rep.reason}
        for obj_id in masks:
            kept = 0
            for i in range(a.n_frames):
                vis = a.read_seg(i) == obj_id
                dec = curate_mod.occlusion_filter(
                    vis, area_threshold=area_thr, ratio_threshold=ratio_thr)
                kept += int(dec.keep)
            out["occlusion"][str(obj_id)] = {
                "frames_kept": kept, "frames_total": a.n_frames}
    print(json.dumps(out))
    return 0


def cmd_eval(args) -> int:
    pred = np.load(args.pred)
    table: dict = {"task": args.task}
    with read_archive(args.gt) as a:
        if args.task == "pose":
            gt_pos = np.stack([c.o for c in a.cameras])
            gt_rot = np.stack([c.R for c in a.cameras])
            table["ate"] = metrics_mod.ate(pred["positions"], gt_pos)
            rpe_t, rpe_r = metrics_mod.rpe(pred["rotations"],
                                           pred["positions"], gt_rot, gt_pos)
            table["rpe_t"] = rpe_t
            table["rpe_r"] = rpe_r
        elif args.task == "tracks":
            frames = pred["frames"]
            pixels = pred["pixels"]
            gt_tracks, valid = a.query_tracks_batch(list(frames), pixels)
            vmask = np.repeat(valid[:, None], a.n_times, axis=1)
            table["epe"] = metrics_mod.track_epe(pred["tracks"], gt_tracks,
                                                 vmask)
            table["apd"] = metrics_mod.track_apd(pred["tracks"], gt_tracks,
                                                 vmask)
        elif args.task == "depth":
            ids = (pred["frames"] if "frames" in pred
                   else np.arange(a.n_frames))
            gt = np.stack([a.read_depth(int(i)).z for i in ids])
            vd = np.stack([a.read_depth(int(i)).valid for i in ids])
            for align in ("scale", "scale-and-shift"):
                table[align] = metrics_mod.depth_metrics(
                    pred["depth"], gt, vd, align=align)
        elif args.task == "recon":
            ids = (pred["frames"] if "frames" in pred
                   else np.arange(a.n_frames))
            gt_pts = []
            for i in ids:
                pm = a.query_dpm(int(i))
                gt_pts.append(pm.points[pm.valid])
            gt_pts = np.concatenate(gt_pts)
            table.update(metrics_mod.recon_metrics(pred["points"], gt_pts))
        else:
            print(f"error: unknown task {args.task!r}", file=sys.stderr)
            return 2
    print(json.dumps(table))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tracks4d",
        description="Dense 4D track toolkit: generate clips, query tracks, "
                    "report storage, curate, evaluate.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate and encode a synthetic clip")
    g.add_argument("out", help="output archive path")
    g.add_argument("--seed", type=int)
    g.add_argument("--rig", choices=RIG_PATTERNS)
    g.add_argument("--frames", type=int)
    g.add_argument("--cameras", type=int)
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--dynamic", type=int)
    g.add_argument("--extent", type=float)
    g.add_argument("--no-figure", action="store_true")
    g.add_argument("--store-rgb", action="store_true")
    g.add_argument("--raster-bary", action="store_true",
                   help="store exact rasterizer barycentrics instead of fits")
    g.add_argument("--surface-tol", type=float)
    g.add_argument("--config")
    g.set_defaults(func=cmd_generate)

    q = sub.add_parser("query", help="query a track or a full point map")
    q.add_argument("archive")
    q.add_argument("--frame", type=int, required=True)
    q.add_argument("--pixel", type=int, nargs=2, metavar=("U", "V"))
    q.add_argument("--ref", type=int, help="reference frame index (default world)")
    q.add_argument("--times", type=int, nargs="*")
    q.add_argument("--dpm", type=int, metavar="T",
                   help="write the full point map at time T instead")
    q.add_argument("--out")
    q.set_defaults(func=cmd_query)

    s = sub.add_parser("stats", help="size breakdown and compression report")
    s.add_argument("archive")
    s.set_defaults(func=cmd_stats)

    c = sub.add_parser("curate", help="motion/occlusion filter report")
    c.add_argument("archive")
    c.add_argument("--iou-threshold", type=float)
    c.add_argument("--area-threshold", type=int)
    c.add_argument("--ratio-threshold", type=float)
    c.add_argument("--config")
    c.set_defaults(func=cmd_curate)

    e = sub.add_parser("eval", help="evaluate predictions against a clip")
    e.add_argument("pred", help=".npz prediction file (see docs)")
    e.add_argument("gt", help="ground-truth archive")
    e.add_argument("--task", required=True,
                   choices=("pose", "tracks", "depth", "recon"))
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "query" and args.dpm is None and args.pixel is None:
        parser.error("query needs --pixel or --dpm")
    try:
        return args.func(args)
    except (ArchiveError, NoSurfaceError, IndexError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
