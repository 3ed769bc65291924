"""Command-line interface: batch fitting, evaluation, and model utilities.

Subcommands:
  fit     prediction maps + models + camera -> results CSV (progressive_x)
  eval    results CSV + dataset directory -> Average Recall report
  sym     model -> symmetry annotation JSON
  render  model + pose + camera -> 16-bit distance-map PNG
  fps     model + n -> fragment atlas dump (centers + normalizers)

Exit codes: 0 success, 1 I/O or parse failure, 2 validation or usage
failure. POSE_FORGE_JOBS sets the default for --jobs.

The `eval` dataset directory layout:
  DIR/models/obj_XXXXXX.ply      evaluation meshes (XXXXXX = object id)
  DIR/models/models_info.json    optional symmetry annotations
  DIR/scenes/SSSSSS/scene_camera.json, scene_gt.json
  DIR/scenes/SSSSSS/depth/IIIIII.png   optional 16-bit depth images
"""

import argparse
import glob
import json
import os
import sys
import time

import numpy as np

from .camera import CameraIntrinsics, depth_to_distance
from .exceptions import (
    ParseError,
    PoseForgeError,
    ValidationError,
)
from .fitting import FitConfig, progressive_x
from .fragments import PredictionMaps, build_fragment_atlas, select_correspondences
from .inout import (
    DEFAULT_IMAGE_SIZE,
    ResultRecord,
    load_depth_png,
    load_model,
    load_results,
    load_scene,
    pose_from_values,
    save_results,
)
from .metrics import (
    ImageEval,
    PoseEstimate,
    discover_symmetries,
    evaluate_bop,
    load_symmetry_annotations,
    save_symmetry_annotations,
)
from .rendering import render_distance_map, save_distance_png


def _default_jobs():
    raw = os.environ.get("POSE_FORGE_JOBS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _camera_from_file(path):
    """Single-camera JSON: {"cam_K": 9 row-major values, "width", "height"}."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        entry = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(str(e), path=str(path)) from e
    if not isinstance(entry, dict) or "cam_K" not in entry:
        raise ValidationError("camera file needs a cam_K field: %s" % path)
    K = np.asarray(entry["cam_K"], dtype=np.float64)
    if K.size != 9:
        raise ValidationError("cam_K needs 9 values, got %d" % K.size)
    K = K.reshape(3, 3)
    return CameraIntrinsics(
        K[0, 0], K[1, 1], K[0, 2], K[1, 2],
        int(entry.get("width", DEFAULT_IMAGE_SIZE[0])),
        int(entry.get("height", DEFAULT_IMAGE_SIZE[1])))


def _parse_model_specs(specs):
    """--model entries look like `3=path/to/obj.ply`."""
    models = {}
    for spec in specs:
        obj_id, sep, path = spec.partition("=")
        if not sep or not obj_id.isdigit():
            raise ValidationError(
                "--model expects ID=PATH, got %r" % (spec,))
        models[int(obj_id)] = path
    return models


def _fit_one_map(map_path, model_path, cam, fit_args):
    """Fit one object's prediction maps; returns (object_id, hypotheses,
    elapsed seconds, error message or None). Module-level so a process
    pool can ship it to workers."""
    maps = PredictionMaps.load(map_path)
    mesh = load_model(model_path)
    atlas = build_fragment_atlas(mesh, n=maps.fragment_count)
    corrs = select_correspondences(
        maps, atlas, object_prob_min=fit_args["object_prob_min"],
        fragment_ratio_min=fit_args["fragment_ratio_min"])
    config = FitConfig(seed=fit_args["seed"],
                       inlier_threshold=fit_args["inlier_threshold"],
                       max_instances=fit_args["max_instances"])
    started = time.perf_counter()
    try:
        hypotheses = progressive_x(corrs, cam, config)
    except PoseForgeError as e:
        return maps.object_id, [], 0.0, str(e)
    return maps.object_id, hypotheses, time.perf_counter() - started, None


def _cmd_fit(args):
    cam = _camera_from_file(args.camera)
    model_paths = _parse_model_specs(args.model)
    fit_args = {"seed": args.seed,
                "inlier_threshold": args.inlier_threshold,
                "max_instances": args.max_instances,
                "object_prob_min": args.object_prob_min,
                "fragment_ratio_min": args.fragment_ratio_min}
    tasks = []
    for map_path in args.map:
        obj_id = PredictionMaps.load(map_path).object_id
        if obj_id not in model_paths:
            raise ValidationError(
                "prediction maps %s are for object %d; pass --model %d=PATH"
                % (map_path, obj_id, obj_id))
        tasks.append((map_path, model_paths[obj_id]))

    if args.jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            fits = list(pool.map(
                _fit_one_map, [t[0] for t in tasks], [t[1] for t in tasks],
                [cam] * len(tasks), [fit_args] * len(tasks)))
    else:
        fits = [_fit_one_map(mp, md, cam, fit_args) for mp, md in tasks]

    records = []
    for obj_id, hypotheses, elapsed, error in fits:
        if error is not None:
            print("warning: object %d: %s" % (obj_id, error),
                  file=sys.stderr)
            continue
        if not args.record_time:
            elapsed = 0.0
        for hyp in hypotheses:
            records.append(ResultRecord(args.scene_id, args.im_id, obj_id,
                                        hyp.quality, hyp.pose, elapsed))
    records.sort(key=lambda r: (r.scene_id, r.im_id, r.obj_id, -r.score))
    save_results(args.out, records)
    print("wrote %d estimates to %s" % (len(records), args.out))
    return 0


def _load_dataset(root):
    """Meshes, symmetry annotations, and SceneRecords under `root`."""
    model_files = sorted(glob.glob(os.path.join(root, "models", "obj_*.ply")))
    if not model_files:
        raise ValidationError("no models/obj_*.ply under %s" % root)
    meshes = {}
    for path in model_files:
        stem = os.path.splitext(os.path.basename(path))[0]
        digits = "".join(ch for ch in stem if ch.isdigit())
        if not digits:
            raise ValidationError("cannot read an object id from %r" % path)
        meshes[int(digits)] = load_model(path)
    info_path = os.path.join(root, "models", "models_info.json")
    symmetries = (load_symmetry_annotations(info_path)
                  if os.path.exists(info_path) else None)
    gt_files = sorted(glob.glob(os.path.join(root, "scenes", "*",
                                             "scene_gt.json")))
    if not gt_files:
        raise ValidationError("no scenes/*/scene_gt.json under %s" % root)
    scenes = []
    for gt_path in gt_files:
        cam_path = os.path.join(os.path.dirname(gt_path), "scene_camera.json")
        scenes.extend(load_scene(gt_path, cam_path))
    return meshes, symmetries, scenes


def _items_from_scenes(root, scenes, results):
    by_image = {}
    for rec in results:
        by_image.setdefault((rec.scene_id, rec.im_id), []).append(rec)
    items = []
    for scene in scenes:
        ests = [PoseEstimate(r.obj_id, r.pose, r.score)
                for r in by_image.get((scene.scene_id, scene.im_id), [])]
        depth_path = os.path.join(root, "scenes", "%06d" % scene.scene_id,
                                  "depth", "%06d.png" % scene.im_id)
        dist = None
        if os.path.exists(depth_path):
            depth = load_depth_png(depth_path, scene.depth_scale)
            dist = depth_to_distance(depth, scene.cam)
        items.append(ImageEval(cam=scene.cam, dist_img=dist,
                               gts=list(scene.gts), estimates=ests))
    return items


def _format_report(name, result):
    lines = ["dataset: %s" % name]
    if result["mode"] == "core":
        for key in ("ar_vsd", "ar_mssd", "ar_mspd", "ar_d"):
            lines.append("%-8s %.4f" % (key.upper().replace("AR_", "AR "),
                                        result[key]))
        lines.append("%-8s %d" % ("eligible", result["n_eligible"]))
    else:
        lines.append("%-8s %.4f" % ("recall", result["recall"]))
        lines.append("%-8s %d/%d" % ("correct", result["correct"],
                                     result["total"]))
    return "\n".join(lines)


def _cmd_eval(args):
    meshes, symmetries, scenes = _load_dataset(args.dataset)
    results = load_results(args.results)
    items = _items_from_scenes(args.dataset, scenes, results)
    result = evaluate_bop(items, meshes, symmetries=symmetries,
                          mode=args.mode, jobs=args.jobs)
    name = os.path.basename(os.path.normpath(args.dataset))
    print(_format_report(name, result))
    payload = dict(result, dataset=name)
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(text)
    else:
        print()
        sys.stdout.write(text)
    return 0


def _cmd_sym(args):
    mesh = load_model(args.model)
    syms = discover_symmetries(mesh, epsilon=args.epsilon)
    save_symmetry_annotations(args.out, {args.object_id: syms})
    print("object %d: %d transforms -> %s"
          % (args.object_id, len(syms), args.out))
    return 0


def _cmd_render(args):
    mesh = load_model(args.model)
    cam = _camera_from_file(args.camera)
    pose = pose_from_values([float(v) for v in args.r.split()],
                            [float(v) for v in args.t.split()])
    dmap = render_distance_map(mesh, pose, cam)
    save_distance_png(args.out, dmap, args.scale)
    print("rendered %d covered pixels -> %s"
          % (int(np.count_nonzero(dmap.data)), args.out))
    return 0


def _cmd_fps(args):
    mesh = load_model(args.model)
    atlas = build_fragment_atlas(mesh, n=args.n)
    payload = {
        "fragment_count": atlas.fragment_count,
        "centers": [[float(v) for v in c] for c in atlas.centers],
        "normalizers": [float(v) for v in atlas.normalizers],
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print("%d fragments -> %s" % (atlas.fragment_count, args.out))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="poseforge",
        description="Multi-instance 6D pose fitting and BOP-style evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit poses from prediction maps")
    p_fit.add_argument("--map", action="append", required=True,
                       help="prediction-map file (repeatable, one per object)")
    p_fit.add_argument("--model", action="append", required=True,
                       metavar="ID=PLY", help="object mesh (repeatable)")
    p_fit.add_argument("--camera", required=True,
                       help="camera JSON with cam_K/width/height")
    p_fit.add_argument("--out", required=True, help="results CSV to write")
    p_fit.add_argument("--scene-id", type=int, default=0)
    p_fit.add_argument("--im-id", type=int, default=0)
    p_fit.add_argument("--seed", type=int, default=0,
                       help="fixes all randomness")
    p_fit.add_argument("--jobs", type=int, default=_default_jobs())
    p_fit.add_argument("--max-instances", type=int, default=None)
    p_fit.add_argument("--inlier-threshold", type=float, default=4.0,
                       help="pixels")
    p_fit.add_argument("--object-prob-min", type=float, default=0.1)
    p_fit.add_argument("--fragment-ratio-min", type=float, default=0.5)
    p_fit.add_argument("--record-time", action="store_true",
                       help="store wall time per object (breaks "
                            "byte-for-byte reproducibility)")
    p_fit.set_defaults(func=_cmd_fit)

    p_eval = sub.add_parser("eval", help="score results against a dataset")
    p_eval.add_argument("--dataset", required=True,
                        help="dataset root (models/ + scenes/)")
    p_eval.add_argument("--results", required=True, help="results CSV")
    p_eval.add_argument("--mode", choices=("core", "siso"), default="core")
    p_eval.add_argument("--jobs", type=int, default=_default_jobs())
    p_eval.add_argument("--json-out", default=None,
                        help="write the machine-readable report here "
                             "instead of stdout")
    p_eval.set_defaults(func=_cmd_eval)

    p_sym = sub.add_parser("sym", help="discover model symmetries")
    p_sym.add_argument("model", help="PLY mesh")
    p_sym.add_argument("--out", required=True, help="annotation JSON")
    p_sym.add_argument("--object-id", type=int, default=1)
    p_sym.add_argument("--epsilon", type=float, default=None,
                       help="acceptance tolerance mm; default max(15, 0.1d)")
    p_sym.set_defaults(func=_cmd_sym)

    p_render = sub.add_parser("render", help="render a distance map")
    p_render.add_argument("model", help="PLY mesh")
    p_render.add_argument("--camera", required=True,
                          help="camera JSON with cam_K/width/height")
    p_render.add_argument("--r", required=True,
                          help="9 space-separated rotation values, row-major")
    p_render.add_argument("--t", required=True,
                          help="3 space-separated translation values, mm")
    p_render.add_argument("--out", required=True, help="16-bit PNG")
    p_render.add_argument("--scale", type=float, default=0.1,
                          help="mm per stored unit")
    p_render.set_defaults(func=_cmd_render)

    p_fps = sub.add_parser("fps", help="dump a fragment atlas")
    p_fps.add_argument("model", help="PLY mesh")
    p_fps.add_argument("--n", type=int, default=64, help="fragment count")
    p_fps.add_argument("--out", required=True, help="atlas JSON")
    p_fps.set_defaults(func=_cmd_fps)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except ParseError as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    except OSError as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    except PoseForgeError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
