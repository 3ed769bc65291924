"""Generate the bundled toy dataset under data/toy.

One scene, four 640x480 images, two objects: a cube (side 60 mm) and a
72-gon prism standing in for a cylinder (radius 35 mm, height 80 mm).
Image 3 places the prism partially behind the cube so the visibility
computation is exercised. Everything is deterministic; re-running the
script reproduces the same bytes.

Run from the repository root:  python3 scripts/make_toy_dataset.py
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from helpers import cube_mesh, prism_mesh  # noqa: E402

from poseforge import CameraIntrinsics, RigidPose  # noqa: E402
from poseforge.camera import ray_norms  # noqa: E402
from poseforge.geometry import axis_angle_matrix  # noqa: E402
from poseforge.inout import save_depth_png, save_model  # noqa: E402
from poseforge.rendering import (  # noqa: E402
    render_distance_map,
    visibility_masks,
    visible_fraction,
)

ROOT = os.path.join(os.path.dirname(__file__), "..", "data", "toy")
CAM = CameraIntrinsics(600.0, 600.0, 319.5, 239.5, 640, 480)
DEPTH_SCALE = 0.1

CUBE_ID, PRISM_ID = 1, 2


def cube_rotations():
    """The 24 rotation matrices of the cube: signed permutations, det +1."""
    from itertools import permutations, product

    out = []
    for perm in permutations(range(3)):
        for signs in product((1.0, -1.0), repeat=3):
            R = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                R[row, col] = s
            if np.linalg.det(R) > 0:
                out.append(R)
    assert len(out) == 24
    return out


def poses_for_image(im_id):
    """(cube pose, prism pose) per image."""
    rz = axis_angle_matrix([0.0, 0.0, 1.0], np.deg2rad(30.0))
    ry = axis_angle_matrix([0.0, 1.0, 0.0], np.deg2rad(40.0))
    rx = axis_angle_matrix([1.0, 0.0, 0.0], np.deg2rad(90.0))
    tilt = axis_angle_matrix([0.3, 1.0, 0.2], 0.5)
    if im_id == 0:
        return (RigidPose(np.eye(3), [-80.0, -20.0, 700.0]),
                RigidPose(ry, [90.0, 10.0, 850.0]))
    if im_id == 1:
        return (RigidPose(rz @ ry, [60.0, -30.0, 800.0]),
                RigidPose(rx, [-70.0, 20.0, 750.0]))
    if im_id == 2:
        return (RigidPose(tilt, [0.0, 40.0, 650.0]),
                RigidPose(rz, [20.0, -60.0, 950.0]))
    # partial occlusion: prism behind the cube
    return (RigidPose(tilt @ rz, [10.0, 5.0, 640.0]),
            RigidPose(np.eye(3), [60.0, 0.0, 900.0]))


def main():
    models_dir = os.path.join(ROOT, "models")
    scene_dir = os.path.join(ROOT, "scenes", "000000")
    depth_dir = os.path.join(scene_dir, "depth")
    for d in (models_dir, depth_dir):
        os.makedirs(d, exist_ok=True)

    cube = cube_mesh(60.0)
    prism = prism_mesh(72, 35.0, 80.0)
    save_model(os.path.join(models_dir, "obj_%06d.ply" % CUBE_ID), cube)
    save_model(os.path.join(models_dir, "obj_%06d.ply" % PRISM_ID), prism)

    info = {
        str(CUBE_ID): {
            "symmetries_discrete": [
                {"R": [float(v) for v in R.reshape(-1)],
                 "t": [0.0, 0.0, 0.0]}
                for R in cube_rotations()
            ]
        },
        str(PRISM_ID): {
            "symmetries_continuous": [
                {"axis": [0.0, 0.0, 1.0], "point": [0.0, 0.0, 0.0],
                 "steps": 72}
            ]
        },
    }
    with open(os.path.join(models_dir, "models_info.json"), "w") as fh:
        json.dump(info, fh, sort_keys=True, indent=1)
        fh.write("\n")

    meshes = {CUBE_ID: cube, PRISM_ID: prism}
    norms = ray_norms(CAM)
    scene_camera = {}
    scene_gt = {}
    for im_id in range(4):
        cube_pose, prism_pose = poses_for_image(im_id)
        instances = [(CUBE_ID, cube_pose), (PRISM_ID, prism_pose)]
        dists = [render_distance_map(meshes[oid], pose, CAM).data
                 for oid, pose in instances]
        scene = np.zeros_like(dists[0])
        for d in dists:
            near = (d > 0) & ((scene == 0) | (d < scene))
            scene[near] = d[near]
        save_depth_png(os.path.join(depth_dir, "%06d.png" % im_id),
                       scene / norms, DEPTH_SCALE)

        entries = []
        for (oid, pose), d in zip(instances, dists):
            _, mask_gt = visibility_masks(d, d, scene)
            visib = visible_fraction(mask_gt, d)
            entries.append({
                "cam_R_m2c": [float(v) for v in pose.rotation.reshape(-1)],
                "cam_t_m2c": [float(v) for v in pose.translation],
                "obj_id": oid,
                "visib_fract": round(float(visib), 6),
            })
            print("im %d obj %d: visib %.3f" % (im_id, oid, visib))
        scene_gt[str(im_id)] = entries
        scene_camera[str(im_id)] = {
            "cam_K": [CAM.fx, 0.0, CAM.cx, 0.0, CAM.fy, CAM.cy,
                      0.0, 0.0, 1.0],
            "depth_scale": DEPTH_SCALE,
            "width": CAM.width,
            "height": CAM.height,
        }

    for name, payload in (("scene_camera.json", scene_camera),
                          ("scene_gt.json", scene_gt)):
        with open(os.path.join(scene_dir, name), "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
    print("wrote %s" % os.path.abspath(ROOT))


if __name__ == "__main__":
    main()
