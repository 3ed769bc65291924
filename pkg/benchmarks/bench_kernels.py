"""Time the native kernels against the NumPy fallback.

Run from the repository root:  python3 benchmarks/bench_kernels.py

Covers the three hot paths (rasterization, reprojection error, pose
quality) plus one end-to-end progressive_x fit. Wall times are medians
over repeats on this machine; treat them as relative, not absolute.
"""

import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from helpers import default_camera, prism_mesh, random_rotation  # noqa: E402

from poseforge import RigidPose  # noqa: E402
from poseforge._kernels import get_backend  # noqa: E402
from poseforge.fitting import FitConfig, progressive_x  # noqa: E402
from poseforge.fragments import (  # noqa: E402
    build_fragment_atlas,
    select_correspondences,
    synthesize_prediction_maps,
)


def median_time(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def bench_rasterize(impl, rng):
    mesh = prism_mesh(n_sides=256, radius=40.0, height=90.0)
    R = random_rotation(rng)
    pts = mesh.vertices @ R.T + [0.0, 0.0, 650.0]
    tris = np.asarray(mesh.triangles, dtype=np.int32)
    return median_time(lambda: impl.rasterize(
        pts, tris, 600.0, 600.0, 319.5, 239.5, 640, 480, False))


def bench_reproject(impl, rng):
    R = random_rotation(rng)
    t = np.array([0.0, 0.0, 700.0])
    X = rng.uniform(-40, 40, (20000, 3))
    U = rng.uniform(0, 640, (20000, 2))
    return median_time(lambda: impl.reproject_sq_errors(
        R, t, X, U, 600.0, 600.0, 319.5, 239.5))


def bench_pose_quality(impl, rng):
    R = random_rotation(rng)
    t = np.array([0.0, 0.0, 700.0])
    X = rng.uniform(-40, 40, (20000, 3))
    U = rng.uniform(0, 640, (20000, 2))
    gid = rng.integers(0, 4000, 20000)
    return median_time(lambda: impl.pose_quality(
        R, t, X, U, gid, 4000, 16.0, 600.0, 600.0, 319.5, 239.5, None))


def bench_fit(backend_name):
    """End-to-end two-instance fit; backend picked via the environment."""
    import subprocess
    code = r"""
import sys, time
import numpy as np
sys.path.insert(0, %r)
from helpers import default_camera, prism_mesh
from poseforge import RigidPose
from poseforge.fragments import build_fragment_atlas, synthesize_prediction_maps, select_correspondences
from poseforge.fitting import FitConfig, progressive_x

cam = default_camera()
mesh = prism_mesh()
atlas = build_fragment_atlas(mesh, n=64)
poses = [RigidPose(np.eye(3), [-60.0, 0.0, 700.0]),
         RigidPose(np.eye(3), [80.0, 10.0, 820.0])]
maps = synthesize_prediction_maps(mesh, atlas, poses, cam)
corrs = select_correspondences(maps, atlas)
best = 1e9
for _ in range(3):
    t0 = time.perf_counter()
    progressive_x(corrs, cam, FitConfig(seed=4))
    best = min(best, time.perf_counter() - t0)
print(best)
""" % os.path.join(os.path.dirname(__file__), "..", "tests")
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True,
        env={**os.environ, "POSE_FORGE_BACKEND": backend_name})
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return float(out.stdout.strip())


def main():
    backends = {"numpy": get_backend("numpy")}
    try:
        backends["native"] = get_backend("native")
    except ImportError:
        print("native backend not built; timing NumPy only\n")

    rows = []
    for name, fn in (("rasterize 640x480, 508 tris", bench_rasterize),
                     ("reproject_sq_errors 20k", bench_reproject),
                     ("pose_quality 20k/4k groups", bench_pose_quality)):
        row = {"bench": name}
        for bname, impl in backends.items():
            row[bname] = fn(impl, np.random.default_rng(0))
        rows.append(row)

    row = {"bench": "progressive_x 2 instances"}
    for bname in backends:
        row[bname] = bench_fit(bname)
    rows.append(row)

    width = max(len(r["bench"]) for r in rows)
    header = "%-*s" % (width, "benchmark")
    for bname in backends:
        header += "  %12s" % bname
    if "native" in backends:
        header += "  %8s" % "speedup"
    print(header)
    print("-" * len(header))
    for r in rows:
        line = "%-*s" % (width, r["bench"])
        for bname in backends:
            line += "  %10.2f ms" % (r[bname] * 1e3)
        if "native" in backends:
            line += "  %7.1fx" % (r["numpy"] / r["native"])
        print(line)


if __name__ == "__main__":
    main()
