"""Global symmetry discovery and symmetry annotation files.

A symmetry of a model is a rigid transform that maps its vertex set onto
itself up to a tolerance epsilon (directed Hausdorff distance). Discovery
samples candidate rotations densely (icosphere axis directions x in-plane
angles), anchors the translation so the centroid is a fixed point, locally
refines each candidate by iterative closest-point alignment, and keeps the
transforms that pass the Hausdorff test. Continuous symmetries show up as
dense rotation families about a single axis at the sampling resolution.

Automatic discovery can over- or under-segment real objects whose symmetry
is broken only by texture, so an annotation file with hand-specified
discrete transforms and/or discretized continuous axes takes precedence
when provided.
"""

import json

import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import DegenerateMesh, ParseError, ValidationError
from ..geometry import RigidPose, axis_angle_matrix, kabsch, rotation_angle

# Below this tolerance two rotations count as the same symmetry.
DEDUP_ANGLE_DEG = 3.0
IN_PLANE_STEP_DEG = 6.0


class SymmetrySet:
    """An identity-containing set of rigid symmetry transforms."""

    __slots__ = ("transforms",)

    def __init__(self, transforms=()):
        items = list(transforms)
        for pose in items:
            if not isinstance(pose, RigidPose):
                raise ValidationError("symmetry transforms must be RigidPose")
        if not any(_is_identity(p) for p in items):
            items.insert(0, RigidPose.identity())
        self.transforms = tuple(items)

    def __iter__(self):
        return iter(self.transforms)

    def __len__(self):
        return len(self.transforms)

    def __getitem__(self, i):
        return self.transforms[i]

    def __repr__(self):
        return "SymmetrySet(%d transforms)" % len(self.transforms)

    @classmethod
    def identity_only(cls):
        return cls()


def _is_identity(pose, angle_tol=1e-9, t_tol=1e-6):
    return (rotation_angle(pose.rotation) < angle_tol
            and np.linalg.norm(pose.translation) < t_tol)


def icosphere_axes(subdivisions=3):
    """Axis directions from a subdivided icosahedron, one per antipodal pair.

    The icosahedron is oriented with vertices at the poles, so the z axis is
    always an exact member. Three subdivisions give 642 vertices, i.e. 321
    distinct axes.
    """
    # polar icosahedron: two poles plus two staggered pentagonal rings
    lat = np.arctan(0.5)
    verts = [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]
    for k in range(5):
        lon = np.deg2rad(72.0 * k)
        verts.append(np.array([np.cos(lat) * np.cos(lon),
                               np.cos(lat) * np.sin(lon), np.sin(lat)]))
    for k in range(5):
        lon = np.deg2rad(72.0 * k + 36.0)
        verts.append(np.array([np.cos(lat) * np.cos(lon),
                               np.cos(lat) * np.sin(lon), -np.sin(lat)]))
    verts = np.array(verts)
    top = [(0, 2 + k, 2 + (k + 1) % 5) for k in range(5)]
    bottom = [(1, 7 + (k + 1) % 5, 7 + k) for k in range(5)]
    middle = []
    for k in range(5):
        a, b = 2 + k, 2 + (k + 1) % 5
        c, d = 7 + k, 7 + (k + 1) % 5
        middle.append((a, c, d))
        middle.append((a, d, b))
    faces = np.array(top + middle + bottom, dtype=np.int64)

    for _ in range(subdivisions):
        edge_mid = {}
        new_faces = []
        verts = list(verts)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in edge_mid:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                edge_mid[key] = len(verts) - 1
            return edge_mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.array(verts)
        faces = np.array(new_faces, dtype=np.int64)

    # one representative per antipodal pair: upper hemisphere, with ties on
    # the equator broken lexicographically
    eps = 1e-9
    keep = (verts[:, 2] > eps) | (
        (np.abs(verts[:, 2]) <= eps)
        & ((verts[:, 1] > eps)
           | ((np.abs(verts[:, 1]) <= eps) & (verts[:, 0] > eps))))
    return verts[keep]


def _directed_hausdorff(tree, pts):
    d, _ = tree.query(pts)
    return float(d.max())


def _icp_refine(verts, tree, R, t, iterations=10):
    """Iterative closest point: snap a near-symmetry onto the vertex set."""
    prev = None
    for _ in range(iterations):
        x = verts @ R.T + t
        _, idx = tree.query(x)
        if prev is not None and np.array_equal(idx, prev):
            break
        prev = idx
        R, t = kabsch(verts, verts[idx])
    return R, t


def discover_symmetries(mesh, epsilon=None, in_plane_step_deg=IN_PLANE_STEP_DEG,
                        dedup_angle_deg=DEDUP_ANGLE_DEG, subdivisions=3,
                        refine_iterations=10):
    """Search for rigid transforms mapping the vertex set onto itself.

    Candidates are rotations about icosphere axis directions through the
    vertex centroid, swept over in-plane angles; each is ICP-refined and
    accepted iff the directed Hausdorff distance of the transformed vertices
    to the original set stays below epsilon. Near-duplicate rotations
    (relative angle under `dedup_angle_deg`) are merged, identity always
    included.

    :param epsilon: acceptance tolerance in mm; default max(15, 0.1 * d)
        where d is the model diameter, so small surface details do not
        break a symmetry.
    :returns: SymmetrySet, identity first, in discovery order.
    :raises DegenerateMesh: fewer than 2 vertices or zero diameter.
    """
    verts = np.asarray(getattr(mesh, "vertices", mesh), dtype=np.float64)
    if verts.ndim != 2 or verts.shape[0] < 2:
        raise DegenerateMesh("symmetry discovery needs at least 2 vertices")
    diameter = getattr(mesh, "diameter", None)
    if diameter is None:
        d2 = ((verts[:, None] - verts[None]) ** 2).sum(axis=2)
        diameter = float(np.sqrt(d2.max()))
    if diameter <= 0:
        raise DegenerateMesh("degenerate model: zero diameter")
    if epsilon is None:
        epsilon = max(15.0, 0.1 * diameter)

    tree = cKDTree(verts)
    centroid = verts.mean(axis=0)
    angles = np.deg2rad(np.arange(in_plane_step_deg, 360.0,
                                  in_plane_step_deg))
    dedup_rad = np.deg2rad(dedup_angle_deg)
    # Coarse gate: a candidate adjacent to a genuine symmetry is off by at
    # most the sampling resolution (icosahedron edge arc 63.43 deg shrinks
    # by half per subdivision; circumradius factor 0.62; axis error counts
    # double at 180 deg; plus half an in-plane step), which displaces a
    # vertex at radius rho by 2 sin(offset/2) rho. The symmetry itself may
    # sit up to epsilon from the vertex set, hence the additive term.
    # Anything past the gate still has to survive refinement and the exact
    # Hausdorff test, so the gate is purely a pruning device.
    axis_gap = np.deg2rad(2.0 * 63.43 / 2 ** subdivisions * 0.62
                          + in_plane_step_deg / 2.0)
    rho = float(np.linalg.norm(verts - centroid, axis=1).max())
    gate = 2.0 * np.sin(axis_gap / 2.0) * rho + epsilon

    # all candidate rotations at once (axes x in-plane angles, Rodrigues)
    axes = icosphere_axes(subdivisions)
    a = np.repeat(axes, len(angles), axis=0)
    th = np.tile(angles, len(axes))
    K = np.zeros((len(a), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -a[:, 2], a[:, 1]
    K[:, 1, 0], K[:, 1, 2] = a[:, 2], -a[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -a[:, 1], a[:, 0]
    eye = np.eye(3)
    R_all = (eye[None] + np.sin(th)[:, None, None] * K
             + (1.0 - np.cos(th))[:, None, None] * (K @ K))

    # coarse Hausdorff gate, batched through the KD-tree in chunks
    centered = verts - centroid
    n = verts.shape[0]
    chunk = max(1, 2_000_000 // n)
    coarse = np.empty(len(R_all))
    for lo in range(0, len(R_all), chunk):
        Rs = R_all[lo:lo + chunk]
        x = np.einsum("kij,nj->kni", Rs, centered) + centroid
        d, _ = tree.query(x.reshape(-1, 3))
        coarse[lo:lo + chunk] = d.reshape(len(Rs), n).max(axis=1)

    kept = [RigidPose.identity()]
    kept_R = [np.eye(3)]
    cos_dedup = np.cos(dedup_rad)
    for idx in np.nonzero(coarse < gate)[0]:
        R = R_all[idx]
        t = centroid - R @ centroid
        R, t = _icp_refine(verts, tree, R, t, refine_iterations)
        # duplicate of a kept rotation? trace(R_kept^T R) = 1 + 2 cos(angle)
        traces = np.einsum("kij,ij->k", np.asarray(kept_R), R)
        if np.any((traces - 1.0) / 2.0 > cos_dedup):
            continue
        # symmetric Hausdorff: check the transform and its inverse against
        # the same tree (a one-way check would accept many-to-one collapses)
        if _directed_hausdorff(tree, verts @ R.T + t) >= epsilon:
            continue
        if _directed_hausdorff(tree, (verts - t) @ R) >= epsilon:
            continue
        kept.append(RigidPose(R, t))
        kept_R.append(R)
    return SymmetrySet(kept)


def symmetry_set_from_annotation(entry):
    """Build a SymmetrySet from one object's annotation entry.

    The entry layout follows the datasets' model-info convention: an
    optional "symmetries_discrete" list of {"R": 9 values row-major,
    "t": 3 values mm} and an optional "symmetries_continuous" list of
    {"axis": unit 3-vector, "point": point on the axis in mm (default
    origin), "steps": discretization count}. Other keys are ignored, so
    a model-info record can be passed through as-is.
    """
    transforms = []
    for item in entry.get("symmetries_discrete", ()):
        R = np.asarray(item["R"], dtype=np.float64).reshape(3, 3)
        t = np.asarray(item["t"], dtype=np.float64).reshape(3)
        transforms.append(RigidPose(R, t))
    for item in entry.get("symmetries_continuous", ()):
        axis = np.asarray(item["axis"], dtype=np.float64)
        point = np.asarray(item.get("point", (0.0, 0.0, 0.0)),
                           dtype=np.float64)
        steps = int(item["steps"])
        if steps < 1:
            raise ValidationError("continuous symmetry needs steps >= 1")
        for k in range(1, steps):
            R = axis_angle_matrix(axis, 2.0 * np.pi * k / steps)
            transforms.append(RigidPose(R, point - R @ point))
    return SymmetrySet(transforms)


def _annotation_entry(value):
    if isinstance(value, SymmetrySet):
        return {
            "symmetries_discrete": [
                {"R": [float(v) for v in pose.rotation.reshape(-1)],
                 "t": [float(v) for v in pose.translation]}
                for pose in value
            ]
        }
    if isinstance(value, dict):
        return value
    raise ValidationError(
        "annotation values must be SymmetrySet or entry dicts")


def save_symmetry_annotations(path, annotations):
    """Write {object_id: SymmetrySet or entry dict} annotations as JSON.

    SymmetrySet values are expanded to "symmetries_discrete" lists
    (identity included); dict entries are written through unchanged.
    """
    payload = {str(k): _annotation_entry(v) for k, v in annotations.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_symmetry_annotations(path):
    """Read an annotation file; returns {object_id: SymmetrySet}.

    :raises ParseError: malformed JSON (with byte offset) or bad entries.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        payload = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ParseError("annotation file is not UTF-8", path=str(path),
                         offset=e.start) from e
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=str(path), offset=e.pos) from e
    if not isinstance(payload, dict):
        raise ParseError("expected a JSON object keyed by object id",
                         path=str(path))
    out = {}
    for key, entry in payload.items():
        try:
            out[int(key)] = symmetry_set_from_annotation(entry)
        except (KeyError, TypeError, AttributeError, ValueError) as e:
            raise ParseError("bad symmetry entry for object %r: %s"
                             % (key, e), path=str(path)) from e
    return out
