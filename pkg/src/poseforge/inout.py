"""Dataset and result I/O in the benchmark's unified format.

Covers PLY models (ASCII and binary little-endian), per-scene ground-truth
and camera files (JSON keyed by image id, with the public field names
cam_K / depth_scale / cam_R_m2c / cam_t_m2c / obj_id / visib_fract),
16-bit depth PNGs, and the results CSV. All loaders gate type invariants
(orthonormal rotations, positive scales) at the boundary instead of letting
bad values propagate into the geometry.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .camera import CameraIntrinsics
from .exceptions import (
    MissingField,
    ParseError,
    UnsupportedElement,
    ValidationError,
)
from .geometry import RigidPose
from .mesh import TriangleMesh
from .metrics.scoring import GroundTruthInstance

# scene_camera files may omit the image size; the benchmark's most common
# sensor resolution fills in
DEFAULT_IMAGE_SIZE = (640, 480)

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class _PlyElement:
    __slots__ = ("name", "count", "properties")

    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, dtype) or (name, count_dtype, item_dtype)


def _parse_ply_header(data, path):
    """Returns (is_binary, elements, body_offset)."""
    pos = 0

    def next_line():
        nonlocal pos
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError("unterminated header", path=path, offset=pos)
        line = data[pos:end].decode("latin-1").strip()
        start = pos
        pos = end + 1
        return line, start

    line, off = next_line()
    if line != "ply":
        raise ParseError("not a PLY file (missing 'ply' magic)",
                         path=path, offset=off)
    is_binary = None
    elements = []
    while True:
        line, off = next_line()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        tokens = line.split()
        if tokens[0] == "format":
            if tokens[1:] == ["ascii", "1.0"]:
                is_binary = False
            elif tokens[1:] == ["binary_little_endian", "1.0"]:
                is_binary = True
            else:
                raise UnsupportedElement(
                    "unsupported PLY format %r" % (" ".join(tokens[1:]),),
                    path=path, offset=off)
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError("malformed element line", path=path, offset=off)
            try:
                count = int(tokens[2])
            except ValueError:
                raise ParseError("bad element count %r" % (tokens[2],),
                                 path=path, offset=off) from None
            elements.append(_PlyElement(tokens[1], count))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element",
                                 path=path, offset=off)
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise ParseError("malformed list property",
                                     path=path, offset=off)
                try:
                    ctype, itype = _PLY_DTYPES[tokens[2]], _PLY_DTYPES[tokens[3]]
                except KeyError as e:
                    raise UnsupportedElement("unknown PLY type %s" % e,
                                             path=path, offset=off) from None
                elements[-1].properties.append((tokens[4], ctype, itype))
            else:
                if len(tokens) != 3:
                    raise ParseError("malformed property line",
                                     path=path, offset=off)
                try:
                    dtype = _PLY_DTYPES[tokens[1]]
                except KeyError:
                    raise UnsupportedElement(
                        "unknown PLY type %r" % (tokens[1],),
                        path=path, offset=off) from None
                elements[-1].properties.append((tokens[2], dtype))
        elif tokens[0] == "end_header":
            break
        else:
            raise ParseError("unrecognized header line %r" % (line,),
                             path=path, offset=off)
    if is_binary is None:
        raise ParseError("header has no format line", path=path, offset=pos)
    return is_binary, elements, pos


def _triangulate(indices, path, offset):
    """Fan-triangulate one polygon; polygons need at least 3 vertices."""
    if len(indices) < 3:
        raise ParseError("face with %d vertices" % len(indices),
                         path=path, offset=offset)
    return [(indices[0], indices[k], indices[k + 1])
            for k in range(1, len(indices) - 1)]


def _ascii_rows(data, pos, count, path):
    """Yield (tokens, offset) for `count` non-empty lines starting at pos."""
    out = []
    for _ in range(count):
        while True:
            if pos >= len(data):
                raise ParseError("file ends inside element data",
                                 path=path, offset=len(data))
            end = data.find(b"\n", pos)
            if end < 0:
                end = len(data)
            line = data[pos:end]
            start = pos
            pos = end + 1
            if line.strip():
                break
        out.append((line.split(), start))
    return out, pos


def _load_ply_ascii(data, elements, pos, path):
    verts = normals = tris = None
    for elem in elements:
        if elem.name not in ("vertex", "face") \
                and any(len(p) == 3 for p in elem.properties):
            # a skipped list element (tristrips and the like) would drop
            # real topology on the floor
            raise UnsupportedElement("cannot skip list element %r"
                                     % elem.name, path=path, offset=pos)
        rows, pos = _ascii_rows(data, pos, elem.count, path)
        if elem.name == "vertex":
            names = [p[0] for p in elem.properties]
            try:
                ix = [names.index(k) for k in ("x", "y", "z")]
            except ValueError:
                raise ParseError("vertex element lacks x/y/z", path=path,
                                 offset=pos) from None
            want_normals = all(k in names for k in ("nx", "ny", "nz"))
            inx = [names.index(k) for k in ("nx", "ny", "nz")] \
                if want_normals else None
            verts = np.empty((elem.count, 3))
            normals = np.empty((elem.count, 3)) if want_normals else None
            for row, (tokens, off) in enumerate(rows):
                if len(tokens) < len(names):
                    raise ParseError("short vertex row", path=path, offset=off)
                try:
                    verts[row] = [float(tokens[k]) for k in ix]
                    if want_normals:
                        normals[row] = [float(tokens[k]) for k in inx]
                except ValueError:
                    raise ParseError("bad number in vertex row", path=path,
                                     offset=off) from None
        elif elem.name == "face":
            tris = []
            for tokens, off in rows:
                try:
                    n = int(tokens[0])
                    idx = [int(t) for t in tokens[1:1 + n]]
                except (ValueError, IndexError):
                    raise ParseError("bad face row", path=path,
                                     offset=off) from None
                if len(idx) != n:
                    raise ParseError("face row shorter than its count",
                                     path=path, offset=off)
                tris += _triangulate(idx, path, off)
        # other elements: consumed and ignored
    return verts, normals, tris


def _load_ply_binary(data, elements, pos, path):
    verts = normals = tris = None
    for elem in elements:
        fixed = all(len(p) == 2 for p in elem.properties)
        if fixed:
            dtype = np.dtype([("f%d" % i, "<" + p[1])
                              for i, p in enumerate(elem.properties)])
            need = elem.count * dtype.itemsize
            if pos + need > len(data):
                raise ParseError("file ends inside element data",
                                 path=path, offset=len(data))
            if elem.name == "vertex":
                names = [p[0] for p in elem.properties]
                rec = np.frombuffer(data, dtype=dtype, count=elem.count,
                                    offset=pos)
                try:
                    ix = [names.index(k) for k in ("x", "y", "z")]
                except ValueError:
                    raise ParseError("vertex element lacks x/y/z",
                                     path=path, offset=pos) from None
                verts = np.stack(
                    [rec["f%d" % k].astype(np.float64) for k in ix], axis=1)
                if all(k in names for k in ("nx", "ny", "nz")):
                    inx = [names.index(k) for k in ("nx", "ny", "nz")]
                    normals = np.stack(
                        [rec["f%d" % k].astype(np.float64) for k in inx],
                        axis=1)
            pos += need
        else:
            if elem.name != "face" or len(elem.properties) != 1:
                # a list property makes the element size data-dependent;
                # skipping it blind would desync the cursor
                raise UnsupportedElement(
                    "cannot skip element %r with list properties"
                    % (elem.name,), path=path, offset=pos)
            _, ctype, itype = elem.properties[0]
            csize = np.dtype(ctype).itemsize
            isize = np.dtype(itype).itemsize
            tris = []
            if elem.count:
                # uniform triangle fast path: check that interpreting the
                # block as (count, 3-index) rows reproduces every count field
                stride = csize + 3 * isize
                end = pos + elem.count * stride
                if end <= len(data):
                    raw = np.frombuffer(data, dtype=np.uint8,
                                        count=elem.count * stride, offset=pos)
                    raw = raw.reshape(elem.count, stride)
                    counts = raw[:, :csize].copy().view("<" + ctype)[:, 0]
                    if np.all(counts == 3):
                        tris = raw[:, csize:].copy().view(
                            "<" + itype).reshape(elem.count, 3)
                        pos = end
                        continue
                cur = pos
                for _ in range(elem.count):
                    if cur + csize > len(data):
                        raise ParseError("file ends inside face data",
                                         path=path, offset=len(data))
                    n = int(np.frombuffer(data, dtype="<" + ctype, count=1,
                                          offset=cur)[0])
                    cur += csize
                    if cur + n * isize > len(data):
                        raise ParseError("file ends inside face data",
                                         path=path, offset=len(data))
                    idx = np.frombuffer(data, dtype="<" + itype, count=n,
                                        offset=cur).astype(np.int64)
                    cur += n * isize
                    tris += _triangulate(list(idx), path, cur)
                pos = cur
    return verts, normals, tris


def load_model(path):
    """Load a PLY mesh (ASCII or binary little-endian), positions in mm.

    Optional per-vertex normals are kept; per-vertex colors are parsed but
    ignored. Polygonal faces are fan-triangulated.

    :raises ParseError: malformed or truncated file, with byte offset.
    :raises UnsupportedElement: big-endian files, unknown property types,
        or non-face elements with list properties.
    """
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    is_binary, elements, pos = _parse_ply_header(data, path)
    loader = _load_ply_binary if is_binary else _load_ply_ascii
    verts, normals, tris = loader(data, elements, pos, path)
    if verts is None:
        raise ParseError("no vertex element", path=path, offset=pos)
    tri_arr = (None if tris is None
               else np.asarray(tris, dtype=np.int32).reshape(-1, 3))
    if tri_arr is not None and len(tri_arr) and tri_arr.max() >= len(verts):
        raise ParseError("face references vertex %d of %d"
                         % (int(tri_arr.max()), len(verts)), path=path)
    return TriangleMesh(verts, tri_arr, normals=normals)


def save_model(path, mesh, binary=True):
    """Write a mesh as PLY; `binary` picks binary little-endian vs ASCII.

    Positions (and normals when present) are stored as float64 so a
    write-read round trip reproduces the vertex data exactly.
    """
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    normals = getattr(mesh, "normals", None)
    tris = mesh.triangles
    header = ["ply",
              "format %s 1.0" % ("binary_little_endian" if binary else "ascii"),
              "element vertex %d" % len(verts)]
    header += ["property double %s" % ax for ax in "xyz"]
    if normals is not None:
        header += ["property double n%s" % ax for ax in "xyz"]
    tris = np.zeros((0, 3), np.int32) if tris is None else np.asarray(tris)
    header += ["element face %d" % len(tris),
               "property list uchar int vertex_indices",
               "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        cols = np.hstack([verts, normals]) if normals is not None else verts
        if binary:
            fh.write(np.ascontiguousarray(cols, dtype="<f8").tobytes())
            if len(tris):
                face_dt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
                faces = np.empty(len(tris), dtype=face_dt)
                faces["n"] = 3
                faces["idx"] = tris
                fh.write(faces.tobytes())
        else:
            for row in cols:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n")
                         .encode("ascii"))
            for tri in tris:
                fh.write(("3 %d %d %d\n" % tuple(tri)).encode("ascii"))


@dataclass(frozen=True)
class SceneRecord:
    """Ground truth and camera for one image of one scene."""
    scene_id: int
    im_id: int
    cam: object
    depth_scale: float
    gts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.depth_scale > 0:
            raise ValidationError("depth_scale must be positive")


@dataclass(frozen=True)
class ResultRecord:
    """One serialized pose estimate."""
    scene_id: int
    im_id: int
    obj_id: int
    score: float
    pose: object
    time: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValidationError("score must be finite")
        if not self.time >= 0:
            raise ValidationError("time must be >= 0")


def _load_json(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ParseError("not UTF-8", path=str(path), offset=e.start) from e
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=str(path), offset=e.pos) from e


def _field(mapping, key, path, context):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise MissingField("%s lacks %r" % (context, key),
                           path=str(path)) from None


def pose_from_values(r_values, t_values, tol=1e-3):
    """RigidPose from 9 row-major rotation values and 3 translation values.

    Rotations within `tol` of orthonormal (entrywise, det +1) are projected
    onto the nearest rotation matrix; anything farther is rejected.

    :raises ValidationError: wrong value counts or a non-rotation.
    """
    R = np.asarray(r_values, dtype=np.float64)
    t = np.asarray(t_values, dtype=np.float64)
    if R.size != 9:
        raise ValidationError("rotation needs 9 values, got %d" % R.size)
    if t.size != 3:
        raise ValidationError("translation needs 3 values, got %d" % t.size)
    R = R.reshape(3, 3)
    if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
        raise ValidationError("pose contains non-finite values")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol or np.linalg.det(R) < 0:
        raise ValidationError(
            "rotation is not orthonormal within %.0e (residual %.3e)"
            % (tol, err))
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    if np.linalg.det(R) < 0:
        u[:, 2] = -u[:, 2]
        R = u @ vt
    return RigidPose(R, t.reshape(3), validate=False)


def _scene_id_from_path(path):
    """Scene directories are conventionally numbered; 0 when they are not."""
    name = os.path.basename(os.path.dirname(os.path.abspath(path)))
    digits = "".join(ch for ch in name if ch.isdigit())
    return int(digits) if digits else 0


def load_scene(gt_path, camera_path, scene_id=None):
    """Load per-image ground truth + intrinsics into SceneRecords.

    Both files are JSON objects keyed by image id. Camera entries carry
    "cam_K" (9 values row-major) and "depth_scale" (mm per stored depth
    unit), optionally "width"/"height" (default 640x480). Ground-truth
    entries are lists of {"cam_R_m2c", "cam_t_m2c", "obj_id"} with optional
    "visib_fract". Images present in the camera file but absent from the
    ground truth produce records with no instances.

    :param scene_id: recorded on each SceneRecord; inferred from the digits
        of the containing directory name when omitted.
    :raises MissingField: a required key is absent.
    :raises ValidationError: non-orthonormal rotation (beyond 1e-3) or a
        non-positive depth scale.
    """
    cams = _load_json(camera_path)
    gts = _load_json(gt_path)
    if not isinstance(cams, dict) or not isinstance(gts, dict):
        raise ParseError("scene files must be JSON objects keyed by image id",
                         path=str(camera_path))
    if scene_id is None:
        scene_id = _scene_id_from_path(str(gt_path))

    records = []
    for key in sorted(cams, key=lambda k: int(k)):
        entry = cams[key]
        K = np.asarray(_field(entry, "cam_K", camera_path,
                              "camera entry %s" % key), dtype=np.float64)
        if K.size != 9:
            raise ValidationError("cam_K needs 9 values, got %d" % K.size)
        K = K.reshape(3, 3)
        scale = float(_field(entry, "depth_scale", camera_path,
                             "camera entry %s" % key))
        width = int(entry.get("width", DEFAULT_IMAGE_SIZE[0]))
        height = int(entry.get("height", DEFAULT_IMAGE_SIZE[1]))
        cam = CameraIntrinsics(K[0, 0], K[1, 1], K[0, 2], K[1, 2],
                               width, height)
        instances = []
        for inst in gts.get(key, ()):
            pose = pose_from_values(
                _field(inst, "cam_R_m2c", gt_path, "gt entry %s" % key),
                _field(inst, "cam_t_m2c", gt_path, "gt entry %s" % key))
            obj_id = int(_field(inst, "obj_id", gt_path,
                                "gt entry %s" % key))
            visib = float(inst.get("visib_fract", 1.0))
            instances.append(GroundTruthInstance(obj_id, pose, visib))
        records.append(SceneRecord(scene_id, int(key), cam, scale,
                                   tuple(instances)))
    missing = set(gts) - set(cams)
    if missing:
        raise MissingField(
            "images %s have ground truth but no camera"
            % sorted(missing, key=int), path=str(camera_path))
    return records


RESULTS_HEADER = "scene_id,im_id,obj_id,score,R,t,time"


def save_results(path, records):
    """Write ResultRecords as CSV: scene_id,im_id,obj_id,score,R,t,time.

    R is 9 space-separated row-major values, t is 3 space-separated mm
    values; floats are written in shortest round-trip form.
    """
    lines = [RESULTS_HEADER]
    for rec in records:
        R = " ".join(repr(float(v)) for v in rec.pose.rotation.reshape(-1))
        t = " ".join(repr(float(v)) for v in rec.pose.translation)
        lines.append("%d,%d,%d,%s,%s,%s,%s"
                     % (rec.scene_id, rec.im_id, rec.obj_id,
                        repr(float(rec.score)), R, t,
                        repr(float(rec.time))))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_results(path):
    """Read a results CSV; the offset of a ParseError is the line number."""
    path = str(path)
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if lineno == 1 and line.strip() == RESULTS_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError("line %d: expected 7 comma-separated fields, "
                             "got %d" % (lineno, len(parts)),
                             path=path, offset=lineno)
        try:
            scene_id, im_id, obj_id = (int(parts[0]), int(parts[1]),
                                       int(parts[2]))
            score = float(parts[3])
            r_values = [float(v) for v in parts[4].split()]
            t_values = [float(v) for v in parts[5].split()]
            elapsed = float(parts[6])
        except ValueError:
            raise ParseError("line %d: malformed number" % lineno,
                             path=path, offset=lineno) from None
        if len(r_values) != 9:
            raise ParseError("line %d: R needs 9 values, got %d"
                             % (lineno, len(r_values)),
                             path=path, offset=lineno)
        if len(t_values) != 3:
            raise ParseError("line %d: t needs 3 values, got %d"
                             % (lineno, len(t_values)),
                             path=path, offset=lineno)
        records.append(ResultRecord(scene_id, im_id, obj_id, score,
                                    pose_from_values(r_values, t_values),
                                    elapsed))
    return records


def load_depth_png(path, depth_scale):
    """Read a 16-bit grayscale depth PNG; returns per-pixel Z in mm.

    Stored values are multiplied by `depth_scale`; zeros mean no reading.
    Pass the result through depth_to_distance before VSD.
    """
    arr = np.asarray(Image.open(path), dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError("expected single-channel depth image: %s"
                              % (path,))
    return arr * float(depth_scale)


def save_depth_png(path, depth_mm, depth_scale):
    """Write per-pixel Z (mm) as 16-bit grayscale, stored value = Z/scale."""
    depth = np.asarray(depth_mm, dtype=np.float64)
    stored = np.rint(depth / float(depth_scale))
    if stored.max(initial=0.0) > 0xFFFF:
        raise ValidationError("depth exceeds the 16-bit range at this scale")
    Image.fromarray(stored.astype(np.uint16)).save(path)
