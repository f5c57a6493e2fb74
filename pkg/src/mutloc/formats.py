"""Plain-text file formats.

All formats are whitespace separated with ``#`` comments. Floats are
written with 17 significant digits so write -> read round trips exactly.

* trajectory: ``index x y yaw`` (SE(2)) or ``index x y z qw qx qy qz`` (SE(3))
* tensor: header ``C W H`` then C*W*H values, channel-major then width-major
* points: one ``x y z`` triple per line
* graph: ``VERTEX id robot idx x y yaw`` and
  ``EDGE kind from to zx zy zyaw w11 w22 w33`` (diagonal information)
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import FormatError
from .geometry import Pose2, Pose3

FORMAT_VERSION = "1"


def fmt(v: float) -> str:
    return f"{float(v):.17g}"


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _records(path):
    """Yield (line_number, fields) for non-empty, non-comment lines."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError("file not found", path) from None
    except OSError as exc:
        raise FormatError(f"cannot read file ({exc.strerror})", path) from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield n, line.split()


def _floats(fields, path, n) -> list[float]:
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise FormatError(f"expected numbers, got {' '.join(fields)!r}", path, n) from None
    if not all(np.isfinite(vals)):
        raise FormatError("non-finite value", path, n)
    return vals


# -- trajectories ------------------------------------------------------------


def read_trajectory(path) -> tuple[list[int], list]:
    """Return (indices, poses); poses are Pose2 or Pose3 depending on column count."""
    indices, poses = [], []
    width = None
    for n, fields in _records(path):
        if len(fields) not in (4, 8):
            raise FormatError(f"expected 4 or 8 columns, got {len(fields)}", path, n)
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise FormatError("mixed SE(2) and SE(3) rows", path, n)
        try:
            idx = int(fields[0])
        except ValueError:
            raise FormatError(f"bad index {fields[0]!r}", path, n) from None
        vals = _floats(fields[1:], path, n)
        if width == 4:
            poses.append(Pose2(*vals))
        else:
            x, y, z, qw, qx, qy, qz = vals
            if qw == qx == qy == qz == 0:
                raise FormatError("zero quaternion", path, n)
            r = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
            poses.append(Pose3(r, (x, y, z)))
        indices.append(idx)
    return indices, poses


def format_trajectory(poses, indices=None, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    if indices is None:
        indices = range(len(poses))
    for i, p in zip(indices, poses):
        if isinstance(p, Pose2):
            lines.append(f"{i} {fmt(p.x)} {fmt(p.y)} {fmt(p.yaw)}")
        else:
            qx, qy, qz, qw = Rotation.from_matrix(p.rotation).as_quat()
            t = p.translation
            lines.append(" ".join([str(i)] + [fmt(v) for v in (t[0], t[1], t[2], qw, qx, qy, qz)]))
    return "\n".join(lines) + "\n"


def write_trajectory(path, poses, indices=None, header: str | None = None) -> None:
    atomic_write_text(path, format_trajectory(poses, indices, header))


# -- tensors -----------------------------------------------------------------


def read_tensor(path) -> np.ndarray:
    recs = list(_records(path))
    if not recs:
        raise FormatError("empty tensor file", path)
    n0, head = recs[0]
    if len(head) < 3:
        raise FormatError("header must be 'C W H'", path, n0)
    try:
        c, w, h = (int(v) for v in head[:3])
    except ValueError:
        raise FormatError(f"bad header {' '.join(head)!r}", path, n0) from None
    values = _floats(head[3:], path, n0)
    for n, fields in recs[1:]:
        values.extend(_floats(fields, path, n))
    if len(values) != c * w * h:
        raise FormatError(f"expected {c * w * h} values for shape {c}x{w}x{h}, got {len(values)}", path)
    return np.array(values, dtype=np.float64).reshape(c, w, h)


def write_tensor(path, x) -> None:
    x = np.asarray(x, dtype=np.float64)
    c, w, h = x.shape
    lines = [f"{c} {w} {h}"]
    for ci in range(c):
        for wi in range(w):
            lines.append(" ".join(fmt(v) for v in x[ci, wi]))
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- robot model points ----------------------------------------------------------


def read_points(path) -> np.ndarray:
    pts = []
    for n, fields in _records(path):
        if len(fields) != 3:
            raise FormatError(f"expected 'x y z', got {len(fields)} columns", path, n)
        pts.append(_floats(fields, path, n))
    if not pts:
        raise FormatError("no points", path)
    return np.array(pts)


def write_points(path, points) -> None:
    lines = [" ".join(fmt(v) for v in p) for p in np.asarray(points, dtype=float)]
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- pose graphs ---------------------------------------------------------------


def format_graph(graph) -> str:
    lines = [f"# pose graph format {FORMAT_VERSION}"]
    for v in graph.vertices:
        p = v.pose
        lines.append(f"VERTEX {v.id} {v.robot} {v.idx} {fmt(p.x)} {fmt(p.y)} {fmt(p.yaw)}")
    for e in graph.edges:
        w = np.diag(e.info)
        z = e.z
        lines.append(
            f"EDGE {e.kind} {e.src} {e.dst} {fmt(z.x)} {fmt(z.y)} {fmt(z.yaw)} "
            f"{fmt(w[0])} {fmt(w[1])} {fmt(w[2])}"
        )
    return "\n".join(lines) + "\n"


def write_graph(path, graph) -> None:
    atomic_write_text(path, format_graph(graph))


def read_graph(path):
    from .posegraph import MUTUAL, ODOM, Edge, PoseGraph, Vertex

    vertices, edges = [], []
    for n, fields in _records(path):
        tag = fields[0]
        try:
            if tag == "VERTEX":
                if len(fields) != 7:
                    raise FormatError("VERTEX needs 'id robot idx x y yaw'", path, n)
                x, y, yaw = _floats(fields[4:], path, n)
                vertices.append(Vertex(int(fields[1]), fields[2], int(fields[3]), Pose2(x, y, yaw)))
            elif tag == "EDGE":
                if len(fields) != 10:
                    raise FormatError("EDGE needs 'kind from to zx zy zyaw w11 w22 w33'", path, n)
                if fields[1] not in (ODOM, MUTUAL):
                    raise FormatError(f"unknown edge kind {fields[1]!r}", path, n)
                zx, zy, zyaw, w1, w2, w3 = _floats(fields[4:], path, n)
                edges.append(Edge(fields[1], int(fields[2]), int(fields[3]), Pose2(zx, zy, zyaw), np.diag([w1, w2, w3])))
            else:
                raise FormatError(f"unknown record {tag!r}", path, n)
        except FormatError:
            raise
        except ValueError as exc:
            raise FormatError(str(exc), path, n) from None
    if not vertices:
        raise FormatError("graph has no vertices", path)
    try:
        return PoseGraph(vertices, edges)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
