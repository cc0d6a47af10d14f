"""OBJ and PLY mesh readers/writers.

OBJ carries positions and faces only. PLY carries positions, faces and the
optional per-vertex attributes: normals (``nx ny nz``), colors
(``red green blue``, uchar) and the 8-bit ``part_label`` property. Exact
header tokens are documented in docs/formats.md. Any byte stream either
yields a valid mesh or raises a structured error.
"""
from __future__ import annotations

import io
import os

import numpy as np

from .errors import MeshFormatError, MeshValidationError
from .mesh import Mesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_mesh(path) -> Mesh:
    """Load an OBJ or PLY file (format chosen by extension, PLY by default)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MeshFormatError("mesh file not found", path=path)
    if path.lower().endswith(".obj"):
        return load_obj(path)
    return load_ply(path)


def save_mesh(mesh: Mesh, path, ascii: bool = False) -> None:
    path = os.fspath(path)
    if path.lower().endswith(".obj"):
        save_obj(mesh, path)
    else:
        save_ply(mesh, path, ascii=ascii)


# ---------------------------------------------------------------------------
# OBJ


def load_obj(path) -> Mesh:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise MeshFormatError(f"cannot read file: {exc}", path=path) from exc
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 4:
                raise MeshFormatError("vertex line needs 3 coordinates", path, lineno)
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError as exc:
                raise MeshFormatError(f"bad vertex coordinate: {exc}", path, lineno) from exc
        elif kind == "f":
            idx = []
            for tok in tokens[1:]:
                head = tok.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshFormatError(f"bad face index {tok!r}", path, lineno) from exc
                if i == 0:
                    raise MeshFormatError("OBJ face indices are 1-based, got 0", path, lineno)
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            if len(idx) < 3:
                raise MeshFormatError("face needs at least 3 indices", path, lineno)
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
        # vn/vt/usemtl/etc. are ignored
    return Mesh(vertices=np.array(vertices, dtype=np.float64).reshape(-1, 3),
                faces=np.array(faces, dtype=np.int32).reshape(-1, 3))


def save_obj(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# PLY


class _PlyProperty:
    __slots__ = ("name", "dtype", "is_list", "count_dtype")

    def __init__(self, name, dtype, is_list=False, count_dtype=None):
        self.name = name
        self.dtype = dtype
        self.is_list = is_list
        self.count_dtype = count_dtype


class _PlyElement:
    __slots__ = ("name", "count", "properties")

    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties: list[_PlyProperty] = []


def _parse_ply_header(data: bytes, path):
    end = data.find(b"end_header")
    if end < 0:
        raise MeshFormatError("missing end_header", path=path)
    nl = data.find(b"\n", end)
    if nl < 0:
        raise MeshFormatError("end_header line not terminated", path=path)
    body_offset = nl + 1
    header = data[:body_offset].decode("ascii", errors="replace")
    lines = header.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("not a PLY file (missing 'ply' magic)", path, line=1)
    fmt = None
    elements: list[_PlyElement] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] == "comment" or tokens[0] == "obj_info":
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] not in (
                "ascii", "binary_little_endian", "binary_big_endian"
            ):
                raise MeshFormatError(f"unsupported format {raw!r}", path, lineno)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise MeshFormatError("malformed element line", path, lineno)
            try:
                elements.append(_PlyElement(tokens[1], int(tokens[2])))
            except ValueError as exc:
                raise MeshFormatError("bad element count", path, lineno) from exc
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError("property before any element", path, lineno)
            try:
                if tokens[1] == "list":
                    prop = _PlyProperty(
                        tokens[4], _PLY_TYPES[tokens[3]],
                        is_list=True, count_dtype=_PLY_TYPES[tokens[2]],
                    )
                else:
                    prop = _PlyProperty(tokens[2], _PLY_TYPES[tokens[1]])
            except (KeyError, IndexError) as exc:
                raise MeshFormatError(f"bad property line {raw!r}", path, lineno) from exc
            elements[-1].properties.append(prop)
        elif tokens[0] == "end_header":
            break
        else:
            raise MeshFormatError(f"unknown header token {tokens[0]!r}", path, lineno)
    if fmt is None:
        raise MeshFormatError("missing format line", path=path)
    return fmt, elements, body_offset


def load_ply(path) -> Mesh:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise MeshFormatError(f"cannot read file: {exc}", path=path) from exc
    fmt, elements, offset = _parse_ply_header(data, path)
    if fmt == "ascii":
        columns, face_lists = _read_ply_ascii(data, offset, elements, path)
    else:
        byte_order = "<" if fmt == "binary_little_endian" else ">"
        columns, face_lists = _read_ply_binary(data, offset, elements, byte_order, path)
    int_typed = {
        p.name
        for e in elements if e.name == "vertex"
        for p in e.properties if not p.dtype.startswith("f")
    }
    return _assemble_ply_mesh(columns, face_lists, int_typed, path)


def _read_ply_ascii(data, offset, elements, path):
    text = data[offset:].decode("ascii", errors="replace")
    header_lines = data[:offset].count(b"\n")
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    cursor = 0
    columns = {}
    face_lists = None
    for elem in elements:
        if cursor + elem.count > len(rows):
            raise MeshFormatError(
                f"element {elem.name!r} declares {elem.count} rows, file has fewer",
                path, line=header_lines + cursor + 1,
            )
        chunk = rows[cursor:cursor + elem.count]
        cursor += elem.count
        list_props = [p for p in elem.properties if p.is_list]
        if elem.name == "face" and list_props:
            face_lists = []
            for i, row in enumerate(chunk):
                try:
                    n = int(row[0])
                    face_lists.append([int(t) for t in row[1:1 + n]])
                except (ValueError, IndexError) as exc:
                    raise MeshFormatError(
                        "malformed face row", path, line=header_lines + cursor - elem.count + i + 1
                    ) from exc
        elif elem.name == "vertex":
            if list_props:
                raise MeshFormatError("list properties on vertex element unsupported", path)
            names = [p.name for p in elem.properties]
            try:
                arr = np.array([[float(t) for t in row[:len(names)]] for row in chunk],
                               dtype=np.float64)
            except ValueError as exc:
                raise MeshFormatError("malformed vertex row", path,
                                      line=header_lines + cursor - elem.count + 1) from exc
            if arr.size and arr.shape[1] != len(names):
                raise MeshFormatError("vertex row width mismatch", path)
            for j, name in enumerate(names):
                columns[name] = arr[:, j] if arr.size else np.zeros(0)
        # other elements skipped
    return columns, face_lists


def _read_ply_binary(data, offset, elements, byte_order, path):
    columns = {}
    face_lists = None
    pos = offset
    for elem in elements:
        list_props = [p for p in elem.properties if p.is_list]
        if not list_props:
            dtype = np.dtype([(p.name, byte_order + p.dtype) for p in elem.properties])
            nbytes = dtype.itemsize * elem.count
            if pos + nbytes > len(data):
                raise MeshFormatError(
                    f"element {elem.name!r} truncated", path, offset=pos
                )
            rows = np.frombuffer(data, dtype=dtype, count=elem.count, offset=pos)
            pos += nbytes
            if elem.name == "vertex":
                for p in elem.properties:
                    columns[p.name] = rows[p.name].astype(np.float64)
        elif elem.name == "face" and len(list_props) == 1 and len(elem.properties) == 1:
            prop = list_props[0]
            count_dt = np.dtype(byte_order + prop.count_dtype)
            item_dt = np.dtype(byte_order + prop.dtype)
            face_lists = []
            for i in range(elem.count):
                if pos + count_dt.itemsize > len(data):
                    raise MeshFormatError("face element truncated", path, offset=pos)
                n = int(np.frombuffer(data, count_dt, 1, pos)[0])
                pos += count_dt.itemsize
                if pos + n * item_dt.itemsize > len(data):
                    raise MeshFormatError("face element truncated", path, offset=pos)
                face_lists.append(
                    np.frombuffer(data, item_dt, n, pos).astype(np.int64).tolist()
                )
                pos += n * item_dt.itemsize
        else:
            # general list element: walk it to keep the cursor honest
            for _ in range(elem.count):
                for p in elem.properties:
                    if p.is_list:
                        count_dt = np.dtype(byte_order + p.count_dtype)
                        n = int(np.frombuffer(data, count_dt, 1, pos)[0])
                        pos += count_dt.itemsize + n * np.dtype(p.dtype).itemsize
                    else:
                        pos += np.dtype(p.dtype).itemsize
    return columns, face_lists


def _assemble_ply_mesh(columns, face_lists, int_typed, path) -> Mesh:
    for c in ("x", "y", "z"):
        if c not in columns:
            raise MeshFormatError(f"vertex element lacks property {c!r}", path=path)
    vertices = np.column_stack([columns["x"], columns["y"], columns["z"]])
    faces = []
    if face_lists:
        for lst in face_lists:
            if len(lst) < 3:
                raise MeshFormatError("face with fewer than 3 indices", path=path)
            for k in range(1, len(lst) - 1):
                faces.append([lst[0], lst[k], lst[k + 1]])
    normals = None
    if all(c in columns for c in ("nx", "ny", "nz")):
        normals = np.column_stack([columns["nx"], columns["ny"], columns["nz"]])
        lens = np.linalg.norm(normals, axis=1)
        # some exporters write unnormalized or zero normals; renormalize
        ok = lens > 1e-12
        normals[ok] = normals[ok] / lens[ok, None]
        normals[~ok] = (0.0, 0.0, 1.0)
    colors = None
    if all(c in columns for c in ("red", "green", "blue")):
        colors = np.column_stack([columns["red"], columns["green"], columns["blue"]])
        if all(c in int_typed for c in ("red", "green", "blue")):
            colors = colors / 255.0
    labels = None
    if "part_label" in columns:
        lab = columns["part_label"]
        if lab.size and (lab.min() < 0 or lab.max() > 255):
            raise MeshFormatError("part_label outside 8-bit range", path=path)
        labels = lab.astype(np.uint8)
    try:
        return Mesh(vertices=vertices,
                    faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
                    vertex_normals=normals, vertex_colors=colors,
                    vertex_labels=labels)
    except (ValueError, OverflowError) as exc:
        raise MeshValidationError(f"{path}: {exc}") from exc


def save_ply(mesh: Mesh, path, ascii: bool = False) -> None:
    """Write PLY; binary little-endian by default, positions as doubles."""
    buf = io.BytesIO()
    has_n = mesh.vertex_normals is not None
    has_c = mesh.vertex_colors is not None
    has_l = mesh.vertex_labels is not None
    header = ["ply",
              f"format {'ascii' if ascii else 'binary_little_endian'} 1.0",
              f"element vertex {mesh.n_vertices}",
              "property double x", "property double y", "property double z"]
    if has_n:
        header += ["property double nx", "property double ny", "property double nz"]
    if has_c:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    if has_l:
        header += ["property uchar part_label"]
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices",
               "end_header"]
    buf.write(("\n".join(header) + "\n").encode("ascii"))

    colors_u8 = None
    if has_c:
        colors_u8 = np.clip(np.rint(mesh.vertex_colors * 255.0), 0, 255).astype(np.uint8)
    if ascii:
        for i in range(mesh.n_vertices):
            parts = [f"{x:.17g}" for x in mesh.vertices[i]]
            if has_n:
                parts += [f"{x:.17g}" for x in mesh.vertex_normals[i]]
            if has_c:
                parts += [str(int(x)) for x in colors_u8[i]]
            if has_l:
                parts.append(str(int(mesh.vertex_labels[i])))
            buf.write((" ".join(parts) + "\n").encode("ascii"))
        for f in mesh.faces:
            buf.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))
    else:
        fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
        if has_n:
            fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
        if has_c:
            fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        if has_l:
            fields += [("part_label", "u1")]
        rows = np.zeros(mesh.n_vertices, dtype=np.dtype(fields))
        rows["x"], rows["y"], rows["z"] = mesh.vertices.T
        if has_n:
            rows["nx"], rows["ny"], rows["nz"] = mesh.vertex_normals.T
        if has_c:
            rows["red"], rows["green"], rows["blue"] = colors_u8.T
        if has_l:
            rows["part_label"] = mesh.vertex_labels
        buf.write(rows.tobytes())
        fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
        frows = np.zeros(mesh.n_faces, dtype=fdt)
        frows["n"] = 3
        frows["i"] = mesh.faces
        buf.write(frows.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())
