"""Readers and writers for the on-disk formats.

- Rasters: binary PGM ("P5"). Depth uses maxval 65535 with values in
  millimeters (0 = invalid); masks use maxval 65535 with values = segment id
  (0 = background); grayscale images use maxval 255. PGM sample words are
  big-endian per the format definition.
- Meshes: ASCII PLY with per-vertex (x, y, z, nx, ny, nz) and triangular faces.
- Embeddings: "EMB1" binary. Header: 4-byte magic, u32 dimension, u32 record
  count; then per record u32 frame, u32 segment id, and `dimension` float32
  values. All integers and floats little-endian. A text-prompt bank uses
  frame = 0xFFFFFFFF, segment id = class index, and a sidecar JSON list of
  class names at <path>.json.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import LoadError

TEXT_BANK_FRAME = 0xFFFFFFFF
_EMB_MAGIC = b"EMB1"


def _pgm_tokens(data: bytes, path):
    """Yield header tokens, skipping '#' comments, and the payload offset."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise LoadError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1  # single whitespace byte after maxval


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM; returns uint8 (maxval <= 255) or uint16 (H, W)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    tokens, offset = _pgm_tokens(data, path)
    if tokens[0] != b"P5":
        raise LoadError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise LoadError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0 or not (0 < maxval < 65536):
        raise LoadError(f"{path}: bad PGM dimensions {width}x{height} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height
    payload = data[offset : offset + n * dtype.itemsize]
    if len(payload) != n * dtype.itemsize:
        raise LoadError(f"{path}: PGM payload truncated")
    raster = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return raster.astype(np.uint16) if maxval > 255 else raster.copy()


def write_pgm(path, raster: np.ndarray, maxval: int = 65535) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {raster.shape}")
    if raster.max(initial=0) > maxval:
        raise ValueError(f"raster values exceed maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{raster.shape[1]} {raster.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + raster.astype(dtype).tobytes())


def read_ply(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read an ASCII PLY mesh; returns (vertices, normals, faces)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise LoadError(f"{path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise LoadError(f"{path}: missing 'ply' magic")

    n_vertices = n_faces = None
    vertex_props = []
    current = None
    body_at = None
    for i, line in enumerate(lines[1:], start=1):
        words = line.split()
        if not words or words[0] == "comment":
            continue
        if words[0] == "format":
            if words[1] != "ascii":
                raise LoadError(f"{path}: only ASCII PLY is supported")
        elif words[0] == "element":
            current = words[1]
            if current == "vertex":
                n_vertices = int(words[2])
            elif current == "face":
                n_faces = int(words[2])
        elif words[0] == "property" and current == "vertex" and words[1] != "list":
            vertex_props.append(words[2])
        elif words[0] == "end_header":
            body_at = i + 1
            break
    if body_at is None or n_vertices is None or n_faces is None:
        raise LoadError(f"{path}: incomplete PLY header")
    needed = ["x", "y", "z", "nx", "ny", "nz"]
    if vertex_props[: len(needed)] != needed:
        raise LoadError(f"{path}: vertex properties must start with {needed}, got {vertex_props}")

    body = lines[body_at:]
    if len(body) < n_vertices + n_faces:
        raise LoadError(f"{path}: PLY body truncated")
    try:
        vdata = np.array([body[i].split() for i in range(n_vertices)], dtype=np.float64)
        faces = np.zeros((n_faces, 3), dtype=np.int64)
        for i in range(n_faces):
            words = body[n_vertices + i].split()
            if int(words[0]) != 3:
                raise LoadError(f"{path}: face {i} is not a triangle")
            faces[i] = [int(w) for w in words[1:4]]
    except (ValueError, IndexError) as exc:
        raise LoadError(f"{path}: malformed PLY body") from exc
    if vdata.size and vdata.shape[1] < 6:
        raise LoadError(f"{path}: vertex rows need 6 values, got {vdata.shape[1]}")
    vdata = vdata.reshape(n_vertices, -1)
    if n_faces and faces.size and (faces.min() < 0 or faces.max() >= n_vertices):
        raise LoadError(f"{path}: face index out of range")
    return vdata[:, 0:3].copy(), vdata[:, 3:6].copy(), faces


def write_ply(path, vertices: np.ndarray, normals: np.ndarray, faces: np.ndarray) -> None:
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(vertices) != len(normals):
        raise ValueError("vertex and normal counts differ")
    out = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(vertices)}",
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for p, n in zip(vertices, normals):
        out.append(f"{p[0]:.8g} {p[1]:.8g} {p[2]:.8g} {n[0]:.8g} {n[1]:.8g} {n[2]:.8g}")
    for f in faces:
        out.append(f"3 {f[0]} {f[1]} {f[2]}")
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")


def read_embeddings(path) -> tuple[int, list[tuple[int, int, np.ndarray]]]:
    """Read an EMB1 file; returns (dimension, [(frame, segment id, vector)])."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    if data[:4] != _EMB_MAGIC:
        raise LoadError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 12:
        raise LoadError(f"{path}: truncated header")
    dim, count = struct.unpack_from("<II", data, 4)
    if dim == 0:
        raise LoadError(f"{path}: zero embedding dimension")
    rec_size = 8 + 4 * dim
    if len(data) != 12 + count * rec_size:
        raise LoadError(f"{path}: expected {12 + count * rec_size} bytes, got {len(data)}")
    records = []
    for i in range(count):
        off = 12 + i * rec_size
        frame, seg = struct.unpack_from("<II", data, off)
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off + 8).astype(np.float64)
        if not np.isfinite(vec).all():
            raise LoadError(f"{path}: non-finite vector in record {i}")
        records.append((frame, seg, vec))
    return dim, records


def write_embeddings(path, dim: int, records) -> None:
    chunks = [_EMB_MAGIC, struct.pack("<II", dim, len(records))]
    for frame, seg, vec in records:
        vec = np.asarray(vec, dtype="<f4").reshape(dim)
        chunks.append(struct.pack("<II", frame, seg) + vec.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def sidecar_path(bank_path) -> Path:
    return Path(str(bank_path) + ".json")


def read_class_names(bank_path) -> list[str]:
    path = sidecar_path(bank_path)
    try:
        names = json.loads(path.read_text())
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: malformed JSON sidecar") from exc
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise LoadError(f"{path}: sidecar must be a JSON list of class names")
    return names
