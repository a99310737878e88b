"""PFM, PPM and OBJ-subset readers and writers.

Images are ``(height, width, channels)`` float arrays with row 0 at the top.
PFM stores rows bottom-to-top as little-endian float32 (scale -1.0); PPM
previews are 8-bit with a 2.2 gamma.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .haar2d import LatLongMap


class ImageFormatError(ValueError):
    pass


def write_pfm(path: str | Path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ImageFormatError(f"PFM holds 1 or 3 channels, got {c}")
    head = f"{'PF' if c == 3 else 'Pf'}\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(img[::-1], dtype="<f4").tobytes()
    Path(path).write_bytes(head + body)


def _header_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated header")
        tokens.append(blob[start:pos])
    return tokens, pos + 1


def read_pfm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    (magic, w, h, scale), pos = _header_tokens(blob, 4)
    if magic not in (b"PF", b"Pf"):
        raise ImageFormatError(f"{path}: not a PFM file")
    c = 3 if magic == b"PF" else 1
    w, h, scale = int(w), int(h), float(scale)
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(blob[pos:], dtype=dtype)
    if data.size != w * h * c:
        raise ImageFormatError(f"{path}: expected {w * h * c} floats, found {data.size}")
    return data.reshape(h, w, c)[::-1].astype(np.float64)


def write_ppm(path: str | Path, image: np.ndarray, gamma: float = 2.2) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[-1] == 1:
        img = np.repeat(img, 3, axis=-1)
    h, w, _ = img.shape
    enc = np.round(255.0 * np.clip(img, 0.0, 1.0) ** (1.0 / gamma)).astype(np.uint8)
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + enc.tobytes())


def read_ppm(path: str | Path, gamma: float = 2.2) -> np.ndarray:
    blob = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _header_tokens(blob, 4)
    if magic != b"P6" or int(maxval) != 255:
        raise ImageFormatError(f"{path}: only binary 8-bit PPM (P6) is supported")
    w, h = int(w), int(h)
    data = np.frombuffer(blob[pos:pos + w * h * 3], dtype=np.uint8)
    if data.size != w * h * 3:
        raise ImageFormatError(f"{path}: truncated pixel data")
    return (data.reshape(h, w, 3) / 255.0) ** gamma


def read_image(path: str | Path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".ppm":
        return read_ppm(path)
    raise ImageFormatError(f"{path}: unsupported image type {suffix!r} (use .pfm or .ppm)")


def image_to_map(image: np.ndarray) -> LatLongMap:
    """Lat-long image (rows = elevation from the top) as a map."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    return LatLongMap(np.moveaxis(img, -1, 0).copy())


def map_to_image(m: LatLongMap) -> np.ndarray:
    return np.moveaxis(m.samples, 0, -1)


def read_obj(path: str | Path) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Vertices, per-vertex normals (or None) and triangle indices of an OBJ subset.

    Supports ``v``, ``vn`` and ``f`` records; polygons are fanned into
    triangles. A normal referenced by a face corner is attached to that
    corner's vertex.
    """
    verts, vnorms, faces = [], [], []
    corner_normals: dict[int, int] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "vn":
                vnorms.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                idx = []
                for corner in parts[1:]:
                    fields = corner.split("/")
                    vi = int(fields[0])
                    vi = vi - 1 if vi > 0 else len(verts) + vi
                    idx.append(vi)
                    if len(fields) == 3 and fields[2]:
                        ni = int(fields[2])
                        corner_normals[vi] = ni - 1 if ni > 0 else len(vnorms) + ni
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
        except (ValueError, IndexError):
            raise ImageFormatError(f"{path}:{lineno}: malformed {tag!r} record") from None
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise ImageFormatError(f"{path}: face index out of range")
    normals = None
    if vnorms and len(corner_normals) == len(v):
        vn = np.array(vnorms, dtype=np.float64)
        normals = vn[[corner_normals[i] for i in range(len(v))]]
    return v, normals, f


def write_obj(path: str | Path, vertices, faces, normals=None) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(vertices, dtype=np.float64).tolist()]
    if normals is not None:
        lines += [f"vn {x!r} {y!r} {z!r}" for x, y, z in np.asarray(normals, dtype=np.float64).tolist()]
        lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in faces]
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    Path(path).write_text("\n".join(lines) + "\n")
