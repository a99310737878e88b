"""Scene description, ray casting, visibility baking and the ``key = value`` scene format.

Scene file schema (one assignment per line, ``#`` starts a comment)::

    camera.position = 0 0 3        # eye point
    camera.look_at  = 0 0 0
    camera.up       = 0 1 0
    camera.fov      = 40           # vertical field of view, degrees
    camera.width    = 64
    camera.height   = 64
    background      = 0 0 0
    env             = probe.pfm    # or procedural:sky|studio|bands, constant:<value>
    material.<name>.model    = phong | lambertian
    material.<name>.diffuse  = r g b  (or one value)
    material.<name>.specular = r g b
    material.<name>.exponent = 20
    object.<i>.type     = sphere | mesh | quad
    object.<i>.material = matte | glossy | mirror-ish | <name>
    object.<i>.center / radius          (sphere)
    object.<i>.path / translate / scale (mesh, OBJ relative to the scene file)
    object.<i>.corner / edge1 / edge2 / subdiv   (quad, subdiv^2 cells)
    options.K | n | D | mode | start_level

``options.K`` accepts ``full``. Paths are resolved against the scene file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .brdf import PRESETS, Material
from .fixtures import grid_directions
from .haar2d import LatLongMap

EPS_RAY = 1e-4


class SceneConfigError(ValueError):
    """Malformed scene file; ``line`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass
class Camera:
    """Pinhole camera with a vertical field of view in degrees."""

    position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 3.0]))
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov: float = 40.0
    width: int = 64
    height: int = 64

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if not 0.0 < self.fov < 180.0:
            raise ValueError("fov must lie in (0, 180) degrees")
        fwd = self.look_at - self.position
        if np.linalg.norm(fwd) == 0 or np.linalg.norm(np.cross(fwd, self.up)) < 1e-12:
            raise ValueError("camera look direction is degenerate or parallel to up")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward)."""
        fwd = _unit(self.look_at - self.position)
        right = _unit(np.cross(fwd, self.up))
        return right, np.cross(right, fwd), fwd

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origins and unit directions for every pixel center, row-major, shape ``(H*W, 3)``."""
        right, up, fwd = self.basis()
        half = np.tan(np.radians(self.fov) / 2.0)
        aspect = self.width / self.height
        x = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * half * aspect
        y = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * half
        yy, xx = np.meshgrid(y, x, indexing="ij")
        dirs = fwd + xx[..., None] * right + yy[..., None] * up
        dirs = _unit(dirs.reshape(-1, 3))
        return np.broadcast_to(self.position, dirs.shape).copy(), dirs

    def project(self, point) -> tuple[float, float]:
        """Fractional (row, col) pixel coordinates of a world point."""
        right, up, fwd = self.basis()
        d = np.asarray(point, dtype=np.float64) - self.position
        depth = d @ fwd
        half = np.tan(np.radians(self.fov) / 2.0)
        x = (d @ right) / depth / (half * self.width / self.height)
        y = (d @ up) / depth / half
        return (1.0 - y) * self.height / 2.0 - 0.5, (x + 1.0) * self.width / 2.0 - 0.5


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    material: str = "matte"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass
class Mesh:
    """Triangle mesh with unit per-vertex normals."""

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    material: str = "matte"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face references a missing vertex")
        if self.normals is None:
            self.normals = vertex_normals(self.vertices, self.faces)
        self.normals = _unit(np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))
        if self.normals.shape != self.vertices.shape:
            raise ValueError("need one normal per vertex")


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals."""
    tri = vertices[faces]
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    out = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    length = np.linalg.norm(out, axis=1, keepdims=True)
    out = np.where(length > 0, out / np.where(length > 0, length, 1.0), np.array([0.0, 1.0, 0.0]))
    return out


def quad_mesh(corner, edge1, edge2, material: str = "matte", subdiv: int = 1) -> Mesh:
    """Parallelogram split into ``subdiv x subdiv`` cells of two triangles each."""
    if subdiv < 1:
        raise ValueError("subdiv must be >= 1")
    corner, edge1, edge2 = (np.asarray(v, dtype=np.float64) for v in (corner, edge1, edge2))
    s = np.linspace(0.0, 1.0, subdiv + 1)
    a, b = np.meshgrid(s, s, indexing="ij")
    verts = corner + a.reshape(-1, 1) * edge1 + b.reshape(-1, 1) * edge2
    i, j = np.meshgrid(np.arange(subdiv), np.arange(subdiv), indexing="ij")
    v00 = (i * (subdiv + 1) + j).ravel()
    v10, v01, v11 = v00 + subdiv + 1, v00 + 1, v00 + subdiv + 2
    faces = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    normal = _unit(np.cross(edge1, edge2))
    return Mesh(verts, faces, np.tile(normal, (len(verts), 1)), material)


@dataclass
class Hits:
    """Nearest intersections for a ray batch; ``obj`` is -1 on a miss."""

    t: np.ndarray
    obj: np.ndarray
    prim: np.ndarray
    bary: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return self.obj >= 0


@dataclass
class Scene:
    """Objects are spheres first, then meshes, in their listed order."""

    camera: Camera = field(default_factory=Camera)
    spheres: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    materials: dict = field(default_factory=lambda: dict(PRESETS))
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    env: str = "constant:1"
    options: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        self.background = np.broadcast_to(np.asarray(self.background, dtype=np.float64), (3,)).copy()
        for obj in self.objects:
            if obj.material not in self.materials:
                raise ValueError(f"unknown material {obj.material!r}")

    @property
    def objects(self) -> list:
        return list(self.spheres) + list(self.meshes)

    def material_of(self, obj: int) -> Material:
        return self.materials[self.objects[obj].material]

    # -- intersection -------------------------------------------------------

    def intersect(self, origins: np.ndarray, dirs: np.ndarray, t_min: float = EPS_RAY,
                  skip: int | None = None, any_hit: bool = False) -> Hits:
        """Nearest hit with ``t > t_min``; ``skip`` ignores one object."""
        count = len(dirs)
        t_best = np.full(count, np.inf)
        obj = np.full(count, -1, dtype=np.int64)
        prim = np.zeros(count, dtype=np.int64)
        bary = np.zeros((count, 2))
        for k, s in enumerate(self.spheres):
            if k == skip:
                continue
            t = _ray_sphere(origins, dirs, s.center, s.radius, t_min)
            closer = t < t_best
            t_best[closer], obj[closer] = t[closer], k
        for m_idx, mesh in enumerate(self.meshes):
            k = len(self.spheres) + m_idx
            if k == skip or not len(mesh.faces):
                continue
            cand = np.flatnonzero(_ray_box(origins, dirs, mesh.vertices.min(0), mesh.vertices.max(0), t_best))
            if not len(cand):
                continue
            t, face, uv = _ray_triangles(origins[cand], dirs[cand], mesh.vertices[mesh.faces], t_min)
            closer = t < t_best[cand]
            sel = cand[closer]
            t_best[sel], obj[sel] = t[closer], k
            prim[sel], bary[sel] = face[closer], uv[closer]
        return Hits(t_best, obj, prim, bary)

    def shading_normals(self, origins, dirs, hits: Hits) -> tuple[np.ndarray, np.ndarray]:
        """Hit points and unit (interpolated) normals for the hit rays."""
        sel = hits.mask
        points = origins[sel] + hits.t[sel, None] * dirs[sel]
        normals = np.zeros_like(points)
        objs = hits.obj[sel]
        for k, s in enumerate(self.spheres):
            on = objs == k
            normals[on] = (points[on] - s.center) / s.radius
        for m_idx, mesh in enumerate(self.meshes):
            on = objs == len(self.spheres) + m_idx
            if not on.any():
                continue
            f = mesh.faces[hits.prim[sel][on]]
            u, v = hits.bary[sel][on].T
            nrm = mesh.normals
            normals[on] = (1 - u - v)[:, None] * nrm[f[:, 0]] + u[:, None] * nrm[f[:, 1]] + v[:, None] * nrm[f[:, 2]]
        return points, _unit(normals)

    def nearest_vertex(self, obj: int, prim: int, bary) -> int:
        mesh = self.meshes[obj - len(self.spheres)]
        u, v = bary
        weights = np.array([1 - u - v, u, v])
        return int(mesh.faces[prim][int(np.argmax(weights))])


def _ray_sphere(o, d, center, radius, t_min):
    oc = o - center
    b = np.einsum("ij,ij->i", oc, d)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t0, t1 = -b - root, -b + root
    t = np.where(t0 > t_min, t0, np.where(t1 > t_min, t1, np.inf))
    return np.where(disc >= 0.0, t, np.inf)


def _ray_box(o, d, lo, hi, t_max, pad: float = 1e-9):
    """Rays that enter the padded box before ``t_max``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (lo - pad - o) * inv
        t1 = (hi + pad - o) * inv
    near = np.nanmax(np.minimum(t0, t1), axis=1)
    far = np.nanmin(np.maximum(t0, t1), axis=1)
    inside = np.all((o >= lo - pad) & (o <= hi + pad), axis=1)
    return inside | ((near <= far) & (far >= 0.0) & (near < t_max))


def _ray_triangles(o, d, tris, t_min, chunk: int = 256):
    """Moller-Trumbore over all triangles, chunked to bound memory."""
    count = len(d)
    t_best = np.full(count, np.inf)
    face = np.zeros(count, dtype=np.int64)
    uv = np.zeros((count, 2))
    for start in range(0, len(tris), chunk):
        tri = tris[start:start + chunk]
        v0, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
        p = np.cross(d[:, None, :], e2[None])
        det = np.einsum("rtk,tk->rt", p, e1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = o[:, None, :] - v0[None]
        u = np.einsum("rtk,rtk->rt", s, p) * inv
        q = np.cross(s, e1[None])
        v = np.einsum("rk,rtk->rt", d, q) * inv
        t = np.einsum("tk,rtk->rt", e2, q) * inv
        valid = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > t_min)
        t = np.where(valid, t, np.inf)
        best = np.argmin(t, axis=1)
        tb = t[np.arange(count), best]
        closer = tb < t_best
        t_best[closer] = tb[closer]
        face[closer] = best[closer] + start
        uv[closer, 0] = u[np.arange(count), best][closer]
        uv[closer, 1] = v[np.arange(count), best][closer]
    return t_best, face, uv


def bake_visibility(scene: Scene, point, normal, n: int, owner: int | None = None) -> LatLongMap:
    """Binary visibility over global directions at ``point`` (1 = unoccluded).

    One ray per texel center. A sphere that owns the point cannot occlude
    its own upper hemisphere, so it is skipped; the lower hemisphere is
    zeroed by the cosine clamp of the BRDF anyway.
    """
    dirs = grid_directions(n).reshape(-1, 3)
    origins = np.broadcast_to(np.asarray(point, dtype=np.float64), dirs.shape)
    skip = owner if owner is not None and owner < len(scene.spheres) else None
    hits = scene.intersect(origins, dirs, EPS_RAY, skip=skip)
    vis = (~hits.mask).astype(np.float64).reshape(1 << n, 1 << n)
    return LatLongMap(vis[None])


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------


def _floats(value: str, count: int | None, line: int, key: str) -> np.ndarray:
    try:
        vals = np.array([float(x) for x in value.split()])
    except ValueError:
        raise SceneConfigError(f"{key}: expected numbers, got {value!r}", line) from None
    if count is not None and len(vals) != count:
        if count == 3 and len(vals) == 1:
            return np.repeat(vals, 3)
        raise SceneConfigError(f"{key}: expected {count} numbers, got {len(vals)}", line)
    return vals


def _int(value: str, line: int, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise SceneConfigError(f"{key}: expected an integer, got {value!r}", line) from None


OPTION_KEYS = {"K", "n", "D", "mode", "start_level"}


def parse_scene(text: str, base_dir: str | Path = ".") -> Scene:
    """Build a :class:`Scene` from ``key = value`` text; errors carry line numbers."""
    base_dir = Path(base_dir)
    cam: dict = {}
    objects: dict[int, dict] = {}
    mats: dict[str, dict] = {}
    background = np.zeros(3)
    env = "constant:1"
    options: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if parts[0] == "camera" and len(parts) == 2:
            name = parts[1]
            if name in ("position", "look_at", "up"):
                cam[name] = _floats(value, 3, lineno, key)
            elif name == "fov":
                cam[name] = float(_floats(value, 1, lineno, key)[0])
            elif name in ("width", "height"):
                cam[name] = _int(value, lineno, key)
            else:
                raise SceneConfigError(f"unknown camera key {key!r}", lineno)
        elif parts == ["background"]:
            background = _floats(value, 3, lineno, key)
        elif parts == ["env"]:
            env = value
        elif parts[0] == "options" and len(parts) == 2:
            if parts[1] not in OPTION_KEYS:
                raise SceneConfigError(f"unknown option {key!r}", lineno)
            if parts[1] == "mode":
                if value not in ("haar", "spatial"):
                    raise SceneConfigError("options.mode must be haar or spatial", lineno)
                options["mode"] = value
            elif parts[1] == "K" and value == "full":
                options["K"] = None
            else:
                options[parts[1]] = _int(value, lineno, key)
        elif parts[0] == "material" and len(parts) == 3:
            mats.setdefault(parts[1], {"_line": lineno})[parts[2]] = (value, lineno)
        elif parts[0] == "object" and len(parts) == 3:
            idx = _int(parts[1], lineno, key)
            objects.setdefault(idx, {"_line": lineno})[parts[2]] = (value, lineno)
        else:
            raise SceneConfigError(f"unknown key {key!r}", lineno)

    materials = dict(PRESETS)
    for name, spec in mats.items():
        kw = {}
        for attr, entry in spec.items():
            if attr == "_line":
                continue
            value, lineno = entry
            if attr == "model":
                kw["model"] = value
            elif attr in ("diffuse", "specular"):
                kw[attr] = tuple(_floats(value, 3, lineno, f"material.{name}.{attr}"))
            elif attr == "exponent":
                kw[attr] = float(_floats(value, 1, lineno, f"material.{name}.exponent")[0])
            else:
                raise SceneConfigError(f"unknown material key {attr!r}", lineno)
        try:
            materials[name] = Material(**kw)
        except ValueError as exc:
            raise SceneConfigError(f"material {name!r}: {exc}", spec["_line"]) from None

    spheres, meshes = [], []
    for idx in sorted(objects):
        spec = objects[idx]
        first = spec["_line"]
        get = lambda k, default=None: spec.get(k, (default, first))  # noqa: E731
        kind, _ = get("type")
        material, mline = get("material", "matte")
        if material not in materials:
            raise SceneConfigError(f"unknown material {material!r}", mline)
        try:
            if kind == "sphere":
                c, cl = get("center", "0 0 0")
                r, rl = get("radius", "1")
                spheres.append(Sphere(_floats(c, 3, cl, "center"), float(_floats(r, 1, rl, "radius")[0]), material))
            elif kind == "mesh":
                path, pl = get("path")
                if path is None:
                    raise SceneConfigError(f"object {idx} needs a path", first)
                from .imageio import read_obj

                verts, normals, faces = read_obj(base_dir / path)
                s, sl = get("scale", "1")
                t, tl = get("translate", "0 0 0")
                verts = verts * _floats(s, 3, sl, "scale") + _floats(t, 3, tl, "translate")
                meshes.append(Mesh(verts, faces, normals, material))
            elif kind == "quad":
                vals = [_floats(get(k, "0 0 0")[0], 3, get(k)[1], k) for k in ("corner", "edge1", "edge2")]
                sub, subl = get("subdiv", "1")
                meshes.append(quad_mesh(*vals, material, _int(sub, subl, "subdiv")))
            else:
                raise SceneConfigError(f"object {idx}: type must be sphere, mesh or quad", first)
        except OSError as exc:
            raise SceneConfigError(f"object {idx}: cannot read mesh ({exc})", first) from None
        except ValueError as exc:
            if isinstance(exc, SceneConfigError):
                raise
            raise SceneConfigError(f"object {idx}: {exc}", first) from None
    try:
        camera = Camera(**cam)
    except ValueError as exc:
        raise SceneConfigError(f"camera: {exc}") from None
    return Scene(camera, spheres, meshes, materials, background, env, options, base_dir)


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    return parse_scene(path.read_text(), path.parent)
