"""Axis-aligned ray/box primitives and the random samplers built on them.

Positions are in millimeters; directions are dimensionless unit vectors.
Every sampler takes an explicit ``numpy.random.Generator`` so callers own
determinism end to end; nothing in this module keeps state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFaceError, InvalidLayoutError

AXES = ("x", "y", "z")
FACE_NAMES = ("x-", "x+", "y-", "y+", "z-", "z+")


def _as_vec3(v, name="vector"):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
    return arr


def unit(v):
    """Normalize a vector, raising on zero length."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass
class RectFace:
    """Planar rectangle spanned by two orthogonal edge vectors.

    The rectangle is ``origin + a*edge_u + b*edge_v`` for a, b in [0, 1].
    The unit normal is ``unit(edge_u x edge_v)``, so edge order fixes which
    side the face "looks at".
    """

    origin: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    normal: np.ndarray = field(init=False)

    def __post_init__(self):
        self.origin = _as_vec3(self.origin, "origin")
        self.edge_u = _as_vec3(self.edge_u, "edge_u")
        self.edge_v = _as_vec3(self.edge_v, "edge_v")
        lu = float(np.linalg.norm(self.edge_u))
        lv = float(np.linalg.norm(self.edge_v))
        if lu == 0.0 or lv == 0.0:
            raise DegenerateFaceError("zero-area rectangle")
        if abs(float(self.edge_u @ self.edge_v)) > 1e-9 * lu * lv:
            raise ValueError("edge_u and edge_v must be orthogonal")
        self.normal = unit(np.cross(self.edge_u, self.edge_v))

    @property
    def area(self) -> float:
        return float(np.linalg.norm(self.edge_u) * np.linalg.norm(self.edge_v))

    @property
    def center(self) -> np.ndarray:
        return self.origin + 0.5 * (self.edge_u + self.edge_v)


@dataclass
class DieBox:
    """Axis-aligned rectangular box standing in for one die."""

    min_corner: np.ndarray
    dimensions: np.ndarray
    id: str = ""

    def __post_init__(self):
        self.min_corner = _as_vec3(self.min_corner, "min_corner")
        self.dimensions = _as_vec3(self.dimensions, "dimensions")
        if not np.all(self.dimensions > 0.0):
            raise ValueError(f"box dimensions must be strictly positive, got {self.dimensions}")

    @property
    def max_corner(self) -> np.ndarray:
        return self.min_corner + self.dimensions

    @property
    def surface_area(self) -> float:
        dx, dy, dz = self.dimensions
        return 2.0 * float(dx * dy + dy * dz + dz * dx)

    def face(self, name: str) -> RectFace:
        """Return one face as a RectFace with outward-pointing normal."""
        b0 = self.min_corner
        dx, dy, dz = self.dimensions
        ex = np.array([dx, 0.0, 0.0])
        ey = np.array([0.0, dy, 0.0])
        ez = np.array([0.0, 0.0, dz])
        if name == "x-":
            return RectFace(b0, ez, ey)
        if name == "x+":
            return RectFace(b0 + ex, ey, ez)
        if name == "y-":
            return RectFace(b0, ex, ez)
        if name == "y+":
            return RectFace(b0 + ey, ez, ex)
        if name == "z-":
            return RectFace(b0, ey, ex)
        if name == "z+":
            return RectFace(b0 + ez, ex, ey)
        raise ValueError(f"unknown face name {name!r}; expected one of {FACE_NAMES}")

    def faces(self) -> dict[str, RectFace]:
        return {name: self.face(name) for name in FACE_NAMES}


@dataclass
class Ray:
    """Half-line with unit direction; ``t`` parameters are in mm."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.origin = _as_vec3(self.origin, "origin")
        self.direction = _as_vec3(self.direction, "direction")
        if abs(float(np.linalg.norm(self.direction)) - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit-norm within 1e-12")


@dataclass
class BoxHit:
    """Entry/exit parameters of a line-box intersection.

    ``t_enter`` may be negative when the ray origin is inside (or past) the
    box; callers that want forward hits only should filter on ``t_exit >= 0``.
    """

    t_enter: float
    t_exit: float
    entry_face: str
    exit_face: str


def ray_box_intersection(ray: Ray, box: DieBox) -> BoxHit | None:
    """Slab-method intersection of a ray with an axis-aligned box.

    Returns None when the supporting line misses the box. Grazing contacts
    (``t_enter == t_exit``) count as hits. Face ids are the ``FACE_NAMES``
    strings naming the plane crossed at each parameter.
    """
    o = ray.origin
    d = ray.direction
    b0 = box.min_corner
    b1 = box.max_corner
    t_lo = -np.inf
    t_hi = np.inf
    enter_axis = -1
    exit_axis = -1
    for k in range(3):
        dk = float(d[k])
        if dk == 0.0:
            if o[k] < b0[k] or o[k] > b1[k]:
                return None
            continue
        inv = 1.0 / dk
        t1 = (b0[k] - o[k]) * inv
        t2 = (b1[k] - o[k]) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_lo:
            t_lo = t1
            enter_axis = k
        if t2 < t_hi:
            t_hi = t2
            exit_axis = k
    if t_lo > t_hi or enter_axis < 0 or exit_axis < 0:
        return None
    enter_sign = "-" if d[enter_axis] > 0 else "+"
    exit_sign = "+" if d[exit_axis] > 0 else "-"
    return BoxHit(
        t_enter=float(t_lo),
        t_exit=float(t_hi),
        entry_face=AXES[enter_axis] + enter_sign,
        exit_face=AXES[exit_axis] + exit_sign,
    )


def sample_direction_isotropic(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Unit vectors uniform on the sphere; shape (3,) or (size, 3)."""
    n = 1 if size is None else int(size)
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    out = np.column_stack((r * np.cos(phi), r * np.sin(phi), z))
    return out[0] if size is None else out


def sample_direction_cos_zenith(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Downward-going unit vectors with zenith density proportional to cos(theta).

    theta is the angle from vertical, so p(theta, phi) ~ cos(theta) sin(theta)
    on the lower hemisphere and the vertical component is always negative.
    """
    n = 1 if size is None else int(size)
    c = np.sqrt(rng.uniform(0.0, 1.0, n))  # cos(theta), density 2c on [0, 1]
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    s = np.sqrt(np.maximum(1.0 - c * c, 0.0))
    out = np.column_stack((s * np.cos(phi), s * np.sin(phi), -c))
    return out[0] if size is None else out


def sample_point_on_face(face: RectFace, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Points uniform over the rectangle; shape (3,) or (size, 3)."""
    n = 1 if size is None else int(size)
    a = rng.uniform(0.0, 1.0, n)
    b = rng.uniform(0.0, 1.0, n)
    out = face.origin[None, :] + a[:, None] * face.edge_u[None, :] + b[:, None] * face.edge_v[None, :]
    return out[0] if size is None else out


@dataclass
class Layout:
    """A set of non-overlapping dies plus optional gap metadata (mm)."""

    dies: list[DieBox]
    gap_mm: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        ids = [d.id for d in self.dies]
        if len(set(ids)) != len(ids):
            raise InvalidLayoutError(f"duplicate die ids in layout: {ids}")
        for i in range(len(self.dies)):
            for j in range(i + 1, len(self.dies)):
                if _interiors_overlap(self.dies[i], self.dies[j]):
                    raise InvalidLayoutError(
                        f"dies {self.dies[i].id!r} and {self.dies[j].id!r} overlap"
                    )

    @classmethod
    def from_dict(cls, doc: dict) -> "Layout":
        dies = [
            DieBox(
                min_corner=np.asarray(entry["min_corner"], dtype=float),
                dimensions=np.asarray(entry["dimensions"], dtype=float),
                id=str(entry["id"]),
            )
            for entry in doc["dies"]
        ]
        return cls(dies=dies, gap_mm=doc.get("gap_mm"))

    def to_dict(self) -> dict:
        doc = {
            "dies": [
                {
                    "id": d.id,
                    "min_corner": list(map(float, d.min_corner)),
                    "dimensions": list(map(float, d.dimensions)),
                }
                for d in self.dies
            ]
        }
        if self.gap_mm is not None:
            doc["gap_mm"] = float(self.gap_mm)
        return doc


def _interiors_overlap(a: DieBox, b: DieBox) -> bool:
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    return bool(np.all(lo < hi))


def load_layout(path) -> Layout:
    """Read a layout from a JSON file: {"dies": [{id, min_corner, dimensions}]}.

    Units are millimeters. Unknown keys are ignored so files may carry notes.
    """
    with open(Path(path), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "dies" not in doc or not doc["dies"]:
        raise InvalidLayoutError(f"layout file {path} declares no dies")
    return Layout.from_dict(doc)


def save_layout(layout: Layout, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(layout.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
