"""Double-hit probability of a straight track through two separated dies.

The analytic path averages, over entry points on each die surface, the
fractional solid angle (Omega / 2 pi) under which the second die is seen
from the entry point, restricted to directions that actually continue into
the first die. Only rays arriving from the outward side of the entry face
are counted, hence the 2 pi normalization. The Monte Carlo estimator
samples the same measure directly (uniform surface point, direction drawn
from the angular model conditioned on entering) and serves as the
independent check on the quadrature.

Conventions carried by CoincidenceReport: with B the probability that a
track producing a burst in one die also crosses the other (the "per hit"
double fraction), an event stream in which every track appears once has

    fraction of double-die events   p_double = B / (1 - B)
    fraction of single-die events   p_single = (1 - 2B) / (1 - B)
    double : single  ratio                   = B / (1 - 2B)

These are well-formed probabilities (p_double <= p_single) while B < 1/3,
which holds for any physically separated thin-die layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import UnsupportedLayoutError
from .geometry import (
    AXES,
    DieBox,
    Layout,
    RectFace,
    sample_direction_cos_zenith,
    sample_direction_isotropic,
)

ANGULAR_MODELS = ("isotropic", "cos-zenith")
COMBINE_MODES = ("area-weighted", "literal-sum")

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts and rule for the rectangle quadratures."""

    n_u: int = 48
    n_v: int = 48
    rule: str = "gauss-legendre"

    def __post_init__(self):
        if self.n_u < 2 or self.n_v < 2:
            raise ValueError("quadrature needs at least 2 nodes per axis")
        if self.rule not in ("midpoint", "gauss-legendre"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")


def _nodes_1d(n: int, lo: float, hi: float, rule: str):
    """Nodes on [lo, hi] with weights normalized to sum 1."""
    if rule == "midpoint":
        x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        w = np.full(n, 1.0 / n)
    else:
        t, wt = np.polynomial.legendre.leggauss(n)
        x = lo + 0.5 * (t + 1.0) * (hi - lo)
        w = 0.5 * wt
    return x, w


@dataclass(frozen=True)
class _AxisFace:
    """Axis-aligned rectangle: plane coordinate on ``axis``, spans on ``axes``."""

    axis: int
    sign: int
    coord: float
    axes: tuple[int, int]
    lo: tuple[float, float]
    hi: tuple[float, float]

    @property
    def area(self) -> float:
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])


def _box_axis_faces(box: DieBox):
    b0 = box.min_corner
    b1 = box.max_corner
    out = []
    for a in range(3):
        in_plane = tuple(k for k in range(3) if k != a)
        lo = (float(b0[in_plane[0]]), float(b0[in_plane[1]]))
        hi = (float(b1[in_plane[0]]), float(b1[in_plane[1]]))
        for sign, coord in ((-1, float(b0[a])), (1, float(b1[a]))):
            name = AXES[a] + ("-" if sign < 0 else "+")
            out.append((name, _AxisFace(a, sign, coord, in_plane, lo, hi)))
    return out


def _axis_face_from_rect(face: RectFace) -> Optional[_AxisFace]:
    """Convert a RectFace to the axis-aligned form, or None if it is tilted."""
    n = face.normal
    a = int(np.argmax(np.abs(n)))
    if abs(abs(n[a]) - 1.0) > 1e-12:
        return None
    for edge in (face.edge_u, face.edge_v):
        live = np.flatnonzero(np.abs(edge) > 1e-12 * np.linalg.norm(edge))
        if live.size != 1 or live[0] == a:
            return None
    far = face.origin + face.edge_u + face.edge_v
    in_plane = tuple(k for k in range(3) if k != a)
    lo = tuple(float(min(face.origin[k], far[k])) for k in in_plane)
    hi = tuple(float(max(face.origin[k], far[k])) for k in in_plane)
    return _AxisFace(a, int(np.sign(n[a])), float(face.origin[a]), in_plane, lo, hi)


def _face_nodes(af: _AxisFace, quad: QuadratureSpec):
    """Quadrature points on the rectangle with weights summing to 1."""
    xu, wu = _nodes_1d(quad.n_u, af.lo[0], af.hi[0], quad.rule)
    xv, wv = _nodes_1d(quad.n_v, af.lo[1], af.hi[1], quad.rule)
    gu, gv = np.meshgrid(xu, xv, indexing="ij")
    pts = np.zeros((gu.size, 3))
    pts[:, af.axis] = af.coord
    pts[:, af.axes[0]] = gu.ravel()
    pts[:, af.axes[1]] = gv.ravel()
    w = np.outer(wu, wv).ravel()
    return pts, w


def _corner_g(x, y, d):
    # arctan2 keeps the corner term finite for d -> 0+ (argument blows up)
    return np.arctan2(x * y, d * np.sqrt(x * x + y * y + d * d))


def _rect_omega(px, py, dd, lo1, hi1, lo2, hi2):
    """Solid angle of an axis rectangle seen from height dd > 0, signed-corner sum."""
    x1 = lo1 - px
    x2 = hi1 - px
    y1 = lo2 - py
    y2 = hi2 - py
    om = (
        _corner_g(x2, y2, dd)
        - _corner_g(x1, y2, dd)
        - _corner_g(x2, y1, dd)
        + _corner_g(x1, y1, dd)
    )
    return np.clip(om, 0.0, _TWO_PI)


def _pair_face_omega(pts: np.ndarray, f_from: _AxisFace, f_to: _AxisFace) -> np.ndarray:
    """Per-viewpoint solid angle of ``f_to`` restricted to continuations of ``f_from``.

    Viewpoints ``pts`` lie on ``f_from``; only the part of ``f_to`` reachable
    by rays leaving the outward side of ``f_from`` (i.e. inside the half
    space behind it) contributes, and the target face must show its outward
    side to the viewpoint (a back-facing rectangle subtends nothing).
    """
    m = pts.shape[0]
    a1, s1, c1 = f_from.axis, f_from.sign, f_from.coord
    a2, s2, c2 = f_to.axis, f_to.sign, f_to.coord
    lo = list(f_to.lo)
    hi = list(f_to.hi)
    if a1 == a2:
        if s1 * (c2 - c1) > 0.0:
            return np.zeros(m)
    else:
        i = f_to.axes.index(a1)
        if s1 > 0:
            hi[i] = min(hi[i], c1)
        else:
            lo[i] = max(lo[i], c1)
        if hi[i] <= lo[i]:
            return np.zeros(m)
    dd = s2 * (pts[:, a2] - c2)
    front = dd > 0.0
    omega = np.zeros(m)
    if not front.any():
        return omega
    b1, b2 = f_to.axes
    omega[front] = _rect_omega(
        pts[front, b1], pts[front, b2], dd[front], lo[0], hi[0], lo[1], hi[1]
    )
    return omega


def solid_angle_of_rect(point, face: RectFace, method: str = "closed-form", quad: QuadratureSpec | None = None) -> float:
    """Solid angle (steradians) the rectangle subtends at ``point``.

    Only the outward side of the face counts: a point behind the face (or in
    its plane) sees zero. The closed form is the signed sum of four corner
    arctangent terms and is exact for any pose; ``method="quadrature"``
    integrates the projected-area element on a grid instead and exists as an
    independent cross-check. Result lies in [0, 2 pi]. Degenerate (zero
    area) rectangles are rejected at RectFace construction.
    """
    point = np.asarray(point, dtype=float)
    w = point - face.origin
    d = float(w @ face.normal)
    if method == "quadrature":
        quad = quad or QuadratureSpec()
        lu = np.linalg.norm(face.edge_u)
        lv = np.linalg.norm(face.edge_v)
        xu, wu = _nodes_1d(quad.n_u, 0.0, 1.0, quad.rule)
        xv, wv = _nodes_1d(quad.n_v, 0.0, 1.0, quad.rule)
        gu, gv = np.meshgrid(xu, xv, indexing="ij")
        r2 = face.origin[None, :] + gu.ravel()[:, None] * face.edge_u[None, :] + gv.ravel()[:, None] * face.edge_v[None, :]
        wgt = np.outer(wu, wv).ravel() * (lu * lv)  # physical area weights
        sep = point[None, :] - r2
        dist = np.linalg.norm(sep, axis=1)
        proj = sep @ face.normal
        integrand = np.clip(proj, 0.0, None) / dist**3
        return float(np.sum(wgt * integrand))
    if method != "closed-form":
        raise ValueError(f"unknown method {method!r}")
    if d <= 0.0:
        return 0.0
    uhat = face.edge_u / np.linalg.norm(face.edge_u)
    vhat = face.edge_v / np.linalg.norm(face.edge_v)
    pu = float(w @ uhat)
    pv = float(w @ vhat)
    om = _rect_omega(
        np.array([pu]),
        np.array([pv]),
        np.array([d]),
        0.0,
        float(np.linalg.norm(face.edge_u)),
        0.0,
        float(np.linalg.norm(face.edge_v)),
    )
    return float(om[0])


def pair_probability(surface1: RectFace, surface2: RectFace, quad: QuadratureSpec | None = None) -> float:
    """Probability that a ray entering through ``surface1`` goes on to cross ``surface2``.

    Computed as the area average over surface1 of Omega(surface2) / 2 pi,
    where Omega counts only the part of surface2 lying behind surface1 (the
    side rays continue into) and showing its outward face to the viewpoint.
    Axis-aligned face pairs use the exact corner formula; tilted poses fall
    back to a double quadrature.
    """
    quad = quad or QuadratureSpec()
    af1 = _axis_face_from_rect(surface1)
    af2 = _axis_face_from_rect(surface2)
    if af1 is not None and af2 is not None:
        pts, w = _face_nodes(af1, quad)
        omega = _pair_face_omega(pts, af1, af2)
        return float(np.sum(w * omega) / _TWO_PI)

    # general pose: quadrature over both rectangles, chunked to bound memory
    xu, wu = _nodes_1d(quad.n_u, 0.0, 1.0, quad.rule)
    xv, wv = _nodes_1d(quad.n_v, 0.0, 1.0, quad.rule)
    gu, gv = np.meshgrid(xu, xv, indexing="ij")
    r1 = surface1.origin[None, :] + gu.ravel()[:, None] * surface1.edge_u[None, :] + gv.ravel()[:, None] * surface1.edge_v[None, :]
    w1 = np.outer(wu, wv).ravel()
    r2 = surface2.origin[None, :] + gu.ravel()[:, None] * surface2.edge_u[None, :] + gv.ravel()[:, None] * surface2.edge_v[None, :]
    w2 = np.outer(wu, wv).ravel() * surface2.area
    n1 = surface1.normal
    n2 = surface2.normal
    total = 0.0
    chunk = 128
    for s in range(0, r1.shape[0], chunk):
        block = r1[s : s + chunk]
        sep = block[:, None, :] - r2[None, :, :]
        dist = np.linalg.norm(sep, axis=2)
        proj = sep @ n2
        behind = (-sep @ n1) <= 0.0  # (r2 - r1) . n1 <= 0
        integrand = np.where(behind, np.clip(proj, 0.0, None) / dist**3, 0.0)
        omega = integrand @ w2
        total += float(np.sum(w1[s : s + chunk] * omega))
    return total / _TWO_PI


@dataclass
class CoincidenceReport:
    """Single/double hit probabilities for a two-die layout.

    ``hit_double_fraction`` is B, the raw per-hit double fraction the Monte
    Carlo estimator measures directly; the event-level fields derive from it
    as described in the module docstring. ``mc_stderr`` is the standard
    error on ``p_double`` (None for the analytic method).
    """

    p_double: float
    p_single: float
    double_to_single_ratio: float
    double_to_total_ratio: float
    hit_double_fraction: float
    method: str
    angular_model: str
    combine_mode: str | None = None
    mc_stderr: float | None = None
    n_rays: int | None = None
    per_die: dict | None = None

    def __post_init__(self):
        eps = 1e-12
        if not (-eps <= self.p_double <= self.p_single + eps and self.p_single <= 1.0 + eps):
            raise ValueError(
                f"report violates 0 <= p_double <= p_single <= 1 "
                f"(p_double={self.p_double}, p_single={self.p_single}); "
                "the per-hit double fraction must stay below 1/3"
            )
        if self.p_single > 0:
            if abs(self.double_to_single_ratio - self.p_double / self.p_single) > 1e-9 * max(1.0, self.double_to_single_ratio):
                raise ValueError("double_to_single_ratio inconsistent with p_double/p_single")

    def to_dict(self) -> dict:
        return {
            "p_double": self.p_double,
            "p_single": self.p_single,
            "double_to_single_ratio": self.double_to_single_ratio,
            "double_to_total_ratio": self.double_to_total_ratio,
            "hit_double_fraction": self.hit_double_fraction,
            "method": self.method,
            "angular_model": self.angular_model,
            "combine_mode": self.combine_mode,
            "mc_stderr": self.mc_stderr,
            "n_rays": self.n_rays,
            "per_die": self.per_die,
        }


def _report_from_hit_fraction(
    b: float,
    method: str,
    angular_model: str,
    combine_mode: str | None = None,
    stderr_b: float | None = None,
    n_rays: int | None = None,
    per_die: dict | None = None,
) -> CoincidenceReport:
    b = float(b)
    p_double = b / (1.0 - b)
    p_single = (1.0 - 2.0 * b) / (1.0 - b)
    ratio = b / (1.0 - 2.0 * b) if b < 0.5 else np.inf
    return CoincidenceReport(
        p_double=p_double,
        p_single=p_single,
        double_to_single_ratio=ratio,
        double_to_total_ratio=p_double,
        hit_double_fraction=b,
        method=method,
        angular_model=angular_model,
        combine_mode=combine_mode,
        mc_stderr=None if stderr_b is None else float(stderr_b) / (1.0 - b) ** 2,
        n_rays=n_rays,
        per_die=per_die,
    )


def _die_to_die(from_box: DieBox, to_box: DieBox, quad: QuadratureSpec):
    """Per-entry-face hit probabilities of ``to_box`` and their area-weighted mean.

    For each face of ``from_box`` the conditional probability is the face
    average of the visible solid angle of ``to_box`` over 2 pi; the box
    silhouette is the sum over its outward-showing faces, each clipped to
    the half space rays continue into.
    """
    faces_from = _box_axis_faces(from_box)
    faces_to = _box_axis_faces(to_box)
    total_area = from_box.surface_area
    per_face = {}
    q = 0.0
    for name, af in faces_from:
        pts, w = _face_nodes(af, quad)
        omega = np.zeros(pts.shape[0])
        for _, tf in faces_to:
            omega += _pair_face_omega(pts, af, tf)
        p_face = float(np.sum(w * omega) / _TWO_PI)
        per_face[name] = p_face
        q += (af.area / total_area) * p_face
    return q, per_face


def _require_two_dies(layout: Layout):
    if len(layout.dies) != 2:
        raise UnsupportedLayoutError(f"need exactly 2 dies, layout has {len(layout.dies)}")
    layout.validate()


def double_hit_probability(
    layout: Layout,
    quad: QuadratureSpec | None = None,
    mode: str = "area-weighted",
) -> CoincidenceReport:
    """Analytic double-hit report for a two-die layout under isotropic arrivals.

    ``mode`` selects how per-face conditionals combine into the per-hit
    fraction B. "area-weighted" weights each entry face by its share of the
    die surface (the physically normalized choice the Monte Carlo estimator
    reproduces); "literal-sum" adds the per-face conditionals unweighted,
    kept as a diagnostic because the unweighted sum is only meaningful for
    thin-gap layouts. Both directions (either die hit first) are summed.
    """
    if mode not in COMBINE_MODES:
        raise ValueError(f"unknown combine mode {mode!r}; expected one of {COMBINE_MODES}")
    _require_two_dies(layout)
    quad = quad or QuadratureSpec()
    d1, d2 = layout.dies
    q1, faces1 = _die_to_die(d1, d2, quad)
    q2, faces2 = _die_to_die(d2, d1, quad)
    a1 = d1.surface_area
    a2 = d2.surface_area
    if mode == "area-weighted":
        b = (a1 * q1 + a2 * q2) / (a1 + a2)
    else:
        b = sum(faces1.values()) + sum(faces2.values())
    per_die = {
        d1.id: {"conditional_double_fraction": q1, "per_face": faces1},
        d2.id: {"conditional_double_fraction": q2, "per_face": faces2},
    }
    return _report_from_hit_fraction(
        b, method="analytic", angular_model="isotropic", combine_mode=mode, per_die=per_die
    )


def _face_arrays(box: DieBox):
    faces = [box.face(name) for name in ("x-", "x+", "y-", "y+", "z-", "z+")]
    origins = np.stack([f.origin for f in faces])
    eu = np.stack([f.edge_u for f in faces])
    ev = np.stack([f.edge_v for f in faces])
    normals = np.stack([f.normal for f in faces])
    areas = np.array([f.area for f in faces])
    return origins, eu, ev, normals, areas


def sample_entering_rays(rng: np.random.Generator, box: DieBox, m: int, angular_model: str):
    """Draw m rays entering ``box``: uniform surface point, model direction.

    The direction is drawn from the angular model over the full sphere and
    conditioned on pointing into the box. For the isotropic model the
    conditioning is done by mirroring outward draws (exactly equivalent, no
    rejection); for cos-zenith the whole (face, point, direction) proposal
    is redrawn until it enters. Returns (points, directions,
    n_proposed) where n_proposed counts proposals including rejected ones.
    """
    origins, eu, ev, normals, areas = _face_arrays(box)
    pf = areas / areas.sum()
    if angular_model == "isotropic":
        fidx = rng.choice(len(pf), size=m, p=pf)
        a = rng.uniform(0.0, 1.0, m)
        b = rng.uniform(0.0, 1.0, m)
        pts = origins[fidx] + a[:, None] * eu[fidx] + b[:, None] * ev[fidx]
        dirs = sample_direction_isotropic(rng, m)
        dots = np.einsum("ij,ij->i", dirs, normals[fidx])
        dirs = np.where((dots > 0.0)[:, None], -dirs, dirs)
        return pts, dirs, m
    if angular_model != "cos-zenith":
        raise ValueError(f"unknown angular model {angular_model!r}")
    pts = np.empty((m, 3))
    dirs = np.empty((m, 3))
    filled = 0
    proposed = 0
    while filled < m:
        k = m - filled
        fidx = rng.choice(len(pf), size=k, p=pf)
        a = rng.uniform(0.0, 1.0, k)
        b = rng.uniform(0.0, 1.0, k)
        cand_pts = origins[fidx] + a[:, None] * eu[fidx] + b[:, None] * ev[fidx]
        cand_dirs = sample_direction_cos_zenith(rng, k)
        dots = np.einsum("ij,ij->i", cand_dirs, normals[fidx])
        acc = dots < 0.0
        n_acc = int(acc.sum())
        proposed += k
        if n_acc:
            pts[filled : filled + n_acc] = cand_pts[acc]
            dirs[filled : filled + n_acc] = cand_dirs[acc]
            filled += n_acc
    return pts, dirs, proposed


def mc_double_hit(
    layout: Layout,
    n_rays: int,
    angular_model: str = "isotropic",
    seed: int = 0,
    n_batches: int = 8,
) -> CoincidenceReport:
    """Monte Carlo double-hit report; the independent oracle for the analytic path.

    Rays are split evenly between the two dies and, per die, into
    ``n_batches`` batches with independent child streams spawned from
    ``seed`` (child index = die_index * n_batches + batch). Results are
    deterministic for a fixed (seed, n_batches) pair. The binomial standard
    error on the per-hit fraction is propagated to ``mc_stderr`` on
    p_double.
    """
    if n_rays < 10_000:
        raise ValueError(f"n_rays must be at least 10000, got {n_rays}")
    if angular_model not in ANGULAR_MODELS:
        raise ValueError(f"unknown angular model {angular_model!r}; expected one of {ANGULAR_MODELS}")
    _require_two_dies(layout)
    children = np.random.SeedSequence(seed).spawn(2 * n_batches)
    dies = layout.dies
    qs = []
    alphas = []
    totals = []
    for di in range(2):
        die = dies[di]
        other = dies[1 - di]
        n_d = n_rays // 2
        hits = 0
        total = 0
        proposed = 0
        base = n_d // n_batches
        extra = n_d % n_batches
        for bi in range(n_batches):
            m = base + (1 if bi < extra else 0)
            if m == 0:
                continue
            rng = np.random.default_rng(children[di * n_batches + bi])
            pts, dirs, n_prop = sample_entering_rays(rng, die, m, angular_model)
            mask = kernels.ray_hits_box(pts, dirs, other.min_corner, other.max_corner, True)
            hits += int(mask.sum())
            total += m
            proposed += n_prop
        qs.append(hits / total)
        totals.append(total)
        alphas.append(0.5 if angular_model == "isotropic" else total / proposed)
    a = np.array([dies[0].surface_area, dies[1].surface_area])
    w = a * np.array(alphas)
    w = w / w.sum()
    b = float(w[0] * qs[0] + w[1] * qs[1])
    var_b = float(
        w[0] ** 2 * qs[0] * (1.0 - qs[0]) / totals[0]
        + w[1] ** 2 * qs[1] * (1.0 - qs[1]) / totals[1]
    )
    per_die = {
        dies[0].id: {"conditional_double_fraction": qs[0], "n_rays": totals[0]},
        dies[1].id: {"conditional_double_fraction": qs[1], "n_rays": totals[1]},
    }
    return _report_from_hit_fraction(
        b,
        method="monte-carlo",
        angular_model=angular_model,
        stderr_b=np.sqrt(var_b),
        n_rays=totals[0] + totals[1],
        per_die=per_die,
    )
