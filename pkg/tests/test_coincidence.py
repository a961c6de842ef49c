import numpy as np
import pytest

from dieburst.coincidence import (
    QuadratureSpec,
    double_hit_probability,
    mc_double_hit,
    pair_probability,
    sample_entering_rays,
    solid_angle_of_rect,
)
from dieburst.errors import UnsupportedLayoutError
from dieburst.geometry import DieBox, Layout, RectFace, sample_direction_isotropic

from conftest import random_two_box_layout


def _ray_hits_rect(origin, direction, face):
    """Test-local oracle: does the ray cross the rectangle (front side only)?"""
    denom = direction @ face.normal
    if denom == 0.0:
        return False
    t = ((face.origin - origin) @ face.normal) / denom
    if t <= 0.0:
        return False
    p = origin + t * direction
    w = p - face.origin
    u = w @ face.edge_u / (face.edge_u @ face.edge_u)
    v = w @ face.edge_v / (face.edge_v @ face.edge_v)
    front = (origin - face.origin) @ face.normal > 0
    return front and 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0


SQUARE_2X2 = RectFace(origin=[-1.0, -1.0, 0.0], edge_u=[2.0, 0, 0], edge_v=[0, 2.0, 0])


class TestSolidAngle:
    def test_point_above_center_of_2x2(self):
        om = solid_angle_of_rect([0.0, 0.0, 1.0], SQUARE_2X2)
        assert om == pytest.approx(2.0 * np.pi / 3.0, abs=1e-9)
        assert om == pytest.approx(4.0 * np.arctan(1.0 / np.sqrt(3.0)), abs=1e-12)

    def test_far_field_asymptote(self):
        face = RectFace(origin=[-0.5, -0.5, 0.0], edge_u=[1.0, 0, 0], edge_v=[0, 1.0, 0])
        om = solid_angle_of_rect([0.0, 0.0, 100.0], face)
        assert om == pytest.approx(1e-4, rel=1e-4)

    def test_coplanar_outside_is_zero(self):
        assert solid_angle_of_rect([5.0, 0.0, 0.0], SQUARE_2X2) == 0.0

    def test_back_side_is_zero(self):
        assert solid_angle_of_rect([0.0, 0.0, -1.0], SQUARE_2X2) == 0.0

    def test_quadrature_cross_check(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            point = rng.uniform(-3, 3, 3)
            point[2] = rng.uniform(0.05, 3.0)
            closed = solid_angle_of_rect(point, SQUARE_2X2)
            quad = solid_angle_of_rect(point, SQUARE_2X2, method="quadrature", quad=QuadratureSpec(96, 96))
            assert quad == pytest.approx(closed, rel=2e-3, abs=1e-6)

    def test_monte_carlo_direction_cross_check(self):
        rng = np.random.default_rng(8)
        point = np.array([0.3, -0.2, 0.8])
        n = 50_000
        dirs = sample_direction_isotropic(rng, n)
        hits = sum(_ray_hits_rect(point, d, SQUARE_2X2) for d in dirs)
        frac = hits / n
        expected = solid_angle_of_rect(point, SQUARE_2X2) / (4.0 * np.pi)
        sigma = np.sqrt(expected * (1 - expected) / n)
        assert abs(frac - expected) < 4.0 * sigma

    def test_bounded_by_2pi(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            point = rng.uniform(-2, 2, 3)
            om = solid_angle_of_rect(point, SQUARE_2X2)
            assert 0.0 <= om <= 2.0 * np.pi
        # nearly touching the face from the front: approaches 2 pi
        om = solid_angle_of_rect([0.0, 0.0, 1e-9], SQUARE_2X2)
        assert om == pytest.approx(2.0 * np.pi, rel=1e-6)

    def test_quadrature_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(n_u=1)
        with pytest.raises(ValueError):
            QuadratureSpec(rule="simpson")


class TestPairProbability:
    def test_face_to_face_limit(self):
        s1 = RectFace(origin=[0, 0, 0], edge_u=[0, 0, 1.0], edge_v=[0, 1.0, 0])  # normal -x
        s2 = DieBox([1e-9, 0, 0], [1, 1, 1], "b").face("x-")
        p = pair_probability(s1, s2, QuadratureSpec(48, 48))
        assert p > 0.999

    def test_far_field_limit(self):
        s1 = RectFace(origin=[0, 0, 0], edge_u=[0, 0, 1.0], edge_v=[0, 1.0, 0])
        s2 = RectFace(origin=[100.0, 0, 0], edge_u=[0, 0, 1.0], edge_v=[0, 1.0, 0])
        p = pair_probability(s1, s2, QuadratureSpec(48, 48))
        assert p == pytest.approx(1.0 / (2 * np.pi * 100.0**2), rel=0.01)

    def test_paper_style_pair_against_mc(self, example_layout):
        # top face of the left die against the facing face of the right die
        left, right = example_layout.dies
        s1 = left.face("z+")
        s2 = right.face("x-")
        p = pair_probability(s1, s2, QuadratureSpec(64, 64))
        rng = np.random.default_rng(12)
        n = 200_000
        a = rng.uniform(0, 1, n)
        b = rng.uniform(0, 1, n)
        pts = s1.origin + a[:, None] * s1.edge_u + b[:, None] * s1.edge_v
        dirs = sample_direction_isotropic(rng, n)
        dots = dirs @ s1.normal
        dirs = np.where((dots > 0)[:, None], -dirs, dirs)  # continuation side
        hits = np.fromiter((_ray_hits_rect(p0, d, s2) for p0, d in zip(pts[:40_000], dirs[:40_000])), bool).sum()
        frac = hits / 40_000
        sigma = np.sqrt(max(frac, 1e-9) * (1 - frac) / 40_000)
        assert abs(frac - p) < 3.0 * sigma + 1e-4

    def test_rotated_pair_uses_general_path(self):
        # rotating both faces together must not change the probability
        c, s = np.cos(0.3), np.sin(0.3)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        s1 = RectFace(origin=[0, 0, 0], edge_u=[0, 0, 1.0], edge_v=[0, 1.0, 0])
        s2 = RectFace(origin=[3.0, -0.3, -0.1], edge_u=[0, 0, 1.2], edge_v=[0, 1.4, 0])
        p_axis = pair_probability(s1, s2, QuadratureSpec(32, 32))
        r1 = RectFace(origin=rot @ s1.origin, edge_u=rot @ s1.edge_u, edge_v=rot @ s1.edge_v)
        r2 = RectFace(origin=rot @ s2.origin, edge_u=rot @ s2.edge_u, edge_v=rot @ s2.edge_v)
        p_rot = pair_probability(r1, r2, QuadratureSpec(32, 32))
        assert p_rot == pytest.approx(p_axis, rel=5e-3)


class TestDoubleHit:
    def test_infinite_separation(self):
        lay = Layout(dies=[DieBox([0, 0, 0], [1, 1, 1], "a"), DieBox([1e7, 0, 0], [1, 1, 1], "b")])
        rep = double_hit_probability(lay, QuadratureSpec(16, 16))
        assert rep.p_double < 1e-12

    def test_label_exchange_symmetry(self, example_layout):
        quad = QuadratureSpec(32, 32)
        rep = double_hit_probability(example_layout, quad)
        swapped = Layout(dies=list(reversed(example_layout.dies)), gap_mm=example_layout.gap_mm)
        rep2 = double_hit_probability(swapped, quad)
        assert abs(rep.p_double - rep2.p_double) < 1e-12

    def test_touching_cubes_against_mc(self):
        lay = Layout(dies=[DieBox([0, 0, 0], [1, 1, 1], "a"), DieBox([1 + 1e-6, 0, 0], [1, 1, 1], "b")])
        an = double_hit_probability(lay, QuadratureSpec(48, 48))
        mc = mc_double_hit(lay, 400_000, seed=21)
        # roughly the facing-face area share times order-one solid-angle fraction
        assert 0.10 < an.hit_double_fraction < 0.25
        assert abs(mc.p_double - an.p_double) < 3.0 * mc.mc_stderr

    def test_requires_two_dies(self):
        with pytest.raises(UnsupportedLayoutError) as err:
            double_hit_probability(Layout(dies=[DieBox([0, 0, 0], [1, 1, 1], "a")]))
        assert err.value.code == "unsupported-layout"

    def test_mode_validation(self, example_layout):
        with pytest.raises(ValueError):
            double_hit_probability(example_layout, mode="geometric-mean")

    def test_literal_sum_exceeds_area_weighted(self, example_layout):
        quad = QuadratureSpec(32, 32)
        aw = double_hit_probability(example_layout, quad, mode="area-weighted")
        lit = double_hit_probability(example_layout, quad, mode="literal-sum")
        assert lit.hit_double_fraction > aw.hit_double_fraction
        assert lit.combine_mode == "literal-sum"

    def test_facing_face_contributes_nothing(self, example_layout):
        rep = double_hit_probability(example_layout, QuadratureSpec(24, 24))
        per_face = rep.per_die["left"]["per_face"]
        assert per_face["x+"] == 0.0  # the face looking at the right die
        assert per_face["x-"] > 0.0

    def test_quadrature_convergence_at_example_layout(self, example_layout):
        p48 = double_hit_probability(example_layout, QuadratureSpec(48, 48)).p_double
        p96 = double_hit_probability(example_layout, QuadratureSpec(96, 96)).p_double
        assert abs(p96 - p48) / p48 < 1e-4

    def test_example_layout_ratio_near_reference(self, example_layout):
        rep = double_hit_probability(example_layout, QuadratureSpec(64, 64))
        assert 0.03 < rep.double_to_single_ratio < 0.05

    def test_report_invariants(self, example_layout):
        for rep in (
            double_hit_probability(example_layout, QuadratureSpec(24, 24)),
            mc_double_hit(example_layout, 50_000, seed=3),
        ):
            assert 0.0 <= rep.p_double <= rep.p_single <= 1.0
            assert rep.double_to_single_ratio == pytest.approx(rep.p_double / rep.p_single)
            assert rep.double_to_total_ratio == rep.p_double
            d = rep.to_dict()
            assert d["method"] in ("analytic", "monte-carlo")


class TestMonteCarlo:
    def test_stderr_scaling(self):
        lay = Layout(dies=[DieBox([0, 0, 0], [1, 1, 1], "a"), DieBox([1.2, 0, 0], [1, 1, 1], "b")])
        m1 = mc_double_hit(lay, 100_000, seed=9)
        m2 = mc_double_hit(lay, 400_000, seed=9)
        assert m1.mc_stderr / m2.mc_stderr == pytest.approx(2.0, rel=0.2)

    def test_deterministic_for_fixed_seed_and_batches(self, example_layout):
        a = mc_double_hit(example_layout, 50_000, seed=17, n_batches=4)
        b = mc_double_hit(example_layout, 50_000, seed=17, n_batches=4)
        assert a.p_double == b.p_double
        assert a.mc_stderr == b.mc_stderr
        c = mc_double_hit(example_layout, 50_000, seed=18, n_batches=4)
        assert c.p_double != a.p_double

    def test_minimum_rays_enforced(self, example_layout):
        with pytest.raises(ValueError):
            mc_double_hit(example_layout, 5_000)

    def test_cos_zenith_model_runs(self, example_layout):
        rep = mc_double_hit(example_layout, 100_000, angular_model="cos-zenith", seed=2)
        assert 0.0 < rep.p_double < 0.2
        assert rep.angular_model == "cos-zenith"

    def test_entering_rays_point_inward(self, example_layout):
        die = example_layout.dies[0]
        rng = np.random.default_rng(0)
        for model in ("isotropic", "cos-zenith"):
            pts, dirs, _ = sample_entering_rays(rng, die, 2000, model)
            # points on the surface
            assert np.all(pts >= die.min_corner - 1e-9) and np.all(pts <= die.max_corner + 1e-9)
            on_boundary = np.zeros(len(pts), dtype=bool)
            for k in range(3):
                on_boundary |= np.abs(pts[:, k] - die.min_corner[k]) < 1e-9
                on_boundary |= np.abs(pts[:, k] - die.max_corner[k]) < 1e-9
            assert np.all(on_boundary)
            # every direction continues into the box
            eps = 1e-9
            inside = pts + eps * dirs
            tol = 1e-12
            assert np.all(
                (inside >= die.min_corner - tol).all(axis=1) & (inside <= die.max_corner + tol).all(axis=1)
            )
            if model == "cos-zenith":
                assert np.all(dirs[:, 2] < 0.0)

    def test_oracle_equivalence_quick(self):
        rng = np.random.default_rng(100)
        for i in range(3):
            lay = random_two_box_layout(rng)
            an = double_hit_probability(lay, QuadratureSpec(48, 48))
            mc = mc_double_hit(lay, 200_000, seed=300 + i)
            assert abs(mc.p_double - an.p_double) < 4.0 * mc.mc_stderr


class TestGapMonotonicity:
    def test_analytic_sweep(self):
        rng = np.random.default_rng(3)
        quad = QuadratureSpec(24, 24)
        for _ in range(8):
            lx, ly, t = rng.uniform(4, 12), rng.uniform(4, 12), rng.uniform(0.2, 1.0)
            gaps = np.sort(rng.uniform(0.05, 5.0, 12))
            vals = []
            for g in gaps:
                lay = Layout(dies=[DieBox([0, 0, 0], [lx, ly, t], "a"), DieBox([lx + g, 0, 0], [lx, ly, t], "b")])
                vals.append(double_hit_probability(lay, quad).p_double)
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_mc_sweep_coarse(self):
        gaps = [0.1, 1.0, 4.0]
        vals = []
        errs = []
        for i, g in enumerate(gaps):
            lay = Layout(dies=[DieBox([0, 0, 0], [8, 8, 0.5], "a"), DieBox([8 + g, 0, 0], [8, 8, 0.5], "b")])
            rep = mc_double_hit(lay, 400_000, seed=40 + i)
            vals.append(rep.p_double)
            errs.append(rep.mc_stderr)
        assert vals[1] < vals[0] - 3 * (errs[0] + errs[1])
        assert vals[2] < vals[1] - 3 * (errs[1] + errs[2])
