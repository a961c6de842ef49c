import subprocess
import sys

import numpy as np
import pytest

from dieburst import kernels

needs_numba = pytest.mark.skipif(not kernels.numba_available(), reason="numba not installed")


def _random_rays(rng, n):
    pts = rng.uniform(-4, 4, (n, 3))
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # sprinkle in axis-aligned directions to exercise the parallel-slab branch
    k = n // 10
    for axis in range(3):
        sel = rng.integers(0, n, k)
        dirs[sel] = 0.0
        dirs[sel, axis] = rng.choice([-1.0, 1.0], k)
    return pts, dirs


@needs_numba
class TestBackendEquivalence:
    def test_ray_mask_identical(self):
        rng = np.random.default_rng(0)
        pts, dirs = _random_rays(rng, 100_000)
        bmin = np.array([-1.0, -0.5, -2.0])
        bmax = np.array([1.5, 0.5, 0.25])
        for fwd in (True, False):
            a = kernels.ray_hits_box_numba(pts, dirs, bmin, bmax, fwd)
            b = kernels.ray_hits_box_numpy(pts, dirs, bmin, bmax, fwd)
            assert np.array_equal(a, b)
        assert 0 < a.sum() < len(a)

    def test_scan_triggers_identical(self):
        rng = np.random.default_rng(1)
        dist = np.abs(rng.standard_normal(500_000))
        spikes = rng.integers(0, dist.size, 300)
        dist[spikes] += rng.uniform(3.0, 20.0, 300)
        for dead in (0, 1, 7, 250):
            res_a = kernels.scan_triggers_numba(dist, 5.0, 2.5, dead)
            res_b = kernels.scan_triggers_numpy(dist, 5.0, 2.5, dead)
            for a, b in zip(res_a, res_b):
                assert np.array_equal(a, b)

    def test_superpose_identical(self):
        rng = np.random.default_rng(2)
        t0s = np.sort(rng.uniform(0, 0.05, 40))
        amps = rng.lognormal(np.log(2e3), 0.5, 40)
        taus = rng.lognormal(np.log(1e-3), 0.3, 40)
        a = kernels.superpose_bursts_numba(100_000, 1e-6, t0s, amps, taus)
        b = kernels.superpose_bursts_numpy(100_000, 1e-6, t0s, amps, taus)
        assert np.allclose(a, b, rtol=1e-12, atol=0.0)
        assert np.array_equal(a == 0.0, b == 0.0)


class TestScanSemantics:
    def test_simple_detection(self):
        dist = np.array([0.0, 0.0, 6.0, 6.5, 1.0, 0.4, 0.0])
        starts, lasts, rec, peaks = kernels.scan_triggers_numpy(dist, 5.0, 2.5, 2)
        assert list(starts) == [2]
        assert list(lasts) == [3]
        assert list(rec) == [4]
        assert peaks[0] == 6.5

    def test_dead_time_merges(self):
        dist = np.zeros(30)
        dist[5] = 10.0
        dist[9] = 8.0
        starts, lasts, rec, peaks = kernels.scan_triggers_numpy(dist, 5.0, 2.5, 4)
        assert list(starts) == [5]
        assert list(lasts) == [9]
        assert peaks[0] == 10.0
        starts, lasts, rec, peaks = kernels.scan_triggers_numpy(dist, 5.0, 2.5, 3)
        assert list(starts) == [5, 9]

    def test_no_recovery_is_minus_one(self):
        dist = np.array([0.0, 6.0, 3.0, 3.0])
        starts, lasts, rec, peaks = kernels.scan_triggers_numpy(dist, 5.0, 2.5, 1)
        assert list(rec) == [-1]

    def test_empty(self):
        starts, lasts, rec, peaks = kernels.scan_triggers_numpy(np.zeros(10), 5.0, 2.5, 1)
        assert starts.size == lasts.size == rec.size == peaks.size == 0


def test_env_flag_selects_numpy_backend():
    code = "import dieburst.kernels as k; print(k.active_backend())"
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin:/usr/local/bin", "DIEBURST_DISABLE_NUMBA": "1"},
    )
    assert out.stdout.strip() == "numpy"


def test_superpose_onset_is_one_sample():
    # shift applies from the first sample at or after t0
    shift = kernels.superpose_bursts_numpy(10, 1.0, [3.0], [5.0], [100.0])
    assert shift[2] == 0.0
    assert shift[3] == pytest.approx(5.0)
