import math

import numpy as np
import pytest

from vbm3d import Video
from vbm3d.errors import ConfigError
from vbm3d.search import (
    PatchCoord, PatchSpec, SearchParams, distance_stats, local_search, patch_distance,
    predictive_search, run_search,
)

import oracles


def _video(seed, shape=(6, 32, 32)):
    return Video(np.random.default_rng(seed).uniform(0, 255, shape))


class TestPatchDistance:
    def test_matches_oracle(self):
        v = _video(0)
        p, q = PatchCoord(3, 4, 1), PatchCoord(10, 2, 3)
        spec = PatchSpec(7, 2)
        assert patch_distance(v, p, q, spec) == pytest.approx(
            oracles.ssd(v.data, (3, 4, 1), (10, 2, 3), 7, 2), rel=1e-12)

    def test_colocated_bonus(self):
        v = _video(1)
        spec = PatchSpec(8, 1)
        p, q = PatchCoord(5, 5, 0), PatchCoord(5, 5, 2)
        raw = patch_distance(v, p, q, spec)
        assert patch_distance(v, p, q, spec, d=100.0) == pytest.approx(raw - 100.0)
        # no bonus when only the frame matches
        r = PatchCoord(6, 5, 0)
        assert patch_distance(v, p, r, spec, d=100.0) == patch_distance(v, p, r, spec)

    def test_out_of_bounds(self):
        with pytest.raises(IndexError):
            patch_distance(_video(0), PatchCoord(30, 0, 0), PatchCoord(0, 0, 0), PatchSpec(8, 1))


class TestLocalSearch:
    @pytest.mark.parametrize("window,Nb", [(7, 2), (5, 25), (9, 3), (1, 1)])
    def test_matches_brute_force(self, window, Nb):
        v = _video(2)
        spec = PatchSpec(8, 1)
        rng = np.random.default_rng(window)
        for _ in range(10):
            center = PatchCoord(*rng.integers(0, 25, 2), int(rng.integers(0, 6)))
            ref = PatchCoord(*rng.integers(0, 25, 2), int(rng.integers(0, 6)))
            got = local_search(v, center, ref, window, spec, Nb, d=50.0)
            want = oracles.frame_best(v.data, (ref.x, ref.y, ref.t), [(center.x, center.y)],
                                      center.t, window, 8, 1, Nb, 50.0)
            assert [(c.x, c.y) for c in got.coords] == [(x, y) for _, _, y, x in want]
            np.testing.assert_allclose(got.dists, [w[0] for w in want], rtol=1e-12)

    def test_window_clipped_at_border(self):
        v = _video(3)
        got = local_search(v, PatchCoord(0, 0, 0), PatchCoord(0, 0, 0), 7, PatchSpec(8, 1), 100)
        assert len(got) == 16  # 4 x 4 positions survive the clipping


class TestPredictiveSearch:
    @pytest.mark.parametrize("kt", [1, 2])
    def test_matches_oracle(self, kt):
        v = _video(4, (7, 30, 30))
        params = SearchParams(N=16, Nf=3, Ns=7, Npr=5, Nb=2, d=40.0, tau=2.2e6)
        rng = np.random.default_rng(kt)
        for _ in range(15):
            ref = (int(rng.integers(0, 23)), int(rng.integers(0, 23)), int(rng.integers(0, 7 - kt + 1)))
            got = predictive_search(v, PatchCoord(*ref), params, PatchSpec(8, kt))
            want = oracles.group_search(v.data, ref, 8, kt, 16, 3, 7, 5, 2, 40.0, 2.2e6)
            assert [(c.x, c.y, c.t) for c in got.coords] == want

    def test_reference_first_and_power_of_two(self):
        v = _video(5)
        ref = PatchCoord(12, 12, 3)
        for N in (1, 3, 8, 16, 32):
            got = predictive_search(v, ref, SearchParams(N=N), PatchSpec(8, 1))
            assert got.coords[0] == ref
            assert len(got) & (len(got) - 1) == 0 and len(got) <= N

    def test_tau_zero_keeps_reference_only(self):
        v = _video(6)
        got = predictive_search(v, PatchCoord(4, 4, 2), SearchParams(tau=0.0), PatchSpec(8, 1))
        assert got.coords == [PatchCoord(4, 4, 2)]

    def test_identical_frames_find_colocated(self):
        frame = np.random.default_rng(7).uniform(0, 255, (24, 24))
        v = Video(np.repeat(frame[None], 5, axis=0))
        got = predictive_search(v, PatchCoord(8, 8, 2), SearchParams(N=8, Nf=2), PatchSpec(8, 1))
        assert {c.t for c in got.coords if (c.x, c.y) == (8, 8)} >= {1, 2, 3}

    def test_frame_bounds(self):
        # forward search stops where a 2-frame patch still fits
        v = _video(8, (5, 24, 24))
        got = run_search(v, PatchCoord(4, 4, 3), SearchParams(N=32, Nf=4, Nb=4), PatchSpec(8, 2))
        assert max(c.t for c in got.coords) <= 3

    def test_guided_matches_oracle(self):
        v = _video(9, (6, 28, 28))
        rng = np.random.default_rng(9)
        fwd = rng.uniform(-3, 3, (5, 28, 28, 2))
        bwd = rng.uniform(-3, 3, (5, 28, 28, 2))
        params = SearchParams(N=16, Nf=4, Ns=7, Npr=5, Nb=2, d=10.0)
        for ref in [(0, 0, 0), (10, 13, 2), (20, 20, 5), (5, 17, 3)]:
            got = run_search(v, PatchCoord(*ref), params, PatchSpec(8, 1), fwd, bwd)
            want = oracles.group_search(v.data, ref, 8, 1, 16, 4, 7, 5, 2, 10.0, math.inf, (fwd, bwd))
            assert [(c.x, c.y, c.t) for c in got.coords] == want


class TestSearchParams:
    @pytest.mark.parametrize("kw", [dict(N=0), dict(Nb=0), dict(Nf=-1), dict(Ns=3, Npr=5),
                                    dict(tau=-1.0), dict(tau=math.nan)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SearchParams(**kw)


class TestDistanceStats:
    def test_against_noncentral_chi2(self):
        from scipy.stats import ncx2

        rng = np.random.default_rng(0)
        p1, p2 = rng.uniform(0, 255, 64), rng.uniform(0, 255, 64)
        sigma, m = 20.0, 64
        lam = np.sum((p1 - p2) ** 2) / (2 * sigma**2)
        scale = 2 * sigma**2 / m
        mean, var = distance_stats(p1, p2, sigma)
        assert mean == pytest.approx(scale * ncx2.mean(m, lam), rel=1e-12)
        assert var == pytest.approx(scale**2 * ncx2.var(m, lam), rel=1e-12)

    def test_identical_patches(self):
        p = np.zeros(128)
        mean, var = distance_stats(p, p, 10.0)
        assert mean == 200.0 and var == pytest.approx(8 * 1e4 / 128)
