import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from starpo.errors import ConfigError, InsufficientSample, TooFewDeltas, TooShort
from starpo.metrics import (
    EPS_PE,
    AbnormalityCalibration,
    StabilityScores,
    acf_pairs,
    acf_reward,
    calibrate_abnormality,
    flag_abnormal,
    path_efficiency,
    scores_meta,
    stability_scores,
    step_deltas,
)
from starpo.trajectory import Trajectory


def scores(r_acf=0.0, r_pe=0.5):
    return StabilityScores(r_acf, r_pe, (), 0.0, 0.0, False, 0)


@st.composite
def random_traj(draw, kmin=3, kmax=10, dmax=8):
    K = draw(st.integers(kmin, kmax))
    d = draw(st.integers(2, dmax))
    seed = draw(st.integers(0, 2**32 - 1))
    return np.random.default_rng(seed).standard_normal((K, d)) * draw(st.sampled_from([1e-3, 1.0, 1e3]))


class TestDeltas:
    def test_examples(self):
        np.testing.assert_array_equal(step_deltas(np.array([[0, 0], [1, 0], [2, 0]])), [[1, 0], [1, 0]])
        np.testing.assert_array_equal(step_deltas(np.array([[1, 1], [1, 1]])), [[0, 0]])
        np.testing.assert_array_equal(step_deltas(np.array([[0.0], [3.0]])), [[3.0]])

    def test_too_short(self):
        with pytest.raises(TooShort):
            step_deltas(np.zeros((1, 2)))


class TestAcf:
    @pytest.mark.parametrize(
        "deltas, expected",
        [([(1, 0), (1, 0)], [1.0]), ([(1, 0), (-1, 0)], [-1.0]), ([(1, 0), (0, 1)], [0.0])],
    )
    def test_pairs(self, deltas, expected):
        vals, zeros = acf_pairs(np.array(deltas, float))
        np.testing.assert_array_equal(vals, expected)
        assert zeros == 0

    def test_too_few(self):
        with pytest.raises(TooFewDeltas):
            acf_pairs(np.array([[1.0, 0.0]]))

    def test_zero_delta(self):
        vals, zeros = acf_pairs(np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))
        np.testing.assert_array_equal(vals, [0.0, 0.0])
        assert zeros == 2

    def test_collinear(self):
        r, diag = acf_reward(np.array([[0, 0], [1, 0], [2, 0], [3, 0]], float))
        assert r == 1.0 and not diag["degenerate_acf"]

    def test_oscillation(self):
        r, diag = acf_reward(np.array([[0, 0], [1, 0], [0, 0], [1, 0]], float))
        assert r == -1.0
        assert list(diag["acf_pairs"]) == [-1.0, -1.0]

    def test_degenerate_short(self):
        r, diag = acf_reward(np.array([[0, 0], [1, 0]], float))
        assert r == 0.0 and diag["degenerate_acf"]

    @given(random_traj(kmin=2, kmax=2, dmax=4) | random_traj())
    def test_bounds_and_mean(self, h):
        s = stability_scores(h)
        assert all(-1.0 <= p <= 1.0 for p in s.acf_pairs)
        if not s.degenerate_acf:
            assert s.r_acf == pytest.approx(float(np.mean(s.acf_pairs)), abs=1e-15)

    @given(st.integers(3, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_alternating_extremum(self, K, d, seed):
        # hopping between two points gives deltas that are exact negatives
        a, b = np.random.default_rng(seed).standard_normal((2, d))
        h = np.stack([a if k % 2 == 0 else b for k in range(K)])
        assert acf_reward(h)[0] == -1.0


class TestPathEfficiency:
    def test_straight(self):
        r, D, L = path_efficiency(np.array([[0, 0], [1, 0], [2, 0], [3, 0]], float), 1e-8)
        assert (D, L) == (3.0, 3.0)
        assert abs(r - 1.0) <= 1e-8

    def test_closed_loop(self):
        r, D, _ = path_efficiency(np.array([[0, 0], [1, 0], [0, 0]], float))
        assert D == 0.0 and r == 0.0

    def test_oscillation_offset(self):
        r, D, L = path_efficiency(np.array([[0, 0], [1, 0], [0, 0], [1, 0]], float))
        assert (D, L) == (1.0, 3.0)
        assert r == pytest.approx(1 / 3, abs=1e-8)

    def test_too_short(self):
        with pytest.raises(TooShort):
            path_efficiency(np.zeros((1, 3)))

    @given(random_traj(kmin=2))
    def test_bounds(self, h):
        r, D, L = path_efficiency(h)
        assert 0.0 <= r <= 1.0
        assert D <= L * (1 + 1e-12)


class TestInvariances:
    @settings(max_examples=200)
    @given(random_traj(), st.integers(0, 2**32 - 1))
    def test_translation_rotation(self, h, seed):
        rng = np.random.default_rng(seed)
        d = h.shape[1]
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        base = stability_scores(h)
        for moved in (h + rng.standard_normal(d) * 10, h @ q.T):
            s = stability_scores(moved)
            assert s.r_acf == pytest.approx(base.r_acf, rel=1e-9, abs=1e-9)
            assert s.r_pe == pytest.approx(base.r_pe, rel=1e-9, abs=1e-12)

    @given(random_traj(), st.integers(-20, 20))
    def test_power_of_two_scale_exact(self, h, e):
        c = 2.0**e
        a, b = stability_scores(h), stability_scores(h * c)
        assert a.acf_pairs == b.acf_pairs and a.r_acf == b.r_acf

    @given(random_traj(), st.floats(1e-3, 1e3))
    def test_general_scale(self, h, c):
        a, b = stability_scores(h), stability_scores(h * c)
        np.testing.assert_allclose(a.acf_pairs, b.acf_pairs, rtol=0, atol=1e-12)
        assert abs(a.r_pe - b.r_pe) <= EPS_PE / min(a.L, b.L) + 1e-12


class TestCalibration:
    def test_two_points(self):
        c = calibrate_abnormality([scores(0.0), scores(1.0)], 0.25)
        assert (c.acf_low, c.acf_high) == (0.25, 0.75)

    def test_normal_quantile(self):
        # oracle: the standard normal inverse CDF
        x = np.random.default_rng(0).standard_normal(1_000_000)
        c = calibrate_abnormality([scores(v) for v in x], 0.1587)
        assert norm.ppf(0.1587) == pytest.approx(-1.0, abs=1e-3)
        assert c.acf_low == pytest.approx(norm.ppf(0.1587), abs=0.02)

    def test_constant(self):
        c = calibrate_abnormality([scores(0.5)] * 3, 0.1587)
        assert c.acf_low == c.acf_high == 0.5

    def test_insufficient(self):
        with pytest.raises(InsufficientSample):
            calibrate_abnormality([scores()], 0.1)

    @pytest.mark.parametrize("tail", [0.0, 0.5, -0.1])
    def test_tail_range(self, tail):
        with pytest.raises(ValueError):
            calibrate_abnormality([scores(), scores()], tail)

    def test_text_round_trip(self):
        c = calibrate_abnormality([scores(v, v / 3) for v in np.linspace(-1, 1, 17)], 0.1587)
        assert AbnormalityCalibration.from_text(c.to_text()) == c

    def test_bad_text(self):
        with pytest.raises(ConfigError):
            AbnormalityCalibration.from_text("acf_low = 0.1\n")


class TestFlags:
    calib = AbnormalityCalibration(-0.5, 0.95, 0.4, 0.1587, 100)

    def test_low(self):
        assert flag_abnormal(scores(-0.9), self.calib).acf_abnormal_low

    def test_strict_equality(self):
        assert not flag_abnormal(scores(0.0, 0.4), self.calib).pe_abnormal_low

    def test_high(self):
        assert flag_abnormal(scores(0.99), self.calib).acf_abnormal_high

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        f_lo, f_hi = flag_abnormal(scores(lo), self.calib), flag_abnormal(scores(hi), self.calib)
        assert f_lo.acf_abnormal_low >= f_hi.acf_abnormal_low
        assert f_lo.acf_abnormal_high <= f_hi.acf_abnormal_high

    def test_meta_keys(self):
        s = stability_scores(Trajectory("x", [[0, 0], [1, 0], [0, 0]]))
        meta = scores_meta(s, flag_abnormal(s, self.calib))
        assert set(meta) == {"r_acf", "r_pe", "D", "L", "flags"}
        assert float(meta["r_pe"]) == s.r_pe
        assert meta["flags"] == "acf_low,pe_low"


@given(st.integers(3, 12), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_repeated_delta_is_exactly_collinear(K, d, seed):
    v = np.random.default_rng(seed).standard_normal(d)
    deltas = np.tile(v, (K - 1, 1))
    pairs, _ = acf_pairs(deltas)
    assert np.all(pairs == 1.0)
