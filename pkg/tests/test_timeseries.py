"""Tests for the returns/binning/embedding pipeline and transfer entropy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from njee.nn import TrainConfig
from njee.rng import make_rng
from njee.synth import coupled_markov
from njee.timeseries import (
    DEFAULT_TE_CONFIG,
    BinnerSpec,
    LagEmbedding,
    SeriesFrame,
    embed,
    rolling_te,
    ternary_bin,
    to_returns,
    transfer_entropy,
)


def frame(values, start="2001-01-01", name="s"):
    stamps = np.datetime64(start, "D") + np.arange(len(values))
    return SeriesFrame(stamps, np.asarray(values, dtype=float), name)


class TestSeriesFrame:
    def test_rejects_unsorted_timestamps(self):
        stamps = np.array(["2001-01-02", "2001-01-01"], dtype="datetime64[D]")
        with pytest.raises(ValueError, match="increasing"):
            SeriesFrame(stamps, np.array([1.0, 2.0]))

    def test_rejects_non_finite_values(self):
        with pytest.raises(ValueError, match="finite"):
            frame([1.0, np.nan, 2.0])

    def test_values_read_only(self):
        f = frame([1.0, 2.0])
        with pytest.raises(ValueError):
            f.values[0] = 5.0


class TestReturns:
    def test_single_step_gain(self):
        assert to_returns(frame([100.0, 101.0])) == pytest.approx([1.0])

    def test_constant_prices_give_zero(self):
        assert np.allclose(to_returns(frame([50.0] * 10)), 0.0)

    def test_small_loss(self):
        assert to_returns(frame([100.0, 99.1])) == pytest.approx([-0.9])

    def test_nonpositive_price_rejected(self):
        stamps = np.datetime64("2001-01-01", "D") + np.arange(2)
        f = SeriesFrame(stamps, np.array([100.0, 0.0]))
        with pytest.raises(ValueError, match="positive"):
            to_returns(f)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            to_returns(frame([100.0]))


class TestTernaryBin:
    @pytest.mark.parametrize("value,expected", [(1.2, 1), (-0.3, 0), (-0.9, -1)])
    def test_published_rule(self, value, expected):
        assert ternary_bin(np.array([value]))[0] == expected

    def test_boundaries_map_to_flat(self):
        assert np.array_equal(ternary_bin(np.array([-0.8, 0.8])), [0, 0])

    @given(st.floats(min_value=-50, max_value=50, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_binning_is_total(self, value):
        symbol = ternary_bin(np.array([value]))[0]
        assert symbol in (-1, 0, 1)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            ternary_bin(np.array([np.inf]))

    def test_custom_thresholds(self):
        spec = BinnerSpec(-0.5, 0.5)
        assert np.array_equal(ternary_bin(np.array([-0.6, 0.0, 0.6]), spec), [-1, 0, 1])


class TestEmbed:
    def test_hand_alignment_k2(self):
        seq = np.array([0, 1, 2, 0, 1, 2, 0, 1])
        emb = embed(seq, seq, k=2, l=2)
        assert np.array_equal(emb.x_lags[0], [0, 1])
        assert np.array_equal(emb.y_lags[0], [0, 1])
        assert emb.y_next[0] == 2

    def test_row_count_k1_length3(self):
        seq = np.array([0, 1, 0])
        emb = embed(seq, seq, k=1, l=1)
        assert emb.n == 2

    def test_row_count_general(self):
        x = make_rng(1).integers(0, 3, 100)
        y = make_rng(2).integers(0, 3, 100)
        emb = embed(x, y, k=5, l=3)
        assert emb.n == 100 - 5

    def test_shuffled_source_keeps_row_count(self):
        rng = make_rng(3)
        x = rng.integers(0, 3, 200)
        y = rng.integers(0, 3, 200)
        shuffled = rng.permutation(y)
        assert embed(x, shuffled, 5, 5).n == embed(x, y, 5, 5).n

    def test_alignment_reconstructs_target(self):
        # every embedded next-symbol must match the raw series exactly
        rng = make_rng(4)
        y = rng.integers(0, 3, 500)
        x = rng.integers(0, 3, 500)
        k = l = 4
        emb = embed(x, y, k, l)
        t_max = max(k, l)
        assert np.array_equal(emb.y_next, y[t_max:])
        for j in range(l):
            assert np.array_equal(emb.y_lags[:, j], y[t_max - l + j : len(y) - 1 - (l - 1 - j)])

    def test_ternary_symbols_shift_to_codes(self):
        x = np.array([-1, 0, 1, -1, 0, 1])
        emb = embed(x, x, 1, 1)
        assert emb.x_alphabet == 3
        assert emb.x_lags.min() >= 0
        assert np.array_equal(emb.y_next, np.array([0, 1, -1, 0, 1]) + 1)

    def test_mixed_negative_symbols_rejected(self):
        with pytest.raises(ValueError, match="ternary"):
            embed(np.array([-2, 0, 1]), np.array([0, 1, 2]), 1, 1)

    def test_too_short_series_rejected(self):
        with pytest.raises(ValueError, match="short"):
            embed(np.array([0, 1]), np.array([1, 0]), 5, 5)


class TestTransferEntropy:
    def test_independent_series_near_zero(self):
        rng = make_rng(5)
        emb = embed(rng.integers(0, 3, 10_000) - 1, rng.integers(0, 3, 10_000) - 1, 5, 5)
        est = transfer_entropy(emb, TrainConfig(**{**DEFAULT_TE_CONFIG.__dict__, "seed": 6}))
        assert abs(est.value_nats) <= 0.05

    def test_copy_process_reaches_ln3(self):
        rng = make_rng(7)
        x = rng.integers(0, 3, 10_000)
        y = np.empty_like(x)
        y[0] = 0
        y[1:] = x[:-1]
        emb = embed(x, y, 5, 5, x_alphabet=3, y_alphabet=3)
        est = transfer_entropy(emb)
        assert est.value_nats == pytest.approx(np.log(3), abs=0.1)

    def test_coupled_markov_matches_brute_force(self):
        x, y, true_te = coupled_markov(10_000, 0.5, seed=8)
        est = transfer_entropy(embed(x, y, 5, 5))
        assert est.value_nats == pytest.approx(true_te, abs=0.1)

    def test_time_shuffled_target_null(self):
        x, y, _ = coupled_markov(10_000, 1.0, seed=9)
        surrogate = make_rng(10).permutation(y)
        est = transfer_entropy(embed(x, surrogate, 5, 5))
        assert abs(est.value_nats) <= 0.05

    def test_asymmetry_on_copy_process(self):
        # ternary copy carries ln 3 of flow forward and none backward
        rng = make_rng(11)
        x = rng.integers(0, 3, 10_000)
        y = np.empty_like(x)
        y[0] = 0
        y[1:] = x[:-1]
        forward_te = transfer_entropy(embed(x, y, 5, 5, 3, 3)).value_nats
        reverse_te = transfer_entropy(embed(y, x, 5, 5, 3, 3)).value_nats
        assert forward_te - reverse_te >= 0.8


class TestRollingTe:
    def test_identical_frames_are_symmetric(self):
        rng = make_rng(12)
        prices = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, 400) - 1))
        f = frame(prices, name="p")
        points = rolling_te(f, f, window_days=30, stride=30, k=2, l=2)
        for p in points:
            # identical inputs and shared seeds: directions coincide exactly
            assert p.te_xy == pytest.approx(p.te_yx, abs=0.05)
            # duplicated-source conditioning adds no real flow
            assert abs(p.te_xy_smoothed) <= 0.1

    def test_non_overlapping_window_count(self):
        rng = make_rng(13)
        n_prices = 400
        prices_a = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, n_prices) - 1))
        prices_b = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, n_prices) - 1))
        window = 50
        k = l = 2
        points = rolling_te(frame(prices_a), frame(prices_b), window, stride=window, k=k, l=l)
        usable = (n_prices - 1) - max(k, l)
        assert len(points) == usable // window

    def test_insufficient_overlap_reports_requirement(self):
        a = frame([100.0] * 20)
        b = frame([100.0] * 20)
        with pytest.raises(ValueError, match="window \\+ max\\(k, l\\) \\+ 1"):
            rolling_te(a, b, window_days=30, k=5, l=5)

    def test_inner_join_on_timestamps(self):
        rng = make_rng(14)
        prices = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, 120) - 1))
        full = frame(prices)
        # drop some interior days from the second frame
        keep = np.ones(120, dtype=bool)
        keep[40:50] = False
        partial = SeriesFrame(full.timestamps[keep], full.values[keep], "partial")
        points = rolling_te(full, partial, window_days=20, stride=20, k=2, l=2)
        usable = (keep.sum() - 1) - 2
        assert len(points) == usable // 20

    def test_regime_shift_detected(self):
        # first half independent, second half copy-coupled
        n = 3000
        rng = make_rng(15)
        x_sym = rng.integers(0, 2, n) * 2 - 1
        y_sym = np.empty(n, dtype=np.int64)
        y_sym[: n // 2] = (rng.integers(0, 2, n // 2) * 2 - 1)
        y_sym[n // 2 :] = x_sym[n // 2 - 1 : -1]
        fx = frame(100 * np.cumprod(1 + 0.016 * x_sym), name="x")
        fy = frame(100 * np.cumprod(1 + 0.016 * y_sym), name="y")
        points = rolling_te(fx, fy, window_days=30, stride=1, k=2, l=2)
        mid = len(points) // 2
        first = float(np.mean([p.te_xy for p in points[: mid - 30]]))
        second = float(np.mean([p.te_xy for p in points[mid + 30 :]]))
        assert second - first >= 0.5

    def test_retrain_mode_runs_and_stays_finite(self):
        rng = make_rng(16)
        pa = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, 200) - 1))
        pb = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, 200) - 1))
        points = rolling_te(
            frame(pa), frame(pb), window_days=60, stride=60, k=2, l=2,
            config=TrainConfig(max_epochs=8, patience=8, seed=17),
            retrain_per_window=True,
        )
        assert points
        for p in points:
            assert np.isfinite(p.te_xy) and np.isfinite(p.te_yx)
            assert np.isfinite(p.te_xy_smoothed)

    def test_stride_one_smoothed_is_trailing_mean(self):
        rng = make_rng(18)
        pa = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, 150) - 1))
        pb = 100 * np.cumprod(1 + 0.02 * (rng.integers(0, 3, 150) - 1))
        window = 25
        points = rolling_te(frame(pa), frame(pb), window, stride=1, k=2, l=2)
        raw = np.array([p.te_xy for p in points])
        assert points[-1].te_xy_smoothed == pytest.approx(float(raw[-window:].mean()), abs=1e-9)


class TestLagEmbeddingType:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            LagEmbedding(
                x_lags=np.zeros((5, 2), int),
                y_lags=np.zeros((5, 3), int),
                y_next=np.zeros(4, dtype=int),
                k=2,
                l=3,
                x_alphabet=3,
                y_alphabet=3,
            )
