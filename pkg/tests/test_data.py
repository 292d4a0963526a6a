import logging

import numpy as np
import pytest

from alertanet import data as dp
from alertanet.errors import (
    ConfigError,
    DataIntegrityError,
    DomainError,
    ParseError,
    PreprocessingError,
    SchemaError,
)

from testutil import GOLDEN_PRICES, golden_label_oracle


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def simple_csv(tmp_path):
    return write_csv(
        tmp_path / "ABC.csv",
        ["date", "adj_close", "sent_0", "macro_0"],
        [
            ["2021-01-04", "10.0", "0.5", "1.0"],
            ["2021-01-05", "10.5", "0.25", "2.0"],
            ["2021-01-06", "11.0", "0.75", "3.0"],
        ],
    )


class TestLoadFrame:
    def test_well_formed(self, simple_csv):
        frame = dp.load_frame(simple_csv)
        assert frame.stock_id == "ABC"
        assert frame.dates == ["2021-01-04", "2021-01-05", "2021-01-06"]
        assert frame.feature_names == ["sent_0", "macro_0"]
        assert np.array_equal(frame.adj_close, [10.0, 10.5, 11.0])
        assert np.array_equal(frame.features[:, 1], [1.0, 2.0, 3.0])

    def test_missing_price_column(self, tmp_path):
        path = write_csv(tmp_path / "X.csv", ["date", "close", "sent_0"], [["2021-01-04", "1", "1"]])
        with pytest.raises(SchemaError, match="adj_close"):
            dp.load_frame(path)

    def test_missing_schema_column_listed(self, simple_csv):
        with pytest.raises(SchemaError, match="trend_0"):
            dp.load_frame(simple_csv, schema=["sent_0", "trend_0"])

    def test_shuffled_rows_match_sorted_input(self, tmp_path, simple_csv):
        shuffled = write_csv(
            tmp_path / "ABC2.csv",
            ["date", "adj_close", "sent_0", "macro_0"],
            [
                ["2021-01-06", "11.0", "0.75", "3.0"],
                ["2021-01-04", "10.0", "0.5", "1.0"],
                ["2021-01-05", "10.5", "0.25", "2.0"],
            ],
        )
        sorted_frame = dp.load_frame(simple_csv)
        shuffled_frame = dp.load_frame(shuffled)
        assert shuffled_frame.dates == sorted_frame.dates
        assert np.array_equal(shuffled_frame.adj_close, sorted_frame.adj_close)
        assert np.array_equal(shuffled_frame.features, sorted_frame.features)

    def test_duplicate_date_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "D.csv",
            ["date", "adj_close", "sent_0"],
            [["2021-01-04", "1.0", "0.1"], ["2021-01-04", "2.0", "0.2"]],
        )
        with pytest.raises(DataIntegrityError, match="duplicate date 2021-01-04"):
            dp.load_frame(path)

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = write_csv(
            tmp_path / "N.csv",
            ["date", "adj_close", "sent_0"],
            [["2021-01-04", "1.0", "0.1"], ["2021-01-05", "oops", "0.2"]],
        )
        with pytest.raises(ParseError, match="row 3"):
            dp.load_frame(path)

    def test_negative_feature_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "G.csv",
            ["date", "adj_close", "macro_0"],
            [["2021-01-04", "1.0", "-0.5"]],
        )
        with pytest.raises(PreprocessingError, match="macro_0"):
            dp.load_frame(path)

    def test_nonpositive_price_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "P.csv",
            ["date", "adj_close", "sent_0"],
            [["2021-01-04", "0.0", "0.5"]],
        )
        with pytest.raises(DataIntegrityError, match="adj_close"):
            dp.load_frame(path)

    def test_schema_selects_and_orders_columns(self, simple_csv):
        frame = dp.load_frame(simple_csv, schema=["macro_0", "sent_0"])
        assert frame.feature_names == ["macro_0", "sent_0"]
        assert np.array_equal(frame.features[0], [1.0, 0.5])

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(17)
        frame = dp.FeatureFrame(
            stock_id="RT",
            dates=[f"2021-02-{d:02d}" for d in range(1, 11)],
            adj_close=rng.uniform(5, 500, size=10),
            feature_names=["sent_0", "trend_0", "macro_0"],
            features=rng.uniform(0, 3, size=(10, 3)),
        )
        out = tmp_path / "RT.csv"
        dp.write_frame(frame, out)
        loaded = dp.load_frame(out)
        assert np.array_equal(loaded.adj_close, frame.adj_close)
        assert np.array_equal(loaded.features, frame.features)
        assert loaded.dates == frame.dates


class TestNormalize:
    def test_zero_maps_to_log_epsilon(self):
        got = dp.normalize(np.zeros((1, 1)), 1e-8)
        assert got[0, 0] == pytest.approx(-18.420681, abs=1e-6)

    def test_one_minus_epsilon_maps_to_zero(self):
        got = dp.normalize(np.full((2, 2), 1.0 - 1e-8), 1e-8)
        assert np.allclose(got, 0.0, atol=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(2)
        raw = rng.uniform(0, 7, size=(5, 9))
        got = dp.normalize(raw, 1e-8)
        import math

        for i in range(5):
            for j in range(9):
                assert got[i, j] == math.log(raw[i, j] + 1e-8)

    def test_negative_entry_names_feature(self):
        raw = np.array([[0.1, 0.2], [0.3, -0.4]])
        with pytest.raises(PreprocessingError, match="tweet_count"):
            dp.normalize(raw, feature_names=["sent_0", "tweet_count"])

    def test_preserves_elementwise_order(self):
        rng = np.random.default_rng(8)
        a = rng.uniform(0, 5, size=(4, 6))
        b = a + rng.uniform(0.01, 1, size=(4, 6))
        na, nb = dp.normalize(a), dp.normalize(b)
        assert np.all(nb > na)


class TestLabels:
    def test_movement_examples(self):
        assert dp.movement_label(100, 101) == 1
        assert dp.movement_label(100, 100.3) == dp.ABSTAIN
        assert dp.movement_label(100, 99.0) == 0

    def test_movement_boundaries_belong_to_directional_classes(self):
        assert dp.movement_label(100, 100.5) == 1
        assert dp.movement_label(100, 99.5) == 0

    def test_movement_domain_error(self):
        with pytest.raises(DomainError):
            dp.movement_label(0.0, 1.0)
        with pytest.raises(DomainError):
            dp.movement_label(-5.0, 1.0)

    def test_volatility_examples(self):
        assert dp.volatility_label(100, 106) == 1
        assert dp.volatility_label(100, 95.0) == 1  # |-5%| sits exactly on the closed boundary
        assert dp.volatility_label(100, 102) == 0

    def test_volatility_domain_error(self):
        with pytest.raises(DomainError):
            dp.volatility_label(0.0, 1.0)

    def test_golden_fixture_matches_rational_oracle(self):
        prices = [float(p) for p in GOLDEN_PRICES]
        expect_m, expect_v = golden_label_oracle(GOLDEN_PRICES, dp.ABSTAIN)
        got_m = [dp.movement_label(a, b) for a, b in zip(prices, prices[1:])]
        got_v = [dp.volatility_label(a, b) for a, b in zip(prices, prices[1:])]
        assert got_m == expect_m
        assert got_v == expect_v
        # fixture exercises every outcome
        assert {0, 1, dp.ABSTAIN} <= set(got_m)
        assert {0, 1} <= set(got_v)


def make_frame(stock_id, n_days, seed=0, start_day=1):
    rng = np.random.default_rng(seed)
    return dp.FeatureFrame(
        stock_id=stock_id,
        dates=[f"2022-01-{d:02d}" for d in range(start_day, start_day + n_days)],
        adj_close=rng.uniform(50, 150, size=n_days),
        feature_names=["sent_0", "price_0"],
        features=rng.uniform(0, 1, size=(n_days, 2)),
    )


class TestWindow:
    def test_eleven_days_window_ten_gives_one_sample(self):
        samples = dp.window(make_frame("A", 11), 10)
        assert len(samples) == 1
        assert samples[0].x.shape == (2, 10)

    def test_ten_days_window_ten_gives_zero_samples(self, caplog):
        with caplog.at_level(logging.WARNING):
            samples = dp.window(make_frame("A", 10), 10)
        assert samples == []
        assert any("too short" in r.message or "skipped" in r.message for r in caplog.records)

    def test_sample_count(self):
        assert len(dp.window(make_frame("A", 25), 10)) == 15

    def test_no_temporal_leakage_and_normalized_content(self):
        frame = make_frame("A", 14, seed=3)
        samples = dp.window(frame, 5)
        for k, sample in enumerate(samples):
            t = 5 + k
            assert sample.target_date == frame.dates[t]
            expected = dp.normalize(frame.features[t - 5 : t].T, dp.DEFAULT_EPSILON)
            assert np.array_equal(sample.x, expected)
            # all feature days strictly before the target day
            assert frame.dates[t - 1] < sample.target_date

    def test_labels_follow_price_pair(self):
        frame = make_frame("A", 12, seed=4)
        for k, sample in enumerate(dp.window(frame, 10)):
            t = 10 + k
            assert sample.y_m == dp.movement_label(frame.adj_close[t - 1], frame.adj_close[t])
            assert sample.y_v == dp.volatility_label(frame.adj_close[t - 1], frame.adj_close[t])


class TestChronoSplit:
    def test_fraction_counts(self):
        samples = dp.window(make_frame("A", 20), 10)
        assert len(samples) == 10
        split = dp.chrono_split(samples, 0.6, 0.2)
        assert (len(split.train), len(split.validation), len(split.test)) == (6, 2, 2)

    def test_too_small_split_is_config_error(self):
        samples = dp.window(make_frame("A", 20), 10)
        with pytest.raises(ConfigError, match="empty split"):
            dp.chrono_split(samples, 0.95, 0.04)

    def test_bad_fractions(self):
        samples = dp.window(make_frame("A", 20), 10)
        for train_frac, valid_frac in [(0.0, 0.2), (0.5, 0.5), (0.9, 0.2), (-0.1, 0.3)]:
            with pytest.raises(ConfigError):
                dp.chrono_split(samples, train_frac, valid_frac)

    def test_multi_stock_dates_never_straddle(self):
        frames = [make_frame(sid, 24, seed=i) for i, sid in enumerate(["AAA", "BBB", "CCC"])]
        samples = [s for f in frames for s in dp.window(f, 10)]
        split = dp.chrono_split(samples, 0.6, 0.2)
        max_train = max(s.target_date for s in split.train)
        min_valid = min(s.target_date for s in split.validation)
        max_valid = max(s.target_date for s in split.validation)
        min_test = min(s.target_date for s in split.test)
        assert max_train < min_valid
        assert max_valid < min_test
        train_dates = {s.target_date for s in split.train}
        valid_dates = {s.target_date for s in split.validation}
        test_dates = {s.target_date for s in split.test}
        assert not (train_dates & valid_dates) and not (valid_dates & test_dates) and not (train_dates & test_dates)


class TestAblationTaxonomy:
    def test_categories(self):
        assert dp.feature_category("sent_3") == "sentiment"
        assert dp.feature_category("macro_cpi") == "macro"
        assert dp.feature_category("price_level") == "price"
        assert dp.feature_category("adj_close") == "price"
        assert dp.feature_category("trend_gdp") == "trend"
        assert dp.feature_category("tweet_count") == "tweet"
        assert dp.feature_category("mystery") == "other"

    def test_mode_subsets(self):
        names = ["sent_0", "sent_1", "macro_0", "price_0", "trend_0"]
        assert dp.ablation_feature_indices(names, "full") == [0, 1, 2, 3, 4]
        assert dp.ablation_feature_indices(names, "p") == [3]
        assert dp.ablation_feature_indices(names, "s") == [0, 1]
        assert dp.ablation_feature_indices(names, "wo-m") == [0, 1, 3, 4]
        assert dp.ablation_feature_indices(names, "WO_M") == [0, 1, 3, 4]

    def test_empty_subset_is_config_error(self):
        with pytest.raises(ConfigError):
            dp.ablation_feature_indices(["macro_0"], "s")

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            dp.normalize_ablation_mode("everything")


class TestDatasetRoundTrip:
    def test_save_load_bitwise(self, tmp_path):
        frames = [make_frame(sid, 26, seed=i) for i, sid in enumerate(["AAA", "BBB"])]
        split, warnings = dp.build_dataset(frames, window_len=10, train_frac=0.6, valid_frac=0.2)
        assert warnings == []
        path = tmp_path / "dataset.json"
        dp.save_dataset(path, split)
        loaded = dp.load_dataset(path)
        assert loaded.feature_names == split.feature_names
        assert loaded.window == split.window
        assert loaded.boundaries == split.boundaries
        for name in ("train", "validation", "test"):
            original, restored = split.splits()[name], loaded.splits()[name]
            assert len(original) == len(restored)
            for a, b in zip(original, restored):
                assert np.array_equal(a.x, b.x)
                assert (a.y_m, a.y_v, a.stock_id, a.target_date) == (b.y_m, b.y_v, b.stock_id, b.target_date)

    def test_build_dataset_warns_on_short_frame(self):
        frames = [make_frame("AAA", 26), make_frame("SHORT", 5, seed=9)]
        split, warnings = dp.build_dataset(frames, window_len=10, train_frac=0.6, valid_frac=0.2)
        assert len(warnings) == 1 and "SHORT" in warnings[0]

    def test_build_dataset_rejects_mismatched_schemas(self):
        a = make_frame("AAA", 15)
        b = make_frame("BBB", 15)
        b.feature_names = ["sent_0", "macro_9"]
        with pytest.raises(SchemaError):
            dp.build_dataset([a, b], window_len=5)

    def test_build_dataset_requires_frames(self):
        with pytest.raises(ConfigError, match="no input frames"):
            dp.build_dataset([], window_len=5)
