import math

import numpy as np
import pytest

from smap.features import (
    FEATURE_SLOTS,
    N_FEATURES,
    ScoreSample,
    fit_feature_stats,
    load_samples,
    normalize_features,
    save_samples,
)


def sample(values, label=0.5, gate=True, ids=("s", "d", "m")):
    return ScoreSample(*ids, features=np.array(values, dtype=float), gate=gate, label=label)


def slots(**overrides):
    base = {name: 0.0 for name in FEATURE_SLOTS}
    base.update(overrides)
    return [base[name] for name in FEATURE_SLOTS]


def test_single_sample_all_stds_zero():
    stats = fit_feature_stats([sample(slots(citations=3, mae=1.5))])
    assert np.all(stats.stds == 0.0)


def test_citations_log1p_stats():
    # log1p of {0, 9} is {0, ln 10}; two symmetric points share mean and std.
    stats = fit_feature_stats([sample(slots(citations=0)), sample(slots(citations=9))])
    expected = math.log(10.0) / 2.0
    assert stats.transforms[0] == "log1p"
    assert stats.means[0] == pytest.approx(1.151293, abs=1e-6)
    assert stats.stds[0] == pytest.approx(1.151293, abs=1e-6)
    assert stats.means[0] == pytest.approx(expected)


def test_mask_slot_identity_transform_and_mean():
    i = FEATURE_SLOTS.index("mae_mask")
    stats = fit_feature_stats([sample(slots(mae_mask=1)), sample(slots(mae_mask=1)), sample(slots(mae_mask=0))])
    assert stats.transforms[i] == "identity"
    assert stats.means[i] == pytest.approx(2.0 / 3.0)


def test_fit_empty_raises():
    with pytest.raises(ValueError):
        fit_feature_stats([])


def test_normalize_zero_variance_slot_maps_to_zero():
    stats = fit_feature_stats([sample(slots(mae=7.0))] * 3)
    out = normalize_features(np.array(slots(mae=123.0)), stats)
    assert out[FEATURE_SLOTS.index("mae")] == 0.0


def test_normalize_hand_computed_zscores():
    i = FEATURE_SLOTS.index("mae")
    training = [sample(slots(mae=v)) for v in (1.0, 2.0, 3.0)]
    stats = fit_feature_stats(training)
    # population std of {1,2,3} is sqrt(2/3) = 0.816497
    assert normalize_features(np.array(slots(mae=2.0)), stats)[i] == pytest.approx(0.0, abs=1e-12)
    assert normalize_features(np.array(slots(mae=3.0)), stats)[i] == pytest.approx(1.224745, abs=1e-6)
    assert normalize_features(np.array(slots(mae=4.0)), stats)[i] == pytest.approx(2.449490, abs=1e-6)


def test_normalize_against_brute_force_recomputation():
    rng = np.random.default_rng(7)
    training = [sample(np.abs(rng.normal(5.0, 2.0, N_FEATURES))) for _ in range(20)]
    stats = fit_feature_stats(training)
    raw = np.abs(rng.normal(5.0, 2.0, N_FEATURES))
    out = normalize_features(raw, stats)
    for i, name in enumerate(FEATURE_SLOTS):
        column = [s.features[i] for s in training]
        if name in ("citations", "github_stars"):
            column = [math.log1p(v) for v in column]
            value = math.log1p(raw[i])
        else:
            value = raw[i]
        mean = sum(column) / len(column)
        std = math.sqrt(sum((v - mean) ** 2 for v in column) / len(column))
        expected = 0.0 if std == 0.0 else (value - mean) / std
        assert out[i] == pytest.approx(expected, rel=1e-12)


def test_label_out_of_range_rejected():
    with pytest.raises(ValueError):
        sample(slots(), label=1.5)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    samples = [
        ScoreSample(f"s{i}", "d0", f"m{i}", rng.uniform(0, 10, N_FEATURES), bool(i % 2), float(rng.uniform()))
        for i in range(6)
    ]
    path = tmp_path / "samples.csv"
    save_samples(path, samples)
    loaded = load_samples(path)
    assert len(loaded) == len(samples)
    for original, back in zip(samples, loaded):
        assert back.scenario_id == original.scenario_id
        assert back.model_id == original.model_id
        assert back.gate == original.gate
        assert back.label == original.label
        assert np.array_equal(back.features, original.features)


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        load_samples(path)
