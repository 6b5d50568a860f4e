from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datalens.data import FlipSpec, flip_labels, generate_anomaly_dataset
from datalens.errors import ConfigError, DimensionError, ExperimentError, MetricError
from datalens.harness import (
    PRESETS,
    TABLE_COLUMNS,
    Cell,
    CombinationSpec,
    RankingSpec,
    combine,
    correction_experiment,
    default_ratios,
    deleted_dataset,
    deletion_experiment,
    derive_seeds,
    detection_diff,
    detection_rate,
    inspect,
    inspected_count,
    inspection_curve,
    minmax,
    parse_config,
    parse_ranking,
    preset,
    rank,
    retrain_accuracy,
    run_cell,
    timing_report,
)
from datalens.harness import tables
from datalens.model import ArchitectureSpec, ConvBlock, TrainConfig
from datalens.scoring import ScoreVector, random_scores


def sv(values, method="x"):
    return ScoreVector(method, np.asarray(values, dtype=float), "")


# rank ---------------------------------------------------------------------------------------

def test_rank_examples():
    s = sv([0.5, -2.0, 3.0])
    np.testing.assert_array_equal(rank(s, RankingSpec("influence", "low_first")), [1, 0, 2])
    np.testing.assert_array_equal(rank(s, RankingSpec("influence", "absolute_high_first")), [2, 1, 0])
    np.testing.assert_array_equal(rank(s, RankingSpec("influence", "high_first")), [2, 0, 1])
    np.testing.assert_array_equal(rank(sv(np.full(6, 1.5)), RankingSpec("loss")), np.arange(6))


def test_rank_ties_break_by_index_in_every_direction():
    s = sv([1.0, -1.0, 1.0, 0.0, -1.0])
    np.testing.assert_array_equal(rank(s, RankingSpec("influence", "absolute_high_first")),
                                  [0, 1, 2, 4, 3])
    np.testing.assert_array_equal(rank(s, RankingSpec("influence", "low_first")), [1, 4, 3, 0, 2])


def test_ranking_spec_checks_direction_semantics():
    with pytest.raises(ConfigError):
        RankingSpec("representer", "absolute_high_first")
    with pytest.raises(ConfigError):
        RankingSpec("loss", "low_first")
    with pytest.raises(ConfigError):
        RankingSpec("influence", "sideways")


def test_table_columns_and_labels_round_trip():
    labels = [s.label for s in TABLE_COLUMNS]
    assert labels == ["classwise_low", "classwise_high", "classwise_absolute", "influence_low",
                      "influence_high", "influence_absolute", "representer_low",
                      "representer_high", "loss", "random"]
    assert all(parse_ranking(l) == s for l, s in zip(labels, TABLE_COLUMNS))
    with pytest.raises(ConfigError):
        parse_ranking("tracin_high")


# detection ------------------------------------------------------------------------------------

def test_detection_hand_enumerated():
    mask = np.zeros(10, bool)
    mask[[2, 5]] = True
    ranking = np.array([1, 2, 3, 4, 5, 6, 7, 8, 9, 0])
    assert detection_rate(ranking, mask, 0.3) == 0.5
    res = inspect(ranking, mask, 0.3)
    assert res.detected == 1 and res.total_flips == 2
    np.testing.assert_array_equal(res.inspected, [1, 2, 3])


def test_full_inspection_detects_everything():
    mask = np.random.default_rng(0).random(50) < 0.2
    perm = np.random.default_rng(1).permutation(50)
    assert detection_rate(perm, mask, 1.0) == 1.0


def test_inspected_count_is_ceiling():
    assert inspected_count(4500, 0.1) == 450
    assert inspected_count(10, 0.25) == 3
    assert inspected_count(7, 1.0) == 7
    assert inspected_count(7, 0.0) == 0


def test_detection_errors():
    with pytest.raises(MetricError):
        detection_rate(np.arange(4), np.zeros(4, bool), 0.5)
    with pytest.raises(ConfigError):
        detection_rate(np.arange(4), np.ones(4, bool), 0.0)
    with pytest.raises(DimensionError):
        detection_rate(np.array([0, 0, 1, 2]), np.ones(4, bool), 0.5)


def test_random_ranking_at_half_inspection():
    n = 4500
    mask = np.zeros(n, bool)
    mask[np.random.default_rng(3).choice(n, 450, replace=False)] = True
    rates = [detection_rate(rank(random_scores(n, s), RankingSpec("random")), mask, 0.5)
             for s in range(5)]
    assert all(abs(r - 0.5) <= 0.03 for r in rates)


# curves ---------------------------------------------------------------------------------------

def test_perfect_ranking_saturates_at_flip_rate():
    n = 1000
    mask = np.zeros(n, bool)
    mask[np.random.default_rng(0).choice(n, 100, replace=False)] = True
    order = np.argsort(~mask, kind="stable")
    curve = inspection_curve(order, mask, default_ratios(0.01))
    rates = np.array([c.detection_rate for c in curve])
    assert rates[9] == 1.0 and np.all(rates[9:] == 1.0)
    np.testing.assert_allclose(rates[:9], np.arange(1, 10) / 10)


def test_random_curve_is_near_diagonal():
    n = 4500
    mask = np.zeros(n, bool)
    mask[np.random.default_rng(4).choice(n, 450, replace=False)] = True
    order = rank(random_scores(n, 9), RankingSpec("random"))
    curve = inspection_curve(order, mask, default_ratios(0.05))
    assert all(abs(c.detection_rate - c.inspection_ratio) <= 0.05 for c in curve)


def test_curve_agrees_with_single_point_metric():
    rng = np.random.default_rng(5)
    mask = rng.random(300) < 0.1
    order = rng.permutation(300)
    ratios = [0.01, 0.1, 0.33, 1.0]
    assert [c.detection_rate for c in inspection_curve(order, mask, ratios)] == \
        [detection_rate(order, mask, r) for r in ratios]


def test_loss_curve_diminishing_returns(small_run):
    ds, model, _ = small_run
    from datalens.scoring import loss_scores

    order = rank(loss_scores(model, ds), RankingSpec("loss"))
    curve = inspection_curve(order, ds.train_flip_mask(), default_ratios(0.05))
    rates = np.array([c.detection_rate for c in curve])
    assert rates[4] >= rates[1]  # 25% vs 10%
    gains = np.diff(rates)
    assert gains[4:].mean() < gains[:2].mean()


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2**32 - 1),
       st.lists(st.floats(0.001, 1.0), min_size=1, max_size=12))
def test_nested_prefixes_and_monotone_curves(n, seed, ratios):
    rng = np.random.default_rng(seed)
    mask = rng.random(n) < 0.3
    mask[rng.integers(n)] = True
    order = rank(sv(rng.standard_normal(n)), RankingSpec("influence"))
    ratios = sorted(ratios)
    curve = inspection_curve(order, mask, ratios)
    for a, b in zip(curve, curve[1:]):
        assert set(a.inspected) <= set(b.inspected)
        assert np.array_equal(b.inspected[:len(a.inspected)], a.inspected)
        assert a.detection_rate <= b.detection_rate
    assert all(0.0 <= c.detection_rate <= 1.0 for c in curve)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.floats(0.01, 1.0),
       st.sampled_from(["exp", "cube", "affine", "arctan"]))
def test_detection_invariant_under_monotone_transforms(n, seed, ratio, transform):
    rng = np.random.default_rng(seed)
    key = np.round(rng.standard_normal(n), 2)  # rounding creates ties on purpose
    mask = rng.random(n) < 0.3
    mask[0] = True
    f = {"exp": np.exp, "cube": lambda x: x ** 3, "affine": lambda x: 3 * x + 7,
         "arctan": np.arctan}[transform]
    spec = RankingSpec("influence", "high_first")
    assert detection_rate(rank(sv(key), spec), mask, ratio) == \
        detection_rate(rank(sv(f(key)), spec), mask, ratio)


# combine --------------------------------------------------------------------------------------

def test_minmax_examples():
    np.testing.assert_array_equal(minmax(np.array([1.0, 3.0, 5.0])), [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(minmax(np.full(4, 2.0)), np.zeros(4))


def test_combination_spec_validation():
    with pytest.raises(ConfigError):
        CombinationSpec(())
    with pytest.raises(ConfigError):
        CombinationSpec.from_labels(["loss", "influence_low"], [0.7, 0.7])
    with pytest.raises(ConfigError):
        CombinationSpec.from_labels(["loss", "influence_low"], [1.2, -0.2])
    with pytest.raises(ConfigError):
        CombinationSpec.from_labels(["loss"], [0.5, 0.5])
    spec = CombinationSpec.from_labels(["classwise_low", "loss"])
    assert spec.weights == (0.5, 0.5) and spec.label == "classwise_low+loss"
    assert preset("loss+classwise_low") == spec
    assert set(PRESETS) >= {"loss+classwise_low", "loss+representer"}
    with pytest.raises(ConfigError):
        preset("nope")


def test_combine_weighted_sum_and_direction():
    scores = {"loss": sv([1.0, 3.0, 5.0], "loss"), "influence": sv([2.0, 0.0, 1.0], "influence")}
    out = combine(scores, CombinationSpec.from_labels(["loss", "influence_low"], [0.25, 0.75]))
    # loss -> [0, .5, 1]; influence low_first key [-2, 0, -1] -> [0, 1, .5]
    np.testing.assert_allclose(out.values, [0.0, 0.875, 0.625])
    assert out.direction_semantics == "high = suspicious"
    with pytest.raises(DimensionError):
        combine({"loss": sv([1.0, 2.0], "loss"), "influence": sv([1.0], "influence")},
                CombinationSpec.from_labels(["loss", "influence_low"]))
    with pytest.raises(ConfigError):
        combine({"loss": sv([1.0], "loss")}, CombinationSpec.from_labels(["loss", "influence_low"]))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1), st.integers(0, 2),
       st.sampled_from(["influence_low", "influence_high", "influence_absolute", "loss"]))
def test_one_hot_combination_reproduces_constituent_ranking(n, seed, hot, label):
    rng = np.random.default_rng(seed)
    scores = {"influence": sv(rng.standard_normal(n), "influence"),
              "loss": sv(rng.exponential(size=n), "loss"),
              "representer": sv(rng.standard_normal(n), "representer")}
    labels = [label, "representer_high", "representer_low"]
    labels[0], labels[hot] = labels[hot], labels[0]
    w = [0.0, 0.0, 0.0]
    w[hot] = 1.0
    spec = CombinationSpec.from_labels(labels, w)
    lone = parse_ranking(labels[hot])
    np.testing.assert_array_equal(rank(combine(scores, spec), RankingSpec("combined")),
                                  rank(scores[lone.source], lone))


# experiments -----------------------------------------------------------------------------------

TINY_ARCH = ArchitectureSpec(3, 50, (ConvBlock(4, 5, 2),), 0, 2)
TINY_CFG = TrainConfig(epochs=4, seed=0)


@pytest.fixture(scope="module")
def tiny():
    return flip_labels(generate_anomaly_dataset(300, 50, 300, seed=1), FlipSpec(0.25, seed=1))


def test_derive_seeds_distinct_and_reproducible():
    a = derive_seeds(0, 10)
    assert a == derive_seeds(0, 10) and len(set(a)) == 10 and a != derive_seeds(1, 10)


def test_ratio_zero_equals_baseline(tiny):
    order = np.arange(tiny.size("train"))
    c = correction_experiment(tiny, order, 0.0, TINY_ARCH, TINY_CFG, repeats=2)
    d = deletion_experiment(tiny, order, 0.0, TINY_ARCH, TINY_CFG, repeats=2)
    assert c.stats == c.baseline == d.stats == d.baseline
    assert c.changed == 0 and d.changed == 0 and c.inspected == 0


def test_full_correction_not_worse_than_uncorrected(tiny):
    order = np.arange(tiny.size("train"))
    # a setup that learns the task in seconds; TINY_CFG is too short to separate the two
    res = correction_experiment(tiny, order, 1.0, ArchitectureSpec.default(3, 50, 2),
                                TrainConfig(epochs=20, learning_rate=3e-3), repeats=3)
    assert res.flips_remaining == 0 and res.changed == int(tiny.flip_mask.sum())
    assert res.stats.mean >= res.baseline.mean


def test_perfect_deletion_matches_clean_control(tiny):
    fm = tiny.train_flip_mask()
    order = np.argsort(~fm, kind="stable")
    res = deletion_experiment(tiny, order, 0.25, TINY_ARCH, TINY_CFG, repeats=3, baseline=False)
    assert res.flips_remaining == 0 and res.baseline is None
    clean = tiny.subset(np.flatnonzero(~tiny.flip_mask))
    control = retrain_accuracy(clean, TINY_ARCH, TINY_CFG, 3)
    assert res.stats.accuracies == control.accuracies  # identical data, identical seeds


def test_deletion_emptying_a_class_errors(tiny):
    y = tiny.split_arrays("train")[1]
    order = np.argsort(y != 1, kind="stable")  # every class-1 sample first
    ratio = (y == 1).mean()
    with pytest.raises(ExperimentError, match="class"):
        deleted_dataset(tiny, order, ratio)


def test_experiment_needs_flips():
    clean = generate_anomaly_dataset(20, 5, 5, seed=0)
    with pytest.raises(MetricError):
        correction_experiment(clean, np.arange(20), 0.5, TINY_ARCH, TINY_CFG, repeats=1)


def test_experiment_result_serialises(tiny):
    res = correction_experiment(tiny, np.arange(tiny.size("train")), 0.1, TINY_ARCH, TINY_CFG,
                                repeats=1, baseline=False)
    d = res.to_dict()
    assert d["kind"] == "correction" and d["inspected"] == 30
    json.dumps(d)


# detection diff --------------------------------------------------------------------------------

def test_diff_perfect_single_method():
    mask = np.zeros(20, bool)
    mask[[3, 7, 11]] = True
    d = detection_diff({"perfect": np.argsort(~mask, kind="stable")}, mask, 0.15)
    assert d.detected.all() and list(d.samples) == [3, 7, 11]


def test_diff_disjoint_rankings_union_beats_either():
    mask = np.zeros(20, bool)
    mask[[1, 2, 3, 4]] = True
    a = np.array([1, 2] + [i for i in range(20) if i not in (1, 2)])
    b = np.array([3, 4] + [i for i in range(20) if i not in (3, 4)])
    d = detection_diff({"a": a, "b": b}, mask, 0.1)
    assert d.union().sum() == 4 > max(d.detected[:, 0].sum(), d.detected[:, 1].sum())
    assert d.rows()[0] == {"sample_index": 1, "a": 1, "b": 0}


def test_diff_window_row_count():
    mask = np.random.default_rng(0).random(100) < 0.2
    d = detection_diff({"r": np.arange(100)}, mask, 0.5, (10, 40))
    assert len(d.samples) == int(mask[10:40].sum())
    with pytest.raises(ConfigError):
        detection_diff({"r": np.arange(100)}, mask, 0.5, (50, 200))


# timing ---------------------------------------------------------------------------------------

def test_timing_report_conventions(small_run):
    ds, model, _ = small_run
    rep = timing_report(["loss", "representer", "random"], ds, model)
    assert rep.seconds("loss") == 0.0
    entry = {e.method: e for e in rep.entries}
    assert "measured_seconds" in entry["loss"].settings
    assert entry["representer"].seconds > 0 and "l2" in entry["representer"].settings
    assert set(rep.scores) == {"loss", "representer", "random"}
    with pytest.raises(KeyError):
        timing_report(["tracin"], ds, model)


# grid config ----------------------------------------------------------------------------------

BASE = {"datasets": [{"name": "a", "n_train": 90, "n_val": 20, "n_test": 30}]}


@pytest.mark.parametrize("patch, needle", [
    ({"flip_rates": [1.5]}, "flip_rates"),
    ({"methods": ["loss", "tracin"]}, "methods"),
    ({"surprise": 1}, "surprise"),
    ({"train": {"epochs": 0}}, "epochs"),
    ({"influence": {"solver": "newton"}}, "solver"),
    ({"rankings": ["influence_low"], "methods": ["loss"]}, "needs method"),
    ({"combinations": ["loss+nothing"]}, "combination"),
    ({"datasets": [{"name": "a"}, {"name": "a"}]}, "unique"),
    ({"datasets": [{"name": "a", "source": "anomaly", "num_classes": 3}]}, "binary"),
    ({"experiments": {"correction": True, "ranking": "loss_low"}}, "ranking"),
])
def test_config_schema_violations(patch, needle):
    with pytest.raises(ConfigError, match="config schema violation") as e:
        parse_config({**BASE, **patch})
    assert needle in str(e.value)


def test_config_digest_is_canonical():
    a = parse_config({**BASE, "seeds": [0, 1]})
    b = parse_config({"seeds": [0, 1], **BASE})
    assert a.digest() == b.digest()
    assert a.digest() != parse_config({**BASE, "seeds": [0]}).digest()
    assert [c.key for c in a.cells()] == ["a/seed0/flip0.1", "a/seed1/flip0.1"]
    assert Cell.from_dict(a.cells()[1].to_dict()) == a.cells()[1]


def test_run_cell_in_memory_and_tables(tmp_path):
    grid = parse_config({**BASE, "train": {"epochs": 2},
                         "methods": ["loss", "influence", "representer", "random"],
                         "combinations": ["loss+influence_low"],
                         "detection_diff": {"ratio": 0.2, "rankings": ["loss"]}})
    report = run_cell(grid, grid.cells()[0])
    s = report.summary()
    assert set(s["detection"]) == {"influence_low", "influence_high", "influence_absolute",
                                   "representer_low", "representer_high", "loss", "random"}
    assert len(s["curves"]["loss"]) == 100 and "influence_low+loss" in s["combined"]
    path = tables.detection_table([s], tmp_path / "t.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["dataset", "seed", "model_accuracy", "mislabeled", "inspected",
                       "influence_low", "influence_high", "influence_absolute",
                       "representer_low", "representer_high", "loss", "random"]
    assert len(rows) == 1 + len(grid.inspection_ratios)
    again = tables.detection_table([run_cell(grid, grid.cells()[0]).summary()], tmp_path / "u.csv")
    assert path.read_bytes() == again.read_bytes()
