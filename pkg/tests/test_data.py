from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datalens.data import (
    SPLITS,
    DelimitedSchema,
    FlipSpec,
    TimeSeriesDataset,
    check_properties,
    concat_splits,
    flip_labels,
    generate_anomaly_dataset,
    generate_multiclass_dataset,
    load_dataset,
    load_delimited,
    load_splits,
    save_dataset,
    write_delimited,
)
from datalens.errors import ArtifactError, ConfigError, DimensionError, ParseError


# generators -------------------------------------------------------------------------------

def test_anomaly_defaults_match_published_shape():
    ds = generate_anomaly_dataset(seed=0)
    assert (ds.size("train"), ds.size("validation"), ds.size("test")) == (45000, 5000, 10000)
    assert ds.samples.shape[1:] == (3, 50) and ds.num_classes == 2
    check_properties(ds, "anomaly")


def _max_abs_z(ds):
    X = ds.samples
    z = (X - X.mean(axis=2, keepdims=True)) / X.std(axis=2, keepdims=True)
    return np.abs(z).max(axis=(1, 2))


def test_exactly_positive_samples_carry_a_spike():
    ds = generate_anomaly_dataset(10, 10, 10, seed=3)
    z = _max_abs_z(ds)
    np.testing.assert_array_equal(z >= 3.0, ds.true_labels == 1)


@pytest.mark.parametrize("seed", range(5))
def test_spike_scan_holds_across_seeds(seed):
    ds = generate_anomaly_dataset(200, 1, 1, seed=seed)
    np.testing.assert_array_equal(_max_abs_z(ds) >= 3.0, ds.true_labels == 1)


def test_generators_are_deterministic():
    a = generate_anomaly_dataset(50, 10, 10, seed=4)
    b = generate_anomaly_dataset(50, 10, 10, seed=4)
    assert a.samples.tobytes() == b.samples.tobytes() and a.fingerprint() == b.fingerprint()
    assert generate_anomaly_dataset(50, 10, 10, seed=5).fingerprint() != a.fingerprint()
    m1 = generate_multiclass_dataset(40, 20, 20, length=16, num_classes=4, seed=1)
    m2 = generate_multiclass_dataset(40, 20, 20, length=16, num_classes=4, seed=1)
    assert m1.fingerprint() == m2.fingerprint()


def test_classes_balanced_within_one():
    ds = generate_anomaly_dataset(101, 11, 13, seed=0)
    for s in SPLITS:
        counts = np.bincount(ds.split_arrays(s, "true")[1], minlength=2)
        assert counts.max() - counts.min() <= 1
    mc = generate_multiclass_dataset(47, 20, 20, length=16, num_classes=5, seed=0)
    counts = np.bincount(mc.split_arrays("train", "true")[1], minlength=5)
    assert counts.max() - counts.min() <= 1


@pytest.mark.parametrize("kwargs", [dict(length=7), dict(n_train=0), dict(n_test=0),
                                    dict(spike_range=(5.0, 4.0))])
def test_anomaly_generator_rejects_bad_arguments(kwargs):
    base = dict(n_train=10, n_val=2, n_test=2)
    with pytest.raises(DimensionError):
        generate_anomaly_dataset(**{**base, **kwargs})


def test_multiclass_defaults_have_character_shape():
    ds = generate_multiclass_dataset(seed=0)
    check_properties(ds, "character_trajectories")


def test_check_properties_rejects_wrong_shape():
    ds = generate_anomaly_dataset(10, 2, 2, seed=0)
    with pytest.raises(DimensionError):
        check_properties(ds, "anomaly")


def test_check_properties_fordb_shape():
    parts = [(s, np.zeros((n, 1, 500)), np.arange(n) % 2)
             for s, n in zip(SPLITS, (2520, 1091, 810))]
    check_properties(concat_splits(parts, 2), "fordb")


# dataset invariants -------------------------------------------------------------------------

def test_dataset_rejects_inconsistent_flip_mask():
    ds = generate_anomaly_dataset(6, 2, 2, seed=0)
    mask = ds.flip_mask.copy()
    mask[0] = True
    with pytest.raises(DimensionError):
        ds.replace(flip_mask=mask)


def test_dataset_rejects_flips_outside_train():
    ds = generate_anomaly_dataset(6, 2, 2, seed=0)
    obs = ds.observed_labels.copy()
    obs[ds.indices("test")[0]] ^= 1
    with pytest.raises(DimensionError):
        ds.replace(observed_labels=obs)


def test_dataset_arrays_are_immutable():
    ds = generate_anomaly_dataset(6, 2, 2, seed=0)
    with pytest.raises(ValueError):
        ds.samples[0, 0, 0] = 1.0


# delimited ----------------------------------------------------------------------------------

def test_two_row_handcrafted_file(tmp_path):
    p = tmp_path / "two.csv"
    p.write_text("7,0.5,1.5,2.5\n3,-1,0,1\n", encoding="utf-8")
    ds = load_delimited(p, DelimitedSchema(1, 3))
    assert ds.samples.shape == (2, 1, 3)
    np.testing.assert_array_equal(ds.true_labels, [1, 0])  # 3 -> 0, 7 -> 1
    assert not ds.flip_mask.any()
    np.testing.assert_array_equal(ds.samples[0, 0], [0.5, 1.5, 2.5])


def test_header_line_is_skipped(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("label,c0_t0,c0_t1\n0,1,2\n1,3,4\n", encoding="utf-8")
    assert len(load_delimited(p, DelimitedSchema(1, 2))) == 2


def test_channel_major_order(tmp_path):
    p = tmp_path / "cm.csv"
    p.write_text("0,1,2,3,10,20,30\n", encoding="utf-8")
    ds = load_delimited(p, DelimitedSchema(2, 3))
    np.testing.assert_array_equal(ds.samples[0], [[1, 2, 3], [10, 20, 30]])


@pytest.mark.parametrize("body, line", [
    ("0,1,2,3\n1,1,2\n", 2),                 # ragged
    ("0,1,2,3\n1,1,x,3\n0,1,1,1\n", 2),      # non-numeric
    ("0,1,2,3\n0,1,2,3\nz,1,2,3\n", 3),      # bad label
    ("0,1,2,3\n5,1,2,3\n", 2),               # outside the closed label set
    ("0,1,nan,3\n", 1),                      # non-finite
])
def test_parse_errors_carry_line_numbers(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body, encoding="utf-8")
    with pytest.raises(ParseError) as e:
        load_delimited(p, DelimitedSchema(1, 3, labels=(0, 1)))
    assert e.value.line == line and f"line {line}" in str(e.value)


def test_missing_delimited_file(tmp_path):
    with pytest.raises(ArtifactError):
        load_delimited(tmp_path / "nope.csv", DelimitedSchema(1, 3))


def test_split_files_share_label_map(tmp_path):
    (tmp_path / "tr.csv").write_text("5,1,1\n9,2,2\n", encoding="utf-8")
    (tmp_path / "te.csv").write_text("9,3,3\n", encoding="utf-8")
    ds = load_splits({"train": tmp_path / "tr.csv", "test": tmp_path / "te.csv"},
                     DelimitedSchema(1, 2))
    np.testing.assert_array_equal(ds.true_labels, [0, 1, 1])
    assert list(ds.split) == ["train", "train", "test"]
    with pytest.raises(ArtifactError):
        load_splits({"holdout": tmp_path / "te.csv"}, DelimitedSchema(1, 2))


def test_delimited_round_trip(tmp_path):
    ds = generate_anomaly_dataset(12, 3, 3, length=9, seed=2)
    for s in SPLITS:
        write_delimited(tmp_path / f"{s}.csv", ds, s, header=(s == "train"))
    back = load_splits({s: tmp_path / f"{s}.csv" for s in SPLITS}, DelimitedSchema(3, 9))
    assert back.samples.tobytes() == ds.samples.tobytes()
    np.testing.assert_array_equal(back.true_labels, ds.true_labels)
    np.testing.assert_array_equal(back.split, ds.split)


# flips --------------------------------------------------------------------------------------

def test_rate_zero_is_identity():
    ds = generate_anomaly_dataset(30, 5, 5, seed=0)
    out = flip_labels(ds, FlipSpec(0.0, seed=1))
    np.testing.assert_array_equal(out.observed_labels, ds.observed_labels)
    assert not out.flip_mask.any()


def test_rate_tenth_of_thousand_flips_exactly_hundred():
    ds = generate_anomaly_dataset(1000, 5, 5, seed=0)
    assert int(flip_labels(ds, FlipSpec(0.1, seed=7)).flip_mask.sum()) == 100


def test_binary_full_flip_is_complement():
    ds = generate_anomaly_dataset(40, 5, 5, seed=0)
    out = flip_labels(ds, FlipSpec(1.0, seed=0))
    tr = out.indices("train")
    np.testing.assert_array_equal(out.observed_labels[tr], 1 - out.true_labels[tr])


def test_flip_rate_validation_and_double_flip():
    for rate in (-0.1, 1.5):
        with pytest.raises(ConfigError):
            FlipSpec(rate)
    ds = flip_labels(generate_anomaly_dataset(20, 2, 2, seed=0), FlipSpec(0.2))
    with pytest.raises(ConfigError):
        flip_labels(ds, FlipSpec(0.1))
    mc = generate_multiclass_dataset(20, 5, 5, length=10, num_classes=3, seed=0)
    with pytest.raises(ConfigError):
        flip_labels(mc, FlipSpec(0.1, mode="binary_complement"))


def test_multiclass_flips_move_to_another_class_uniformly():
    mc = generate_multiclass_dataset(3000, 2, 2, length=8, num_classes=4, seed=0)
    out = flip_labels(mc, FlipSpec(1.0, seed=2))
    tr = out.indices("train")
    delta = (out.observed_labels[tr] - out.true_labels[tr]) % 4
    assert delta.min() >= 1
    counts = np.bincount(delta, minlength=4)[1:]
    assert np.all(np.abs(counts / len(tr) - 1 / 3) < 0.03)


@settings(max_examples=60, deadline=None)
@given(n_train=st.integers(1, 60), n_val=st.integers(1, 10), rate=st.floats(0, 1),
       seed=st.integers(0, 2**31), k=st.integers(2, 5))
def test_flip_invariants(n_train, n_val, rate, seed, k):
    if k == 2:
        ds = generate_anomaly_dataset(n_train, n_val, 2, length=8, seed=seed % 97)
    else:
        ds = generate_multiclass_dataset(n_train, n_val, 2, length=8, num_classes=k, seed=seed % 97)
    spec = FlipSpec(rate, seed=seed)
    out = flip_labels(ds, spec)
    np.testing.assert_array_equal(out.flip_mask, out.observed_labels != out.true_labels)
    assert int(out.flip_mask.sum()) == spec.count(n_train)
    assert not out.flip_mask[out.split != "train"].any()
    np.testing.assert_array_equal(out.true_labels, ds.true_labels)
    assert out.observed_labels.min() >= 0 and out.observed_labels.max() < k
    again = flip_labels(ds, spec)
    np.testing.assert_array_equal(again.observed_labels, out.observed_labels)


def test_flip_count_rounding():
    assert FlipSpec(0.5).count(3) == 2
    assert FlipSpec(0.25).count(10) == 3
    assert FlipSpec(1.0).count(7) == 7


# persistence --------------------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    ds = flip_labels(generate_anomaly_dataset(20, 4, 4, seed=1), FlipSpec(0.25, seed=3))
    path = save_dataset(ds, tmp_path / "d.npz")
    back = load_dataset(path)
    assert back.fingerprint() == ds.fingerprint()
    np.testing.assert_array_equal(back.flip_mask, ds.flip_mask)
    first = path.read_bytes()
    save_dataset(back, path)
    assert path.read_bytes() == first  # byte-stable


def test_load_detects_tampering(tmp_path):
    import json

    ds = generate_anomaly_dataset(8, 2, 2, seed=1)
    path = save_dataset(ds, tmp_path / "d.npz")
    mpath = tmp_path / "d.npz.json"
    man = json.loads(mpath.read_text())
    man["fingerprint"] = "0" * 64
    mpath.write_text(json.dumps(man))
    with pytest.raises(ArtifactError):
        load_dataset(path)
    with pytest.raises(ArtifactError):
        load_dataset(tmp_path / "none.npz")


def test_subset_keeps_invariants():
    ds = flip_labels(generate_anomaly_dataset(20, 4, 4, seed=1), FlipSpec(0.5, seed=3))
    keep = np.arange(0, len(ds), 2)
    sub = ds.subset(keep)
    assert isinstance(sub, TimeSeriesDataset) and len(sub) == keep.size
    np.testing.assert_array_equal(sub.flip_mask, ds.flip_mask[keep])
