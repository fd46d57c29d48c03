import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c2ae.data import (
    MISSING,
    NEG,
    POS,
    BatchPlan,
    DatasetFormatError,
    MultiLabelDataset,
    batches,
    format_dataset,
    load_dataset,
    mask_labels,
    parse_dataset,
    preprocess_missing_inputs,
    save_dataset,
    split,
    synth_correlated,
    tiny_dataset_path,
)

SAMPLE = """2 3 2
0 0:1.0 2:0.5
1,?0 1:2.0
"""


def test_parse_sample():
    ds = parse_dataset(SAMPLE)
    np.testing.assert_array_equal(ds.features, [[1.0, 0.0], [0.0, 2.0], [0.5, 0.0]])
    np.testing.assert_array_equal(ds.labels, [[POS, MISSING], [NEG, POS]])


def test_parse_comments_and_empty_label_field():
    ds = parse_dataset("# comment\n1 2 3\n# another\n0:1.5 1:-2\n")
    assert ds.n_instances == 1
    assert np.all(ds.labels == NEG)
    np.testing.assert_array_equal(ds.features[:, 0], [1.5, -2.0])


@pytest.mark.parametrize("text, fragment", [
    ("2 5 2\n0 10:1.0\n1 0:1\n", "line 2"),
    ("1 3 2\n0 1:1.0 1:2.0\n", "duplicate"),
    ("1 3 2\n0 2:1.0 1:2.0\n", "not increasing"),
    ("1 3 2\n5 1:1.0\n", "label index 5"),
    ("1 3 2\n0 1-1.0\n", "line 2"),
    ("2 3 2\n0 1:1.0\n", "declares 2"),
    ("x y\n", "header"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(DatasetFormatError, match=fragment):
        parse_dataset(text)


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    features = rng.normal(size=(5, 30)) * (rng.random((5, 30)) < 0.6)
    features[0, 0] = -0.0
    features[1, 1] = 1e-310
    labels = rng.choice([POS, NEG, MISSING], size=(4, 30), p=[0.3, 0.5, 0.2]).astype(np.int8)
    labels[0] = POS
    features[:, 3] = 0.0
    labels[:, 3] = NEG
    ds = MultiLabelDataset(features, labels)
    path = tmp_path / "ds.txt"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back == ds
    assert np.signbit(back.features[0, 0])
    assert format_dataset(back) == path.read_text()


def test_dataset_rejects_all_missing_instance():
    with pytest.raises(ValueError):
        MultiLabelDataset(np.zeros((2, 1)), np.array([[MISSING], [MISSING]]))


# masking ---------------------------------------------------------------------


def test_mask_rate_zero_is_identity():
    ds = synth_correlated(50, 4, 6, seed=0)
    assert mask_labels(ds, 0.0, seed=3) == ds


def test_mask_rate_and_protected_positive():
    ds = synth_correlated(1000, 5, 10, seed=0)
    masked = mask_labels(ds, 0.3, seed=1)
    frac = np.mean(masked.labels == MISSING)
    # one of ~3 positives per instance is exempt, so the realised rate sits below 0.3
    assert 0.25 <= frac <= 0.30
    known_frac = np.sum(masked.labels == MISSING) / (ds.labels.size - ds.n_instances)
    assert abs(known_frac - 0.30) <= 0.02
    assert np.all(np.any(masked.labels == POS, axis=0))
    np.testing.assert_array_equal(masked.features, ds.features)


def test_mask_only_hides_known_labels():
    ds = synth_correlated(200, 3, 8, seed=2)
    masked = mask_labels(ds, 0.5, seed=2)
    changed = masked.labels != ds.labels
    assert np.all(masked.labels[changed] == MISSING)


def test_mask_is_deterministic():
    ds = synth_correlated(100, 3, 5, seed=0)
    assert mask_labels(ds, 0.4, seed=9) == mask_labels(ds, 0.4, seed=9)


def test_mask_errors():
    ds = synth_correlated(20, 3, 5, seed=0)
    with pytest.raises(ValueError):
        mask_labels(mask_labels(ds, 0.5, seed=0), 0.1)
    no_pos = MultiLabelDataset(np.zeros((1, 2)), np.array([[POS, NEG]]))
    with pytest.raises(ValueError):
        mask_labels(no_pos, 0.1)


# encoder input preprocessing ---------------------------------------------------


def test_preprocess_examples():
    out = preprocess_missing_inputs(np.array([[POS, POS], [MISSING, NEG], [NEG, POS], [NEG, NEG]]))
    np.testing.assert_array_equal(out[:, 0], [1.0, 0.0, -0.5, -0.5])
    np.testing.assert_array_equal(preprocess_missing_inputs(np.array([[POS], [NEG]]))[:, 0], [1.0, -1.0])
    np.testing.assert_array_equal(out[:, 1], [1.0, -1.0, 1.0, -1.0])


@given(st.integers(0, 10_000))
@settings(max_examples=80, deadline=None)
def test_preprocess_zero_mean(seed):
    rng = np.random.default_rng(seed)
    labels = rng.choice([POS, NEG, MISSING], size=(9, 12))
    out = preprocess_missing_inputs(labels)
    has_neg = np.any(labels == NEG, axis=0)
    # exact for ratios representable in binary, within rounding otherwise
    assert np.all(np.abs(out.sum(axis=0)[has_neg]) <= 1e-12)
    assert np.all(out[labels == MISSING] == 0.0)


# split and batches -------------------------------------------------------------


def test_split_sizes_and_partition():
    ds = synth_correlated(6, 2, 3, seed=0)
    train, val = split(ds, 1 / 6, seed=0)
    assert (train.n_instances, val.n_instances) == (5, 1)
    ds = synth_correlated(300, 2, 3, seed=0)
    train, val = split(ds, 1 / 6, seed=4)
    assert val.n_instances == 50
    cols = np.concatenate([train.features[0], val.features[0]])
    assert sorted(cols) == sorted(ds.features[0])
    again_train, _ = split(ds, 1 / 6, seed=4)
    assert again_train == train


def test_split_degenerate():
    ds = synth_correlated(3, 2, 3, seed=0)
    with pytest.raises(ValueError):
        split(ds, 0.01)
    with pytest.raises(ValueError):
        split(ds, 1.0)


def test_batch_sizes():
    ds = synth_correlated(10, 2, 3, seed=0)
    sizes = [b.indices.size for b in batches(ds, BatchPlan(4, seed=0))]
    assert sizes == [4, 4, 2]


@given(st.integers(1, 60), st.integers(1, 70), st.integers(0, 100))
@settings(max_examples=60, deadline=None)
def test_batches_cover_each_instance_once(n, batch_size, seed):
    ds = MultiLabelDataset(np.arange(n, dtype=float)[None, :], np.ones((1, n)))
    plan = BatchPlan(batch_size, seed=seed)
    for _ in range(2):
        idx = np.concatenate([b.indices for b in batches(ds, plan)])
        assert sorted(idx) == list(range(n))


def test_batches_deterministic_and_reshuffled():
    ds = synth_correlated(40, 2, 3, seed=0)
    a, b = BatchPlan(8, seed=5), BatchPlan(8, seed=5)
    first_a = [x.indices for x in batches(ds, a)]
    first_b = [x.indices for x in batches(ds, b)]
    assert all(np.array_equal(x, y) for x, y in zip(first_a, first_b))
    second_a = np.concatenate([x.indices for x in batches(ds, a)])
    assert not np.array_equal(second_a, np.concatenate(first_a))


def test_batch_label_sets_follow_labels():
    ds = mask_labels(synth_correlated(30, 2, 5, seed=0), 0.3, seed=0)
    for b in batches(ds, BatchPlan(7, seed=1)):
        np.testing.assert_array_equal(b.sets.pos_mask, b.labels == POS)
        np.testing.assert_array_equal(b.sets.missing_mask, b.labels == MISSING)


# synthetic generator --------------------------------------------------------------


def test_synth_deterministic_and_positive():
    a = synth_correlated(300, 6, 7, seed=3)
    b = synth_correlated(300, 6, 7, seed=3)
    assert a == b
    assert np.all(np.any(a.labels == POS, axis=0))
    assert not a.has_missing


def test_synth_label_correlation():
    ds = synth_correlated(2000, 20, 10, seed=1)
    corr = np.corrcoef(ds.binary_labels())
    mean_abs = np.mean(np.abs(corr[np.triu_indices(10, 1)]))
    assert mean_abs >= 0.1
    rates = ds.binary_labels().mean(axis=1)
    assert np.all((rates > 0.15) & (rates < 0.6))


def test_synth_rejects_bad_shape():
    with pytest.raises(ValueError):
        synth_correlated(0, 2, 2)


def test_bundled_tiny_dataset_loads():
    ds = load_dataset(tiny_dataset_path())
    assert (ds.n_instances, ds.n_features, ds.n_labels) == (120, 8, 6)
