import numpy as np
import pytest

from rulecast.data import (
    DataFormatError,
    Dataset,
    FeaturizerConfig,
    Sample,
    SwitchingGaussianSpec,
    featurize_text,
    fnv1a_64,
    generate_switching,
    load_tsv,
    mix,
    read_keyvalue,
    switching_spec_from_kv,
    tokenize,
)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    if len(a) != len(b):
        return False
    for sa, sb in zip(a.samples, b.samples):
        if sa.id != sb.id or sa.label != sb.label or sa.text != sb.text:
            return False
        if (sa.features is None) != (sb.features is None):
            return False
        if sa.features is not None and not np.array_equal(sa.features, sb.features):
            return False
    return True


# --- switching Gaussians ----------------------------------------------------

def test_generate_switching_sizes(switching):
    train, test = switching
    assert len(train) == 200 and len(test) == 200
    assert sum(s.label == 1 for s in train.samples) == 100
    assert sum(s.label == 0 for s in train.samples) == 100
    assert sum(s.label == 1 for s in test.samples) == 100
    assert train.provenance == "train-distr" and test.provenance == "test-distr"


def test_generate_switching_cluster_means(switching):
    train, test = switching
    # Empirical means should land within 3 standard errors (3/sqrt(100)).
    centers = {
        ("train", 1): (0.0, 0.0),
        ("train", 0): (6.0, 0.0),
        ("test", 1): (6.0, 6.0),
        ("test", 0): (0.0, 6.0),
    }
    for (split, label), mu in centers.items():
        ds = train if split == "train" else test
        points = np.array([s.features for s in ds.samples if s.label == label])
        mean = points.mean(axis=0)
        assert np.all(np.abs(mean - np.array(mu)) <= 0.3), (split, label, mean)


def test_generate_switching_deterministic():
    a_train, a_test = generate_switching(SwitchingGaussianSpec(seed=11))
    b_train, b_test = generate_switching(SwitchingGaussianSpec(seed=11))
    assert datasets_equal(a_train, b_train) and datasets_equal(a_test, b_test)
    c_train, _ = generate_switching(SwitchingGaussianSpec(seed=12))
    assert not datasets_equal(a_train, c_train)


def test_generate_switching_rejects_bad_covariance():
    spec = SwitchingGaussianSpec(sigma1=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError, match="positive definite"):
        generate_switching(spec)


def test_depth_one_split_separates_train(switching):
    # Axis split near x0=3 must separate the 6-sigma-apart train clusters.
    train, _ = switching
    X, y = train.feature_matrix(), train.label_vector()
    predictions = (X[:, 0] <= 3.0).astype(int)
    assert np.mean(predictions == y) >= 0.95


# --- mix ---------------------------------------------------------------------

def test_mix_full_fraction_is_permutation(switching):
    train, test = switching
    mixed = mix(train, test, 1.0, seed=5)
    assert len(mixed) == 400
    assert sorted(mixed.ids()) == sorted(train.ids() + test.ids())
    assert mixed.provenance == "mixed"


def test_mix_zero_fraction_empty(switching):
    train, test = switching
    assert len(mix(train, test, 0.0, seed=5)) == 0


def test_mix_fraction_size(switching):
    train, test = switching
    assert len(mix(train, test, 0.3, seed=5)) == 120


def test_mix_rejects_dimension_mismatch(switching):
    train, _ = switching
    other = Dataset.from_samples([Sample(id="z", features=np.zeros(3))])
    with pytest.raises(ValueError, match="dimension mismatch"):
        mix(train, other, 0.5, seed=0)


# --- featurization ------------------------------------------------------------

def test_featurize_empty_text_is_zero_vector():
    ds = Dataset.from_samples([Sample(id="a", text="")])
    out = featurize_text(ds, FeaturizerConfig(dimension=64))
    assert np.count_nonzero(out.samples[0].features) == 0


def test_featurize_binary_repeated_token():
    ds = Dataset.from_samples([Sample(id="a", text="Good good GOOD", label=1)])
    out = featurize_text(ds, FeaturizerConfig(dimension=64))
    vec = out.samples[0].features
    assert np.count_nonzero(vec) == 1
    assert vec.max() == 1.0
    assert out.samples[0].label == 1
    assert out.samples[0].text == "Good good GOOD"


def test_featurize_term_frequency_counts():
    ds = Dataset.from_samples([Sample(id="a", text="good good bad")])
    out = featurize_text(ds, FeaturizerConfig(dimension=64, weighting="term-frequency"))
    assert sorted(out.samples[0].features[out.samples[0].features > 0]) == [1.0, 2.0]


def test_featurize_deterministic_and_l0_bounded():
    ds = Dataset.from_samples([Sample(id="a", text="one two three four four")])
    a = featurize_text(ds, FeaturizerConfig(dimension=128))
    b = featurize_text(ds, FeaturizerConfig(dimension=128))
    assert np.array_equal(a.samples[0].features, b.samples[0].features)
    assert np.count_nonzero(a.samples[0].features) <= len(tokenize("one two three four four"))


def test_featurizer_config_requires_power_of_two():
    with pytest.raises(ValueError, match="power of two"):
        FeaturizerConfig(dimension=100)


def test_fnv1a_reference_values():
    # Standard FNV-1a 64-bit test vectors.
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C


# --- tsv loading ---------------------------------------------------------------

def test_load_tsv_text_and_features(tmp_path):
    text_file = tmp_path / "text.tsv"
    text_file.write_text("1\tgreat watch\n0\tdull film\n", encoding="utf-8")
    ds = load_tsv(text_file)
    assert ds.samples[0].text == "great watch" and ds.samples[0].label == 1

    feat_file = tmp_path / "feat.tsv"
    feat_file.write_text("0\t1.5,2.0\n1\t-3,4\n", encoding="utf-8")
    ds = load_tsv(feat_file)
    assert np.array_equal(ds.samples[0].features, [1.5, 2.0])
    assert ds.dimension == 2


def test_load_tsv_reports_ragged_row(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("0\t1.0,2.0\n1\t3.0\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match=r"bad\.tsv:2"):
        load_tsv(bad)


def test_load_tsv_rejects_bad_label(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("2\thello\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="label"):
        load_tsv(bad)


def test_load_tsv_rejects_mode_switch(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("0\t1.0,2.0\n1\tplain text\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="text row in a features file"):
        load_tsv(bad)


# --- config files ----------------------------------------------------------------

def test_keyvalue_and_switching_spec(tmp_path):
    cfg = tmp_path / "spec.cfg"
    cfg.write_text(
        "# switching spec\nmu1_x = 1.0\nmu1_y = 2.0\nsigma_scale = 4.0\n"
        "n_per_cluster = 10\nseed = 9\n",
        encoding="utf-8",
    )
    kv = read_keyvalue(cfg)
    spec = switching_spec_from_kv(kv)
    assert np.array_equal(spec.mu1, [1.0, 2.0])
    assert np.array_equal(spec.sigma1, 4.0 * np.eye(2))
    assert spec.n_per_cluster == 10 and spec.seed == 9
    assert np.array_equal(spec.mu2, [6.0, 0.0])  # untouched default


def test_sample_requires_payload():
    with pytest.raises(ValueError, match="features or text"):
        Sample(id="empty")


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(ValueError, match="duplicate"):
        Dataset.from_samples([
            Sample(id="a", text="x"),
            Sample(id="a", text="y"),
        ])
