import struct

import numpy as np
import pytest

from cganlab.data import (CIFAR10_LABELS, CIFAR_RECORD_LEN, LabeledDataset,
                          MixtureComponent, MixtureSpec, MixtureOracle,
                          adaptive_avg_pool, cifar10_record_bytes, load_cifar10_binary,
                          load_idx, mixture_3x2_spec, parse_idx_image_header,
                          parse_idx_label_header, pixels_to_bytes, render_digit,
                          render_digits_idx, scale_pixels, split, synth_mixture,
                          tiny_digits3, write_idx_images, write_idx_labels)
from cganlab.errors import DataError, ParseError
from cganlab.rng import RngStream
from fuzzing import cifar_fuzz_cases, idx_fuzz_cases, valid_cifar_file, valid_idx_pair


# ----------------------------------------------------------------------
# IDX


def test_published_training_header_bytes():
    header = bytes([0, 0, 8, 3, 0, 0, 0xEA, 0x60, 0, 0, 0, 28, 0, 0, 0, 28])
    assert parse_idx_image_header(header) == (60000, 28, 28)


def test_label_header_parses_big_endian_count():
    assert parse_idx_label_header(struct.pack(">II", 0x00000801, 60000)) == 60000


def test_image_magic_on_label_file_names_expected_value(tmp_path):
    img, lab = valid_idx_pair()
    bad_lab = struct.pack(">I", 0x00000803) + lab[4:]
    (tmp_path / "img").write_bytes(img)
    (tmp_path / "lab").write_bytes(bad_lab)
    with pytest.raises(ParseError) as err:
        load_idx(tmp_path / "img", tmp_path / "lab")
    assert "0x00000801" in str(err.value)


def test_idx_round_trip_and_pixel_scaling(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (6, 5, 5), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[0, 0, 1] = 0
    labels = np.array([0, 1, 2, 3, 4, 9], dtype=np.uint8)
    write_idx_images(tmp_path / "img", images)
    write_idx_labels(tmp_path / "lab", labels)
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    assert ds.count == 6 and ds.image_shape == (5, 5, 1) and ds.cond_dim == 10
    assert ds.images[0, 0, 0, 0] == 1.0 and ds.images[0, 0, 1, 0] == -1.0
    np.testing.assert_array_equal(ds.label_indices(), labels)
    # scaling is exactly invertible on the uint8 lattice
    np.testing.assert_array_equal(pixels_to_bytes(ds.images)[..., 0], images)


def test_scaling_invertible_for_every_byte():
    all_bytes = np.arange(256, dtype=np.uint8)
    np.testing.assert_array_equal(pixels_to_bytes(scale_pixels(all_bytes)), all_bytes)


def test_truncated_image_file_reports_offset(tmp_path):
    img, lab = valid_idx_pair()
    (tmp_path / "img").write_bytes(img[:-3])
    (tmp_path / "lab").write_bytes(lab)
    with pytest.raises(ParseError) as err:
        load_idx(tmp_path / "img", tmp_path / "lab")
    assert "byte offset" in str(err.value)


def test_missing_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError) as err:
        load_idx(tmp_path / "nope", tmp_path / "nope2")
    assert "nope" in str(err.value)


def test_idx_fuzz_corpus_rejected(tmp_path):
    cases = idx_fuzz_cases(100)
    assert len(cases) == 100
    for name, img, lab in cases:
        (tmp_path / "img").write_bytes(img)
        (tmp_path / "lab").write_bytes(lab)
        with pytest.raises(ParseError) as err:
            load_idx(tmp_path / "img", tmp_path / "lab")
        assert str(err.value), name


# ----------------------------------------------------------------------
# CIFAR-10 binary


def test_cifar_record_layout(tmp_path):
    rng = np.random.default_rng(1)
    img0 = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    data = cifar10_record_bytes(img0, 6) + valid_cifar_file(records=2, seed=2)
    path = tmp_path / "batch.bin"
    path.write_bytes(data)
    ds = load_cifar10_binary(path)
    assert ds.count == 3 and ds.image_shape == (32, 32, 3) and ds.cond_dim == 10
    assert ds.label_indices()[0] == 6
    assert CIFAR10_LABELS[6] == "frog"
    np.testing.assert_array_equal(pixels_to_bytes(ds.images[0]), img0)


def test_cifar_round_trip_reproduces_source_bytes(tmp_path):
    src = valid_cifar_file(records=4, seed=3)
    path = tmp_path / "batch.bin"
    path.write_bytes(src)
    ds = load_cifar10_binary(path)
    rebuilt = b"".join(
        cifar10_record_bytes(pixels_to_bytes(ds.images[i]), int(ds.label_indices()[i]))
        for i in range(4))
    assert rebuilt == src


def test_cifar_length_rule(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(valid_cifar_file() + b"\x00")
    with pytest.raises(ParseError) as err:
        load_cifar10_binary(path)
    assert str(CIFAR_RECORD_LEN) in str(err.value)


def test_cifar_fuzz_corpus_rejected(tmp_path):
    cases = cifar_fuzz_cases(100)
    assert len(cases) == 100
    for name, blob in cases:
        path = tmp_path / "batch.bin"
        path.write_bytes(blob)
        with pytest.raises(ParseError) as err:
            load_cifar10_binary(path)
        assert str(err.value), name


def test_cifar_concatenates_multiple_files(tmp_path):
    p1, p2 = tmp_path / "b1.bin", tmp_path / "b2.bin"
    p1.write_bytes(valid_cifar_file(records=2, seed=4))
    p2.write_bytes(valid_cifar_file(records=3, seed=5))
    ds = load_cifar10_binary([p1, p2])
    assert ds.count == 5


# ----------------------------------------------------------------------
# splits


def synthetic_ds(counts=(30, 50, 20), seed=0):
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for lab, n in enumerate(counts):
        images.append(rng.uniform(-1, 1, (n, 2, 2, 1)))
        onehot = np.zeros((n, len(counts)))
        onehot[:, lab] = 1.0
        labels.append(onehot)
    return LabeledDataset(np.concatenate(images), np.concatenate(labels), {})


def test_split_requires_positive_fractions():
    ds = synthetic_ds()
    with pytest.raises(DataError):
        split(ds, (1.0, 0.0, 0.0), 1)
    with pytest.raises(DataError):
        split(ds, (0.5, 0.4, 0.2), 1)


def test_split_deterministic():
    ds = synthetic_ds()
    a = split(ds, (0.6, 0.2, 0.2), seed=7)
    b = split(ds, (0.6, 0.2, 0.2), seed=7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.images, y.images)


def test_split_partition_properties(rng):
    for trial in range(5):
        counts = tuple(rng.integers(10, 60, 3))
        ds = synthetic_ds(counts, seed=trial)
        parts = split(ds, (0.55, 0.25, 0.2), seed=trial)
        all_rows = np.concatenate([p.images.reshape(p.count, -1) for p in parts])
        src_rows = ds.images.reshape(ds.count, -1)
        assert all_rows.shape == src_rows.shape
        assert {tuple(r) for r in all_rows} == {tuple(r) for r in src_rows}
        total = sum(p.count for p in parts)
        assert total == ds.count


def test_split_stratification_within_one_sample():
    ds = synthetic_ds((31, 47, 22))
    fractions = (0.6, 0.25, 0.15)
    parts = split(ds, fractions, seed=3)
    for lab, n in enumerate((31, 47, 22)):
        for part, frac in zip(parts, fractions):
            got = int(part.labels[:, lab].sum())
            assert abs(got - frac * n) < 1.0 + 1e-9


def test_split_label_smaller_than_parts():
    ds = synthetic_ds((2, 30, 30))
    with pytest.raises(DataError):
        split(ds, (0.4, 0.3, 0.3), seed=1)


# ----------------------------------------------------------------------
# dataset invariants


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2, 2, 1)), np.array([[0.5, 0.5], [1.0, 0.0]]), {})
    with pytest.raises(DataError):
        LabeledDataset(np.full((1, 2, 2, 1), 1.5), np.array([[1.0]]), {})
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2, 2, 1)), np.array([[1.0, 0.0]]), {})


# ----------------------------------------------------------------------
# mixtures


def test_mixture_oracle_gaussian_peak():
    spec = MixtureSpec([[MixtureComponent(1.0, np.zeros(2), np.ones(2))]], dim=2)
    oracle = MixtureOracle(spec)
    assert abs(oracle.log_density(np.zeros(2), 0) + np.log(2 * np.pi)) < 1e-12


def test_mixture_oracle_symmetry(rng):
    mu = np.array([0.3, -0.2])
    spec = MixtureSpec([[MixtureComponent(0.5, mu, np.full(2, 0.04)),
                         MixtureComponent(0.5, -mu, np.full(2, 0.04))]], dim=2)
    oracle = MixtureOracle(spec)
    for _ in range(20):
        x = rng.normal(size=2)
        assert abs(oracle.log_density(x, 0) - oracle.log_density(-x, 0)) < 1e-12


def test_mixture_sampler_and_oracle_consistency():
    spec = mixture_3x2_spec()
    oracle = MixtureOracle(spec)
    n = 100_000
    lls = []
    for rep in range(2):
        pts = oracle.sample(1, n, RngStream(rep, ("mc",)))
        vals = oracle.log_density(pts, 1)
        lls.append((vals.mean(), vals.std(ddof=1) / np.sqrt(n)))
    diff = abs(lls[0][0] - lls[1][0])
    se = np.hypot(lls[0][1], lls[1][1])
    assert diff < 3.0 * se


def test_synth_mixture_dataset_shape():
    ds, oracle = synth_mixture(mixture_3x2_spec(), 50, seed=3)
    assert ds.count == 150 and ds.image_shape == (1, 1, 2) and ds.cond_dim == 3
    np.testing.assert_array_equal(ds.label_counts(), [50, 50, 50])
    ds2, _ = synth_mixture(mixture_3x2_spec(), 50, seed=3)
    np.testing.assert_array_equal(ds.images, ds2.images)


def test_synth_mixture_validates_spec():
    bad = MixtureSpec([[MixtureComponent(0.7, np.zeros(2), np.ones(2))]], dim=2)
    with pytest.raises(DataError):
        synth_mixture(bad, 10, seed=0)


# ----------------------------------------------------------------------
# pooling and the bundled digit corpus


def test_adaptive_pool_averages_blocks():
    img = np.arange(16.0).reshape(1, 4, 4, 1)
    out = adaptive_avg_pool(img, 2)
    np.testing.assert_array_equal(out[0, :, :, 0], [[2.5, 4.5], [10.5, 12.5]])


def test_adaptive_pool_uneven_bins():
    img = np.ones((2, 28, 28, 1))
    out = adaptive_avg_pool(img, 8)
    assert out.shape == (2, 8, 8, 1)
    np.testing.assert_allclose(out, 1.0)


def test_render_digit_deterministic():
    a = render_digit(2, RngStream(3, ("d",)))
    b = render_digit(2, RngStream(3, ("d",)))
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.uint8 and a.shape == (28, 28)
    assert a.max() > 100  # glyph is actually drawn


def test_digit_corpus_written_through_idx(tmp_path):
    img_path, lab_path = render_digits_idx(tmp_path, count_per_label=5, seed=1)
    ds = load_idx(img_path, lab_path)
    assert ds.count == 15
    assert sorted(np.unique(ds.label_indices())) == [0, 1, 2]


def test_dataset_cache_round_trip(tmp_path):
    from cganlab.data import load_dataset_cache, save_dataset
    ds = synthetic_ds((5, 6, 7))
    save_dataset(tmp_path / "cache.bin", ds)
    back = load_dataset_cache(tmp_path / "cache.bin")
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.meta == ds.meta
    with pytest.raises(ParseError):
        load_dataset_cache(tmp_path / "missing.bin")


def test_tiny_digits_preset_shape(digits_data):
    train_ds, valid_ds, test_ds = digits_data
    assert (train_ds.count, valid_ds.count, test_ds.count) == (1500, 300, 300)
    assert train_ds.image_shape == (8, 8, 1) and train_ds.cond_dim == 3
    np.testing.assert_array_equal(train_ds.label_counts(), [500, 500, 500])
