import gzip

import numpy as np
import pytest

from qplr import datakit
from qplr.datakit import CorruptionSpec, ImageDataset
from qplr.errors import ConfigurationError, IngestionError


def _write_pair(tmp_path, n=5, prefix="train", rng=None):
    rng = rng or np.random.default_rng(0)
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    names = datakit.IDX_FILES[prefix]
    datakit.write_idx(images, labels, tmp_path / names[0], tmp_path / names[1])
    return images, labels, tmp_path / names[0], tmp_path / names[1]


def test_idx_round_trip(tmp_path):
    images, labels, img_path, lbl_path = _write_pair(tmp_path)
    ds = datakit.load_idx(img_path, lbl_path)
    assert ds.images.shape == (5, 28, 28) and ds.images.max() <= 1.0
    assert np.array_equal(np.round(ds.images * 255).astype(np.uint8), images)
    assert np.array_equal(ds.labels, labels)


def test_idx_gzip_and_discovery(tmp_path):
    sub = tmp_path / "mnist"
    sub.mkdir()
    _, _, img_path, lbl_path = _write_pair(sub)
    for path in (img_path, lbl_path):
        path.with_name(path.name + ".gz").write_bytes(gzip.compress(path.read_bytes()))
        path.unlink()
    ds = datakit.load_dataset(tmp_path, "mnist", "train")
    assert len(ds) == 5 and ds.name == "mnist"
    assert datakit.find_idx_pair(tmp_path, "mnist", "test") is None


def test_idx_errors(tmp_path):
    _, _, img_path, lbl_path = _write_pair(tmp_path)
    with pytest.raises(IngestionError) as err:
        datakit.load_idx(lbl_path, lbl_path)
    assert err.value.field == "images"
    raw = img_path.read_bytes()
    img_path.write_bytes(raw[:-10])
    with pytest.raises(IngestionError) as err:
        datakit.load_idx(img_path, lbl_path)
    assert err.value.field == "images"
    img_path.write_bytes(raw)
    other = tmp_path / "other"
    other.mkdir()
    _, _, _, short_labels = _write_pair(other, n=4)
    with pytest.raises(IngestionError) as err:
        datakit.load_idx(img_path, short_labels)
    assert err.value.field == "count"
    with pytest.raises(IngestionError):
        datakit.load_dataset(None)


def test_noise_statistics():
    ds = ImageDataset(np.full((1000, 32, 32), 0.5), np.zeros(1000, dtype=int))
    for std in (0.1, 0.3):
        noisy = datakit.add_gaussian_noise(ds, std, seed=3, clamp=False)
        assert abs((noisy.images - ds.images).std() / std - 1) < 0.02
    clamped = datakit.add_gaussian_noise(ds, 0.5, seed=3)
    assert clamped.images.min() >= 0 and clamped.images.max() <= 1
    assert datakit.add_gaussian_noise(ds, 0.0, seed=3) is ds
    with pytest.raises(ConfigurationError):
        datakit.add_gaussian_noise(ds, -0.1, seed=3)


def test_corruptions_are_pure(rng):
    ds = ImageDataset(rng.random((4, 28, 28)), np.arange(4))
    before = ds.images.copy()
    a = datakit.corrupt(ds, CorruptionSpec(0.2, 20), seed=9)
    b = datakit.corrupt(ds, CorruptionSpec(0.2, 20), seed=9)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(ds.images, before)
    assert ds.is_clean and not a.is_clean


def test_rotation_identities(rng):
    ds = ImageDataset(rng.random((3, 28, 28)), np.arange(3))
    assert datakit.rotate(ds, 0) is ds
    full_turn = datakit.rotate_images(ds.images, 360.0)
    assert np.max(np.abs(full_turn - ds.images)) < 1e-6


def test_rotation_probe():
    probe = np.arange(1, 10, dtype=float).reshape(1, 3, 3)
    # counter-clockwise quarter turn
    expected = np.array([[3, 6, 9], [2, 5, 8], [1, 4, 7]], dtype=float)
    assert np.allclose(datakit.rotate_images(probe, 90.0)[0], expected, atol=1e-12)


def test_rotation_fills_with_zero():
    img = np.ones((1, 28, 28))
    out = datakit.rotate_images(img, 45.0)
    assert out[0, 0, 0] == 0.0 and out[0, 14, 14] == pytest.approx(1.0)


def test_synthetic_blobs_are_separable():
    from sklearn.linear_model import LogisticRegression

    ds = datakit.synthetic_blobs(2, 50, 28, seed=0)
    assert len(ds) == 100 and np.bincount(ds.labels).tolist() == [50, 50]
    assert ds.images.min() >= 0 and ds.images.max() <= 1
    model = LogisticRegression(max_iter=1000).fit(ds.flat(), ds.labels)
    assert model.score(ds.flat(), ds.labels) == 1.0


def test_subsample_is_seeded():
    ds = datakit.synthetic_blobs(3, 10, 8)
    a, b = datakit.subsample(ds, 7, 1), datakit.subsample(ds, 7, 1)
    assert np.array_equal(a.images, b.images) and len(a) == 7
    assert datakit.subsample(ds, None, 1) is ds


def test_grid_order():
    grid = datakit.corruption_grid([0, 0.1], [0, 20])
    assert [(c.gaussian_std, c.rotation_degrees) for c in grid] == [(0, 0), (0.1, 0), (0, 20), (0.1, 20)]
    with pytest.raises(ConfigurationError):
        CorruptionSpec(-1)
