import gzip
import os
import struct

import numpy as np
import pytest

from gswgan.data import (IMAGES_MAGIC, LABELS_MAGIC, PcaModel, SampleBatch, default_data_dir,
                         gaussian_noise, mnist_load, pca_fit, pca_inverse, pca_transform, read_idx,
                         swiss_roll, swiss_roll_points)
from gswgan.errors import ConfigError, EmptyBatchError, FormatError, ShapeError
from gswgan.rng import make_rng


def write_idx(path, magic, dims, payload: bytes, compress=False):
    raw = struct.pack(">I", magic) + struct.pack(">" + "I" * len(dims), *dims) + payload
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(raw)


def mnist_fixture(tmp_path, n=3, n_labels=None, compress=False):
    pixels = np.zeros((n, 28, 28), dtype=np.uint8)
    pixels[:, 0, 0] = 0
    pixels[:, 0, 1] = 255
    pixels[:, 0, 2] = 127
    suffix = ".gz" if compress else ""
    img = tmp_path / f"img{suffix}"
    lab = tmp_path / f"lab{suffix}"
    write_idx(img, IMAGES_MAGIC, (n, 28, 28), pixels.tobytes(), compress)
    k = n if n_labels is None else n_labels
    write_idx(lab, LABELS_MAGIC, (k,), bytes(range(k)), compress)
    return img, lab


def test_sample_batch_validation():
    assert SampleBatch(np.zeros((3, 2))).d == 2
    with pytest.raises(ShapeError):
        SampleBatch(np.zeros(3))
    with pytest.raises(EmptyBatchError):
        SampleBatch(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        SampleBatch(np.zeros((1, 2)), "fake")


def test_swiss_roll_parametric_examples():
    pts = swiss_roll_points([0.5, 0.25])
    np.testing.assert_allclose(pts[0], [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(pts[1], [-0.25, 0.0], atol=1e-15)


def test_swiss_roll_norms_equal_z():
    batch, z = swiss_roll(5000, np.random.default_rng(0), return_z=True)
    assert batch.values.shape == (5000, 2) and batch.tag == "real"
    np.testing.assert_allclose(np.linalg.norm(batch.values, axis=1), z, rtol=1e-14)
    assert z.min() >= 0.25 and z.max() <= 1.0


def test_gaussian_noise_moments():
    x = gaussian_noise(500_000, 2, make_rng(0, "noise")).values
    assert x.size == 1_000_000
    assert np.all(np.abs(x.mean(axis=0)) <= 4 / np.sqrt(x.shape[0]))
    v = x.ravel().var()
    assert 0.98 <= v <= 1.02


def test_gaussian_noise_replay_and_odd_count():
    a = gaussian_noise(7, 3, make_rng(5, "noise")).values
    b = gaussian_noise(7, 3, make_rng(5, "noise")).values
    assert a.tobytes() == b.tobytes() and a.shape == (7, 3)
    assert not np.array_equal(a, gaussian_noise(7, 3, make_rng(6, "noise")).values)


def test_streams_are_independent():
    a = make_rng(0, "data").random(4)
    b = make_rng(0, "noise").random(4)
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("compress", [False, True])
def test_mnist_scaling(tmp_path, compress):
    img, lab = mnist_fixture(tmp_path, compress=compress)
    batch, labels = mnist_load(img, lab, return_labels=True)
    assert batch.values.shape == (3, 784)
    assert batch.values[0, 0] == -1.0
    assert batch.values[0, 1] == 1.0
    assert batch.values[0, 2] == pytest.approx(-1 / 255, abs=1e-15)
    assert labels.tolist() == [0, 1, 2]


def test_idx_bad_magic(tmp_path):
    img, lab = mnist_fixture(tmp_path)
    with pytest.raises(FormatError, match="offset 0"):
        mnist_load(lab, lab)


def test_idx_truncated(tmp_path):
    img, lab = mnist_fixture(tmp_path)
    data = img.read_bytes()
    img.write_bytes(data[:-10])
    with pytest.raises(FormatError, match="offset"):
        read_idx(img, IMAGES_MAGIC)
    img.write_bytes(data[:6])
    with pytest.raises(FormatError, match="offset 4"):
        read_idx(img, IMAGES_MAGIC)


def test_idx_count_mismatch(tmp_path):
    img, lab = mnist_fixture(tmp_path, n=3, n_labels=2)
    with pytest.raises(FormatError, match="count mismatch"):
        mnist_load(img, lab)


def test_official_mnist_header_if_present():
    path = os.path.join(default_data_dir(), "train-images-idx3-ubyte")
    if not os.path.exists(path):
        pytest.skip("MNIST not downloaded")
    assert read_idx(path, IMAGES_MAGIC).shape == (60000, 28, 28)


def test_default_data_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("GSWGAN_DATA_DIR", str(tmp_path))
    assert default_data_dir() == str(tmp_path)


def test_pca_axis_aligned():
    rng = np.random.default_rng(1)
    x = np.zeros((20_000, 2))
    x[:, 0] = rng.standard_normal(20_000)
    model = pca_fit(x, 1)
    np.testing.assert_allclose(np.abs(model.components[0]), [1.0, 0.0], atol=1e-12)
    assert model.explained_variance[0] == pytest.approx(1.0, abs=0.03)


def test_pca_isotropic():
    x = np.random.default_rng(2).standard_normal((100_000, 3))
    ev = pca_fit(x, 3).explained_variance
    assert ev.max() / ev.min() <= 1.2
    assert np.all(np.diff(ev) <= 0)


def test_pca_complete_basis_round_trip():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((200, 6)) @ rng.standard_normal((6, 6)) + 5
    model = pca_fit(x, 6)
    np.testing.assert_allclose(pca_inverse(model, pca_transform(model, x)).values, x, atol=1e-8)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(6), atol=1e-12)


def test_pca_mean_maps_to_zero_and_non_expansive():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((500, 10)) * np.arange(1, 11)
    model = pca_fit(x, 4)
    assert np.abs(pca_transform(model, x.mean(axis=0, keepdims=True)).values).max() <= 1e-12
    a, b = rng.standard_normal((1000, 10)) * 5, rng.standard_normal((1000, 10)) * 5
    ta, tb = pca_transform(model, a).values, pca_transform(model, b).values
    assert np.all(np.linalg.norm(ta - tb, axis=1) <= np.linalg.norm(a - b, axis=1) + 1e-9)


def test_pca_matches_power_iteration_oracle():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((400, 5)) * [5.0, 3.0, 2.0, 1.0, 0.5]
    model = pca_fit(x, 2)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    v = np.ones(5)
    for _ in range(2000):
        v = cov @ v
        v /= np.linalg.norm(v)
    assert abs(abs(v @ model.components[0]) - 1) <= 1e-10
    assert model.explained_variance[0] == pytest.approx(v @ cov @ v, rel=1e-10)


def test_pca_errors_and_io(tmp_path):
    x = np.random.default_rng(6).standard_normal((50, 3))
    with pytest.raises(ConfigError):
        pca_fit(x, 4)
    model = pca_fit(x, 2)
    with pytest.raises(ShapeError):
        pca_transform(model, np.zeros((2, 4)))
    model.save(tmp_path / "pca.npz")
    back = PcaModel.load(tmp_path / "pca.npz")
    np.testing.assert_array_equal(back.components, model.components)
