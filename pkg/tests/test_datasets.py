import numpy as np
import pytest

from lorafl import datasets


def test_idx_round_trip(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (7, 28, 28), dtype=np.uint8)
    labels = np.arange(7, dtype=np.uint8)
    datasets.write_idx(tmp_path / "img.idx", imgs)
    datasets.write_idx(tmp_path / "lab.idx.gz", labels)
    assert np.array_equal(datasets.read_idx(tmp_path / "img.idx"), imgs)
    data = datasets.load_mnist(tmp_path / "img.idx", tmp_path / "lab.idx.gz", limit=5)
    assert data.x.shape == (5, 784)
    assert data.x.max() <= 1.0
    assert np.array_equal(data.y, np.arange(5))


def test_idx_header_is_big_endian(tmp_path):
    datasets.write_idx(tmp_path / "a.idx", np.array([[1, 2, 3]], dtype=np.int32))
    raw = (tmp_path / "a.idx").read_bytes()
    assert raw[:4] == bytes([0, 0, 0x0C, 2])
    assert raw[4:12] == (1).to_bytes(4, "big") + (3).to_bytes(4, "big")
    assert raw[12:16] == (1).to_bytes(4, "big")


def test_idx_rejects_bad_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"\x01\x02\x08\x01")
    with pytest.raises(ValueError):
        datasets.read_idx(tmp_path / "bad")
    (tmp_path / "short").write_bytes(bytes([0, 0, 8, 1]) + (10).to_bytes(4, "big") + b"abc")
    with pytest.raises(ValueError):
        datasets.read_idx(tmp_path / "short")


def test_blobs_shapes_and_informative_features():
    data, centers = datasets.gaussian_blobs(300, 12, 4, np.random.default_rng(1), informative=5)
    assert data.x.shape == (300, 12)
    assert not np.any(centers[:, 5:])
    test = datasets.blobs_from_centers(centers, 50, np.random.default_rng(2))
    assert test.x.shape == (50, 12)


def test_synthetic_digits_have_blank_border():
    data, protos = datasets.synthetic_digits(200, 10, np.random.default_rng(3))
    img = data.x.reshape(-1, 28, 28)
    assert data.x.shape == (200, 784)
    assert 0.0 <= data.x.min() and data.x.max() <= 1.0
    assert not np.any(img[:, :4]) and not np.any(img[:, -4:])
    assert not np.any(img[:, :, :4]) and not np.any(img[:, :, -4:])
    assert set(np.unique(data.y)) <= set(range(10))
    # Classes are distinguishable: nearest prototype recovers most labels.
    flat = protos.reshape(10, -1)
    guess = np.argmin(((data.x[:, None, :] - flat[None]) ** 2).sum(-1), axis=1)
    assert np.mean(guess == data.y) > 0.5
