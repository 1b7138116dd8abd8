import numpy as np
import pytest

from oracles import dense_conv2d_reflect101
from wrinkleforge.errors import InvalidKernelSpecError, WrongChannelCountError
from wrinkleforge.image_io import BinaryMask, Image
from wrinkleforge.texture import (
    batch_weak_labels,
    gaussian_blur,
    load_texture,
    make_gaussian,
    save_texture,
    texture_map,
    weak_label,
)
from wrinkleforge.image_io import save_mask, save_png


def test_kernel_size_one():
    k = make_gaussian(1, 2.0)
    assert k.weights.shape == (1, 1)
    assert k.weights[0, 0] == pytest.approx(1.0)


def test_kernel_3x3_symmetry_and_normalization():
    k = make_gaussian(3, 1.0)
    assert k.weights.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(k.weights, k.weights[::-1, :])
    np.testing.assert_allclose(k.weights, k.weights[:, ::-1])
    expected_center = 1.0 / (np.exp(-np.arange(-1, 2) ** 2 / 2).sum() ** 2)
    assert k.weights[1, 1] == pytest.approx(expected_center)


def test_kernel_21x21_matches_dense_construction():
    k = make_gaussian(21, 5.0)
    half = 10
    ii, jj = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1),
                         indexing="ij")
    dense = np.exp(-(ii**2 + jj**2) / (2 * 25.0))
    dense /= dense.sum()
    assert np.abs(k.weights - dense).max() < 1e-12


def test_kernel_invalid_specs():
    with pytest.raises(InvalidKernelSpecError):
        make_gaussian(4, 1.0)
    with pytest.raises(InvalidKernelSpecError):
        make_gaussian(3, 0.0)
    with pytest.raises(InvalidKernelSpecError):
        make_gaussian(-1, 1.0)


def test_blur_preserves_constants():
    k = make_gaussian(5, 2.0)
    img = Image(np.full((10, 10, 1), 0.37))
    out = gaussian_blur(img, k)
    np.testing.assert_allclose(out.data, 0.37, atol=1e-12)


def test_blur_impulse_response():
    k = make_gaussian(5, 1.5)
    plane = np.zeros((31, 31))
    plane[15, 15] = 1.0
    out = gaussian_blur(Image(plane[:, :, None]), k).data[:, :, 0]
    np.testing.assert_allclose(out[13:18, 13:18], k.weights, atol=1e-14)


def test_blur_matches_dense_oracle():
    rng = np.random.default_rng(7)
    k = make_gaussian(5, 2.0)
    plane = rng.random((16, 16))
    out = gaussian_blur(Image(plane[:, :, None]), k).data[:, :, 0]
    ref = dense_conv2d_reflect101(plane, k.weights)
    assert np.abs(out - ref).max() < 1e-10


def test_blur_linearity():
    rng = np.random.default_rng(8)
    k = make_gaussian(7, 2.5)
    x = rng.random((12, 12))
    y = rng.random((12, 12))
    a, b = 0.3, 0.6   # keep the combination inside [0, 1]
    lhs = gaussian_blur(Image((a * x + b * y)[:, :, None]), k).data
    rhs = a * gaussian_blur(Image(x[:, :, None]), k).data \
        + b * gaussian_blur(Image(y[:, :, None]), k).data
    assert np.abs(lhs - rhs).max() < 1e-10


def test_blur_channel_contract():
    with pytest.raises(WrongChannelCountError):
        gaussian_blur(Image(np.zeros((4, 4, 3))), make_gaussian(3, 1.0))


def test_texture_black_image():
    k = make_gaussian(21, 5.0)
    t = texture_map(Image(np.zeros((8, 8, 1))), k)
    np.testing.assert_allclose(t.data, 255.0, atol=1e-9)


def test_texture_white_image():
    k = make_gaussian(21, 5.0)
    t = texture_map(Image(np.ones((8, 8, 1))), k)
    expected = (1.0 - 255.0 / 256.0) * 255.0   # 0.99609375
    np.testing.assert_allclose(t.data, expected, atol=1e-9)


def test_texture_dark_pixel_scores_high():
    k = make_gaussian(5, 2.0)
    plane = np.full((15, 15), 200.0 / 255.0)
    plane[7, 7] = 50.0 / 255.0
    t = texture_map(Image(plane[:, :, None]), k)
    assert t.data[7, 7] > t.data[0, 0]
    # oracle: evaluate the formula with the dense blur directly
    blurred = dense_conv2d_reflect101(plane, k.weights) * 255.0
    expected = np.clip((1.0 - plane * 255.0 / (1.0 + blurred)) * 255.0, 0, 255)
    np.testing.assert_allclose(t.data, expected, atol=1e-10)


def test_weak_label_masking():
    rng = np.random.default_rng(9)
    k = make_gaussian(5, 2.0)
    img = Image(rng.random((8, 8, 3)))
    zeros = BinaryMask(np.zeros((8, 8), np.uint8))
    ones = BinaryMask(np.ones((8, 8), np.uint8))
    np.testing.assert_array_equal(weak_label(img, zeros, k).data, np.zeros((8, 8)))
    from wrinkleforge.image_io import to_grayscale
    np.testing.assert_array_equal(weak_label(img, ones, k).data,
                                  texture_map(to_grayscale(img), k).data)


def test_weak_label_half_masked_white():
    k = make_gaussian(5, 2.0)
    img = Image(np.ones((4, 4, 3)))
    mask = np.zeros((4, 4), np.uint8)
    mask[:, :2] = 1
    t = weak_label(img, BinaryMask(mask), k)
    np.testing.assert_array_equal(t.data[:, 2:], 0.0)
    np.testing.assert_allclose(t.data[:, :2], (1.0 - 255.0 / 256.0) * 255.0, atol=1e-9)


def test_weak_label_zero_outside_face_property():
    rng = np.random.default_rng(10)
    k = make_gaussian(5, 2.0)
    img = Image(rng.random((10, 10, 3)))
    mask = BinaryMask((rng.random((10, 10)) > 0.4).astype(np.uint8))
    t = weak_label(img, mask, k)
    assert (t.data[mask.data == 0] == 0.0).all()


def test_texture_png_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    from wrinkleforge.texture import TextureMap
    t = TextureMap(rng.random((6, 6)) * 255.0)
    save_texture(t, tmp_path / "t.png")
    back = load_texture(tmp_path / "t.png")
    assert np.abs(back.data - t.data).max() <= 0.5


def _make_corpus(tmp_path, n, size=12):
    rng = np.random.default_rng(99)
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    for i in range(n):
        save_png(Image(rng.random((size, size, 3))),
                 tmp_path / "images" / f"{i:03d}.png")
        save_mask(BinaryMask((rng.random((size, size)) > 0.3).astype(np.uint8)),
                  tmp_path / "masks" / f"{i:03d}.png")


def test_batch_empty_dir(tmp_path):
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    report = batch_weak_labels(tmp_path / "images", tmp_path / "masks",
                               tmp_path / "out", make_gaussian(5, 2.0), jobs=1)
    assert report == {"processed": 0, "failed": []}


def test_batch_deterministic_rerun(tmp_path):
    _make_corpus(tmp_path, 3)
    k = make_gaussian(5, 2.0)
    r1 = batch_weak_labels(tmp_path / "images", tmp_path / "masks",
                           tmp_path / "out1", k, jobs=1)
    r2 = batch_weak_labels(tmp_path / "images", tmp_path / "masks",
                           tmp_path / "out2", k, jobs=1)
    assert r1["processed"] == r2["processed"] == 3
    for i in range(3):
        a = (tmp_path / "out1" / f"{i:03d}.png").read_bytes()
        b = (tmp_path / "out2" / f"{i:03d}.png").read_bytes()
        assert a == b


def test_batch_parallel_matches_serial(tmp_path):
    _make_corpus(tmp_path, 5)
    k = make_gaussian(5, 2.0)
    batch_weak_labels(tmp_path / "images", tmp_path / "masks", tmp_path / "s", k, jobs=1)
    batch_weak_labels(tmp_path / "images", tmp_path / "masks", tmp_path / "p", k, jobs=3)
    for i in range(5):
        assert (tmp_path / "s" / f"{i:03d}.png").read_bytes() == \
               (tmp_path / "p" / f"{i:03d}.png").read_bytes()


def test_batch_missing_mask_recorded(tmp_path):
    _make_corpus(tmp_path, 3)
    (tmp_path / "masks" / "001.png").unlink()
    report = batch_weak_labels(tmp_path / "images", tmp_path / "masks",
                               tmp_path / "out", make_gaussian(5, 2.0), jobs=1)
    assert report["processed"] == 2
    assert len(report["failed"]) == 1
    assert report["failed"][0]["id"] == "001"
    assert report["failed"][0]["reason"] == "MissingMask"
