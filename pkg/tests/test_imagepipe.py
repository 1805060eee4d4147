import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilutkit import lut3d, neuralut
from nilutkit.errors import CorruptData, MissingCondition, UnsupportedFormat
from nilutkit.imagepipe import (
    ImageRgb,
    decode_image,
    enhance_image,
    encode_image,
    hald_to_image,
    load_corpus,
    read_image,
)


def png_bytes(arr):
    ok, buf = cv2.imencode(".png", arr)
    assert ok
    return buf.tobytes()


def test_decode_white_8bit():
    img = decode_image(png_bytes(np.full((1, 1, 3), 255, np.uint8)))
    np.testing.assert_array_equal(img.pixels, np.ones((1, 1, 3)))
    assert img.depth == 8


def test_decode_16bit_channel_order():
    bgr = np.zeros((1, 1, 3), np.uint16)
    bgr[0, 0, 2] = 32768  # red in OpenCV's BGR layout
    img = decode_image(png_bytes(bgr))
    np.testing.assert_array_equal(img.pixels[0, 0], [32768 / 65535, 0, 0])
    assert img.depth == 16


def test_decode_rgba_drops_alpha():
    bgra = np.zeros((2, 2, 4), np.uint8)
    bgra[..., 0] = 255  # blue
    bgra[..., 3] = 7
    img = decode_image(png_bytes(bgra))
    np.testing.assert_array_equal(img.pixels[0, 0], [0, 0, 1])


def test_truncated_png_is_corrupt():
    data = png_bytes(np.random.default_rng(0).integers(0, 255, (32, 32, 3), dtype=np.uint8))
    with pytest.raises(CorruptData):
        decode_image(data[: len(data) // 2])


def test_truncated_ppm_is_corrupt():
    img = ImageRgb(np.random.default_rng(0).random((4, 5, 3)))
    data = encode_image(img, 8, "ppm")
    with pytest.raises(CorruptData):
        decode_image(data[:-3])


def test_unknown_format():
    with pytest.raises(UnsupportedFormat):
        decode_image(b"GIF89a....")


def test_white_encodes_to_255():
    img = ImageRgb(np.ones((1, 1, 3)))
    for fmt in ("png", "ppm"):
        back = decode_image(encode_image(img, 8, fmt))
        np.testing.assert_array_equal(np.rint(back.pixels * 255), [[[255, 255, 255]]])
    assert encode_image(img, 8, "ppm").endswith(b"\xff\xff\xff")


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([8, 16]), st.sampled_from(["png", "ppm"]), st.integers(0, 2**31))
def test_round_trip_within_half_step(depth, fmt, seed):
    px = np.random.default_rng(seed).random((6, 9, 3))
    back = decode_image(encode_image(ImageRgb(px), depth, fmt))
    assert back.depth == depth
    assert np.abs(back.pixels - px).max() <= 0.5 / (2**depth - 1) + 1e-15


def test_hald_b7_lossless_through_16bit_png():
    hald = lut3d.hald_identity(7)
    img = decode_image(encode_image(hald_to_image(hald), 16))
    assert (img.width, img.height) == (2048, 1024)
    back = lut3d.hald_from_raster(img.pixels, 7)
    np.testing.assert_array_equal(back.pixels, hald.pixels)
    # each 7-bit level maps to a distinct 16-bit code, so snapping is unambiguous
    codes = np.rint(np.arange(128) / 127 * 65535)
    assert np.all(np.diff(codes) > 1)


def test_enhance_identity_lut_bit_exact():
    px = np.random.default_rng(0).integers(0, 256, (10, 12, 3)) / 255.0
    img = ImageRgb(px)
    out = enhance_image(img, lut3d.identity_lut(33))
    np.testing.assert_array_equal(np.rint(out.pixels * 255), np.rint(px * 255))
    assert out.pixels.shape == px.shape


def test_enhance_zero_init_residual_model():
    img = ImageRgb(np.random.default_rng(1).random((8, 8, 3)))
    p = neuralut.init_params(neuralut.MlpConfig(arch="mlp_res", neurons=16, hidden_layers=2), 0)
    np.testing.assert_array_equal(enhance_image(img, p).pixels, img.pixels)


def test_enhance_requires_condition():
    p = neuralut.init_params(neuralut.MlpConfig(neurons=8, hidden_layers=1, cond_dim=2), 0)
    with pytest.raises(MissingCondition):
        enhance_image(ImageRgb(np.zeros((2, 2, 3))), p)


@pytest.mark.parametrize("use_model", [False, True])
def test_enhance_position_independent(use_model):
    rng = np.random.default_rng(2)
    px = rng.random((6, 7, 3))
    px[5, 6] = px[0, 0]
    transform = (
        neuralut.init_params(neuralut.MlpConfig(arch="mlp", neurons=16, hidden_layers=2), 3)
        if use_model
        else lut3d.synth_lut("hue_rotate", 9)
    )
    out = enhance_image(ImageRgb(px), transform).pixels
    np.testing.assert_array_equal(out[5, 6], out[0, 0])
    perm = rng.permutation(42)
    shuffled = ImageRgb(px.reshape(-1, 3)[perm].reshape(6, 7, 3))
    out_perm = enhance_image(shuffled, transform).pixels
    np.testing.assert_array_equal(out_perm.reshape(-1, 3), out.reshape(-1, 3)[perm])
    assert out.min() >= 0 and out.max() <= 1


def test_load_corpus_skips_bad_files(tmp_path):
    (tmp_path / "a.png").write_bytes(encode_image(ImageRgb(np.zeros((2, 2, 3)))))
    (tmp_path / "b.ppm").write_bytes(b"P6\n2 2\n255\n\x00")
    (tmp_path / "notes.txt").write_text("ignored")
    images, skipped = load_corpus(tmp_path)
    assert [im.name for im in images] == ["a.png"]
    assert skipped[0][0] == "b.ppm"
    assert read_image(tmp_path / "a.png").name == "a.png"
