import numpy as np
import pytest

from fisheyestereo import formats


def test_pfm_scalar_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(13, 17)).astype(np.float32)
    path = tmp_path / "field.pfm"
    formats.write_pfm(path, data)
    back = formats.read_pfm(path)
    assert back.shape == (13, 17)
    assert np.array_equal(back, data)


def test_pfm_is_little_endian_with_negative_scale(tmp_path):
    path = tmp_path / "f.pfm"
    formats.write_pfm(path, np.ones((2, 3), dtype=np.float32))
    raw = path.read_bytes()
    header, rest = raw.split(b"\n", 1)
    assert header == b"Pf"
    dims, rest = rest.split(b"\n", 1)
    assert dims == b"3 2"  # width before height
    scale = float(rest.split(b"\n", 1)[0])
    assert scale < 0  # negative scale marks little-endian payload


def test_pfm_rows_bottom_up(tmp_path):
    data = np.arange(6, dtype=np.float32).reshape(3, 2)
    path = tmp_path / "f.pfm"
    formats.write_pfm(path, data)
    raw = path.read_bytes()
    payload = raw.split(b"\n", 3)[3]
    first_stored_row = np.frombuffer(payload[:8], dtype="<f4")
    assert np.array_equal(first_stored_row, data[-1])


def test_vector_pfm_roundtrip_with_validity(tmp_path):
    rng = np.random.default_rng(1)
    field = rng.normal(size=(9, 7, 2))
    valid = rng.random((9, 7)) > 0.4
    path = tmp_path / "v.pfm"
    formats.write_vector_pfm(path, field, third=valid)
    back, third = formats.read_vector_pfm(path)
    assert np.allclose(back, field.astype(np.float32), atol=0)
    assert np.array_equal(third > 0.5, valid)


def test_vector_pfm_zero_third_channel_by_default(tmp_path):
    path = tmp_path / "v.pfm"
    formats.write_vector_pfm(path, np.ones((4, 4, 2)))
    data = formats.read_pfm(path)
    assert np.all(data[:, :, 2] == 0.0)


def test_pgm_roundtrip_and_normalization(tmp_path):
    img = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    path = tmp_path / "img.pgm"
    formats.write_pgm(path, img)
    back = formats.read_pgm(path)
    assert back.min() >= 0.0 and back.max() <= 1.0
    assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12


def test_pgm_reader_handles_comments(tmp_path):
    path = tmp_path / "c.pgm"
    payload = bytes(range(6))
    path.write_bytes(b"P5\n# a comment\n3 2\n255\n" + payload)
    img = formats.read_pgm(path)
    assert img.shape == (2, 3)
    assert np.isclose(img[1, 2], 5 / 255.0)


@pytest.mark.parametrize("shape", [(11, 5), (6, 9, 3)])
def test_png_roundtrip(tmp_path, shape):
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, size=shape, dtype=np.uint8)
    path = tmp_path / "img.png"
    formats.write_png(path, img)
    back = formats.read_png(path)
    if len(shape) == 2:
        assert np.array_equal(np.rint(back * 255).astype(np.uint8), img)
    else:
        assert np.array_equal(back, img)


def test_load_image_rejects_unknown_suffix(tmp_path):
    path = tmp_path / "img.tif"
    path.write_bytes(b"")
    with pytest.raises(ValueError):
        formats.load_image(path)


def test_luminance_weights():
    rgb = np.zeros((1, 1, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    assert np.isclose(formats.to_luminance(rgb)[0, 0], 0.299)
