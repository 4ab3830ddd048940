import struct

import numpy as np
import pytest

from foi.formats import FormatError, read_foim, read_image, read_mask, write_foim, write_image, write_mask
from foi.raster import ImagePlane


def test_foim_header_layout(tmp_path):
    plane = ImagePlane(np.array([[0.0, 0.5, 1.0], [0.25, 0.75, 0.125]], dtype=np.float32), 0.25)
    path = tmp_path / "m.foim"
    write_foim(path, plane)
    raw = path.read_bytes()
    assert raw[:4] == b"FOIM"
    assert struct.unpack("<IIf", raw[4:16]) == (3, 2, 0.25)
    assert len(raw) == 16 + 6 * 4
    assert np.frombuffer(raw[16:], dtype="<f4").tolist() == [0.0, 0.5, 1.0, 0.25, 0.75, 0.125]


def test_foim_round_trip(tmp_path, rng):
    plane = ImagePlane(rng.random((17, 31)).astype(np.float32), 16.0)
    write_foim(tmp_path / "a.foim", plane)
    back = read_foim(tmp_path / "a.foim")
    assert back.microns_per_pixel == 16.0
    assert np.array_equal(back.values, plane.values)


def test_foim_rejects_bad_magic_and_length(tmp_path):
    bad = tmp_path / "bad.foim"
    bad.write_bytes(b"XXXX" + struct.pack("<IIf", 1, 1, 1.0) + b"\0\0\0\0")
    with pytest.raises(FormatError):
        read_foim(bad)
    short = tmp_path / "short.foim"
    short.write_bytes(b"FOIM" + struct.pack("<IIf", 2, 2, 1.0) + b"\0" * 4)
    with pytest.raises(FormatError):
        read_foim(short)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_gray_round_trip(tmp_path, rng, suffix):
    values = rng.integers(0, 256, (13, 21)).astype(np.uint8)
    write_image(tmp_path / f"g{suffix}", values)
    assert np.array_equal(read_image(tmp_path / f"g{suffix}"), values)


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_rgb_round_trip(tmp_path, rng, suffix):
    values = rng.integers(0, 256, (13, 21, 3)).astype(np.uint8)
    write_image(tmp_path / f"c{suffix}", values)
    assert np.array_equal(read_image(tmp_path / f"c{suffix}"), values)


def test_pgm_is_binary_variant(tmp_path):
    write_image(tmp_path / "g.pgm", np.zeros((2, 3), dtype=np.uint8))
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5")
    write_image(tmp_path / "c.ppm", np.zeros((2, 3, 3), dtype=np.uint8))
    assert (tmp_path / "c.ppm").read_bytes().startswith(b"P6")


def test_mask_round_trip(tmp_path, rng):
    mask = ImagePlane(rng.integers(0, 2, (9, 11)).astype(np.uint8), 32.0)
    write_mask(tmp_path / "m.pgm", mask)
    back = read_mask(tmp_path / "m.pgm", 32.0)
    assert np.array_equal(back.values, mask.values)
