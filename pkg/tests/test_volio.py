import io
import struct

import nibabel as nib
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from brainaug import volio
from brainaug.errors import LossyDataError, ParseError, RangeError, ShapeError, UnsupportedFormatError
from brainaug.volio import MASK8, MR16, Slice2D, Volume
from brainaug.volio.nifti import parse_header, read_nifti, write_nifti
from brainaug.volio.png import SIGNATURE, decode_png, encode_png


# ---------------------------------------------------------------- NIFTI


def _nib_write(path, data, dtype, zooms=(1.0, 1.0, 1.0), slope=None, inter=None):
    img = nib.Nifti1Image(data.astype(dtype), np.eye(4))
    img.header.set_data_dtype(dtype)
    img.header.set_zooms(zooms)
    if slope is not None:
        img.header.set_slope_inter(slope, inter)
    nib.save(img, str(path))


@pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.uint16, np.float32])
def test_read_matches_nibabel(tmp_path, rng, dtype):
    hi = 255 if dtype == np.uint8 else 30000
    data = rng.integers(0, hi, size=(7, 5, 3))
    p = tmp_path / "v.nii"
    _nib_write(p, data, dtype, zooms=(1.0, 0.5, 2.0))
    vol = read_nifti(p)
    assert vol.dims == (7, 5, 3)
    assert vol.voxel_size == pytest.approx((1.0, 0.5, 2.0))
    ref = np.asanyarray(nib.load(str(p)).dataobj)
    assert np.array_equal(vol.data, ref)
    assert vol.source_id == "v"


def test_read_gz(tmp_path, rng):
    data = rng.integers(0, 7, size=(4, 4, 2))
    p = tmp_path / "v_seg.nii.gz"
    _nib_write(p, data, np.uint8)
    assert np.array_equal(read_nifti(p).data, data)


def test_write_is_readable_by_nibabel(tmp_path, rng):
    data = rng.integers(0, 4000, size=(6, 4, 5)).astype(np.int32)
    p = tmp_path / "w.nii"
    write_nifti(Volume(data, (1.0, 1.0, 1.5), "w"), p)
    img = nib.load(str(p))
    assert np.array_equal(np.asanyarray(img.dataobj), data)
    assert img.header.get_zooms() == pytest.approx((1.0, 1.0, 1.5))
    assert np.array_equal(read_nifti(p).data, data)


def test_big_endian(tmp_path, rng):
    data = rng.integers(0, 1000, size=(3, 3, 2))
    p = tmp_path / "be.nii"
    img = nib.Nifti1Image(data.astype(">i2"), np.eye(4))
    img.header.set_data_dtype(">i2")
    nib.save(img, str(p))
    assert np.array_equal(read_nifti(p).data, data)


def test_single_plane_volume(tmp_path):
    data = np.array([[[1], [2]], [[3], [4]]])
    vol = Volume(data, (1.0, 1.0, 1.0), "tiny")
    slices = volio.slice_axial(vol)
    assert len(slices) == 1
    assert np.array_equal(slices[0].pixels, data[:, :, 0])
    assert slices[0].origin == ("tiny", 0)


def test_header_errors(tmp_path, rng):
    p = tmp_path / "v.nii"
    _nib_write(p, rng.integers(0, 10, size=(2, 2, 2)), np.int16)
    buf = bytearray(p.read_bytes())
    with pytest.raises(ParseError) as e:
        parse_header(bytes(buf[:100]))
    assert e.value.offset is not None

    bad = bytearray(buf)
    bad[344:348] = b"ni1\0"
    with pytest.raises(UnsupportedFormatError):
        parse_header(bytes(bad))

    bad = bytearray(buf)
    bad[0:4] = struct.pack("<i", 999)
    with pytest.raises(ParseError):
        parse_header(bytes(bad))

    (tmp_path / "t.nii").write_bytes(bytes(buf[:-3]))
    with pytest.raises(ParseError):
        read_nifti(tmp_path / "t.nii")


def test_4d_rejected(tmp_path):
    p = tmp_path / "v4.nii"
    nib.save(nib.Nifti1Image(np.zeros((2, 2, 2, 2), np.int16), np.eye(4)), str(p))
    with pytest.raises(UnsupportedFormatError):
        read_nifti(p)


def test_scaling_rejected(tmp_path):
    p = tmp_path / "s.nii"
    _nib_write(p, np.ones((2, 2, 2)), np.int16, slope=2.0, inter=0.0)
    with pytest.raises(UnsupportedFormatError):
        read_nifti(p)


def test_non_integer_float_rejected(tmp_path):
    p = tmp_path / "f.nii"
    nib.save(nib.Nifti1Image(np.full((2, 2, 2), 1.5, np.float32), np.eye(4)), str(p))
    with pytest.raises(LossyDataError):
        read_nifti(p)


# ---------------------------------------------------------------- PNG


def _pil_decode(buf):
    im = Image.open(io.BytesIO(buf))
    return np.array(im)


@pytest.mark.parametrize("bitdepth,hi", [(8, 256), (16, 65536)])
def test_png_agrees_with_pillow(rng, bitdepth, hi):
    px = rng.integers(0, hi, size=(37, 23))
    buf = encode_png(px, bitdepth)
    assert buf.startswith(SIGNATURE)
    assert np.array_equal(_pil_decode(buf).astype(np.int64), px)
    # and the other direction
    dtype = np.uint8 if bitdepth == 8 else np.uint16
    out = io.BytesIO()
    Image.fromarray(px.astype(dtype)).save(out, format="PNG")
    assert np.array_equal(decode_png(out.getvalue()), px)


def test_png_all_filters_exercised(rng):
    # gradients, noise and flat regions push the per-row heuristic through several filter types
    h, w = 64, 40
    yy, xx = np.mgrid[0:h, 0:w]
    px = np.where(yy < 16, xx * 1000, np.where(yy < 32, yy * 700, rng.integers(0, 65536, (h, w))))
    px[48:] = 123
    assert np.array_equal(decode_png(encode_png(px, 16)), px)


def test_png_corruption_detected(rng):
    buf = bytearray(encode_png(rng.integers(0, 256, (8, 8)), 8))
    buf[40] ^= 0xFF
    with pytest.raises(ParseError):
        decode_png(bytes(buf))
    with pytest.raises(ParseError):
        decode_png(b"not a png at all")


def test_png_rejects_color(rng):
    out = io.BytesIO()
    Image.fromarray(rng.integers(0, 256, (4, 4, 3)).astype(np.uint8)).save(out, format="PNG")
    with pytest.raises(UnsupportedFormatError):
        decode_png(out.getvalue())


def test_zero_mask_round_trip(tmp_path):
    s = Slice2D(np.zeros((256, 256), dtype=np.int64), MASK8)
    volio.write_png(s, tmp_path / "z_slice000.png")
    assert volio.read_png(tmp_path / "z_slice000.png") == s


def test_out_of_range_rejected(tmp_path):
    with pytest.raises(RangeError):
        volio.write_png(Slice2D(np.full((4, 4), 300), MASK8), tmp_path / "a.png")
    with pytest.raises(RangeError):
        Slice2D(np.full((4, 4), 9), MASK8).check_range(n_classes=7)


def test_read_png_names(tmp_path, rng):
    s = Slice2D(rng.integers(0, 60000, (8, 8)), MR16)
    name = volio.slice_filename("BraTS_001", 7)
    assert name == "BraTS_001_slice007.png"
    volio.write_png(s, tmp_path / name)
    r = volio.read_png(tmp_path / name)
    assert r.kind == MR16 and r.origin == ("BraTS_001", 7)
    (tmp_path / "bad_slice001.png").write_bytes(b"\x89PNG\r\n\x1a\nbroken")
    with pytest.raises(ParseError) as e:
        volio.read_png(tmp_path / "bad_slice001.png")
    assert "bad_slice001.png" in str(e.value)


# ---------------------------------------------------------------- padding


def test_pad_amounts():
    assert volio.pad_amounts((240, 240)) == ((8, 8), (8, 8))
    assert volio.pad_amounts((5, 8)) == ((1, 2), (0, 0))
    assert volio.pad_amounts((256, 256)) == ((0, 0), (0, 0))


def test_pad_240_to_256(rng):
    s = Slice2D(rng.integers(0, 1000, (240, 240)), MR16)
    p = volio.pad_to_pow2(s)
    assert p.pixels.shape == (256, 256)
    assert not p.pixels[:8].any() and not p.pixels[:, -8:].any()
    assert volio.crop(p, (240, 240)) == s


@given(st.integers(1, 70), st.integers(1, 70), st.integers(0, 2**32 - 1))
def test_pad_crop_round_trip(h, w, seed):
    px = np.random.default_rng(seed).integers(0, 65536, (h, w))
    s = Slice2D(px, MR16)
    p = volio.pad_to_pow2(s)
    H, W = p.pixels.shape
    assert H >= h and W >= w and H & (H - 1) == 0 and W & (W - 1) == 0
    assert H < 2 * h or H == 1 or h == 1
    assert volio.crop(p, (h, w)) == s
    assert p.pixels.sum() == px.sum()


@given(st.integers(1, 40), st.integers(1, 40), st.sampled_from([8, 16]), st.integers(0, 2**32 - 1))
def test_png_round_trip_property(h, w, bitdepth, seed):
    r = np.random.default_rng(seed)
    px = r.integers(0, 2**bitdepth, (h, w))
    if r.random() < 0.3:
        px = np.cumsum(px % 3, axis=1) % 2**bitdepth
    assert np.array_equal(decode_png(encode_png(px, bitdepth)), px)


def test_slice_axial_order(rng):
    data = rng.integers(0, 100, (4, 3, 5))
    slices = volio.slice_axial(Volume(data, (1, 1, 1), "s"))
    assert [s.origin[1] for s in slices] == list(range(5))
    for k, s in enumerate(slices):
        assert np.array_equal(s.pixels, data[:, :, k])


def test_volume_invariants():
    with pytest.raises(ShapeError):
        Volume(np.zeros((2, 2)), (1, 1, 1), "x")
    with pytest.raises(RangeError):
        Volume(np.full((2, 2, 2), -1), (1, 1, 1), "x")
