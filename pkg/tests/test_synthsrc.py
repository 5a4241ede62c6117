import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brainaug import dataset as ds
from brainaug import synthsrc, volio
from brainaug.errors import RangeError, ValidationError
from brainaug.synthsrc import DynamicRange, PhantomParams
from brainaug.volio import MASK8, MR16, Slice2D


def test_range_codec_endpoints():
    assert synthsrc.range_encode(np.array([0, 3, 6])).tolist() == [-1.0, 0.0, 1.0]
    assert synthsrc.range_decode(np.array([-1.0, 0.0, 1.0])).tolist() == [0, 3, 6]
    with pytest.raises(RangeError):
        synthsrc.range_encode(np.array([7]))
    with pytest.raises(ValueError):
        DynamicRange(3, 3)


def test_range_codec_exhaustive():
    v = np.arange(7)
    assert np.array_equal(synthsrc.range_decode(synthsrc.range_encode(v)), v)


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=20))
def test_decode_clamps(ts):
    out = synthsrc.range_decode(np.array(ts))
    assert out.min() >= 0 and out.max() <= 6


def test_mask_deterministic_and_valid():
    p = PhantomParams()
    a, b = synthsrc.gen_phantom_mask(p, 3), synthsrc.gen_phantom_mask(p, 3)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= set(range(7))
    assert a[0, 0] == 0  # corners are background


def test_mask_anatomy_nesting():
    # WM inside GM inside CSF: moving outward from the centre the labels never go back inward
    p = PhantomParams(tumor_count=(0, 0), center_jitter=0.0, head_rotation=(0, 0))
    m = synthsrc.gen_phantom_mask(p, 1)
    row = m[32, 32:]
    order = {4: 0, 5: 1, 6: 2, 0: 3}
    ranks = [order[v] for v in row]
    assert ranks == sorted(ranks)
    assert {4, 5, 6} <= set(row)


def test_tumor_fraction_statistics():
    p = PhantomParams()
    h, w = p.image_size
    fr = np.array([np.isin(synthsrc.gen_phantom_mask(p, s), (1, 2, 3)).mean() for s in range(1000)])
    # every blob is an ellipse with semi-axes r and r*aspect, so per-image area is bounded by
    # count_max * pi * r_max^2 * aspect_max (plus one pixel of rasterization slack around each rim)
    r_max = p.tumor_radius[1] * min(h, w)
    bound = p.tumor_count[1] * math.pi * (r_max + 1) ** 2 * p.tumor_aspect[1] / (h * w)
    assert fr.min() >= 0 and fr.max() <= bound
    # expected area without overlap: E[count] * pi * E[r^2] * E[aspect]; overlaps only shrink it
    a, b = np.array(p.tumor_radius) * min(h, w)
    e_r2 = (a * a + a * b + b * b) / 3
    expect = np.mean(p.tumor_count) * math.pi * e_r2 * np.mean(p.tumor_aspect) / (h * w)
    assert 0.85 * expect <= fr.mean() <= 1.05 * expect
    # the zero-tumour case occurs about a quarter of the time
    assert 0.2 < (fr == 0).mean() < 0.3


def test_render_sigma_zero_exact_means():
    p = PhantomParams(intensity_std=(0.0,) * 7, bias_amplitude=0.0)
    m = synthsrc.gen_phantom_mask(p, 5)
    img = synthsrc.render_intensity(m, p, 9)
    assert img.kind == MR16
    assert np.array_equal(img.pixels, np.asarray(p.intensity_mean)[m].astype(np.uint16))


def test_render_class_means():
    p = PhantomParams(bias_amplitude=0.0)
    sums = np.zeros(7)
    counts = np.zeros(7)
    for s in range(40):
        m = synthsrc.gen_phantom_mask(p, s)
        img = synthsrc.render_intensity(m, p, [s, 1]).pixels.astype(np.float64)
        sums += np.bincount(m.ravel(), img.ravel(), 7)
        counts += np.bincount(m.ravel(), minlength=7)
    for c in range(1, 7):  # class 0 sits on the clamp at zero
        mean, sd = sums[c] / counts[c], p.intensity_std[c]
        assert abs(mean - p.intensity_mean[c]) <= 3 * sd / math.sqrt(counts[c]) + 0.5 / math.sqrt(counts[c])


def test_render_deterministic():
    p = PhantomParams()
    m = synthsrc.gen_phantom_mask(p, 0)
    assert synthsrc.render_intensity(m, p, 4) == synthsrc.render_intensity(m, p, 4)


def test_params_validation():
    with pytest.raises(ValueError):
        PhantomParams(tumor_radius=(0.2, 0.1))
    with pytest.raises(ValueError):
        PhantomParams(intensity_mean=(0,) * 7)
    with pytest.raises(ValueError):
        PhantomParams.from_dict({"nonsense": 1})
    p = PhantomParams()
    assert PhantomParams.from_dict(p.to_dict()) == p
    q = p.perturbed()
    assert q.intensity_mean[3] == pytest.approx(1.06 * p.intensity_mean[3])


def test_gen_dataset_order_independent(tmp_path):
    p = PhantomParams()
    pairs, manifest = synthsrc.gen_synth_dataset(5, p, 11, tmp_path)
    assert len(manifest) == 5 and all(e.provenance == "synthetic" for e in manifest)
    m3, i3 = synthsrc.phantom_pair(p, 11, 3)
    assert np.array_equal(pairs[3][0], m3) and np.array_equal(pairs[3][1], i3)
    assert np.array_equal(ds.load_masks(manifest)[3], m3)


def test_phantom_volume():
    mr, lab = synthsrc.gen_phantom_volume(PhantomParams(), 16, 2, "v")
    assert mr.dims == lab.dims == (64, 64, 16)
    occupied = lab.data.reshape(-1, 16).any(axis=0)
    assert not occupied[0] and not occupied[-1] and occupied[8]


def test_ingest_external(tmp_path):
    (tmp_path / "m").mkdir()
    volio.write_png(Slice2D(np.zeros((4, 4)), MASK8), tmp_path / "m" / "a_slice000.png")
    assert len(synthsrc.ingest_external(tmp_path / "m")) == 1
    volio.write_png(Slice2D(np.full((4, 4), 9), MASK8), tmp_path / "m" / "b_slice000.png")
    volio.write_png(Slice2D(np.full((4, 4), 300), MR16), tmp_path / "m" / "c_slice000.png")
    (tmp_path / "m" / "d_slice000.png").write_bytes(b"junk")
    with pytest.raises(ValidationError) as e:
        synthsrc.ingest_external(tmp_path / "m")
    assert sorted(n for n, _ in e.value.offenders) == ["b_slice000.png", "c_slice000.png", "d_slice000.png"]
