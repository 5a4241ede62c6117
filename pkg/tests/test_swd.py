import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brainaug import swd
from brainaug.errors import EmptyInputError, ShapeError
from oracles import blur_reflect_loops, swd_bruteforce


def test_blur_matches_loops(rng):
    img = rng.standard_normal((9, 12))
    assert np.allclose(swd._blur(img, swd._TAPS), blur_reflect_loops(img), atol=1e-14)


def test_constant_image_pyramid():
    bands = swd.laplacian_pyramid(np.full((16, 16), 5.0), 3)
    assert [b.shape for b in bands] == [(16, 16), (8, 8), (4, 4)]
    assert np.allclose(bands[0], 0, atol=1e-12) and np.allclose(bands[1], 0, atol=1e-12)
    assert np.allclose(bands[2], 5.0)


def test_single_level_is_identity(rng):
    img = rng.standard_normal((8, 8))
    bands = swd.laplacian_pyramid(img, 1)
    assert len(bands) == 1 and np.array_equal(bands[0], img)


def test_pyramid_shape_error():
    with pytest.raises(ShapeError):
        swd.laplacian_pyramid(np.zeros((10, 10)), 3)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_reconstruction_exact(levels, seed):
    img = np.random.default_rng(seed).uniform(0, 1000, (32, 16))
    assert np.allclose(swd.reconstruct(swd.laplacian_pyramid(img, levels)), img, atol=1e-9)


def test_two_point_1d():
    assert swd.sliced_wasserstein(np.array([[0.0]]), np.array([[1.0]]), 8, seed=0) == 1.0


def test_matches_bruteforce_oracle(rng):
    a = rng.standard_normal((40, 5))
    b = rng.standard_normal((35, 5)) * 1.5 + 0.3
    d = swd.random_directions(5, 16, 3)
    assert np.allclose(np.linalg.norm(d, axis=0), 1)
    got = swd.sliced_wasserstein(a, b, directions=d)
    assert got == pytest.approx(swd_bruteforce(a, b, d), rel=1e-12)


def test_symmetric_and_nonnegative(rng):
    a, b = rng.standard_normal((30, 4)), rng.standard_normal((30, 4))
    ab = swd.sliced_wasserstein(a, b, 32, seed=1)
    assert ab >= 0 and ab == pytest.approx(swd.sliced_wasserstein(b, a, 32, seed=1), rel=1e-12)


def test_dimension_mismatch(rng):
    with pytest.raises(ShapeError):
        swd.sliced_wasserstein(rng.standard_normal((4, 3)), rng.standard_normal((4, 2)))


def test_descriptors_standardized(rng):
    cfg = swd.SWDConfig(patches_per_image=50)
    d = swd.extract_descriptors([rng.uniform(0, 9, (16, 16)) for _ in range(3)], cfg)
    assert d.descriptors.shape == (150, 49)
    assert np.allclose(d.descriptors.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(d.descriptors.std(axis=0), 1)
    with pytest.raises(ShapeError):
        swd.extract_descriptors([np.zeros((5, 5))], cfg)


def test_identity_score_zero(rng):
    imgs = [rng.uniform(0, 100, (16, 16)) for _ in range(4)]
    cfg = swd.SWDConfig(n_levels=2, patches_per_image=16, n_projections=32)
    per_level, avg = swd.swd_score(imgs, imgs, cfg)
    assert len(per_level) == 2 and avg < 1e-9
    with pytest.raises(EmptyInputError):
        swd.swd_score([], imgs, cfg)


def test_select_checkpoint(rng):
    ref = [rng.uniform(0, 100, (16, 16)) for _ in range(4)]
    cfg = swd.SWDConfig(n_levels=2, patches_per_image=32, n_projections=64)
    cands = [("a", [x + rng.normal(0, 60, x.shape) for x in ref]), ("b", ref)]
    assert swd.select_checkpoint(cands, ref, cfg) == "b"
    assert swd.select_checkpoint(cands[::-1], ref, cfg) == "b"
    assert swd.select_checkpoint([("z", cands[0][1])], ref, cfg) == "z"
    # ties go to the smallest id
    assert swd.select_checkpoint([("q", ref), ("p", ref)], ref, cfg) == "p"
    with pytest.raises(EmptyInputError):
        swd.select_checkpoint([], ref, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        swd.SWDConfig(patch_size=6)
    with pytest.raises(ValueError):
        swd.SWDConfig(n_projections=0)


@given(st.integers(0, 2**32 - 1))
def test_score_symmetric(seed):
    r = np.random.default_rng(seed)
    a = [r.uniform(0, 9, (16, 16)) for _ in range(2)]
    b = [r.uniform(0, 9, (16, 16)) for _ in range(2)]
    cfg = swd.SWDConfig(n_levels=2, patches_per_image=16, n_projections=16)
    assert abs(swd.swd_score(a, b, cfg)[1] - swd.swd_score(b, a, cfg)[1]) < 1e-9
