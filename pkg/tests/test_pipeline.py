import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustscope import pipeline as P
from robustscope.errors import ShapeError, StateError
from robustscope.image import Image
from robustscope.scene import SceneState

from oracles import (fisher_yates_splitmix, gaussian_2d_direct,
                     hue_shift_colorsys, luma601_scalar)

RNG = np.random.default_rng(77)


def rand_img(h=32, w=32, rng=None):
    return Image((rng or RNG).uniform(0, 1, size=(h, w, 3)).astype(np.float32))


# ---------------------------------------------------------------------------
# color
# ---------------------------------------------------------------------------

def test_color_neutral_is_identity():
    img = rand_img()
    out = P.apply_color(img, 0.0, 0.0, 1.0, 1.0)
    np.testing.assert_array_equal(out.rgb, img.rgb)


def test_color_hue_360_is_identity():
    img = rand_img()
    out = P.apply_color(img, 0.0, 360.0, 1.0, 1.0)
    assert np.max(np.abs(out.rgb - img.rgb)) < 1e-4


def test_color_hue_matches_colorsys_oracle():
    img = rand_img(8, 8, np.random.default_rng(3))
    for deg in (30.0, 123.0, 270.0):
        out = P.apply_color(img, 0.0, deg, 1.0, 1.0)
        ref = hue_shift_colorsys(img.rgb.astype(np.float64), deg)
        assert np.max(np.abs(out.rgb - ref)) < 1e-5


def test_color_desaturation_matches_luma_oracle():
    img = rand_img(8, 8)
    out = P.apply_color(img, 0.0, 0.0, 0.0, 1.0)
    # channels equal
    assert np.max(np.abs(out.rgb - out.rgb[..., :1])) < 1e-6
    for y in range(8):
        for x in range(8):
            ref = luma601_scalar(*[float(v) for v in img.rgb[y, x]])
            assert abs(float(out.rgb[y, x, 0]) - ref) < 1e-5


def test_color_fade_and_contrast():
    img = rand_img()
    black = P.apply_color(img, 1.0, 0.0, 1.0, 1.0)
    assert np.all(black.rgb == 0)
    flat = P.apply_color(img, 0.0, 0.0, 1.0, 0.0)
    assert np.max(np.abs(flat.rgb - 0.5)) < 1e-6


# ---------------------------------------------------------------------------
# frequency
# ---------------------------------------------------------------------------

def test_frequency_split_constant_image():
    img = Image.flat(16, 16, (0.3, 0.5, 0.7))
    low, high = P.frequency_split(img, 2.0)
    assert np.max(np.abs(high)) < 1e-6
    assert np.max(np.abs(low.rgb - img.rgb)) < 1e-6


def test_frequency_split_impulse_matches_direct_conv_oracle():
    rgb = np.zeros((21, 21, 3), dtype=np.float32)
    rgb[10, 10] = 1.0
    sigma = 1.5
    low, _ = P.frequency_split(Image(rgb), sigma)
    radius = max(1, int(round(3.0 * sigma)))
    ref = gaussian_2d_direct(rgb, sigma, radius)
    assert np.max(np.abs(low.rgb - ref)) < 1e-4


def test_frequency_reconstruction():
    img = rand_img()
    low, high = P.frequency_split(img, 3.0)
    back = P.frequency_recombine(low, high, 1.0, 1.0)
    assert np.max(np.abs(back.rgb - img.rgb)) < 1e-6


def test_frequency_low_only_is_blur():
    img = rand_img()
    low, high = P.frequency_split(img, 2.0)
    out = P.frequency_recombine(low, high, 1.0, 0.0)
    assert np.max(np.abs(out.rgb - np.clip(low.rgb, 0, 1))) < 1e-6


def test_frequency_high_only_matches_oracle_composition():
    img = rand_img(24, 24, np.random.default_rng(5))
    sigma = 2.0
    low, high = P.frequency_split(img, sigma)
    out = P.frequency_recombine(low, high, 0.0, 1.0)
    radius = max(1, int(round(3.0 * sigma)))
    ref_low = gaussian_2d_direct(img.rgb, sigma, radius)
    ref = np.clip(img.rgb - ref_low, 0.0, 1.0)
    assert np.max(np.abs(out.rgb - ref)) < 1e-4


def test_frequency_split_rejects_nonpositive_sigma():
    with pytest.raises(StateError):
        P.frequency_split(rand_img(), 0.0)


# ---------------------------------------------------------------------------
# spatial
# ---------------------------------------------------------------------------

def test_patch_shuffle_k1_identity():
    img = rand_img()
    out = P.patch_shuffle(img, 1, 42)
    np.testing.assert_array_equal(out.rgb, img.rgb)


def test_patch_shuffle_preserves_pixel_multiset():
    img = rand_img(224, 224, np.random.default_rng(8))
    for k in (2, 4, 7):
        out = P.patch_shuffle(img, k, 42)
        a = np.sort(img.rgb.reshape(-1, 3), axis=0)
        b = np.sort(out.rgb.reshape(-1, 3), axis=0)
        np.testing.assert_array_equal(a, b)


def test_patch_shuffle_matches_reference_prng():
    img = rand_img(16, 16, np.random.default_rng(9))
    k, seed = 2, 42
    out = P.patch_shuffle(img, k, seed)
    perm = fisher_yates_splitmix(k * k, seed)
    ref = np.empty_like(img.rgb)
    cells = [(0, 8, 0, 8), (0, 8, 8, 16), (8, 16, 0, 8), (8, 16, 8, 16)]
    for dst in range(4):
        sy0, sy1, sx0, sx1 = cells[perm[dst]]
        dy0, dy1, dx0, dx1 = cells[dst]
        ref[dy0:dy1, dx0:dx1] = img.rgb[sy0:sy1, sx0:sx1]
    np.testing.assert_array_equal(out.rgb, ref)


def test_patch_shuffle_uneven_cells_shape_preserved():
    img = rand_img(15, 17, np.random.default_rng(10))
    out = P.patch_shuffle(img, 4, 7)
    assert out.rgb.shape == img.rgb.shape
    assert np.isfinite(out.rgb).all()


def test_patch_shuffle_rejects_bad_k():
    with pytest.raises(StateError):
        P.patch_shuffle(rand_img(8, 8), 9, 0)
    with pytest.raises(StateError):
        P.patch_shuffle(rand_img(8, 8), 0, 0)


def test_patch_shuffle_deterministic():
    img = rand_img()
    a = P.patch_shuffle(img, 4, 123).rgb
    b = P.patch_shuffle(img, 4, 123).rgb
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# attack overlay
# ---------------------------------------------------------------------------

def test_overlay_neutral_identity():
    img = rand_img()
    out = P.attack_overlay(img, np.zeros_like(img.rgb), 0.0, 0.0)
    np.testing.assert_array_equal(out.rgb, img.rgb)


def test_overlay_full_fade_zero_delta_is_gray():
    img = rand_img()
    out = P.attack_overlay(img, np.zeros_like(img.rgb), 1.0, 1.0)
    assert np.max(np.abs(out.rgb - 0.5)) < 1e-7


def test_overlay_matches_arithmetic_oracle():
    img = rand_img(8, 8, np.random.default_rng(11))
    delta = np.random.default_rng(12).uniform(-0.2, 0.2, size=(8, 8, 3)).astype(np.float32)
    out = P.attack_overlay(img, delta, 0.5, 0.25)
    for y in range(8):
        for x in range(8):
            for c in range(3):
                v = float(img.rgb[y, x, c]) * 0.75 + 0.5 * 0.25 + 0.5 * float(delta[y, x, c])
                v = min(max(v, 0.0), 1.0)
                assert abs(float(out.rgb[y, x, c]) - v) < 1e-6


def test_overlay_shape_mismatch():
    with pytest.raises(ShapeError):
        P.attack_overlay(rand_img(8, 8), np.zeros((4, 4, 3)), 1.0, 0.0)


# ---------------------------------------------------------------------------
# full pipeline driver
# ---------------------------------------------------------------------------

def test_pipeline_neutral_bitwise_identity():
    img = rand_img(64, 64, np.random.default_rng(13))
    out = P.run_pipeline(img, SceneState())
    assert out.rgb is img.rgb  # short-circuit: not even a copy


def test_pipeline_applies_stages_in_order():
    img = rand_img(32, 32, np.random.default_rng(14))
    state = SceneState(saturation=0.0, patch_k=2, shuffle_seed=5)
    out = P.run_pipeline(img, state)
    ref = P.patch_shuffle(P.apply_color(img, 0.0, 0.0, 0.0, 1.0), 2, 5)
    np.testing.assert_array_equal(out.rgb, ref.rgb)


def test_pipeline_attack_overlay_needs_delta_or_fade():
    img = rand_img()
    delta = np.full(img.rgb.shape, 0.1, dtype=np.float32)
    out = P.run_pipeline(img, SceneState(attack_alpha=1.0), delta=delta)
    assert np.max(np.abs(out.rgb - np.clip(img.rgb + 0.1, 0, 1))) < 1e-6
    out2 = P.run_pipeline(img, SceneState(), delta=delta)  # alpha 0: no-op
    np.testing.assert_array_equal(out2.rgb, img.rgb)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 63 - 1))
def test_patch_shuffle_bijection_property(k, seed):
    rng = np.random.default_rng(k)
    size = k * 8
    img = Image(rng.uniform(0, 1, size=(size, size, 3)).astype(np.float32))
    out = P.patch_shuffle(img, k, seed)
    a = np.sort(img.rgb.reshape(-1), axis=0)
    b = np.sort(out.rgb.reshape(-1), axis=0)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# scene state
# ---------------------------------------------------------------------------

def test_scene_state_roundtrip():
    s = SceneState(yaw=33.25, background="grass", patch_k=3, shuffle_seed=99,
                   object_color=(0.0, 0.0, 0.0))
    import json
    back = SceneState.from_dict(json.loads(json.dumps(s.to_dict())))
    assert back == s


def test_scene_state_range_error_names_field():
    with pytest.raises(StateError, match="saturation"):
        SceneState(saturation=1.5)
    with pytest.raises(StateError, match="hue_shift"):
        SceneState(hue_shift=360.0)
    with pytest.raises(StateError, match="patch_k"):
        SceneState(patch_k=0)


def test_scene_state_merge():
    s = SceneState()
    s2 = s.merged({"yaw": 30.0})
    assert s2.yaw == 30.0 and s2.pitch == s.pitch
    with pytest.raises(StateError, match="unknown"):
        s.merged({"nope": 1})
    with pytest.raises(StateError, match="contrast"):
        s.merged({"contrast": 9.0})
