import numpy as np
import pytest

from rawmap.color import apply_transform, diagonal_transform, neutral_mask
from rawmap.spectral import (
    N_BANDS,
    STEP_NM,
    WAVELENGTHS,
    CameraModel,
    SpectralCurve,
    SpectralError,
    SpectralScene,
    blackbody_spd,
    delta_camera,
    delta_curve,
    flat_reflectance,
    gaussian_camera,
    illuminant_rgb,
    led_spd,
    normalize_power,
    random_reflectance,
    random_spd,
    render,
    render_linear,
)


def uniform_scene(refl, h=2, w=2):
    return SpectralScene(np.atleast_2d(refl), np.zeros((h, w), dtype=int))


def flat_spd(level=1.0):
    return SpectralCurve(np.full(N_BANDS, level), "spd", "flat")


def test_grid():
    assert N_BANDS == 65 and WAVELENGTHS[0] == 380 and WAVELENGTHS[-1] == 700


class TestRender:
    def test_single_term_sum(self):
        s = delta_curve(540, 0.7)
        cam = CameraModel("d", np.stack([s, s, s]))
        img = render(uniform_scene(flat_reflectance(0.3)), flat_spd(0.2), cam, exposure=2.0)
        assert np.allclose(img.data, 2.0 * 0.7 * 0.2 * 0.3 * 5)

    def test_clip_at_white(self):
        cam = CameraModel("ones", np.ones((3, N_BANDS)))
        img = render(uniform_scene(np.ones(N_BANDS)), flat_spd(), cam, exposure=1.0)
        assert np.all(img.data == 1.0)
        assert np.allclose(render_linear(uniform_scene(np.ones(N_BANDS)), flat_spd(), cam), 325)

    def test_black_reflectance(self):
        cam = gaussian_camera("g", (600, 540, 460), 40)
        img = render(uniform_scene(np.zeros(N_BANDS)), flat_spd(), cam, exposure=1.0)
        assert np.all(img.data == 0)

    def test_kind_checked(self):
        cam = gaussian_camera("g", (600, 540, 460), 40)
        refl = SpectralCurve(np.ones(N_BANDS) * 0.5, "reflectance")
        with pytest.raises(SpectralError):
            render(uniform_scene(np.ones(N_BANDS)), refl, cam)

    def test_linear_in_exposure_and_spd(self):
        rng = np.random.default_rng(0)
        scene = SpectralScene(np.stack([random_reflectance(rng) for _ in range(4)]),
                              rng.integers(0, 4, (3, 3)))
        cam = gaussian_camera("g", (600, 540, 460), 40)
        spd = blackbody_spd(4000)
        scaled = SpectralCurve(spd.values * 3.5, "spd")
        a = render(scene, scaled, cam, exposure=1.0, clip=False).data
        b = render(scene, spd, cam, exposure=3.5, clip=False).data
        assert np.allclose(a, b, rtol=1e-12)

    def test_auto_exposure_targets_green_percentile(self):
        rng = np.random.default_rng(2)
        scene = SpectralScene(np.stack([random_reflectance(rng) for _ in range(20)]),
                              rng.integers(0, 20, (10, 10)))
        cam = gaussian_camera("g", (600, 540, 460), 40)
        img = render(scene, blackbody_spd(5000), cam, clip=False)
        assert np.percentile(img.data[..., 1], 99) == pytest.approx(0.9)


class TestIlluminantRgb:
    def test_delta_sensitivities(self):
        spd = led_spd([(500, 60, 1.0), (620, 30, 0.5)])
        il = illuminant_rgb(spd, delta_camera())
        p = [spd.values[np.argmin(np.abs(WAVELENGTHS - w))] for w in (610, 540, 450)]
        assert np.allclose(il.rgb, np.array(p) / max(p))

    def test_symmetric_channels(self):
        cam = gaussian_camera("sym", (460, 540, 620), 30)
        il = illuminant_rgb(flat_spd(), cam)
        assert abs(il.rgb[0] - il.rgb[2]) < 1e-9

    def test_warmer_is_redder(self):
        cam = gaussian_camera("g", (600, 540, 460), 40)
        warm = illuminant_rgb(blackbody_spd(2800), cam)
        cool = illuminant_rgb(blackbody_spd(6500), cam)
        assert warm.rgb[0] / warm.rgb[1] > cool.rgb[0] / cool.rgb[1]

    def test_zero_power(self):
        with pytest.raises(SpectralError):
            illuminant_rgb(flat_spd(0.0), delta_camera())


class TestBlackbody:
    def test_6500_peak(self):
        # Wien: 2.898e6 nm K / 6500 K = 445.8 nm
        assert WAVELENGTHS[np.argmax(blackbody_spd(6500).values)] == 445

    def test_2800_monotonic(self):
        assert np.all(np.diff(blackbody_spd(2800).values) > 0)

    @pytest.mark.parametrize("t", [1500, 2500, 6500, 12000, 20000])
    def test_unit_peak(self, t):
        v = blackbody_spd(t).values
        assert np.all(v > 0) and np.all(v <= 1) and np.sum(v == 1.0) == 1

    @pytest.mark.parametrize("t", [1000, 25000])
    def test_range(self, t):
        with pytest.raises(SpectralError):
            blackbody_spd(t)


class TestLed:
    def test_single_peak(self):
        assert WAVELENGTHS[np.argmax(led_spd([(540, 20, 1)]).values)] == 540

    def test_mirror_symmetric(self):
        v = led_spd([(500, 25, 1), (580, 25, 1)]).values
        c = int(np.flatnonzero(WAVELENGTHS == 540)[0])
        assert np.allclose(v[c - 20:c + 21], v[c - 20:c + 21][::-1])

    def test_amplitude_invariance(self):
        a = led_spd([(450, 20, 0.3), (600, 40, 0.8)]).values
        b = led_spd([(450, 20, 0.9), (600, 40, 2.4)]).values
        assert np.allclose(a, b)

    def test_empty(self):
        with pytest.raises(SpectralError):
            led_spd([])


class TestNormalizePower:
    def test_flat_unchanged(self):
        assert np.allclose(normalize_power(flat_spd(), 325).values, 1.0)

    def test_scales(self):
        assert np.allclose(normalize_power(flat_spd(), 650).values, 2.0)

    def test_idempotent(self):
        spd = led_spd([(470, 30, 1), (610, 20, 0.4)])
        once = normalize_power(spd, 800)
        assert np.allclose(normalize_power(once, 800).values, once.values)
        assert once.power() == pytest.approx(800)

    def test_zero(self):
        with pytest.raises(SpectralError):
            normalize_power(flat_spd(0.0), 1)


class TestWorldProperties:
    @pytest.mark.parametrize("seed", range(4))
    def test_delta_sensor_diagonal_world(self, seed):
        rng = np.random.default_rng(seed)
        cam = delta_camera()
        scene = SpectralScene(np.stack([random_reflectance(rng) for _ in range(30)]),
                              rng.integers(0, 30, (6, 5)))
        pu, pv = random_spd(rng, "u"), random_spd(rng, "v")
        iu, iv = illuminant_rgb(pu, cam), illuminant_rgb(pv, cam)
        src = render(scene, pu, cam, exposure=1.0, clip=False)
        dst = render(scene, pv, cam, exposure=1.0, clip=False)
        mapped = apply_transform(diagonal_transform(iu, iv), src).data
        # illuminant RGBs are max-normalized, so align exposure by one scalar
        scale = np.sum(mapped * dst.data) / np.sum(mapped * mapped)
        assert np.max(np.abs(scale * mapped - dst.data)) < 1e-6 * dst.data.max()

    def test_flat_scene_all_neutral(self):
        rng = np.random.default_rng(3)
        pal = np.stack([flat_reflectance(v) for v in rng.uniform(0.05, 0.9, 12)])
        scene = SpectralScene(pal, rng.integers(0, 12, (5, 5)))
        cam = gaussian_camera("g", (600, 540, 460), 40)
        spd = random_spd(rng, "x")
        img = render(scene, spd, cam, clip=False)
        assert not neutral_mask(img, illuminant_rgb(spd, cam)).any()

    def test_reflectance_bounds(self):
        with pytest.raises(SpectralError):
            SpectralCurve(np.full(N_BANDS, 1.2), "reflectance")
        rng = np.random.default_rng(0)
        r = np.stack([random_reflectance(rng) for _ in range(100)])
        assert r.min() >= 0 and r.max() <= 1

    def test_camera_invariants(self):
        with pytest.raises(SpectralError):
            CameraModel("bad", np.ones((3, N_BANDS)), black_level=10, white_level=5)
        with pytest.raises(SpectralError):
            CameraModel("bad", np.zeros((3, N_BANDS)))


def test_step():
    assert STEP_NM == 5.0
