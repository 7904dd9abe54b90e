import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rawmap import DiagonalMapper, IlluminationMapper, KNNMapper, SensorKNNMapper, SensorMapper
from rawmap.color import RawImage
from rawmap.spectral import broadband_camera_a

from conftest import make_world


@pytest.fixture(scope="module")
def small_world():
    return make_world(broadband_camera_a(), 6, seed=0, grid=(6, 6))


class TestParams:
    @pytest.mark.parametrize("cls", [DiagonalMapper, IlluminationMapper, SensorMapper,
                                     KNNMapper, SensorKNNMapper])
    def test_clone_round_trip(self, cls):
        est = cls()
        assert clone(est).get_params() == est.get_params()

    def test_defaults(self):
        assert IlluminationMapper().get_params()["lr0"] == 0.01
        assert SensorMapper().get_params()["lr0"] == 0.001
        assert IlluminationMapper().get_params()["hard_pair_fraction"] == 0.282

    def test_set_params(self):
        est = KNNMapper().set_params(variant="1NN-1NN", k=1)
        assert (est.variant, est.k) == ("1NN-1NN", 1)


class TestFitPredict:
    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            IlluminationMapper().predict([[1, 1, 1]], [[1, 1, 1]])
        with pytest.raises(NotFittedError):
            KNNMapper().predict([[1, 1, 1]], [[1, 1, 1]])

    def test_diagonal(self):
        t = DiagonalMapper().fit().predict([[1, 1, 1], [0.5, 1, 1]], [[2, 1, 0.5], [1, 1, 1]])
        assert t.shape == (2, 3, 3)
        assert np.allclose(t[0], np.diag([2, 1, 0.5]) / np.linalg.norm([2, 1, 0.5]))

    def test_illumination_mapper(self, small_world):
        images, rgbs = small_world
        est = IlluminationMapper(epochs=3, pixels_per_pair=10).fit(images, rgbs)
        t = est.predict(rgbs[:2], rgbs[2:4])
        assert t.shape == (2, 3, 3)
        assert np.allclose(np.linalg.norm(t, axis=(1, 2)), 1.0)
        assert len(est.log_.lr) == 3

    def test_knn_mapper(self, small_world):
        images, rgbs = small_world
        est = KNNMapper(variant="1NN-1NN").fit(images, rgbs, ids=["D65", "a", "b", "c", "d", "e"])
        assert np.array_equal(est.predict(rgbs[1], rgbs[2])[0], est.bank_.transforms[1, 2])

    def test_sensor_mappers(self):
        rng = np.random.default_rng(0)
        sa = rng.random((8, 24, 3)) + 0.05
        sb = sa[:, :, ::-1]
        rgbs = rng.uniform(0.2, 1, (8, 3))
        mlp = SensorMapper(epochs=2).fit(sa, sb, rgbs)
        knn = SensorKNNMapper(k=1).fit(sa, sb, rgbs)
        assert mlp.predict(rgbs[:3]).shape == (3, 3, 3)
        swap = np.eye(3)[::-1] / np.sqrt(3)
        assert np.allclose(np.abs(knn.predict(rgbs[:1])[0]), swap, atol=1e-9)

    def test_transform_image(self):
        img = RawImage(np.full((2, 2, 3), 0.5))
        out = DiagonalMapper().fit().transform_image(img, (1, 1, 1), (1, 0.5, 0.25))
        assert np.allclose(out.data[0, 0] / out.data[0, 0, 0], (1, 0.5, 0.25))


class TestValidation:
    def test_bad_rgb_shape(self):
        with pytest.raises(ValueError):
            DiagonalMapper().predict([[1, 1]], [[1, 1]])

    def test_negative_rgb(self):
        with pytest.raises(ValueError):
            DiagonalMapper().predict([[-1, 1, 1]], [[1, 1, 1]])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            DiagonalMapper().predict([[1, 1, 1]], [[1, 1, 1], [1, 1, 1]])

    def test_nan_images(self, small_world):
        images, rgbs = small_world
        bad = images.copy()
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            IlluminationMapper(epochs=1).fit(bad, rgbs)

    def test_too_few_chart_samples(self):
        with pytest.raises(ValueError):
            SensorKNNMapper().fit(np.ones((3, 2, 3)), np.ones((3, 2, 3)), np.ones((3, 3)))
