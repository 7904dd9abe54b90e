import json

import numpy as np
import pytest

from rawmap.benchmark import generate_benchmark
from rawmap.color import angular_error, fit_transform_lsq
from rawmap.experiments import fit_illum_model
from rawmap.spectral import (
    SpectralScene,
    broadband_camera_a,
    broadband_camera_b,
    delta_camera,
    illuminant_rgb,
    random_reflectance,
    random_spd,
    render,
)
from rawmap.tinynet import (
    AdamState,
    TrainConfig,
    adam_step,
    backward,
    encode_illum_input,
    finetune_oracle,
    forward,
    forward_batch,
    init_model,
    loss_and_grad,
    loss_angular,
    model_from_dict,
    model_to_dict,
    param_count,
    select_hard_pairs,
    step_lr,
    train_illum_mlp,
    train_sensor_mlp,
)
from rawmap.tinynet.mlp import DegenerateOutputError
from rawmap.tinynet.train import SelectionError


def random_model(seed, mode="illum"):
    """Seeded model with every parameter perturbed away from init."""
    m = init_model(mode, seed=seed)
    rng = np.random.default_rng(seed + 100)
    m.set_flat(m.get_flat() + rng.normal(0, 0.3, m.n_params))
    return m


def fd_check(model, x, src, dst, h=1e-5):
    grad = backward(model, x, src, dst)
    flat = model.get_flat()
    fd = np.empty_like(flat)
    probe = model.copy()
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        probe.set_flat(up)
        lu, _ = loss_and_grad(probe, x, src, dst)
        probe.set_flat(dn)
        ld, _ = loss_and_grad(probe, x, src, dst)
        fd[i] = (lu - ld) / (2 * h)
    scale = np.maximum(np.abs(fd), np.abs(grad)).max()
    return np.max(np.abs(grad - fd)) / scale


class TestArchitecture:
    def test_param_counts(self):
        assert param_count(3) == 1481 and param_count(6) == 1577
        assert init_model("sensor").n_params == 1481
        assert init_model("illum").n_params == 1577

    def test_init_is_scaled_identity(self):
        m = init_model("illum", seed=3)
        x = np.random.default_rng(0).random((5, 6))
        assert np.allclose(forward_batch(m, x), np.eye(3) / np.sqrt(3))

    def test_unit_norm(self):
        m = random_model(1)
        out = forward_batch(m, np.random.default_rng(1).random((50, 6)))
        assert np.allclose(np.linalg.norm(out, axis=(1, 2)), 1.0, atol=1e-9)

    def test_hand_built_bias(self):
        m = init_model("illum")
        for w in m.weights:
            w[...] = 0
        m.biases[-1][...] = np.diag([3.0, 4.0, 0.0]).ravel()
        out = forward(m, np.ones(6))
        assert np.allclose(out, np.diag([0.6, 0.8, 0.0]))

    def test_zero_output_raises(self):
        m = init_model("sensor")
        m.biases[-1][...] = 0
        with pytest.raises(DegenerateOutputError):
            forward(m, np.ones(3))

    def test_wrong_input_dim(self):
        with pytest.raises(ValueError):
            forward(init_model("sensor"), np.ones(6))


class TestLoss:
    def test_collinear(self):
        s = np.random.default_rng(0).random((10, 3)) + 0.1
        assert loss_angular(np.eye(3), s, 2 * s) == pytest.approx(0, abs=1e-4)

    def test_orthogonal(self):
        assert loss_angular(np.eye(3), [[1, 0, 0]], [[0, 1, 0]]) == pytest.approx(90)

    def test_true_generator(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        s = rng.random((20, 3)) + 0.1
        assert loss_angular(t / np.linalg.norm(t), s, s @ t.T) == pytest.approx(0, abs=1e-4)

    def test_empty(self):
        with pytest.raises(ValueError):
            loss_angular(np.eye(3), np.zeros((0, 3)), np.zeros((0, 3)))

    def test_matches_color_metric(self):
        rng = np.random.default_rng(2)
        t, s, d = rng.random((3, 3)), rng.random((15, 3)), rng.random((15, 3))
        assert loss_angular(t, s, d) == pytest.approx(np.mean(angular_error(s @ t.T, d)))


class TestGradient:
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = random_model(seed)
        x = rng.random((1, 6))
        src, dst = rng.random((1, 10, 3)) + 0.05, rng.random((1, 10, 3)) + 0.05
        assert fd_check(m, x, src, dst) < 1e-4

    def test_finite_differences_sensor_batch(self):
        rng = np.random.default_rng(7)
        m = random_model(7, "sensor")
        x = rng.random((3, 3))
        assert fd_check(m, x, rng.random((3, 8, 3)), rng.random((3, 8, 3))) < 1e-4

    def test_collinear_zero_gradient(self):
        m = init_model("illum", seed=0)
        src = np.random.default_rng(0).random((1, 10, 3)) + 0.1
        loss, grads = loss_and_grad(m, np.ones((1, 6)), src, 3 * src)
        assert loss < 1e-4
        assert all(np.all(g == 0) for g in grads)

    def test_dst_scale_invariance(self):
        rng = np.random.default_rng(4)
        m = random_model(4)
        x, src, dst = rng.random((2, 6)), rng.random((2, 10, 3)), rng.random((2, 10, 3))
        l1, g1 = loss_and_grad(m, x, src, dst)
        l2, g2 = loss_and_grad(m, x, src, 2 * dst)
        assert l1 == pytest.approx(l2, abs=1e-12)
        assert all(np.allclose(a, b, rtol=1e-9, atol=1e-12) for a, b in zip(g1, g2))

    def test_output_scale_invariance(self):
        rng = np.random.default_rng(5)
        t = rng.normal(size=(3, 3))
        s, d = rng.random((10, 3)), rng.random((10, 3))
        assert loss_angular(t, s, d) == pytest.approx(loss_angular(7.5 * t, s, d))


class TestAdam:
    def test_first_step(self):
        new, state = adam_step(np.zeros(1), np.ones(1), AdamState.zeros(1), 0.01)
        assert new[0] == pytest.approx(-0.01, abs=1e-9) and state.t == 1

    def test_zero_gradient(self):
        p = np.array([1.0, -2.0, 3.0])
        state = AdamState.zeros(3)
        for _ in range(20):
            p2, state = adam_step(p, np.zeros(3), state, 0.01)
            assert np.array_equal(p2, p)

    def test_schedule(self):
        assert [step_lr(e, 0.01) for e in (0, 49, 50, 100, 399)] == \
            [0.01, 0.01, 0.005, 0.0025, 0.01 * 0.5 ** 7]

    def test_mode_defaults(self):
        assert TrainConfig.for_mode("illum").lr0 == 0.01
        c = TrainConfig.for_mode("sensor")
        assert (c.lr0, c.epochs, c.batch_size, c.pixels_per_pair) == (0.001, 400, 8, 1000)
        assert TrainConfig.from_dict(c.to_dict()) == c


class TestHardPairs:
    def test_fraction_one(self):
        rgbs = np.random.default_rng(0).uniform(0.2, 1, (6, 3))
        assert len(select_hard_pairs(rgbs, 1.0)) == 30

    def test_large_set_count(self):
        rgbs = np.random.default_rng(0).uniform(0.2, 1, (250, 3))
        pairs = select_hard_pairs(rgbs)
        # 0.282 * 62250 = 17554.5; the exact ratio reproduces 17566
        assert abs(len(pairs) - 17566) / 17566 < 1e-3
        assert len(select_hard_pairs(rgbs, 17566 / 62250)) == 17566
        assert set(pairs) == {(v, u) for u, v in pairs}

    def test_collinear_extremes(self):
        rgbs = [(0.5, 1, 0.5), (1.0, 1, 1.0), (1.5, 1, 1.5)]
        assert select_hard_pairs(rgbs, 0.34) == [(0, 2), (2, 0)]

    def test_identical(self):
        with pytest.raises(SelectionError):
            select_hard_pairs([(1, 1, 1)] * 4, 0.5)

    def test_deterministic(self):
        rgbs = np.random.default_rng(3).uniform(0.2, 1, (30, 3))
        assert select_hard_pairs(rgbs) == select_hard_pairs(rgbs.copy())


class TestTrainIllum:
    def test_delta_world(self, world):
        # smooth light family and no clipping: every pair is an exact diagonal
        images, rgbs = world(delta_camera(), 26, seed=0, family="blackbody", exposure="peak")
        cfg = TrainConfig(epochs=100)
        model, log = train_illum_mlp(images[:20], rgbs[:20], cfg, 0, images[20:], rgbs[20:])
        assert log.best_val_mae < 0.5
        assert len(log.lr) == 100 and log.lr[50] == 0.005

    def test_deterministic(self, world):
        images, rgbs = world(broadband_camera_a(), 8, seed=1, grid=(6, 6))
        cfg = TrainConfig(epochs=5, pixels_per_pair=20)
        a, _ = train_illum_mlp(images, rgbs, cfg, seed=3)
        b, _ = train_illum_mlp(images, rgbs, cfg, seed=3)
        c, _ = train_illum_mlp(images, rgbs, cfg, seed=4)
        ja, jb = json.dumps(model_to_dict(a)), json.dumps(model_to_dict(b))
        assert ja == jb and ja != json.dumps(model_to_dict(c))

    def test_loss_trend(self):
        bench = generate_benchmark(0, cameras=("camA",), n_test_scenes=1, grid=8)
        _, log = fit_illum_model(bench, "camA", TrainConfig(epochs=60))
        windows = np.array(log.train_loss).reshape(6, 10).mean(axis=1)
        assert np.all(np.diff(windows) <= 0)

    def test_mismatched_inputs(self, world):
        images, rgbs = world(broadband_camera_a(), 4, grid=(4, 4))
        with pytest.raises(ValueError):
            train_illum_mlp(images, rgbs[:3], TrainConfig(epochs=1))


def chart_world(cam_a, cam_b, n_lights, seed, n_patches=24):
    rng = np.random.default_rng(seed)
    scene = SpectralScene(np.stack([random_reflectance(rng) for _ in range(n_patches)]),
                          np.arange(n_patches).reshape(4, 6))
    spds = [random_spd(rng, f"L{i}") for i in range(n_lights)]
    sa = np.stack([render(scene, s, cam_a, clip=False).pixels() for s in spds])
    sb = np.stack([render(scene, s, cam_b, clip=False).pixels() for s in spds])
    rgbs = np.array([illuminant_rgb(s, cam_a).rgb for s in spds])
    return sa, sb, rgbs


def chart_mae(t, sa, sb):
    return float(np.mean([loss_angular(ti, a, b) for ti, a, b in zip(t, sa, sb)]))


class TestTrainSensor:
    def test_self_mapping(self):
        cam = broadband_camera_a()
        sa, _, rgbs = chart_world(cam, cam, 30, seed=0)
        model, _ = train_sensor_mlp(sa[:20], sa[:20], rgbs[:20], TrainConfig.for_mode("sensor", epochs=100))
        from rawmap.tinynet import encode_sensor_input
        t = forward_batch(model, encode_sensor_input(rgbs[20:]))
        assert chart_mae(t, sa[20:], sa[20:]) < 0.2

    def test_linear_mix(self):
        cam = broadband_camera_a()
        mix = np.array([[0.8, 0.25, -0.05], [0.1, 0.9, 0.1], [0.0, 0.2, 0.85]])
        sa, _, rgbs = chart_world(cam, cam, 40, seed=1)
        sb = sa @ mix.T
        model, _ = train_sensor_mlp(sa[:30], sb[:30], rgbs[:30], TrainConfig.for_mode("sensor", epochs=100))
        from rawmap.tinynet import encode_sensor_input
        t = forward_batch(model, encode_sensor_input(rgbs[30:]))
        lsq = fit_transform_lsq(sa[:30].reshape(-1, 3), sb[:30].reshape(-1, 3))
        ref = chart_mae([lsq] * 10, sa[30:], sb[30:])
        assert chart_mae(t, sa[30:], sb[30:]) < ref + 0.3

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            train_sensor_mlp(np.ones((4, 2, 3)), np.ones((4, 2, 3)), np.ones((4, 3)))


@pytest.fixture(scope="class")
def trained(request):
    from conftest import make_world
    images, rgbs = make_world(broadband_camera_b(), 10, seed=5)
    model, _ = train_illum_mlp(images, rgbs, TrainConfig(epochs=100))
    return model, images, rgbs


def usable(img):
    s = img.reshape(-1, 3)
    return s[(s.min(axis=1) > 0.01) & (s.max(axis=1) < 0.99)]


class TestOracle:
    def test_never_worse(self, trained):
        model, images, rgbs = trained
        for u, v in [(0, 1), (2, 7), (9, 4)]:
            x = encode_illum_input(rgbs[u], rgbs[v])
            s, d = images[u].reshape(-1, 3), images[v].reshape(-1, 3)
            ok = (s.min(axis=1) > 0.01) & (d.max(axis=1) < 0.99) & (d.min(axis=1) > 0.01)
            before = loss_angular(forward_batch(model, x)[0], s[ok], d[ok])
            after = loss_angular(finetune_oracle(model, x, s[ok], d[ok], epochs=50), s[ok], d[ok])
            assert after <= before + 0.05

    @pytest.mark.parametrize("light", range(10))
    def test_representable_pair(self, trained, light):
        model, images, rgbs = trained
        t = np.array([[1.1, 0.1, 0.0], [0.05, 0.9, 0.1], [0.0, 0.1, 0.7]])
        s = usable(images[light])
        x = encode_illum_input(rgbs[light], rgbs[light])
        assert loss_angular(finetune_oracle(model, x, s, s @ t.T), s, s @ t.T) < 0.1

    @pytest.mark.parametrize("light", range(10))
    def test_identity_pair(self, trained, light):
        model, images, rgbs = trained
        s = usable(images[light])
        out = finetune_oracle(model, encode_illum_input(rgbs[light], rgbs[light]), s, s)
        assert loss_angular(out, s, s) < 0.05
        assert np.allclose(out * np.sign(out[0, 0]), np.eye(3) / np.sqrt(3), atol=0.02)

    def test_keeps_best_iterate(self, trained):
        model, images, rgbs = trained
        s = usable(images[0])
        x = encode_illum_input(rgbs[0], rgbs[0])
        start = loss_angular(forward_batch(model, x)[0], s, s)
        assert loss_angular(finetune_oracle(model, x, s, s, epochs=0), s, s) == start
        assert loss_angular(finetune_oracle(model, x, s, s, lr=5.0, epochs=3), s, s) <= start

    def test_does_not_mutate(self, trained):
        model, images, rgbs = trained
        before = model.get_flat().copy()
        s = images[0].reshape(-1, 3)[:50] + 0.01
        finetune_oracle(model, encode_illum_input(rgbs[0], rgbs[1]), s, s[:, ::-1], epochs=5)
        assert np.array_equal(model.get_flat(), before)


class TestSerialize:
    def test_round_trip(self, tmp_path):
        from rawmap.tinynet import load_model, save_model
        m = random_model(9)
        m.meta["val_mae"] = 1.25
        save_model(tmp_path / "m.json", m)
        back = load_model(tmp_path / "m.json")
        assert np.array_equal(back.get_flat(), m.get_flat())
        assert back.meta["val_mae"] == 1.25
        x = np.random.default_rng(0).random((4, 6))
        assert np.array_equal(forward_batch(back, x), forward_batch(m, x))

    def test_fields_and_order(self):
        d = model_to_dict(init_model("sensor"))
        assert list(d) == ["mode", "input_dim", "hidden_dims", "seed", "weights",
                           "train_config", "val_mae"]
        assert d["val_mae"] is None

    def test_dim_mismatch(self):
        d = model_to_dict(init_model("sensor"))
        d["input_dim"] = 6
        with pytest.raises(ValueError):
            model_from_dict(d)
