"""Model forward/backward tests.

The analytic gradients are validated against central finite differences,
and the weighted loss against a brute-force double loop, so the two code
paths fail independently if either is wrong.
"""

import numpy as np
import pytest

from plasmalink.exceptions import NonFiniteError
from plasmalink.link import build_constellation
from plasmalink.net import (
    adam_step,
    collect_params,
    init_adam,
    init_model,
    load_model,
    loss_and_gradients,
    project,
    project_all,
    save_model,
    symbol_transforms,
    weighted_loss,
    with_params,
)


def make_batch(model, m, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(m, 2))
    w = rng.uniform(0.1, 1.0, size=(m, model.order))
    w /= w.sum(axis=1, keepdims=True)
    return y, w


def finite_difference(model, y, w, param_idx, flat_idx, h=1e-6):
    """Central-difference dL/dtheta for one scalar coordinate."""
    params = [p.copy() for p in collect_params(model)]
    params[param_idx].flat[flat_idx] += h
    up = weighted_loss(with_params(model, params), y, w)
    params[param_idx].flat[flat_idx] -= 2 * h
    down = weighted_loss(with_params(model, params), y, w)
    return (up - down) / (2 * h)


class TestTransforms:
    def test_qpsk_first_transform(self):
        t = symbol_transforms(build_constellation(2))
        r = 1 / np.sqrt(2)
        np.testing.assert_allclose(t[0], [[r, -r], [r, r]], atol=1e-15)

    def test_transform_is_complex_multiplication(self):
        const = build_constellation(2)
        t = symbol_transforms(const)
        z = 0.3 - 0.7j
        for k in range(4):
            got = t[k] @ np.array([z.real, z.imag])
            want = const.points[k] * z
            np.testing.assert_allclose(got, [want.real, want.imag],
                                       atol=1e-15)

    def test_psk_transforms_are_rotations(self):
        t = symbol_transforms(build_constellation(2))
        for k in range(4):
            np.testing.assert_allclose(t[k].T @ t[k], np.eye(2), atol=1e-15)


class TestForward:
    def test_zero_parameters_give_half_symbol(self):
        # all-zero weights: coordinate 0, radius sigmoid(0)=0.5, angle 0,
        # so every projection is 0.5 * x_k
        const = build_constellation(2)
        model = init_model(const, rng_seed=0)
        zeros = [np.zeros_like(p) for p in collect_params(model)]
        model = with_params(model, zeros)
        y = np.array([1.3, -0.4])
        for k in range(4):
            want = 0.5 * np.array([const.points[k].real,
                                   const.points[k].imag])
            np.testing.assert_allclose(project(model, k, y), want,
                                       atol=1e-15)
        np.testing.assert_allclose(
            project(model, 0, y), [0.3535533905932738, 0.3535533905932738],
            rtol=1e-15)

    def test_single_and_batch_agree(self):
        model = init_model(build_constellation(2), rng_seed=1)
        y = np.random.default_rng(2).normal(size=(5, 2))
        batch = project(model, 3, y)
        for i in range(5):
            np.testing.assert_allclose(project(model, 3, y[i]), batch[i],
                                       rtol=1e-14)

    def test_project_all_matches_per_curve(self):
        model = init_model(build_constellation(1), rng_seed=3)
        y = np.random.default_rng(4).normal(size=(6, 2))
        allp = project_all(model, y)
        assert allp.shape == (6, 2, 2)
        for k in range(2):
            np.testing.assert_allclose(allp[:, k], project(model, k, y))

    def test_curves_share_one_decoder(self):
        # with identical encoders, undoing T_k must give the same canonical
        # point for every symbol
        model = init_model(build_constellation(2), rng_seed=5)
        params = collect_params(model)
        per_enc = 4  # two layers, weights+bias each
        for k in range(1, 4):
            for j in range(per_enc):
                params[k * per_enc + j] = params[j].copy()
        model = with_params(model, params)
        y = np.array([[0.2, 0.9], [-1.1, 0.3]])
        canonical = [np.linalg.solve(model.transforms[k].astype(float),
                                     project(model, k, y).T).T
                     for k in range(4)]
        for k in range(1, 4):
            np.testing.assert_allclose(canonical[k], canonical[0],
                                       rtol=1e-12, atol=1e-14)

    def test_projection_magnitude_bounded_by_symbol(self):
        # |projection| = rho * |x_k| < |x_k| since rho is a sigmoid output
        model = init_model(build_constellation(2), rng_seed=31)
        y = np.random.default_rng(32).normal(scale=3.0, size=(200, 2))
        for k in range(4):
            mags = np.linalg.norm(project(model, k, y), axis=1)
            assert np.all(mags < 1.0 + 1e-12)

    def test_curve_samples_are_rigid_copies(self):
        from plasmalink.net import decode_curve
        model = init_model(build_constellation(2), rng_seed=33)
        lam = np.linspace(-2, 2, 9)
        curves = decode_curve(model, lam)
        assert curves.shape == (4, 9, 2)
        base = np.linalg.solve(model.transforms[0], curves[0].T).T
        for k in range(4):
            np.testing.assert_allclose(curves[k],
                                       base @ model.transforms[k].T,
                                       rtol=1e-12, atol=1e-15)

    def test_init_deterministic_per_seed(self):
        const = build_constellation(2)
        a = collect_params(init_model(const, rng_seed=9))
        b = collect_params(init_model(const, rng_seed=9))
        for x, z in zip(a, b):
            np.testing.assert_array_equal(x, z)
        c = collect_params(init_model(const, rng_seed=10))
        assert any(not np.array_equal(x, z) for x, z in zip(a, c))


class TestLoss:
    def test_matches_brute_force(self):
        model = init_model(build_constellation(2), rng_seed=6)
        y, w = make_batch(model, 12, seed=7)
        total = 0.0
        for i in range(12):
            for k in range(4):
                d = y[i] - project(model, k, y[i])
                total += w[i, k] * float(d @ d)
        np.testing.assert_allclose(weighted_loss(model, y, w), total / 12,
                                   rtol=1e-12)

    def test_linear_in_weights(self):
        model = init_model(build_constellation(2), rng_seed=8)
        y, w1 = make_batch(model, 10, seed=9)
        _, w2 = make_batch(model, 10, seed=10)
        combo = weighted_loss(model, y, 0.3 * w1 + 0.7 * w2)
        parts = 0.3 * weighted_loss(model, y, w1) + \
            0.7 * weighted_loss(model, y, w2)
        np.testing.assert_allclose(combo, parts, rtol=1e-12)

    def test_one_hot_weights_reduce_to_mse(self):
        model = init_model(build_constellation(1), rng_seed=11)
        y, _ = make_batch(model, 8, seed=12)
        labels = np.random.default_rng(13).integers(0, 2, size=8)
        w = np.zeros((8, 2))
        w[np.arange(8), labels] = 1.0
        picked = np.stack([project(model, labels[i], y[i]) for i in range(8)])
        mse = float(np.mean(np.sum((y - picked) ** 2, axis=1)))
        np.testing.assert_allclose(weighted_loss(model, y, w), mse,
                                   rtol=1e-12)

    def test_hand_value_zero_param_bpsk(self):
        # zero-param curves project to (0.5, 0) and (-0.5, 0); for
        # y=(1.5, 0) the distances are 1 and 4, equal weights average 2.5
        model = init_model(build_constellation(1), rng_seed=14)
        model = with_params(model, [np.zeros_like(p)
                                    for p in collect_params(model)])
        y = np.array([[1.5, 0.0]])
        w = np.array([[0.5, 0.5]])
        np.testing.assert_allclose(weighted_loss(model, y, w), 2.5,
                                   rtol=1e-14)

    def test_shape_validation(self):
        model = init_model(build_constellation(2), rng_seed=15)
        with pytest.raises(ValueError):
            weighted_loss(model, np.zeros((4, 3)), np.zeros((4, 4)))
        with pytest.raises(ValueError):
            weighted_loss(model, np.zeros((4, 2)), np.zeros((4, 3)))


class TestGradients:
    def test_matches_finite_differences(self):
        model = init_model(build_constellation(2), rng_seed=16)
        y, w = make_batch(model, 8, seed=17)
        loss, grads = loss_and_gradients(model, y, w)
        np.testing.assert_allclose(loss, weighted_loss(model, y, w),
                                   rtol=1e-12)
        rng = np.random.default_rng(18)
        for _ in range(60):
            pi = rng.integers(0, len(grads))
            fi = rng.integers(0, grads[pi].size)
            num = finite_difference(model, y, w, pi, fi)
            ana = grads[pi].flat[fi]
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            assert rel < 1e-4, (pi, fi, ana, num)

    def test_gradient_shapes_mirror_params(self):
        model = init_model(build_constellation(2), rng_seed=19)
        y, w = make_batch(model, 4, seed=20)
        _, grads = loss_and_gradients(model, y, w)
        params = collect_params(model)
        assert len(grads) == len(params)
        for g, p in zip(grads, params):
            assert g.shape == p.shape

    def test_unused_encoder_gets_zero_gradient(self):
        # zero weight on symbol 2 everywhere: its encoder cannot matter
        model = init_model(build_constellation(2), rng_seed=21)
        y, w = make_batch(model, 6, seed=22)
        w[:, 2] = 0.0
        _, grads = loss_and_gradients(model, y, w)
        per_enc = 4
        for g in grads[2 * per_enc:3 * per_enc]:
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_zero_weights_zero_gradient(self):
        model = init_model(build_constellation(2), rng_seed=34)
        y, _ = make_batch(model, 6, seed=35)
        loss, grads = loss_and_gradients(model, y, np.zeros((6, 4)))
        assert loss == 0.0
        for g in grads:
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_duplicated_half_weight_sample_matches_single(self):
        # loss is linear in W, so one sample at weight 1 equals the same
        # sample twice at weight 1/2 (batch mean folded into the weights)
        model = init_model(build_constellation(1), rng_seed=36)
        y = np.array([[0.4, -0.8]])
        w = np.array([[0.7, 0.3]])
        single = loss_and_gradients(model, y, w)
        doubled = loss_and_gradients(model, np.vstack([y, y]),
                                     np.vstack([w, w]))
        np.testing.assert_allclose(doubled[0], single[0], rtol=1e-14)
        for a, b in zip(doubled[1], single[1]):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-18)

    def test_nonfinite_raises(self):
        model = init_model(build_constellation(1), rng_seed=23)
        params = [p.copy() for p in collect_params(model)]
        params[0][0, 0] = np.nan
        model = with_params(model, params)
        y, w = make_batch(model, 4, seed=24)
        with pytest.raises(NonFiniteError):
            loss_and_gradients(model, y, w)


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        params = [np.array([1.0])]
        grads = [np.array([2.0])]
        new, state = adam_step(params, grads, init_adam(params),
                               learning_rate=1e-3)
        # mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps)
        np.testing.assert_allclose(new[0], 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8),
                                   rtol=1e-15)
        assert state.step == 1

    def test_zero_gradient_keeps_params(self):
        params = [np.array([[0.5, -0.25]])]
        grads = [np.zeros((1, 2))]
        new, _ = adam_step(params, grads, init_adam(params))
        np.testing.assert_array_equal(new[0], params[0])

    def test_inputs_not_mutated(self):
        params = [np.ones(3)]
        grads = [np.full(3, 0.7)]
        state = init_adam(params)
        adam_step(params, grads, state)
        np.testing.assert_array_equal(params[0], np.ones(3))
        np.testing.assert_array_equal(state.first_moment[0], np.zeros(3))

    def test_fresh_state_reproduces_trajectory(self):
        model = init_model(build_constellation(1), rng_seed=25)
        y, w = make_batch(model, 16, seed=26)

        def run(steps):
            m = model
            st = init_adam(collect_params(m))
            for _ in range(steps):
                _, g = loss_and_gradients(m, y, w)
                p, st = adam_step(collect_params(m), g, st)
                m = with_params(m, p)
            return m

        a = run(5)
        b = run(5)
        for x, z in zip(collect_params(a), collect_params(b)):
            np.testing.assert_array_equal(x, z)

    def test_reset_matches_fresh_state(self):
        from plasmalink.net import reset_optimizer
        params = [np.ones((2, 2)), np.zeros(3)]
        grads = [np.full((2, 2), 0.5), np.ones(3)]
        state = init_adam(params)
        _, state = adam_step(params, grads, state)
        reset = reset_optimizer(state)
        fresh = init_adam(params)
        assert reset.step == 0
        for a, b in zip(reset.first_moment, fresh.first_moment):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(reset.second_moment, fresh.second_moment):
            np.testing.assert_array_equal(a, b)

    def test_descends_on_fixed_batch(self):
        model = init_model(build_constellation(2), rng_seed=27)
        y, w = make_batch(model, 64, seed=28)
        before = weighted_loss(model, y, w)
        st = init_adam(collect_params(model))
        m = model
        for _ in range(50):
            _, g = loss_and_gradients(m, y, w)
            p, st = adam_step(collect_params(m), g, st)
            m = with_params(m, p)
        assert weighted_loss(m, y, w) < before


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = init_model(build_constellation(2), rng_seed=29,
                           noise_variance=0.37)
        path = tmp_path / "model.npz"
        save_model(path, model)
        back = load_model(path)
        assert back.order == 4
        assert back.noise_variance == 0.37
        np.testing.assert_array_equal(back.transforms, model.transforms)
        for a, b in zip(collect_params(model), collect_params(back)):
            np.testing.assert_array_equal(a, b)
        y = np.random.default_rng(30).normal(size=(5, 2))
        np.testing.assert_array_equal(project_all(model, y),
                                      project_all(back, y))
