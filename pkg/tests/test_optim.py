"""Adam update rule tests."""
import numpy as np

from orchardnav.nn import AdamState, adam_step


def test_first_step_magnitude_close_to_lr():
    # bias-corrected first step: delta = -lr * g / (|g| + eps) ~ -lr * sign(g)
    params = {"w": np.zeros(4)}
    grads = {"w": np.array([0.5, -2.0, 1e-3, 10.0])}
    state = AdamState(lr=0.01)
    new_params, new_state = adam_step(params, grads, state)
    np.testing.assert_allclose(np.abs(new_params["w"]), 0.01, rtol=1e-4)
    np.testing.assert_allclose(np.sign(new_params["w"]), -np.sign(grads["w"]))
    assert new_state.step_count == 1


def test_zero_grad_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0])}
    new_params, _ = adam_step(params, {"w": np.zeros(2)}, AdamState(lr=0.1))
    np.testing.assert_array_equal(new_params["w"], params["w"])


def test_deterministic_given_identical_inputs():
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=3)}
    grads = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=3)}

    def run():
        p, s = dict(params), AdamState(lr=1e-3)
        for _ in range(5):
            p, s = adam_step(p, grads, s)
        return p

    p1, p2 = run(), run()
    np.testing.assert_array_equal(p1["a"], p2["a"])
    np.testing.assert_array_equal(p1["b"], p2["b"])


def test_grad_scaling_preserves_step_sign_pattern():
    rng = np.random.default_rng(4)
    params = {"w": rng.normal(size=16)}
    grads = {"w": rng.normal(size=16)}
    base, _ = adam_step(params, grads, AdamState(lr=1e-3))
    scaled, _ = adam_step(params, {"w": 7.5 * grads["w"]}, AdamState(lr=1e-3))
    np.testing.assert_array_equal(np.sign(base["w"] - params["w"]),
                                  np.sign(scaled["w"] - params["w"]))


def test_second_moment_nonnegative():
    rng = np.random.default_rng(8)
    params = {"w": rng.normal(size=8)}
    state = AdamState(lr=1e-3)
    p = params
    for _ in range(10):
        p, state = adam_step(p, {"w": rng.normal(size=8)}, state)
        assert np.all(state.second_moment["w"] >= 0)
