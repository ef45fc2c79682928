"""VAE architecture, loss, gradient and training sanity tests."""
import numpy as np
import pytest

from orchardnav.controllers.vae import TrainHyper, VaeConfig, VaeNet, encode, train_vae
from orchardnav.render import AugmentParams, Frame
from gradcheck_util import finite_difference_grad, relative_error

TOY = VaeConfig(resolution=8, channels=(2, 3), latent_dim=2, beta=3.0)
NO_AUG = AugmentParams(0.0, 0.0, 0.0, 0.0, flip=False)


def toy_net(seed=0):
    net = VaeNet(TOY, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    for name in net.params:
        net.params[name] = net.params[name].astype(np.float64)
        if name.endswith(".b"):  # keep pre-activations off relu kinks
            net.params[name] = rng.normal(0.05, 0.2, net.params[name].shape)
    return net


def test_shapes_default_configuration():
    config = VaeConfig()
    net = VaeNet(config, seed=1)
    x = np.random.default_rng(0).uniform(size=(2, 64, 64, 3)).astype(np.float32)
    mu, logvar = net.encode(x)
    assert mu.shape == (2, 64) and logvar.shape == (2, 64)
    x_hat = net.decode(mu)
    assert x_hat.shape == x.shape
    assert x_hat.min() >= 0.0 and x_hat.max() <= 1.0


def test_paper_scale_configuration():
    config = VaeConfig(resolution=128, latent_dim=256)
    net = VaeNet(config, seed=1)
    x = np.zeros((1, 128, 128, 3), dtype=np.float32)
    mu, _ = net.encode(x)
    assert mu.shape == (1, 256)
    assert net.decode(mu).shape == x.shape


def test_loss_zero_when_reconstruction_exact(monkeypatch):
    net = VaeNet(VaeConfig(resolution=8, channels=(2, 3), latent_dim=2), seed=0)
    x = np.random.default_rng(1).uniform(size=(3, 8, 8, 3)).astype(np.float32)

    monkeypatch.setattr(net, "encode", lambda inp, want_cache=False: (
        (np.zeros((3, 2)), np.zeros((3, 2)), None) if want_cache
        else (np.zeros((3, 2)), np.zeros((3, 2)))))
    monkeypatch.setattr(net, "decode", lambda z, want_cache=False: (
        (x, None) if want_cache else x))

    mu, logvar = net.encode(x)
    from orchardnav.nn import kl_standard_normal, reparameterize
    z = reparameterize(mu, logvar, np.zeros_like(mu))
    x_hat = net.decode(z)
    recon = float(np.sum((x_hat - x) ** 2)) / len(x)
    loss = recon + net.config.beta * kl_standard_normal(mu, logvar)
    assert loss == 0.0


def test_beta_zero_reduces_to_reconstruction():
    x = np.random.default_rng(2).uniform(0.2, 0.8, size=(2, 8, 8, 3))
    eps = np.random.default_rng(3).standard_normal((2, 2))
    net_b0 = toy_net()
    net_b0.config = VaeConfig(resolution=8, channels=(2, 3), latent_dim=2, beta=0.0)
    loss, _, _, (recon, kl) = net_b0.loss_and_grads(x, eps)
    assert loss == recon
    assert kl > 0.0


def test_full_loss_gradients_toy_vae():
    net = toy_net(seed=4)
    rng = np.random.default_rng(5)
    x = rng.uniform(0.2, 0.8, size=(2, 8, 8, 3))
    eps = rng.standard_normal((2, 2))
    _, grads, _, _ = net.loss_and_grads(x, eps)
    worst = {}
    for name, param in net.params.items():
        numeric = finite_difference_grad(
            lambda: net.loss_and_grads(x, eps)[0], param)
        worst[name] = relative_error(grads[name], numeric)
    bad = {k: v for k, v in worst.items() if v >= 1e-5}
    assert not bad, f"gradient mismatches: {bad}"


def _tiny_dataset(n=48, res=16):
    rng = np.random.default_rng(11)
    # structured pseudo-scenes: vertical band at varying position
    images = np.zeros((n, res, res, 3), dtype=np.float32)
    for i in range(n):
        images[i, :, :, :] = rng.uniform(0.3, 0.5)
        c = int(rng.integers(2, res - 2))
        images[i, :, c - 1:c + 1, :] = rng.uniform(0.7, 0.9)
    return images


def test_training_reduces_loss():
    config = VaeConfig(resolution=16, channels=(8, 16), latent_dim=8)
    _, history = train_vae(_tiny_dataset(), config,
                           TrainHyper(epochs=8, batch_size=16, lr=2e-3, seed=0),
                           aug=NO_AUG)
    assert history["loss"][-1] < history["loss"][0]
    assert all(np.isfinite(history["kl"])) and history["kl"][-1] > 0


def test_zero_lr_leaves_params_unchanged():
    config = VaeConfig(resolution=16, channels=(8, 16), latent_dim=8)
    net, _ = train_vae(_tiny_dataset(), config,
                       TrainHyper(epochs=1, batch_size=16, lr=0.0, seed=3), aug=NO_AUG)
    reference = VaeNet(config, seed=3)
    for name in reference.params:
        np.testing.assert_array_equal(net.params[name], reference.params[name])


def test_training_deterministic_per_seed():
    config = VaeConfig(resolution=16, channels=(8, 16), latent_dim=8)
    hyper = TrainHyper(epochs=3, batch_size=16, lr=1e-3, seed=9)
    _, h1 = train_vae(_tiny_dataset(), config, hyper)
    _, h2 = train_vae(_tiny_dataset(), config, hyper)
    assert h1["loss"] == h2["loss"]


def test_train_vae_rejects_empty_dataset():
    with pytest.raises(ValueError, match="empty"):
        train_vae(np.zeros((0, 16, 16, 3)), VaeConfig(resolution=16, channels=(8, 16)),
                  TrainHyper(epochs=1))


def test_encode_deterministic_and_sized():
    config = VaeConfig(resolution=16, channels=(8, 16), latent_dim=8)
    net = VaeNet(config, seed=0)
    frame = Frame(pixels=np.random.default_rng(0).uniform(size=(16, 16, 3)).astype(np.float32))
    a, b = encode(frame, net), encode(frame, net)
    assert a.shape == (8,)
    np.testing.assert_array_equal(a, b)


def test_encode_rejects_wrong_resolution():
    net = VaeNet(VaeConfig(resolution=16, channels=(8, 16), latent_dim=8), seed=0)
    frame = Frame(pixels=np.zeros((32, 32, 3), dtype=np.float32))
    with pytest.raises(ValueError, match="expected"):
        encode(frame, net)
