import math

import numpy as np
import pytest

from trialfit import autodiff as ad
from trialfit import gan as G
from trialfit import losses
from trialfit import state as S
from trialfit.autodiff import Tensor
from trialfit.data import ArrayBatches
from trialfit.errors import MissingKeyError
from trialfit.optim import SGD
from trialfit.state import State
from trialfit.trial import Trial

from oracles import bce


def _gan_state(disc_gen, disc_gen_det, disc_real):
    return State({S.LOSS: Tensor(0.0), G.DISC_GEN: Tensor(disc_gen), G.DISC_GEN_DET: Tensor(disc_gen_det),
                  G.DISC_REAL: Tensor(disc_real)})


def test_gan_keys_distinct_from_reserved():
    gan_keys = {G.GEN_IMGS, G.DISC_GEN, G.DISC_GEN_DET, G.DISC_REAL, G.G_LOSS, G.D_LOSS}
    assert len(gan_keys) == 6
    assert not gan_keys & set(S.RESERVED_KEYS)


def test_bce_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    p, y = rng.uniform(0, 1, (5, 1)), rng.integers(0, 2, (5, 1)).astype(float)
    assert abs(losses.binary_cross_entropy(Tensor(p), Tensor(y)).item() - bce(p, y)) < 1e-15


def test_gan_loss_at_half():
    state = _gan_state(np.full((4, 1), 0.5), np.full((4, 1), 0.5), np.full((4, 1), 0.5))
    G.gan_loss.on_criterion(state)
    assert state[G.G_LOSS] == pytest.approx(math.log(2), abs=1e-12)
    assert state[G.D_LOSS] == pytest.approx(math.log(2), abs=1e-12)
    assert abs(state[S.LOSS].item() - 2 * math.log(2)) < 1e-12


def test_gan_loss_perfect_predictions_hit_clamp_floor():
    state = _gan_state(np.ones((3, 1)), np.zeros((3, 1)), np.ones((3, 1)))
    G.gan_loss.on_criterion(state)
    floor = -math.log(1 - 1e-7)
    assert state[S.LOSS].item() == pytest.approx(floor + floor, rel=1e-9)
    assert state[S.LOSS].item() < 1e-6


def test_gan_loss_random_matches_hand_assembly():
    rng = np.random.default_rng(4)
    dg, dgd, dr = (rng.uniform(0.01, 0.99, (6, 1)) for _ in range(3))
    state = _gan_state(dg, dgd, dr)
    G.gan_loss.on_criterion(state)
    ones, zeros = np.ones((6, 1)), np.zeros((6, 1))
    expected = bce(dg, ones) + (bce(dr, ones) + bce(dgd, zeros)) / 2
    assert abs(state[S.LOSS].item() - expected) < 1e-12


def test_gan_loss_writes_plain_numbers():
    state = _gan_state(np.full((2, 1), 0.3), np.full((2, 1), 0.3), np.full((2, 1), 0.6))
    G.gan_loss.on_criterion(state)
    assert type(state[G.G_LOSS]) is float and type(state[G.D_LOSS]) is float


def test_gan_loss_missing_key():
    with pytest.raises(MissingKeyError):
        G.gan_loss.on_criterion(State({S.LOSS: Tensor(0.0)}))


def test_forward_wiring_order():
    model = G.GAN(latent_dim=3, hidden=4, seed=0)
    trace = []
    model.record(trace)
    state = State({S.EPOCH: 0, S.BATCH: 0, S.DATA_PHASE: S.TRAIN})
    model.forward(Tensor(np.zeros((5, 2))), state)
    assert trace == ["gen_imgs", "disc_gen", "discriminator.zero_grad", "disc_gen_det", "disc_real"]
    for key in (G.GEN_IMGS, G.DISC_GEN, G.DISC_GEN_DET, G.DISC_REAL):
        assert key in state
    assert state[G.GEN_IMGS].shape == (5, 2) and state[G.DISC_REAL].shape == (5, 1)


def test_gradient_paths_are_separated():
    model = G.GAN(latent_dim=3, hidden=4, seed=1)
    state = State({S.EPOCH: 0, S.BATCH: 0, S.DATA_PHASE: S.TRAIN})
    model.forward(Tensor(np.random.default_rng(0).standard_normal((4, 2))), state)
    g_loss, d_loss = G.gan_loss_terms(state[G.DISC_GEN], state[G.DISC_GEN_DET], state[G.DISC_REAL])

    ad.backward(g_loss)
    assert all(p.grad is None for p in model.discriminator.parameters())
    assert all(p.grad is not None for p in model.generator.parameters())
    model.zero_grad()

    ad.backward(d_loss)
    assert all(p.grad is None for p in model.generator.parameters())
    assert all(p.grad is not None for p in model.discriminator.parameters())


def test_criterionless_gan_trial_runs():
    real = G.mixture_samples(64, 4, np.random.default_rng(0))
    model = G.GAN(latent_dim=2, hidden=8, seed=0)
    trial = Trial(model, SGD(model.parameters(), lr=0.05), metrics=["loss"], callbacks=[G.gan_loss], pass_state=True)
    history = trial.with_train_generator(ArrayBatches(real, None, 16)).run(2)
    assert len(history) == 2 and math.isfinite(history[-1]["loss"])


def test_mixture_and_mode_distance():
    pts = G.mixture_samples(2000, 8, np.random.default_rng(0), sigma=0.05)
    d = G.mean_mode_distance(pts, 8)
    # mean of a 2-D Rayleigh(0.05) is 0.05 * sqrt(pi / 2)
    assert d == pytest.approx(0.05 * math.sqrt(math.pi / 2), rel=0.05)
    assert G.mean_mode_distance(np.zeros((3, 2)), 8) == pytest.approx(1.0)
