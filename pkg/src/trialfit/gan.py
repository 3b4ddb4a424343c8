"""A desk-scale GAN on 2-D points, trained through a single criterion-less trial."""
from __future__ import annotations

import numpy as np

from . import state as S
from .autodiff import Tensor, no_grad
from .callbacks import Callback, add_to_loss
from .losses import binary_cross_entropy
from .nn import MLP, Module
from .state import state_key

GEN_IMGS = state_key("gen_imgs")
DISC_GEN = state_key("disc_gen")
DISC_GEN_DET = state_key("disc_gen_det")
DISC_REAL = state_key("disc_real")
G_LOSS = state_key("g_loss")
D_LOSS = state_key("d_loss")

adversarial_loss = binary_cross_entropy

_PHASE_CODES = {S.TRAIN: 0, S.VALIDATION: 1, S.INFERENCE: 2}


class GAN(Module):
    """Generator and discriminator evaluated together; intermediates go into the state.

    The generator's adversarial term scores its samples with a frozen view of
    the discriminator, so that term's gradient reaches only the generator.
    The discriminator learns from the detached fakes and the real batch.
    Noise for each batch is drawn from ``default_rng([seed, epoch, batch, phase])``.
    """

    def __init__(self, latent_dim: int = 8, hidden: int = 32, seed: int = 0, rng: np.random.Generator = None):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.generator = MLP([latent_dim, hidden, hidden, 2], rng, hidden="tanh")
        self.discriminator = MLP([2, hidden, hidden, 1], rng, hidden="tanh", output="sigmoid")
        self._latent_dim = latent_dim
        self._seed = seed
        self._trace = None

    def record(self, trace: list) -> None:
        """Append the name of each forward step to ``trace`` (for wiring checks)."""
        self._trace = trace

    def _mark(self, event: str) -> None:
        if self._trace is not None:
            self._trace.append(event)

    def noise(self, n: int, state) -> np.ndarray:
        phase = _PHASE_CODES.get(state.get(S.DATA_PHASE, S.TRAIN), 0)
        rng = np.random.default_rng([self._seed, state.get(S.EPOCH, 0), state.get(S.BATCH, 0), phase])
        return rng.standard_normal((n, self._latent_dim))

    def sample(self, z) -> np.ndarray:
        with no_grad():
            return self.generator(Tensor(z)).numpy()

    def forward(self, real_imgs, state):
        z = self.noise(real_imgs.shape[0], state)
        state[GEN_IMGS] = self.generator(Tensor(z))
        self._mark("gen_imgs")
        state[DISC_GEN] = self.discriminator(state[GEN_IMGS], frozen=True)
        self._mark("disc_gen")
        self.discriminator.zero_grad()
        self._mark("discriminator.zero_grad")

        state[DISC_GEN_DET] = self.discriminator(state[GEN_IMGS].detach())
        self._mark("disc_gen_det")
        state[DISC_REAL] = self.discriminator(real_imgs)
        self._mark("disc_real")
        return state[GEN_IMGS]


def gan_loss_terms(disc_gen, disc_gen_det, disc_real):
    """Return ``(g_loss, d_loss)`` as tensors."""
    valid = Tensor(np.ones(disc_real.shape))
    fake = Tensor(np.zeros(disc_gen_det.shape))
    fake_loss = adversarial_loss(disc_gen_det, fake)
    real_loss = adversarial_loss(disc_real, valid)
    g_loss = adversarial_loss(disc_gen, Tensor(np.ones(disc_gen.shape)))
    d_loss = (real_loss + fake_loss) / 2
    return g_loss, d_loss


@add_to_loss
def gan_loss(state):
    g_loss, d_loss = gan_loss_terms(state[DISC_GEN], state[DISC_GEN_DET], state[DISC_REAL])
    state[G_LOSS] = g_loss.item()
    state[D_LOSS] = d_loss.item()
    return g_loss + d_loss


def circle_modes(n_modes: int) -> np.ndarray:
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def mixture_samples(n: int, n_modes: int, rng: np.random.Generator, sigma: float = 0.05) -> np.ndarray:
    """``n`` points from equal-weight Gaussians centred on the unit circle."""
    centres = circle_modes(n_modes)[rng.integers(0, n_modes, size=n)]
    return centres + sigma * rng.standard_normal((n, 2))


def mean_mode_distance(points: np.ndarray, n_modes: int) -> float:
    modes = circle_modes(n_modes)
    d = np.linalg.norm(points[:, None, :] - modes[None, :, :], axis=2)
    return float(d.min(axis=1).mean())


class ModeDistance(Callback):
    """At each epoch end, record ``mode_dist``: mean distance of fixed-noise samples to the nearest mode."""

    def __init__(self, model: GAN, n_modes: int, z: np.ndarray):
        self.model = model
        self.n_modes = n_modes
        self.z = z

    def on_end_epoch(self, state):
        state[S.METRICS]["mode_dist"] = mean_mode_distance(self.model.sample(self.z), self.n_modes)
