"""Adversarial objectives and a desk-scale training loop.

The discriminator here is a small softplus MLP, not the ResNet used for the
published results; softplus keeps the R1 term twice differentiable so it can
be trained through.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .generator import GeneratorConfig, GeneratorParams, build_generator, generate
from .numerics import ops
from .numerics.nn import Linear
from .numerics.optim import ADAM_BETA1, ADAM_BETA2, ADAM_LR, AdamState, adam_step
from .numerics.tensor import GradTape, ShapeError, Tensor, backward

log = logging.getLogger(__name__)

R1_GAMMA = 10.0
VQ_PERCEPTUAL_WEIGHT = 5e-5
VQ_ADVERSARIAL_WEIGHT = 0.1


class TrainingDivergence(FloatingPointError):
    def __init__(self, step: int, what: str):
        super().__init__(f"training diverged at step {step}: {what}")
        self.step = step


@dataclass
class GanHyper:
    gamma: float = R1_GAMMA
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    batch_size: int = 32
    steps: int = 2000
    eval_every: int = 100
    eval_samples: int = 512

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("R1 weight must be non-negative")


@dataclass
class ToyDiscriminator:
    """Flatten, then three affine layers with softplus in between, to one logit per image."""

    layers: list[Linear]

    @classmethod
    def create(cls, image_shape: Sequence[int], hidden: int = 64, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        d_in = int(np.prod(image_shape))
        dims = [d_in, hidden, hidden, 1]
        layers = []
        for a, b in zip(dims[:-1], dims[1:]):
            w = (rng.standard_normal((a, b)) / math.sqrt(a)).astype(dtype)
            layers.append(Linear(Tensor(w, requires_grad=True), Tensor(np.zeros(b, dtype), requires_grad=True)))
        return cls(layers)

    def parameters(self) -> list[Tensor]:
        return [t for layer in self.layers for t in (layer.w, layer.b)]

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.reshape(x, (x.shape[0], -1))
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = ops.softplus(h)
        return ops.reshape(h, (x.shape[0],))


Discriminator = Callable[[Tensor], Tensor]


def r1_penalty(D: Discriminator, x_real, create_graph: bool = False) -> Tensor:
    """Batch mean of ``||grad_x D(x)||^2``.

    The input gradient of ``sum(D(x))`` equals the per-sample gradients
    because ``D`` scores samples independently. With ``create_graph`` the
    result stays differentiable with respect to ``D``'s parameters on any
    enclosing tape.
    """
    x = Tensor(x_real.data if isinstance(x_real, Tensor) else x_real)
    with GradTape() as tape:
        tape.watch(x)
        total = ops.sum(D(x))
    if not any(n.output is total for n in tape.nodes):
        return Tensor(np.zeros((), dtype=x.dtype))  # D ignores its input
    (g,) = backward(tape, total, [x], create_graph=create_graph)
    if not np.all(np.isfinite(g.data)):
        raise FloatingPointError("non-finite input gradient in R1 penalty")
    per_sample = ops.sum(ops.square(g), axis=tuple(range(1, g.ndim)))
    return ops.mean(per_sample)


def loss_discriminator(D: Discriminator, x_real, x_fake, gamma: float = R1_GAMMA,
                       create_graph: bool = True, extra: Callable[[], Tensor] | None = None,
                       return_parts: bool = False):
    """``-E log s(D(real)) - E log(1 - s(D(fake))) + gamma * R1``, in softplus form.

    ``extra`` is an optional addend (a hook for consistency regularizers).
    """
    x_real = x_real if isinstance(x_real, Tensor) else Tensor(x_real)
    x_fake = x_fake if isinstance(x_fake, Tensor) else Tensor(x_fake)
    if x_real.shape[0] != x_fake.shape[0]:
        raise ShapeError("real and fake batches differ in size")
    adv = ops.mean(ops.softplus(ops.neg(D(x_real)))) + ops.mean(ops.softplus(D(x_fake)))
    r1 = r1_penalty(D, x_real, create_graph=create_graph) if gamma else Tensor(np.zeros((), x_real.dtype))
    loss = adv + r1 * gamma if gamma else adv
    if extra is not None:
        loss = loss + extra()
    if not np.isfinite(loss.data):
        raise FloatingPointError("non-finite discriminator loss")
    return (loss, adv, r1) if return_parts else loss


def loss_generator(D: Discriminator, x_fake) -> Tensor:
    """Non-saturating generator loss ``-E log s(D(fake))``."""
    x_fake = x_fake if isinstance(x_fake, Tensor) else Tensor(x_fake)
    loss = ops.mean(ops.softplus(ops.neg(D(x_fake))))
    if not np.isfinite(loss.data):
        raise FloatingPointError("non-finite generator loss")
    return loss


def _sq_norm_mean(d: Tensor) -> Tensor:
    return ops.mean(ops.sum(ops.square(d), axis=tuple(range(1, d.ndim))))


def loss_vqhit(x, x_hat, D: Discriminator, F: Callable[[Tensor], Tensor] | None = None,
               lambda1: float = VQ_PERCEPTUAL_WEIGHT, lambda2: float = VQ_ADVERSARIAL_WEIGHT) -> Tensor:
    """Reconstruction + ``lambda1`` * feature distance + ``lambda2`` * adversarial term.

    Squared norms are per sample, averaged over the batch. ``F`` defaults to
    the identity.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    x_hat = x_hat if isinstance(x_hat, Tensor) else Tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"input {x.shape} and reconstruction {x_hat.shape} differ")
    F = F or (lambda t: t)
    loss = _sq_norm_mean(x - x_hat)
    if lambda1:
        loss = loss + _sq_norm_mean(F(x) - F(x_hat)) * lambda1
    if lambda2:
        loss = loss + ops.mean(ops.softplus(ops.neg(D(x_hat)))) * lambda2
    return loss


# -- synthetic data and metric ----------------------------------------------------------

@dataclass(frozen=True)
class BlobDataset:
    """Two-mode mixture of colored Gaussian blobs on a ``size x size`` RGB canvas in [-1, 1]."""

    size: int = 8
    sigma: float = 1.2
    jitter: float = 0.5
    noise: float = 0.05
    centers: tuple = ((2.5, 2.5), (5.0, 5.0))
    colors: tuple = ((1.0, 0.2, 0.2), (0.2, 0.4, 1.0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        mode = rng.integers(0, 2, size=n)
        shift = rng.uniform(-self.jitter, self.jitter, size=(n, 2))
        ii, jj = np.meshgrid(np.arange(self.size), np.arange(self.size), indexing="ij")
        centers = np.asarray(self.centers)[mode] + shift
        r2 = (ii[None] - centers[:, 0, None, None]) ** 2 + (jj[None] - centers[:, 1, None, None]) ** 2
        blob = np.exp(-r2 / (2 * self.sigma ** 2))
        color = np.asarray(self.colors)[mode]
        img = -0.8 + 1.6 * blob[..., None] * color[:, None, None, :]
        img += self.noise * rng.standard_normal(img.shape)
        return np.clip(img, -1.0, 1.0)


def moment_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``||mean_a - mean_b||_2 + ||cov_a - cov_b||_F`` over flattened samples."""
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    gap = np.linalg.norm(a.mean(0) - b.mean(0))
    return float(gap + np.linalg.norm(np.cov(a, rowvar=False) - np.cov(b, rowvar=False), "fro"))


# -- training loop ---------------------------------------------------------------------

TRAIN_HEADER = ("step", "loss_d", "loss_g", "r1", "moment_distance")


@dataclass
class TraceRow:
    step: int
    loss_d: float | None = None
    loss_g: float | None = None
    r1: float | None = None
    moment_distance: float | None = None

    def cells(self) -> tuple:
        return (self.step, self.loss_d, self.loss_g, self.r1, self.moment_distance)


@dataclass
class TrainResult:
    trace: list[TraceRow]
    generator: GeneratorParams
    discriminator: ToyDiscriminator
    info: dict = field(default_factory=dict)

    def moment_distances(self) -> list[tuple[int, float]]:
        return [(r.step, r.moment_distance) for r in self.trace if r.moment_distance is not None]


def train_toy(config: GeneratorConfig, hyper: GanHyper | None = None, dataset: BlobDataset | None = None,
              seed: int = 0, disc_hidden: int = 64, dtype=np.float64) -> TrainResult:
    """Alternate Adam updates on D (with R1 trained through) and G.

    Every random draw comes from generators seeded by ``seed``, so the trace
    is a pure function of the arguments.
    """
    hyper = hyper or GanHyper()
    dataset = dataset or BlobDataset(size=config.resolution)
    G = build_generator(config, seed=seed, dtype=dtype)
    D = ToyDiscriminator.create((config.resolution, config.resolution, 3), hidden=disc_hidden,
                                seed=seed + 1, dtype=dtype)
    g_params, d_params = G.parameters(), D.parameters()
    g_state, d_state = AdamState.for_params(g_params), AdamState.for_params(d_params)
    data_rng = np.random.default_rng([seed, 1])
    z_rng = np.random.default_rng([seed, 2])
    eval_rng = np.random.default_rng([seed, 3])
    eval_real = dataset.sample(eval_rng, hyper.eval_samples)
    eval_z = eval_rng.standard_normal((hyper.eval_samples, config.latent_dim)).astype(dtype)

    def evaluate() -> float:
        fake = generate(G, eval_z, mode="batch").data
        return moment_distance(fake, eval_real)

    adam = dict(lr=hyper.lr, beta1=hyper.beta1, beta2=hyper.beta2)
    trace = [TraceRow(0, moment_distance=evaluate())]
    B = hyper.batch_size
    def step_once(step: int):
        real = Tensor(dataset.sample(data_rng, B).astype(dtype))
        fake = Tensor(generate(G, z_rng.standard_normal((B, config.latent_dim)).astype(dtype), mode="train").data)
        with GradTape() as tape:
            loss_d, _, r1 = loss_discriminator(D, real, fake, hyper.gamma, create_graph=True, return_parts=True)
        adam_step(d_params, backward(tape, loss_d, d_params), d_state, **adam)

        z = Tensor(z_rng.standard_normal((B, config.latent_dim)).astype(dtype))
        with GradTape() as tape:
            loss_g = loss_generator(D, generate(G, z, mode="train"))
        adam_step(g_params, backward(tape, loss_g, g_params), g_state, **adam)
        return loss_d, loss_g, r1

    for step in range(1, hyper.steps + 1):
        try:
            loss_d, loss_g, r1 = step_once(step)
        except FloatingPointError as e:
            raise TrainingDivergence(step, str(e)) from e
        row = TraceRow(step, float(loss_d.data), float(loss_g.data), float(r1.data))
        if step % hyper.eval_every == 0:
            row.moment_distance = evaluate()
            log.info("step %d: loss_d=%.4f loss_g=%.4f r1=%.4f moment=%.4f", step, row.loss_d, row.loss_g,
                     row.r1, row.moment_distance)
        trace.append(row)
    return TrainResult(trace, G, D)
