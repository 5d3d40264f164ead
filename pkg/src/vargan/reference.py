"""A plain WGAN-GP training loop, kept as an in-repo reference point.

No re-weighting, no ratio clipping, no classifier: the critic minimizes
mean(fake) - mean(real) plus the interpolate gradient penalty, the
generator maximizes the mean critic score. It draws from the same derived
random streams as the full trainer, so a run of the full trainer with
both ablation flags off must reproduce these parameters bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import seeding
from .distributions import Batch, DistSpec, interpolate, sample_noise, sample_real
from .losses import gradient_penalty
from .nets import init_params, mlp_apply, mlp_forward_values, param_leaves, flatten_grads
from .optim import adam_step, init_adam
from .seeding import rng_for
from .training import TrainingConfig, model_specs

__all__ = ["train_wgan_gp"]


def train_wgan_gp(config: TrainingConfig, dist: DistSpec):
    """Returns (generator params, critic params, per-step loss lists)."""
    gen_spec, critic_spec, _ = model_specs(config, dist.dim)
    gen = init_params(gen_spec, config.seed, seeding.INIT_GENERATOR)
    critic = init_params(critic_spec, config.seed, seeding.INIT_CRITIC)
    adam_gen = init_adam(gen.flat.size)
    adam_critic = init_adam(critic.flat.size)
    real_rng = rng_for(config.seed, seeding.REAL_DATA)
    noise_rng = rng_for(config.seed, seeding.NOISE)
    interp_rng = rng_for(config.seed, seeding.INTERPOLATION)
    critic_losses, gen_losses = [], []

    for t in range(1, config.iterations + 1):
        lr_scale = 1.0 - (t - 1) / config.iterations if config.anneal_lr else 1.0
        for _ in range(config.n_critic):
            real = sample_real(dist, config.batch_size, real_rng)
            noise = sample_noise(config.latent_dim, config.batch_size, noise_rng)
            fake_pts = mlp_forward_values(gen, noise.points)
            tape = ad.Tape()
            pn = param_leaves(critic, tape)
            real_s, _ = mlp_apply(critic, real.points, tape, pn)
            fake_s, _ = mlp_apply(critic, fake_pts, tape, pn)
            x_hat = interpolate(real, Batch(fake_pts, "fake"), interp_rng)
            xh = tape.leaf(x_hat.points)
            hat_s, _ = mlp_apply(critic, xh, tape, pn)
            pen = gradient_penalty(hat_s, xh, config.lambda_gp)
            loss = fake_s.mean() - real_s.mean() + pen
            grads = flatten_grads(ad.grad(loss, pn))
            new_flat, adam_critic = adam_step(critic.flat, grads, adam_critic,
                                              config.lr_critic * lr_scale,
                                              config.beta1, config.beta2)
            critic = critic.replace(new_flat)
            critic_losses.append(float(loss.value))
        for _ in range(config.n_gen):
            noise = sample_noise(config.latent_dim, config.batch_size, noise_rng)
            tape = ad.Tape()
            gen_nodes = param_leaves(gen, tape)
            fake, _ = mlp_apply(gen, noise.points, tape, gen_nodes)
            f_fake, _ = mlp_apply(critic, fake, tape)
            loss = -(f_fake.mean())
            grads = flatten_grads(ad.grad(loss, gen_nodes))
            new_flat, adam_gen = adam_step(gen.flat, grads, adam_gen,
                                           config.lr_gen * lr_scale,
                                           config.beta1, config.beta2)
            gen = gen.replace(new_flat)
            gen_losses.append(float(loss.value))
    return gen, critic, {"critic": np.array(critic_losses),
                         "gen": np.array(gen_losses)}
