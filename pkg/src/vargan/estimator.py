"""Scikit-learn front door: fit the generative model to a sample matrix
and draw from it, with the usual get_params/set_params plumbing so the
trainer composes with pipelines and model selection."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import seeding
from .distributions import Batch
from .metrics import sliced_wasserstein
from .nets import Snapshot, mlp_forward_values
from .seeding import rng_for
from .training import (TrainingConfig, discriminator_step, generator_step,
                       init_state)

__all__ = ["RatioClippedGAN"]

# stream purpose for post-fit sampling, distinct from the training streams
_SAMPLE_PURPOSE = 12


class RatioClippedGAN(BaseEstimator):
    """GAN trained with critic sample re-weighting and ratio-clipped
    generator updates, fit to the empirical distribution of X.

    Minibatches are resampled from X with replacement; everything else
    matches the config-driven trainer. ``sample`` draws new points and
    ``score`` returns the negative sliced Wasserstein distance between
    generated points and X (greater is better).
    """

    def __init__(self, n_iterations=300, batch_size=256, epsilon=0.2,
                 alpha=1.0, n_critic=5, n_gen=5, lambda_gp=10.0,
                 lr_gen=5e-5, lr_critic=1e-4, lr_classifier=1e-4,
                 hidden=(64, 64), activation="leaky-relu", latent_dim=2,
                 reweighting=True, clipping=True, anneal_lr=False,
                 random_state=0):
        self.n_iterations = n_iterations
        self.batch_size = batch_size
        self.epsilon = epsilon
        self.alpha = alpha
        self.n_critic = n_critic
        self.n_gen = n_gen
        self.lambda_gp = lambda_gp
        self.lr_gen = lr_gen
        self.lr_critic = lr_critic
        self.lr_classifier = lr_classifier
        self.hidden = hidden
        self.activation = activation
        self.latent_dim = latent_dim
        self.reweighting = reweighting
        self.clipping = clipping
        self.anneal_lr = anneal_lr
        self.random_state = random_state

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            epsilon=self.epsilon, alpha=self.alpha, n_critic=self.n_critic,
            n_gen=self.n_gen, lambda_gp=self.lambda_gp, lr_gen=self.lr_gen,
            lr_critic=self.lr_critic, lr_classifier=self.lr_classifier,
            anneal_lr=self.anneal_lr, batch_size=self.batch_size,
            iterations=self.n_iterations, seed=self.random_state,
            reweighting=self.reweighting, clipping=self.clipping,
            latent_dim=self.latent_dim, gen_hidden=tuple(self.hidden),
            critic_hidden=tuple(self.hidden), activation=self.activation,
            eval_every=0)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        config = self._config()
        state = init_state(config, X.shape[1])
        real_rng = rng_for(config.seed, seeding.REAL_DATA)
        noise_rng = rng_for(config.seed, seeding.NOISE)
        interp_rng = rng_for(config.seed, seeding.INTERPOLATION)
        cls_rng = rng_for(config.seed, seeding.REAL_DATA_CLASSIFIER)

        def resample(rng):
            idx = rng.integers(0, X.shape[0], size=config.batch_size)
            return Batch(X[idx], "real")

        from dataclasses import replace
        from .distributions import sample_noise

        critic_losses, gen_losses = [], []
        for t in range(1, config.iterations + 1):
            lr_scale = (1.0 - (t - 1) / config.iterations
                        if config.anneal_lr else 1.0)
            state = replace(state, iteration=t,
                            snapshot=Snapshot(state.generator, state.classifier))
            for _ in range(config.n_critic):
                real = resample(real_rng)
                noise = sample_noise(config.latent_dim, config.batch_size,
                                     noise_rng)
                state, log = discriminator_step(state, config, real, noise,
                                                interp_rng, lr_scale)
                critic_losses.append(log.critic_loss)
            for _ in range(config.n_gen):
                noise = sample_noise(config.latent_dim, config.batch_size,
                                     noise_rng)
                state, log, _ = generator_step(state, config, noise,
                                               resample(cls_rng), lr_scale)
                gen_losses.append(log.gen_loss)
        self.state_ = state
        self.critic_losses_ = np.array(critic_losses)
        self.gen_losses_ = np.array(gen_losses)
        return self

    def sample(self, n: int) -> np.ndarray:
        """n generated points; deterministic given the fitted state."""
        check_is_fitted(self, "state_")
        rng = rng_for(self.random_state, _SAMPLE_PURPOSE)
        z = rng.standard_normal((n, self.latent_dim))
        return mlp_forward_values(self.state_.generator, z)

    def score(self, X, y=None) -> float:
        """Negative sliced Wasserstein distance to X (greater is better)."""
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        rng = rng_for(self.random_state, _SAMPLE_PURPOSE, 1)
        return -sliced_wasserstein(self.sample(X.shape[0]), X, 64, rng)
