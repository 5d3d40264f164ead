"""The training loop: re-weighted Lipschitz critic updates, ratio-clipped
generator updates, classifier maintenance, and the outer orchestration
with ablation switches.

Each outer iteration freezes a snapshot of the generator and classifier,
runs ``n_critic`` critic steps (re-weighted objective plus interpolate
gradient penalty), then ``n_gen`` generator steps (clipped surrogate on
classifier-estimated probability ratios), fine-tuning the classifier once
after every generator step.

Every stochastic input draws from its own derived Philox stream, so
subsystems can be switched on and off without perturbing each other's
randomness, and runs are bit-reproducible per seed.

Categorical targets run the finite-space engine instead: expectations are
computed exactly from the pmfs (no sampling), the critic is a per-outcome
score table kept inside a box, and probability ratios are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import finite, metrics
from .distributions import Batch, DistSpec, interpolate, sample_noise, sample_real
from .losses import (bce_loss, clipped_surrogate, critic_objective,
                     gradient_penalty, importance_weights, ratio_estimate,
                     uniform_weights, weight_entropy)
from .nets import (MlpSpec, ModelParams, Snapshot, classifier_prob,
                   flatten_grads, init_logits, init_params, mlp_apply,
                   mlp_forward_values, param_leaves)
from .optim import AdamState, adam_step, init_adam
from .recording import EvalSnapshot, StepLog, TrainingRecord
from . import seeding
from .seeding import rng_for

__all__ = [
    "TrainingConfig",
    "TrainerState",
    "TrainingAborted",
    "train",
    "discriminator_step",
    "generator_step",
    "classifier_update",
]


class TrainingAborted(Exception):
    """A loss or gradient went non-finite; the run stops and the record is
    flagged as collapsed."""


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs for one training run; defaults follow the reference setup
    (clip 0.2, 5:5 schedule, Adam betas (0.0, 0.9), per-model learning
    rates, penalty coefficient 10)."""

    epsilon: float = 0.2
    alpha: float = 1.0
    n_critic: int = 5
    n_gen: int = 5
    lambda_gp: float = 10.0
    lr_gen: float = 5e-5
    lr_critic: float = 1e-4
    lr_classifier: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    anneal_lr: bool = False
    batch_size: int = 256
    iterations: int = 3000
    seed: int = 0
    reweighting: bool = True
    clipping: bool = True
    ppo_noise_reuse: bool = False
    abort_on_collapse: bool = False
    latent_dim: int = 2
    gen_hidden: tuple = (64, 64)
    critic_hidden: tuple = (64, 64)
    activation: str = "leaky-relu"
    leaky_slope: float = 0.2
    eval_every: int = 200
    eval_n: int = 4096
    n_projections: int = 128
    f_box: float = 5.0
    collapse_window: int = 2000
    coverage_floor: int = 2

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if self.n_critic < 1 or self.n_gen < 1:
            raise ValueError("n_critic and n_gen must be >= 1")
        if self.lambda_gp < 0.0:
            raise ValueError("lambda_gp must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        object.__setattr__(self, "gen_hidden", tuple(self.gen_hidden))
        object.__setattr__(self, "critic_hidden", tuple(self.critic_hidden))

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "alpha": self.alpha,
            "n_critic": self.n_critic, "n_gen": self.n_gen,
            "lambda_gp": self.lambda_gp, "lr_gen": self.lr_gen,
            "lr_critic": self.lr_critic, "lr_classifier": self.lr_classifier,
            "beta1": self.beta1, "beta2": self.beta2,
            "anneal_lr": self.anneal_lr, "batch_size": self.batch_size,
            "iterations": self.iterations, "seed": self.seed,
            "reweighting": self.reweighting, "clipping": self.clipping,
            "ppo_noise_reuse": self.ppo_noise_reuse,
            "abort_on_collapse": self.abort_on_collapse,
            "latent_dim": self.latent_dim,
            "gen_hidden": list(self.gen_hidden),
            "critic_hidden": list(self.critic_hidden),
            "activation": self.activation, "leaky_slope": self.leaky_slope,
            "eval_every": self.eval_every, "eval_n": self.eval_n,
            "n_projections": self.n_projections, "f_box": self.f_box,
            "collapse_window": self.collapse_window,
            "coverage_floor": self.coverage_floor,
        }


@dataclass(frozen=True)
class TrainerState:
    generator: ModelParams
    critic: ModelParams
    classifier: ModelParams | None
    snapshot: Snapshot
    adam_gen: AdamState
    adam_critic: AdamState
    adam_cls: AdamState | None
    iteration: int = 0


def _check_finite(name: str, value, iteration: int):
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise TrainingAborted(f"non-finite {name} at iteration {iteration}")


def model_specs(config: TrainingConfig, data_dim: int):
    gen = MlpSpec(config.latent_dim, config.gen_hidden, data_dim,
                  config.activation, config.leaky_slope)
    critic = MlpSpec(data_dim, config.critic_hidden, 1,
                     config.activation, config.leaky_slope)
    return gen, critic, critic.with_sigmoid_output()


def init_state(config: TrainingConfig, data_dim: int) -> TrainerState:
    gen_spec, critic_spec, cls_spec = model_specs(config, data_dim)
    gen = init_params(gen_spec, config.seed, seeding.INIT_GENERATOR)
    critic = init_params(critic_spec, config.seed, seeding.INIT_CRITIC)
    cls = init_params(cls_spec, config.seed, seeding.INIT_CLASSIFIER)
    return TrainerState(
        generator=gen, critic=critic, classifier=cls,
        snapshot=Snapshot(gen, cls),
        adam_gen=init_adam(gen.flat.size),
        adam_critic=init_adam(critic.flat.size),
        adam_cls=init_adam(cls.flat.size),
    )


def discriminator_step(state: TrainerState, config: TrainingConfig,
                       real: Batch, noise: Batch,
                       interp_rng: np.random.Generator,
                       lr_scale: float = 1.0):
    """One critic update on (real batch, generator(noise)); returns the new
    state and the step log."""
    fake_pts = mlp_forward_values(state.generator, noise.points)
    tape = ad.Tape()
    pn = param_leaves(state.critic, tape)
    real_s, _ = mlp_apply(state.critic, real.points, tape, pn)
    fake_s, _ = mlp_apply(state.critic, fake_pts, tape, pn)
    x_hat = interpolate(real, Batch(fake_pts, "fake"), interp_rng)
    xh = tape.leaf(x_hat.points)
    hat_s, _ = mlp_apply(state.critic, xh, tape, pn)
    pen = gradient_penalty(hat_s, xh, config.lambda_gp)
    if config.reweighting:
        iw = importance_weights(fake_s.value, config.alpha)
        loss = -critic_objective(real_s, fake_s, iw) + pen
    else:
        iw = uniform_weights(fake_pts.shape[0])
        loss = fake_s.mean() - real_s.mean() + pen
    _check_finite("critic loss", loss.value, state.iteration)
    grads = flatten_grads(ad.grad(loss, pn))
    _check_finite("critic gradient", grads, state.iteration)
    new_flat, new_adam = adam_step(state.critic.flat, grads, state.adam_critic,
                                   config.lr_critic * lr_scale,
                                   config.beta1, config.beta2)
    log = StepLog(
        iteration=state.iteration, phase="critic",
        critic_loss=float(loss.value), gp=float(pen.value),
        weight_entropy=iw.entropy,
        grad_norm_phi=float(np.sqrt(np.sum(grads * grads))),
    )
    return replace(state, critic=state.critic.replace(new_flat),
                   adam_critic=new_adam), log


def classifier_update(state: TrainerState, config: TrainingConfig,
                      real: Batch, fake_pts: np.ndarray,
                      lr_scale: float = 1.0) -> TrainerState:
    """One cross-entropy step on the real/fake pair (labels 1/0)."""
    tape = ad.Tape()
    pn = param_leaves(state.classifier, tape)
    c_real, _ = classifier_prob(state.classifier, real.points, tape, pn)
    c_fake, _ = classifier_prob(state.classifier, fake_pts, tape, pn)
    loss = bce_loss(c_real, c_fake)
    _check_finite("classifier loss", loss.value, state.iteration)
    grads = flatten_grads(ad.grad(loss, pn))
    new_flat, new_adam = adam_step(state.classifier.flat, grads, state.adam_cls,
                                   config.lr_classifier * lr_scale,
                                   config.beta1, config.beta2)
    state = replace(state, classifier=state.classifier.replace(new_flat),
                    adam_cls=new_adam)
    return state, float(loss.value)


def generator_step(state: TrainerState, config: TrainingConfig,
                   noise: Batch, cls_real: Batch, lr_scale: float = 1.0):
    """One ascent step on the clipped surrogate (or the plain score mean
    when clipping is ablated), then one classifier fine-tune step."""
    tape = ad.Tape()
    gen_nodes = param_leaves(state.generator, tape)
    fake, _ = mlp_apply(state.generator, noise.points, tape, gen_nodes)
    f_fake, _ = mlp_apply(state.critic, fake, tape)
    ratio_mean = None
    clipped_frac = None
    if config.clipping:
        c_new, _ = classifier_prob(state.classifier, fake, tape)
        c_old, _ = classifier_prob(state.snapshot.classifier, fake, tape)
        ratios = ratio_estimate(c_new, c_old)
        loss = -clipped_surrogate(ratios, f_fake, config.epsilon)
        rv = ratios.value
        ratio_mean = float(rv.mean())
        outside = (rv < 1.0 - config.epsilon) | (rv > 1.0 + config.epsilon)
        clipped_frac = float(outside.mean())
    else:
        loss = -(f_fake.mean())
    _check_finite("generator loss", loss.value, state.iteration)
    grads = flatten_grads(ad.grad(loss, gen_nodes))
    _check_finite("generator gradient", grads, state.iteration)
    new_flat, new_adam = adam_step(state.generator.flat, grads, state.adam_gen,
                                   config.lr_gen * lr_scale,
                                   config.beta1, config.beta2)
    state = replace(state, generator=state.generator.replace(new_flat),
                    adam_gen=new_adam)
    state, cls_loss = classifier_update(state, config, cls_real, fake.value,
                                        lr_scale)
    log = StepLog(
        iteration=state.iteration, phase="gen",
        gen_loss=float(loss.value),
        grad_norm_theta=float(np.sqrt(np.sum(grads * grads))),
        ratio_mean=ratio_mean, ratio_clipped_frac=clipped_frac,
    )
    return state, log, cls_loss


def _evaluate(state: TrainerState, config: TrainingConfig, dist: DistSpec,
              iteration: int, metrics_rng: np.random.Generator) -> EvalSnapshot:
    z = sample_noise(config.latent_dim, config.eval_n, metrics_rng)
    fake = mlp_forward_values(state.generator, z.points)
    real = sample_real(dist, config.eval_n, metrics_rng)
    _, centers, _ = dist.components()
    report = metrics.mode_coverage(
        fake, centers,
        radius=metrics.default_coverage_radius(dist),
        min_count=metrics.default_min_count(config.eval_n, centers.shape[0]))
    sw = metrics.sliced_wasserstein(fake, real.points, config.n_projections,
                                    metrics_rng)
    return EvalSnapshot(iteration, report.modes_covered,
                        report.high_quality_fraction, sw)


def train(config: TrainingConfig, dist: DistSpec) -> TrainingRecord:
    """Run the full loop and return the training record (with the final
    trainer state attached for checkpointing)."""
    if dist.kind == "categorical":
        return train_exact(config, dist)

    state = init_state(config, dist.dim)
    real_rng = rng_for(config.seed, seeding.REAL_DATA)
    noise_rng = rng_for(config.seed, seeding.NOISE)
    interp_rng = rng_for(config.seed, seeding.INTERPOLATION)
    cls_real_rng = rng_for(config.seed, seeding.REAL_DATA_CLASSIFIER)
    metrics_rng = rng_for(config.seed, seeding.METRICS)

    record = TrainingRecord(config=config.as_dict())
    record.snapshots.append(_evaluate(state, config, dist, 0, metrics_rng))
    cls_losses = []

    try:
        for t in range(1, config.iterations + 1):
            lr_scale = 1.0 - (t - 1) / config.iterations if config.anneal_lr else 1.0
            state = replace(state, iteration=t,
                            snapshot=Snapshot(state.generator, state.classifier))
            for _ in range(config.n_critic):
                real = sample_real(dist, config.batch_size, real_rng)
                noise = sample_noise(config.latent_dim, config.batch_size, noise_rng)
                state, log = discriminator_step(state, config, real, noise,
                                                interp_rng, lr_scale)
                record.steps.append(log)
            frozen = (sample_noise(config.latent_dim, config.batch_size, noise_rng)
                      if config.ppo_noise_reuse else None)
            for _ in range(config.n_gen):
                noise = frozen if frozen is not None else sample_noise(
                    config.latent_dim, config.batch_size, noise_rng)
                cls_real = sample_real(dist, config.batch_size, cls_real_rng)
                state, log, cls_loss = generator_step(state, config, noise,
                                                      cls_real, lr_scale)
                record.steps.append(log)
                cls_losses.append(cls_loss)
            if config.eval_every and t % config.eval_every == 0:
                snap = _evaluate(state, config, dist, t, metrics_rng)
                record.snapshots.append(snap)
                if (config.abort_on_collapse
                        and snap.modes_covered < config.coverage_floor):
                    record.abort_reason = (
                        f"coverage {snap.modes_covered} below floor at "
                        f"iteration {t}")
                    break
    except TrainingAborted as exc:
        record.collapsed = True
        record.abort_reason = str(exc)

    if record.abort_reason is None and (not record.snapshots
                                        or record.snapshots[-1].iteration
                                        != config.iterations):
        record.snapshots.append(
            _evaluate(state, config, dist, config.iterations, metrics_rng))
    if record.abort_reason is None:
        z = sample_noise(config.latent_dim, config.eval_n, metrics_rng)
        record.final_samples = mlp_forward_values(state.generator, z.points)
    if cls_losses:
        tail = cls_losses[-config.collapse_window:]
        record.classifier_bce_tail_mean = float(np.mean(tail))
    record.final_state = state
    criteria = metrics.CollapseCriteria(window=config.collapse_window,
                                        coverage_floor=config.coverage_floor)
    record.collapsed = metrics.detect_collapse(record, criteria)
    return record


# ---------------------------------------------------------------------------
# finite-space engine: exact expectations over an explicit categorical
# generator against a per-outcome critic score table


def _softmax_node(logits: ad.Node) -> ad.Node:
    shift = logits.tape.const(float(logits.value.max()))
    z = (logits - shift).exp()
    return z / z.sum()


def _exact_eval(p_theta: np.ndarray, p_r: np.ndarray, iteration: int) -> EvalSnapshot:
    covered = int(np.sum((p_r > 0.0) & (p_theta >= 0.2 * p_r)))
    overlap = float(np.minimum(p_theta, p_r).sum())
    tv = float(0.5 * np.abs(p_theta - p_r).sum())
    return EvalSnapshot(iteration, covered, overlap, tv)


def train_exact(config: TrainingConfig, dist: DistSpec) -> TrainingRecord:
    """Alg. 1 on a finite sample space with exact expectations.

    The generator is a categorical pmf (softmax of logits), the critic a
    score vector clamped to [-f_box, f_box] (a Lipschitz-like boundedness
    stand-in: the gradient penalty has no continuous input to act on),
    and ratios are exact pmf quotients, so no classifier is needed.
    """
    if dist.kind != "categorical":
        raise ValueError("train_exact needs a categorical target")
    p_r = np.asarray(dist.probs, dtype=np.float64)
    k = p_r.size
    theta = init_logits(k)
    critic = ModelParams(np.zeros(k), None)
    adam_gen, adam_critic = init_adam(k), init_adam(k)
    record = TrainingRecord(config=config.as_dict())
    record.snapshots.append(_exact_eval(finite.pmf_of(theta), p_r, 0))

    try:
        for t in range(1, config.iterations + 1):
            lr_scale = 1.0 - (t - 1) / config.iterations if config.anneal_lr else 1.0
            p_old = finite.pmf_of(theta)
            for _ in range(config.n_critic):
                p_theta = finite.pmf_of(theta)
                tape = ad.Tape()
                f = tape.leaf(critic.flat)
                if config.reweighting:
                    q = finite.exact_q(
                        finite.FiniteSpace(p_r, p_theta, critic.flat),
                        config.alpha).q
                else:
                    q = p_theta
                obj = (f * tape.const(p_r)).sum() - (f * tape.const(q)).sum()
                loss = -obj
                _check_finite("critic loss", loss.value, t)
                (g,) = ad.grad(loss, [f])
                new_flat, adam_critic = adam_step(
                    critic.flat, g, adam_critic,
                    config.lr_critic * lr_scale, config.beta1, config.beta2)
                critic = ModelParams(np.clip(new_flat, -config.f_box,
                                             config.f_box), None)
                record.steps.append(StepLog(
                    iteration=t, phase="critic", critic_loss=float(loss.value),
                    gp=0.0, weight_entropy=weight_entropy(q),
                    grad_norm_phi=float(np.sqrt(np.sum(g * g)))))
            for _ in range(config.n_gen):
                tape = ad.Tape()
                logits = tape.leaf(theta.flat)
                p_theta_node = _softmax_node(logits)
                f_vals = tape.const(critic.flat)
                if config.clipping:
                    ratios = p_theta_node / tape.const(p_old)
                    sample_pmf = (tape.const(p_old) if config.ppo_noise_reuse
                                  else p_theta_node)
                    per_outcome = ad.minimum(
                        ratios * f_vals,
                        ad.clip(ratios, 1.0 - config.epsilon,
                                1.0 + config.epsilon) * f_vals)
                    loss = -((sample_pmf * per_outcome).sum())
                    rv = (p_theta_node.value / p_old)
                    ratio_mean = float(rv.mean())
                    outside = (rv < 1.0 - config.epsilon) | (rv > 1.0 + config.epsilon)
                    clipped_frac = float(outside.mean())
                else:
                    loss = -((p_theta_node * f_vals).sum())
                    ratio_mean = None
                    clipped_frac = None
                _check_finite("generator loss", loss.value, t)
                (g,) = ad.grad(loss, [logits])
                new_logits, adam_gen = adam_step(
                    theta.flat, g, adam_gen,
                    config.lr_gen * lr_scale, config.beta1, config.beta2)
                theta = ModelParams(new_logits, None)
                record.steps.append(StepLog(
                    iteration=t, phase="gen", gen_loss=float(loss.value),
                    grad_norm_theta=float(np.sqrt(np.sum(g * g))),
                    ratio_mean=ratio_mean, ratio_clipped_frac=clipped_frac))
            if config.eval_every and t % config.eval_every == 0:
                record.snapshots.append(_exact_eval(finite.pmf_of(theta), p_r, t))
    except TrainingAborted as exc:
        record.collapsed = True
        record.abort_reason = str(exc)

    if record.abort_reason is None and (not record.snapshots
                                        or record.snapshots[-1].iteration
                                        != config.iterations):
        record.snapshots.append(
            _exact_eval(finite.pmf_of(theta), p_r, config.iterations))
    if record.abort_reason is None:
        rng = rng_for(config.seed, seeding.METRICS)
        record.final_samples = rng.choice(k, size=config.eval_n,
                                          p=finite.pmf_of(theta)).astype(np.int64)
    record.final_state = (theta, critic)
    record.collapsed = record.collapsed or record.abort_reason is not None
    return record
