"""The training objectives: softmax-score importance weights for the
critic's fake-sample term, the re-weighted critic objective, the
interpolate gradient penalty, classifier-based probability ratios, the
ratio-clipped generator surrogate, and the classifier's cross-entropy.

Conventions that matter for correctness:

* Importance weights are evaluated at the current critic and then treated
  as constants. Differentiating the weighted sum with the weights frozen
  reproduces the estimator whose fake-sample term is the weighted average
  of per-sample score gradients; letting gradient flow through the
  softmax would compute a different quantity.
* The probability ratio is differentiable through the generator's
  samples: every classifier factor is evaluated on the tape at
  x = G(z), including the frozen snapshot classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "ImportanceWeights",
    "RatioEstimate",
    "importance_weights",
    "uniform_weights",
    "weight_entropy",
    "critic_objective",
    "gradient_penalty",
    "ratio_estimate",
    "clipped_surrogate",
    "bce_loss",
    "NORM_SMOOTH_EPS",
]

# epsilon under the square root of the input-gradient norm; avoids the
# non-differentiable point at exactly zero
NORM_SMOOTH_EPS = 1e-12


@dataclass(frozen=True)
class ImportanceWeights:
    """Self-normalized weights over one fake batch.

    ``weights[i]`` is exp(alpha * score_i) normalized over the batch;
    ``log_z_hat`` is the log of the Monte-Carlo estimate of the critic's
    partition term, logsumexp(alpha * scores) - log n.
    """

    weights: np.ndarray
    log_z_hat: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty vector")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w <= 0.0) or np.any(w > 1.0):
            raise ValueError("weights must be a strictly positive pmf")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def entropy(self) -> float:
        return weight_entropy(self.weights)


@dataclass(frozen=True)
class RatioEstimate:
    """Per-sample probability ratio between new and old generator."""

    values: np.ndarray
    method: str  # "exact" | "classifier"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("ratios must be finite and nonnegative")
        if self.method not in ("exact", "classifier"):
            raise ValueError(f"unknown ratio method {self.method!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def clipped_fraction(self, epsilon: float) -> float:
        outside = (self.values < 1.0 - epsilon) | (self.values > 1.0 + epsilon)
        return float(outside.mean())


def importance_weights(scores: np.ndarray, alpha: float = 1.0) -> ImportanceWeights:
    """Max-shifted softmax of alpha * scores; safe for any finite scores."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size < 1 or not np.all(np.isfinite(s)):
        raise ValueError("need at least one finite score")
    a = alpha * s
    m = a.max()
    z = np.exp(a - m)
    total = z.sum()
    log_z_hat = float(m + np.log(total) - np.log(s.size))
    return ImportanceWeights(z / total, log_z_hat)


def uniform_weights(n: int) -> ImportanceWeights:
    return ImportanceWeights(np.full(n, 1.0 / n), 0.0)


def weight_entropy(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=np.float64)
    return float(-(w * np.log(w)).sum())


def critic_objective(real_scores, fake_scores, weights: ImportanceWeights):
    """mean(real scores) - sum_i w_i * fake_score_i, to be maximized.

    The weights enter as constants; see the module docstring.
    """
    n_fake = (fake_scores.value.shape[0] if isinstance(fake_scores, ad.Node)
              else np.asarray(fake_scores).shape[0])
    if weights.weights.shape[0] != n_fake:
        raise ValueError("weight/fake length mismatch")
    if isinstance(fake_scores, ad.Node):
        weighted = (fake_scores * fake_scores.tape.const(weights.weights)).sum()
        return real_scores.mean() - weighted
    return float(np.mean(real_scores) - np.sum(weights.weights * fake_scores))


def gradient_penalty(critic_scores: ad.Node, x_hat: ad.Node,
                     lambda_gp: float) -> ad.Node:
    """lambda * mean((per-sample input-gradient norm - 1)^2) at the
    interpolates, recorded differentiably (double backprop)."""
    pen = ad.gradient_norm_penalty(critic_scores, x_hat, NORM_SMOOTH_EPS)
    return pen * float(lambda_gp)


def ratio_estimate(c_new, c_old):
    """Probability ratio from classifier outputs:
    ((1 - C) * C_old) / ((1 - C_old) * C).

    Works on tape nodes (training path, differentiable through C and both
    evaluation points) or plain arrays (analysis path). Inputs are assumed
    already clamped away from {0, 1}.
    """
    return ((1.0 - c_new) * c_old) / ((1.0 - c_old) * c_new)


def clipped_surrogate(ratios, scores, epsilon: float):
    """mean_i min(r_i * f_i, clip(r_i, 1-eps, 1+eps) * f_i), to be maximized.

    The min makes the objective pessimistic: a sample whose ratio already
    left the trust region in the profitable direction contributes the
    clipped, constant-in-r term instead.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if isinstance(ratios, ad.Node) or isinstance(scores, ad.Node):
        tape = ratios.tape if isinstance(ratios, ad.Node) else scores.tape
        r = ratios if isinstance(ratios, ad.Node) else tape.const(ratios)
        f = scores if isinstance(scores, ad.Node) else tape.const(scores)
        if r.value.shape != f.value.shape:
            raise ValueError("ratio/score length mismatch")
        clipped = ad.clip(r, 1.0 - epsilon, 1.0 + epsilon)
        return ad.minimum(r * f, clipped * f).mean()
    r = np.asarray(ratios, dtype=np.float64)
    f = np.asarray(scores, dtype=np.float64)
    if r.shape != f.shape:
        raise ValueError("ratio/score length mismatch")
    return float(np.mean(np.minimum(r * f, np.clip(r, 1.0 - epsilon, 1.0 + epsilon) * f)))


def bce_loss(probs_real: ad.Node, probs_fake: ad.Node) -> ad.Node:
    """Binary cross-entropy with labels real=1, fake=0, averaged over all
    samples of the pair of batches. Inputs are clamped probabilities."""
    n = probs_real.value.shape[0] + probs_fake.value.shape[0]
    total = -(probs_real.log().sum()) - ((1.0 - probs_fake).log().sum())
    return total * (1.0 / n)
