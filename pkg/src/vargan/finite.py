"""Brute-force engine on finite sample spaces.

Everything the continuous trainer estimates by sampling has a closed form
here: the tilted auxiliary distribution q proportional to
p_theta * exp(alpha * f), the variational objective it maximizes, exact
KL divergences and the bound on the forward/reverse KL gap, exact
probability ratios, and the Bayes-optimal real/fake classifier whose odds
recover density ratios. A randomized property suite over thousands of
instances plays the role of the full-scale benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import ModelParams, categorical_probs
from .seeding import rng_for

__all__ = [
    "FiniteSpace",
    "QDist",
    "OracleViolation",
    "pmf_of",
    "exact_q",
    "variational_objective",
    "exact_kl",
    "reverse_kl_gap_bound",
    "em_step",
    "reverse_kl_logit_grad",
    "bayes_classifier",
    "exact_ratio",
    "ratio_from_classifiers",
    "random_instance",
    "check_instance",
    "run_oracle_suite",
]

PMF_TOL = 1e-12


class OracleViolation(Exception):
    """A closed-form identity failed; carries the offending instance."""


def _validate_pmf(p: np.ndarray, name: str, strict_positive: bool = False):
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"{name} must be a vector with >= 2 outcomes")
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1 with nonnegative entries")
    if strict_positive and np.any(p <= 0.0):
        raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class FiniteSpace:
    """A K-outcome space: real pmf, generator pmf, critic score vector."""

    p_r: np.ndarray
    p_theta: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        p_r = np.asarray(self.p_r, dtype=np.float64)
        p_theta = np.asarray(self.p_theta, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        _validate_pmf(p_r, "p_r")
        _validate_pmf(p_theta, "p_theta", strict_positive=True)
        if f.shape != p_r.shape or p_theta.shape != p_r.shape:
            raise ValueError("p_r, p_theta, f must share one length")
        if not np.all(np.isfinite(f)):
            raise ValueError("scores must be finite")
        for name, arr in (("p_r", p_r), ("p_theta", p_theta), ("f", f)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.p_r.size


@dataclass(frozen=True)
class QDist:
    """The tilted distribution q_k proportional to p_theta_k * exp(alpha f_k)."""

    q: np.ndarray
    log_z: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if abs(q.sum() - 1.0) > 1e-9 or np.any(q < 0.0):
            raise ValueError("q must be a pmf")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)


def pmf_of(logits) -> np.ndarray:
    """Generator pmf from categorical logits (max-shifted softmax)."""
    return categorical_probs(logits)


def exact_q(space: FiniteSpace, alpha: float = 1.0) -> QDist:
    """Closed-form solution of the tilted E-step, normalized in log space."""
    log_unnorm = np.log(space.p_theta) + alpha * space.f
    m = log_unnorm.max()
    log_z = m + np.log(np.exp(log_unnorm - m).sum())
    return QDist(np.exp(log_unnorm - log_z), float(log_z))


def variational_objective(space: FiniteSpace, q, alpha: float = 1.0) -> float:
    """alpha * E_q[f] - KL(q || p_theta), evaluated by summation.

    At the default alpha=1 this is the plain score-minus-divergence
    objective; exact_q maximizes it over q and attains log Z.
    """
    qv = q.q if isinstance(q, QDist) else np.asarray(q, dtype=np.float64)
    if np.any((qv > 0.0) & (space.p_theta <= 0.0)):
        raise ValueError("support violation: q puts mass outside p_theta")
    return float(alpha * (qv * space.f).sum() - exact_kl(qv, space.p_theta))


def exact_kl(p, q) -> float:
    """Sum of p * log(p/q) with the 0 * log(0/q) = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0.0
    if np.any(q[mask] <= 0.0):
        raise ValueError("absolute-continuity violation: supp(p) not in supp(q)")
    return float((p[mask] * (np.log(p[mask]) - np.log(q[mask]))).sum())


def reverse_kl_gap_bound(space: FiniteSpace, alpha: float = 1.0):
    """(|KL(q||p_theta) - KL(p_theta||q)|, 2 alpha (a+b)) with the tightest
    box -a <= f <= b, a,b >= 0. The bound holds for either direction of
    the difference; a violation raises."""
    q = exact_q(space, alpha).q
    gap = abs(exact_kl(q, space.p_theta) - exact_kl(space.p_theta, q))
    a = max(0.0, -float(space.f.min()))
    b = max(0.0, float(space.f.max()))
    bound = 2.0 * alpha * (a + b)
    if gap > bound + PMF_TOL:
        raise OracleViolation(f"KL gap {gap} exceeds bound {bound}")
    return gap, bound


def reverse_kl_logit_grad(logits: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Gradient of KL(softmax(logits) || q) with respect to the logits."""
    p = pmf_of(logits)
    r = np.log(p) - np.log(q)
    return p * (r - (p * r).sum())


def em_step(space: FiniteSpace, alpha: float = 1.0,
            m_step: str = "forward-kl", lr: float = 0.5,
            steps: int = 100) -> np.ndarray:
    """One E-step plus one M-step; returns the new generator pmf.

    forward-kl: the unconstrained categorical optimum is p_theta = q,
    returned bit-for-bit. reverse-kl: gradient descent on the logits of
    KL(p_theta || q) starting from log p_theta.
    """
    q = exact_q(space, alpha).q
    if m_step == "forward-kl":
        return q
    if m_step != "reverse-kl":
        raise ValueError(f"unknown m_step {m_step!r}")
    logits = np.log(space.p_theta)
    for _ in range(steps):
        logits = logits - lr * reverse_kl_logit_grad(logits, q)
    return pmf_of(logits)


def bayes_classifier(p_r: np.ndarray, p_theta: np.ndarray,
                     complement: bool = False) -> np.ndarray:
    """C*_k = p_r_k / (p_r_k + p_theta_k); NaN where both pmfs vanish
    (the classifier is undefined there and excluded from evaluation).

    ``complement`` returns 1 - C* evaluated directly as
    p_theta / (p_r + p_theta), which avoids the subtraction noise of
    1 - C* when C* sits within a few ulps of 1.
    """
    p_r = np.asarray(p_r, dtype=np.float64)
    p_theta = np.asarray(p_theta, dtype=np.float64)
    num = p_theta if complement else p_r
    total = p_r + p_theta
    with np.errstate(invalid="ignore"):
        return np.where(total > 0.0, num / np.where(total > 0.0, total, 1.0),
                        np.nan)


def exact_ratio(p_new: np.ndarray, p_old: np.ndarray) -> np.ndarray:
    """Elementwise p_new / p_old; requires p_old > 0 on supp(p_new)."""
    p_new = np.asarray(p_new, dtype=np.float64)
    p_old = np.asarray(p_old, dtype=np.float64)
    if np.any((p_new > 0.0) & (p_old <= 0.0)):
        raise ValueError("division by zero support: p_old vanishes on supp(p_new)")
    with np.errstate(invalid="ignore"):
        return np.where(p_old > 0.0, p_new / np.where(p_old > 0.0, p_old, 1.0),
                        np.nan)


def ratio_from_classifiers(c_new: np.ndarray, c_old: np.ndarray) -> np.ndarray:
    """The classifier-odds form ((1-C) C_old) / ((1-C_old) C)."""
    c_new = np.asarray(c_new, dtype=np.float64)
    c_old = np.asarray(c_old, dtype=np.float64)
    return ((1.0 - c_new) * c_old) / ((1.0 - c_old) * c_new)


# ---------------------------------------------------------------------------
# randomized property suite


def random_instance(rng: np.random.Generator, extreme: bool = False):
    """A random finite space plus inverse temperature.

    ``extreme`` draws scores in [400, 700] at alpha=1: naive
    exponentiation overflows there while the max-shifted form stays
    exact, so these instances catch a dropped shift.
    """
    k = int(rng.integers(2, 17))
    p_r = rng.dirichlet(np.ones(k))
    p_theta = rng.dirichlet(np.ones(k))
    if extreme:
        return FiniteSpace(p_r, p_theta, rng.uniform(400.0, 700.0, size=k)), 1.0
    f = rng.uniform(-5.0, 5.0, size=k)
    alpha = float(rng.choice([0.5, 1.0, 2.0]))
    return FiniteSpace(p_r, p_theta, f), alpha


def check_instance(space: FiniteSpace, alpha: float) -> list:
    """Every closed-form property on one instance; returns a list of
    (property name, ok, measured deviation)."""
    out = []
    qd = exact_q(space, alpha)

    # normalization against the naive summation oracle (where it is finite)
    dev = abs(qd.q.sum() - 1.0)
    ok = dev <= PMF_TOL and np.all(qd.q > 0.0)
    with np.errstate(over="ignore"):
        naive = space.p_theta * np.exp(alpha * space.f)
        naive_sum = naive.sum()
    if np.isfinite(naive_sum) and naive_sum > 0.0:
        naive_q = naive / naive_sum
        ok = ok and np.allclose(naive_q, qd.q, rtol=1e-9, atol=1e-300)
    out.append(("q_normalization", ok, dev))

    # the tilted solution attains log Z and dominates mixture perturbations
    l_star = variational_objective(space, qd, alpha)
    dev = abs(l_star - qd.log_z)
    out.append(("variational_identity", dev <= PMF_TOL, dev))
    worst = 0.0
    uniform = np.full(space.k, 1.0 / space.k)
    for mix in (0.1, 0.25, 0.5):
        q_mix = (1.0 - mix) * qd.q + mix * uniform
        worst = max(worst, variational_objective(space, q_mix, alpha) - l_star)
    out.append(("q_maximality", worst <= PMF_TOL, worst))

    # forward/reverse KL gap bound
    gap, bound = reverse_kl_gap_bound(space, alpha)
    out.append(("kl_gap_bound", gap <= bound + PMF_TOL, gap - bound))

    # forward-KL EM is monotone in the objective; ten iterations tilt the
    # pmf by 10 * alpha * span(f) nats, so only run where that stays in
    # float range (extreme-score instances would underflow the support)
    span = float(space.f.max() - space.f.min())
    if 10.0 * alpha * span < 600.0:
        cur = space
        prev = variational_objective(cur, exact_q(cur, alpha), alpha)
        ok, worst = True, 0.0
        for _ in range(10):
            new_p = em_step(cur, alpha, "forward-kl")
            cur = FiniteSpace(cur.p_r, new_p, cur.f)
            val = variational_objective(cur, exact_q(cur, alpha), alpha)
            worst = max(worst, prev - val)
            ok = ok and (val >= prev - PMF_TOL)
            prev = val
        out.append(("em_monotone", ok, worst))

    # classifier-odds form reproduces exact ratios
    p_new, p_old = qd.q, space.p_theta
    c_new = bayes_classifier(space.p_r, p_new)
    c_old = bayes_classifier(space.p_r, p_old)
    r_cls = ratio_from_classifiers(c_new, c_old)
    r_exact = exact_ratio(p_new, p_old)
    dev = float(np.max(np.abs(r_cls / r_exact - 1.0)))
    out.append(("classifier_ratio_identity", dev <= 1e-9, dev))

    # reverse-KL logit gradient against central differences
    logits = np.log(space.p_theta)
    g = reverse_kl_logit_grad(logits, qd.q)
    h = 1e-6
    worst = 0.0
    for i in range(space.k):
        e = np.zeros_like(logits)
        e[i] = h
        up = exact_kl(pmf_of(logits + e), qd.q)
        dn = exact_kl(pmf_of(logits - e), qd.q)
        fd = (up - dn) / (2.0 * h)
        worst = max(worst, abs(fd - g[i]) / (abs(g[i]) + 1e-9))
    out.append(("reverse_kl_grad_fd", worst <= 1e-5, worst))
    return out


def run_oracle_suite(n_instances: int = 1000, seed: int = 0) -> dict:
    """The full randomized suite; every 25th instance uses extreme scores.

    Returns a report dict with per-property pass counts and the worst
    deviation seen; any failing instance is serialized for replay.
    """
    rng = rng_for(seed, 11)
    properties: dict = {}
    failures = []
    for i in range(n_instances):
        space, alpha = random_instance(rng, extreme=(i % 25 == 24))
        for name, ok, dev in check_instance(space, alpha):
            slot = properties.setdefault(name, {"checked": 0, "passed": 0,
                                                "worst_deviation": 0.0})
            slot["checked"] += 1
            slot["passed"] += int(ok)
            slot["worst_deviation"] = max(slot["worst_deviation"], float(dev))
            if not ok:
                failures.append({
                    "instance": i, "property": name, "deviation": float(dev),
                    "alpha": alpha, "p_r": space.p_r.tolist(),
                    "p_theta": space.p_theta.tolist(), "f": space.f.tolist(),
                })
    return {
        "n_instances": n_instances,
        "seed": seed,
        "passed": not failures,
        "properties": properties,
        "failures": failures,
    }
