"""Parameter containers and forward passes for the MLP generator, the
unbounded-score critic, the sigmoid-output binary classifier, and the
categorical logits used by the finite-space engine.

All parameters live in a single flat float64 vector; layer shapes come
from :class:`MlpSpec`. Forward passes are recorded on a
:class:`~vargan.autodiff.Tape` so the same code path serves training and
plain evaluation.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .seeding import rng_for

__all__ = [
    "MlpSpec",
    "ModelParams",
    "Snapshot",
    "PROB_CLAMP",
    "init_params",
    "init_logits",
    "param_leaves",
    "flatten_grads",
    "mlp_apply",
    "mlp_forward_values",
    "classifier_prob",
    "classifier_prob_values",
    "categorical_probs",
    "save_checkpoint",
    "load_checkpoint",
]

ACTIVATIONS = ("leaky-relu", "relu", "tanh")
OUT_ACTIVATIONS = ("none", "sigmoid")

# classifier probabilities are clamped away from {0, 1} so that the
# probability-ratio denominators stay finite
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths and activation tags for a fully-connected net."""

    in_dim: int
    hidden: tuple
    out_dim: int
    activation: str = "leaky-relu"
    leaky_slope: float = 0.2
    out_activation: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) < 1:
            raise ValueError("at least one hidden layer required")
        if min((self.in_dim, self.out_dim) + self.hidden) < 1:
            raise ValueError("all widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.out_activation not in OUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.out_activation!r}")
        if self.out_activation == "sigmoid" and self.out_dim != 1:
            raise ValueError("sigmoid output requires out_dim == 1")

    @property
    def widths(self) -> tuple:
        return (self.in_dim,) + self.hidden + (self.out_dim,)

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum((w[i] + 1) * w[i + 1] for i in range(len(w) - 1))

    def with_sigmoid_output(self) -> "MlpSpec":
        """The matching binary classifier: same body, sigmoid output."""
        if self.out_dim != 1:
            raise ValueError("classifier head requires a scalar-output spec")
        return MlpSpec(self.in_dim, self.hidden, 1, self.activation,
                       self.leaky_slope, "sigmoid")


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus shape metadata.

    ``spec=None`` marks categorical logits for the finite-space engine,
    in which case the vector length is the number of outcomes.
    """

    flat: np.ndarray
    spec: MlpSpec | None = None

    def __post_init__(self):
        arr = np.array(self.flat, dtype=np.float64, copy=True).ravel()
        if not np.all(np.isfinite(arr)):
            raise ad.NonFiniteError("non-finite parameter vector")
        if self.spec is not None and arr.size != self.spec.n_params:
            raise ValueError(
                f"expected {self.spec.n_params} parameters, got {arr.size}")
        if self.spec is None and arr.size < 2:
            raise ValueError("categorical logits need at least 2 outcomes")
        arr.flags.writeable = False
        object.__setattr__(self, "flat", arr)

    def replace(self, flat: np.ndarray) -> "ModelParams":
        return ModelParams(flat, self.spec)

    def digest(self) -> str:
        return hashlib.sha256(self.flat.tobytes()).hexdigest()


@dataclass(frozen=True)
class Snapshot:
    """Frozen generator and classifier parameters taken at the start of an
    outer iteration; the reference point for probability ratios."""

    generator: ModelParams
    classifier: ModelParams | None = None
    _digest: str = field(default="", repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_digest", self.generator.digest())

    def verify_unchanged(self) -> bool:
        return self.generator.digest() == self._digest


def init_params(spec: MlpSpec, seed: int, *path: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic per seed path.

    Per layer the weights are uniform on (-s, s) with
    s = sqrt(6 / (fan_in + fan_out)).
    """
    rng = rng_for(seed, *path)
    chunks = []
    w = spec.widths
    for fan_in, fan_out in zip(w[:-1], w[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-s, s, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ModelParams(np.concatenate(chunks), spec)


def init_logits(k: int) -> ModelParams:
    """Uniform categorical start: all-zero logits over k outcomes."""
    return ModelParams(np.zeros(k), None)


def _layer_slices(spec: MlpSpec):
    offset = 0
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        w_sl = slice(offset, offset + fan_in * fan_out)
        offset += fan_in * fan_out
        b_sl = slice(offset, offset + fan_out)
        offset += fan_out
        yield fan_in, fan_out, w_sl, b_sl


def param_leaves(params: ModelParams, tape: ad.Tape) -> list:
    """Per-layer weight/bias leaves in flattening order, for reuse across
    several forward passes on one tape."""
    spec = params.spec
    if spec is None:
        raise ValueError("param_leaves needs an MLP spec, got categorical logits")
    nodes = []
    for fan_in, fan_out, w_sl, b_sl in _layer_slices(spec):
        nodes.append(tape.leaf(params.flat[w_sl].reshape(fan_in, fan_out)))
        nodes.append(tape.leaf(params.flat[b_sl]))
    return nodes


def flatten_grads(grads) -> np.ndarray:
    """Concatenate per-leaf gradients back into flat-vector order."""
    return np.concatenate([np.asarray(g).ravel() for g in grads])


def mlp_apply(params: ModelParams, x, tape: ad.Tape, param_nodes=None):
    """Record the forward pass on ``tape``.

    Returns ``(out, param_nodes)`` where ``out`` is an (n,) node for
    scalar-output specs and (n, out_dim) otherwise. Pass ``param_nodes``
    from :func:`param_leaves` to share one set of leaves across calls.
    """
    spec = params.spec
    if spec is None:
        raise ValueError("mlp_apply needs an MLP spec, got categorical logits")
    h = x if isinstance(x, ad.Node) else tape.leaf(np.atleast_2d(x))
    if h.value.ndim != 2 or h.value.shape[1] != spec.in_dim:
        raise ad.ShapeMismatchError(
            f"input shape {h.value.shape} does not match in_dim {spec.in_dim}")
    n = h.value.shape[0]
    if param_nodes is None:
        param_nodes = param_leaves(params, tape)
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        h = ad.affine(h, param_nodes[2 * i], param_nodes[2 * i + 1])
        if i < n_layers - 1:
            if spec.activation == "tanh":
                h = h.tanh()
            else:
                slope = spec.leaky_slope if spec.activation == "leaky-relu" else 0.0
                h = ad.leaky_relu(h, slope)
    if spec.out_activation == "sigmoid":
        h = h.sigmoid()
    if spec.out_dim == 1:
        h = h.reshape((n,))
    return h, param_nodes


def mlp_forward_values(params: ModelParams, x) -> np.ndarray:
    """Plain evaluation through a throwaway tape (same code path, no reuse)."""
    out, _ = mlp_apply(params, x, ad.Tape())
    return out.value


def classifier_prob(params: ModelParams, x, tape: ad.Tape, param_nodes=None):
    """Classifier probabilities clamped to [1e-7, 1 - 1e-7].

    The clamp bounds the probability ratios built from these outputs
    instead of letting them overflow.
    """
    if params.spec is None or params.spec.out_activation != "sigmoid":
        raise ValueError("classifier_prob requires a sigmoid-output spec")
    out, param_nodes = mlp_apply(params, x, tape, param_nodes)
    return ad.clip(out, PROB_CLAMP, 1.0 - PROB_CLAMP), param_nodes


def classifier_prob_values(params: ModelParams, x) -> np.ndarray:
    out, _ = classifier_prob(params, x, ad.Tape())
    return out.value


def categorical_probs(logits: ModelParams | np.ndarray) -> np.ndarray:
    """Max-shifted softmax; valid pmf for any finite logits."""
    raw = logits.flat if isinstance(logits, ModelParams) else np.asarray(logits)
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < 2 or not np.all(np.isfinite(raw)):
        raise ValueError("need >= 2 finite logits")
    z = np.exp(raw - raw.max())
    return z / z.sum()


# ---------------------------------------------------------------------------
# checkpoint format: little-endian, fixed header, float64 payload
#
#   magic      8 bytes  b"VGANCKPT"
#   version    u32      1
#   kind       u8       0 = mlp, 1 = categorical logits
#   (mlp only)
#     n_widths u32
#     widths   u32 * n_widths
#     act      u8       index into ACTIVATIONS
#     slope    f64
#     out_act  u8       index into OUT_ACTIVATIONS
#   seed       u64
#   n_params   u64
#   payload    f64 * n_params

_MAGIC = b"VGANCKPT"


def save_checkpoint(path, params: ModelParams, seed: int) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", 1))
        if params.spec is None:
            fh.write(struct.pack("<B", 1))
        else:
            spec = params.spec
            fh.write(struct.pack("<B", 0))
            fh.write(struct.pack("<I", len(spec.widths)))
            fh.write(struct.pack(f"<{len(spec.widths)}I", *spec.widths))
            fh.write(struct.pack("<B", ACTIVATIONS.index(spec.activation)))
            fh.write(struct.pack("<d", spec.leaky_slope))
            fh.write(struct.pack("<B", OUT_ACTIVATIONS.index(spec.out_activation)))
        fh.write(struct.pack("<Q", seed & (2**64 - 1)))
        fh.write(struct.pack("<Q", params.flat.size))
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, seed). Raises ValueError on a malformed file."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        (kind,) = struct.unpack("<B", fh.read(1))
        spec = None
        if kind == 0:
            (n_widths,) = struct.unpack("<I", fh.read(4))
            widths = struct.unpack(f"<{n_widths}I", fh.read(4 * n_widths))
            (act_i,) = struct.unpack("<B", fh.read(1))
            (slope,) = struct.unpack("<d", fh.read(8))
            (out_i,) = struct.unpack("<B", fh.read(1))
            spec = MlpSpec(widths[0], tuple(widths[1:-1]), widths[-1],
                           ACTIVATIONS[act_i], slope, OUT_ACTIVATIONS[out_i])
        elif kind != 1:
            raise ValueError(f"{path}: unknown parameter kind {kind}")
        (seed,) = struct.unpack("<Q", fh.read(8))
        (count,) = struct.unpack("<Q", fh.read(8))
        flat = np.frombuffer(fh.read(8 * count), dtype="<f8")
        if flat.size != count:
            raise ValueError(f"{path}: truncated payload")
    return ModelParams(flat, spec), seed
