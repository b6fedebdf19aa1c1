"""Three-layer graph convolutional scorer over syntax graphs.

The forward pass is h_{i+1} = relu(A_hat @ h_i @ W_{i+1}) with no bias terms,
starting from label embeddings and ending in a mean-pool over nodes. A pair of
pooled vectors (candidate sentence, user sentence) is scored by a sigmoid over
a single linear readout, and training minimizes a margin ranking loss between
a positive and a negative candidate.

Gradients are computed explicitly in closed form; the finite-difference tests
hold this file to account.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np
from scipy.special import expit

from .util import canonical_json

N_LAYERS = 3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class CheckpointError(Exception):
    pass


@dataclass
class TrainConfig:
    hidden_dim: int = 256
    margin: float = 0.5
    batch_size: int = 2048
    lr: float = 1e-3
    epochs: int = 30
    seed: int = 0
    val_fraction: float = 0.05
    patience: int = 5
    directed: bool = False

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ValueError("val_fraction must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass
class GcnParams:
    embed: np.ndarray       # (vocab, dim)
    w1: np.ndarray          # (dim, dim)
    w2: np.ndarray
    w3: np.ndarray
    score_w: np.ndarray     # (2*dim,)
    score_b: np.ndarray     # scalar, shape ()

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """Fixed iteration order; the optimizer and checkpoint rely on it."""
        return [("embed", self.embed), ("w1", self.w1), ("w2", self.w2),
                ("w3", self.w3), ("score_w", self.score_w),
                ("score_b", self.score_b)]

    @property
    def hidden_dim(self) -> int:
        return self.embed.shape[1]

    def layer_weights(self) -> list[np.ndarray]:
        return [self.w1, self.w2, self.w3]

    def zeros_like(self) -> "GcnParams":
        return GcnParams(*(np.zeros_like(t) for _n, t in self.tensors()))

    def copy(self) -> "GcnParams":
        return GcnParams(*(t.copy() for _n, t in self.tensors()))


def init_params(vocab_size: int, hidden_dim: int, rng: np.random.Generator) -> GcnParams:
    """Gaussian init scaled so activations and scores start near unit range.

    Draw order is part of the contract: embeddings, then the three layer
    matrices, then the readout."""
    d = hidden_dim
    embed = rng.normal(0.0, 1.0, (vocab_size, d))
    w1 = rng.normal(0.0, np.sqrt(1.0 / d), (d, d))
    w2 = rng.normal(0.0, np.sqrt(1.0 / d), (d, d))
    w3 = rng.normal(0.0, np.sqrt(1.0 / d), (d, d))
    score_w = rng.normal(0.0, np.sqrt(1.0 / (2 * d)), (2 * d,))
    return GcnParams(embed, w1, w2, w3, score_w, np.zeros(()))


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one graph's forward run."""

    adjacency: object                 # dense ndarray or scipy CSR
    labels: np.ndarray                # (n_nodes,) vocab indices
    activations: list[np.ndarray]     # [h0, h1, h2, h3]
    pooled: np.ndarray                # (dim,)


def forward_graph(params: GcnParams, adjacency, labels) -> ForwardTrace:
    labels = np.asarray(labels, dtype=np.int64)
    h = params.embed[labels]
    acts = [h]
    for i, w in enumerate(params.layer_weights(), start=1):
        h = np.maximum(adjacency @ h @ w, 0.0)
        if not np.all(np.isfinite(h)):
            raise FloatingPointError(f"non-finite activations at layer {i}")
        acts.append(h)
    return ForwardTrace(adjacency, labels, acts, acts[-1].mean(axis=0))


def score_pair(params: GcnParams, candidate: np.ndarray, user: np.ndarray) -> float:
    d = params.hidden_dim
    if candidate.shape != (d,) or user.shape != (d,):
        raise ValueError(
            f"pooled vectors must have shape ({d},), got {candidate.shape} and {user.shape}")
    z = float(params.score_w @ np.concatenate([candidate, user]) + params.score_b)
    return float(expit(z))


def triplet_loss(s_pos: float, s_neg: float, margin: float) -> float:
    return max(0.0, s_neg - s_pos + margin)


def _backprop_graph(params: GcnParams, trace: ForwardTrace,
                    d_pooled: np.ndarray, grads: GcnParams) -> None:
    """Accumulate gradients for one graph given the pooled-output gradient."""
    n = trace.activations[-1].shape[0]
    dh = np.tile(d_pooled / n, (n, 1))
    layer_ws = params.layer_weights()
    layer_gs = grads.layer_weights()
    adj = trace.adjacency
    adj_t = adj.T
    for i in range(N_LAYERS - 1, -1, -1):
        h_out = trace.activations[i + 1]
        dz = dh * (h_out > 0.0)
        msg = adj @ trace.activations[i]
        layer_gs[i] += msg.T @ dz
        dh = adj_t @ (dz @ layer_ws[i].T)
    # scatter-add handles repeated labels deterministically
    np.add.at(grads.embed, trace.labels, dh)


def backward_triplet(params: GcnParams, user: ForwardTrace, pos: ForwardTrace,
                     neg: ForwardTrace, margin: float) -> tuple[GcnParams, float]:
    """Gradients of the margin ranking loss for one (user, pos, neg) triple.

    Returns (grads, loss); an inactive hinge yields exactly zero gradients."""
    d = params.hidden_dim
    for name, t in (("user", user), ("pos", pos), ("neg", neg)):
        if t.pooled.shape != (d,):
            raise ValueError(f"{name} pooled vector has shape {t.pooled.shape}, want ({d},)")
    s_pos = score_pair(params, pos.pooled, user.pooled)
    s_neg = score_pair(params, neg.pooled, user.pooled)
    loss = triplet_loss(s_pos, s_neg, margin)
    grads = params.zeros_like()
    if loss <= 0.0:
        return grads, loss

    g_pos = -s_pos * (1.0 - s_pos)   # dL/dz_pos
    g_neg = s_neg * (1.0 - s_neg)    # dL/dz_neg
    w_cand = params.score_w[:d]
    w_user = params.score_w[d:]

    grads.score_w[:d] += g_pos * pos.pooled + g_neg * neg.pooled
    grads.score_w[d:] += (g_pos + g_neg) * user.pooled
    grads.score_b += g_pos + g_neg

    _backprop_graph(params, pos, g_pos * w_cand, grads)
    _backprop_graph(params, neg, g_neg * w_cand, grads)
    _backprop_graph(params, user, (g_pos + g_neg) * w_user, grads)
    return grads, loss


def accumulate(into: GcnParams, grads: GcnParams) -> None:
    for (_n, a), (_m, b) in zip(into.tensors(), grads.tensors()):
        a += b


def scale_grads(grads: GcnParams, factor: float) -> None:
    for _n, t in grads.tensors():
        t *= factor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: GcnParams) -> "AdamState":
        return cls(m=[np.zeros_like(t) for _n, t in params.tensors()],
                   v=[np.zeros_like(t) for _n, t in params.tensors()])


def adam_step(params: GcnParams, grads: GcnParams, state: AdamState, lr: float) -> None:
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for i, ((_n, p), (_m, g)) in enumerate(zip(params.tensors(), grads.tensors())):
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


# ---------------------------------------------------------------------------
# Checkpoint format: magic "SSG1", version, config JSON, named f64 tensors,
# trailing CRC32 of everything before it.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"SSG1"
CHECKPOINT_VERSION = 1


def _write_tensor(f: BinaryIO, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    f.write(struct.pack("<H", len(nb)))
    f.write(nb)
    f.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        f.write(struct.pack("<I", dim))
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_checkpoint(path: str, params: GcnParams, config: dict) -> None:
    import io

    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    cfg = canonical_json(config).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    tensors = params.tensors()
    buf.write(struct.pack("<H", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    payload = buf.getvalue()
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("checkpoint corrupt: truncated")
    return data


def load_checkpoint(path: str) -> tuple[GcnParams, dict]:
    import io
    import json

    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file")
    if len(raw) < 10:
        raise CheckpointError("checkpoint corrupt: truncated")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(payload):
        raise CheckpointError("checkpoint corrupt: checksum mismatch")

    f = io.BytesIO(payload[4:])
    version = struct.unpack("<H", _read_exact(f, 2))[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg_len = struct.unpack("<I", _read_exact(f, 4))[0]
    config = json.loads(_read_exact(f, cfg_len).decode("utf-8"))
    n_tensors = struct.unpack("<H", _read_exact(f, 2))[0]
    tensors: dict[str, np.ndarray] = {}
    for _i in range(n_tensors):
        name_len = struct.unpack("<H", _read_exact(f, 2))[0]
        name = _read_exact(f, name_len).decode("utf-8")
        ndim = struct.unpack("<B", _read_exact(f, 1))[0]
        shape = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _d in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(_read_exact(f, count * 8), dtype="<f8")
        tensors[name] = data.reshape(shape).copy()

    expected = ("embed", "w1", "w2", "w3", "score_w", "score_b")
    missing = [n for n in expected if n not in tensors]
    if missing:
        raise CheckpointError(f"checkpoint corrupt: missing tensors {missing}")
    return GcnParams(*(tensors[n] for n in expected)), config
