# attention/pl_attention.py
"""
Forward-only PL-attention over lane point features.

Features are laid out as N lanes x (M + 1) tokens x C channels; the last
token of every lane is its [CLS] token. The pipeline is

    P' = P + MLP(P)                      position embedding (all M+1 tokens)
    P* = PPA(P')                         attention within each lane
    H_s = LLA(P*[:, M])                  attention across the N CLS tokens
    H_dagger = PYA(P*[:, :M])            attention across lanes at each y index

Each block is an ordinary multi-head self-attention; restricting it to a
block of tokens is equivalent to dense attention over all N(M+1) tokens
under the matching mask (see dense_masked_attention and the *_mask helpers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from lanes.errors import InvalidConfig, ShapeMismatch
from tools.ep_post import EpPrediction

COMPONENTS = ("ppa", "lla", "pya")
ACTIVATIONS = ("relu", "gelu", "linear")


# -----------------------
# Feature tensors
# -----------------------
@dataclass(frozen=True, eq=False)
class FeatureTensor:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeMismatch(f"features must be N x (M+1) x C with positive dims, got {data.shape}")
        if data.shape[1] < 2:
            raise ShapeMismatch("each lane needs at least one point token besides [CLS]")
        if not np.all(np.isfinite(data)):
            raise ShapeMismatch("non-finite feature entry")
        object.__setattr__(self, "data", data)

    @property
    def n_lanes(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_points(self) -> int:
        return int(self.data.shape[1] - 1)

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def cls(self) -> np.ndarray:
        return self.data[:, -1, :]

    @property
    def point_feats(self) -> np.ndarray:
        return self.data[:, :-1, :]

    @classmethod
    def from_points(cls, points, cls_token) -> "FeatureTensor":
        """Append the shared [CLS] vector after the last point of every lane."""
        points = np.asarray(points)
        token = np.asarray(cls_token, dtype=points.dtype)
        if points.ndim != 3 or token.shape != (points.shape[2],):
            raise ShapeMismatch(f"points {points.shape} and CLS token {token.shape} do not compose")
        tokens = np.broadcast_to(token, (points.shape[0], 1, points.shape[2]))
        return cls(np.concatenate([points, tokens], axis=1))


# -----------------------
# Weights
# -----------------------
@dataclass(frozen=True, eq=False)
class AttentionWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    heads: int
    seed: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.wq).shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            if np.asarray(getattr(self, name)).shape != (c, c):
                raise ShapeMismatch(f"{name} must be {c} x {c}")
        if self.heads < 1 or c % self.heads:
            raise InvalidConfig(f"channels ({c}) must be divisible by heads ({self.heads})")

    @property
    def channels(self) -> int:
        return int(np.asarray(self.wq).shape[0])

    @classmethod
    def init(cls, c: int, heads: int, seed: int, dtype=np.float64) -> "AttentionWeights":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(c)
        mats = [(rng.standard_normal((c, c)) * scale).astype(dtype) for _ in range(4)]
        return cls(*mats, heads=heads, seed=seed)


@dataclass(frozen=True, eq=False)
class MlpWeights:
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: str = "relu"

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeMismatch("MLP needs one bias per weight matrix")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w, b = np.asarray(w), np.asarray(b)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} and bias {b.shape} do not compose")
            if i and w.shape[0] != np.asarray(self.weights[i - 1]).shape[1]:
                raise ShapeMismatch(f"layer {i} expects {w.shape[0]} inputs, "
                                    f"layer {i - 1} gives {np.asarray(self.weights[i - 1]).shape[1]}")
        object.__setattr__(self, "weights", tuple(np.asarray(w) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b) for b in self.biases))

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def init(cls, sizes: Sequence[int], seed: int, activation: str = "relu", dtype=np.float64) -> "MlpWeights":
        if len(sizes) < 2:
            raise ShapeMismatch(f"MLP needs at least input and output sizes, got {list(sizes)}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append((rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)).astype(dtype))
            biases.append((rng.standard_normal(fan_out) * 0.01).astype(dtype))
        return cls(tuple(weights), tuple(biases), activation)

    @classmethod
    def identity(cls, c: int) -> "MlpWeights":
        return cls((np.eye(c),), (np.zeros(c),), "linear")

    @classmethod
    def constant(cls, c_in: int, bias) -> "MlpWeights":
        bias = np.asarray(bias, dtype=float)
        return cls((np.zeros((c_in, bias.size)),), (bias,), "linear")


@dataclass(frozen=True, eq=False)
class PlWeights:
    pos_mlp: MlpWeights
    ppa: AttentionWeights
    lla: AttentionWeights
    pya: AttentionWeights
    cls_token: np.ndarray
    ep_head: MlpWeights

    @classmethod
    def init(cls, channels: int, heads: int, seed: int, hidden: Optional[int] = None) -> "PlWeights":
        hidden = hidden or channels
        sub = np.random.SeedSequence(seed).generate_state(6)
        return cls(
            pos_mlp=MlpWeights.init([channels, hidden, channels], int(sub[0])),
            ppa=AttentionWeights.init(channels, heads, int(sub[1])),
            lla=AttentionWeights.init(channels, heads, int(sub[2])),
            pya=AttentionWeights.init(channels, heads, int(sub[3])),
            cls_token=np.random.default_rng(int(sub[4])).standard_normal(channels) * 0.02,
            ep_head=MlpWeights.init([channels, hidden, 6], int(sub[5])),
        )


# -----------------------
# Kernels
# -----------------------
def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "gelu":
        return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))
    return x


def mlp_forward(w: MlpWeights, x) -> np.ndarray:
    """Affine layers with the activation between them; the last layer stays linear."""
    x = np.asarray(x)
    if x.shape[-1] != w.layer_sizes[0]:
        raise ShapeMismatch(f"MLP expects {w.layer_sizes[0]} input channels, got {x.shape[-1]}")
    last = len(w.weights) - 1
    for i, (wi, bi) in enumerate(zip(w.weights, w.biases)):
        x = x @ wi + bi
        if i < last:
            x = _activate(x, w.activation)
    return x


def add_position_embedding(feat: FeatureTensor, w: MlpWeights) -> FeatureTensor:
    if w.layer_sizes[-1] != feat.channels:
        raise ShapeMismatch(f"position MLP emits {w.layer_sizes[-1]} channels, features have {feat.channels}")
    return FeatureTensor(feat.data + mlp_forward(w, feat.data))


def stable_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def multi_head_attention(x, w: AttentionWeights, mask: Optional[np.ndarray] = None,
                         return_probs: bool = False):
    """
    Self-attention over the second-to-last axis of ``x`` (..., T, C).

    ``mask`` is a boolean T x T array, True where a query may attend to a key.
    """
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-1] != w.channels:
        raise ShapeMismatch(f"attention expects (..., T, {w.channels}), got {x.shape}")
    t, c, h = x.shape[-2], x.shape[-1], w.heads
    d = c // h

    def split(a):
        return np.swapaxes(a.reshape(a.shape[:-1] + (h, d)), -2, -3)

    q, k, v = split(x @ w.wq), split(x @ w.wk), split(x @ w.wv)
    scores = q @ np.swapaxes(k, -1, -2) / math.sqrt(d)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (t, t):
            raise ShapeMismatch(f"mask must be {t} x {t}, got {mask.shape}")
        scores = np.where(mask, scores, np.array(-np.inf, dtype=scores.dtype))
    probs = stable_softmax(scores)
    heads_out = probs @ v
    merged = np.swapaxes(heads_out, -2, -3).reshape(x.shape[:-1] + (c,))
    out = merged @ w.wo
    return (out, probs) if return_probs else out


def ppa_forward(feat: FeatureTensor, w: AttentionWeights) -> FeatureTensor:
    return FeatureTensor(multi_head_attention(feat.data, w))


def lla_forward(cls_feats, w: AttentionWeights) -> np.ndarray:
    cls_feats = np.asarray(cls_feats)
    if cls_feats.ndim != 2:
        raise ShapeMismatch(f"LLA expects N x C CLS features, got {cls_feats.shape}")
    return multi_head_attention(cls_feats, w)


def pya_forward(point_feats, w: AttentionWeights) -> np.ndarray:
    point_feats = np.asarray(point_feats)
    if point_feats.ndim != 3:
        raise ShapeMismatch(f"PYA expects N x M x C point features, got {point_feats.shape}")
    # M groups of N tokens
    grouped = np.swapaxes(point_feats, 0, 1)
    return np.swapaxes(multi_head_attention(grouped, w), 0, 1)


def pl_attention_forward(feat: FeatureTensor, weights: PlWeights, residual: bool = False,
                         components: Sequence[str] = COMPONENTS) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (H_s: N x C, H_dagger: N x M x C). A skipped component passes its input through."""
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise InvalidConfig(f"unknown PL-attention components: {', '.join(sorted(unknown))}")

    p = add_position_embedding(feat, weights.pos_mlp)
    if "ppa" in components:
        out = ppa_forward(p, weights.ppa).data
        p = FeatureTensor(p.data + out if residual else out)

    cls, points = p.cls, p.point_feats
    h_s = cls
    if "lla" in components:
        out = lla_forward(cls, weights.lla)
        h_s = cls + out if residual else out
    h_dagger = points
    if "pya" in components:
        out = pya_forward(points, weights.pya)
        h_dagger = points + out if residual else out
    return h_s, h_dagger


def ep_head_forward(w: MlpWeights, point_feats) -> Union[EpPrediction, List[EpPrediction]]:
    """Start/end deltas from point features: M x C gives one prediction, N x M x C a list."""
    point_feats = np.asarray(point_feats)
    if w.layer_sizes[-1] != 6:
        raise ShapeMismatch(f"EP head must emit 6 values per point, emits {w.layer_sizes[-1]}")
    out = mlp_forward(w, point_feats)
    if out.ndim == 2:
        return EpPrediction(out[:, :3], out[:, 3:])
    if out.ndim == 3:
        return [EpPrediction(lane[:, :3], lane[:, 3:]) for lane in out]
    raise ShapeMismatch(f"EP head expects M x C or N x M x C features, got {point_feats.shape}")


# -----------------------
# Dense masked oracle
# -----------------------
def _token_index(n: int, m: int) -> Tuple[np.ndarray, np.ndarray]:
    # flattened position i*(M+1) + j -> (lane i, slot j); slot M is [CLS]
    lane = np.repeat(np.arange(n), m + 1)
    slot = np.tile(np.arange(m + 1), n)
    return lane, slot


def ppa_mask(n: int, m: int) -> np.ndarray:
    lane, _ = _token_index(n, m)
    return lane[:, None] == lane[None, :]


def lla_mask(n: int, m: int) -> np.ndarray:
    """CLS tokens see every CLS token; point tokens only themselves."""
    _, slot = _token_index(n, m)
    is_cls = slot == m
    return (is_cls[:, None] & is_cls[None, :]) | np.eye(slot.size, dtype=bool)


def pya_mask(n: int, m: int) -> np.ndarray:
    """Point tokens see tokens with the same slot index; CLS tokens only themselves."""
    _, slot = _token_index(n, m)
    is_point = slot < m
    same = (slot[:, None] == slot[None, :]) & is_point[:, None] & is_point[None, :]
    return same | np.eye(slot.size, dtype=bool)


def dense_masked_attention(tokens, w: AttentionWeights, mask) -> np.ndarray:
    """
    Reference attention over T x C tokens, one head at a time with explicit
    loops. Kept separate from multi_head_attention so it can check it.
    """
    tokens = np.asarray(tokens)
    mask = np.asarray(mask, dtype=bool)
    t, c = tokens.shape
    d = c // w.heads
    q, k, v = tokens @ w.wq, tokens @ w.wk, tokens @ w.wv
    merged = np.zeros_like(q)
    for head in range(w.heads):
        cols = slice(head * d, (head + 1) * d)
        for row in range(t):
            keys = np.flatnonzero(mask[row])
            logits = k[keys, cols] @ q[row, cols] / np.sqrt(d)
            weights = np.exp(logits - logits.max())
            weights /= weights.sum()
            merged[row, cols] = weights @ v[keys, cols]
    return merged @ w.wo
