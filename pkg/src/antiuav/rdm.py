"""Relevance decoupling block at toy scale.

Template tokens attend only to themselves. Search tokens produce two streams:
self-attention over the search tokens alone, and cross-attention against the
row-concatenated template and search keys/values. The two search streams are
concatenated along channels, reduced back to ``d`` channels, projected, and
added to the input tokens.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from antiuav.errors import InvalidInputError

__all__ = [
    "Origin",
    "RdmWeights",
    "StageShape",
    "TokenMatrix",
    "attention_weights",
    "cross_attention_ts",
    "depthwise_mix",
    "rdm_forward",
    "scaled_attention",
    "softmax_rows",
    "stage_shapes",
]

STAGE_CHANNEL_MULTIPLIERS = (1, 3, 6)


class Origin(Enum):
    TEMPLATE = "template"
    SEARCH = "search"


@dataclass(frozen=True, eq=False)
class TokenMatrix:
    tokens: np.ndarray
    origin: Origin

    def __post_init__(self) -> None:
        arr = np.array(self.tokens, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"tokens must be an N x d matrix with N, d >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("tokens must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tokens.shape


def _matrix(name: str, value: np.ndarray) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    return arr


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    q = _matrix("Q", q)
    k = _matrix("K", k)
    if q.shape[1] != k.shape[1]:
        raise InvalidInputError(f"Q and K channel mismatch: {q.shape[1]} vs {k.shape[1]}")
    if k.shape[0] == 0:
        raise InvalidInputError("attention needs at least one key")
    return softmax_rows(q @ k.T / math.sqrt(q.shape[1]))


def scaled_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``softmax(Q K^T / sqrt(d)) V`` with a numerically stable row softmax."""
    v = _matrix("V", v)
    k = _matrix("K", k)
    if k.shape[0] != v.shape[0]:
        raise InvalidInputError(f"K and V token count mismatch: {k.shape[0]} vs {v.shape[0]}")
    return attention_weights(q, k) @ v


def cross_attention_ts(
    q_s: np.ndarray, k_t: np.ndarray, k_s: np.ndarray, v_t: np.ndarray, v_s: np.ndarray
) -> np.ndarray:
    """Search queries against template+search keys and values stacked by rows."""
    k_t, k_s, v_t, v_s = (
        _matrix(n, m) for n, m in (("K_t", k_t), ("K_s", k_s), ("V_t", v_t), ("V_s", v_s))
    )
    if k_t.shape[1] != k_s.shape[1] or v_t.shape[1] != v_s.shape[1]:
        raise InvalidInputError("template and search must share the channel dimension")
    return scaled_attention(q_s, np.concatenate([k_t, k_s]), np.concatenate([v_t, v_s]))


def depthwise_mix(tokens: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 depthwise correlation (stride 1, zero padding) on the square token grid."""
    n, d = tokens.shape
    side = math.isqrt(n)
    if side * side != n:
        raise InvalidInputError(f"token count {n} is not a perfect square")
    if kernel.shape != (3, 3, d):
        raise InvalidInputError(f"kernel must have shape (3, 3, {d}), got {kernel.shape}")
    grid = np.pad(tokens.reshape(side, side, d), ((1, 1), (1, 1), (0, 0)))
    out = np.zeros((side, side, d))
    for di in range(3):
        for dj in range(3):
            out += kernel[di, dj] * grid[di : di + side, dj : dj + side]
    return out.reshape(n, d)


def _identity_kernel(d: int) -> np.ndarray:
    kernel = np.zeros((3, 3, d))
    kernel[1, 1, :] = 1.0
    return kernel


@dataclass(frozen=True, eq=False)
class RdmWeights:
    """Parameters of one block. Projections act on row vectors (``x @ W``)."""

    mix_template: np.ndarray  # (3, 3, d)
    mix_search: np.ndarray  # (3, 3, d)
    wq_t: np.ndarray
    wk_t: np.ndarray
    wv_t: np.ndarray
    wq_s: np.ndarray
    wk_s: np.ndarray
    wv_s: np.ndarray
    reduce: np.ndarray  # (2d, d), the 1x1 channel reduction
    out_proj: np.ndarray  # (d, d)
    project_then_add: bool = True

    def __post_init__(self) -> None:
        d = self.dim
        for name in ("mix_template", "mix_search"):
            if getattr(self, name).shape != (3, 3, d):
                raise InvalidInputError(f"{name} must have shape (3, 3, {d})")
        for name in ("wq_t", "wk_t", "wv_t", "wq_s", "wk_s", "wv_s", "out_proj"):
            if getattr(self, name).shape != (d, d):
                raise InvalidInputError(f"{name} must have shape ({d}, {d})")
        if self.reduce.shape != (2 * d, d):
            raise InvalidInputError(f"reduce must have shape ({2 * d}, {d})")
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, np.ndarray):
                value = np.array(value, dtype=float)
                value.setflags(write=False)
                object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:
        return self.out_proj.shape[0]

    @classmethod
    def random(cls, dim: int, seed: int, spatial_mixing: bool = True, **kwargs) -> "RdmWeights":
        """Uniform(-1/sqrt(d), 1/sqrt(d)) weights from a seeded PCG64 stream."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(dim)

        def draw(*shape: int) -> np.ndarray:
            return rng.uniform(-bound, bound, size=shape)

        mix_t, mix_s = draw(3, 3, dim), draw(3, 3, dim)
        if not spatial_mixing:
            mix_t = mix_s = _identity_kernel(dim)
        return cls(
            mix_template=mix_t,
            mix_search=mix_s,
            wq_t=draw(dim, dim),
            wk_t=draw(dim, dim),
            wv_t=draw(dim, dim),
            wq_s=draw(dim, dim),
            wk_s=draw(dim, dim),
            wv_s=draw(dim, dim),
            reduce=draw(2 * dim, dim),
            out_proj=draw(dim, dim),
            **kwargs,
        )

    @classmethod
    def zeros(cls, dim: int, **kwargs) -> "RdmWeights":
        z = np.zeros((dim, dim))
        return cls(
            mix_template=_identity_kernel(dim),
            mix_search=_identity_kernel(dim),
            wq_t=z, wk_t=z, wv_t=z, wq_s=z, wk_s=z, wv_s=z,
            reduce=np.zeros((2 * dim, dim)),
            out_proj=z,
            **kwargs,
        )


def _fuse(inputs: np.ndarray, features: np.ndarray, weights: RdmWeights) -> np.ndarray:
    if weights.project_then_add:
        return inputs + features @ weights.out_proj
    return (inputs + features) @ weights.out_proj


def rdm_forward(
    template: TokenMatrix, search: TokenMatrix, weights: RdmWeights
) -> tuple[TokenMatrix, TokenMatrix]:
    t_in, s_in = template.tokens, search.tokens
    d = weights.dim
    if t_in.shape[1] != d or s_in.shape[1] != d:
        raise InvalidInputError(
            f"token channels ({t_in.shape[1]}, {s_in.shape[1]}) do not match weights ({d})"
        )
    t = depthwise_mix(t_in, weights.mix_template)
    s = depthwise_mix(s_in, weights.mix_search)

    q_t, k_t, v_t = t @ weights.wq_t, t @ weights.wk_t, t @ weights.wv_t
    q_s, k_s, v_s = s @ weights.wq_s, s @ weights.wk_s, s @ weights.wv_s

    self_t = scaled_attention(q_t, k_t, v_t)
    self_s = scaled_attention(q_s, k_s, v_s)
    cross = cross_attention_ts(q_s, k_t, k_s, v_t, v_s)
    search_features = np.concatenate([self_s, cross], axis=1) @ weights.reduce

    return (
        TokenMatrix(_fuse(t_in, self_t, weights), Origin.TEMPLATE),
        TokenMatrix(_fuse(s_in, search_features, weights), Origin.SEARCH),
    )


@dataclass(frozen=True)
class StageShape:
    stage: int
    template_side: int
    search_side: int
    channels: int

    @property
    def template_tokens(self) -> int:
        return self.template_side * self.template_side

    @property
    def search_tokens(self) -> int:
        return self.search_side * self.search_side

    @property
    def token_count(self) -> int:
        return self.template_tokens + self.search_tokens


def stage_shapes(template_side: int, search_side: int, base_channels: int) -> list[StageShape]:
    """Token grids and channel widths of the three backbone stages.

    Stage ``s`` downsamples the input by ``4 * 2**(s-1)``; channels run
    ``C, 3C, 6C``.
    """
    for name, value in (("template_side", template_side), ("search_side", search_side)):
        if value <= 0 or value % 16:
            raise InvalidInputError(f"{name} must be a positive multiple of 16, got {value}")
    if base_channels < 1:
        raise InvalidInputError(f"base_channels must be >= 1, got {base_channels}")
    shapes = []
    for stage, mult in enumerate(STAGE_CHANNEL_MULTIPLIERS, start=1):
        stride = 4 * 2 ** (stage - 1)
        shapes.append(
            StageShape(stage, template_side // stride, search_side // stride, base_channels * mult)
        )
    return shapes
