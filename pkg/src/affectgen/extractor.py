"""Frozen deterministic feature extractor over token windows.

Stands in for a pretrained audio-understanding encoder: it maps a token clip
to one feature vector per window, where each vector is a fixed random
projection of interpretable window statistics (high-half fraction, switch
rate, mean token id, coarse histogram). The projection is generated once
from a recorded seed and owns no trainable state, so features are a frozen
function of the tokens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIST_BINS = 16
RAW_STAT_DIM = 3 + HIST_BINS
DEFAULT_PROJECTION_SEED = 42
DEFAULT_FEATURE_DIM = 32

_CACHE_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window geometry in tokens. Stride must not be below width."""

    window_tokens: int = 32
    stride_tokens: int = 32

    def __post_init__(self) -> None:
        if self.window_tokens < 1:
            raise ValueError(f"window_tokens must be >= 1, got {self.window_tokens}")
        if self.stride_tokens < self.window_tokens:
            raise ValueError("stride_tokens must be >= window_tokens, got "
                             f"stride {self.stride_tokens} < window {self.window_tokens}")


def window_count(t: int, window_tokens: int, stride_tokens: int) -> int:
    """Number of full windows of width W at stride S that fit into T tokens."""
    if t < window_tokens:
        raise ValueError(f"clip shorter than one window: {t} < {window_tokens}")
    return (t - window_tokens) // stride_tokens + 1


@dataclass
class FeatureSequence:
    """Per-window feature matrix (N x d_feat) plus the geometry it came from."""

    features: np.ndarray
    window_config: WindowConfig


class FeatureExtractor:
    """Fixed projection of per-window token statistics.

    The projection matrix has standard-normal entries with rows scaled to
    unit norm. If a draw happens to be column-rank-deficient the seed is
    incremented and redrawn; the seed actually used is recorded in ``seed``
    and must match between any two feature spaces that get compared.
    """

    def __init__(self, vocab_size: int, window: WindowConfig | None = None,
                 d_feat: int = DEFAULT_FEATURE_DIM,
                 seed: int = DEFAULT_PROJECTION_SEED) -> None:
        if d_feat < RAW_STAT_DIM:
            raise ValueError(f"d_feat must be >= {RAW_STAT_DIM} to keep the raw "
                             f"statistics recoverable, got {d_feat}")
        if vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
        self.vocab_size = vocab_size
        self.window = window or WindowConfig()
        self.d_feat = d_feat
        while True:
            rng = np.random.default_rng(seed)
            projection = rng.standard_normal((d_feat, RAW_STAT_DIM))
            projection /= np.linalg.norm(projection, axis=1, keepdims=True)
            if np.linalg.matrix_rank(projection) == RAW_STAT_DIM:
                break
            seed += 1
        projection.setflags(write=False)
        self.projection = projection
        self.seed = seed

    def _windows(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens)
        if tokens.ndim != 1:
            raise ValueError(f"token array must be 1-D, got shape {tokens.shape}")
        n = window_count(len(tokens), self.window.window_tokens, self.window.stride_tokens)
        view = np.lib.stride_tricks.sliding_window_view(tokens, self.window.window_tokens)
        return view[:: self.window.stride_tokens][:n]

    def raw_stats(self, tokens: np.ndarray) -> np.ndarray:
        """Window statistics matrix (N x 19), before projection.

        Columns: high-half fraction, within-window switch rate, mean token id
        scaled by 1/(vocab-1), then a 16-bin histogram of token ids as
        fractions of the window.
        """
        windows = self._windows(tokens)
        w = windows.shape[1]
        high = (windows >= self.vocab_size // 2).mean(axis=1)
        if w > 1:
            switch = (windows[:, 1:] != windows[:, :-1]).mean(axis=1)
        else:
            switch = np.zeros(len(windows))
        mean_id = windows.mean(axis=1) / (self.vocab_size - 1)
        bins = windows * HIST_BINS // self.vocab_size
        hist = np.stack([(bins == b).mean(axis=1) for b in range(HIST_BINS)], axis=1)
        return np.column_stack([high, switch, mean_id, hist])

    def extract(self, tokens: np.ndarray) -> FeatureSequence:
        """Project window statistics into the feature space (N x d_feat)."""
        return FeatureSequence(self.raw_stats(tokens) @ self.projection.T, self.window)

    def clip_mean(self, tokens: np.ndarray) -> np.ndarray:
        """Mean feature vector over all windows of a clip (d_feat,)."""
        return self.extract(tokens).features.mean(axis=0)


def write_feature_cache(path: Path, features: np.ndarray) -> None:
    """Cache file: u32 (N, d_feat) header, then the little-endian f32 matrix."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {features.shape}")
    n, d = features.shape
    Path(path).write_bytes(_CACHE_HEADER.pack(n, d) +
                           features.astype("<f4").tobytes())


def read_feature_cache(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _CACHE_HEADER.size:
        raise ValueError(f"feature cache {path} too short for its header")
    n, d = _CACHE_HEADER.unpack_from(data)
    expected = _CACHE_HEADER.size + 4 * n * d
    if len(data) != expected:
        raise ValueError(f"feature cache {path} has {len(data)} bytes, "
                         f"expected {expected} for shape ({n}, {d})")
    return np.frombuffer(data, dtype="<f4", offset=_CACHE_HEADER.size).reshape(n, d).copy()
