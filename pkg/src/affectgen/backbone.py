"""Causal transformer language model over tokens with cross-attention conditioning.

Pre-norm blocks, learned absolute positions, feed-forward width 4x the model
width. Every block runs causal self-attention over the token stream and then
cross-attention over all conditioning rows. Hidden states are captured at a
configurable block for the alignment head, and a linear head on the final
normalized states produces next-token logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .util import component_seed, init_transformer_params, torch_generator


@dataclass(frozen=True)
class BackboneConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 4
    vocab_size: int = 256
    max_len: int = 256
    align_layer: int | None = None

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by "
                             f"n_heads {self.n_heads}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.align_layer is None:
            object.__setattr__(self, "align_layer", self.n_layers)
        if not 1 <= self.align_layer <= self.n_layers:
            raise ValueError(f"align_layer must be in [1, {self.n_layers}], "
                             f"got {self.align_layer}")


@dataclass(frozen=True)
class SamplingConfig:
    seed: int
    temperature: float = 1.0
    top_k: int = 64

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.ln_self = nn.LayerNorm(d_model)
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.self_out = nn.Linear(d_model, d_model)
        self.ln_cross = nn.LayerNorm(d_model)
        self.cross_q = nn.Linear(d_model, d_model)
        self.cross_kv = nn.Linear(d_model, 2 * d_model)
        self.cross_out = nn.Linear(d_model, d_model)
        self.ln_ff = nn.LayerNorm(d_model)
        self.ff_in = nn.Linear(d_model, 4 * d_model)
        self.ff_out = nn.Linear(4 * d_model, d_model)

    def _heads(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self.qkv(self.ln_self(x)).split(d, dim=2)
        attn = F.scaled_dot_product_attention(
            self._heads(q), self._heads(k), self._heads(v), is_causal=True)
        x = x + self.self_out(attn.transpose(1, 2).reshape(b, t, d))

        q = self._heads(self.cross_q(self.ln_cross(x)))
        k, v = self.cross_kv(cond).split(d, dim=2)
        attn = F.scaled_dot_product_attention(q, self._heads(k), self._heads(v))
        x = x + self.cross_out(attn.transpose(1, 2).reshape(b, t, d))

        return x + self.ff_out(F.gelu(self.ff_in(self.ln_ff(x))))


class BackboneLM(nn.Module):
    """Token LM; forward returns logits and the alignment-tap hidden states.

    Token id ``vocab_size`` is a dedicated learned start-of-sequence symbol,
    valid on input but never produced: the output head only scores the data
    vocabulary.
    """

    def __init__(self, cfg: BackboneConfig, seed: int = 0) -> None:
        super().__init__()
        self.cfg = cfg
        self.token_emb = nn.Embedding(cfg.vocab_size + 1, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.d_model)
        self.blocks = nn.ModuleList(
            Block(cfg.d_model, cfg.n_heads) for _ in range(cfg.n_layers))
        self.ln_final = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size)
        init_transformer_params(self, torch_generator(component_seed(seed, "backbone")))

    @property
    def start_token(self) -> int:
        return self.cfg.vocab_size

    def _validate_tokens(self, tokens: torch.Tensor) -> None:
        if tokens.shape[-1] > self.cfg.max_len:
            raise ValueError(f"sequence length {tokens.shape[-1]} exceeds "
                             f"max_len {self.cfg.max_len}")
        if tokens.numel() and (tokens.min() < 0 or tokens.max() > self.start_token):
            raise ValueError("token ids outside vocabulary range "
                             f"[0, {self.start_token}]")

    def forward(self, tokens: torch.Tensor,
                cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """tokens (B, T) int, cond (B, S, d_model) -> logits (B, T, V), hidden (B, T, d_model).

        Also accepts unbatched (T,) + (S, d_model) inputs and returns
        unbatched outputs.
        """
        unbatched = tokens.ndim == 1
        if unbatched:
            tokens = tokens.unsqueeze(0)
            cond = cond.unsqueeze(0)
        if cond.ndim != 3 or cond.shape[2] != self.cfg.d_model:
            raise ValueError(f"conditioning must be (B, S, {self.cfg.d_model}), "
                             f"got {tuple(cond.shape)}")
        self._validate_tokens(tokens)
        t = tokens.shape[1]
        x = self.token_emb(tokens) + self.pos_emb.weight[:t]
        hidden = x
        for i, block in enumerate(self.blocks):
            x = block(x, cond)
            if i + 1 == self.cfg.align_layer:
                hidden = x
        logits = self.head(self.ln_final(x))
        if unbatched:
            return logits.squeeze(0), hidden.squeeze(0)
        return logits, hidden


def ce_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean next-token cross entropy.

    ``logits`` rows must already be aligned with the tokens they predict:
    the caller feeds inputs shifted one step behind the targets.
    """
    if logits.shape[:-1] != targets.shape:
        raise ValueError(f"logits shape {tuple(logits.shape)} does not match "
                         f"targets shape {tuple(targets.shape)}")
    vocab = logits.shape[-1]
    if targets.numel() and (targets.min() < 0 or targets.max() >= vocab):
        raise ValueError(f"target ids outside vocabulary range [0, {vocab})")
    return F.cross_entropy(logits.reshape(-1, vocab), targets.reshape(-1))


def _draw_token(logits_row: np.ndarray, temperature: float, top_k: int,
                rng: np.random.Generator) -> int:
    if top_k == 1:
        return int(np.argmax(logits_row))
    keep = np.argsort(-logits_row, kind="stable")[:top_k]
    z = logits_row[keep] / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    u = rng.random()
    j = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return int(keep[min(j, top_k - 1)])


def sample_batch(model: BackboneLM, cond: torch.Tensor, length: int,
                 temperature: float, top_k: int, seeds: list[int]) -> np.ndarray:
    """Autoregressive decoding for a batch of conditioning matrices.

    Each row carries its own numpy generator, so a clip's tokens depend only
    on (parameters, its conditioning row, its seed). Sampling uses the
    temperature-scaled softmax truncated to the top_k logits; top_k == 1 is
    greedy and consumes no randomness.
    """
    b = cond.shape[0]
    if len(seeds) != b:
        raise ValueError(f"need one seed per row: {len(seeds)} seeds for batch {b}")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if length > model.cfg.max_len:
        raise ValueError(f"length {length} exceeds max_len {model.cfg.max_len}")
    if top_k > model.cfg.vocab_size:
        raise ValueError(f"top_k {top_k} exceeds vocab_size {model.cfg.vocab_size}")
    rngs = [np.random.default_rng(s) for s in seeds]
    tokens = torch.full((b, 1), model.start_token, dtype=torch.long)
    out = np.empty((b, length), dtype=np.int64)
    with torch.no_grad():
        for t in range(length):
            logits, _ = model(tokens, cond)
            last = logits[:, -1, :].double().numpy()
            step = np.array([_draw_token(last[i], temperature, top_k, rngs[i])
                             for i in range(b)], dtype=np.int64)
            out[:, t] = step
            tokens = torch.cat([tokens, torch.from_numpy(step).unsqueeze(1)], dim=1)
    return out


def sample(model: BackboneLM, cond: torch.Tensor, length: int,
           sampling: SamplingConfig) -> np.ndarray:
    """Decode one clip; ``cond`` is a single (S, d_model) conditioning matrix."""
    return sample_batch(model, cond.unsqueeze(0), length,
                        sampling.temperature, sampling.top_k, [sampling.seed])[0]
