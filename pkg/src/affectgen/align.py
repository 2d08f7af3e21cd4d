"""Alignment head: learnable queries that distill hidden states into features.

A small transformer decoder reads the backbone's hidden-state sequence as
memory through N learnable query tokens (one per target window) and projects
the updated queries to the extractor's feature width. Training pulls these
predictions toward the frozen extractor's features, which pushes affect
information into the backbone states the queries attend over.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .util import component_seed, init_transformer_params, torch_generator


@dataclass(frozen=True)
class AlignConfig:
    n_queries: int = 8
    n_layers: int = 2
    n_heads: int = 4
    d_feat: int = 32

    def __post_init__(self) -> None:
        if self.n_queries < 1:
            raise ValueError(f"n_queries must be >= 1, got {self.n_queries}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.d_feat < 1:
            raise ValueError(f"d_feat must be >= 1, got {self.d_feat}")


class DecoderBlock(nn.Module):
    """Pre-norm decoder block: query self-attention (unmasked), then
    cross-attention over the memory, then feed-forward."""

    def __init__(self, d_model: int, n_heads: int) -> None:
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
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

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        q, k, v = self.qkv(self.ln_self(x)).split(d, dim=2)
        attn = F.scaled_dot_product_attention(self._heads(q), self._heads(k), self._heads(v))
        x = x + self.self_out(attn.transpose(1, 2).reshape(b, n, d))

        q = self._heads(self.cross_q(self.ln_cross(x)))
        k, v = self.cross_kv(memory).split(d, dim=2)
        attn = F.scaled_dot_product_attention(q, self._heads(k), self._heads(v))
        x = x + self.cross_out(attn.transpose(1, 2).reshape(b, n, d))

        return x + self.ff_out(F.gelu(self.ff_in(self.ln_ff(x))))


class AlignmentHead(nn.Module):
    """N learnable queries -> decoder over hidden-state memory -> (N, d_feat)."""

    def __init__(self, cfg: AlignConfig, d_model: int, seed: int = 0) -> None:
        super().__init__()
        self.cfg = cfg
        gen = torch_generator(component_seed(seed, "align-queries"))
        self.queries = nn.Parameter(
            torch.empty(cfg.n_queries, d_model).normal_(0.0, 0.02, generator=gen))
        self.blocks = nn.ModuleList(
            DecoderBlock(d_model, cfg.n_heads) for _ in range(cfg.n_layers))
        self.ln_final = nn.LayerNorm(d_model)
        self.out = nn.Linear(d_model, cfg.d_feat)
        init_transformer_params(self.blocks, torch_generator(component_seed(seed, "align-blocks")))
        init_transformer_params(self.out, torch_generator(component_seed(seed, "align-out")))

    def forward(self, memory: torch.Tensor) -> torch.Tensor:
        """memory (B, T, d_model) -> predictions (B, N, d_feat); also accepts
        an unbatched (T, d_model) memory and returns (N, d_feat)."""
        unbatched = memory.ndim == 2
        if unbatched:
            memory = memory.unsqueeze(0)
        if memory.shape[2] != self.queries.shape[1]:
            raise ValueError(f"memory width {memory.shape[2]} does not match "
                             f"query width {self.queries.shape[1]}")
        x = self.queries.unsqueeze(0).expand(memory.shape[0], -1, -1)
        for block in self.blocks:
            x = block(x, memory)
        pred = self.out(self.ln_final(x))
        return pred.squeeze(0) if unbatched else pred


def alignment_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over every predicted feature entry."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {tuple(pred.shape)} does not match "
                         f"target shape {tuple(target.shape)}")
    return torch.mean((pred - target) ** 2)


def composite_loss(ce: torch.Tensor, align: torch.Tensor, alpha: float) -> torch.Tensor:
    """Weighted training objective: cross entropy plus alpha times alignment."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    for name, value in (("ce", ce), ("align", align)):
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise ValueError(f"{name} loss is not finite: {value}")
    return ce + alpha * align
