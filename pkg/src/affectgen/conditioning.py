"""Conditioning embedding: a learned text stub plus an encoded emotion row.

The text prompt is held fixed across the whole corpus, so its encoder
reduces to a single trainable matrix of stub rows. The emotion enters
through a small MLP over the normalized (valence, arousal) pair; its output
is appended as the final row of the conditioning matrix that the backbone
cross-attends to.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .affect import NormalizedEmotion
from .util import component_seed, init_transformer_params, torch_generator


@dataclass(frozen=True)
class ConditioningConfig:
    text_rows: int = 4
    hidden: int = 64

    def __post_init__(self) -> None:
        if self.text_rows < 1:
            raise ValueError(f"text_rows must be >= 1, got {self.text_rows}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")


class EmotionEncoder(nn.Module):
    """Two-layer MLP from the (v, a) pair to a model-width vector.

    tanh after the hidden layer only; the output layer stays linear so the
    embedding is unbounded like the text rows.
    """

    def __init__(self, d_model: int, hidden: int = 64, seed: int = 0) -> None:
        super().__init__()
        self.fc1 = nn.Linear(2, hidden)
        self.fc2 = nn.Linear(hidden, d_model)
        init_transformer_params(self, torch_generator(seed))

    def forward(self, av: torch.Tensor) -> torch.Tensor:
        if av.shape[-1] != 2:
            raise ValueError(f"emotion input must have last dim 2, got {tuple(av.shape)}")
        return self.fc2(torch.tanh(self.fc1(av)))


class ConditioningModule(nn.Module):
    """Builds the (text_rows + 1) x d_model conditioning matrix per clip."""

    def __init__(self, d_model: int, cfg: ConditioningConfig | None = None,
                 seed: int = 0) -> None:
        super().__init__()
        self.cfg = cfg or ConditioningConfig()
        self.d_model = d_model
        gen = torch_generator(component_seed(seed, "text-stub"))
        self.text_stub = nn.Parameter(
            torch.empty(self.cfg.text_rows, d_model).normal_(0.0, 0.02, generator=gen))
        self.av_encoder = EmotionEncoder(d_model, self.cfg.hidden,
                                         seed=component_seed(seed, "av-encoder"))

    @property
    def rows(self) -> int:
        return self.cfg.text_rows + 1

    def forward(self, av: torch.Tensor) -> torch.Tensor:
        """av: (B, 2) normalized emotions -> (B, text_rows + 1, d_model)."""
        if av.ndim != 2 or av.shape[1] != 2:
            raise ValueError(f"expected (B, 2) emotion batch, got {tuple(av.shape)}")
        emo = self.av_encoder(av).unsqueeze(1)
        stub = self.text_stub.unsqueeze(0).expand(av.shape[0], -1, -1)
        return torch.cat([stub, emo], dim=1)


def encode_emotion(n: NormalizedEmotion, encoder: EmotionEncoder) -> torch.Tensor:
    """Single-emotion forward pass, returns a (d_model,) vector."""
    dtype = encoder.fc1.weight.dtype
    av = torch.tensor([n.v_n, n.a_n], dtype=dtype)
    return encoder(av)


def build_conditioning(n: NormalizedEmotion, module: ConditioningModule) -> torch.Tensor:
    """Single-clip conditioning matrix: stub rows then the emotion row."""
    dtype = module.text_stub.dtype
    av = torch.tensor([[n.v_n, n.a_n]], dtype=dtype)
    return module(av).squeeze(0)
