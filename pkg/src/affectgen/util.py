"""Seeding and parameter-initialization helpers shared by the torch modules."""

from __future__ import annotations

import zlib

import numpy as np
import torch


def component_seed(root: int, tag: str) -> int:
    """Derive a stable per-component seed from a root seed and a label.

    Keeping each component on its own stream means constructing or skipping
    one component never shifts the initialization of another.
    """
    return int(np.random.SeedSequence([root, zlib.crc32(tag.encode())]).generate_state(1)[0])


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def init_transformer_params(module: torch.nn.Module, gen: torch.Generator,
                            std: float = 0.02) -> None:
    """GPT-style init: normal(0, std) weights, zero biases, identity norms."""
    for m in module.modules():
        if isinstance(m, (torch.nn.Linear, torch.nn.Embedding)):
            m.weight.data.normal_(0.0, std, generator=gen)
            if getattr(m, "bias", None) is not None:
                m.bias.data.zero_()
        elif isinstance(m, torch.nn.LayerNorm):
            m.weight.data.fill_(1.0)
            m.bias.data.zero_()


def init_linear_default(linear: torch.nn.Linear, gen: torch.Generator) -> None:
    """Fan-in uniform init (the stock Linear scheme) from an explicit generator."""
    fan_in = linear.weight.shape[1]
    bound = 1.0 / fan_in ** 0.5
    linear.weight.data.uniform_(-bound, bound, generator=gen)
    if linear.bias is not None:
        linear.bias.data.uniform_(-bound, bound, generator=gen)
