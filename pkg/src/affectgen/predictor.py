"""Emotion predictor: frozen extractor features -> windowed regression head.

The trainable part is an MLP applied independently to each window feature
vector; per-window (valence, arousal) outputs are averaged into one clip
prediction. Training minimizes 1 - mean concordance between batch clip
predictions and annotations (an MSE variant is selectable), with the
extractor excluded from optimization by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .affect import EmotionPoint, NormalizedEmotion, denormalize_av, normalize_av
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import load_clip_tokens, load_manifest
from .extractor import FeatureExtractor, FeatureSequence, WindowConfig
from .metrics import ccc
from .util import component_seed, init_linear_default, torch_generator

logger = logging.getLogger(__name__)

HIDDEN_DIMS = (512, 256, 128)
LOSS_TYPES = ("ccc", "mse")

_STD_FLOOR = 1e-6


@dataclass(frozen=True)
class PredictorTrainConfig:
    seed: int = 0
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 64
    max_steps: int = 5000
    eval_every: int = 100
    patience: int = 10
    loss: str = "ccc"
    val_fraction: float = 1.0 / 6.0

    def __post_init__(self) -> None:
        if self.loss not in LOSS_TYPES:
            raise ValueError(f"loss must be one of {LOSS_TYPES}, got {self.loss!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.max_steps < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("max_steps, batch_size and eval_every must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")


class RegressionHead(nn.Module):
    """d_feat -> 512 -> 256 -> 128 -> 2 MLP, ReLU between hidden layers."""

    def __init__(self, d_feat: int, seed: int = 0) -> None:
        super().__init__()
        dims = (d_feat, *HIDDEN_DIMS, 2)
        self.layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1))
        gen = torch_generator(component_seed(seed, "regression-head"))
        for layer in self.layers:
            init_linear_default(layer, gen)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = F.relu(layer(x))
        return self.layers[-1](x)


@dataclass
class EmotionPrediction:
    """Per-window predictions plus their clip-level aggregate."""

    per_window: np.ndarray
    final: NormalizedEmotion
    final_raw: EmotionPoint


def pool_window(segment: np.ndarray) -> np.ndarray:
    """Temporal mean over a (W, d) window segment."""
    segment = np.asarray(segment)
    if segment.ndim != 2 or segment.shape[0] == 0:
        raise ValueError(f"segment must be a nonempty 2-D matrix, got shape "
                         f"{segment.shape}")
    return segment.mean(axis=0)


def predict_window(m_bar: np.ndarray, head: RegressionHead) -> tuple[float, float]:
    """One window feature vector -> normalized (valence, arousal)."""
    dtype = head.layers[0].weight.dtype
    with torch.no_grad():
        out = head(torch.as_tensor(np.asarray(m_bar), dtype=dtype))
    return float(out[0]), float(out[1])


def predict_clip(features: FeatureSequence | np.ndarray,
                 head: RegressionHead) -> EmotionPrediction:
    """Average of per-window predictions, clamped to [-1, 1] at clip level.

    Clamping applies only to the aggregate carried into the rating scale;
    ``per_window`` keeps the raw head outputs.
    """
    matrix = features.features if isinstance(features, FeatureSequence) else np.asarray(features)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError(f"need at least one window, got shape {matrix.shape}")
    dtype = head.layers[0].weight.dtype
    with torch.no_grad():
        per_window = head(torch.as_tensor(matrix, dtype=dtype)).numpy()
    mean = per_window.mean(axis=0)
    clamped = np.clip(mean, -1.0, 1.0)
    final = NormalizedEmotion(float(clamped[0]), float(clamped[1]))
    return EmotionPrediction(per_window=per_window, final=final,
                             final_raw=denormalize_av(final))


class EmotionPredictor:
    """Bundles the frozen extractor, feature standardization and the head."""

    def __init__(self, head: RegressionHead, extractor: FeatureExtractor,
                 feature_mean: np.ndarray, feature_std: np.ndarray,
                 loss_type: str = "ccc", seed: int = 0) -> None:
        self.head = head
        self.extractor = extractor
        self.feature_mean = np.asarray(feature_mean, dtype=np.float32)
        self.feature_std = np.asarray(feature_std, dtype=np.float32)
        self.loss_type = loss_type
        self.seed = seed

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return ((np.asarray(features) - self.feature_mean) /
                self.feature_std).astype(np.float32)

    def predict_features(self, features: FeatureSequence | np.ndarray) -> EmotionPrediction:
        matrix = features.features if isinstance(features, FeatureSequence) else features
        return predict_clip(self.standardize(matrix), self.head)

    def predict_tokens(self, tokens: np.ndarray) -> EmotionPrediction:
        return self.predict_features(self.extractor.extract(tokens))

    def save(self, path: Path) -> None:
        header = {
            "kind": "predictor",
            "seed": self.seed,
            "loss_type": self.loss_type,
            "extractor_seed": self.extractor.seed,
            "vocab_size": self.extractor.vocab_size,
            "d_feat": self.extractor.d_feat,
            "window": {"window_tokens": self.extractor.window.window_tokens,
                       "stride_tokens": self.extractor.window.stride_tokens},
        }
        tensors = {"stats/feature_mean": self.feature_mean,
                   "stats/feature_std": self.feature_std}
        for name, param in self.head.named_parameters():
            tensors[f"param/{name}"] = param.detach().numpy()
        save_checkpoint(path, header, tensors)

    @classmethod
    def load(cls, path: Path) -> "EmotionPredictor":
        header, tensors = load_checkpoint(path)
        if header.get("kind") != "predictor":
            raise ValueError(f"{path} is not a predictor checkpoint "
                             f"(kind={header.get('kind')!r})")
        window = WindowConfig(**header["window"])
        extractor = FeatureExtractor(header["vocab_size"], window,
                                     d_feat=header["d_feat"],
                                     seed=header["extractor_seed"])
        if extractor.seed != header["extractor_seed"]:
            raise ValueError(f"extractor seed drifted on rebuild: "
                             f"{extractor.seed} != {header['extractor_seed']}")
        head = RegressionHead(header["d_feat"])
        state = {}
        for name, param in head.named_parameters():
            key = f"param/{name}"
            if key not in tensors:
                raise ValueError(f"{path}: missing tensor {key!r}")
            if tuple(param.shape) != tensors[key].shape:
                raise ValueError(f"{path}: tensor {key!r} has shape "
                                 f"{tensors[key].shape}, expected {tuple(param.shape)}")
            state[name] = torch.from_numpy(tensors[key])
        head.load_state_dict(state)
        return cls(head, extractor,
                   feature_mean=tensors["stats/feature_mean"],
                   feature_std=tensors["stats/feature_std"],
                   loss_type=header["loss_type"], seed=header["seed"])


def _ccc_torch(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Differentiable concordance over one axis of a batch."""
    pm, tm = pred.mean(), target.mean()
    pv = ((pred - pm) ** 2).mean()
    tv = ((target - tm) ** 2).mean()
    cov = ((pred - pm) * (target - tm)).mean()
    return 2.0 * cov / (pv + tv + (pm - tm) ** 2)


def _clip_level(head: RegressionHead, feats: torch.Tensor) -> torch.Tensor:
    """(B, N, d) standardized features -> (B, 2) unclamped clip predictions."""
    return head(feats).mean(dim=1)


def train_predictor(manifest_path: Path, cfg: PredictorTrainConfig,
                    vocab_size: int, window: WindowConfig | None = None,
                    d_feat: int = 32, extractor_seed: int = 42,
                    ) -> tuple[EmotionPredictor, list[dict]]:
    """Train the regression head on a corpus manifest.

    Features are extracted once up front; standardization statistics come
    from the training split only. Early stopping tracks the validation mean
    per-axis concordance and restores the best parameters.
    """
    manifest_path = Path(manifest_path)
    records = load_manifest(manifest_path)
    all_tokens = [load_clip_tokens(manifest_path, r) for r in records]
    window = window or WindowConfig()
    extractor = FeatureExtractor(vocab_size, window, d_feat=d_feat, seed=extractor_seed)

    features = np.stack([extractor.extract(t).features for t in all_tokens])
    targets = np.array([[normalize_av(r.emotion).v_n, normalize_av(r.emotion).a_n]
                        for r in records])

    rng = np.random.default_rng(component_seed(cfg.seed, "predictor-data"))
    order = rng.permutation(len(records))
    n_val = max(1, round(cfg.val_fraction * len(records)))
    if n_val >= len(records):
        raise ValueError("validation split leaves no training clips")
    val_idx, train_idx = order[:n_val], order[n_val:]

    mean = features[train_idx].reshape(-1, d_feat).mean(axis=0).astype(np.float32)
    std = features[train_idx].reshape(-1, d_feat).std(axis=0).astype(np.float32)
    std = np.maximum(std, _STD_FLOOR)

    feats_t = torch.from_numpy(((features - mean) / std).astype(np.float32))
    targets_t = torch.from_numpy(targets.astype(np.float32))

    head = RegressionHead(d_feat, seed=cfg.seed)
    optimizer = torch.optim.AdamW(head.parameters(), lr=cfg.lr,
                                  weight_decay=cfg.weight_decay)
    batch_rng = np.random.default_rng(component_seed(cfg.seed, "predictor-batches"))

    def val_ccc() -> tuple[float, float]:
        with torch.no_grad():
            preds = _clip_level(head, feats_t[val_idx]).numpy()
        truth = targets[val_idx]
        return (float(ccc(truth[:, 0], preds[:, 0])),
                float(ccc(truth[:, 1], preds[:, 1])))

    best_score = -np.inf
    best_state = {k: v.clone() for k, v in head.state_dict().items()}
    stale = 0
    log: list[dict] = []
    for step in range(1, cfg.max_steps + 1):
        idx = batch_rng.integers(0, len(train_idx), size=cfg.batch_size)
        batch = train_idx[idx]
        target = targets_t[batch]
        if cfg.loss == "ccc" and (target[:, 0].var(unbiased=False) < 1e-12 or
                                  target[:, 1].var(unbiased=False) < 1e-12):
            logger.warning("skipping batch at step %d: constant targets under "
                           "concordance loss", step)
            continue
        pred = _clip_level(head, feats_t[batch])
        if cfg.loss == "ccc":
            loss = 1.0 - (_ccc_torch(pred[:, 0], target[:, 0]) +
                          _ccc_torch(pred[:, 1], target[:, 1])) / 2.0
        else:
            loss = F.mse_loss(pred, target)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite predictor loss at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        if step % cfg.eval_every == 0:
            ccc_v, ccc_a = val_ccc()
            score = (ccc_v + ccc_a) / 2.0
            log.append({"step": step, "loss": float(loss),
                        "val_ccc_v": ccc_v, "val_ccc_a": ccc_a})
            if score > best_score:
                best_score = score
                best_state = {k: v.clone() for k, v in head.state_dict().items()}
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    head.load_state_dict(best_state)
    predictor = EmotionPredictor(head, extractor, mean, std,
                                 loss_type=cfg.loss, seed=cfg.seed)
    return predictor, log
