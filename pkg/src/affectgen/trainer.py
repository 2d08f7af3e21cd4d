"""Generator training under the composite objective, with exact resume.

One optimization step samples a batch of clips, builds the conditioning from
each clip's annotation, runs the teacher-forced backbone, and combines next-
token cross entropy with the weighted alignment loss against standardized
frozen-extractor targets. Checkpoints carry parameters, optimizer moments,
the batch RNG state and a chained loss digest, so an interrupted run resumes
bit-identically to an uninterrupted one at a fixed thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .affect import normalize_av
from .align import AlignConfig, AlignmentHead, alignment_loss, composite_loss
from .backbone import BackboneConfig, BackboneLM, ce_loss
from .checkpoint import load_checkpoint, save_checkpoint
from .conditioning import ConditioningConfig, ConditioningModule
from .corpus import load_clip_tokens, load_manifest
from .extractor import FeatureExtractor, WindowConfig, window_count
from .util import component_seed

GRAD_CLIP = 1.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

CHECKPOINT_NAME = "generator.ckpt"
LOG_NAME = "train_log.jsonl"

_STD_FLOOR = 1e-6
_DIGEST_SEED = hashlib.sha256(b"loss-curve-v1").hexdigest()


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 100.0
    steps: int = 3000
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    eval_every: int = 250
    val_fraction: float = 0.1
    align_enabled: bool = True

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


class GeneratorSystem(nn.Module):
    """Conditioning module + backbone + optional alignment head.

    Each component initializes from its own stream derived from the root
    seed, so disabling the alignment head never shifts the other inits.
    """

    def __init__(self, backbone_cfg: BackboneConfig, cond_cfg: ConditioningConfig,
                 align_cfg: AlignConfig, seed: int = 0,
                 align_enabled: bool = True) -> None:
        super().__init__()
        self.backbone_cfg = backbone_cfg
        self.cond_cfg = cond_cfg
        self.align_cfg = align_cfg
        self.seed = seed
        self.conditioning = ConditioningModule(backbone_cfg.d_model, cond_cfg, seed=seed)
        self.backbone = BackboneLM(backbone_cfg, seed=seed)
        self.align_head = (AlignmentHead(align_cfg, backbone_cfg.d_model, seed=seed)
                           if align_enabled else None)

    @property
    def align_enabled(self) -> bool:
        return self.align_head is not None


def teacher_forced_batch(tokens: torch.Tensor, start_token: int
                         ) -> tuple[torch.Tensor, torch.Tensor]:
    """Shift a (B, T) clip batch into model inputs and next-token targets.

    Inputs are the start symbol followed by all but the last token; targets
    are the clip itself, so the logits row that consumed token t is always
    scored against token t+1 (with the start symbol playing token 0).
    """
    if tokens.ndim != 2:
        raise ValueError(f"expected (B, T) token batch, got {tuple(tokens.shape)}")
    start = torch.full((tokens.shape[0], 1), start_token, dtype=tokens.dtype)
    return torch.cat([start, tokens[:, :-1]], dim=1), tokens


class _TrainData:
    """Corpus tensors plus the frozen alignment targets, loaded once."""

    def __init__(self, manifest_path: Path, backbone_cfg: BackboneConfig,
                 window: WindowConfig, d_feat: int, extractor_seed: int,
                 cfg: TrainConfig,
                 stats: tuple[np.ndarray, np.ndarray] | None = None) -> None:
        manifest_path = Path(manifest_path)
        records = load_manifest(manifest_path)
        tokens = np.stack([load_clip_tokens(manifest_path, r) for r in records])
        if tokens.max() >= backbone_cfg.vocab_size or tokens.min() < 0:
            raise ValueError("corpus tokens outside the backbone vocabulary "
                             f"[0, {backbone_cfg.vocab_size})")
        if tokens.shape[1] > backbone_cfg.max_len:
            raise ValueError(f"clip length {tokens.shape[1]} exceeds backbone "
                             f"max_len {backbone_cfg.max_len}")
        self.n_clips, self.clip_len = tokens.shape

        self.extractor = FeatureExtractor(backbone_cfg.vocab_size, window,
                                          d_feat=d_feat, seed=extractor_seed)
        features = np.stack([self.extractor.extract(t).features for t in tokens])

        av = np.array([[n.v_n, n.a_n]
                       for n in (normalize_av(r.emotion) for r in records)])
        split_rng = np.random.default_rng(component_seed(cfg.seed, "train-split"))
        order = split_rng.permutation(self.n_clips)
        n_val = round(cfg.val_fraction * self.n_clips)
        if self.n_clips - n_val < 1:
            raise ValueError("validation split leaves no training clips")
        self.val_idx = order[:n_val]
        self.train_idx = order[n_val:]

        if stats is None:
            train_feats = features[self.train_idx].reshape(-1, d_feat)
            mean = train_feats.mean(axis=0).astype(np.float32)
            std = np.maximum(train_feats.std(axis=0), _STD_FLOOR).astype(np.float32)
        else:
            mean, std = stats
        self.feature_mean = mean
        self.feature_std = std

        tokens_t = torch.from_numpy(tokens)
        self.inputs, self.targets = teacher_forced_batch(tokens_t, backbone_cfg.vocab_size)
        self.av = torch.from_numpy(av.astype(np.float32))
        self.align_targets = torch.from_numpy(
            ((features - mean) / std).astype(np.float32))


def batch_losses(system: GeneratorSystem, data: _TrainData, idx: torch.Tensor,
                 ) -> tuple[torch.Tensor, torch.Tensor]:
    """Cross entropy and raw alignment MSE for the given clip indices."""
    cond = system.conditioning(data.av[idx])
    logits, hidden = system.backbone(data.inputs[idx], cond)
    ce = ce_loss(logits, data.targets[idx])
    if system.align_head is None:
        return ce, torch.zeros(())
    predicted = system.align_head(hidden)
    return ce, alignment_loss(predicted, data.align_targets[idx])


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    records: list[dict]
    system: GeneratorSystem


class _Trainer:
    def __init__(self, system: GeneratorSystem, data: _TrainData, cfg: TrainConfig,
                 window: WindowConfig, extractor_seed: int, out_dir: Path) -> None:
        self.system = system
        self.data = data
        self.cfg = cfg
        self.window = window
        self.extractor_seed = extractor_seed
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.optimizer = torch.optim.AdamW(system.parameters(), lr=cfg.lr,
                                           weight_decay=cfg.weight_decay,
                                           betas=ADAM_BETAS, eps=ADAM_EPS)
        self.batch_rng = np.random.default_rng(component_seed(cfg.seed, "batches"))
        self.step = 0
        self.digest = _DIGEST_SEED

    # -- checkpoint plumbing ------------------------------------------------

    def _header(self) -> dict:
        return {
            "kind": "generator",
            "step": self.step,
            "adam_step": self.step,
            "train": asdict(self.cfg),
            "backbone": asdict(self.system.backbone_cfg),
            "conditioning": asdict(self.system.cond_cfg),
            "align": asdict(self.system.align_cfg),
            "window": asdict(self.window),
            "extractor_seed": self.extractor_seed,
            "n_clips": self.data.n_clips,
            "clip_len": self.data.clip_len,
            "rng_state": self.batch_rng.bit_generator.state,
            "loss_digest": self.digest,
        }

    def save(self) -> Path:
        tensors: dict[str, np.ndarray] = {
            "stats/feature_mean": self.data.feature_mean,
            "stats/feature_std": self.data.feature_std,
        }
        opt_state = self.optimizer.state_dict()["state"]
        for i, (name, param) in enumerate(self.system.named_parameters()):
            tensors[f"param/{name}"] = param.detach().numpy()
            if i in opt_state:
                tensors[f"adam_m/{name}"] = opt_state[i]["exp_avg"].numpy()
                tensors[f"adam_v/{name}"] = opt_state[i]["exp_avg_sq"].numpy()
            else:
                tensors[f"adam_m/{name}"] = np.zeros(param.shape, dtype=np.float32)
                tensors[f"adam_v/{name}"] = np.zeros(param.shape, dtype=np.float32)
        path = self.out_dir / CHECKPOINT_NAME
        save_checkpoint(path, self._header(), tensors)
        return path

    def _restore_optimizer(self, tensors: dict[str, np.ndarray], adam_step: int) -> None:
        if adam_step == 0:
            return
        state = {}
        for i, (name, param) in enumerate(self.system.named_parameters()):
            for prefix in ("adam_m", "adam_v"):
                key = f"{prefix}/{name}"
                if key not in tensors:
                    raise ValueError(f"checkpoint missing optimizer tensor {key!r}")
                if tensors[key].shape != tuple(param.shape):
                    raise ValueError(f"optimizer tensor {key!r} has shape "
                                     f"{tensors[key].shape}, expected {tuple(param.shape)}")
            state[i] = {
                "step": torch.tensor(float(adam_step)),
                "exp_avg": torch.from_numpy(tensors[f"adam_m/{name}"]).clone(),
                "exp_avg_sq": torch.from_numpy(tensors[f"adam_v/{name}"]).clone(),
            }
        groups = self.optimizer.state_dict()["param_groups"]
        self.optimizer.load_state_dict({"state": state, "param_groups": groups})

    # -- optimization -------------------------------------------------------

    def _validation_losses(self) -> tuple[float, float]:
        total_ce = 0.0
        total_align = 0.0
        count = 0
        with torch.no_grad():
            for lo in range(0, len(self.data.val_idx), self.cfg.batch_size):
                idx = torch.from_numpy(self.data.val_idx[lo:lo + self.cfg.batch_size])
                ce, align = batch_losses(self.system, self.data, idx)
                total_ce += float(ce) * len(idx)
                total_align += float(align) * len(idx)
                count += len(idx)
        return total_ce / count, total_align / count

    def _chain_digest(self, record: dict) -> None:
        core = {k: record[k] for k in ("step", "ce", "align", "total")}
        payload = self.digest + json.dumps(core, sort_keys=True)
        self.digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def run(self, n_steps: int) -> list[dict]:
        records: list[dict] = []
        log_path = self.out_dir / LOG_NAME
        with log_path.open("a", encoding="utf-8") as log:
            for _ in range(n_steps):
                self.step += 1
                draw = self.batch_rng.integers(0, len(self.data.train_idx),
                                               size=self.cfg.batch_size)
                batch = torch.from_numpy(self.data.train_idx[draw])
                ce, align = batch_losses(self.system, self.data, batch)
                ce_val, align_val = float(ce.detach()), float(align.detach())
                for name, value in (("cross-entropy", ce_val), ("alignment", align_val)):
                    if not math.isfinite(value):
                        raise RuntimeError(f"non-finite {name} loss at step "
                                           f"{self.step}")
                total = composite_loss(ce, align, self.cfg.alpha
                                       ) if self.system.align_enabled else ce
                self.optimizer.zero_grad()
                total.backward()
                torch.nn.utils.clip_grad_norm_(self.system.parameters(), GRAD_CLIP)
                self.optimizer.step()

                record = {"step": self.step, "ce": ce_val, "align": align_val,
                          "total": float(total.detach()), "alpha": self.cfg.alpha}
                self._chain_digest(record)
                if self.step % self.cfg.eval_every == 0:
                    if len(self.data.val_idx):
                        val_ce, val_align = self._validation_losses()
                        record["val_ce"] = val_ce
                        record["val_align"] = val_align
                    self.save()
                records.append(record)
                log.write(json.dumps(record) + "\n")
                if self.step % self.cfg.eval_every == 0:
                    log.flush()
        return records


def _check_geometry(align_cfg: AlignConfig, clip_len: int, window: WindowConfig,
                    align_enabled: bool) -> None:
    if not align_enabled:
        return
    n = window_count(clip_len, window.window_tokens, window.stride_tokens)
    if align_cfg.n_queries != n:
        raise ValueError(f"n_queries ({align_cfg.n_queries}) must equal the "
                         f"per-clip window count ({n}) for clip_len {clip_len}")


def train_generator(manifest_path: Path, out_dir: Path,
                    cfg: TrainConfig | None = None,
                    backbone_cfg: BackboneConfig | None = None,
                    cond_cfg: ConditioningConfig | None = None,
                    align_cfg: AlignConfig | None = None,
                    window: WindowConfig | None = None,
                    extractor_seed: int = 42) -> TrainResult:
    """Train a fresh generator for ``cfg.steps`` steps; returns the artifacts."""
    cfg = cfg or TrainConfig()
    backbone_cfg = backbone_cfg or BackboneConfig()
    cond_cfg = cond_cfg or ConditioningConfig()
    align_cfg = align_cfg or AlignConfig()
    window = window or WindowConfig()

    data = _TrainData(manifest_path, backbone_cfg, window, align_cfg.d_feat,
                      extractor_seed, cfg)
    _check_geometry(align_cfg, data.clip_len, window, cfg.align_enabled)
    system = GeneratorSystem(backbone_cfg, cond_cfg, align_cfg, seed=cfg.seed,
                             align_enabled=cfg.align_enabled)
    trainer = _Trainer(system, data, cfg, window, data.extractor.seed, out_dir)
    records = trainer.run(cfg.steps)
    path = trainer.save()
    return TrainResult(path, trainer.out_dir / LOG_NAME, records, system)


def load_generator(checkpoint_path: Path) -> tuple[GeneratorSystem, dict]:
    """Rebuild a generator system from a checkpoint; returns (system, header)."""
    header, tensors = load_checkpoint(checkpoint_path)
    if header.get("kind") != "generator":
        raise ValueError(f"{checkpoint_path} is not a generator checkpoint "
                         f"(kind={header.get('kind')!r})")
    cfg = TrainConfig(**header["train"])
    system = GeneratorSystem(BackboneConfig(**header["backbone"]),
                             ConditioningConfig(**header["conditioning"]),
                             AlignConfig(**header["align"]),
                             seed=cfg.seed, align_enabled=cfg.align_enabled)
    with torch.no_grad():
        for name, param in system.named_parameters():
            key = f"param/{name}"
            if key not in tensors:
                raise ValueError(f"{checkpoint_path}: missing tensor {key!r}")
            if tensors[key].shape != tuple(param.shape):
                raise ValueError(f"{checkpoint_path}: tensor {key!r} has shape "
                                 f"{tensors[key].shape}, expected {tuple(param.shape)}")
            param.copy_(torch.from_numpy(tensors[key]))
    return system, header


def resume(checkpoint_path: Path, manifest_path: Path, extra_steps: int,
           out_dir: Path | None = None) -> TrainResult:
    """Continue training from a checkpoint, bit-identically to a longer run."""
    if extra_steps < 0:
        raise ValueError(f"extra_steps must be >= 0, got {extra_steps}")
    checkpoint_path = Path(checkpoint_path)
    header, tensors = load_checkpoint(checkpoint_path)
    system, header = load_generator(checkpoint_path)
    # steps tracks the lineage total, so a resumed run saves the same header
    # an uninterrupted run of the combined length would.
    cfg = TrainConfig(**{**header["train"],
                         "steps": header["step"] + extra_steps})
    window = WindowConfig(**header["window"])

    stats = (tensors["stats/feature_mean"], tensors["stats/feature_std"])
    data = _TrainData(manifest_path, system.backbone_cfg, window,
                      system.align_cfg.d_feat, header["extractor_seed"], cfg,
                      stats=stats)
    if data.n_clips != header["n_clips"] or data.clip_len != header["clip_len"]:
        raise ValueError(f"corpus shape ({data.n_clips} x {data.clip_len}) does "
                         f"not match the checkpoint ({header['n_clips']} x "
                         f"{header['clip_len']})")
    _check_geometry(system.align_cfg, data.clip_len, window, cfg.align_enabled)

    trainer = _Trainer(system, data, cfg, window, header["extractor_seed"],
                       out_dir or checkpoint_path.parent)
    trainer.step = header["step"]
    trainer.digest = header["loss_digest"]
    trainer._restore_optimizer(tensors, header["adam_step"])
    bit_gen = np.random.PCG64()
    bit_gen.state = header["rng_state"]
    trainer.batch_rng = np.random.Generator(bit_gen)

    records = trainer.run(extra_steps)
    path = trainer.save()
    return TrainResult(path, trainer.out_dir / LOG_NAME, records, system)
