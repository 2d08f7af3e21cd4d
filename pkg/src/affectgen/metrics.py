"""Objective evaluation: correlation metrics, Fréchet distance, benchmark loop.

All moment computations use population (1/n) normalization so the Pearson,
concordance and Fréchet numbers stay mutually consistent.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .affect import normalize_av
from .corpus import load_clip_tokens, load_manifest

logger = logging.getLogger(__name__)

REPORT_FIELDS = ("system_name", "fd", "r_a", "r_v", "r2_a", "r2_v",
                 "ccc_a", "ccc_v", "n_clips", "seed")
SCATTER_HEADER = ("clip_id", "v_true", "a_true", "v_pred", "a_pred")


def _as_pair(x, y, min_len: int = 2) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("inputs must be 1-D sequences")
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < min_len:
        raise ValueError(f"need at least {min_len} samples, got {len(x)}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("inputs contain non-finite values")
    return x, y


def pearson_r(x, y) -> float:
    """Population-moment Pearson correlation; errors on constant input."""
    x, y = _as_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    var_x = float(np.mean(xc * xc))
    var_y = float(np.mean(yc * yc))
    if var_x == 0.0 or var_y == 0.0:
        raise ValueError("pearson_r is undefined for zero-variance input")
    return float(np.mean(xc * yc) / np.sqrt(var_x * var_y))


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination; negative when worse than the mean baseline."""
    y_true, y_pred = _as_pair(y_true, y_pred)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r_squared is undefined for constant y_true")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def ccc(x, y) -> float:
    """Concordance correlation: 2*cov / (var_x + var_y + (mean_x - mean_y)^2)."""
    x, y = _as_pair(x, y)
    mx, my = x.mean(), y.mean()
    var_x = float(np.mean((x - mx) ** 2))
    var_y = float(np.mean((y - my) ** 2))
    if var_x == 0.0 or var_y == 0.0:
        raise ValueError("ccc is undefined for zero-variance input")
    cov = float(np.mean((x - mx) * (y - my)))
    return float(2.0 * cov / (var_x + var_y + (mx - my) ** 2))


def _fit_gaussian(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / len(x) + eps * np.eye(x.shape[1])
    return mu, cov


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(x, y, eps: float = 1e-6) -> float:
    """Fréchet distance between Gaussian fits of two feature sets.

    ||mu_x - mu_y||^2 + tr(S_x + S_y - 2 (S_x S_y)^{1/2}). Covariances are
    regularized with eps on the diagonal; the product is evaluated in its
    symmetric form sqrt(S_x) S_y sqrt(S_x) so the root eigenvalues are real,
    and they are clamped at zero, which keeps the result non-negative for
    rank-deficient sample sets.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("feature sets must be 2-D (n_samples, d)")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"feature dims differ: {x.shape[1]} vs {y.shape[1]}")
    if len(x) < 2 or len(y) < 2:
        raise ValueError("each feature set needs at least 2 samples")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("feature sets contain non-finite values")

    mu_x, cov_x = _fit_gaussian(x, eps)
    mu_y, cov_y = _fit_gaussian(y, eps)
    root_x = _psd_sqrt(cov_x)
    inner = root_x @ cov_y @ root_x
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    trace_cross = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = mu_x - mu_y
    value = float(diff @ diff + np.trace(cov_x) + np.trace(cov_y) - 2.0 * trace_cross)
    return max(value, 0.0)


@dataclass(frozen=True)
class MetricsReport:
    """Per-system benchmark numbers, serialized with exactly these keys."""

    system_name: str
    fd: float
    r_a: float
    r_v: float
    r2_a: float
    r2_v: float
    ccc_a: float
    ccc_v: float
    n_clips: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)

    def save_json(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        extra = set(data) - set(REPORT_FIELDS)
        missing = set(REPORT_FIELDS) - set(data)
        if extra or missing:
            raise ValueError(f"bad report fields: extra={sorted(extra)}, "
                             f"missing={sorted(missing)}")
        return cls(**data)

    @classmethod
    def load_json(cls, path: Path) -> "MetricsReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ScatterRow:
    """One evaluated clip: ground truth and prediction on the 1..9 scale."""

    clip_id: str
    v_true: float
    a_true: float
    v_pred: float
    a_pred: float


def write_scatter_csv(rows: list[ScatterRow], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCATTER_HEADER)
        for row in rows:
            writer.writerow([row.clip_id, row.v_true, row.a_true,
                             row.v_pred, row.a_pred])


def read_scatter_csv(path: Path) -> list[ScatterRow]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SCATTER_HEADER:
            raise ValueError(f"bad scatter header {header}")
        return [ScatterRow(r[0], float(r[1]), float(r[2]), float(r[3]), float(r[4]))
                for r in reader]


def _resolve_manifest(path: Path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return path


def evaluate_system(generated: Path, predictor, reference_manifest: Path,
                    eps: float = 1e-6, system_name: str = "system",
                    seed: int = 0) -> tuple[MetricsReport, list[ScatterRow]]:
    """Run the benchmark loop for one generation system.

    ``predictor`` must expose ``predict_tokens(tokens) -> EmotionPrediction``
    and an ``extractor``; the same extractor embeds both clip sets for the
    Fréchet term. Clips whose record or token file cannot be used are
    excluded with a logged count rather than failing the whole run.
    """
    gen_manifest = _resolve_manifest(generated)
    ref_manifest = _resolve_manifest(reference_manifest)
    extractor = predictor.extractor

    records = load_manifest(gen_manifest)
    declared = {r.extractor_seed for r in records if r.extractor_seed is not None}
    if declared and declared != {extractor.seed}:
        raise RuntimeError(
            f"extractor seed mismatch: generated clips declare {sorted(declared)} "
            f"but the predictor uses {extractor.seed}; feature spaces are not "
            "comparable")

    rows: list[ScatterRow] = []
    truths: list[tuple[float, float]] = []
    preds: list[tuple[float, float]] = []
    gen_means: list[np.ndarray] = []
    skipped = 0
    for record in records:
        try:
            tokens = load_clip_tokens(gen_manifest, record)
            prediction = predictor.predict_tokens(tokens)
        except (OSError, ValueError) as exc:
            logger.warning("skipping clip %s: %s", record.clip_id, exc)
            skipped += 1
            continue
        n_true = normalize_av(record.emotion)
        truths.append((n_true.v_n, n_true.a_n))
        preds.append((prediction.final.v_n, prediction.final.a_n))
        gen_means.append(extractor.clip_mean(tokens))
        rows.append(ScatterRow(
            clip_id=record.clip_id,
            v_true=record.emotion.valence,
            a_true=record.emotion.arousal,
            v_pred=prediction.final_raw.valence,
            a_pred=prediction.final_raw.arousal,
        ))
    if skipped:
        logger.warning("excluded %d of %d generated clips", skipped, len(records))
    if not rows:
        raise ValueError(f"no usable clips in {gen_manifest}; nothing to report")

    ref_means = [extractor.clip_mean(load_clip_tokens(ref_manifest, record))
                 for record in load_manifest(ref_manifest)]

    truth_arr = np.array(truths)
    pred_arr = np.array(preds)
    report = MetricsReport(
        system_name=system_name,
        fd=frechet_distance(np.array(gen_means), np.array(ref_means), eps=eps),
        r_a=pearson_r(truth_arr[:, 1], pred_arr[:, 1]),
        r_v=pearson_r(truth_arr[:, 0], pred_arr[:, 0]),
        r2_a=r_squared(truth_arr[:, 1], pred_arr[:, 1]),
        r2_v=r_squared(truth_arr[:, 0], pred_arr[:, 0]),
        ccc_a=ccc(truth_arr[:, 1], pred_arr[:, 1]),
        ccc_v=ccc(truth_arr[:, 0], pred_arr[:, 0]),
        n_clips=len(rows),
        seed=seed,
    )
    return report, rows
