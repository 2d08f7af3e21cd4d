"""Synthetic token corpus with a planted emotion-to-statistics mapping.

Each clip is a first-order switching process over an integer vocabulary:
arousal sets the probability that a step redraws its token instead of
repeating the previous one, and valence sets the probability that a fresh
draw lands in the high half of the vocabulary. Both planted quantities are
linear in the normalized emotion, so they can be estimated back from raw
tokens and compared against the conditioning ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .affect import EmotionPoint, grid_points, normalize_av

SWITCH_FLOOR = 0.05
SWITCH_SPAN = 0.45

EMOTION_SAMPLING_MODES = ("uniform_continuous", "uniform_grid")

MANIFEST_NAME = "manifest.jsonl"
TOKENS_SUBDIR = "tokens"


@dataclass(frozen=True)
class CorpusSpec:
    """Parameters of a synthetic corpus build."""

    n_clips: int
    seed: int
    vocab_size: int = 256
    clip_len: int = 256
    emotion_sampling: str = "uniform_continuous"

    def __post_init__(self) -> None:
        if self.vocab_size < 4 or self.vocab_size % 2 != 0:
            raise ValueError(f"vocab_size must be even and >= 4, got {self.vocab_size}")
        if self.vocab_size > 65536:
            raise ValueError("vocab_size must fit 16-bit token files, got "
                             f"{self.vocab_size}")
        if self.clip_len < 2:
            raise ValueError(f"clip_len must be >= 2, got {self.clip_len}")
        if self.n_clips < 1:
            raise ValueError(f"n_clips must be >= 1, got {self.n_clips}")
        if self.emotion_sampling not in EMOTION_SAMPLING_MODES:
            raise ValueError(
                f"emotion_sampling must be one of {EMOTION_SAMPLING_MODES}, "
                f"got {self.emotion_sampling!r}")


@dataclass(frozen=True)
class ClipRecord:
    """One manifest row: a clip id, its annotation and its token file."""

    clip_id: str
    emotion: EmotionPoint
    tokens: str
    seed: int
    extractor_seed: int | None = None


def switch_probability(a_n: float) -> float:
    """Planted per-step redraw probability as a function of normalized arousal."""
    return SWITCH_FLOOR + SWITCH_SPAN * (a_n + 1.0) / 2.0


def high_half_probability(v_n: float) -> float:
    """Planted high-half probability of a fresh draw, from normalized valence."""
    return (v_n + 1.0) / 2.0


def sample_clip(emotion: EmotionPoint, spec: CorpusSpec, seed: int) -> np.ndarray:
    """Draw one token clip whose statistics encode the given emotion.

    The first token is always a fresh draw; every later step redraws with the
    planted switch probability and otherwise repeats its predecessor. A fresh
    draw picks the high half of the vocabulary with the planted high-half
    probability and is uniform within the chosen half. All randomness comes
    from one generator seeded with ``seed``; the pre-draw layout below is
    part of the determinism contract.
    """
    n = normalize_av(emotion)
    p_switch = switch_probability(n.a_n)
    p_high = high_half_probability(n.v_n)
    half = spec.vocab_size // 2
    t = spec.clip_len

    rng = np.random.default_rng(seed)
    switch_u = rng.random(t - 1)
    half_u = rng.random(t)
    offsets = rng.integers(0, half, size=t)

    fresh = np.empty(t, dtype=bool)
    fresh[0] = True
    fresh[1:] = switch_u < p_switch
    fresh_values = np.where(half_u < p_high, half, 0) + offsets

    source = np.where(fresh, np.arange(t), 0)
    np.maximum.accumulate(source, out=source)
    return fresh_values[source].astype(np.int64)


def estimate_normalized_emotion(tokens: np.ndarray, vocab_size: int) -> tuple[float, float]:
    """Invert the planted mapping from raw tokens.

    Returns estimated (v_n, a_n). The arousal estimate is clamped to [-1, 1]
    because the observed switch rate is a noisy binomial proportion.
    """
    tokens = np.asarray(tokens)
    fraction_high = float(np.mean(tokens >= vocab_size // 2))
    switch_rate = float(np.mean(tokens[1:] != tokens[:-1]))
    v_n = 2.0 * fraction_high - 1.0
    a_n = 2.0 * (switch_rate - SWITCH_FLOOR) / SWITCH_SPAN - 1.0
    return v_n, float(np.clip(a_n, -1.0, 1.0))


def write_tokens(path: Path, tokens: np.ndarray, vocab_size: int) -> None:
    """Write a token file: little-endian unsigned 16-bit values, no header."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 1:
        raise ValueError(f"token array must be 1-D, got shape {tokens.shape}")
    if tokens.min() < 0 or tokens.max() >= vocab_size:
        raise ValueError("token values outside vocabulary range "
                         f"[0, {vocab_size})")
    path.write_bytes(tokens.astype("<u2").tobytes())


def read_tokens(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) % 2 != 0:
        raise ValueError(f"token file {path} has odd byte length {len(data)}")
    return np.frombuffer(data, dtype="<u2").astype(np.int64)


def _sample_emotions(spec: CorpusSpec, entropy: np.random.SeedSequence) -> list[EmotionPoint]:
    if spec.emotion_sampling == "uniform_grid":
        grid = grid_points()
        return [EmotionPoint(float(grid[i % len(grid)].valence),
                             float(grid[i % len(grid)].arousal))
                for i in range(spec.n_clips)]
    rng = np.random.default_rng(entropy)
    values = rng.uniform(1.0, 9.0, size=(spec.n_clips, 2))
    return [EmotionPoint(float(v), float(a)) for v, a in values]


def generate_corpus(spec: CorpusSpec, out_dir: Path) -> Path:
    """Write one token file per clip plus a JSON-lines manifest.

    Per-clip seeds and emotions derive deterministically from ``spec.seed``,
    so identical specs produce byte-identical corpora. Returns the manifest
    path.
    """
    out_dir = Path(out_dir)
    tokens_dir = out_dir / TOKENS_SUBDIR
    try:
        tokens_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {tokens_dir}: {exc}") from exc

    root = np.random.SeedSequence(spec.seed)
    emotion_entropy, clip_entropy = root.spawn(2)
    emotions = _sample_emotions(spec, emotion_entropy)
    clip_seeds = clip_entropy.generate_state(spec.n_clips)

    manifest_path = out_dir / MANIFEST_NAME
    width = max(5, len(str(spec.n_clips - 1)))
    with manifest_path.open("w", encoding="utf-8") as fh:
        for i, emotion in enumerate(emotions):
            clip_id = f"clip_{i:0{width}d}"
            rel = f"{TOKENS_SUBDIR}/{clip_id}.bin"
            seed = int(clip_seeds[i])
            tokens = sample_clip(emotion, spec, seed)
            write_tokens(out_dir / rel, tokens, spec.vocab_size)
            fh.write(json.dumps({
                "clip_id": clip_id,
                "valence": emotion.valence,
                "arousal": emotion.arousal,
                "tokens": rel,
                "seed": seed,
            }) + "\n")
    return manifest_path


def load_manifest(path: Path) -> list[ClipRecord]:
    """Parse a JSON-lines manifest; clip ids must be unique."""
    path = Path(path)
    records: list[ClipRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                record = ClipRecord(
                    clip_id=row["clip_id"],
                    emotion=EmotionPoint(float(row["valence"]), float(row["arousal"])),
                    tokens=row["tokens"],
                    seed=int(row["seed"]),
                    extractor_seed=(int(row["extractor_seed"])
                                    if row.get("extractor_seed") is not None else None),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"bad manifest record at {path}:{lineno}: {exc}") from exc
            if record.clip_id in seen:
                raise ValueError(f"duplicate clip_id {record.clip_id!r} in {path}")
            seen.add(record.clip_id)
            records.append(record)
    if not records:
        raise ValueError(f"manifest {path} contains no records")
    return records


def load_clip_tokens(manifest_path: Path, record: ClipRecord) -> np.ndarray:
    return read_tokens(Path(manifest_path).parent / record.tokens)


def validate_corpus(manifest_path: Path, spec: CorpusSpec) -> None:
    """Check every manifest record's token file against the spec invariants."""
    for record in load_manifest(manifest_path):
        tokens = load_clip_tokens(manifest_path, record)
        if len(tokens) != spec.clip_len:
            raise ValueError(f"{record.clip_id}: expected {spec.clip_len} tokens, "
                             f"found {len(tokens)}")
        if tokens.min() < 0 or tokens.max() >= spec.vocab_size:
            raise ValueError(f"{record.clip_id}: token values outside "
                             f"[0, {spec.vocab_size})")
