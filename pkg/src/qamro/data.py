"""Dataset I/O (JSONL), train/validation splitting and the synthetic MOS generator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class RatedSample:
    clip_id: str
    system_id: str
    features: list[float]
    scores: dict[str, float]

    def to_json(self) -> str:
        obj = {
            "clip_id": self.clip_id,
            "system_id": self.system_id,
            "features": [float(v) for v in self.features],
            "scores": {k: float(self.scores[k]) for k in sorted(self.scores)},
        }
        return json.dumps(obj, allow_nan=False)


class DatasetError(ValueError):
    pass


def _parse_line(line: str, lineno: int, scale_min: float, scale_max: float) -> RatedSample:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetError(f"line {lineno}: malformed JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise DatasetError(f"line {lineno}: expected a JSON object")
    for key in ("clip_id", "system_id", "features", "scores"):
        if key not in obj:
            raise DatasetError(f"line {lineno}: missing field {key!r}")
    feats = obj["features"]
    if not isinstance(feats, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in feats
    ):
        raise DatasetError(f"line {lineno}: field 'features' must be a list of numbers")
    scores = obj["scores"]
    if not isinstance(scores, dict) or not scores:
        raise DatasetError(f"line {lineno}: field 'scores' must be a non-empty object")
    for name, v in scores.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise DatasetError(f"line {lineno}: field 'scores.{name}' is not a number")
        if not scale_min <= v <= scale_max:
            raise DatasetError(
                f"line {lineno}: field 'scores.{name}'={v} outside [{scale_min}, {scale_max}]"
            )
    return RatedSample(
        str(obj["clip_id"]),
        str(obj["system_id"]),
        [float(v) for v in feats],
        {k: float(v) for k, v in scores.items()},
    )


def load_dataset(path, scale_min: float = 1.0, scale_max: float = 5.0) -> list[RatedSample]:
    samples = []
    width = dims = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            s = _parse_line(line, lineno, scale_min, scale_max)
            if width is None:
                width, dims = len(s.features), set(s.scores)
            elif len(s.features) != width:
                raise DatasetError(
                    f"line {lineno}: field 'features' has length {len(s.features)}, expected {width}"
                )
            elif set(s.scores) != dims:
                raise DatasetError(f"line {lineno}: field 'scores' has dimensions {sorted(s.scores)}, expected {sorted(dims)}")
            samples.append(s)
    if not samples:
        raise DatasetError("empty dataset")
    return samples


def save_dataset(samples, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(s.to_json() + "\n")


def to_arrays(samples):
    """Return ``(X, Y, dim_names, system_ids)`` with ``Y`` shaped (n, n_dims)."""
    dims = sorted(samples[0].scores)
    X = np.array([s.features for s in samples], dtype=np.float64)
    Y = np.array([[s.scores[d] for d in dims] for s in samples], dtype=np.float64)
    return X, Y, dims, [s.system_id for s in samples]


def split_dataset(samples, val_fraction: float = 0.1, seed: int = 0, by_system: bool = False):
    """Deterministic split into (train, val).

    With ``by_system`` whole systems are held out; otherwise each system
    contributes ``round(val_fraction * n_clips)`` clips to validation.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    by_sys: dict[str, list[int]] = {}
    for k, s in enumerate(samples):
        by_sys.setdefault(s.system_id, []).append(k)
    systems = sorted(by_sys)
    val_idx: set[int] = set()
    if by_system:
        n_val = int(round(val_fraction * len(systems)))
        if n_val == 0 or n_val == len(systems):
            raise ValueError(
                f"by-system split of {len(systems)} systems at fraction {val_fraction} leaves a side empty"
            )
        for k in rng.permutation(len(systems))[:n_val]:
            val_idx.update(by_sys[systems[k]])
    else:
        for sid in systems:
            idx = by_sys[sid]
            n_val = int(round(val_fraction * len(idx)))
            perm = rng.permutation(len(idx))
            val_idx.update(idx[k] for k in perm[:n_val])
    train = [s for k, s in enumerate(samples) if k not in val_idx]
    val = [s for k, s in enumerate(samples) if k in val_idx]
    if not train or not val:
        raise ValueError("split leaves the train or validation side empty")
    return train, val


@dataclass
class SynthSpec:
    n_systems: int = 8
    clips_per_system: int = 25
    feature_dim: int = 16
    dimension_names: list[str] = field(default_factory=lambda: ["MI", "TA"])
    system_quality_spread: float = 2.4
    clip_noise_sd: float = 0.5
    signal_to_noise: float = 0.5
    seed: int = 0
    scale_min: float = 1.0
    scale_max: float = 5.0

    def __post_init__(self):
        if self.n_systems < 1 or self.clips_per_system < 1 or self.feature_dim < 1:
            raise ValueError("n_systems, clips_per_system and feature_dim must be >= 1")
        if not self.dimension_names or len(set(self.dimension_names)) != len(self.dimension_names):
            raise ValueError("dimension_names must be non-empty and unique")
        if self.system_quality_spread < 0 or self.clip_noise_sd < 0:
            raise ValueError("system_quality_spread and clip_noise_sd must be >= 0")
        if not 0 <= self.signal_to_noise <= 1:
            raise ValueError("signal_to_noise must be in [0, 1]")
        if not self.scale_min < self.scale_max:
            raise ValueError("scale_min must be < scale_max")

    def system_levels(self) -> np.ndarray:
        """Latent quality per system, evenly spaced around the scale midpoint."""
        mid = 0.5 * (self.scale_min + self.scale_max)
        if self.n_systems == 1:
            return np.array([mid])
        return mid + self.system_quality_spread * np.linspace(-0.5, 0.5, self.n_systems)


def generate_synthetic(spec: SynthSpec | None = None) -> list[RatedSample]:
    """Generate a seeded synthetic MOS dataset.

    Each dimension gets its own latent levels: the shared system ordering is
    shuffled per dimension except for the first one, which keeps system
    ``sys00`` worst and the last system best. A clip's true score is its
    system level plus Gaussian noise, clipped to the scale. Features are a
    fixed random linear embedding of the (centred) true scores, mixed with
    Gaussian distractor noise so that the informative part carries a
    ``signal_to_noise`` share of the feature variance.
    """
    spec = spec or SynthSpec()
    rng = np.random.default_rng(spec.seed)
    n_dims = len(spec.dimension_names)
    base = spec.system_levels()
    levels = np.empty((spec.n_systems, n_dims))
    levels[:, 0] = base
    for d in range(1, n_dims):
        levels[:, d] = base[rng.permutation(spec.n_systems)]

    n = spec.n_systems * spec.clips_per_system
    system_idx = np.repeat(np.arange(spec.n_systems), spec.clips_per_system)
    noise = rng.normal(0.0, 1.0, size=(n, n_dims)) * spec.clip_noise_sd
    scores = np.clip(levels[system_idx] + noise, spec.scale_min, spec.scale_max)

    # unit-variance embedding directions, one per dimension
    proj = rng.normal(0.0, 1.0, size=(n_dims, spec.feature_dim))
    proj /= np.linalg.norm(proj, axis=1, keepdims=True)
    centred = (scores - 0.5 * (spec.scale_min + spec.scale_max)) / (0.5 * (spec.scale_max - spec.scale_min))
    signal = centred @ proj * np.sqrt(spec.feature_dim)
    distract = rng.normal(0.0, 1.0, size=(n, spec.feature_dim))
    s2n = spec.signal_to_noise
    sig_sd = signal.std() if signal.std() > 0 else 1.0
    features = np.sqrt(s2n) * signal / sig_sd + np.sqrt(1.0 - s2n) * distract

    width = len(str(spec.n_systems - 1))
    samples = []
    for k in range(n):
        sid = f"sys{system_idx[k]:0{max(2, width)}d}"
        samples.append(RatedSample(
            clip_id=f"{sid}_clip{k % spec.clips_per_system:04d}",
            system_id=sid,
            features=features[k].tolist(),
            scores={name: float(scores[k, d]) for d, name in enumerate(spec.dimension_names)},
        ))
    return samples
