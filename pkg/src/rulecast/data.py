"""Datasets, synthetic switching-Gaussian generation, text featurization,
and the TSV/key-value file formats.

All randomness goes through numpy's counter-based Philox generator so that
identical seeds reproduce identical datasets across platforms.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PROVENANCES = ("train-distr", "test-distr", "mixed", "external")

_MASK63 = (1 << 63) - 1


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(base: int, *parts: int) -> int:
    """Stable arithmetic fold used to give sub-tasks independent streams."""
    s = base & _MASK63
    for p in parts:
        s = (s * 1_000_003 + p + 12_345) & _MASK63
    return s


class DataFormatError(ValueError):
    """Malformed dataset file; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class Sample:
    """One example: numeric features and/or raw text, optionally labeled."""

    id: str
    features: np.ndarray | None = None
    text: str | None = None
    label: int | None = None

    def __post_init__(self):
        if self.features is None and self.text is None:
            raise ValueError(f"sample {self.id!r} needs features or text")
        if self.features is not None:
            arr = np.asarray(self.features, dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, "features", arr)
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"sample {self.id!r} label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable ordered collection of samples with a shared feature dimension."""

    samples: tuple[Sample, ...]
    dimension: int | None
    provenance: str = "external"

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], provenance: str = "external") -> "Dataset":
        samples = tuple(samples)
        seen: set[str] = set()
        dimension: int | None = None
        for s in samples:
            if s.id in seen:
                raise ValueError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if s.features is not None:
                if dimension is None:
                    dimension = int(s.features.shape[0])
                elif s.features.shape[0] != dimension:
                    raise ValueError(
                        f"sample {s.id!r} has dimension {s.features.shape[0]}, expected {dimension}"
                    )
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        return cls(samples=samples, dimension=dimension, provenance=provenance)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def feature_matrix(self) -> np.ndarray:
        rows = []
        for s in self.samples:
            if s.features is None:
                raise ValueError(f"sample {s.id!r} has no features")
            rows.append(s.features)
        return np.asarray(rows, dtype=np.float64)

    def label_vector(self) -> np.ndarray:
        labels = []
        for s in self.samples:
            if s.label is None:
                raise ValueError(f"sample {s.id!r} is unlabeled")
            labels.append(s.label)
        return np.asarray(labels, dtype=np.int64)


def concat(a: Dataset, b: Dataset, provenance: str = "mixed") -> Dataset:
    if a.dimension is not None and b.dimension is not None and a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    return Dataset.from_samples(a.samples + b.samples, provenance)


@dataclass(frozen=True)
class SwitchingGaussianSpec:
    """Two Gaussian clusters per class whose positions swap between the
    training and testing distributions."""

    mu1: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))
    mu2: np.ndarray = field(default_factory=lambda: np.array([6.0, 0.0]))
    mu1_prime: np.ndarray = field(default_factory=lambda: np.array([6.0, 6.0]))
    mu2_prime: np.ndarray = field(default_factory=lambda: np.array([0.0, 6.0]))
    sigma1: np.ndarray = field(default_factory=lambda: np.eye(2))
    sigma2: np.ndarray = field(default_factory=lambda: np.eye(2))
    sigma1_prime: np.ndarray = field(default_factory=lambda: np.eye(2))
    sigma2_prime: np.ndarray = field(default_factory=lambda: np.eye(2))
    n_per_cluster: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_per_cluster < 1:
            raise ValueError("n_per_cluster must be >= 1")
        for name in ("mu1", "mu2", "mu1_prime", "mu2_prime"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        for name in ("sigma1", "sigma2", "sigma1_prime", "sigma2_prime"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))


def _cholesky_spd(sigma: np.ndarray, name: str) -> np.ndarray:
    if sigma.shape != (2, 2) or not np.allclose(sigma, sigma.T):
        raise ValueError(f"{name} must be a symmetric 2x2 matrix")
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


def generate_switching(spec: SwitchingGaussianSpec) -> tuple[Dataset, Dataset]:
    """Draw the train and test splits; each has exactly n_per_cluster
    samples per class (class 1 first)."""
    rng = rng_from_seed(spec.seed)
    n = spec.n_per_cluster

    def draw(mu: np.ndarray, sigma: np.ndarray, name: str) -> np.ndarray:
        chol = _cholesky_spd(sigma, name)
        z = rng.standard_normal((n, 2))
        return mu + z @ chol.T

    clusters = [
        ("train", 1, draw(spec.mu1, spec.sigma1, "sigma1")),
        ("train", 0, draw(spec.mu2, spec.sigma2, "sigma2")),
        ("test", 1, draw(spec.mu1_prime, spec.sigma1_prime, "sigma1_prime")),
        ("test", 0, draw(spec.mu2_prime, spec.sigma2_prime, "sigma2_prime")),
    ]
    splits: dict[str, list[Sample]] = {"train": [], "test": []}
    for split, label, points in clusters:
        offset = len(splits[split])
        for i, row in enumerate(points):
            splits[split].append(Sample(id=f"{split}-{offset + i:04d}", features=row, label=label))
    train = Dataset.from_samples(splits["train"], "train-distr")
    test = Dataset.from_samples(splits["test"], "test-distr")
    return train, test


def mix(a: Dataset, b: Dataset | None, fraction: float, seed: int) -> Dataset:
    """Uniform sample without replacement of ceil(fraction * total) items
    from the concatenation of ``a`` and ``b`` (``b`` may be None)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    if b is not None and a.dimension is not None and b.dimension is not None \
            and a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    pool = a.samples + (b.samples if b is not None else ())
    k = math.ceil(fraction * len(pool))
    rng = rng_from_seed(seed)
    order = rng.permutation(len(pool))[:k]
    return Dataset.from_samples((pool[i] for i in order), "mixed")


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _U64
    return h


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class FeaturizerConfig:
    """Hashed bag-of-words settings; dimension must be a power of two."""

    dimension: int = 2 ** 14
    weighting: str = "binary"  # binary | term-frequency

    def __post_init__(self):
        if self.dimension < 1 or self.dimension & (self.dimension - 1):
            raise ValueError(f"dimension must be a power of two, got {self.dimension}")
        if self.weighting not in ("binary", "term-frequency"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


def featurize_text(corpus: Dataset, config: FeaturizerConfig | None = None) -> Dataset:
    """Hash each token (FNV-1a 64-bit, mod dimension) into a dense vector.

    The raw text is kept on the output samples so text predicates still
    apply after featurization.
    """
    config = config or FeaturizerConfig()
    out: list[Sample] = []
    for s in corpus.samples:
        if s.text is None:
            raise ValueError(f"sample {s.id!r} has no text to featurize")
        vec = np.zeros(config.dimension, dtype=np.float64)
        for token in tokenize(s.text):
            bucket = fnv1a_64(token.encode("utf-8")) % config.dimension
            if config.weighting == "binary":
                vec[bucket] = 1.0
            else:
                vec[bucket] += 1.0
        out.append(Sample(id=s.id, features=vec, text=s.text, label=s.label))
    return Dataset.from_samples(out, corpus.provenance)


def load_tsv(path: str | Path) -> Dataset:
    """Read ``label<TAB>text`` or ``label<TAB>f0,f1,...`` lines.

    The first data line fixes the mode (text vs features); every later line
    must agree, and feature rows must share one dimension.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from None
    samples: list[Sample] = []
    mode: str | None = None
    dimension: int | None = None
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected label<TAB>payload")
        label_text, payload = line.split("\t", 1)
        if label_text not in ("0", "1"):
            raise DataFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label_text!r}")
        label = int(label_text)
        values = _try_parse_floats(payload)
        kind = "features" if values is not None else "text"
        if mode is None:
            mode = kind
        elif kind != mode:
            raise DataFormatError(f"{path}:{lineno}: {kind} row in a {mode} file")
        if mode == "features":
            assert values is not None
            if dimension is None:
                dimension = len(values)
            elif len(values) != dimension:
                raise DataFormatError(
                    f"{path}:{lineno}: ragged row has {len(values)} features, expected {dimension}"
                )
            samples.append(Sample(id=f"row-{lineno:05d}", features=np.array(values), label=label))
        else:
            samples.append(Sample(id=f"row-{lineno:05d}", text=payload, label=label))
    return Dataset.from_samples(samples, "external")


def _try_parse_floats(payload: str) -> list[float] | None:
    parts = payload.split(",")
    values = []
    for part in parts:
        part = part.strip()
        if not part:
            return None
        try:
            values.append(float(part))
        except ValueError:
            return None
    return values


def read_keyvalue(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file; '#' starts a comment."""
    result: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataFormatError(f"{path}:{lineno}: expected key = value")
        key, value = stripped.split("=", 1)
        result[key.strip()] = value.strip()
    return result


def switching_spec_from_kv(kv: dict[str, str]) -> SwitchingGaussianSpec:
    """Build a spec from flat keys (mu1_x, mu1_y, ..., sigma_scale,
    n_per_cluster, seed); missing keys keep their defaults."""
    defaults = SwitchingGaussianSpec()

    def vec(prefix: str, default: np.ndarray) -> np.ndarray:
        x = float(kv.get(f"{prefix}_x", default[0]))
        y = float(kv.get(f"{prefix}_y", default[1]))
        return np.array([x, y])

    scale = float(kv.get("sigma_scale", 1.0))
    sigma = scale * np.eye(2)
    return SwitchingGaussianSpec(
        mu1=vec("mu1", defaults.mu1),
        mu2=vec("mu2", defaults.mu2),
        mu1_prime=vec("mu1_prime", defaults.mu1_prime),
        mu2_prime=vec("mu2_prime", defaults.mu2_prime),
        sigma1=sigma,
        sigma2=sigma.copy(),
        sigma1_prime=sigma.copy(),
        sigma2_prime=sigma.copy(),
        n_per_cluster=int(kv.get("n_per_cluster", defaults.n_per_cluster)),
        seed=int(kv.get("seed", defaults.seed)),
    )
