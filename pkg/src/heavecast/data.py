"""Windowed input/output pairs, normalization, folds, and noise injection.

Each training sample pairs an n-step history of (motion, lead-time wave)
with the next m motion samples.  For an anchor index p into a record of
length L the admissible range is fixed by three inequalities:

    p - n >= 0          (history fits)
    p + m - 1 < L       (target fits)
    p - 1 + w < L       (shifted wave column fits)

so anchors run over [n, L - max(m, w)] with stride 1.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .waves import TimeSeriesRecord

WINDOW_CONTAINER_MAGIC = b"WMDS1"


@dataclass(frozen=True)
class WindowSpec:
    """Window geometry: m forward steps, w wave lead, n history length.

    Left unset, the lead defaults to m and the history to 3m.
    """

    m: int
    w: int | None = None
    n: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.w is None:
            object.__setattr__(self, "w", self.m)
        if self.n is None:
            object.__setattr__(self, "n", 3 * self.m)
        if self.w < 0:
            raise ConfigError(f"w must be >= 0, got {self.w}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.n < self.m:
            warnings.warn(f"history n={self.n} is shorter than horizon m={self.m}", stacklevel=2)

    def sample_count(self, record_length: int) -> int:
        """Number of admissible anchors for a record of the given length."""
        return max(0, record_length - self.n - self.m + 1 - max(0, self.w - self.m))


@dataclass(frozen=True)
class NormalizationConstants:
    """Per-channel shift/scale, frozen from the training+validation pool."""

    mean_motion: float
    std_motion: float
    mean_wave: float
    std_wave: float

    def __post_init__(self):
        if self.std_motion <= 0 or self.std_wave <= 0:
            raise ConfigError("normalization std must be strictly positive")

    def normalize_motion(self, x):
        return (np.asarray(x, dtype=float) - self.mean_motion) / self.std_motion

    def denormalize_motion(self, x):
        return np.asarray(x, dtype=float) * self.std_motion + self.mean_motion

    def normalize_wave(self, x):
        return (np.asarray(x, dtype=float) - self.mean_wave) / self.std_wave

    def denormalize_wave(self, x):
        return np.asarray(x, dtype=float) * self.std_wave + self.mean_wave


@dataclass
class WindowedSample:
    """One normalized training pair.

    ``x`` is n x 2 (column 0 past motion, column 1 wave shifted w steps into
    the future); ``y`` is the m-vector of future motion.  ``origin`` records
    (case_id, anchor index).
    """

    x: np.ndarray
    y: np.ndarray
    origin: tuple[str, int] = ("", -1)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.x.shape[1] != 2:
            raise DataError(f"x must be n x 2, got shape {self.x.shape}")
        if self.y.ndim != 1:
            raise DataError(f"y must be a vector, got shape {self.y.shape}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise DataError(f"non-finite values in sample from {self.origin}")


@dataclass(frozen=True)
class FoldLayout:
    """Cross-validation fold membership plus held-out test cases."""

    folds: tuple[tuple[str, ...], ...]
    test_cases: tuple[str, ...]

    def __post_init__(self):
        ids = [c for fold in self.folds for c in fold] + list(self.test_cases)
        if len(ids) != len(set(ids)):
            raise ConfigError("a case id appears more than once in the fold layout")

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def training_cases(self, fold_index: int) -> list[str]:
        """All fold cases except the validation fold."""
        self._check_index(fold_index)
        return [c for i, fold in enumerate(self.folds) if i != fold_index for c in fold]

    def validation_cases(self, fold_index: int) -> list[str]:
        self._check_index(fold_index)
        return list(self.folds[fold_index])

    def all_fold_cases(self) -> list[str]:
        return [c for fold in self.folds for c in fold]

    def _check_index(self, fold_index: int) -> None:
        if not (0 <= fold_index < self.n_folds):
            raise ConfigError(f"fold_index {fold_index} outside [0, {self.n_folds})")


def compute_norm(records) -> NormalizationConstants:
    """Pooled mean and population standard deviation per channel.

    Only pass training+validation cases here; test folds must never leak
    into the constants.
    """
    records = list(records)
    if not records:
        raise ConfigError("compute_norm needs at least one record")
    motion = np.concatenate([r.channel("heave") for r in records])
    wave = np.concatenate([r.channel("eta") for r in records])
    stats = {}
    for name, pool in (("motion", motion), ("wave", wave)):
        mean = float(np.mean(pool))
        std = float(np.std(pool))
        if std == 0.0:
            raise ConfigError(f"{name} channel has zero variance; normalization undefined")
        stats[name] = (mean, std)
    return NormalizationConstants(
        mean_motion=stats["motion"][0],
        std_motion=stats["motion"][1],
        mean_wave=stats["wave"][0],
        std_wave=stats["wave"][1],
    )


def window_case(
    record: TimeSeriesRecord,
    spec: WindowSpec,
    norm: NormalizationConstants,
) -> list[WindowedSample]:
    """Cut one case into normalized (x, y) pairs, one per admissible anchor."""
    motion = norm.normalize_motion(record.channel("heave"))
    wave = norm.normalize_wave(record.channel("eta"))
    length = record.n_samples
    count = spec.sample_count(length)
    if count == 0:
        warnings.warn(
            f"record {record.case_id!r} with {length} samples is too short for n={spec.n}, m={spec.m}, w={spec.w}",
            stacklevel=2,
        )
        return []
    n, m, w = spec.n, spec.m, spec.w
    samples = []
    for p in range(n, n + count):
        x = np.empty((n, 2))
        x[:, 0] = motion[p - n : p]
        x[:, 1] = wave[p - n + w : p + w]
        y = motion[p : p + m].copy()
        samples.append(WindowedSample(x=x, y=y, origin=(record.case_id, p)))
    return samples


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into X (N, n, 2) and Y (N, m) tensors."""
    samples = list(samples)
    if not samples:
        raise DataError("cannot stack an empty sample list")
    x = np.stack([s.x for s in samples])
    y = np.stack([s.y for s in samples])
    return x, y


def inject_noise(samples, noise_level: float, seed: int) -> list[WindowedSample]:
    """Add i.i.d. Gaussian noise to inputs only; targets stay clean.

    The noise standard deviation equals ``noise_level`` in normalized units
    (the normalized heave pool has unit standard deviation by construction).
    """
    if noise_level < 0:
        raise DomainError(f"noise_level must be >= 0, got {noise_level}")
    samples = list(samples)
    if noise_level == 0.0:
        return [WindowedSample(x=s.x.copy(), y=s.y.copy(), origin=s.origin) for s in samples]
    rng = np.random.default_rng(seed)
    noisy = []
    for s in samples:
        x = s.x + noise_level * rng.standard_normal(s.x.shape)
        noisy.append(WindowedSample(x=x, y=s.y.copy(), origin=s.origin))
    return noisy


def build_folds(case_tags: dict[str, tuple[float, float]], n_folds: int | None = None) -> FoldLayout:
    """Deterministic fold assignment from case ids and (hs, tp) tags.

    Test cases are the ones whose sea-state tag occurs exactly once; there
    must be exactly two of them and their tags must differ from every
    training tag.  The remaining cases are chunked two per fold in id
    order; when they split into exactly two equal sea-state groups, folds
    pair one case from each group instead.
    """
    if len(case_tags) < 6:
        raise ConfigError(f"need at least 6 tagged cases, got {len(case_tags)}")
    by_tag: dict[tuple[float, float], list[str]] = {}
    for case_id in sorted(case_tags):
        by_tag.setdefault(tuple(case_tags[case_id]), []).append(case_id)
    test_cases = sorted(c for tag, ids in by_tag.items() if len(ids) == 1 for c in ids)
    if len(test_cases) != 2:
        raise ConfigError(
            f"expected exactly 2 cases with unique sea-state tags for testing, found {len(test_cases)}"
        )
    train_groups = {tag: ids for tag, ids in by_tag.items() if len(ids) > 1}
    train_ids = sorted(c for ids in train_groups.values() for c in ids)
    if n_folds is None:
        if len(train_ids) != 16:
            raise ConfigError(f"default layout expects 16 fold cases (8 folds of 2), got {len(train_ids)}")
        n_folds = 8
    if len(train_ids) != 2 * n_folds:
        raise ConfigError(f"{len(train_ids)} fold cases cannot form {n_folds} folds of 2")
    groups = [sorted(ids) for _, ids in sorted(train_groups.items())]
    if len(groups) == 2 and all(len(g) == n_folds for g in groups):
        folds = tuple((groups[0][i], groups[1][i]) for i in range(n_folds))
    else:
        folds = tuple(tuple(train_ids[2 * i : 2 * i + 2]) for i in range(n_folds))
    return FoldLayout(folds=folds, test_cases=tuple(test_cases))


# --- binary container -------------------------------------------------------

def write_window_container(path, samples, spec: WindowSpec, norm: NormalizationConstants) -> None:
    """Serialize a sample batch: magic ``WMDS1``, geometry, count, constants,
    then little-endian float64 payload (x then y per sample)."""
    samples = list(samples)
    header = WINDOW_CONTAINER_MAGIC + struct.pack(
        "<IIIQ4d",
        spec.m,
        spec.n,
        spec.w,
        len(samples),
        norm.mean_motion,
        norm.std_motion,
        norm.mean_wave,
        norm.std_wave,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for s in samples:
            if s.x.shape != (spec.n, 2) or s.y.shape != (spec.m,):
                raise DataError(f"sample from {s.origin} does not match container geometry")
            fh.write(np.ascontiguousarray(s.x, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(s.y, dtype="<f8").tobytes())


def read_window_container(path) -> tuple[list[WindowedSample], WindowSpec, NormalizationConstants]:
    """Inverse of :func:`write_window_container` (origins are not stored)."""
    header_size = len(WINDOW_CONTAINER_MAGIC) + struct.calcsize("<IIIQ4d")
    with open(path, "rb") as fh:
        head = fh.read(header_size)
        if len(head) != header_size or not head.startswith(WINDOW_CONTAINER_MAGIC):
            raise DataError(f"{path}: not a {WINDOW_CONTAINER_MAGIC.decode()} window container")
        m, n, w, count, mm, sm, mw, sw = struct.unpack("<IIIQ4d", head[len(WINDOW_CONTAINER_MAGIC) :])
        spec = WindowSpec(m=m, w=w, n=n)
        norm = NormalizationConstants(mean_motion=mm, std_motion=sm, mean_wave=mw, std_wave=sw)
        per_sample = (n * 2 + m) * 8
        payload = fh.read()
    if len(payload) != count * per_sample:
        raise DataError(f"{path}: payload holds {len(payload)} bytes, expected {count * per_sample}")
    samples = []
    for i in range(count):
        block = np.frombuffer(payload, dtype="<f8", count=n * 2 + m, offset=i * per_sample)
        samples.append(WindowedSample(x=block[: n * 2].reshape(n, 2).copy(), y=block[n * 2 :].copy()))
    return samples, spec, norm


def export_windows_csv(path, samples) -> None:
    """Debug-friendly CSV: one row per sample, columns
    ``case_id,p,x_motion_0..,x_wave_0..,y_0..``."""
    samples = list(samples)
    if not samples:
        raise DataError("nothing to export")
    n = samples[0].x.shape[0]
    m = samples[0].y.shape[0]
    header = (
        ["case_id", "p"]
        + [f"x_motion_{j}" for j in range(n)]
        + [f"x_wave_{j}" for j in range(n)]
        + [f"y_{j}" for j in range(m)]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for s in samples:
            cells = [s.origin[0], str(s.origin[1])]
            cells += [repr(float(v)) for v in s.x[:, 0]]
            cells += [repr(float(v)) for v in s.x[:, 1]]
            cells += [repr(float(v)) for v in s.y]
            fh.write(",".join(cells) + "\n")
