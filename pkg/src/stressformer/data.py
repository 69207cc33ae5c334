"""Signal ingestion, windowing, labeling, splitting, and synthetic data.

Converted stream file format (one file per subject per modality, UTF-8):

    line 1:  <subject>,<modality>,<sample_rate>
    line 2+: <sample_value>,<raw_label>

Raw protocol labels follow the chest-device scheme: 1 = neutral baseline,
2 = stress, 3 = amusement; everything else (transients, meditation) is
dropped at windowing. Kept windows carry class labels 0/1/2 via the
mapping 1->0, 2->1, 3->2.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataWarning, ValidationError
from .util import STREAM_SPLIT, STREAM_SYNTH, atomic_write_text, rng_stream

CANONICAL_MODALITIES = (
    "ECG", "EDA", "EMG", "RESP", "TEMP", "ACC_C1", "ACC_C2", "ACC_C3",
)
RAW_LABEL_TO_CLASS = {1: 0, 2: 1, 3: 2}
N_CLASSES = 3

_MODALITY_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def _check_modality(name: str) -> str:
    # canonical names for real data; synthetic experiments may use any
    # CSV-safe token (e.g. SYNA/SYNB)
    if not _MODALITY_RE.match(name or ""):
        raise ValidationError(f"invalid modality token: {name!r}")
    return name


@dataclass
class SignalStream:
    """Single-channel recording with per-sample raw protocol labels."""

    modality: str
    sample_rate: float
    samples: np.ndarray
    labels: np.ndarray
    subject_id: str

    def __post_init__(self):
        _check_modality(self.modality)
        self.samples = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        self.labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if self.samples.ndim != 1 or self.labels.ndim != 1:
            raise ValidationError("samples and labels must be 1D")
        if len(self.samples) != len(self.labels):
            raise ValidationError(
                f"samples ({len(self.samples)}) and labels ({len(self.labels)}) "
                "must have equal length"
            )
        if not self.sample_rate > 0:
            raise ValidationError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValidationError("stream samples must be finite")


@dataclass(frozen=True)
class NormStats:
    """Global z-score statistics actually applied to a dataset."""

    mean: float
    std: float


@dataclass
class WindowedDataset:
    """Fixed-length labeled windows for one modality."""

    X: np.ndarray  # [n_windows, window_len]
    y: np.ndarray  # [n_windows], classes 0/1/2
    subjects: list[str]
    modality: str
    window_len: int
    stats: NormStats | None = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        self.y = np.ascontiguousarray(np.asarray(self.y, dtype=np.int64))
        if self.X.ndim != 2 or self.X.shape[1] != self.window_len:
            raise ValidationError(
                f"windows must be [n, {self.window_len}], got {self.X.shape}"
            )
        if len(self.y) != len(self.X) or len(self.subjects) != len(self.X):
            raise ValidationError("windows, labels and subjects must align")
        if self.y.size and not np.all((self.y >= 0) & (self.y < N_CLASSES)):
            raise ValidationError(f"class labels must be in 0..{N_CLASSES - 1}")
        if self.X.size and not np.all(np.isfinite(self.X)):
            raise ValidationError("window values must be finite")
        _check_modality(self.modality)

    def __len__(self) -> int:
        return len(self.y)

    def class_counts(self) -> dict[int, int]:
        return {c: int((self.y == c).sum()) for c in range(N_CLASSES)}


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def window_stream(stream: SignalStream, window_len: int, stride: int) -> WindowedDataset:
    """Cut a stream into label-pure windows at offsets 0, stride, 2*stride, ...

    A window is kept only if all its raw labels are equal and in {1, 2, 3};
    kept windows are remapped to classes 0/1/2.
    """
    if window_len < 1:
        raise ConfigError(f"window_len must be >= 1, got {window_len}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n = len(stream.samples)
    if window_len > n:
        warnings.warn(
            f"window_len {window_len} exceeds stream length {n} "
            f"({stream.subject_id}/{stream.modality}); no windows emitted",
            DataWarning,
        )
        return WindowedDataset(
            np.zeros((0, window_len)), np.zeros(0, dtype=np.int64), [],
            stream.modality, window_len,
        )
    rows, classes = [], []
    for start in range(0, n - window_len + 1, stride):
        seg_labels = stream.labels[start : start + window_len]
        first = int(seg_labels[0])
        if first not in RAW_LABEL_TO_CLASS or not np.all(seg_labels == first):
            continue
        rows.append(stream.samples[start : start + window_len])
        classes.append(RAW_LABEL_TO_CLASS[first])
    X = np.array(rows, dtype=np.float64) if rows else np.zeros((0, window_len))
    y = np.array(classes, dtype=np.int64)
    return WindowedDataset(
        X, y, [stream.subject_id] * len(y), stream.modality, window_len
    )


def merge_datasets(datasets: list[WindowedDataset]) -> WindowedDataset:
    """Concatenate per-subject windowed datasets of one modality."""
    if not datasets:
        raise ValidationError("no datasets to merge")
    modality = datasets[0].modality
    window_len = datasets[0].window_len
    for d in datasets[1:]:
        if d.modality != modality or d.window_len != window_len:
            raise ValidationError("merge requires one modality and window length")
    return WindowedDataset(
        np.concatenate([d.X for d in datasets]),
        np.concatenate([d.y for d in datasets]),
        [s for d in datasets for s in d.subjects],
        modality,
        window_len,
    )


def split(dataset: WindowedDataset, spec: SplitSpec) -> tuple[WindowedDataset, WindowedDataset]:
    """Seeded shuffle then partition; |train| = round(train_fraction * N)."""
    n = len(dataset)
    if n == 0:
        raise ValidationError("cannot split an empty dataset")
    perm = rng_stream(spec.seed, STREAM_SPLIT).permutation(n)
    n_train = int(round(spec.train_fraction * n))
    idx_train, idx_test = perm[:n_train], perm[n_train:]

    def take(idx):
        return WindowedDataset(
            dataset.X[idx],
            dataset.y[idx],
            [dataset.subjects[i] for i in idx],
            dataset.modality,
            dataset.window_len,
            stats=dataset.stats,
        )

    train, test = take(idx_train), take(idx_test)
    present = set(np.unique(dataset.y).tolist())
    for name, part in (("train", train), ("test", test)):
        missing = present - set(np.unique(part.y).tolist())
        if missing:
            warnings.warn(
                f"{name} partition is missing classes {sorted(missing)} "
                f"({dataset.modality})",
                DataWarning,
            )
    return train, test


def apply_normalization(X: np.ndarray, stats: NormStats) -> np.ndarray:
    """Single code path for z-scoring so identical stats give identical arrays."""
    return (X - stats.mean) / stats.std


def normalize(
    train: WindowedDataset, test: WindowedDataset
) -> tuple[WindowedDataset, WindowedDataset, NormStats]:
    """Z-score both partitions with the train partition's global mean/std."""
    if len(train) == 0:
        raise ValidationError("cannot normalize with an empty train partition")
    mean = float(train.X.mean())
    std = float(train.X.std())
    if std < 1e-12:
        warnings.warn(
            f"train std {std:.3g} below 1e-12 for {train.modality}; "
            "leaving data unscaled",
            DataWarning,
        )
        stats = NormStats(mean=0.0, std=1.0)
    else:
        stats = NormStats(mean=mean, std=std)
    train_n = replace(train, X=apply_normalization(train.X, stats), stats=stats)
    test_n = replace(test, X=apply_normalization(test.X, stats), stats=stats)
    return train_n, test_n, stats


def synth_dataset(
    class_specs: list[tuple[float, float]],
    n_windows: int,
    window_len: int,
    noise_std: float,
    seed: int,
    modality: str = "SYN",
    subject: str = "SYN",
) -> WindowedDataset:
    """Balanced sinusoid dataset: class c is amplitude*sin(2*pi*f*t + phase)
    plus Gaussian noise, with (f, amplitude) taken from class_specs[c].
    Frequencies are in cycles per window."""
    if len(class_specs) != N_CLASSES:
        raise ConfigError(f"expected {N_CLASSES} class specs, got {len(class_specs)}")
    if len({tuple(s) for s in class_specs}) != len(class_specs):
        raise ConfigError(f"class specs must be distinct, got {class_specs}")
    if n_windows % len(class_specs) != 0:
        raise ConfigError(
            f"n_windows {n_windows} not divisible by {len(class_specs)} classes"
        )
    if noise_std < 0:
        raise ConfigError(f"noise_std must be >= 0, got {noise_std}")
    rng = rng_stream(seed, STREAM_SYNTH)
    per_class = n_windows // len(class_specs)
    t = np.arange(window_len, dtype=np.float64) / window_len
    X = np.empty((n_windows, window_len))
    y = np.empty(n_windows, dtype=np.int64)
    row = 0
    for cls, (freq, amp) in enumerate(class_specs):
        for _ in range(per_class):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            window = amp * np.sin(2.0 * np.pi * freq * t + phase)
            if noise_std > 0:
                window = window + rng.normal(0.0, noise_std, size=window_len)
            X[row] = window
            y[row] = cls
            row += 1
    return WindowedDataset(X, y, [subject] * n_windows, modality, window_len)


# stream file I/O


def stream_filename(subject: str, modality: str) -> str:
    return f"{subject}_{modality}.csv"


def write_stream(stream: SignalStream, path: str | Path) -> Path:
    path = Path(path)
    sr = stream.sample_rate
    sr_txt = str(int(sr)) if sr == int(sr) else repr(sr)
    lines = [f"{stream.subject_id},{stream.modality},{sr_txt}"]
    lines.extend(
        f"{v!r},{int(l)}" for v, l in zip(stream.samples.tolist(), stream.labels)
    )
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def read_stream(path: str | Path) -> SignalStream:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        parts = header.split(",")
        if len(parts) != 3:
            raise ValidationError(
                f"{path}: header must be subject,modality,sample_rate, got {header!r}"
            )
        subject, modality, sr_txt = parts
        try:
            sample_rate = float(sr_txt)
        except ValueError:
            raise ValidationError(f"{path}: bad sample_rate {sr_txt!r}") from None
        samples, labels = [], []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                value_txt, label_txt = line.split(",")
                samples.append(float(value_txt))
                labels.append(int(label_txt))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad row {line!r}") from None
    return SignalStream(
        modality=modality,
        sample_rate=sample_rate,
        samples=np.array(samples, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        subject_id=subject,
    )


def dataset_to_stream(dataset: WindowedDataset, sample_rate: float | None = None) -> SignalStream:
    """Serialize windows back into one stream; re-windowing with
    stride == window_len reproduces the dataset (classes map back to raw
    labels 0->1, 1->2, 2->3)."""
    raw = np.repeat(dataset.y + 1, dataset.window_len)
    subject = dataset.subjects[0] if dataset.subjects else "SYN"
    return SignalStream(
        modality=dataset.modality,
        sample_rate=float(sample_rate if sample_rate is not None else dataset.window_len),
        samples=dataset.X.reshape(-1),
        labels=raw,
        subject_id=subject,
    )


def discover_streams(data_dir: str | Path, modality: str) -> list[Path]:
    """All stream files for a modality, sorted by filename."""
    data_dir = Path(data_dir)
    return sorted(data_dir.glob(f"*_{modality}.csv"))


def load_modality(
    data_dir: str | Path, modality: str, window_len: int, stride: int
) -> WindowedDataset:
    """Read every subject stream for a modality, window, and merge."""
    paths = discover_streams(data_dir, modality)
    if not paths:
        raise ValidationError(f"no stream files for modality {modality} in {data_dir}")
    parts = []
    for p in paths:
        stream = read_stream(p)
        if stream.modality != modality:
            raise ValidationError(
                f"{p}: header modality {stream.modality!r} != expected {modality!r}"
            )
        parts.append(window_stream(stream, window_len, stride))
    return merge_datasets(parts)


def labels_to_onehot(y: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    return np.eye(n_classes, dtype=np.float64)[np.asarray(y, dtype=np.int64)]
