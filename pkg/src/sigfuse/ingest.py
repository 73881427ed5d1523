"""Labeled, patient-grouped 1D signal ingestion.

Sources: a synthetic beat-train generator, CSV signal files, or grayscale
images (PGM/CSV grids) collapsed to per-row mean intensity. Splitting is
patient-grouped so no patient leaks across partitions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, InvalidInput
from .imageops import bilinear_resize, read_pgm
from .rand import rng_for


@dataclass
class Signal1D:
    """One preprocessed 1D signal with its label and patient of origin."""

    samples: np.ndarray
    sample_rate: float
    label: int
    patient_id: str
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidInput("samples must be a nonempty 1D array")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("samples must be finite")
        if self.sample_rate <= 0:
            raise InvalidInput("sample_rate must be positive")


@dataclass
class LabeledDataset:
    """A list of signals plus the class-name table."""

    signals: list[Signal1D]
    class_names: list[str]

    def __post_init__(self):
        n_classes = len(self.class_names)
        for s in self.signals:
            if not 0 <= s.label < n_classes:
                raise InvalidInput(f"label {s.label} out of range for {n_classes} classes")

    def __len__(self) -> int:
        return len(self.signals)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.signals], dtype=int)

    @property
    def patient_ids(self) -> list[str]:
        return [s.patient_id for s in self.signals]

    def one_hot(self) -> np.ndarray:
        """n x C 0/1 matrix; each row sums to 1."""
        out = np.zeros((len(self.signals), len(self.class_names)))
        out[np.arange(len(self.signals)), self.labels] = 1.0
        return out

    def signal_matrix(self) -> np.ndarray:
        """Stack signals into an n x L matrix (requires equal lengths)."""
        lengths = {s.samples.size for s in self.signals}
        if len(lengths) != 1:
            raise InvalidInput(f"signals have mixed lengths: {sorted(lengths)}")
        return np.stack([s.samples for s in self.signals])

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset([self.signals[i] for i in indices], list(self.class_names))


@dataclass
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0
    group_by_patient: bool = True
    # Apportion each class's patients separately so small test partitions
    # still see every class. Patient disjointness is preserved either way.
    stratify_by_class: bool = False

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise InvalidInput("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise InvalidInput(f"split fractions must sum to 1, got {sum(fracs)}")


# Per-class bump shapes: amplitudes of the three characteristic deflections,
# widths as fractions of a beat, and the beat rate. Values chosen only for
# shape plausibility and class separability at small sample counts.
_DEFAULT_CLASS_PARAMS = [
    {"p_amp": 0.15, "qrs_amp": 1.00, "t_amp": 0.30, "p_width": 0.08, "qrs_width": 0.02,
     "t_width": 0.12, "beat_hz": 1.10},
    {"p_amp": 0.10, "qrs_amp": 1.70, "t_amp": 0.20, "p_width": 0.08, "qrs_width": 0.03,
     "t_width": 0.10, "beat_hz": 1.45},
    {"p_amp": 0.25, "qrs_amp": 0.60, "t_amp": 0.55, "p_width": 0.10, "qrs_width": 0.02,
     "t_width": 0.18, "beat_hz": 0.85},
    {"p_amp": 0.15, "qrs_amp": 1.25, "t_amp": 0.40, "p_width": 0.06, "qrs_width": 0.05,
     "t_width": 0.12, "beat_hz": 1.25},
]

_DEFAULT_CLASS_NAMES = ["class0", "class1", "class2", "class3"]


@dataclass
class SynthConfig:
    n_patients: int = 20
    signals_per_patient: int = 8
    length: int = 256
    sample_rate: float = 128.0
    class_params: list[dict] = field(default_factory=lambda: [dict(p) for p in _DEFAULT_CLASS_PARAMS])
    class_names: list[str] = field(default_factory=lambda: list(_DEFAULT_CLASS_NAMES))
    # Patient allocation across classes; un-normalized weights.
    class_weights: list[float] | None = None
    noise_sd: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.length < 64:
            raise InvalidInput("length must be >= 64 samples")
        if self.noise_sd < 0:
            raise InvalidInput("noise_sd must be >= 0")
        if self.n_patients < 1 or self.signals_per_patient < 1:
            raise InvalidInput("need at least one patient and one signal per patient")
        if len(self.class_params) != len(self.class_names):
            raise InvalidInput("class_params and class_names must have equal length")
        if self.class_weights is not None and len(self.class_weights) != len(self.class_names):
            raise InvalidInput("class_weights must match the number of classes")


def image_to_signal(
    gray: np.ndarray,
    target_len: int,
    *,
    sample_rate: float = 1.0,
    label: int = 0,
    patient_id: str = "unknown",
    source_id: str = "",
) -> Signal1D:
    """Collapse a grayscale grid to a 1D signal of length ``target_len``.

    The grid is bilinearly resized to target_len x target_len, then each row
    is reduced to its mean intensity.
    """
    gray = np.asarray(gray, dtype=float)
    if gray.ndim != 2 or gray.shape[0] < 1 or gray.shape[1] < 1 or gray.size == 0:
        raise InvalidInput("gray must be a nonempty h x w matrix")
    resized = bilinear_resize(gray, target_len, target_len)
    return Signal1D(
        samples=resized.mean(axis=1),
        sample_rate=sample_rate,
        label=label,
        patient_id=patient_id,
        source_id=source_id,
    )


def minmax_normalize(dataset: LabeledDataset) -> LabeledDataset:
    """Divide every sample by the global maximum absolute amplitude.

    Nonnegative inputs land in [0, 1]; signed inputs in [-1, 1]. Idempotent.
    """
    peak = max(float(np.max(np.abs(s.samples))) for s in dataset.signals) if dataset.signals else 0.0
    if peak <= 0.0:
        raise DegenerateInput("dataset is identically zero; nothing to normalize")
    signals = [
        Signal1D(s.samples / peak, s.sample_rate, s.label, s.patient_id, s.source_id)
        for s in dataset.signals
    ]
    return LabeledDataset(signals, list(dataset.class_names))


def _apportion(total: int, fracs: list[float]) -> list[int]:
    """Largest-remainder apportionment; sums exactly to ``total``."""
    quotas = [total * f for f in fracs]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    short = total - sum(counts)
    # Distribute leftovers to the largest remainders; ties go to the earlier slot.
    order = sorted(range(len(fracs)), key=lambda i: (-remainders[i], i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def split_by_patient(
    dataset: LabeledDataset, spec: SplitSpec
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Partition into train/val/test with each patient in exactly one part.

    Partition sizes approximate the fractions by patient count (largest
    remainder), with every partition guaranteed at least one patient.
    Deterministic given ``spec.seed``.
    """
    fracs = [spec.train_frac, spec.val_frac, spec.test_frac]
    rng = rng_for(spec.seed, "split")

    if spec.group_by_patient:
        seen: dict[str, int] = {}
        for s in dataset.signals:
            seen.setdefault(s.patient_id, s.label)
        patients = list(seen)
        if len(patients) < 3:
            raise InvalidInput(f"need >= 3 distinct patients, got {len(patients)}")

        member: dict[str, int] = {}
        if spec.stratify_by_class:
            # Shuffle and apportion each class's patient pool independently.
            for c in range(len(dataset.class_names)):
                pool = [p for p in patients if seen[p] == c]
                if not pool:
                    continue
                order = [pool[i] for i in rng.permutation(len(pool))]
                counts = _apportion(len(order), fracs)
                if len(order) >= 3:
                    # A pool that can cover all partitions should: steal for
                    # any empty slot from the fullest one.
                    for i in range(3):
                        while counts[i] == 0:
                            donor = int(np.argmax(counts))
                            counts[donor] -= 1
                            counts[i] += 1
                bounds = np.cumsum([0] + counts)
                for part in range(3):
                    for pid in order[bounds[part] : bounds[part + 1]]:
                        member[pid] = part
            # Repair any globally empty partition from the largest one.
            for part in range(3):
                while sum(1 for v in member.values() if v == part) == 0:
                    sizes = [sum(1 for v in member.values() if v == p) for p in range(3)]
                    donor = int(np.argmax(sizes))
                    pid = next(p for p, v in member.items() if v == donor)
                    member[pid] = part
        else:
            order = [patients[i] for i in rng.permutation(len(patients))]
            counts = _apportion(len(order), fracs)
            # Never leave a partition empty; steal from the largest one.
            for i in range(3):
                while counts[i] == 0:
                    donor = int(np.argmax(counts))
                    counts[donor] -= 1
                    counts[i] += 1
            bounds = np.cumsum([0] + counts)
            for part in range(3):
                for pid in order[bounds[part] : bounds[part + 1]]:
                    member[pid] = part
        parts = [[], [], []]
        for idx, s in enumerate(dataset.signals):
            parts[member[s.patient_id]].append(idx)
    else:
        n = len(dataset.signals)
        if n < 3:
            raise InvalidInput(f"need >= 3 signals, got {n}")
        order = rng.permutation(n)
        counts = _apportion(n, fracs)
        for i in range(3):
            while counts[i] == 0:
                donor = int(np.argmax(counts))
                counts[donor] -= 1
                counts[i] += 1
        bounds = np.cumsum([0] + counts)
        parts = [sorted(order[bounds[p] : bounds[p + 1]].tolist()) for p in range(3)]

    train, val, test = (dataset.subset(idx) for idx in parts)
    return train, val, test


def _gauss_bump(t: np.ndarray, center: float, width: float, amp: float) -> np.ndarray:
    return amp * np.exp(-0.5 * ((t - center) / max(width, 1e-9)) ** 2)


def generate_synthetic(cfg: SynthConfig) -> LabeledDataset:
    """Deterministic beat-train generator.

    Each signal is a sum of three Gaussian deflections per beat (parameters
    from ``cfg.class_params``) plus white noise. All signals of one patient
    share a class; a small per-patient amplitude factor adds between-patient
    variation. Pure function of ``cfg``.
    """
    rng = rng_for(cfg.seed, "synth")
    n_classes = len(cfg.class_params)
    weights = cfg.class_weights or [1.0] * n_classes
    wsum = float(sum(weights))
    counts = _apportion(cfg.n_patients, [w / wsum for w in weights])
    # Every class present when patient budget allows.
    for c in range(n_classes):
        while counts[c] == 0 and max(counts) > 1:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[c] += 1

    duration = cfg.length / cfg.sample_rate
    t = np.arange(cfg.length) / cfg.sample_rate
    signals: list[Signal1D] = []
    patient_no = 0
    for c, n_pat in enumerate(counts):
        p = cfg.class_params[c]
        beat_period = 1.0 / p["beat_hz"]
        for _ in range(n_pat):
            pid = f"p{patient_no:04d}"
            patient_no += 1
            # Per-patient physiology: a mild amplitude scale and a small
            # alignment offset (recordings stay roughly phase-aligned across
            # patients). Without noise, a patient's signals are identical.
            amp_scale = 1.0 + 0.10 * rng.standard_normal()
            phase = rng.uniform(0.05, 0.20) * beat_period
            for k in range(cfg.signals_per_patient):
                x = np.zeros(cfg.length)
                n_beats = int(np.ceil(duration / beat_period)) + 1
                for b in range(-1, n_beats + 1):
                    qrs_at = phase + b * beat_period
                    x += _gauss_bump(t, qrs_at - 0.18 * beat_period, p["p_width"] * beat_period,
                                     p["p_amp"] * amp_scale)
                    x += _gauss_bump(t, qrs_at, p["qrs_width"] * beat_period,
                                     p["qrs_amp"] * amp_scale)
                    x += _gauss_bump(t, qrs_at + 0.25 * beat_period, p["t_width"] * beat_period,
                                     p["t_amp"] * amp_scale)
                if cfg.noise_sd > 0:
                    x = x + cfg.noise_sd * rng.standard_normal(cfg.length)
                signals.append(
                    Signal1D(x, cfg.sample_rate, c, pid, source_id=f"{pid}-s{k:03d}")
                )
    return LabeledDataset(signals, list(cfg.class_names))


# ---------------------------------------------------------------------------
# On-disk dataset layout: one subdirectory per class, CSV rows
# `patient_id,label,s0,s1,...` (and optionally PGM images), plus manifest.json.
# ---------------------------------------------------------------------------

def save_dataset(dataset: LabeledDataset, root) -> dict:
    """Write per-class signal CSVs and a manifest; returns the manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    per_class: dict[int, list[Signal1D]] = {}
    for s in dataset.signals:
        per_class.setdefault(s.label, []).append(s)

    counts = {}
    sample_rate = dataset.signals[0].sample_rate if dataset.signals else 0.0
    for label, name in enumerate(dataset.class_names):
        cdir = root / name
        cdir.mkdir(exist_ok=True)
        rows = per_class.get(label, [])
        with open(cdir / "signals.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            for s in rows:
                writer.writerow([s.patient_id, s.label] + [repr(float(v)) for v in s.samples])
        counts[name] = len(rows)

    manifest = {
        "format": "sigfuse-dataset-v1",
        "class_names": list(dataset.class_names),
        "counts": counts,
        "n_signals": len(dataset.signals),
        "sample_rate": sample_rate,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(root, *, sample_rate: float | None = None, image_target_len: int = 128) -> LabeledDataset:
    """Load a class-per-directory dataset of CSV signals and/or PGM images."""
    root = Path(root)
    if not root.is_dir():
        raise InvalidInput(f"{root}: dataset directory not found")
    manifest_path = root / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    if sample_rate is None:
        sample_rate = float(manifest.get("sample_rate", 1.0))

    class_names = manifest.get("class_names")
    if not class_names:
        class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not class_names:
        raise InvalidInput(f"{root}: no class subdirectories found")

    signals: list[Signal1D] = []
    for label, name in enumerate(class_names):
        cdir = root / name
        if not cdir.is_dir():
            raise InvalidInput(f"{root}: missing class directory '{name}'")
        for csv_path in sorted(cdir.glob("*.csv")):
            with open(csv_path, newline="") as fh:
                for row in csv.reader(fh):
                    if not row:
                        continue
                    pid, lbl = row[0], int(row[1])
                    if lbl != label:
                        raise InvalidInput(f"{csv_path}: row label {lbl} != directory class {label}")
                    samples = np.array([float(v) for v in row[2:]])
                    signals.append(Signal1D(samples, sample_rate, label, pid,
                                            source_id=f"{name}/{csv_path.name}"))
        for pgm_path in sorted(cdir.glob("*.pgm")):
            img = read_pgm(pgm_path)
            sig = image_to_signal(img, image_target_len, sample_rate=sample_rate,
                                  label=label, patient_id=pgm_path.stem.split("_")[0],
                                  source_id=f"{name}/{pgm_path.name}")
            signals.append(sig)
    if not signals:
        raise InvalidInput(f"{root}: dataset is empty")
    return LabeledDataset(signals, class_names)
