"""Spike encoding, dataset files and sampling schedules."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestionError

__all__ = [
    "SpikeTrain",
    "LabeledClip",
    "PatternGrid",
    "PATTERNS",
    "threshold_encode",
    "pattern_encode",
    "sample_schedule",
    "load_clips",
    "save_clips",
    "write_spike_csv",
    "read_spike_csv",
    "synth_benchmark",
    "synth_eeg",
]


@dataclass(frozen=True)
class SpikeTrain:
    """Binary ``(channels, steps)`` train with its electrical pulse shape."""

    spikes: np.ndarray
    step_us: float = 0.5
    v_pulse: float = 5.0
    pulse_width: float = 0.5

    def __post_init__(self):
        s = np.asarray(self.spikes)
        if s.ndim != 2:
            raise ValueError("spike matrix must be (channels, steps)")
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("spike entries must be 0 or 1")
        if not 0 < self.pulse_width <= self.step_us:
            raise ValueError("pulse width must be in (0, step duration]")
        object.__setattr__(self, "spikes", s.astype(np.uint8))

    @property
    def n_channels(self) -> int:
        return self.spikes.shape[0]

    @property
    def n_steps(self) -> int:
        return self.spikes.shape[1]


@dataclass(frozen=True)
class LabeledClip:
    data: np.ndarray  # (channels, steps)
    label: int
    source_id: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2:
            raise ValueError("clip data must be (channels, steps)")
        if not np.all(np.isfinite(d)):
            raise ValueError(f"clip {self.source_id!r} has non-finite entries")
        object.__setattr__(self, "data", d)


def threshold_encode(clip, theta: float, **pulse) -> SpikeTrain:
    """Spike wherever the signal is strictly above ``theta``."""
    if not math.isfinite(theta):
        raise ValueError("threshold must be finite")
    data = clip.data if isinstance(clip, LabeledClip) else np.asarray(clip, dtype=float)
    return SpikeTrain((data > theta).astype(np.uint8), **pulse)


@dataclass(frozen=True)
class PatternGrid:
    pixels: np.ndarray
    label: str

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.shape != (5, 5) or not np.all((p == 0) | (p == 1)):
            raise ValueError("pattern must be a 5x5 binary matrix")
        object.__setattr__(self, "pixels", p.astype(np.uint8))

    @classmethod
    def from_rows(cls, label: str, rows: list[str]) -> "PatternGrid":
        return cls(np.array([[ch == "#" for ch in r] for r in rows], dtype=np.uint8), label)


# Rows become channels and columns become time steps.
PATTERNS = {
    "U": PatternGrid.from_rows("U", ["#...#", "#...#", "#...#", "#...#", ".###."]),
    "C": PatternGrid.from_rows("C", [".####", "#....", "#....", "#....", ".####"]),
    "S": PatternGrid.from_rows("S", ["#####", "#....", "#####", "....#", "#####"]),
    "D": PatternGrid.from_rows("D", ["####.", "#...#", "#...#", "#...#", "####."]),
}


def pattern_encode(p: PatternGrid, **pulse) -> SpikeTrain:
    """5-channel x 5-step train: black pixel -> pulse, white -> ground."""
    return SpikeTrain(np.asarray(p.pixels), **pulse)


def sample_schedule(n_steps: int, n_sample: int) -> np.ndarray:
    """``n_sample`` evenly spaced step indices ending at ``n_steps - 1``.

    Index ``k`` is ``floor((k + 1) * n_steps / n_sample) - 1``.
    """
    if not 1 <= n_sample <= n_steps:
        raise ValueError(f"n_sample must be in [1, {n_steps}], got {n_sample}")
    k = np.arange(1, n_sample + 1)
    return (k * n_steps) // n_sample - 1


# --- dataset files ---------------------------------------------------------


def _read_clip_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    try:
        fh = open(path)
    except OSError as exc:
        raise IngestionError(f"cannot open clip file ({exc.strerror})", path) from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise IngestionError(f"ragged row: {len(cells)} cells, expected {width}", path, lineno)
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise IngestionError(f"non-numeric cell {bad!r}", path, lineno) from None
    if not rows:
        raise IngestionError("clip file is empty", path)
    return np.array(rows, dtype=float).T


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_clips(manifest) -> list[LabeledClip]:
    """Read a JSON-lines manifest of ``{"path", "label", "id"}`` records.

    Clip paths are relative to the manifest's directory.  Each clip CSV has
    one row per time step and one column per channel, no header.
    """
    manifest = Path(manifest)
    if not manifest.exists():
        raise IngestionError("manifest not found", manifest)
    clips = []
    n_channels = None
    with open(manifest) as fh:
        lines = list(enumerate(fh, start=1))
    for lineno, line in lines:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rel, label = rec["path"], int(rec["label"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f"bad manifest record ({exc})", manifest, lineno) from None
        path = manifest.parent / rel
        data = _read_clip_csv(path)
        if n_channels is None:
            n_channels = data.shape[0]
        elif data.shape[0] != n_channels:
            raise IngestionError(f"clip has {data.shape[0]} channels, expected {n_channels}", path)
        try:
            clips.append(LabeledClip(data, label, str(rec.get("id", rel))))
        except ValueError as exc:
            raise IngestionError(str(exc), path) from None
    return clips


def save_clips(clips, directory, manifest_name: str = "manifest.jsonl") -> Path:
    """Write clips as CSV files plus a manifest; values use ``repr`` so they
    round-trip exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / manifest_name
    with open(manifest, "w") as mf:
        for k, clip in enumerate(clips):
            name = f"clip_{k:05d}.csv"
            with open(directory / name, "w") as fh:
                for row in clip.data.T:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
            mf.write(json.dumps({"path": name, "label": int(clip.label), "id": clip.source_id or name}) + "\n")
    return manifest


def write_spike_csv(train: SpikeTrain, path):
    """Sparse export: one ``channel,t_step`` row per spike."""
    ch, ts = np.nonzero(train.spikes)
    with open(path, "w") as fh:
        fh.write("channel,t_step\n")
        for c, t in zip(ch, ts):
            fh.write(f"{c},{t}\n")


def read_spike_csv(path, n_channels: int, n_steps: int, **pulse) -> SpikeTrain:
    spikes = np.zeros((n_channels, n_steps), dtype=np.uint8)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "channel,t_step":
            raise IngestionError(f"unexpected header {header!r}", path, 1)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                c, t = (int(v) for v in line.split(","))
                spikes[c, t] = 1
            except (ValueError, IndexError):
                raise IngestionError(f"bad spike record {line.strip()!r}", path, lineno) from None
    return SpikeTrain(spikes, **pulse)


# --- synthetic data --------------------------------------------------------


def synth_benchmark(
    n_classes: int = 10,
    n_channels: int = 64,
    n_steps: int = 100,
    n_clips: int = 500,
    seed: int = 42,
    *,
    motifs_per_class: int = 12,
    repeats: int = 5,
    max_lag: int = 4,
    noise_rate: float = 0.02,
) -> list[LabeledClip]:
    """Seeded spiking benchmark built from cross-channel sequential motifs.

    Each class owns ``motifs_per_class`` motifs ``(a, b, lag)``: a spike on
    channel ``a`` at step ``t`` followed by one on ``b`` at ``t + lag``.  A
    clip of that class contains every motif ``repeats`` times at uniformly
    random onsets, on top of Bernoulli(``noise_rate``) background spikes.
    Clips are dealt to classes round-robin.  One
    ``numpy.random.default_rng(seed)`` stream draws the motif tables first and
    then the clips in order, so the output depends only on the arguments.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    motifs = []
    for _ in range(n_classes):
        a = rng.integers(0, n_channels, size=motifs_per_class)
        b = (a + rng.integers(1, n_channels, size=motifs_per_class)) % n_channels
        lag = rng.integers(1, max_lag + 1, size=motifs_per_class)
        motifs.append(np.stack([a, b, lag], axis=1))
    clips = []
    for k in range(n_clips):
        label = k % n_classes
        x = (rng.random((n_channels, n_steps)) < noise_rate).astype(float)
        for a, b, lag in motifs[label]:
            onsets = rng.integers(0, n_steps - lag, size=repeats)
            x[a, onsets] = 1.0
            x[b, onsets + lag] = 1.0
        clips.append(LabeledClip(x, label, f"synth_{k:05d}"))
    return clips


def synth_eeg(
    n_per_class: int = 100,
    n_channels: int = 23,
    fs: int = 256,
    seconds: float = 10.0,
    seed: int = 7,
    *,
    seizure_channels: int = 8,
    seizure_amplitude: float = 1.6,
    seizure_hz: tuple[float, float] = (3.0, 6.0),
    artifact_rate: float = 0.002,
    artifact_amplitude: float = 5.0,
) -> list[LabeledClip]:
    """Surrogate normalised EEG clips, label 1 = seizure, 0 = normal.

    Both classes carry unit Gaussian background and sparse large artifacts.
    Seizure clips add a rhythmic discharge of ``seizure_amplitude`` on a random
    subset of ``seizure_channels`` channels, starting within the first second.
    The discharge sits between the background and the artifacts in amplitude,
    so a threshold between the two separates the classes best.
    """
    if not 0 < seizure_channels <= n_channels:
        raise ValueError(f"seizure_channels must be in [1, {n_channels}], got {seizure_channels}")
    rng = np.random.default_rng(seed)
    n = int(round(fs * seconds))
    t = np.arange(n) / fs
    clips = []
    for k in range(2 * n_per_class):
        label = k % 2
        x = rng.standard_normal((n_channels, n))
        art = rng.random((n_channels, n)) < artifact_rate
        x[art] += artifact_amplitude * rng.choice([-1.0, 1.0], size=int(art.sum()))
        if label:
            chans = rng.choice(n_channels, size=seizure_channels, replace=False)
            f = rng.uniform(*seizure_hz)
            onset = rng.uniform(0, 1.0)
            phase = rng.uniform(0, 2 * np.pi, size=seizure_channels)
            env = (t >= onset).astype(float)
            x[chans] += seizure_amplitude * env * np.sin(2 * np.pi * f * t + phase[:, None])
        clips.append(LabeledClip(x, label, f"eeg_{k:05d}"))
    return clips
