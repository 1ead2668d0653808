"""Corpus ingestion, the train/validation split, and a procedural
synthetic corpus so the full pipeline runs without the real dataset.

Disk layout contract: per sample, four 8- or 16-bit grayscale PNGs named
``{Id}_{channel}.png`` with channel in {red, green, blue, yellow}, plus a
labels CSV with header ``Id,Target`` where Target is a space-separated
list of class ids.  Channel order is fixed everywhere: red (microtubules),
green (protein of interest), blue (nucleus), yellow (ER).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, DataFormatError
from .resample import area_resample, bicubic_resample

CHANNELS = ("red", "green", "blue", "yellow")
NUM_CLASSES = 28

# value-range tags for MultiChannelImage
RANGE_UNIT = "unit"        # [0, 1]
RANGE_SIGNED = "signed"    # [-1, 1]


@dataclass
class SampleRecord:
    id: str
    labels: frozenset[int]
    channel_paths: dict[str, Path]


@dataclass
class MultiChannelImage:
    """4-channel float image; ``pixels`` is [4, H, W] in the tagged range."""

    pixels: np.ndarray
    value_range: str = RANGE_UNIT

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != len(CHANNELS):
            raise DataFormatError(
                f"expected [4, H, W] pixels, got shape {self.pixels.shape}")
        lo, hi = (-1.0, 1.0) if self.value_range == RANGE_SIGNED else (0.0, 1.0)
        if self.pixels.size and (self.pixels.min() < lo - 1e-6 or self.pixels.max() > hi + 1e-6):
            raise DataFormatError(
                f"pixel values outside declared range {self.value_range}")

    @property
    def resolution(self) -> int:
        return self.pixels.shape[1]

    def to_signed(self) -> "MultiChannelImage":
        if self.value_range == RANGE_SIGNED:
            return self
        return MultiChannelImage(self.pixels * 2.0 - 1.0, RANGE_SIGNED)

    def to_unit(self) -> "MultiChannelImage":
        if self.value_range == RANGE_UNIT:
            return self
        return MultiChannelImage((self.pixels + 1.0) * 0.5, RANGE_UNIT)


@dataclass
class Corpus:
    """In-memory decoded corpus: images [N,4,H,W] float32, multi-hot labels."""

    images: np.ndarray
    labels: np.ndarray
    ids: list[str] = field(default_factory=list)

    def __len__(self):
        return self.images.shape[0]


def parse_label_field(field_text: str, row_id: str) -> frozenset[int]:
    labels = set()
    for token in field_text.split():
        try:
            value = int(token)
        except ValueError:
            raise DataFormatError(
                f"row {row_id!r}: malformed label token {token!r}") from None
        if not 0 <= value < NUM_CLASSES:
            raise DataFormatError(
                f"row {row_id!r}: class id {value} outside [0, {NUM_CLASSES})")
        labels.add(value)
    return frozenset(labels)


def load_corpus(image_dir, labels_csv) -> list[SampleRecord]:
    """Read the labels CSV and verify all four channel files exist."""
    image_dir = Path(image_dir)
    labels_csv = Path(labels_csv)
    if not labels_csv.is_file():
        raise DataFormatError(f"labels CSV not found: {labels_csv}")
    records: list[SampleRecord] = []
    seen: set[str] = set()
    with open(labels_csv, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["Id", "Target"]:
            raise DataFormatError(
                f"{labels_csv}: expected header 'Id,Target', got {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{labels_csv}: malformed row {row}")
            sample_id, target = row
            if sample_id in seen:
                raise DataFormatError(f"duplicate id {sample_id!r} in {labels_csv}")
            seen.add(sample_id)
            paths = {}
            for channel in CHANNELS:
                path = image_dir / f"{sample_id}_{channel}.png"
                if not path.is_file():
                    raise DataFormatError(
                        f"sample {sample_id!r}: missing {channel} channel file {path}")
                paths[channel] = path
            records.append(SampleRecord(sample_id, parse_label_field(target, sample_id), paths))
    return records


def _decode_channel(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataFormatError(f"cannot decode {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataFormatError(f"{path}: expected grayscale, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == np.int32:  # Pillow loads some 16-bit PNGs as mode "I"
        return arr.astype(np.float64) / 65535.0
    raise DataFormatError(f"{path}: unsupported pixel type {arr.dtype}")


def decode_image(record: SampleRecord, target_size: int,
                 value_range: str = RANGE_UNIT) -> MultiChannelImage:
    """Decode all four channels, rescale to [0,1], resample to target_size.

    Downscaling uses anti-aliased area averaging; upscaling (loading small
    generated images into a larger classifier input) uses the bicubic path.
    """
    channels = []
    for name in CHANNELS:
        chan = _decode_channel(record.channel_paths[name])
        if chan.shape[0] != chan.shape[1]:
            raise DataFormatError(
                f"{record.channel_paths[name]}: non-square channel {chan.shape}")
        if target_size <= chan.shape[0]:
            chan = area_resample(chan, target_size, target_size)
        else:
            chan = np.clip(bicubic_resample(chan, target_size, target_size), 0.0, 1.0)
        channels.append(chan)
    pixels = np.stack(channels).astype(np.float32)
    image = MultiChannelImage(pixels, RANGE_UNIT)
    return image.to_signed() if value_range == RANGE_SIGNED else image


def load_images(records: list[SampleRecord], target_size: int,
                value_range: str = RANGE_UNIT) -> Corpus:
    images = np.stack([decode_image(r, target_size, value_range).pixels
                       for r in records])
    labels = np.zeros((len(records), NUM_CLASSES), dtype=np.float32)
    for i, record in enumerate(records):
        for c in record.labels:
            labels[i, c] = 1.0
    return Corpus(images, labels, [r.id for r in records])


def split(records: list, train_fraction: float = 0.9, seed: int = 0):
    """Deterministic shuffled split; train gets floor(fraction * N)."""
    if len(records) < 10:
        raise ConfigurationError(
            f"need at least 10 records to split, got {len(records)}")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction must be in (0,1), got {train_fraction}")
    order = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=int(seed), spawn_key=(1,)))).permutation(len(records))
    n_train = int(np.floor(train_fraction * len(records)))
    train = [records[i] for i in order[:n_train]]
    val = [records[i] for i in order[n_train:]]
    return train, val


def split_corpus(corpus: Corpus, train_fraction: float = 0.9, seed: int = 0):
    indices = list(range(len(corpus)))
    train_idx, val_idx = split(indices, train_fraction, seed)
    def take(idx):
        return Corpus(corpus.images[idx], corpus.labels[idx],
                      [corpus.ids[i] for i in idx])
    return take(train_idx), take(val_idx)


# ---------------------------------------------------------------------------
# Procedural synthetic corpus
# ---------------------------------------------------------------------------

def _grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return ys, xs


def _blob(ys, xs, cy, cx, sigma, amplitude=1.0):
    return amplitude * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma ** 2))


def _green_motif(class_id: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Class identity: 1-7 blobs on one of four rings; count, radius and
    phase are all functions of the class id, so class means are separable."""
    ys, xs = _grid(size)
    count = 1 + class_id % 7
    ring = class_id // 7
    radius = (0.20 + 0.19 * ring) * (size / 2.0)
    phase = 2.0 * np.pi * class_id / 28.0 + rng.normal(0.0, 0.04)
    sigma = size / 16.0
    center = (size - 1) / 2.0
    canvas = np.zeros((size, size))
    for j in range(count):
        angle = phase + 2.0 * np.pi * j / count
        cy = center + radius * np.sin(angle) + rng.normal(0.0, 0.5)
        cx = center + radius * np.cos(angle) + rng.normal(0.0, 0.5)
        canvas += _blob(ys, xs, cy, cx, sigma, amplitude=rng.uniform(0.85, 1.0))
    return np.clip(canvas, 0.0, 1.0)


def _structural_channels(size: int, rng: np.random.Generator) -> np.ndarray:
    """Nucleus / microtubule / ER textures shared across classes."""
    ys, xs = _grid(size)
    center = (size - 1) / 2.0
    nucleus = _blob(ys, xs, center + rng.normal(0, 0.5), center + rng.normal(0, 0.5),
                    size / 5.0, amplitude=rng.uniform(0.7, 0.9))
    freq = 2.0 * np.pi / size
    shift = rng.uniform(0, size)
    tubules = 0.35 * (1.0 + np.sin(freq * (xs + ys + shift)) *
                      np.cos(freq * 2.0 * (xs - ys)))
    r = np.sqrt((ys - center) ** 2 + (xs - center) ** 2)
    er = 0.6 * np.exp(-((r - size / 3.0) ** 2) / (2 * (size / 8.0) ** 2))
    return np.stack([np.clip(tubules, 0, 1), np.clip(nucleus, 0, 1), np.clip(er, 0, 1)])


def render_class_image(class_ids, size: int, rng: np.random.Generator) -> np.ndarray:
    """[4, size, size] float32 image in [0,1] for one or more class motifs."""
    green = np.zeros((size, size))
    for class_id in class_ids:
        green = np.maximum(green, _green_motif(class_id, size, rng))
    structural = _structural_channels(size, rng)
    pixels = np.stack([structural[0], green, structural[1], structural[2]])
    noise = rng.normal(0.0, 0.02, size=pixels.shape)
    return np.clip(pixels + noise, 0.0, 1.0).astype(np.float32)


def synth_corpus(rng: np.random.Generator, per_class: int, size: int,
                 class_count: int = NUM_CLASSES,
                 extra_label_rate: float = 0.0) -> Corpus:
    """Procedural corpus: per_class samples of each class, labels exact by
    construction; extra_label_rate composites a second class motif onto
    that fraction of samples (multi-label mode)."""
    if per_class < 1:
        raise ConfigurationError(f"per_class must be >= 1, got {per_class}")
    if size < 16:
        raise ConfigurationError(f"size must be >= 16, got {size}")
    images = []
    labels = np.zeros((per_class * class_count, NUM_CLASSES), dtype=np.float32)
    ids = []
    row = 0
    for class_id in range(class_count):
        for index in range(per_class):
            class_ids = [class_id]
            if extra_label_rate > 0 and rng.uniform() < extra_label_rate:
                other = int(rng.integers(class_count))
                if other != class_id:
                    class_ids.append(other)
            images.append(render_class_image(class_ids, size, rng))
            for c in class_ids:
                labels[row, c] = 1.0
            ids.append(f"synth{class_id:02d}_{index:04d}")
            row += 1
    return Corpus(np.stack(images), labels, ids)


# ---------------------------------------------------------------------------
# Disk I/O in the corpus layout
# ---------------------------------------------------------------------------

def write_channel_png(path, channel: np.ndarray) -> None:
    """Quantize a [H, W] float [0,1] channel to 8-bit grayscale PNG."""
    data = np.clip(np.round(channel * 255.0), 0, 255).astype(np.uint8)
    try:
        Image.fromarray(data, mode="L").save(path)
    except OSError as exc:
        raise DataFormatError(f"cannot write {path}: {exc}") from exc


def save_corpus(corpus: Corpus, out_dir, csv_name: str = "labels.csv") -> Path:
    """Dump a corpus to disk in the standard layout; returns the CSV path."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / csv_name
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Id", "Target"])
        for i, sample_id in enumerate(corpus.ids):
            classes = sorted(np.flatnonzero(corpus.labels[i] > 0.5).tolist())
            writer.writerow([sample_id, " ".join(str(c) for c in classes)])
            for c, channel in enumerate(CHANNELS):
                write_channel_png(image_dir / f"{sample_id}_{channel}.png",
                                  corpus.images[i, c])
    return csv_path


def write_predictions_csv(path, ids: list[str], preds: np.ndarray) -> None:
    """Prediction CSV: header Id,Predicted; ascending class ids, may be empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Id", "Predicted"])
        for sample_id, row in zip(ids, preds):
            classes = sorted(np.flatnonzero(np.asarray(row) > 0).tolist())
            writer.writerow([sample_id, " ".join(str(c) for c in classes)])
