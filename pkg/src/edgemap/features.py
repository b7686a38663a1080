"""Model input channels and dataset normalization.

The IR task consumes three channels per case: the power map, the PDN
density map, and an effective pad-distance map (the harmonic sum of
each tile's Euclidean distances to every pad, a proxy for the parallel
resistance of all supply paths). Thermal tasks consume the power map
alone. Normalization is plain per-channel standardization fitted on the
training split only.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, GridFormatError
from .gridio import GridMap, format_real

TASKS = ("thermal_static", "ir_static", "thermal_transient")

CHANNELS = {
    "thermal_static": ("power",),
    "ir_static": ("power", "pdn_density", "pad_distance"),
    "thermal_transient": ("power",),
}

LABEL_KIND = {
    "thermal_static": "temperature",
    "ir_static": "ir_drop",
    "thermal_transient": "temperature",
}


def effective_pad_distance(pads, rows, cols, pixel_size_um):
    """Per-tile effective distance d_e with 1/d_e = sum_i 1/d_i over all
    pads, d_i the center-to-center Euclidean distance in micrometers,
    clamped below at half a pixel to avoid the on-pad singularity."""
    if not pads.pads:
        raise ValueError("pad set is empty")
    rr, cc = np.meshgrid((np.arange(rows) + 0.5) * pixel_size_um,
                         (np.arange(cols) + 0.5) * pixel_size_um, indexing="ij")
    inv_sum = np.zeros((rows, cols))
    clamp = pixel_size_um / 2.0
    for (pr, pc) in pads.pads:
        py = (pr + 0.5) * pixel_size_um
        px = (pc + 0.5) * pixel_size_um
        d = np.sqrt((rr - py) ** 2 + (cc - px) ** 2)
        np.maximum(d, clamp, out=d)
        inv_sum += 1.0 / d
    return GridMap(rows, cols, pixel_size_um, "pad_distance", 1.0 / inv_sum)


@dataclass(frozen=True)
class FeatureTensor:
    """Ordered input channels for one case; channel order is fixed per
    task (see CHANNELS)."""

    channels: tuple  # of GridMap

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ValueError("feature tensor needs at least one channel")
        first = channels[0]
        for ch in channels[1:]:
            if (ch.rows, ch.cols) != (first.rows, first.cols):
                raise ValueError("feature channels must share dims")
        object.__setattr__(self, "channels", channels)

    @property
    def shape(self):
        return (len(self.channels), self.channels[0].rows, self.channels[0].cols)

    def array(self, dtype=np.float64):
        return np.stack([ch.values for ch in self.channels]).astype(dtype)


def assemble_features(task, power, pdn=None, pads=None):
    """Stack the channels a task requires.

    ``power`` is a GridMap for static tasks and a GridSequence for the
    transient task (which returns one single-channel tensor per frame).
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if task == "thermal_transient":
        return [FeatureTensor((frame,)) for frame in power.frames]
    if task == "thermal_static":
        return FeatureTensor((power,))
    if pdn is None:
        raise DataError("ir_static features require a pdn_density input")
    if pads is None:
        raise DataError("ir_static features require a pad layout input")
    dist = effective_pad_distance(pads, power.rows, power.cols, power.pixel_size_um)
    return FeatureTensor((power, pdn, dist))


@dataclass(frozen=True)
class NormStats:
    """Per-channel and per-label standardization constants (population
    mean/std over all training pixels)."""

    channel_mean: tuple
    channel_std: tuple
    label_mean: float
    label_std: float

    def __post_init__(self):
        if len(self.channel_mean) != len(self.channel_std):
            raise ValueError("channel mean/std length mismatch")
        if any(s <= 0 for s in self.channel_std) or self.label_std <= 0:
            raise ValueError("normalization std must be positive (constant data?)")

    def normalize_label(self, arr):
        return (arr - self.label_mean) / self.label_std

    def denormalize_label(self, arr):
        return arr * self.label_std + self.label_mean


def fit_norm(feature_arrays, label_arrays):
    """Fit NormStats from training data only.

    feature_arrays: iterable of (C, H, W) arrays (all same C);
    label_arrays: iterable of label arrays of any matching shape.
    """
    feature_arrays = list(feature_arrays)
    label_arrays = list(label_arrays)
    if not feature_arrays or not label_arrays:
        raise ValueError("fit_norm requires nonempty training data")
    n_channels = feature_arrays[0].shape[0]
    means, stds = [], []
    for c in range(n_channels):
        pixels = np.concatenate([np.asarray(a[c], dtype=np.float64).reshape(-1)
                                 for a in feature_arrays])
        mean, std = float(pixels.mean()), float(pixels.std())
        if std <= 0:
            raise ValueError(f"channel {c} is constant; cannot normalize")
        means.append(mean)
        stds.append(std)
    label_pixels = np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1)
                                   for a in label_arrays])
    label_mean, label_std = float(label_pixels.mean()), float(label_pixels.std())
    if label_std <= 0:
        raise ValueError("labels are constant; cannot normalize")
    return NormStats(tuple(means), tuple(stds), label_mean, label_std)


def apply_norm(stats, arr):
    """Standardize a (C, H, W) or (N, C, H, W) feature array."""
    mean = np.asarray(stats.channel_mean).reshape(-1, 1, 1)
    std = np.asarray(stats.channel_std).reshape(-1, 1, 1)
    return (arr - mean) / std


def invert_norm(stats, arr):
    mean = np.asarray(stats.channel_mean).reshape(-1, 1, 1)
    std = np.asarray(stats.channel_std).reshape(-1, 1, 1)
    return arr * std + mean


def write_norm(stats, path):
    """EDGENORM v1: one 'channel <mean> <std>' line per channel, then a
    'label <mean> <std>' line."""
    lines = ["EDGENORM v1"]
    for m, s in zip(stats.channel_mean, stats.channel_std):
        lines.append(f"channel {format_real(m)} {format_real(s)}")
    lines.append(f"label {format_real(stats.label_mean)} {format_real(stats.label_std)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_norm(path):
    if not os.path.exists(path):
        raise DataError(f"normalization file not found: {path}")
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["EDGENORM", "v1"]:
        raise GridFormatError(f"{path}: bad magic, expected 'EDGENORM v1'", line=1)
    means, stds = [], []
    label = None
    for i, ln in enumerate(lines[1:]):
        tokens = ln.split()
        if len(tokens) != 3 or tokens[0] not in ("channel", "label"):
            raise GridFormatError(f"{path}: expected 'channel|label <mean> <std>'",
                                  line=2 + i)
        try:
            mean, std = float(tokens[1]), float(tokens[2])
        except ValueError:
            raise GridFormatError(f"{path}: non-numeric stat token", line=2 + i) from None
        if tokens[0] == "channel":
            means.append(mean)
            stds.append(std)
        else:
            label = (mean, std)
    if label is None or not means:
        raise GridFormatError(f"{path}: missing channel or label line")
    return NormStats(tuple(means), tuple(stds), label[0], label[1])
