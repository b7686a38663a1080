"""Grid data model and its on-disk formats.

A GridMap is a 2-D scalar field over die tiles; a GridSequence is a
uniformly time-stepped list of them. Files are plain text so runs diff
cleanly and round-trip across languages:

  EDGEGRID v1   line 1 ``EDGEGRID v1 <kind>``, line 2
                ``<rows> <cols> <pixel_size_um>``, then one line of
                space-separated decimals per row (shortest round-trip
                representation).
  EDGESEQ v1    line 1 ``EDGESEQ v1 <dt_seconds>``, then one grid-file
                path per line (relative to the manifest), time order.
  PGM (P2)      255 gray levels, linear min-max normalization, with the
                original range recorded in a ``# min=... max=...`` comment.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GridFormatError

KINDS = ("power", "temperature", "ir_drop", "pdn_density", "pad_distance")

# Kinds that must be nonnegative everywhere.
_NONNEG_KINDS = ("power", "pdn_density", "pad_distance")


def format_real(v):
    """Shortest decimal that round-trips to the same float; integral
    values drop the trailing '.0'."""
    v = float(v)
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True)
class GridMap:
    """A per-tile scalar field (power W, temperature degC, IR drop V,
    PDN density in (0,1], or pad distance um)."""

    rows: int
    cols: int
    pixel_size_um: float
    kind: str
    values: np.ndarray  # shape (rows, cols), float64

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError(f"grid dims must be positive, got {self.rows}x{self.cols}")
        if self.pixel_size_um <= 0:
            raise ValueError("pixel_size_um must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.rows, self.cols):
            raise ValueError(
                f"values shape {vals.shape} does not match {self.rows}x{self.cols}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{self.kind} map contains non-finite values")
        if self.kind in _NONNEG_KINDS and np.any(vals < 0):
            raise ValueError(f"{self.kind} map must be nonnegative")
        if self.kind == "pdn_density" and (np.any(vals <= 0) or np.any(vals > 1)):
            raise ValueError("pdn_density values must lie in (0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values, kind=None):
        return GridMap(self.rows, self.cols, self.pixel_size_um,
                       kind or self.kind, values)


@dataclass(frozen=True)
class GridSequence:
    """Frames of identical shape and kind at a constant time step."""

    frames: tuple
    dt_seconds: float

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("sequence must contain at least one frame")
        if self.dt_seconds <= 0:
            raise ValueError("dt_seconds must be positive")
        first = frames[0]
        for f in frames[1:]:
            if (f.rows, f.cols, f.kind) != (first.rows, first.cols, first.kind):
                raise ValueError("all frames must share dims and kind")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    @property
    def duration_seconds(self):
        return len(self.frames) * self.dt_seconds


@dataclass(frozen=True)
class ChipSpec:
    """Fixed technology/package model: die tiling, supply, and the
    lumped thermal constants used by the golden solvers.

    The defaults describe a 34x32-tile die of 250 um pixels
    (8.5 mm x 8.0 mm) at VDD 0.7 V with a 105 degC thermal corner. The
    physical constants are named defaults chosen for plausible map
    magnitudes; golden labels are reproducible because they are pinned
    here rather than inferred.
    """

    rows: int = 34
    cols: int = 32
    pixel_size_um: float = 250.0
    vdd_volts: float = 0.7
    ambient_c: float = 25.0
    thermal_corner_c: float = 105.0
    lateral_thermal_conductance_w_per_c: float = 0.02
    ambient_thermal_conductance_w_per_c: float = 4.0e-4
    thermal_capacitance_j_per_c: float = 0.24
    unit_sheet_conductance_s: float = 40.0

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0 or self.pixel_size_um <= 0:
            raise ValueError("die dimensions must be positive")
        if self.vdd_volts <= 0:
            raise ValueError("vdd_volts must be positive")
        for name in ("lateral_thermal_conductance_w_per_c",
                     "ambient_thermal_conductance_w_per_c",
                     "thermal_capacitance_j_per_c",
                     "unit_sheet_conductance_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.thermal_corner_c <= self.ambient_c:
            raise ValueError("thermal_corner_c must exceed ambient_c")


@dataclass(frozen=True)
class CropRecord:
    """Rows/cols added by pad_to_multiple; crop() removes them again."""

    top: int = 0
    bottom: int = 0
    left: int = 0
    right: int = 0

    @property
    def empty(self):
        return self.top == self.bottom == self.left == self.right == 0

    def crop_array(self, arr):
        r0, r1 = self.top, arr.shape[-2] - self.bottom
        c0, c1 = self.left, arr.shape[-1] - self.right
        return arr[..., r0:r1, c0:c1]

    def crop(self, grid):
        return GridMap(grid.rows - self.top - self.bottom,
                       grid.cols - self.left - self.right,
                       grid.pixel_size_um, grid.kind,
                       self.crop_array(grid.values).copy())


def pad_array_to_multiple(arr, m):
    """Edge-replicate a 2-D array up to the next multiples of m.

    Extra rows/cols split as evenly as possible, remainder on the
    bottom/right. Returns (padded, CropRecord).
    """
    if m < 1:
        raise ValueError("pad multiple must be >= 1")
    rows, cols = arr.shape
    pr = (-rows) % m
    pc = (-cols) % m
    rec = CropRecord(top=pr // 2, bottom=pr - pr // 2,
                     left=pc // 2, right=pc - pc // 2)
    if rec.empty:
        return arr, rec
    padded = np.pad(arr, ((rec.top, rec.bottom), (rec.left, rec.right)), mode="edge")
    return padded, rec


def pad_to_multiple(grid, m):
    """GridMap version of pad_array_to_multiple."""
    padded, rec = pad_array_to_multiple(grid.values, m)
    if rec.empty:
        return grid, rec
    out = GridMap(padded.shape[0], padded.shape[1], grid.pixel_size_um,
                  grid.kind, padded)
    return out, rec


def write_grid(grid, path):
    """Write an EDGEGRID v1 file; byte-identical for identical maps."""
    lines = [f"EDGEGRID v1 {grid.kind}",
             f"{grid.rows} {grid.cols} {format_real(grid.pixel_size_um)}"]
    for r in range(grid.rows):
        lines.append(" ".join(format_real(v) for v in grid.values[r]))
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise DataError(f"cannot write grid file {path}: {e}") from e


def read_grid(path):
    """Parse an EDGEGRID v1 file, rejecting malformed headers/bodies."""
    if not os.path.exists(path):
        raise DataError(f"grid file not found: {path}")
    with open(path) as f:
        raw = f.read()
    lines = raw.splitlines()
    if not lines:
        raise GridFormatError(f"{path}: empty file", line=1)
    header = lines[0].split()
    if len(header) != 3 or header[0] != "EDGEGRID" or header[1] != "v1":
        raise GridFormatError(f"{path}: bad magic, expected 'EDGEGRID v1 <kind>'", line=1)
    kind = header[2]
    if kind not in KINDS:
        raise GridFormatError(f"{path}: unknown grid kind {kind!r}", line=1)
    if len(lines) < 2:
        raise GridFormatError(f"{path}: missing dimension line", line=2)
    dims = lines[1].split()
    if len(dims) != 3:
        raise GridFormatError(f"{path}: expected '<rows> <cols> <pixel_size_um>'", line=2)
    try:
        rows, cols, pixel = int(dims[0]), int(dims[1]), float(dims[2])
    except ValueError:
        raise GridFormatError(f"{path}: non-numeric dimension token", line=2) from None
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != rows:
        raise GridFormatError(
            f"{path}: row-count mismatch, header claims {rows} rows, body has {len(body)}",
            line=2 + min(len(body), rows) + 1)
    values = np.empty((rows, cols), dtype=np.float64)
    for r, ln in enumerate(body):
        tokens = ln.split()
        if len(tokens) != cols:
            raise GridFormatError(
                f"{path}: row {r} has {len(tokens)} columns, expected {cols}",
                line=3 + r)
        for c, tok in enumerate(tokens):
            try:
                values[r, c] = float(tok)
            except ValueError:
                raise GridFormatError(
                    f"{path}: non-numeric token {tok!r} at row {r} col {c}",
                    line=3 + r) from None
    return GridMap(rows, cols, pixel, kind, values)


def write_sequence(seq, manifest_path):
    """Write an EDGESEQ manifest plus one grid file per frame next to it."""
    directory = os.path.dirname(os.path.abspath(manifest_path))
    stem = os.path.splitext(os.path.basename(manifest_path))[0]
    names = []
    for i, frame in enumerate(seq.frames):
        name = f"{stem}_f{i:04d}.grid"
        write_grid(frame, os.path.join(directory, name))
        names.append(name)
    try:
        with open(manifest_path, "w") as f:
            f.write(f"EDGESEQ v1 {format_real(seq.dt_seconds)}\n")
            f.write("\n".join(names) + "\n")
    except OSError as e:
        raise DataError(f"cannot write sequence manifest {manifest_path}: {e}") from e


def read_sequence(manifest_path):
    if not os.path.exists(manifest_path):
        raise DataError(f"sequence manifest not found: {manifest_path}")
    directory = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path) as f:
        lines = [ln.strip() for ln in f.read().splitlines()]
    if not lines:
        raise GridFormatError(f"{manifest_path}: empty manifest", line=1)
    header = lines[0].split()
    if len(header) != 3 or header[0] != "EDGESEQ" or header[1] != "v1":
        raise GridFormatError(f"{manifest_path}: bad magic, expected 'EDGESEQ v1 <dt>'", line=1)
    try:
        dt = float(header[2])
    except ValueError:
        raise GridFormatError(f"{manifest_path}: non-numeric dt token", line=1) from None
    frames = [read_grid(os.path.join(directory, name))
              for name in lines[1:] if name]
    if not frames:
        raise GridFormatError(f"{manifest_path}: manifest lists no frames", line=2)
    return GridSequence(tuple(frames), dt)


def export_pgm(grid, path):
    """Render a grid as a plain-text PGM (P2), 255 gray levels.

    Linear min-max normalization with round-half-up; a constant map
    renders as all zeros. The physical range is kept in a comment.
    """
    vals = grid.values
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        pixels = np.floor((vals - lo) / (hi - lo) * 255.0 + 0.5).astype(np.int64)
    else:
        pixels = np.zeros_like(vals, dtype=np.int64)
    lines = ["P2",
             f"# min={format_real(lo)} max={format_real(hi)}",
             f"{grid.cols} {grid.rows}",
             "255"]
    for r in range(grid.rows):
        lines.append(" ".join(str(int(p)) for p in pixels[r]))
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise DataError(f"cannot write PGM file {path}: {e}") from e
