"""Synthetic testcase generation.

Workloads are uniform background power plus isotropic Gaussian hotspots
rescaled to a fixed total budget; PDN density maps assign one of three
templates (high/medium/low) to each of nine equal die regions; power
pads follow a checkerboard lattice with configurable pitch and offsets.
Every generator is a pure function of (master seed, case index, config),
so regenerated datasets are byte-identical.
"""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, GridFormatError
from .gridio import ChipSpec, GridMap, GridSequence, format_real, write_grid, write_sequence
from .rng import TAG_PADS, TAG_PDN, TAG_POWER, TAG_WAVE, case_rng

TEMPLATE_DENSITIES = {"high": 1.0, "medium": 0.5, "low": 0.25}
TEMPLATE_NAMES = ("high", "medium", "low")

# Transient waveform bounds: walk in [0.1, 1.4], pulse gain <= 1.4, so a
# frame's total power never exceeds 1.96x the static budget.
_WALK_STD = 0.07
_WALK_LO, _WALK_HI = 0.1, 1.4
_PULSE_PROB = 0.03
_PULSE_FRAMES = (2, 6)
_PULSE_GAIN = (1.15, 1.4)


@dataclass(frozen=True)
class PdnTemplate:
    name: str
    density: float

    def __post_init__(self):
        if not 0 < self.density <= 1:
            raise ValueError("template density must lie in (0, 1]")


@dataclass(frozen=True)
class PadLayout:
    """Checkerboard power pads: lattice sites (r, c) with
    r = offset_row, c = offset_col (mod pitch) kept only when
    (r - offset_row)/pitch + (c - offset_col)/pitch is even."""

    pitch_tiles: int
    offset_row: int
    offset_col: int
    rows: int
    cols: int
    pads: tuple = field(init=False)

    def __post_init__(self):
        if self.pitch_tiles < 1:
            raise ValueError("pitch must be positive")
        if not (0 <= self.offset_row < self.pitch_tiles
                and 0 <= self.offset_col < self.pitch_tiles):
            raise ValueError("offsets must lie in [0, pitch)")
        if self.pitch_tiles > min(self.rows, self.cols):
            raise ValueError("pitch exceeds die dimensions")
        pads = []
        for r in range(self.offset_row, self.rows, self.pitch_tiles):
            i = (r - self.offset_row) // self.pitch_tiles
            for c in range(self.offset_col, self.cols, self.pitch_tiles):
                j = (c - self.offset_col) // self.pitch_tiles
                if (i + j) % 2 == 0:
                    pads.append((r, c))
        if not pads:
            raise ValueError("empty pad layout")
        object.__setattr__(self, "pads", tuple(pads))


@dataclass(frozen=True)
class RegionAssignment:
    """3x3 grid of template names covering the die in equal-area regions."""

    names: tuple  # 3 rows x 3 cols of template names

    def __post_init__(self):
        names = tuple(tuple(row) for row in self.names)
        if len(names) != 3 or any(len(row) != 3 for row in names):
            raise ValueError("region assignment must be 3x3")
        for row in names:
            for name in row:
                if name not in TEMPLATE_DENSITIES:
                    raise ValueError(f"unknown template {name!r}")
        object.__setattr__(self, "names", names)

    def density_map(self, chip):
        """Expand to a per-tile density GridMap over the given die."""
        rows, cols = chip.rows, chip.cols
        r_edges = [rows * i // 3 for i in range(4)]
        c_edges = [cols * i // 3 for i in range(4)]
        values = np.empty((rows, cols), dtype=np.float64)
        for i in range(3):
            for j in range(3):
                d = TEMPLATE_DENSITIES[self.names[i][j]]
                values[r_edges[i]:r_edges[i + 1], c_edges[j]:c_edges[j + 1]] = d
        return GridMap(rows, cols, chip.pixel_size_um, "pdn_density", values)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the testcase generators; all draws depend only on
    (seed, case_index, stream tag)."""

    seed: int = 1
    chip: ChipSpec = field(default_factory=ChipSpec)
    n_hotspots: tuple = (2, 6)
    hotspot_sigma_tiles: tuple = (1.5, 4.0)
    power_budget_w: float = 10.0
    background_fraction: float = 0.25
    pad_pitch_tiles: tuple = (4, 8)
    frames: int = 200
    dt_seconds: float = 15.0

    def __post_init__(self):
        if self.power_budget_w <= 0:
            raise ValueError("power budget must be positive")
        if not 0 <= self.background_fraction < 1:
            raise ValueError("background fraction must lie in [0, 1)")
        if self.n_hotspots[0] > self.n_hotspots[1] or self.n_hotspots[0] < 0:
            raise ValueError("n_hotspots range is empty")
        if self.hotspot_sigma_tiles[0] > self.hotspot_sigma_tiles[1] \
                or self.hotspot_sigma_tiles[0] <= 0:
            raise ValueError("hotspot sigma range is empty")
        if self.pad_pitch_tiles[0] > self.pad_pitch_tiles[1] or self.pad_pitch_tiles[0] < 1:
            raise ValueError("pad pitch range is empty")
        if self.frames < 1 or self.dt_seconds <= 0:
            raise ValueError("frames must be >= 1 and dt positive")


def _draw_hotspots(cfg, rng):
    """Hotspot tuple list (row, col, sigma, weight) for one case."""
    k = rng.randint_inclusive(*cfg.n_hotspots)
    spots = []
    for _ in range(k):
        r = rng.uniform_in(0.0, cfg.chip.rows)
        c = rng.uniform_in(0.0, cfg.chip.cols)
        sigma = rng.uniform_in(*cfg.hotspot_sigma_tiles)
        weight = rng.uniform_in(0.5, 1.5)
        spots.append((r, c, sigma, weight))
    return spots


def _hotspot_fields(cfg, spots):
    """Per-hotspot tile maps, each rescaled so together with the uniform
    background the total equals the budget."""
    chip = cfg.chip
    rr, cc = np.meshgrid(np.arange(chip.rows) + 0.5,
                         np.arange(chip.cols) + 0.5, indexing="ij")
    fields = []
    for (r, c, sigma, weight) in spots:
        blob = weight * np.exp(-((rr - r) ** 2 + (cc - c) ** 2) / (2.0 * sigma ** 2))
        fields.append(blob)
    total = sum(f.sum() for f in fields)
    if total > 0:
        share = (1.0 - cfg.background_fraction) * cfg.power_budget_w
        fields = [f * (share / total) for f in fields]
    return fields


def _background_field(cfg, have_hotspots):
    chip = cfg.chip
    frac = cfg.background_fraction if have_hotspots else 1.0
    per_tile = frac * cfg.power_budget_w / (chip.rows * chip.cols)
    return np.full((chip.rows, chip.cols), per_tile)


def gen_power_map(cfg, case_index):
    """Static power map: uniform background plus Gaussian hotspots,
    rescaled so tile powers sum to the budget."""
    rng = case_rng(cfg.seed, case_index, TAG_POWER)
    spots = _draw_hotspots(cfg, rng)
    fields = _hotspot_fields(cfg, spots)
    if not fields and cfg.background_fraction == 0:
        raise ValueError("no power sources: zero hotspots and zero background")
    values = _background_field(cfg, bool(fields))
    for f in fields:
        values = values + f
    return GridMap(cfg.chip.rows, cfg.chip.cols, cfg.chip.pixel_size_um,
                   "power", values)


def _waveform(rng, frames):
    """Bounded random walk with occasional square pulses, per hotspot."""
    mult = np.empty(frames)
    walk = 1.0
    pulse_left = 0
    pulse_gain = 1.0
    for t in range(frames):
        if t > 0:
            walk = min(_WALK_HI, max(_WALK_LO, walk + _WALK_STD * rng.normal()))
        if pulse_left == 0 and rng.uniform() < _PULSE_PROB:
            pulse_left = rng.randint_inclusive(*_PULSE_FRAMES)
            pulse_gain = rng.uniform_in(*_PULSE_GAIN)
        if pulse_left > 0:
            mult[t] = walk * pulse_gain
            pulse_left -= 1
        else:
            mult[t] = walk
    return mult


def gen_power_sequence(cfg, case_index):
    """Transient power maps: the static hotspot geometry modulated per
    hotspot by a bounded random-walk-with-pulses waveform; the uniform
    background is constant across frames."""
    geom_rng = case_rng(cfg.seed, case_index, TAG_POWER)
    spots = _draw_hotspots(cfg, geom_rng)
    fields = _hotspot_fields(cfg, spots)
    if not fields and cfg.background_fraction == 0:
        raise ValueError("no power sources: zero hotspots and zero background")
    background = _background_field(cfg, bool(fields))
    wave_rng = case_rng(cfg.seed, case_index, TAG_WAVE)
    waves = [_waveform(wave_rng, cfg.frames) for _ in fields]
    chip = cfg.chip
    frames = []
    for t in range(cfg.frames):
        values = background.copy()
        for f, w in zip(fields, waves):
            values += f * w[t]
        frames.append(GridMap(chip.rows, chip.cols, chip.pixel_size_um,
                              "power", values))
    return GridSequence(tuple(frames), cfg.dt_seconds)


def gen_region_assignment(cfg, case_index):
    rng = case_rng(cfg.seed, case_index, TAG_PDN)
    names = tuple(tuple(TEMPLATE_NAMES[rng.randint(3)] for _ in range(3))
                  for _ in range(3))
    return RegionAssignment(names)


def gen_pdn_density(cfg, case_index):
    """Regionwise PDN density map from a random template assignment."""
    return gen_region_assignment(cfg, case_index).density_map(cfg.chip)


def gen_pad_layout(cfg, case_index):
    """Checkerboard pad layout with pitch/offsets drawn per case."""
    chip = cfg.chip
    rng = case_rng(cfg.seed, case_index, TAG_PADS)
    hi = min(cfg.pad_pitch_tiles[1], chip.rows, chip.cols)
    lo = min(cfg.pad_pitch_tiles[0], hi)
    pitch = rng.randint_inclusive(lo, hi)
    offset_row = rng.randint(pitch)
    offset_col = rng.randint(pitch)
    return PadLayout(pitch, offset_row, offset_col, chip.rows, chip.cols)


def write_pads(layout, path):
    """EDGEPADS v1: header line, 'pitch offset_row offset_col', then one
    'r c' pair per pad."""
    lines = ["EDGEPADS v1",
             f"{layout.pitch_tiles} {layout.offset_row} {layout.offset_col}"]
    lines.extend(f"{r} {c}" for r, c in layout.pads)
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise DataError(f"cannot write pad file {path}: {e}") from e


def read_pads(path, rows, cols):
    """Parse an EDGEPADS file and check the enumerated pads against the
    checkerboard rule for the given die dims."""
    if not os.path.exists(path):
        raise DataError(f"pad file not found: {path}")
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["EDGEPADS", "v1"]:
        raise GridFormatError(f"{path}: bad magic, expected 'EDGEPADS v1'", line=1)
    if len(lines) < 2:
        raise GridFormatError(f"{path}: missing pitch/offset line", line=2)
    try:
        pitch, orow, ocol = (int(tok) for tok in lines[1].split())
    except ValueError:
        raise GridFormatError(f"{path}: bad pitch/offset line", line=2) from None
    layout = PadLayout(pitch, orow, ocol, rows, cols)
    listed = []
    for i, ln in enumerate(lines[2:]):
        try:
            r, c = (int(tok) for tok in ln.split())
        except ValueError:
            raise GridFormatError(f"{path}: bad pad coordinate line", line=3 + i) from None
        listed.append((r, c))
    if tuple(listed) != layout.pads:
        raise GridFormatError(
            f"{path}: listed pads do not match checkerboard rule for {rows}x{cols} die")
    return layout


def case_id(power_index, pdn_index, pads_index):
    return f"p{power_index:04d}_d{pdn_index:04d}_b{pads_index:04d}"


@dataclass(frozen=True)
class CaseEntry:
    """One manifest line: the case id plus file paths relative to the
    manifest directory."""

    case_id: str
    power: str
    pdn: str
    pads: str
    sequence: str = None
    label: str = None


def write_manifest(entries, path):
    lines = ["EDGESET v1"]
    for e in entries:
        tokens = [e.case_id, e.power, e.pdn, e.pads]
        if e.sequence is not None:
            tokens.append(e.sequence)
        if e.label is not None:
            tokens.append(e.label)
        lines.append(" ".join(tokens))
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise DataError(f"cannot write manifest {path}: {e}") from e


def read_manifest(path, labeled=False, sequences=None):
    """Parse an EDGESET manifest.

    Unlabeled lines have 4 or 5 path tokens (5 when a sequence manifest
    is present); labeled manifests carry one extra label token. When
    ``sequences`` is None it is inferred from the token count, which is
    ambiguous for labeled manifests, so loaders pass it explicitly.
    """
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["EDGESET", "v1"]:
        raise GridFormatError(f"{path}: bad magic, expected 'EDGESET v1'", line=1)
    entries = []
    for i, ln in enumerate(lines[1:]):
        tokens = ln.split()
        base = 4 + (1 if sequences else 0)
        expect = base + (1 if labeled else 0)
        if sequences is None:
            # Infer: 4 tokens = plain, 5 = plain+seq or labeled static.
            if labeled:
                raise ValueError("labeled manifests require explicit sequences flag")
            if len(tokens) not in (4, 5):
                raise GridFormatError(f"{path}: expected 4 or 5 tokens", line=2 + i)
        elif len(tokens) != expect:
            raise GridFormatError(
                f"{path}: expected {expect} tokens, found {len(tokens)}", line=2 + i)
        seq = None
        label = None
        rest = tokens[4:]
        if sequences or (sequences is None and len(tokens) == 5):
            seq = rest[0]
            rest = rest[1:]
        if labeled:
            label = rest[0]
        entries.append(CaseEntry(tokens[0], tokens[1], tokens[2], tokens[3],
                                 sequence=seq, label=label))
    return entries


def gen_dataset(cfg, n_power, n_pdn, n_pads, out_dir, sequences=False):
    """Write the full cross product of generated inputs plus a manifest.

    Cases land in ``out_dir/cases/<case_id>/``; the manifest path is
    returned. The tree is a deterministic function of cfg and counts.
    """
    if min(n_power, n_pdn, n_pads) < 1:
        raise ValueError("all dataset counts must be >= 1")
    cases_dir = os.path.join(out_dir, "cases")
    os.makedirs(cases_dir, exist_ok=True)
    entries = []
    for i in range(n_power):
        for j in range(n_pdn):
            for k in range(n_pads):
                cid = case_id(i, j, k)
                cdir = os.path.join(cases_dir, cid)
                os.makedirs(cdir, exist_ok=True)
                rel = lambda name: os.path.join("cases", cid, name)
                write_grid(gen_power_map(cfg, i), os.path.join(cdir, "power.grid"))
                write_grid(gen_pdn_density(cfg, j), os.path.join(cdir, "pdn.grid"))
                write_pads(gen_pad_layout(cfg, k), os.path.join(cdir, "pads.txt"))
                seq_rel = None
                if sequences:
                    write_sequence(gen_power_sequence(cfg, i),
                                   os.path.join(cdir, "power.seq"))
                    seq_rel = rel("power.seq")
                entries.append(CaseEntry(cid, rel("power.grid"), rel("pdn.grid"),
                                         rel("pads.txt"), sequence=seq_rel))
    manifest = os.path.join(out_dir, "manifest.edgeset")
    write_manifest(entries, manifest)
    return manifest
