"""Dataset splitting, the training loop, and evaluation reporting.

Training minimizes pixelwise MSE on normalized labels with ADAM and
keeps the parameters of the best validation epoch. Evaluation reports
per-case average/maximum absolute error in physical units, percentages
against a corner value (the thermal corner for temperature, VDD for IR
drop), a pooled error histogram, and per-case inference wall time.
"""

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import golden, models, synth
from .errors import DataError, TrainingDivergedError
from .features import (CHANNELS, LABEL_KIND, FeatureTensor, apply_norm,
                       assemble_features, fit_norm)
from .gridio import (GridMap, GridSequence, pad_array_to_multiple, read_grid,
                     read_sequence, write_grid, write_sequence)
from .nn import AdamState, adam_step, mse_loss
from .rng import TAG_SHUFFLE, TAG_SPLIT, Pcg32, case_rng, stream_hash
from .synth import CaseEntry, read_manifest, read_pads, write_manifest


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 1

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if min(self.train, self.val, self.test) < 0:
            raise ValueError("split fractions must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 8
    seed: int = 1
    base_lr: float = 1e-3
    decay_rate: float = 0.98
    decay_steps: int = 1000
    l2_rate: float = 1e-5
    checkpoint_interval: int = 0  # epochs; 0 disables file checkpoints
    early_stop_patience: int = None  # epochs without val improvement; None = off

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def split(entries, spec):
    """Deterministic, disjoint, exhaustive split honoring the fractions
    by largest remainder. Returns (train, val, test) entry lists."""
    n = len(entries)
    if n < 10:
        raise DataError(f"need at least 10 cases to split, have {n}")
    raw = [spec.train * n, spec.val * n, spec.test * n]
    counts = [int(f) for f in raw]
    remainders = [r - c for r, c in zip(raw, counts)]
    for _ in range(n - sum(counts)):
        i = max(range(3), key=lambda j: (remainders[j], -j))
        counts[i] += 1
        remainders[i] = -1.0
    order = list(range(n))
    Pcg32(spec.seed ^ stream_hash(0, TAG_SPLIT), stream=TAG_SPLIT).shuffle(order)
    shuffled = [entries[i] for i in order]
    train = shuffled[:counts[0]]
    val = shuffled[counts[0]:counts[0] + counts[1]]
    test = shuffled[counts[0] + counts[1]:]
    return train, val, test


@dataclass
class LoadedCase:
    case_id: str
    features: object  # FeatureTensor, or list of them for transient
    label: object = None  # GridMap / GridSequence


def _resolve(base_dir, rel):
    return os.path.join(base_dir, rel)


def load_case(entry, base_dir, task, with_label=True):
    power = read_grid(_resolve(base_dir, entry.power))
    if task == "ir_static":
        pdn = read_grid(_resolve(base_dir, entry.pdn))
        pads = read_pads(_resolve(base_dir, entry.pads), power.rows, power.cols)
        features = assemble_features(task, power, pdn=pdn, pads=pads)
    elif task == "thermal_static":
        features = assemble_features(task, power)
    elif task == "thermal_transient":
        if entry.sequence is None:
            raise DataError(f"case {entry.case_id}: no power sequence in manifest")
        seq = read_sequence(_resolve(base_dir, entry.sequence))
        features = assemble_features(task, seq)
    else:
        raise ValueError(f"unknown task {task!r}")
    label = None
    if with_label:
        if entry.label is None:
            raise DataError(f"case {entry.case_id}: manifest has no label column")
        if task == "thermal_transient":
            label = read_sequence(_resolve(base_dir, entry.label))
        else:
            label = read_grid(_resolve(base_dir, entry.label))
    return LoadedCase(entry.case_id, features, label)


def load_cases(manifest_path, task, with_label=True):
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    entries = read_manifest(manifest_path, labeled=with_label,
                            sequences=(task == "thermal_transient"))
    return [load_case(e, base_dir, task, with_label=with_label) for e in entries]


def _label_one(args):
    """Worker for golden labeling; writes the label next to the case files."""
    entry, base_dir, task, chip = args
    power = read_grid(_resolve(base_dir, entry.power))
    case_dir = os.path.dirname(_resolve(base_dir, entry.power))
    rel_dir = os.path.dirname(entry.power)
    if task == "ir_static":
        pdn = read_grid(_resolve(base_dir, entry.pdn))
        pads = read_pads(_resolve(base_dir, entry.pads), power.rows, power.cols)
        label = golden.ir_drop_map(power, pdn, pads, chip)
        name = "label_ir.grid"
        write_grid(label, os.path.join(case_dir, name))
    elif task == "thermal_static":
        label = golden.temperature_map(power, chip)
        name = "label_thermal.grid"
        write_grid(label, os.path.join(case_dir, name))
    elif task == "thermal_transient":
        seq = read_sequence(_resolve(base_dir, entry.sequence))
        label = golden.solve_transient_thermal(seq, chip)
        name = "label_thermal.seq"
        write_sequence(label, os.path.join(case_dir, name))
    else:
        raise ValueError(f"unknown task {task!r}")
    return replace(entry, label=os.path.join(rel_dir, name))


def label_dataset(manifest_path, task, chip, parallel=1):
    """Run the golden solver over every case; returns the path of the
    labeled manifest written next to the input manifest."""
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    entries = read_manifest(manifest_path, labeled=False,
                            sequences=(task == "thermal_transient"))
    jobs = [(e, base_dir, task, chip) for e in entries]
    if parallel > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallel) as pool:
            labeled = list(pool.map(_label_one, jobs))
    else:
        labeled = [_label_one(j) for j in jobs]
    out = os.path.join(base_dir, f"labeled_{task}.edgeset")
    write_manifest(labeled, out)
    return out


def _case_feature_arrays(case, task):
    if task == "thermal_transient":
        return [ft.array() for ft in case.features]
    return [case.features.array()]


def _case_label_arrays(case, task):
    if task == "thermal_transient":
        return [f.values for f in case.label.frames]
    return [case.label.values]


def _prep_static(cases, norm, multiple):
    xs, ys = [], []
    for case in cases:
        arr = case.features.array()
        padded = np.stack([pad_array_to_multiple(c, multiple)[0] for c in arr])
        xs.append(apply_norm(norm, padded))
        lab, _ = pad_array_to_multiple(case.label.values, multiple)
        ys.append(norm.normalize_label(lab)[None])
    return (np.stack(xs).astype(np.float32), np.stack(ys).astype(np.float32))


def _prep_transient(cases, norm, multiple):
    xs, ys = [], []
    for case in cases:
        fx, fy = [], []
        for ft, lab in zip(case.features, case.label.frames):
            arr = np.stack([pad_array_to_multiple(c, multiple)[0]
                            for c in ft.array()])
            fx.append(apply_norm(norm, arr))
            pl, _ = pad_array_to_multiple(lab.values, multiple)
            fy.append(norm.normalize_label(pl)[None])
        xs.append(np.stack(fx))
        ys.append(np.stack(fy))
    return (np.stack(xs).astype(np.float32), np.stack(ys).astype(np.float32))


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


def write_train_log(log, path):
    with open(path, "w") as f:
        f.write("epoch,train_loss,val_loss,lr,seconds\n")
        for row in log:
            f.write(f"{row.epoch},{row.train_loss!r},{row.val_loss!r},"
                    f"{row.lr!r},{row.seconds:.3f}\n")


def _forward_loss(net, task, x, y, train):
    if task == "thermal_transient":
        pred = net.forward_sequence(x, train=train)
    else:
        pred = net.forward(x, train=train)
    return mse_loss(pred, y)


def _eval_loss(net, task, x, y, batch_size):
    total = 0.0
    for lo in range(0, x.shape[0], batch_size):
        xb = x[lo:lo + batch_size]
        yb = y[lo:lo + batch_size]
        loss, _ = _forward_loss(net, task, xb, yb, train=False)
        total += loss * xb.shape[0]
    return total / x.shape[0]


def train(task, train_cases, val_cases, model_cfg, cfg, log_path=None,
          checkpoint_path=None):
    """Train on normalized, padded arrays; returns (ModelBundle, log).

    Normalization statistics come from the training cases alone. The
    bundle carries the parameters of the epoch with the lowest
    validation loss.
    """
    features = [a for c in train_cases for a in _case_feature_arrays(c, task)]
    labels = [a for c in train_cases for a in _case_label_arrays(c, task)]
    norm = fit_norm(features, labels)

    multiple = 1 << model_cfg.depth
    if task == "thermal_transient":
        net = models.build_transient(model_cfg, cfg.seed)
        x_train, y_train = _prep_transient(train_cases, norm, multiple)
        x_val, y_val = _prep_transient(val_cases, norm, multiple)
    else:
        net = models.build_static(model_cfg, cfg.seed)
        x_train, y_train = _prep_static(train_cases, norm, multiple)
        x_val, y_val = _prep_static(val_cases, norm, multiple)

    adam = AdamState(base_lr=cfg.base_lr, decay_rate=cfg.decay_rate,
                     decay_steps=cfg.decay_steps, l2_rate=cfg.l2_rate)
    bundle = models.ModelBundle(task, model_cfg, net, norm)
    n = x_train.shape[0]
    order = list(range(n))
    best_val = np.inf
    best_params = None
    since_best = 0
    log = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        case_rng(cfg.seed, epoch, TAG_SHUFFLE).shuffle(order)
        total = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            xb = np.ascontiguousarray(x_train[idx])
            yb = np.ascontiguousarray(y_train[idx])
            net.zero_grad()
            loss, dpred = _forward_loss(net, task, xb, yb, train=True)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} batch {b}",
                    epoch=epoch, batch=b)
            if task == "thermal_transient":
                net.backward_sequence(dpred)
            else:
                net.backward(dpred)
            adam_step(adam, net.params())
            total += loss * len(idx)
        train_loss = total / n
        val_loss = _eval_loss(net, task, x_val, y_val, cfg.batch_size)
        log.append(EpochLog(epoch, train_loss, val_loss, adam.lr,
                            time.perf_counter() - t0))
        if val_loss < best_val:
            best_val = val_loss
            best_params = [w.copy() for (_, w, _) in net.params()]
            since_best = 0
        else:
            since_best += 1
        if checkpoint_path and cfg.checkpoint_interval \
                and epoch % cfg.checkpoint_interval == 0:
            models.save(bundle, checkpoint_path)
        if cfg.early_stop_patience and since_best >= cfg.early_stop_patience:
            break
    if best_params is not None:
        for (_, w, _), snap in zip(net.params(), best_params):
            w[...] = snap
    if log_path:
        write_train_log(log, log_path)
    return bundle, log


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    avg_err: float
    max_err: float
    percent_avg: float
    percent_max: float
    infer_ms: float


@dataclass(frozen=True)
class ErrorReport:
    task: str
    corner: float
    cases: tuple
    avg_err: float
    max_err: float
    percent_avg: float
    percent_max: float
    hist_edges: tuple
    hist_counts: tuple


def _abs_errors(pred, label, task):
    if task == "thermal_transient":
        return np.concatenate([
            np.abs(p.values - l.values).reshape(-1)
            for p, l in zip(pred.frames, label.frames)])
    if pred.values.shape != label.values.shape:
        raise DataError(f"prediction {pred.values.shape} does not match "
                        f"label {label.values.shape}")
    return np.abs(pred.values - label.values).reshape(-1)


def evaluate(bundle, cases, corner, bins=50):
    """Per-case and aggregate error report in physical units."""
    results = []
    pooled = []
    for case in cases:
        t0 = time.perf_counter()
        pred = infer_case(bundle, case)
        ms = (time.perf_counter() - t0) * 1e3
        err = _abs_errors(pred, case.label, bundle.task)
        avg, mx = float(err.mean()), float(err.max())
        results.append(CaseResult(case.case_id, avg, mx,
                                  100.0 * avg / corner, 100.0 * mx / corner, ms))
        pooled.append(err)
    pooled = np.concatenate(pooled)
    top = float(pooled.max())
    counts, edges = np.histogram(pooled, bins=bins,
                                 range=(0.0, top if top > 0 else 1.0))
    avg_err = float(np.mean([r.avg_err for r in results]))
    max_err = float(np.max([r.max_err for r in results]))
    return ErrorReport(bundle.task, corner, tuple(results), avg_err, max_err,
                       100.0 * avg_err / corner, 100.0 * max_err / corner,
                       tuple(float(e) for e in edges),
                       tuple(int(c) for c in counts))


def infer_case(bundle, case):
    if bundle.task == "thermal_transient":
        return models.infer(bundle, case.features,
                            dt_seconds=case.label.dt_seconds if case.label else None)
    return models.infer(bundle, case.features)


def measure_runtime(bundle, case, repetitions=5):
    """Median wall-clock milliseconds of infer(), file I/O excluded."""
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        infer_case(bundle, case)
        times.append((time.perf_counter() - t0) * 1e3)
    times.sort()
    mid = len(times) // 2
    if len(times) % 2:
        return times[mid]
    return 0.5 * (times[mid - 1] + times[mid])


def write_report_csv(report, path):
    with open(path, "w") as f:
        f.write("case_id,avg_err,max_err,percent_avg,percent_max,infer_ms\n")
        for r in report.cases:
            f.write(f"{r.case_id},{r.avg_err!r},{r.max_err!r},"
                    f"{r.percent_avg!r},{r.percent_max!r},{r.infer_ms:.3f}\n")
        f.write(f"AGGREGATE,{report.avg_err!r},{report.max_err!r},"
                f"{report.percent_avg!r},{report.percent_max!r},\n")


def write_histogram_csv(report, path):
    with open(path, "w") as f:
        f.write("bin_lo,bin_hi,count\n")
        for i, count in enumerate(report.hist_counts):
            f.write(f"{report.hist_edges[i]!r},{report.hist_edges[i + 1]!r},{count}\n")


def _unit(task):
    return "mV" if task == "ir_static" else "C"


def _scaled(task, value):
    return value * 1e3 if task == "ir_static" else value


def format_report(report):
    """Text summary, one row per testcase plus the aggregate."""
    unit = _unit(report.task)
    lines = [f"task: {report.task}   corner: {report.corner:g}",
             f"{'#Testcase':<22} {'Avg. err':<20} {'Max err':<20}"]
    for r in report.cases:
        lines.append(
            f"{r.case_id:<22} "
            f"{_scaled(report.task, r.avg_err):.3f}{unit} ({r.percent_avg:.3f}%)"
            f"{'':<4} {_scaled(report.task, r.max_err):.3f}{unit} ({r.percent_max:.3f}%)")
    lines.append(
        f"{'AGGREGATE':<22} "
        f"{_scaled(report.task, report.avg_err):.3f}{unit} ({report.percent_avg:.3f}%)"
        f"{'':<4} {_scaled(report.task, report.max_err):.3f}{unit} ({report.percent_max:.3f}%)")
    return "\n".join(lines)
