"""Command-line entry point.

Subcommands cover the full flow: gen -> golden -> train -> infer ->
eval -> report. Configuration is a plain-text key=value file (dotted
keys, validated against the schema below) plus repeatable --set
overrides; flags win over the file. All randomness derives from the
single master seed. Exit codes: 0 success, 2 config error, 3 data
error, 4 numeric/convergence error.
"""

import argparse
import os
import sys

from . import models, pipeline, synth
from .errors import ConfigError, DataError, EdgemapError, NumericError
from .features import TASKS, assemble_features
from .gridio import ChipSpec, export_pgm, read_grid, read_sequence, write_grid, write_sequence
from .golden import SolverOptions
from .pipeline import SplitSpec, TrainConfig
from .synth import SynthConfig, read_manifest, read_pads, write_manifest

# key -> (type, default, help); the single source for parsing, defaults,
# and the --help listing.
CONFIG_SCHEMA = {
    "seed": (int, 1, "master seed; all module seeds derive from it"),
    "chip.rows": (int, 34, "die tiles per column"),
    "chip.cols": (int, 32, "die tiles per row"),
    "chip.pixel_size_um": (float, 250.0, "tile edge in micrometers"),
    "chip.vdd_volts": (float, 0.7, "supply voltage"),
    "chip.ambient_c": (float, 25.0, "ambient temperature"),
    "chip.thermal_corner_c": (float, 105.0, "corner for percentage errors"),
    "chip.lateral_thermal_conductance_w_per_c": (float, 0.02, "tile-to-tile thermal conductance"),
    "chip.ambient_thermal_conductance_w_per_c": (float, 4.0e-4, "tile-to-ambient thermal conductance"),
    "chip.thermal_capacitance_j_per_c": (float, 0.24, "per-tile thermal capacitance"),
    "chip.unit_sheet_conductance_s": (float, 40.0, "PDN branch conductance at density 1"),
    "synth.n_power": (int, 50, "power patterns in gen"),
    "synth.n_pdn": (int, 10, "PDN density patterns in gen"),
    "synth.n_pads": (int, 10, "pad layouts in gen"),
    "synth.n_hotspots_min": (int, 2, "min hotspots per case"),
    "synth.n_hotspots_max": (int, 6, "max hotspots per case"),
    "synth.sigma_min": (float, 1.5, "min hotspot sigma (tiles)"),
    "synth.sigma_max": (float, 4.0, "max hotspot sigma (tiles)"),
    "synth.power_budget_w": (float, 10.0, "total power per case"),
    "synth.background_fraction": (float, 0.25, "budget share of uniform background"),
    "synth.pad_pitch_min": (int, 4, "min pad pitch (tiles)"),
    "synth.pad_pitch_max": (int, 8, "max pad pitch (tiles)"),
    "synth.sequences": (bool, False, "also emit transient power sequences"),
    "synth.frames": (int, 200, "frames per sequence"),
    "synth.dt_seconds": (float, 15.0, "sequence time step"),
    "solver.method": (str, "cg_jacobi", "cg_jacobi or dense_direct"),
    "solver.tol": (float, 1e-10, "relative residual target"),
    "solver.max_iter": (int, 0, "iteration cap (0 = 20*n)"),
    "split.train": (float, 0.8, "training fraction"),
    "split.val": (float, 0.1, "validation fraction"),
    "split.test": (float, 0.1, "test fraction"),
    "train.epochs": (int, 500, "training epochs"),
    "train.batch_size": (int, 8, "minibatch size"),
    "train.base_lr": (float, 1e-3, "ADAM base learning rate"),
    "train.decay_rate": (float, 0.98, "lr decay factor"),
    "train.decay_steps": (int, 1000, "steps per decay factor"),
    "train.l2_rate": (float, 1e-5, "L2 regularization rate"),
    "train.checkpoint_interval": (int, 0, "epochs between checkpoints (0 = off)"),
    "train.early_stop_patience": (int, 0, "early-stop patience (0 = off)"),
    "eval.bins": (int, 50, "histogram bins"),
}


class RunConfig:
    def __init__(self, values=None):
        self.values = {k: d for k, (_, d, _) in CONFIG_SCHEMA.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key, raw):
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        typ = CONFIG_SCHEMA[key][0]
        try:
            if typ is bool and isinstance(raw, str):
                lowered = raw.strip().lower()
                if lowered in ("true", "1", "yes", "on"):
                    value = True
                elif lowered in ("false", "0", "no", "off"):
                    value = False
                else:
                    raise ValueError(raw)
            else:
                value = typ(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"config key {key!r} expects {typ.__name__}, got {raw!r}") from None
        self.values[key] = value

    def __getitem__(self, key):
        return self.values[key]


def load_config_file(path, cfg):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{i}: expected 'key = value'")
            key, _, raw = line.partition("=")
            cfg.set(key.strip(), raw.strip())


def chip_spec(cfg):
    try:
        return ChipSpec(
            rows=cfg["chip.rows"], cols=cfg["chip.cols"],
            pixel_size_um=cfg["chip.pixel_size_um"],
            vdd_volts=cfg["chip.vdd_volts"], ambient_c=cfg["chip.ambient_c"],
            thermal_corner_c=cfg["chip.thermal_corner_c"],
            lateral_thermal_conductance_w_per_c=cfg["chip.lateral_thermal_conductance_w_per_c"],
            ambient_thermal_conductance_w_per_c=cfg["chip.ambient_thermal_conductance_w_per_c"],
            thermal_capacitance_j_per_c=cfg["chip.thermal_capacitance_j_per_c"],
            unit_sheet_conductance_s=cfg["chip.unit_sheet_conductance_s"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def synth_config(cfg):
    try:
        return SynthConfig(
            seed=cfg["seed"], chip=chip_spec(cfg),
            n_hotspots=(cfg["synth.n_hotspots_min"], cfg["synth.n_hotspots_max"]),
            hotspot_sigma_tiles=(cfg["synth.sigma_min"], cfg["synth.sigma_max"]),
            power_budget_w=cfg["synth.power_budget_w"],
            background_fraction=cfg["synth.background_fraction"],
            pad_pitch_tiles=(cfg["synth.pad_pitch_min"], cfg["synth.pad_pitch_max"]),
            frames=cfg["synth.frames"], dt_seconds=cfg["synth.dt_seconds"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def solver_options(cfg):
    try:
        return SolverOptions(method=cfg["solver.method"], tol=cfg["solver.tol"],
                             max_iter=cfg["solver.max_iter"] or None)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def train_config(cfg):
    try:
        return TrainConfig(
            epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"],
            seed=cfg["seed"], base_lr=cfg["train.base_lr"],
            decay_rate=cfg["train.decay_rate"], decay_steps=cfg["train.decay_steps"],
            l2_rate=cfg["train.l2_rate"],
            checkpoint_interval=cfg["train.checkpoint_interval"],
            early_stop_patience=cfg["train.early_stop_patience"] or None)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def split_spec(cfg):
    try:
        return SplitSpec(train=cfg["split.train"], val=cfg["split.val"],
                         test=cfg["split.test"], seed=cfg["seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def model_config(task):
    if task == "thermal_static":
        return models.StaticEdgeConfig.thermal()
    if task == "ir_static":
        return models.StaticEdgeConfig.ir()
    if task == "thermal_transient":
        return models.TransientEdgeConfig()
    raise ConfigError(f"unknown task {task!r}")


def cmd_gen(args, cfg):
    out = args.out or "."
    manifest = synth.gen_dataset(synth_config(cfg), cfg["synth.n_power"],
                                 cfg["synth.n_pdn"], cfg["synth.n_pads"], out,
                                 sequences=cfg["synth.sequences"])
    print(manifest)
    return 0


def cmd_golden(args, cfg):
    labeled = pipeline.label_dataset(args.manifest, args.task, chip_spec(cfg),
                                     parallel=args.parallel or 1)
    print(labeled)
    return 0


def cmd_train(args, cfg):
    out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    os.makedirs(out, exist_ok=True)
    entries = read_manifest(args.manifest, labeled=True,
                            sequences=(args.task == "thermal_transient"))
    tr, va, te = pipeline.split(entries, split_spec(cfg))
    base = os.path.dirname(os.path.abspath(args.manifest))
    for name, part in (("train", tr), ("val", va), ("test", te)):
        write_manifest(part, os.path.join(out, f"split_{name}.edgeset"))
    load = lambda part: [pipeline.load_case(e, base, args.task) for e in part]
    mcfg = model_config(args.task)
    bundle, _ = pipeline.train(args.task, load(tr), load(va), mcfg,
                               train_config(cfg),
                               log_path=os.path.join(out, "train_log.csv"),
                               checkpoint_path=os.path.join(out, "checkpoint.edgemdl"))
    model_path = args.model_out or os.path.join(out, "model.edgemdl")
    models.save(bundle, model_path)
    print(model_path)
    return 0


def cmd_infer(args, cfg):
    bundle = models.load(args.model)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    if bundle.task == "thermal_transient":
        if not args.seq:
            raise ConfigError("transient models need --seq <power sequence manifest>")
        seq = read_sequence(args.seq)
        features = assemble_features(bundle.task, seq)
        pred = models.infer(bundle, features, dt_seconds=seq.dt_seconds)
        pred_path = os.path.join(out, "prediction.seq")
        write_sequence(pred, pred_path)
        if args.pgm:
            for i, frame in enumerate(pred.frames):
                export_pgm(frame, os.path.join(out, f"prediction_f{i:04d}.pgm"))
    else:
        if not args.power:
            raise ConfigError("static models need --power <grid file>")
        power = read_grid(args.power)
        if bundle.task == "ir_static":
            if not (args.pdn and args.pads):
                raise ConfigError("ir_static inference needs --pdn and --pads")
            pdn = read_grid(args.pdn)
            pads = read_pads(args.pads, power.rows, power.cols)
            features = assemble_features(bundle.task, power, pdn=pdn, pads=pads)
        else:
            features = assemble_features(bundle.task, power)
        pred = models.infer(bundle, features)
        pred_path = os.path.join(out, "prediction.grid")
        write_grid(pred, pred_path)
        if args.pgm:
            export_pgm(pred, os.path.join(out, "prediction.pgm"))
    print(pred_path)
    return 0


def cmd_eval(args, cfg):
    bundle = models.load(args.model)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    cases = pipeline.load_cases(args.manifest, bundle.task)
    chip = chip_spec(cfg)
    corner = chip.vdd_volts if bundle.task == "ir_static" else chip.thermal_corner_c
    report = pipeline.evaluate(bundle, cases, corner, bins=cfg["eval.bins"])
    pipeline.write_report_csv(report, os.path.join(out, "report.csv"))
    pipeline.write_histogram_csv(report, os.path.join(out, "histogram.csv"))
    summary = pipeline.format_report(report)
    with open(os.path.join(out, "summary.txt"), "w") as f:
        f.write(summary + "\n")
    print(summary)
    return 0


def cmd_report(args, cfg):
    for path in args.csv:
        if not os.path.exists(path):
            raise DataError(f"report CSV not found: {path}")
        with open(path) as f:
            lines = f.read().splitlines()
        print(f"== {path}")
        print(f"{'#Testcase':<22} {'Avg. err':<20} {'Max err':<20}")
        for line in lines[1:]:
            cid, avg, mx, pavg, pmax, _ = line.split(",")
            print(f"{cid:<22} {float(avg):.6g} ({float(pavg):.3f}%)"
                  f"{'':<4} {float(mx):.6g} ({float(pmax):.3f}%)")
    return 0


def build_parser():
    key_lines = "\n".join(f"  {k:<44} {t.__name__:<6} default={d!r}"
                          for k, (t, d, _) in CONFIG_SCHEMA.items())
    parser = argparse.ArgumentParser(
        prog="edgemap",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="config keys (file or --set key=value):\n" + key_lines)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--parallel", type=int, default=1,
                        help="worker processes for golden/eval")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="config override (repeatable, wins over --config)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", help="generate a synthetic dataset")

    p = sub.add_parser("golden", help="label a dataset with the golden solvers")
    p.add_argument("manifest")
    p.add_argument("--task", required=True, choices=TASKS)

    p = sub.add_parser("train", help="split a labeled dataset and train a model")
    p.add_argument("manifest")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--model-out")

    p = sub.add_parser("infer", help="predict one case")
    p.add_argument("--model", required=True)
    p.add_argument("--power")
    p.add_argument("--pdn")
    p.add_argument("--pads")
    p.add_argument("--seq")
    p.add_argument("--pgm", action="store_true", help="also export PGM images")

    p = sub.add_parser("eval", help="evaluate a model on a labeled manifest")
    p.add_argument("manifest")
    p.add_argument("--model", required=True)

    p = sub.add_parser("report", help="render eval CSVs as summary tables")
    p.add_argument("csv", nargs="+")
    return parser


COMMANDS = {"gen": cmd_gen, "golden": cmd_golden, "train": cmd_train,
            "infer": cmd_infer, "eval": cmd_eval, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig()
        if args.config:
            load_config_file(args.config, cfg)
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, raw = item.partition("=")
            cfg.set(key.strip(), raw.strip())
        if args.seed is not None:
            cfg.set("seed", args.seed)
        return COMMANDS[args.command](args, cfg)
    except EdgemapError as e:
        kind = {2: "config", 3: "data", 4: "numeric"}.get(e.exit_code, "internal")
        print(f"error: kind={kind} code={e.exit_code} msg={e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: kind=data code=3 msg={e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: kind=config code=2 msg={e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
