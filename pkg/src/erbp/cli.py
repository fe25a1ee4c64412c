"""Command line entry point: ``erbp {convert,saccade,train,eval,inspect}``.

Exit codes: 0 success, 2 configuration error, 3 data or checkpoint error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import harness
from .config import RunConfig
from .errors import CheckpointError, ConfigError, DataError
from .events import EventFormat, load_dataset, write_events, write_manifest
from .saccade import read_pgm, synthesize_events
from .snn import load_checkpoint, save_checkpoint

log = logging.getLogger("erbp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

# flag, config path, argparse kwargs
NETWORK_FLAGS = [
    ("--layers", "network.layers", dict(help="comma-separated layer sizes")),
    ("--seed", "network.seed", dict(type=int)),
    ("--p-drop", "network.p_drop", dict(type=float)),
    ("--tau-mem", "network.tau_mem", dict(type=float, help="ms")),
    ("--v-threshold", "network.v_threshold", dict(type=float)),
    ("--v-reset", "network.v_reset", dict(type=float)),
    ("--t-refractory", "network.t_refractory", dict(type=float, help="ms")),
    ("--tau-dendrite", "network.tau_dendrite", dict(type=float, help="ms")),
    ("--label-rate", "network.label_rate", dict(type=float, help="Hz")),
    ("--error-weight", "network.error_weight", dict(type=float, help="fraction of v_threshold")),
    ("--lr", "plasticity.learning_rate", dict(type=float)),
    ("--b-min", "plasticity.b_min", dict(type=float)),
    ("--b-max", "plasticity.b_max", dict(type=float)),
]
INPUT_FLAGS = [
    ("--mode", "input.mode", dict(choices=["attention", "rescale"])),
    ("--window", "input.window", dict(metavar="WxH")),
    ("--attention-n", "input.n_attention", dict(type=int)),
    ("--pool", "input.pool", dict(type=int)),
    ("--dt-us", "run.dt_us", dict(type=int)),
    ("--gap-ms", "run.gap_ms", dict(type=float)),
]
RUN_FLAGS = [
    ("--epochs", "run.epochs", dict(type=int)),
    ("--eval-every", "run.eval_every", dict(type=int)),
    ("--train-manifest", "run.train_manifest", dict()),
    ("--test-manifest", "run.test_manifest", dict()),
    ("--out-dir", "run.out_dir", dict()),
    ("--no-reset", "run.reset", dict(action="store_const", const=False)),
    ("--no-wall-clock", "run.wall_clock", dict(action="store_const", const=False)),
]
SACCADE_FLAGS = [
    ("--alpha", "saccade.alpha", dict(type=float, help="degrees")),
    ("--phase-ms", "saccade.phase_ms", dict(type=float)),
    ("--threshold", "saccade.threshold", dict(type=float, help="log-intensity step")),
    ("--ppd", "saccade.ppd", dict(type=float, help="pixels per degree")),
    ("--saccade-dt-us", "saccade.dt_us", dict(type=int)),
]

# sections of the run config that define the model; stored in checkpoints
MODEL_SECTIONS = ("network", "plasticity", "input")


def _add_flags(p: argparse.ArgumentParser, table) -> None:
    for flag, dotted, kw in table:
        p.add_argument(flag, dest=dotted.replace(".", "__"), default=None, **kw)


def _resolve(args, tables, base: RunConfig | None = None) -> RunConfig:
    """File, then ``ERBP_SEED``, then flags; validated."""
    cfg = base or (RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig())
    if os.environ.get("ERBP_SEED"):
        cfg.set("network.seed", os.environ["ERBP_SEED"])
    for table in tables:
        for _, dotted, _ in table:
            value = getattr(args, dotted.replace(".", "__"), None)
            if value is not None:
                cfg.set(dotted, value)
    return cfg.validate()


def _saccade_job(job):
    src, dst, label, cfg, fmt = job
    try:
        stream = synthesize_events(read_pgm(src), cfg, label=label)
        write_events(stream, dst, fmt)
        return None
    except (DataError, OSError) as exc:
        return f"{src}: {exc}"


def cmd_convert(args) -> int:
    cfg = _resolve(args, [SACCADE_FLAGS])
    scfg = cfg.saccade_config()
    src, out = Path(args.input_dir), Path(args.output_dir)
    if not src.is_dir():
        raise DataError(f"input directory not found: {src}")
    classes = sorted(d for d in src.iterdir() if d.is_dir())
    fmt = EventFormat.BIN if args.format == "bin" else EventFormat.TEXT
    ext = ".evs" if fmt is EventFormat.BIN else ".txt"
    jobs, entries = [], []
    for label, cdir in enumerate(classes):
        for img in sorted(cdir.glob("*.pgm")):
            rel = Path(cdir.name) / (img.stem + ext)
            jobs.append((img, out / rel, label, scfg, fmt))
            entries.append((rel.as_posix(), label))
    if not jobs:
        raise DataError(f"no class sub-directories with .pgm images in {src}")
    out.mkdir(parents=True, exist_ok=True)
    for cdir in classes:
        (out / cdir.name).mkdir(exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            failures = list(pool.map(_saccade_job, jobs))
    else:
        failures = [_saccade_job(j) for j in jobs]
    ok = [e for e, f in zip(entries, failures) if f is None]
    write_manifest(out, ok)
    (out / "classes.tsv").write_text("".join(f"{i}\t{d.name}\n" for i, d in enumerate(classes)))
    errors = [f for f in failures if f is not None]
    for msg in errors:
        print(f"error: {msg}", file=sys.stderr)
    print(f"converted {len(ok)} of {len(jobs)} images into {out}")
    return EXIT_DATA if errors else EXIT_OK


def cmd_saccade(args) -> int:
    cfg = _resolve(args, [SACCADE_FLAGS])
    stream = synthesize_events(read_pgm(args.image), cfg.saccade_config(), label=args.label)
    write_events(stream, args.out)
    print(f"{len(stream)} events written to {args.out}")
    return EXIT_OK


def _weight_ranges(net) -> str:
    return " ".join(f"w{l}=[{W.min():.3f},{W.max():.3f}]" for l, W in enumerate(net.weights))


def cmd_train(args) -> int:
    cfg = _resolve(args, [NETWORK_FLAGS, INPUT_FLAGS, RUN_FLAGS])
    if args.print_config:
        print(cfg.dump(), end="")
        return EXIT_OK
    if not cfg.run.train_manifest:
        raise ConfigError("a training manifest is required", "run.train_manifest")
    pcfg = cfg.presentation()
    train_set = load_dataset(cfg.run.train_manifest)
    test_set = load_dataset(cfg.run.test_manifest) if cfg.run.test_manifest else None
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.yaml")
    net = cfg.build_network()
    model_cfg = {k: v for k, v in cfg.to_dict().items() if k in MODEL_SECTIONS}
    model_cfg["run"] = {"dt_us": cfg.run.dt_us, "gap_ms": cfg.run.gap_ms, "reset": cfg.run.reset}
    metrics = harness.RunMetrics()

    def on_epoch(row):
        log.info("epoch %d %s acc_rate=%.3f acc_first=%.3f updates=%d %s", row.epoch, row.split,
                 row.acc_rate, row.acc_first, row.weight_updates, _weight_ranges(net))
        metrics.write_csv(out / "metrics.csv")

    harness.train(net, train_set, pcfg, test_set, cfg.run.eval_every, metrics, on_epoch)
    save_checkpoint(net, out / "model.ckpt", model_cfg)
    metrics.write_csv(out / "metrics.csv")
    print(f"wrote {out / 'model.ckpt'} and {out / 'metrics.csv'}")
    return EXIT_OK


def _config_from_checkpoint(stored: dict | None) -> RunConfig:
    try:
        return RunConfig.from_dict(stored or {})
    except ConfigError as exc:
        raise CheckpointError(f"checkpoint carries an invalid configuration: {exc}") from None


def cmd_eval(args) -> int:
    net, stored = load_checkpoint(args.checkpoint)
    base = RunConfig.load(args.config) if args.config else _config_from_checkpoint(stored)
    cfg = _resolve(args, [INPUT_FLAGS], base)
    pcfg = cfg.presentation()
    dataset = load_dataset(args.manifest)
    if not dataset:
        raise DataError(f"{args.manifest}: no samples")
    row = harness.evaluate(net, dataset, pcfg, split="eval")
    if args.dump_spikes:
        d = Path(args.dump_spikes)
        d.mkdir(parents=True, exist_ok=True)
        for i, sample in enumerate(dataset):
            harness.dump_spiketrains(net, sample, d / f"sample_{i:05d}.csv", pcfg)
    print(f"{row.acc_rate:.6f} {row.acc_first:.6f} {len(dataset)}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    net, stored = load_checkpoint(args.checkpoint)
    p = net.params
    print(f"layers        {' '.join(map(str, net.sizes))}")
    if stored and "network" in stored:
        print(f"seed          {stored['network']['seed']} (network stream {net.seed})")
    else:
        print(f"seed          {net.seed}")
    print(f"p_drop        {net.p_drop}")
    print(f"train steps   {net.step_count}")
    print(f"updates       {' '.join(map(str, net.counter.counts))} (total {net.counter.total})")
    print(f"neuron        tau_mem={p.tau_mem} v_th={p.v_threshold} v_reset={p.v_reset} "
          f"t_ref={p.t_refractory} tau_dendrite={p.tau_dendrite}")
    print(f"plasticity    lr={net.plasticity.learning_rate} "
          f"boxcar=({net.plasticity.boxcar.b_min}, {net.plasticity.boxcar.b_max})")
    print(f"label rate    {net.pathway.label_rate} Hz, error weight {net.pathway.error_weight}")
    for l, W in enumerate(net.weights):
        print(f"w{l}            {W.shape[0]}x{W.shape[1]} range [{W.min():.4f}, {W.max():.4f}] "
              f"mean {W.mean():.4f}")
    for l, g in enumerate(net.feedback):
        print(f"g{l}            {g.shape[0]}x{g.shape[1]} range [{g.min():.4f}, {g.max():.4f}]")
    if stored and "input" in stored:
        i = stored["input"]
        print(f"input         mode={i['mode']} window={i['window']} n_attention={i['n_attention']} pool={i['pool']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="erbp", description=__doc__.splitlines()[0])
    p.add_argument("--print-config", action="store_true", help="print resolved default config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log per-epoch progress")

    c = sub.add_parser("convert", parents=[common], help="PGM class folders -> event files + manifest.tsv")
    c.add_argument("input_dir")
    c.add_argument("output_dir")
    c.add_argument("--config")
    c.add_argument("--format", choices=["bin", "text"], default="bin")
    c.add_argument("--jobs", type=int, default=1)
    _add_flags(c, SACCADE_FLAGS)
    c.set_defaults(func=cmd_convert)

    s = sub.add_parser("saccade", parents=[common], help="one PGM image -> one event file")
    s.add_argument("image")
    s.add_argument("--out", required=True)
    s.add_argument("--label", type=int)
    s.add_argument("--config")
    _add_flags(s, SACCADE_FLAGS)
    s.set_defaults(func=cmd_saccade)

    t = sub.add_parser("train", parents=[common], help="train and write checkpoint + metrics.csv")
    t.add_argument("--config")
    t.add_argument("--print-config", action="store_true")
    _add_flags(t, NETWORK_FLAGS + INPUT_FLAGS + RUN_FLAGS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest")
    e.add_argument("checkpoint")
    e.add_argument("--manifest", required=True)
    e.add_argument("--config")
    e.add_argument("--dump-spikes", metavar="DIR")
    _add_flags(e, INPUT_FLAGS)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", parents=[common], help="print a checkpoint summary")
    i.add_argument("checkpoint")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command is None:
            if args.print_config:
                print(_resolve(args, []).dump(), end="")
                return EXIT_OK
            parser.print_help()
            return EXIT_CONFIG
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
