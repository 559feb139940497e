"""Command-line entry point: ``shipprompt <command> [options]``."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, heatmaps
from .container import ContainerError
from .model import PromptModel
from .pnm import quantize_unit, read_pnm, write_pnm
from .synthdata import SynthSpec, generate_dataset
from .taxonomy import ManifestError, load_manifest
from .training import (
    ConfigError,
    TrainConfig,
    _sample_indices,
    load_checkpoint_full,
    save_checkpoint,
    train_episode,
)

log = logging.getLogger("shipprompt")


class CommandError(Exception):
    pass


def _config(args):
    cfg = TrainConfig()
    if args.config:
        cfg = TrainConfig.from_text(_read_text(args.config), cfg)
    pairs = []
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    cfg = TrainConfig.from_pairs(pairs, cfg)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc.strerror}") from None


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args):
    if not args.manifest:
        raise CommandError("--manifest is required")
    return load_manifest(args.manifest)


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")
    print(path)


def cmd_gen_data(args):
    spec = SynthSpec(args.primaries, args.secondaries, args.finals, args.images_per_class,
                     args.image_size, args.clutter, 0 if args.seed is None else args.seed).validate()
    manifest = generate_dataset(spec)
    manifest.save(_out_dir(args) / "manifest.json")
    print(_out_dir(args) / "manifest.json")


def cmd_train(args):
    cfg = _config(args)
    manifest = _manifest(args)
    encoders = cfg.encoders()
    state = train_episode(cfg, manifest, cfg.split(manifest), encoders)
    out = _out_dir(args)
    save_checkpoint(state, encoders, out / "checkpoint.hpmt")
    _write(out / "config.txt", cfg.to_text())
    _write(out / "loss_history.txt", "".join(f"{i}\t{v:.10g}\n" for i, v in enumerate(state.loss_history)))


def _checkpoint_config(args):
    """Explicit --config wins; otherwise the config.txt written next to the checkpoint."""
    if not args.config:
        beside = Path(args.checkpoint).with_name("config.txt")
        if beside.exists():
            args.config = str(beside)
    return _config(args)


def _checkpoint(args):
    if not args.checkpoint:
        raise CommandError("--checkpoint is required")
    return load_checkpoint_full(args.checkpoint)


def cmd_eval(args):
    state, encoders = _checkpoint(args)
    cfg = _checkpoint_config(args)
    manifest = _manifest(args)
    split = cfg.split(manifest)
    model = PromptModel(encoders, manifest, cfg)
    used = _sample_indices(manifest, split, cfg.K, cfg.seed)
    base = evaluation.accuracy_on(state, encoders, manifest, split.base_class_ids, cfg, used, model)
    new = evaluation.accuracy_on(state, encoders, manifest, split.new_class_ids, cfg, used, model)
    row = evaluation.MetricsReport("checkpoint", cfg.to_dict(),
                                   [evaluation.SeedResult(cfg.seed, base, new, evaluation.harmonic_mean(base, new))])
    _emit_report(args, cfg, [row], "eval")


def _emit_report(args, cfg, rows, stem):
    out = _out_dir(args)
    text = evaluation.dumps_report(cfg, rows)
    _write(out / f"{stem}.json", text)
    table = evaluation.render_table(evaluation.report_dict(cfg, rows))
    _write(out / f"{stem}.txt", table)
    sys.stdout.write(table)


def cmd_b2n(args):
    cfg = _config(args)
    manifest = _manifest(args)
    rows = [evaluation.run_base_to_new(cfg, manifest, cfg.split(manifest), cfg.encoders(), label=args.label)]
    _emit_report(args, cfg, rows, "b2n")


def cmd_ablate(args):
    cfg = _config(args)
    manifest = _manifest(args)
    rows = evaluation.run_ablation(cfg, manifest, cfg.split(manifest), cfg.encoders())
    _emit_report(args, cfg, rows, "ablation")


def cmd_heatmap(args):
    state, encoders = _checkpoint(args)
    cfg = _checkpoint_config(args)
    manifest = _manifest(args)
    model = PromptModel(encoders, manifest, cfg)
    inputs = [(f"record{r}", manifest.load_image(r)) for r in args.record or []]
    for path in args.image or []:
        pixels = read_pnm(path)
        if pixels.ndim == 2:
            pixels = np.repeat(pixels[..., None], 3, axis=2)
        inputs.append((Path(path).stem, pixels))
    if not inputs:
        raise CommandError("heatmap needs at least one --record or --image")
    out = _out_dir(args)
    for name, pixels in inputs:
        panels = heatmaps.compare(model, state, pixels)
        target = out / f"heatmap_{name}.pgm"
        write_pnm(target, quantize_unit(heatmaps.side_by_side(panels)))
        frozen = manifest.class_by_id(panels.frozen_class).final
        trained = manifest.class_by_id(panels.trained_class).final
        print(f"{target}\tfrozen={frozen}\ttrained={trained}")


def cmd_report(args):
    if not args.report:
        raise CommandError("--report is required")
    table = evaluation.render_table(evaluation.load_report(args.report))
    if args.out:
        _write(_out_dir(args) / (Path(args.report).stem + ".txt"), table)
    sys.stdout.write(table)


def build_parser():
    parser = argparse.ArgumentParser(prog="shipprompt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, manifest=True, checkpoint=False):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        if manifest:
            p.add_argument("--manifest", help="dataset manifest (JSON)")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint written by train")
        return p

    g = add("gen-data", cmd_gen_data, "write a synthetic ship manifest", manifest=False)
    g.add_argument("--primaries", type=int, default=2)
    g.add_argument("--secondaries", type=int, default=3)
    g.add_argument("--finals", type=int, default=2)
    g.add_argument("--images-per-class", type=int, default=12)
    g.add_argument("--image-size", type=int, default=32)
    g.add_argument("--clutter", type=float, default=0.1)
    add("train", cmd_train, "train one episode and save a checkpoint")
    add("eval", cmd_eval, "score a checkpoint on base and new classes", checkpoint=True)
    b = add("b2n", cmd_b2n, "base-to-new run over all seeds")
    b.add_argument("--label", default="ours")
    add("ablate", cmd_ablate, "four-row ablation matrix")
    h = add("heatmap", cmd_heatmap, "raw | frozen | trained relevance maps", checkpoint=True)
    h.add_argument("--record", type=int, action="append", help="manifest record index")
    h.add_argument("--image", action="append", help="PPM/PGM image file")
    r = add("report", cmd_report, "render a report file as a table", manifest=False)
    r.add_argument("--report", help="report JSON")
    r.set_defaults(out=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CommandError, ConfigError, ManifestError, ContainerError, ValueError,
            FloatingPointError, OSError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"shipprompt {args.command}: error: {message}", file=sys.stderr)
        return 1 if not isinstance(exc, ConfigError) else 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
