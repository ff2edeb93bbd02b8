"""Command-line entry point: ``stegnet <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint_file
from .dataset import (
    DataError,
    DatasetManifest,
    PairRecord,
    PairSet,
    augment_manifest,
    make_splits,
    synthetic_textures,
)
from .gradcheck import run_suite
from .network import BuildError, NetConfig, build_network, init_xavier
from .pgm import PgmError, load_pgm, save_pgm
from .srm import build_filter_bank
from .stego import EmbedParams, lsbm_embed
from .tensor import NumericalError
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger("stegnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _banner(name: str, **resolved) -> None:
    log.info("%s %s", name, json.dumps(resolved, sort_keys=True, default=str))


def _image_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def cmd_synth(args) -> int:
    _banner("synth", out_dir=args.out_dir, count=args.count, size=args.size, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(synthetic_textures(args.count, args.size, args.seed)):
        save_pgm(img, out / f"{i:05d}.pgm")
    log.info("wrote %d covers to %s", args.count, out)
    return EXIT_OK


def cmd_embed(args) -> int:
    params = EmbedParams(args.bpp, args.seed)
    _banner("embed", cover_dir=args.cover_dir, out_dir=args.out_dir, bpp=args.bpp,
            change_rate=params.change_rate, seed=args.seed, source=args.source)
    cover_dir, out = Path(args.cover_dir), Path(args.out_dir)
    covers = sorted(cover_dir.glob("*.pgm"))
    if not covers:
        raise DataError(f"no .pgm files in {cover_dir}")
    (out / "stego").mkdir(parents=True, exist_ok=True)
    records = []
    for i, path in enumerate(covers):
        stego = lsbm_embed(load_pgm(path), EmbedParams(args.bpp, _image_seed(args.seed, i)))
        save_pgm(stego, out / "stego" / path.name)
        records.append(PairRecord(path.stem, str(path.resolve()), f"stego/{path.name}", source=args.source))
    manifest = DatasetManifest(records, root=out).rebased(out)
    manifest.write(out / "manifest.csv")
    log.info("embedded %d images at %.3f bpp -> %s", len(records), args.bpp, out / "manifest.csv")
    return EXIT_OK


def cmd_split(args) -> int:
    _banner("split", manifest=args.manifest, seed=args.seed, train_pairs=args.train_pairs,
            val_pairs=args.val_pairs, train_only_sources=args.train_only_source)
    manifest = DatasetManifest.read(args.manifest)
    out = make_splits(manifest, args.seed, args.train_pairs, args.val_pairs,
                      train_only_sources=tuple(args.train_only_source))
    out.write(args.manifest)
    log.info("split counts %s", out.counts())
    return EXIT_OK


def cmd_augment(args) -> int:
    _banner("augment", manifest=args.manifest, out_dir=args.out_dir)
    manifest = DatasetManifest.read(args.manifest)
    out = augment_manifest(manifest, args.out_dir)
    out.write(Path(args.out_dir) / "manifest.csv")
    log.info("augmented manifest counts %s", out.counts())
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    base = TrainConfig.from_file(args.train_config).to_dict() if args.train_config else TrainConfig().to_dict()
    for f in fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    cfg = TrainConfig.from_dict(base)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    manifest = DatasetManifest.read(args.manifest)
    train_set = PairSet.from_manifest(manifest, "train", workers=args.workers)
    val_set = PairSet.from_manifest(manifest, "val", workers=args.workers)
    if args.net_config:
        net_cfg = NetConfig.from_file(args.net_config)
    else:
        net_cfg = NetConfig(input_size=int(train_set.covers.shape[1]))
    _banner("train", train_config=cfg.to_dict(), net_config=net_cfg.to_dict(), seed=cfg.seed,
            manifest=args.manifest, train_pairs=len(train_set), val_pairs=len(val_set), workers=args.workers)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = init_xavier(build_network(net_cfg), cfg.seed)
    with (out / "metrics.jsonl").open("w") as metrics, (out / "timing.jsonl").open("w") as timing:
        def on_epoch(rec):
            metrics.write(rec.to_json() + "\n")
            metrics.flush()
            timing.write(json.dumps({"epoch": rec.epoch, "wall_time": rec.wall_time}) + "\n")
            timing.flush()

        result = train(net, train_set, val_set, cfg, on_epoch=on_epoch)
    (out / "snapshot_min.ynet").write_bytes(result.snapshot_min)
    (out / "snapshot_max.ynet").write_bytes(result.snapshot_max)
    (out / "final.ynet").write_bytes(result.final)
    run = {
        "train_config": cfg.to_dict(),
        "net_config": net_cfg.to_dict(),
        "epochs_run": len(result.metrics),
        "snapshot_min_epoch": result.epoch_min,
        "snapshot_max_epoch": result.epoch_max,
    }
    (out / "run.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")
    log.info("trained %d epochs; snapshots at epochs %d (min val loss) and %d (max val loss)",
             len(result.metrics), result.epoch_min, result.epoch_max)
    return EXIT_OK


def cmd_eval(args) -> int:
    _banner("eval", manifest=args.manifest, checkpoints=args.checkpoint, split=args.split)
    manifest = DatasetManifest.read(args.manifest)
    test = PairSet.from_manifest(manifest, args.split, workers=args.workers)
    nets = [load_checkpoint_file(p) for p in args.checkpoint]
    report = evaluate(nets, test)
    print(json.dumps(report.to_dict(args.checkpoint), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    _banner("gradcheck", tol=args.tol, seed=args.seed)
    reports = run_suite(tol=args.tol, seed=args.seed)
    for r in reports:
        print(r.summary())
        if not r.passed:
            for o in r.worst:
                print(f"    {o.group}{list(o.index)} analytic={o.analytic:.6e} numeric={o.numeric:.6e}")
    failed = [r.name for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} layers passed")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_export_filters(args) -> int:
    _banner("export-filters", out=args.out)
    Path(args.out).write_text(build_filter_bank().to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stegnet", description="Spatial steganalysis CNN: data preparation, training, evaluation.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write synthetic textured covers")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("embed", help="simulate +/-1 embedding over a cover directory")
    s.add_argument("--cover-dir", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--bpp", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--source", default="synthetic")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("split", help="assign train/val/test splits (rewrites the manifest)")
    s.add_argument("--manifest", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train-pairs", type=int, default=4000)
    s.add_argument("--val-pairs", type=int, default=1000)
    s.add_argument("--train-only-source", action="append", default=["bows2"],
                   help="source tag whose pairs only ever go to train (repeatable)")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("augment", help="materialise the 8 flips/rotations of the train split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", help="train a network")
    s.add_argument("--manifest", required=True)
    s.add_argument("--net-config")
    s.add_argument("--train-config")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--workers", type=int, default=1)
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            s.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            kind = {"int": int, "float": float}[f.type if isinstance(f.type, str) else f.type.__name__]
            s.add_argument(flag, dest=f.name, type=kind, default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="error probability of checkpoints on a split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", action="append", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("export-filters", help="dump the fixed filter bank as text")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_filters)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (DataError, PgmError, CheckpointError, BuildError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
