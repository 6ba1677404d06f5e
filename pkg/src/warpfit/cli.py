"""Command-line interface: ``warpfit {gen,dist,align,train,eval,repro}``.

Exit codes: 0 success, 1 usage error, 2 data or parse error. Results go to
standard output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from . import model
from .align import backtrack, dtw, soft_dtw
from .evaluation import evaluate
from .experiments import ExperimentSettings, run_experiment
from .seqcore import COST_KINDS, ParseError, UsageError, read_sequence, write_sequence
from .synthdata import LAYOUTS, CorpusConfig, Manifest, SynthConfig, gen_corpus
from .trainer import TrainConfig, train

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(value):
    return format(value, "#.9g")


def _read_pair(args):
    return read_sequence(args.a), read_sequence(args.b)


def cmd_dist(args):
    a, b = _read_pair(args)
    if args.metric == "dtw":
        value = dtw(a, b, args.cost)[0]
    else:
        if args.gamma <= 0:
            raise UsageError("softdtw needs --gamma > 0; use --metric dtw for the hard-minimum distance")
        value = soft_dtw(a, b, args.gamma, args.cost)[0]
    print(fmt(value))


def cmd_align(args):
    a, b = _read_pair(args)
    _, table = dtw(a, b, args.cost)
    for i, j in backtrack(table):
        print(f"{i},{j}")


def cmd_gen(args):
    config = CorpusConfig(layout=args.config, n_train=args.utterances, n_val=args.val, n_test=args.test,
                          frames=args.frames, synth=SynthConfig(label_jitter=args.label_jitter))
    manifest = gen_corpus(args.seed, config, args.out)
    print(manifest.root / "manifest.json")


_TRAIN_FLAGS = {"loss": "loss", "gamma": "gamma", "epochs": "epochs", "lr": "lr",
                "optimizer": "optimizer", "seed": "seed", "clip_norm": "clip_norm", "cost": "cost"}


def _train_config(args):
    base = TrainConfig.from_file(args.train_config) if args.train_config else TrainConfig()
    values = {f.name: getattr(base, f.name) for f in fields(TrainConfig)}
    for flag, key in _TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    return TrainConfig(**values)


def cmd_train(args):
    manifest = Manifest.load(args.manifest)
    cfg = _train_config(args)
    shape = model.ShapeConfig(n_layers=manifest.data["n_layers"], d_in=manifest.data["d_in"],
                              d_out=manifest.data["d_out"], hidden=args.hidden,
                              conv_channels=args.conv_channels, rnn_layers=args.rnn_layers)
    params, report = train(manifest, shape, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save_params(params, out / "params.txt")
    report.save(out / "train_report.txt")
    sys.stdout.write(report.to_text())


def cmd_eval(args):
    manifest = Manifest.load(args.manifest)
    params = model.load_params(args.params)
    report = evaluate(params, manifest, args.split)
    if args.dump_pred:
        dump = Path(args.dump_pred)
        dump.mkdir(parents=True, exist_ok=True)
        for item in manifest.items(args.split):
            stack, _ = manifest.load_item(item)
            write_sequence(model.predict(params, stack), dump / f"{item['id']}.csv")
    sys.stdout.write(report.to_text())


def cmd_repro(args):
    settings = ExperimentSettings()
    overrides = {k: getattr(args, k) for k in ("n_train", "gamma", "epochs", "lr", "label_jitter")
                 if getattr(args, k) is not None}
    settings = ExperimentSettings(**{**{f.name: getattr(settings, f.name) for f in fields(settings)}, **overrides})
    _, _, metrics = run_experiment(args.config, args.loss, args.seed, args.out, settings)
    sys.stdout.write(metrics.to_text())


def build_parser():
    parser = _Parser(prog="warpfit", description="DTW / soft-DTW toolkit and alignment-robust sequence regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dist", help="distance between two sequence files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--metric", choices=("dtw", "softdtw"), default="dtw")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--cost", choices=COST_KINDS, default="euclidean")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("align", help="optimal DTW path, one 1-based 'i,j' pair per line")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--cost", choices=COST_KINDS, default="euclidean")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--config", choices=sorted(LAYOUTS), default="rec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--utterances", type=int, default=10, help="base training utterances")
    p.add_argument("--val", type=int, default=4)
    p.add_argument("--test", type=int, default=10)
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--label-jitter", type=float, default=0.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a regressor on a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-config", help="key=value settings file; flags override it")
    p.add_argument("--loss", choices=("l1", "l2", "softdtw"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--cost", choices=COST_KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--seed", type=int)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--conv-channels", type=int, default=16)
    p.add_argument("--rnn-layers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score trained parameters on a corpus split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--dump-pred", help="directory for per-utterance prediction CSVs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("repro", help="generate, train and evaluate one experiment configuration")
    p.add_argument("--config", choices=sorted(LAYOUTS), required=True)
    p.add_argument("--loss", choices=("l1", "l2", "softdtw"), default="softdtw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--utterances", dest="n_train", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--label-jitter", type=float)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"warpfit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError, FloatingPointError) as exc:
        print(f"warpfit {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
