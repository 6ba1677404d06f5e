"""End-to-end experiment runs: generate a corpus, train, evaluate on recorded test data."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import model
from .evaluation import evaluate
from .synthdata import LAYOUTS, CorpusConfig, SynthConfig, gen_corpus
from .trainer import TrainConfig, train

METRICS_FILE = "metrics.txt"
SUMMARY_FILE = "summary.txt"


@dataclass(frozen=True)
class ExperimentSettings:
    """Corpus and optimisation settings shared by every run of a comparison."""

    n_train: int = 10
    n_val: int = 4
    n_test: int = 10
    frames: int = 48
    label_jitter: float = 2.0
    speaker_strength: float = 0.1
    speaker_bias: float = 0.05
    tts_shift: float = 0.1
    gamma: float = 0.3
    lr: float = 1e-2
    epochs: int = 30
    optimizer: str = "adam"
    clip_norm: float = 5.0
    hidden: int = 16
    conv_channels: int = 16
    matched: bool = False

    def corpus(self, layout):
        synth = SynthConfig(label_jitter=self.label_jitter, speaker_strength=self.speaker_strength,
                            speaker_bias=self.speaker_bias, tts_shift=self.tts_shift)
        return CorpusConfig(layout=layout, n_train=self.n_train, n_val=self.n_val, n_test=self.n_test,
                            frames=self.frames, synth=synth, matched=self.matched)

    def train_config(self, loss, seed):
        return TrainConfig(loss=loss, gamma=self.gamma, epochs=self.epochs, lr=self.lr,
                           optimizer=self.optimizer, seed=seed, clip_norm=self.clip_norm)

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


def run_name(layout, loss, seed):
    return f"{layout}_{loss}_seed{seed}"


def run_experiment(layout, loss, seed, out_dir, settings=None):
    """Run one configuration under ``out_dir/<layout>_<loss>_seed<seed>``.

    Returns ``(params, train_report, metric_report)``; everything is also
    written to disk. The test split is always recorded (aligned) data.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    settings = settings or ExperimentSettings()
    run_dir = Path(out_dir) / run_name(layout, loss, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = gen_corpus(seed, settings.corpus(layout), run_dir / "corpus")
    shape = model.ShapeConfig(n_layers=manifest.data["n_layers"], d_in=manifest.data["d_in"],
                              d_out=manifest.data["d_out"], hidden=settings.hidden,
                              conv_channels=settings.conv_channels)
    cfg = settings.train_config(loss, seed)
    params, report = train(manifest, shape, cfg)
    metrics = evaluate(params, manifest, "test")
    report.metrics = {"test_mse_score": metrics.mse_score, "test_dtw_score": metrics.dtw_score}

    (run_dir / "settings.txt").write_text(settings.to_text() + f"layout={layout}\n", encoding="utf-8")
    (run_dir / "train_config.txt").write_text(cfg.to_text(), encoding="utf-8")
    model.save_params(params, run_dir / "params.txt")
    report.save(run_dir / "train_report.txt")
    metrics.save(run_dir / METRICS_FILE)
    write_summary(out_dir)
    return params, report, metrics


def _read_metrics(path):
    values = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        if key in ("mse_score", "dtw_score"):
            values[key] = float(value)
    return values


def write_summary(out_dir):
    """Tabulate every run found under ``out_dir`` and mark the best run per metric."""
    out = Path(out_dir)
    runs = {}
    for path in sorted(out.glob(f"*/{METRICS_FILE}")):
        values = _read_metrics(path)
        if len(values) == 2:
            runs[path.parent.name] = values
    lines = ["run mse_score dtw_score"]
    for name, v in runs.items():
        lines.append(f"{name} {v['mse_score']:.9g} {v['dtw_score']:.9g}")
    for metric in ("mse_score", "dtw_score"):
        if runs:
            best = min(runs, key=lambda k: (runs[k][metric], k))
            lines.append(f"best_{metric}={best}")
    text = "\n".join(lines) + "\n"
    (out / SUMMARY_FILE).write_text(text, encoding="utf-8")
    return text


def median(values):
    values = list(values)
    if not values or any(math.isnan(v) for v in values):
        raise ValueError("median of empty or NaN data")
    return statistics.median(values)


def sweep(layouts, losses, seeds, out_dir, settings=None):
    """Run the full grid; returns ``{(layout, loss): [MetricReport per seed]}``."""
    results = {}
    for layout in layouts:
        for loss in losses:
            for seed in seeds:
                _, _, metrics = run_experiment(layout, loss, seed, out_dir, settings)
                results.setdefault((layout, loss), []).append(metrics)
    return results


def with_updates(settings, **changes):
    return replace(settings, **changes)
