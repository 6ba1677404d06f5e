"""Frame-level MSE score and sequence-level DTW score."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import model
from .align import dtw
from .seqcore import UsageError, check_pair


def mse_score(pred, truth):
    """Mean squared difference over all entries of two aligned sequences."""
    pred, truth = check_pair(pred, truth)
    if pred.shape != truth.shape:
        raise UsageError(f"mse_score needs equal lengths, got {pred.shape[0]} vs {truth.shape[0]} frames")
    return float(np.mean((pred - truth) ** 2))


def dtw_score(pred, truth):
    """Euclidean DTW distance divided by the length of ``truth``."""
    pred, truth = check_pair(pred, truth)
    return dtw(pred, truth, "euclidean")[0] / truth.shape[0]


@dataclass
class MetricReport:
    mse_score: float
    dtw_score: float
    per_utterance: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows):
        """``rows`` holds ``(id, mse, dtw)`` triples; aggregates are plain means."""
        if not rows:
            raise UsageError("no utterances to evaluate")
        mse = math.fsum(r[1] for r in rows) / len(rows)
        dtw_ = math.fsum(r[2] for r in rows) / len(rows)
        return cls(mse, dtw_, list(rows))

    def to_text(self):
        lines = [f"mse_score={self.mse_score:.17g}", f"dtw_score={self.dtw_score:.17g}"]
        lines += [f"utterance={u} mse={m:.17g} dtw={d:.17g}" for u, m, d in self.per_utterance]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())


def evaluate_pairs(predict, pairs, ids=None):
    """Score ``predict(x)`` against ``y`` for every ``(x, y)`` in ``pairs``."""
    ids = ids if ids is not None else [str(k) for k in range(len(pairs))]
    rows = []
    for uid, (x, y) in zip(ids, pairs):
        pred = predict(x)
        rows.append((uid, mse_score(pred, y), dtw_score(pred, y)))
    return MetricReport.from_rows(rows)


def evaluate(params, manifest, split="test"):
    """Run the model over a manifest split and score it."""
    items = manifest.items(split)
    if not items:
        raise UsageError(f"split {split!r} is empty")
    pairs = [manifest.load_item(it) for it in items]
    return evaluate_pairs(lambda x: model.predict(params, x), pairs, [it["id"] for it in items])
