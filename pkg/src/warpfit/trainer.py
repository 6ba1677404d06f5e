"""Losses, optimizers and the training loop with validation-based model selection."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import model
from .align import soft_dtw, soft_dtw_grad
from .seqcore import ParseError, UsageError, check_cost_kind, check_gamma, check_sequence

log = logging.getLogger(__name__)

LOSS_KINDS = ("l1", "l2", "softdtw")
OPTIMIZER_KINDS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "softdtw"
    gamma: float = 1.0
    cost: str = "euclidean"
    epochs: int = 30
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise UsageError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise UsageError(f"optimizer must be one of {OPTIMIZER_KINDS}, got {self.optimizer!r}")
        check_gamma(self.gamma, strict=True)
        check_cost_kind(self.cost)
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise UsageError(f"epochs must be an integer >= 1, got {self.epochs}")
        if not (math.isfinite(self.lr) and self.lr >= 0):
            raise UsageError(f"learning rate must be finite and >= 0, got {self.lr}")
        if not self.clip_norm > 0:
            raise UsageError(f"clip_norm must be > 0, got {self.clip_norm}")

    @classmethod
    def from_text(cls, text, path=None):
        """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            key = key.replace("-", "_")
            if not sep or key not in types:
                raise ParseError(f"unknown or malformed setting {raw!r}", path, lineno)
            conv = {"int": int, "float": float}.get(types[key], str)
            try:
                kwargs[key] = conv(value)
            except ValueError:
                raise ParseError(f"bad value for {key}: {value!r}", path, lineno) from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read(), path)
        except OSError as exc:
            raise ParseError(exc.strerror or str(exc), path=path) from exc

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_softdtw: list = field(default_factory=list)
    best_epoch: int = 0
    metrics: dict = field(default_factory=dict)

    def to_text(self):
        lines = [f"epoch={k} train_loss={a:.17g} val_softdtw={b:.17g}"
                 for k, (a, b) in enumerate(zip(self.train_loss, self.val_softdtw), 1)]
        lines.append(f"best_epoch={self.best_epoch}")
        lines += [f"{k}={v:.17g}" for k, v in self.metrics.items()]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())


def loss_and_grad(pred, target, kind="softdtw", gamma=1.0, cost="euclidean"):
    """Loss value and its gradient w.r.t. ``pred``.

    l1 and l2 are frame-aligned means over all entries and reject sequences of
    different length; softdtw accepts any pair.
    """
    pred = check_sequence(pred, "pred")
    target = check_sequence(target, "target")
    if pred.shape[1] != target.shape[1]:
        raise UsageError(f"dimension mismatch: pred D={pred.shape[1]}, target D={target.shape[1]}")
    if kind == "softdtw":
        g = soft_dtw_grad(pred, target, gamma, cost)
        return g.loss, g.d_a
    if kind not in LOSS_KINDS:
        raise UsageError(f"loss must be one of {LOSS_KINDS}, got {kind!r}")
    if pred.shape != target.shape:
        raise UsageError(
            f"{kind} needs frame-aligned sequences of equal length, got {pred.shape[0]} vs {target.shape[0]} frames")
    diff = pred - target
    if kind == "l1":
        return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def clip_gradients(grads, max_norm):
    """Scale ``grads`` in place so their global norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for v in grads.tensors.values():
            v *= scale
    return norm


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for name, p in params.tensors.items():
            p -= self.lr * grads.tensors[name]


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.tensors.items():
            g = grads.tensors[name]
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg):
    return Adam(cfg.lr) if cfg.optimizer == "adam" else SGD(cfg.lr)


def validation_softdtw(params, pairs, gamma, cost="euclidean"):
    """Mean soft-DTW between predictions and targets over ``pairs``."""
    total = math.fsum(soft_dtw(model.predict(params, x), y, gamma, cost)[0] for x, y in pairs)
    return total / len(pairs)


def _check_alignable(pairs, kind):
    if kind == "softdtw":
        return
    for k, (x, y) in enumerate(pairs):
        if x.shape[1] // 2 != y.shape[0]:
            raise UsageError(
                f"{kind} loss needs frame-aligned pairs; training item {k} predicts {x.shape[1] // 2} "
                f"frames for a {y.shape[0]}-frame target (use the softdtw loss for misaligned data)")


def fit_loop(params, train_pairs, val_pairs, cfg):
    """Train a copy of ``params``; return the parameters of the best validation epoch and the report.

    One optimizer step per utterance, utterances visited in a seed-shuffled
    order each epoch; global gradient norm clipped at ``cfg.clip_norm``.
    """
    if not train_pairs:
        raise UsageError("empty training split")
    if not val_pairs:
        raise UsageError("empty validation split")
    _check_alignable(train_pairs, cfg.loss)
    params = params.copy()
    opt = make_optimizer(cfg)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    best, best_val = params.copy(), math.inf
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for k in rng.permutation(len(train_pairs)):
            x, y = train_pairs[k]
            pred, tape = model.forward(params, x)
            loss, d_pred = loss_and_grad(pred, y, cfg.loss, cfg.gamma, cfg.cost)
            grads = model.backward(tape, d_pred)
            clip_gradients(grads, cfg.clip_norm)
            opt.step(params, grads)
            losses.append(loss)
        val = validation_softdtw(params, val_pairs, cfg.gamma, cfg.cost)
        report.train_loss.append(math.fsum(losses) / len(losses))
        report.val_softdtw.append(val)
        if val < best_val:
            best, best_val, report.best_epoch = params.copy(), val, epoch
        log.debug("epoch %d train %.6g val %.6g", epoch, report.train_loss[-1], val)
    if report.best_epoch == 0:
        raise FloatingPointError("validation loss never finite; training diverged")
    return best, report


def train(manifest, shape=None, cfg=None):
    """Train on the manifest's ``train`` split, selecting on ``val``."""
    cfg = cfg or TrainConfig()
    data = manifest.data
    dims = {"n_layers": data["n_layers"], "d_in": data["d_in"], "d_out": data["d_out"]}
    if shape is None:
        shape = model.ShapeConfig(**dims)
    elif any(getattr(shape, k) != v for k, v in dims.items()):
        raise UsageError(f"shape config {shape} is inconsistent with the manifest {dims}")
    train_pairs = list(zip(*manifest.load_split("train")))
    val_pairs = list(zip(*manifest.load_split("val")))
    params = model.init_params(cfg.seed, shape)
    return fit_loop(params, train_pairs, val_pairs, cfg)
