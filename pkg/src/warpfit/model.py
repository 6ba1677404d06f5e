"""Sequence regressor: layer fusion, 2x temporal downsampling, bidirectional Elman RNN, linear head.

Data flow for one utterance with ``N`` feature layers of shape ``(T, D_in)``::

    fuse     x[t]  = sum_i softmax(logits)_i * stack[i, t]          (T, D_in)
    conv1    y1    = tanh(conv(x, width 3, stride 1, same padding))  (T, C)
    conv2    y2    = tanh(conv(y1, width 3, stride 2))               (T // 2, C)
    rnn      h     = [forward Elman ; backward Elman] per layer      (T // 2, 2H)
    head     pred  = h @ W.T + b                                     (T // 2, D_out)

conv2 pads one zero frame in front, so output frame ``t`` is centred on
input frame ``2t`` and the output length is exactly ``T // 2``.

Gradients are hand-written reverse mode; :func:`backward` consumes the tape
produced by :func:`forward`.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .seqcore import ParseError, UsageError

KERNEL = 3
MIN_FRAMES = 4
_FORMAT_TAG = "warpfit-params v1"


@dataclass(frozen=True)
class ShapeConfig:
    n_layers: int = 4
    d_in: int = 8
    hidden: int = 16
    d_out: int = 6
    conv_channels: int = 16
    rnn_layers: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise UsageError(f"shape field {f.name} must be a positive integer, got {v!r}")

    def tensor_shapes(self):
        """Ordered ``name -> shape`` map of every learnable tensor."""
        C, H = self.conv_channels, self.hidden
        shapes = {
            "fusion_logits": (self.n_layers,),
            "conv1_w": (C, self.d_in, KERNEL),
            "conv1_b": (C,),
            "conv2_w": (C, C, KERNEL),
            "conv2_b": (C,),
        }
        for layer in range(self.rnn_layers):
            n_in = C if layer == 0 else 2 * H
            for direction in ("fwd", "bwd"):
                p = f"rnn{layer}_{direction}"
                shapes[f"{p}_wx"] = (H, n_in)
                shapes[f"{p}_wh"] = (H, H)
                shapes[f"{p}_b"] = (H,)
        shapes["head_w"] = (self.d_out, 2 * H)
        shapes["head_b"] = (self.d_out,)
        return shapes


class TensorSet:
    """Ordered collection of named float64 arrays laid out per :class:`ShapeConfig`."""

    def __init__(self, shape, tensors):
        self.shape = shape
        expected = shape.tensor_shapes()
        if list(tensors) != list(expected):
            missing = set(expected) ^ set(tensors)
            if missing:
                raise UsageError(f"tensor names do not match shape config: {sorted(missing)}")
            tensors = {k: tensors[k] for k in expected}
        self.tensors = {}
        for name, want in expected.items():
            arr = np.array(tensors[name], dtype=np.float64)
            if arr.shape != want:
                raise UsageError(f"{name}: expected shape {want}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise UsageError(f"{name}: non-finite entries")
            self.tensors[name] = arr

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self):
        return type(self)(self.shape, {k: v.copy() for k, v in self.tensors.items()})

    def global_norm(self):
        return float(np.sqrt(sum(float(np.sum(v * v)) for v in self.tensors.values())))

    def equals(self, other):
        return (self.shape == other.shape
                and all(np.array_equal(v, other.tensors[k]) for k, v in self.tensors.items()))

    def __repr__(self):
        return f"{type(self).__name__}({self.shape})"


class RegressorParams(TensorSet):
    """All learnable tensors of the regressor."""

    @property
    def fusion_weights(self):
        return softmax(self.tensors["fusion_logits"])


class GradientBundle(TensorSet):
    """One gradient array per parameter tensor."""


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def check_stack(stack, n_layers=None, d_in=None):
    """Validate a feature stack of shape ``(N, T, D_in)``."""
    arr = np.asarray(stack, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise UsageError(f"feature stack must have shape (N, T, D_in) with all sizes >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise UsageError("feature stack has non-finite entries")
    if n_layers is not None and arr.shape[0] != n_layers:
        raise UsageError(f"feature stack has N={arr.shape[0]} layers, expected {n_layers}")
    if d_in is not None and arr.shape[2] != d_in:
        raise UsageError(f"feature stack has D_in={arr.shape[2]}, expected {d_in}")
    return arr


def fuse(stack, logits):
    """Convex combination of the stack layers with weights ``softmax(logits)``."""
    stack = check_stack(stack)
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if logits.shape[0] != stack.shape[0]:
        raise UsageError(f"{logits.shape[0]} fusion logits for a stack of {stack.shape[0]} layers")
    return np.tensordot(softmax(logits), stack, axes=1)


def init_params(seed, shape=None):
    """Uniform ``[-s, s]`` initialisation with ``s = 1 / sqrt(fan_in)``; fusion logits start at 0."""
    shape = shape or ShapeConfig()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shp in shape.tensor_shapes().items():
        if name == "fusion_logits":
            tensors[name] = np.zeros(shp)
            continue
        if name.startswith("conv"):
            fan_in = shape.d_in * KERNEL if name.startswith("conv1") else shape.conv_channels * KERNEL
        elif name.startswith("head"):
            fan_in = 2 * shape.hidden
        else:
            fan_in = shape.hidden
        s = 1.0 / np.sqrt(fan_in)
        tensors[name] = rng.uniform(-s, s, size=shp)
    return RegressorParams(shape, tensors)


def _elman(u, wx, wh, b, reverse):
    T = u.shape[0]
    pre = u @ wx.T + b
    h = np.zeros((T, wh.shape[0]))
    prev = np.zeros(wh.shape[0])
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        prev = np.tanh(pre[t] + wh @ prev)
        h[t] = prev
    return h


def _elman_backward(u, h, wx, wh, dh_out, reverse):
    T, H = h.shape
    dz = np.zeros((T, H))
    h_prev = np.zeros((T, H))
    carry = np.zeros(H)
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        d = (dh_out[t] + carry) * (1.0 - h[t] * h[t])
        dz[t] = d
        carry = wh.T @ d
    if reverse:
        h_prev[:-1] = h[1:]
    else:
        h_prev[1:] = h[:-1]
    return dz.T @ u, dz.T @ h_prev, dz.sum(axis=0), dz @ wx


def forward(params, stack):
    """Predict a ``(T // 2, D_out)`` sequence; returns ``(pred, tape)``."""
    shape = params.shape
    stack = check_stack(stack, shape.n_layers, shape.d_in)
    T = stack.shape[1]
    if T < MIN_FRAMES:
        raise UsageError(f"need at least {MIN_FRAMES} input frames, got {T}")
    p = params.tensors
    alpha = softmax(p["fusion_logits"])
    x = np.tensordot(alpha, stack, axes=1)

    xp = np.zeros((T + 2, shape.d_in))
    xp[1:-1] = x
    w1 = p["conv1_w"]
    z1 = p["conv1_b"] + sum(xp[k:k + T] @ w1[:, :, k].T for k in range(KERNEL))
    y1 = np.tanh(z1)

    T2 = T // 2
    yp = np.zeros((T + 1, shape.conv_channels))
    yp[1:] = y1
    w2 = p["conv2_w"]
    z2 = p["conv2_b"] + sum(yp[k:k + 2 * T2:2] @ w2[:, :, k].T for k in range(KERNEL))
    y2 = np.tanh(z2)

    rnn_in = [y2]
    rnn_out = []
    u = y2
    for layer in range(shape.rnn_layers):
        hf = _elman(u, p[f"rnn{layer}_fwd_wx"], p[f"rnn{layer}_fwd_wh"], p[f"rnn{layer}_fwd_b"], False)
        hb = _elman(u, p[f"rnn{layer}_bwd_wx"], p[f"rnn{layer}_bwd_wh"], p[f"rnn{layer}_bwd_b"], True)
        rnn_out.append((hf, hb))
        u = np.concatenate([hf, hb], axis=1)
        rnn_in.append(u)
    pred = u @ p["head_w"].T + p["head_b"]
    tape = {
        "params": params, "stack": stack, "alpha": alpha, "xp": xp, "y1": y1,
        "yp": yp, "y2": y2, "rnn_in": rnn_in, "rnn_out": rnn_out,
        "pred_shape": pred.shape, "used": False,
    }
    return pred, tape


def predict(params, stack):
    return forward(params, stack)[0]


def backward(tape, d_pred):
    """Gradients of every parameter given ``dL/d pred``; each tape is single-use."""
    if tape.get("used"):
        raise UsageError("activation tape already consumed by a previous backward call")
    d_pred = np.asarray(d_pred, dtype=np.float64)
    if d_pred.shape != tape["pred_shape"]:
        raise UsageError(f"d_pred shape {d_pred.shape} does not match prediction shape {tape['pred_shape']}")
    tape["used"] = True
    params = tape["params"]
    shape = params.shape
    p = params.tensors
    g = {}

    h_top = tape["rnn_in"][-1]
    g["head_w"] = d_pred.T @ h_top
    g["head_b"] = d_pred.sum(axis=0)
    du = d_pred @ p["head_w"]

    H = shape.hidden
    for layer in range(shape.rnn_layers - 1, -1, -1):
        u = tape["rnn_in"][layer]
        hf, hb = tape["rnn_out"][layer]
        d_in = np.zeros_like(u)
        for direction, h, dh, reverse in (("fwd", hf, du[:, :H], False), ("bwd", hb, du[:, H:], True)):
            pre = f"rnn{layer}_{direction}"
            dwx, dwh, db, du_dir = _elman_backward(u, h, p[f"{pre}_wx"], p[f"{pre}_wh"], dh, reverse)
            g[f"{pre}_wx"], g[f"{pre}_wh"], g[f"{pre}_b"] = dwx, dwh, db
            d_in += du_dir
        du = d_in

    y2, yp = tape["y2"], tape["yp"]
    T2 = y2.shape[0]
    dz2 = du * (1.0 - y2 * y2)
    w2 = p["conv2_w"]
    g["conv2_b"] = dz2.sum(axis=0)
    g["conv2_w"] = np.stack([dz2.T @ yp[k:k + 2 * T2:2] for k in range(KERNEL)], axis=2)
    d_yp = np.zeros_like(yp)
    for k in range(KERNEL):
        d_yp[k:k + 2 * T2:2] += dz2 @ w2[:, :, k]

    y1, xp = tape["y1"], tape["xp"]
    T = y1.shape[0]
    dz1 = d_yp[1:] * (1.0 - y1 * y1)
    w1 = p["conv1_w"]
    g["conv1_b"] = dz1.sum(axis=0)
    g["conv1_w"] = np.stack([dz1.T @ xp[k:k + T] for k in range(KERNEL)], axis=2)
    d_xp = np.zeros_like(xp)
    for k in range(KERNEL):
        d_xp[k:k + T] += dz1 @ w1[:, :, k]
    dx = d_xp[1:-1]

    alpha = tape["alpha"]
    d_alpha = np.tensordot(tape["stack"], dx, axes=([1, 2], [0, 1]))
    g["fusion_logits"] = alpha * (d_alpha - alpha @ d_alpha)
    return GradientBundle(shape, g)


def save_params(params, path):
    """Write parameters as named tensors with a shape header, 17 significant digits."""
    lines = [_FORMAT_TAG, "shape " + " ".join(f"{k}={v}" for k, v in asdict(params.shape).items())]
    for name, arr in params.items():
        lines.append(f"tensor {name} " + ",".join(str(d) for d in arr.shape))
        lines.append(" ".join(format(x, ".17g") for x in arr.ravel()))
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(exc.strerror or str(exc), path=path) from exc
    if not lines or lines[0] != _FORMAT_TAG:
        raise ParseError(f"missing '{_FORMAT_TAG}' header", path, 1)
    if len(lines) < 2 or not lines[1].startswith("shape "):
        raise ParseError("missing shape line", path, 2)
    try:
        kv = dict(item.split("=", 1) for item in lines[1].split()[1:])
        shape = ShapeConfig(**{k: int(v) for k, v in kv.items()})
    except (ValueError, TypeError) as exc:
        raise ParseError(f"bad shape line: {exc}", path, 2) from None
    tensors = {}
    i = 2
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 3 or head[0] != "tensor":
            raise ParseError(f"expected 'tensor <name> <dims>', got {lines[i]!r}", path, i + 1)
        name = head[1]
        try:
            dims = tuple(int(d) for d in head[2].split(","))
            values = np.array([float(x) for x in lines[i + 1].split()], dtype=np.float64)
            tensors[name] = values.reshape(dims)
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad tensor {name}: {exc}", path, i + 2) from None
        i += 2
    try:
        return RegressorParams(shape, tensors)
    except UsageError as exc:
        raise ParseError(str(exc), path) from None
