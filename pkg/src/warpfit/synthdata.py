"""Synthetic corpora with aligned ("recorded") and time-warped ("synthetic speaker") pairs.

Each base utterance has a smooth latent signal ``z(t)``. Its feature stack
holds ``N`` noisy views of the same linear map of ``z`` (noise grows with the
layer index) and its target is ``sigmoid(M z + c)`` sampled at half the input
frame rate, so target frame ``k`` belongs to input frame ``2k``.

A synthetic-speaker item reuses the base utterance's target file unchanged
while its inputs go through a per-speaker affine transform and a fresh
monotone time warp, which breaks the frame correspondence.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import check_stack
from .seqcore import ParseError, UsageError, format_rows, parse_rows, read_sequence, write_sequence

SLOPE_MIN = 0.7
SLOPE_MAX = 1.4
MAX_CONDITION = 50.0
MIN_UTTERANCE_FRAMES = 8
MANIFEST_NAME = "manifest.json"
_MANIFEST_TAG = "warpfit-manifest v1"


@dataclass(frozen=True)
class SynthConfig:
    n_layers: int = 4
    d_in: int = 8
    d_out: int = 6
    latent_dim: int = 4
    n_sines: int = 3
    period_min: float = 8.0
    period_max: float = 32.0
    noise_min: float = 0.1
    noise_max: float = 1.2
    target_gain: float = 2.0
    speaker_strength: float = 0.25
    speaker_bias: float = 0.2
    # offset shared by every synthetic voice, on top of its own transform
    tts_shift: float = 0.0
    label_jitter: float = 0.0
    world_seed: int = 0

    def __post_init__(self):
        if min(self.n_layers, self.d_in, self.d_out, self.latent_dim, self.n_sines) < 1:
            raise UsageError("synth sizes must be >= 1")
        if not 0 < self.period_min <= self.period_max:
            raise UsageError("need 0 < period_min <= period_max")

    def noise_levels(self):
        return np.linspace(self.noise_min, self.noise_max, self.n_layers)


@dataclass(frozen=True)
class _World:
    feature_map: np.ndarray  # (d_in, latent)
    target_map: np.ndarray  # (d_out, latent)
    target_bias: np.ndarray  # (d_out,)


def _world(config):
    rng = np.random.default_rng([config.world_seed, 0x57A7])
    feature_map = rng.normal(size=(config.d_in, config.latent_dim)) / np.sqrt(config.latent_dim)
    target_map = config.target_gain * rng.normal(size=(config.d_out, config.latent_dim)) / np.sqrt(config.latent_dim)
    target_bias = rng.normal(scale=0.5, size=config.d_out)
    return _World(feature_map, target_map, target_bias)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gen_utterance(seed, T, config=None, rendering=0):
    """One aligned pair: a ``(N, T, d_in)`` stack and a ``(T // 2, d_out)`` target in (0, 1).

    ``seed`` fixes the content (latent signal and target). ``rendering``
    selects an independent draw of the feature noise, so several renderings
    of one utterance share the target but not the noise.
    """
    config = config or SynthConfig()
    if T < MIN_UTTERANCE_FRAMES:
        raise UsageError(f"utterances need at least {MIN_UTTERANCE_FRAMES} frames, got {T}")
    world = _world(config)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    state = [int(x) for x in ss.generate_state(4)]
    rng = np.random.default_rng(state)
    noise_rng = np.random.default_rng(state + [0x0153, int(rendering)])
    t = np.arange(T, dtype=np.float64)
    shape = (config.latent_dim, config.n_sines)
    period = rng.uniform(config.period_min, config.period_max, size=shape)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    amp = rng.uniform(0.5, 1.0, size=shape) / np.sqrt(config.n_sines)

    def latent(times):
        return np.sum(amp[..., None] * np.sin(2.0 * np.pi * times / period[..., None] + phase[..., None]), axis=1).T

    z = latent(t)
    clean = z @ world.feature_map.T
    noise = noise_rng.normal(size=(config.n_layers, T, config.d_in))
    stack = clean[None] + config.noise_levels()[:, None, None] * noise

    label_t = t[0:2 * (T // 2):2]
    # slow drift between label timing and input timing, at most label_jitter frames
    j_period = rng.uniform(2.0, 4.0) * config.period_max
    j_phase = rng.uniform(0.0, 2.0 * np.pi)
    label_t = label_t + config.label_jitter * np.sin(2.0 * np.pi * label_t / j_period + j_phase)
    target = _sigmoid(latent(label_t) @ world.target_map.T + world.target_bias)
    return stack, target


@dataclass(frozen=True)
class WarpSpec:
    """Piecewise-linear monotone map of normalised time through knots ``(u_k, v_k)``.

    ``u`` runs over [0, 1]; ``v_K`` is the length ratio of the warped output.
    """

    knots: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64)
        if k.ndim != 2 or k.shape[1] != 2 or k.shape[0] < 2:
            raise UsageError("warp needs at least two (u, v) knots")
        if k[0, 0] != 0 or k[0, 1] != 0 or k[-1, 0] != 1:
            raise UsageError("warp knots must start at (0, 0) and end at u = 1")
        du, dv = np.diff(k[:, 0]), np.diff(k[:, 1])
        if (du <= 0).any() or (dv <= 0).any():
            raise UsageError("warp knots must be strictly increasing")
        slopes = dv / du
        if (slopes < SLOPE_MIN - 1e-12).any() or (slopes > SLOPE_MAX + 1e-12).any():
            raise UsageError(f"warp slopes must lie in [{SLOPE_MIN}, {SLOPE_MAX}], got {slopes}")

    @classmethod
    def identity(cls):
        return cls(((0.0, 0.0), (1.0, 1.0)))

    @classmethod
    def constant(cls, slope):
        return cls(((0.0, 0.0), (1.0, float(slope))))

    @classmethod
    def random(cls, rng, n_segments=None):
        if n_segments is None:
            n_segments = int(rng.integers(2, 6))
        u = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, size=n_segments - 1)), [1.0]])
        while (np.diff(u) <= 1e-3).any():
            u = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, size=n_segments - 1)), [1.0]])
        slopes = rng.uniform(SLOPE_MIN, SLOPE_MAX, size=n_segments)
        v = np.concatenate([[0.0], np.cumsum(np.diff(u) * slopes)])
        return cls(tuple((float(a), float(b)) for a, b in zip(u, v)))

    @property
    def u(self):
        return np.array([k[0] for k in self.knots])

    @property
    def v(self):
        return np.array([k[1] for k in self.knots])

    @property
    def ratio(self):
        return self.knots[-1][1]

    def __call__(self, u):
        return np.interp(u, self.u, self.v)

    def inverse(self, v):
        return np.interp(v, self.v, self.u)

    def output_length(self, T):
        return max(1, int(round(T * self.ratio)))

    def source_positions(self, T):
        """Fractional input frame index sampled by each output frame."""
        T_out = self.output_length(T)
        pos = self.inverse(np.arange(T_out) * self.ratio / T_out) * T
        nearest = np.round(pos)
        return np.where(np.abs(pos - nearest) < 1e-9, nearest, pos)


def apply_warp(stack, warp):
    """Resample every layer of ``stack`` along time through ``warp`` (linear interpolation)."""
    stack = check_stack(stack)
    T = stack.shape[1]
    pos = warp.source_positions(T)
    lo = np.clip(np.floor(pos).astype(int), 0, T - 1)
    hi = np.minimum(lo + 1, T - 1)
    frac = (pos - lo)[None, :, None]
    return (1.0 - frac) * stack[:, lo] + frac * stack[:, hi]


@dataclass(frozen=True)
class SpeakerTransform:
    matrix: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or self.bias.shape != (m.shape[0],):
            raise UsageError("speaker transform must be a square matrix with a matching bias")
        if np.linalg.cond(m) > MAX_CONDITION:
            raise UsageError(f"speaker transform condition number exceeds {MAX_CONDITION}")

    @classmethod
    def for_speaker(cls, index, config):
        """Deterministic transform of synthetic speaker ``index`` (1-based)."""
        d = config.d_in
        shared = np.random.default_rng([config.world_seed, 0x5BEA, 0])
        base = np.eye(d) + config.tts_shift * shared.normal(size=(d, d)) / np.sqrt(d)
        base_bias = config.tts_shift * shared.normal(size=d)
        rng = np.random.default_rng([config.world_seed, 0x5BEA, index])
        while True:
            m = base + config.speaker_strength * rng.normal(size=(d, d)) / np.sqrt(d)
            if np.linalg.cond(m) <= MAX_CONDITION:
                break
        return cls(m, base_bias + config.speaker_bias * rng.normal(size=d))

    def apply(self, stack):
        return stack @ self.matrix.T + self.bias


# split -> (include recorded items, number of synthetic speakers)
LAYOUTS = {
    "rec": {"train": (True, 0), "val": (True, 0)},
    "tts1": {"train": (False, 1), "val": (False, 1)},
    "tts13": {"train": (False, 13), "val": (False, 13)},
    "rec+tts13": {"train": (True, 13), "val": (True, 0)},
}


@dataclass(frozen=True)
class CorpusConfig:
    layout: str = "rec"
    n_train: int = 10
    n_val: int = 4
    n_test: int = 10
    frames: int = 48
    frame_jitter: float = 0.25
    synth: SynthConfig = field(default_factory=SynthConfig)
    custom: dict | None = None
    # TTS-only splits: one rendering per base utterance, speakers taken in
    # turn, so they hold as many items as a recorded split
    matched: bool = False

    def splits(self):
        if self.custom is not None:
            return {k: tuple(v) for k, v in self.custom.items()}
        try:
            return LAYOUTS[self.layout]
        except KeyError:
            raise UsageError(f"unknown layout {self.layout!r}; choose from {sorted(LAYOUTS)} or pass custom") from None


def speaker_name(index):
    return "rec" if index == 0 else f"tts{index:02d}"


def write_stack(stack, path):
    stack = check_stack(stack)
    N, T, D = stack.shape
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{N},{T},{D}\n")
        fh.write(format_rows(stack.reshape(N * T, D)))


def read_stack(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise ParseError(exc.strerror or str(exc), path=path) from exc
    try:
        N, T, D = (int(x) for x in lines[0].split(","))
    except ValueError:
        raise ParseError("stack header must be 'N,T,D'", path, 1) from None
    rows = parse_rows(lines[1:], path, first_line=2)
    if rows.shape != (N * T, D):
        raise ParseError(f"header declares {N * T}x{D} rows, found {rows.shape[0]}x{rows.shape[1]}", path)
    return rows.reshape(N, T, D)


@dataclass
class Manifest:
    """A generated corpus on disk; item paths are relative to ``root``."""

    root: Path
    data: dict

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ParseError(exc.strerror or str(exc), path=path) from exc
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, exc.lineno) from None
        if data.get("format") != _MANIFEST_TAG:
            raise ParseError(f"not a {_MANIFEST_TAG} file", path)
        return cls(path.parent, data)

    @property
    def seed(self):
        return self.data["seed"]

    def items(self, split):
        return [it for it in self.data["items"] if it["split"] == split]

    def load_item(self, item):
        return read_stack(self.root / item["input"]), read_sequence(self.root / item["target"])

    def load_split(self, split):
        pairs = [self.load_item(it) for it in self.items(split)]
        return [p[0] for p in pairs], [p[1] for p in pairs]

    def validate(self):
        n, d_in, d_out = self.data["n_layers"], self.data["d_in"], self.data["d_out"]
        for it in self.data["items"]:
            for key in ("input", "target"):
                if not (self.root / it[key]).is_file():
                    raise ParseError(f"item {it['id']}: missing {key} file {it[key]}", self.root / MANIFEST_NAME)
            stack, target = self.load_item(it)
            if stack.shape != (n, it["frames"], d_in) or target.shape != (it["target_frames"], d_out):
                raise ParseError(f"item {it['id']}: shapes disagree with manifest", self.root / MANIFEST_NAME)
        return True


def gen_corpus(seed, config, out_dir):
    """Generate the corpus described by ``config`` under ``out_dir`` and return its manifest."""
    out = Path(out_dir)
    splits = config.splits()
    splits = {**splits, "test": (True, 0)}
    for name in ("train", "val"):
        if name not in splits:
            raise UsageError(f"layout lacks a {name} split")
    synth = SynthConfig(**{**asdict(config.synth), "world_seed": int(seed)})
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    (out / "targets").mkdir(parents=True, exist_ok=True)

    n_speakers = max(s for _, s in splits.values())
    speakers = {k: SpeakerTransform.for_speaker(k, synth) for k in range(1, n_speakers + 1)}
    base_ss, warp_ss = np.random.SeedSequence([int(seed), 0xC0DE]).spawn(2)
    warp_rng = np.random.default_rng(warp_ss)
    counts = {"train": config.n_train, "val": config.n_val, "test": config.n_test}
    utt_seeds = iter(base_ss.spawn(sum(counts.values())))
    frame_rng = np.random.default_rng([int(seed), 0xF4A3])

    items = []
    for split in ("train", "val", "test"):
        include_rec, n_tts = splits[split]
        for k in range(counts[split]):
            utt = f"{split}{k:03d}"
            lo = max(MIN_UTTERANCE_FRAMES, int(round(config.frames * (1 - config.frame_jitter))))
            hi = max(lo, int(round(config.frames * (1 + config.frame_jitter))))
            T = int(frame_rng.integers(lo, hi + 1))
            utt_seed = next(utt_seeds)
            stack, target = gen_utterance(utt_seed, T, synth)
            target_rel = f"targets/{utt}.csv"
            write_sequence(target, out / target_rel)
            sources = ([0] if include_rec else []) + list(range(1, n_tts + 1))
            if config.matched and n_tts and not include_rec:
                sources = [k % n_tts + 1]
            for spk in sources:
                name = speaker_name(spk)
                if spk == 0:
                    x, warp = stack, None
                else:
                    rendered, _ = gen_utterance(utt_seed, T, synth, rendering=spk)
                    w = WarpSpec.random(warp_rng)
                    x, warp = apply_warp(speakers[spk].apply(rendered), w), [list(k) for k in w.knots]
                input_rel = f"inputs/{utt}_{name}.csv"
                write_stack(x, out / input_rel)
                items.append({
                    "id": f"{utt}_{name}", "split": split, "speaker": name, "utterance": utt,
                    "input": input_rel, "target": target_rel,
                    "frames": int(x.shape[1]), "target_frames": int(target.shape[0]), "warp": warp,
                })

    data = {
        "format": _MANIFEST_TAG,
        "seed": int(seed),
        "layout": config.layout if config.custom is None else "custom",
        "splits": {k: list(v) for k, v in splits.items()},
        "matched": bool(config.matched),
        "counts": {s: sum(1 for it in items if it["split"] == s) for s in ("train", "val", "test")},
        "n_layers": synth.n_layers, "d_in": synth.d_in, "d_out": synth.d_out,
        "speakers": ["rec"] + [speaker_name(k) for k in range(1, n_speakers + 1)],
        "synth": asdict(synth),
        "ground_truth": "layer i = A z(t) + noise_i (noise rising with i); "
                        "target[k] = sigmoid(M z(2k) + c); synthetic speakers: x -> S x + s, then time warp",
        "items": items,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    return Manifest(out, data)
