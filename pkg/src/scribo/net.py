"""Separable-convolution acoustic model: forward inference and weights.

The network follows the QuartzNet15x5 layout: a stride-2 separable
prologue, five groups of residual blocks built from time-channel
separable convolutions (depthwise K x C then pointwise 1x1, batch norm,
ReLU), a dilated separable epilogue, and two pointwise heads ending in
vocab_size+1 log-softmax outputs for CTC.

Everything here is inference only and float32 throughout. Weights live
in a directory interchange format (manifest.json + weights.bin) and can
be batch-norm folded, chunk-streamed, and re-headed for a different
alphabet without disturbing any shared output column.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import WeightError
from .features import AudioClip, FeatureConfig, logmel, normalize_features
from .textnorm import AlphabetSpec

BN_EPS = 1e-5


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ConvSpec:
    """One standalone conv stage (prologue/epilogue unit)."""

    kernel: int
    channels: int
    stride: int = 1
    dilation: int = 1
    separable: bool = True


@dataclass(frozen=True)
class BlockGroup:
    """A run of identical residual blocks.

    Each block is ``sub_blocks`` separable convs (BN+ReLU between, BN
    after the last) plus a pointwise+BN skip projection, summed before
    the block's final ReLU.
    """

    repeats: int
    sub_blocks: int
    kernel: int
    channels: int
    residual: bool = True


@dataclass(frozen=True)
class NetConfig:
    vocab_size: int
    input_features: int = 64
    prologue: ConvSpec = ConvSpec(kernel=33, channels=256, stride=2)
    blocks: tuple[BlockGroup, ...] = ()
    epilogue: tuple[ConvSpec, ...] = (
        ConvSpec(kernel=87, channels=512, dilation=2),
        ConvSpec(kernel=1, channels=1024, separable=False),
    )

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if self.input_features < 1:
            raise ValueError("input_features must be >= 1")

    def to_dict(self) -> dict:
        def conv(c: ConvSpec) -> dict:
            return {"kernel": c.kernel, "channels": c.channels, "stride": c.stride,
                    "dilation": c.dilation, "separable": c.separable}

        return {
            "vocab_size": self.vocab_size,
            "input_features": self.input_features,
            "prologue": conv(self.prologue),
            "blocks": [
                {"repeats": g.repeats, "sub_blocks": g.sub_blocks, "kernel": g.kernel,
                 "channels": g.channels, "residual": g.residual}
                for g in self.blocks
            ],
            "epilogue": [conv(c) for c in self.epilogue],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(
            vocab_size=d["vocab_size"],
            input_features=d["input_features"],
            prologue=ConvSpec(**d["prologue"]),
            blocks=tuple(BlockGroup(**g) for g in d["blocks"]),
            epilogue=tuple(ConvSpec(**c) for c in d["epilogue"]),
        )


def quartznet15x5(vocab_size: int = 28, input_features: int = 64) -> NetConfig:
    """The 15x5 preset: 5 groups x 3 blocks x 5 sub-convs, ~19M params."""
    kernels = (33, 39, 51, 63, 75)
    channels = (256, 256, 512, 512, 512)
    groups = tuple(
        BlockGroup(repeats=3, sub_blocks=5, kernel=k, channels=c)
        for k, c in zip(kernels, channels)
    )
    return NetConfig(vocab_size=vocab_size, input_features=input_features, blocks=groups)


# ---------------------------------------------------------------------------
# Layer plan: a flat description shared by forward, validation, counting


@dataclass(frozen=True)
class _Unit:
    """One conv with its optional BN, as named in the weight set."""

    name: str
    kernel: int
    in_channels: int
    out_channels: int
    stride: int = 1
    dilation: int = 1
    separable: bool = True


def _plan(cfg: NetConfig):
    """(standalone units before blocks, block descriptions, tail units).

    Blocks are (name, [sub units], residual unit or None) triples.
    """
    pro = cfg.prologue
    ch = pro.channels
    head = [_Unit("c1", pro.kernel, cfg.input_features, ch, pro.stride, pro.dilation,
                  pro.separable)]

    blocks = []
    index = 0
    for group in cfg.blocks:
        for _ in range(group.repeats):
            index += 1
            name = f"b{index}"
            subs = []
            sub_in = ch
            for j in range(1, group.sub_blocks + 1):
                subs.append(_Unit(f"{name}.s{j}", group.kernel, sub_in, group.channels))
                sub_in = group.channels
            res = _Unit(f"{name}.res", 1, ch, group.channels, separable=False) \
                if group.residual else None
            blocks.append((name, subs, res))
            ch = group.channels

    tail = []
    for i, spec in enumerate(cfg.epilogue, 2):
        tail.append(_Unit(f"c{i}", spec.kernel, ch, spec.channels, spec.stride,
                          spec.dilation, spec.separable))
        ch = spec.channels
    head_index = 2 + len(cfg.epilogue)
    tail.append(_Unit(f"c{head_index}", 1, ch, cfg.vocab_size + 1, separable=False))
    return head, blocks, tail


def _all_units(cfg: NetConfig):
    head, blocks, tail = _plan(cfg)
    units = list(head)
    for _, subs, res in blocks:
        units.extend(subs)
        if res is not None:
            units.append(res)
    units.extend(tail)
    return units


def _head_unit_name(cfg: NetConfig) -> str:
    return f"c{2 + len(cfg.epilogue)}"


def tensor_specs(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    """Expected tensor names and shapes for an unfolded weight set."""
    specs: dict[str, tuple[int, ...]] = {}
    head_name = _head_unit_name(cfg)
    for u in _all_units(cfg):
        if u.separable:
            specs[f"{u.name}.dw"] = (u.kernel, u.in_channels)
        specs[f"{u.name}.pw"] = (u.in_channels, u.out_channels)
        if u.name == head_name:
            specs[f"{u.name}.bias"] = (u.out_channels,)
        else:
            for part in ("gamma", "beta", "mean", "var"):
                specs[f"{u.name}.bn.{part}"] = (u.out_channels,)
    return specs


def param_count(cfg: NetConfig) -> int:
    """Trainable parameters: kernels, BN affine pairs, head bias.

    BN running statistics are buffers, not parameters, and are not
    counted.
    """
    total = 0
    head_name = _head_unit_name(cfg)
    for u in _all_units(cfg):
        if u.separable:
            total += u.kernel * u.in_channels
        total += u.in_channels * u.out_channels
        total += u.out_channels if u.name == head_name else 2 * u.out_channels
    return total


# ---------------------------------------------------------------------------
# Weights


class NetworkWeights:
    """Named float32 tensors; treat as immutable after construction."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {k: np.asarray(v, dtype=np.float32) for k, v in tensors.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightError(f"missing tensor {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return sorted(self.tensors)

    @property
    def folded(self) -> bool:
        return not any(n.endswith(".bn.gamma") for n in self.tensors)


def validate_weights(cfg: NetConfig, weights: NetworkWeights) -> None:
    """Check tensor presence and shapes; accepts folded or unfolded sets.

    Every conv needs its kernels; each non-head conv needs either the
    four BN tensors or (after folding) a bias. BN variances must be
    positive.
    """
    seen = set()
    head_name = _head_unit_name(cfg)

    def need(name: str, shape: tuple[int, ...]):
        if name not in weights:
            raise WeightError(f"missing tensor {name!r}")
        t = weights[name]
        if tuple(t.shape) != shape:
            raise WeightError(f"tensor {name!r} has shape {tuple(t.shape)}, expected {shape}")
        seen.add(name)

    for u in _all_units(cfg):
        if u.separable:
            need(f"{u.name}.dw", (u.kernel, u.in_channels))
        need(f"{u.name}.pw", (u.in_channels, u.out_channels))
        if u.name == head_name:
            need(f"{u.name}.bias", (u.out_channels,))
        elif f"{u.name}.bn.gamma" in weights:
            for part in ("gamma", "beta", "mean", "var"):
                need(f"{u.name}.bn.{part}", (u.out_channels,))
            if not np.all(weights[f"{u.name}.bn.var"] > 0):
                raise WeightError(f"{u.name}.bn.var must be strictly positive")
        elif f"{u.name}.bias" in weights:
            need(f"{u.name}.bias", (u.out_channels,))
        else:
            raise WeightError(f"missing tensor {u.name + '.bn.gamma'!r} (or folded bias)")

    extra = set(weights.tensors) - seen
    if extra:
        raise WeightError(f"unexpected tensors: {sorted(extra)[:5]}")


def random_weights(cfg: NetConfig, seed: int = 0) -> NetworkWeights:
    """Variance-stable random weights for tests and benchmarks.

    Kernel scales keep activations near unit variance through the whole
    stack so numeric comparisons (BN folding, streaming) are meaningful
    rather than dominated by overflow or underflow.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    head_name = _head_unit_name(cfg)
    for u in _all_units(cfg):
        if u.separable:
            tensors[f"{u.name}.dw"] = rng.normal(
                0.0, 1.0 / math.sqrt(u.kernel), (u.kernel, u.in_channels)
            ).astype(np.float32)
        tensors[f"{u.name}.pw"] = rng.normal(
            0.0, 1.0 / math.sqrt(u.in_channels), (u.in_channels, u.out_channels)
        ).astype(np.float32)
        if u.name == head_name:
            tensors[f"{u.name}.bias"] = rng.normal(0.0, 0.1, u.out_channels).astype(np.float32)
        else:
            c = u.out_channels
            tensors[f"{u.name}.bn.gamma"] = (1.0 + 0.1 * rng.standard_normal(c)).astype(np.float32)
            tensors[f"{u.name}.bn.beta"] = (0.1 * rng.standard_normal(c)).astype(np.float32)
            tensors[f"{u.name}.bn.mean"] = (0.1 * rng.standard_normal(c)).astype(np.float32)
            tensors[f"{u.name}.bn.var"] = rng.uniform(0.8, 1.25, c).astype(np.float32)
    return NetworkWeights(tensors)


# ---------------------------------------------------------------------------
# Forward


def _depthwise(x: np.ndarray, kernel: np.ndarray, stride: int, dilation: int) -> np.ndarray:
    k = kernel.shape[0]
    t = x.shape[0]
    ke = dilation * (k - 1) + 1
    t_out = -(-t // stride)
    pad_left = (ke - 1) // 2
    pad_right = max(0, (t_out - 1) * stride + ke - pad_left - t)
    padded = np.zeros((pad_left + t + pad_right, x.shape[1]), dtype=np.float32)
    padded[pad_left:pad_left + t] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, ke, axis=0)
    taps = windows[::stride][:t_out][:, :, ::dilation]
    return np.einsum("tck,kc->tc", taps, kernel)


def _affine(x: np.ndarray, unit: str, weights: NetworkWeights) -> np.ndarray:
    if f"{unit}.bn.gamma" in weights:
        gamma = weights[f"{unit}.bn.gamma"]
        beta = weights[f"{unit}.bn.beta"]
        mean = weights[f"{unit}.bn.mean"]
        var = weights[f"{unit}.bn.var"]
        scale = gamma / np.sqrt(var + BN_EPS)
        return x * scale + (beta - mean * scale)
    if f"{unit}.bias" in weights:
        return x + weights[f"{unit}.bias"]
    raise WeightError(f"unit {unit!r} has neither batch norm nor bias")


def _conv(x: np.ndarray, u: _Unit, weights: NetworkWeights) -> np.ndarray:
    if u.separable:
        x = _depthwise(x, weights[f"{u.name}.dw"], u.stride, u.dilation)
    elif u.stride != 1 or u.dilation != 1:
        raise WeightError(f"unit {u.name!r}: pointwise conv must have stride/dilation 1")
    return x @ weights[f"{u.name}.pw"]


def _head(x: np.ndarray, name: str, weights: NetworkWeights) -> np.ndarray:
    # Per-column matrix-vector products: each output column comes from
    # its own reduction, so adding or dropping other columns (alphabet
    # surgery) can never perturb it.
    w = weights[f"{name}.pw"]
    bias = weights[f"{name}.bias"]
    out = np.empty((x.shape[0], w.shape[1]), dtype=np.float32)
    wt = np.ascontiguousarray(w.T)
    for j in range(w.shape[1]):
        out[:, j] = x @ wt[j]
    return out + bias


def log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(cfg: NetConfig, weights: NetworkWeights, features: np.ndarray,
            log_probs: bool = True) -> np.ndarray:
    """Run the network on a (T, input_features) matrix.

    Returns ceil(T / prologue stride) rows of width vocab_size+1, as
    log-softmax scores (or raw pre-softmax activations with
    log_probs=False, which alphabet-adaptation comparisons rely on).
    """
    x = np.asarray(features, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != cfg.input_features:
        raise ValueError(
            f"features shape {x.shape} does not match input_features={cfg.input_features}"
        )
    if x.shape[0] < 1:
        raise ValueError("need at least one feature frame")

    head, blocks, tail = _plan(cfg)
    for u in head:
        x = np.maximum(_affine(_conv(x, u, weights), u.name, weights), 0.0)

    for name, subs, res in blocks:
        inp = x
        for j, u in enumerate(subs):
            x = _affine(_conv(x, u, weights), u.name, weights)
            if j < len(subs) - 1:
                x = np.maximum(x, 0.0)
        if res is not None:
            x = x + _affine(inp @ weights[f"{res.name}.pw"], res.name, weights)
        x = np.maximum(x, 0.0)

    for u in tail[:-1]:
        x = np.maximum(_affine(_conv(x, u, weights), u.name, weights), 0.0)
    x = _head(x, tail[-1].name, weights)
    return log_softmax(x) if log_probs else x


# ---------------------------------------------------------------------------
# Batch-norm folding


def fold_batchnorm(cfg: NetConfig, weights: NetworkWeights) -> NetworkWeights:
    """Fold every BN into its preceding pointwise kernel plus a bias.

    With scale = gamma / sqrt(var + eps): pw column c is multiplied by
    scale[c] and the unit gains bias beta - mean * scale. Output of
    forward stays within 1e-5 max-abs of the unfolded net. Folding an
    already folded set is an error.
    """
    if weights.folded:
        raise WeightError("weights carry no batch norm (already folded?)")
    tensors = dict(weights.tensors)
    for u in _all_units(cfg):
        gname = f"{u.name}.bn.gamma"
        if gname not in tensors:
            continue
        var = tensors[f"{u.name}.bn.var"]
        if not np.all(var > 0):
            raise WeightError(f"{u.name}.bn.var must be strictly positive")
        scale = tensors[gname] / np.sqrt(var + BN_EPS)
        tensors[f"{u.name}.pw"] = (tensors[f"{u.name}.pw"] * scale).astype(np.float32)
        bias = tensors[f"{u.name}.bn.beta"] - tensors[f"{u.name}.bn.mean"] * scale
        tensors[f"{u.name}.bias"] = bias.astype(np.float32)
        for part in ("gamma", "beta", "mean", "var"):
            del tensors[f"{u.name}.bn.{part}"]
    return NetworkWeights(tensors)


# ---------------------------------------------------------------------------
# Receptive field and streaming


def receptive_field_frames(cfg: NetConfig) -> tuple[int, int]:
    """(frames one output row sees to the left, to the right) in input
    feature frames, computed symbolically from kernel/stride/dilation."""
    left = right = 0
    jump = 1
    for u in _all_units(cfg):
        ke = u.dilation * (u.kernel - 1) + 1
        pad_left = (ke - 1) // 2
        left += pad_left * jump
        right += (ke - 1 - pad_left) * jump
        jump *= u.stride
    return left, right


def receptive_field_seconds(cfg: NetConfig, feat_cfg: FeatureConfig) -> float:
    """Audio a single output row depends on, window edges included."""
    left, right = receptive_field_frames(cfg)
    return (left + right) * feat_cfg.hop_length + feat_cfg.window_length


def _stride_total(cfg: NetConfig) -> int:
    s = 1
    for u in _all_units(cfg):
        s *= u.stride
    return s


def forward_streaming(cfg: NetConfig, weights: NetworkWeights, clip: AudioClip,
                      chunk_seconds: float, feat_cfg: FeatureConfig | None = None,
                      normalize: bool = True, log_probs: bool = True) -> np.ndarray:
    """Chunked forward pass with receptive-field overlap.

    Features are extracted (and, by default, normalized) once for the
    whole clip; the conv stack then runs on overlapping windows and
    only rows whose full receptive field lies inside their window are
    kept, so the concatenation matches the unchunked forward within
    1e-4 max-abs (bitwise when one chunk covers the clip). The chunk
    must cover at least the receptive field.
    """
    feat_cfg = feat_cfg or FeatureConfig()
    rf_sec = receptive_field_seconds(cfg, feat_cfg)
    if chunk_seconds < rf_sec:
        raise ValueError(
            f"chunk of {chunk_seconds:.2f}s is below the receptive field ({rf_sec:.2f}s)"
        )
    left, right = receptive_field_frames(cfg)
    stride = _stride_total(cfg)
    chunk_frames = int(chunk_seconds / feat_cfg.hop_length)
    if chunk_frames < left + right + stride:
        raise ValueError(
            f"chunk of {chunk_frames} frames cannot make progress past the "
            f"receptive field ({left}+{right} frames)"
        )

    feats = logmel(clip, feat_cfg)
    t = feats.shape[0]
    if t == 0:
        return np.zeros((0, cfg.vocab_size + 1), dtype=np.float32)
    if normalize and t >= 2:
        feats = normalize_features(feats)
    t_out = -(-t // stride)

    pieces = []
    row = 0
    while row < t_out:
        start = max(0, row * stride - left)
        start -= start % stride  # window starts on an anchor boundary
        end = min(t, start + chunk_frames)
        y = forward(cfg, weights, feats[start:end], log_probs=log_probs)
        last = t_out - 1 if end == t else (end - 1 - right) // stride
        first_local = row - start // stride
        pieces.append(y[first_local:last - start // stride + 1])
        row = last + 1
    return np.concatenate(pieces, axis=0)


# ---------------------------------------------------------------------------
# Alphabet adaptation


@dataclass(frozen=True)
class AdaptPolicy:
    """How a new output head is assembled from an old one.

    ``mapping`` pairs each target symbol with the source symbol whose
    weights it inherits, or None for a freshly initialized row. ``init``
    is "zero" or "uniform" (uniform draws from [-scale, scale) with the
    given seed). The blank column is always carried over implicitly.
    """

    mode: str
    mapping: tuple[tuple[str, str | None], ...]
    init: str = "zero"
    scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("extend", "shrink"):
            raise ValueError("mode must be 'extend' or 'shrink'")
        if self.init not in ("zero", "uniform"):
            raise ValueError("init must be 'zero' or 'uniform'")


def make_adapt_policy(src: AlphabetSpec, tgt: AlphabetSpec, init: str = "zero",
                      scale: float = 0.01, seed: int = 0) -> AdaptPolicy:
    """Identity mapping: shared symbols keep their weights, others are NEW."""
    mapping = tuple((sym, sym if sym in src.symbols else None) for sym in tgt.symbols)
    mode = "extend" if any(s is None for _, s in mapping) else "shrink"
    return AdaptPolicy(mode, mapping, init, scale, seed)


def adapt_alphabet(cfg: NetConfig, weights: NetworkWeights, src: AlphabetSpec,
                   tgt: AlphabetSpec, policy: AdaptPolicy) -> tuple[NetConfig, NetworkWeights]:
    """Rebuild the output head for a different alphabet.

    Mapped symbols take their source column of the head kernel and bias
    verbatim; NEW symbols get policy-initialized columns; columns of
    dropped source symbols disappear. The blank stays last and keeps
    its weights. No other tensor is touched, so shared symbols produce
    bit-identical pre-softmax activations.
    """
    targets = [t for t, _ in policy.mapping]
    if sorted(targets) != sorted(tgt.symbols):
        dup = {t for t in targets if targets.count(t) > 1}
        if dup:
            raise ValueError(f"duplicate target mapping for {sorted(dup)}")
        raise ValueError("policy.mapping must cover every target symbol exactly once")
    for t, s in policy.mapping:
        if s is not None and s not in src.symbols:
            raise ValueError(f"mapping for {t!r} references unknown source symbol {s!r}")
    if cfg.vocab_size != src.size:
        raise ValueError("cfg.vocab_size does not match the source alphabet")

    head_name = _head_unit_name(cfg)
    old_w = weights[f"{head_name}.pw"]
    old_b = weights[f"{head_name}.bias"]
    c_in = old_w.shape[0]
    rng = np.random.default_rng(policy.seed)

    new_w = np.zeros((c_in, tgt.size + 1), dtype=np.float32)
    new_b = np.zeros(tgt.size + 1, dtype=np.float32)
    by_target = dict(policy.mapping)
    for i, sym in enumerate(tgt.symbols):
        source = by_target[sym]
        if source is not None:
            j = src.index(source)
            new_w[:, i] = old_w[:, j]
            new_b[i] = old_b[j]
        elif policy.init == "uniform":
            new_w[:, i] = rng.uniform(-policy.scale, policy.scale, c_in).astype(np.float32)
            new_b[i] = rng.uniform(-policy.scale, policy.scale)
    new_w[:, tgt.size] = old_w[:, src.size]
    new_b[tgt.size] = old_b[src.size]

    tensors = dict(weights.tensors)
    tensors[f"{head_name}.pw"] = new_w
    tensors[f"{head_name}.bias"] = new_b
    return replace(cfg, vocab_size=tgt.size), NetworkWeights(tensors)


# ---------------------------------------------------------------------------
# Tensor blob interchange (weights and saved logit matrices)

BLOB_NAME = "weights.bin"
MANIFEST_NAME = "manifest.json"


def write_tensor_blob(directory, tensors: dict[str, np.ndarray],
                      extra: dict | None = None) -> Path:
    """Write manifest.json + weights.bin; returns the manifest path.

    The blob is little-endian float32, row-major, tensors packed at the
    offsets recorded (in bytes) in the manifest's tensor table, with a
    sha256 checksum over the whole blob.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = []
    blob = bytearray()
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name], dtype="<f4")
        entry = {"name": name, "shape": list(data.shape), "dtype": "f32",
                 "offset": len(blob), "length": data.nbytes}
        table.append(entry)
        blob.extend(data.tobytes())
    manifest = dict(extra or {})
    manifest["tensors"] = table
    manifest["checksum"] = "sha256:" + hashlib.sha256(bytes(blob)).hexdigest()
    (directory / BLOB_NAME).write_bytes(bytes(blob))
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest_path


def read_tensor_blob(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a manifest.json + weights.bin directory (or manifest path)."""
    path = Path(path)
    directory = path.parent if path.name == MANIFEST_NAME else path
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise WeightError(f"{manifest_path}: no manifest found")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WeightError(f"{manifest_path}: invalid JSON: {exc}") from exc
    blob_path = directory / BLOB_NAME
    if not blob_path.exists():
        raise WeightError(f"{blob_path}: missing weight blob")
    blob = blob_path.read_bytes()

    checksum = manifest.get("checksum", "")
    if not checksum.startswith("sha256:"):
        raise WeightError(f"{manifest_path}: missing or malformed checksum")
    digest = "sha256:" + hashlib.sha256(blob).hexdigest()
    if digest != checksum:
        raise WeightError(f"{blob_path}: checksum mismatch (corrupt or truncated blob)")

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest.get("tensors", []):
        name, shape = entry["name"], tuple(entry["shape"])
        offset, length = entry["offset"], entry["length"]
        if entry.get("dtype") != "f32":
            raise WeightError(f"tensor {name!r}: unsupported dtype {entry.get('dtype')!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if length != 4 * count or offset + length > len(blob):
            raise WeightError(f"tensor {name!r}: offset/length outside blob")
        flat = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        tensors[name] = flat.reshape(shape).astype(np.float32)
    return tensors, manifest


@dataclass(frozen=True)
class LoadedModel:
    name: str
    net: NetConfig
    weights: NetworkWeights
    features: FeatureConfig
    alphabet: AlphabetSpec


def save_weights(directory, cfg: NetConfig, weights: NetworkWeights,
                 feat_cfg: FeatureConfig, alphabet: AlphabetSpec,
                 name: str = "model") -> Path:
    """Persist a model directory (manifest.json + weights.bin)."""
    if alphabet.size != cfg.vocab_size:
        raise ValueError("alphabet size does not match cfg.vocab_size")
    extra = {
        "model": name,
        "net": cfg.to_dict(),
        "features": feat_cfg.to_dict(),
        "alphabet": alphabet.to_dict(),
    }
    return write_tensor_blob(directory, weights.tensors, extra)


def load_weights(path) -> LoadedModel:
    """Load and validate a model directory saved by save_weights."""
    tensors, manifest = read_tensor_blob(path)
    for key in ("net", "features", "alphabet"):
        if key not in manifest:
            raise WeightError(f"model manifest lacks the {key!r} section")
    cfg = NetConfig.from_dict(manifest["net"])
    feat_cfg = FeatureConfig.from_dict(manifest["features"])
    alphabet = AlphabetSpec.from_dict(manifest["alphabet"])
    weights = NetworkWeights(tensors)
    validate_weights(cfg, weights)
    if alphabet.size != cfg.vocab_size:
        raise WeightError("manifest alphabet size disagrees with net vocab_size")
    return LoadedModel(manifest.get("model", "model"), cfg, weights, feat_cfg, alphabet)


def import_external_checkpoint(src, layout: str, out_dir=None) -> LoadedModel:
    """Convert a checkpoint exported by another framework to this format.

    A converter for a given layout must rename tensors to the names in
    tensor_specs, reshape depthwise kernels to (K, C) and pointwise
    kernels to (C_in, C_out) row-major float32, attach NetConfig,
    FeatureConfig and AlphabetSpec sections, and save with save_weights.
    No external layout is bundled; this stub documents the mapping
    contract so converters can live out of tree.
    """
    raise WeightError(
        f"no converter registered for checkpoint layout {layout!r}; "
        "see import_external_checkpoint docstring for the mapping contract"
    )
