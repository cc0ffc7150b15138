"""Two-branch encoder/decoder networks for depth completion.

Both models share the same scheme: a depth branch and an image branch are
encoded separately (late fusion) and joined by channel concatenation at the
coarsest level. The completion network (DCN) additionally wires skip
connections from every encoder stage of both branches into the decoder; the
prior network (CPN) deliberately has none, so its depth pathway stays
compressive.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import (
    Tensor,
    add,
    add_channel_bias,
    concat_channels,
    conv2d,
    conv_transpose2d,
    mul,
    power_penalty,
    relu,
    softplus,
    sub,
    upsample_nearest2x,
)

KERNEL = 3
DECONV_KERNEL = 4  # stride-2 transposed conv with pad 1 doubles the size exactly


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass
class EncoderSpec:
    """Channel/stride schedule of one encoder branch.

    Effective stage widths are round(base * k). The default stride is 2 at
    every stage; models may override the first stage.
    """

    base_channels: list[int] = field(default_factory=lambda: [64, 128, 256, 512, 512])
    k: float = 1.0
    in_channels: int = 1
    stride_schedule: Optional[list[int]] = None
    block: str = "plain_conv"

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"EncoderSpec: k must be positive, got {self.k}")
        if self.block not in ("plain_conv", "resnet_block"):
            raise ValueError(f"EncoderSpec: unknown block kind {self.block!r}")
        if self.stride_schedule is not None:
            if len(self.stride_schedule) != len(self.base_channels):
                raise ValueError("EncoderSpec: stride_schedule length must match base_channels")
            if any(s not in (1, 2) for s in self.stride_schedule):
                raise ValueError("EncoderSpec: strides must be 1 or 2")
        for c in self.base_channels:
            if int(round(c * self.k)) < 1:
                raise ValueError(f"EncoderSpec: round({c} * {self.k}) < 1")

    def stage_channels(self) -> list[int]:
        return [int(round(c * self.k)) for c in self.base_channels]

    def strides(self) -> list[int]:
        if self.stride_schedule is not None:
            return list(self.stride_schedule)
        return [2] * len(self.base_channels)


@dataclass(frozen=True)
class ConvLayerSpec:
    """A bare convolution layer, for parameter arithmetic."""

    in_channels: int
    out_channels: int
    kernel: int = KERNEL


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class ConvLayer:
    def __init__(self, rng: np.random.Generator, in_c: int, out_c: int, kernel: int,
                 stride: int, dtype, padding: Optional[int] = None, bias_init: float = 0.0):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        std = np.sqrt(2.0 / (in_c * kernel * kernel))
        self.weight = Tensor(rng.normal(0.0, std, (out_c, in_c, kernel, kernel)).astype(dtype), requires_grad=True)
        self.bias = Tensor(np.full(out_c, bias_init, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_params(self, prefix: str):
        yield prefix + ".weight", self.weight
        yield prefix + ".bias", self.bias


class DeconvLayer:
    def __init__(self, rng: np.random.Generator, in_c: int, out_c: int, dtype):
        std = np.sqrt(2.0 / (in_c * DECONV_KERNEL * DECONV_KERNEL))
        self.weight = Tensor(rng.normal(0.0, std, (in_c, out_c, DECONV_KERNEL, DECONV_KERNEL)).astype(dtype), requires_grad=True)
        self.bias = Tensor(np.full(out_c, BIAS_INIT, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        out = conv_transpose2d(x, self.weight, stride=2, padding=1)
        return add_channel_bias(out, self.bias)

    def named_params(self, prefix: str):
        yield prefix + ".weight", self.weight
        yield prefix + ".bias", self.bias


# zero-initialized biases put ReLU pre-activations exactly on the kink
# wherever a receptive field is all zero (common with sparse inputs), which
# breaks finite-difference checks; a small offset keeps the graph smooth
BIAS_INIT = 0.01


class ResBlock:
    """Two 3x3 convs with an identity shortcut; 1x1 projection when the
    channel count or resolution changes."""

    def __init__(self, rng: np.random.Generator, in_c: int, out_c: int, stride: int, dtype):
        self.conv1 = ConvLayer(rng, in_c, out_c, KERNEL, stride, dtype, bias_init=BIAS_INIT)
        self.conv2 = ConvLayer(rng, out_c, out_c, KERNEL, 1, dtype, bias_init=BIAS_INIT)
        if in_c != out_c or stride != 1:
            self.proj = ConvLayer(rng, in_c, out_c, 1, stride, dtype, padding=0)
        else:
            self.proj = None

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.conv1(x))
        h = self.conv2(h)
        shortcut = self.proj(x) if self.proj is not None else x
        return relu(add(h, shortcut))

    def named_params(self, prefix: str):
        yield from self.conv1.named_params(prefix + ".conv1")
        yield from self.conv2.named_params(prefix + ".conv2")
        if self.proj is not None:
            yield from self.proj.named_params(prefix + ".proj")


class PlainConvStage:
    def __init__(self, rng, in_c, out_c, stride, dtype):
        self.conv = ConvLayer(rng, in_c, out_c, KERNEL, stride, dtype, bias_init=BIAS_INIT)

    def __call__(self, x: Tensor) -> Tensor:
        return relu(self.conv(x))

    def named_params(self, prefix: str):
        yield from self.conv.named_params(prefix + ".conv")


class Encoder:
    def __init__(self, rng, channels: Sequence[int], strides: Sequence[int], in_channels: int, block: str, dtype):
        self.channels = list(channels)
        self.strides = list(strides)
        self.stages = []
        c_in = in_channels
        for c, s in zip(channels, strides):
            if block == "resnet_block":
                self.stages.append(ResBlock(rng, c_in, c, s, dtype))
            else:
                self.stages.append(PlainConvStage(rng, c_in, c, s, dtype))
            c_in = c

    def __call__(self, x: Tensor) -> list[Tensor]:
        feats = []
        h = x
        for stage in self.stages:
            h = stage(h)
            feats.append(h)
        return feats

    def named_params(self, prefix: str):
        for i, stage in enumerate(self.stages):
            yield from stage.named_params(f"{prefix}.stage{i}")

    def downsample_factor(self) -> int:
        f = 1
        for s in self.strides:
            f *= s
        return f


def _decoder_plan(strides: Sequence[int], skip_channels: Sequence[int]):
    """Upsampling steps from the bottleneck back to full resolution.

    Returns (target_factor, skip_channels_at_level, mirror_stage_index)
    tuples, deepest first; mirror is None when no encoder stage sits at the
    target resolution.
    """
    factors = []
    f = 1
    for s in strides:
        f *= s
        factors.append(f)
    steps = []
    f = factors[-1]
    while f > 1:
        f //= 2
        mirror = None
        for l in reversed(range(len(factors))):
            if factors[l] == f:
                mirror = l
                break
        skip = skip_channels[mirror] if mirror is not None else 0
        steps.append((f, skip, mirror))
    return steps


def _depth_activation(x: Tensor, max_depth: float) -> Tensor:
    """Smooth map onto (0, inf); the scale ties the output to the scene range."""
    return mul(softplus(x), max_depth / 4.0)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class CpnModel:
    kind = "cpn"

    def __init__(self, depth_encoder, image_encoder, deconvs, out_conv, eta, max_depth, config):
        self.depth_encoder = depth_encoder
        self.image_encoder = image_encoder
        self.deconvs = deconvs
        self.out_conv = out_conv
        self.eta = eta
        self.max_depth = max_depth
        self.config = config

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = list(self.depth_encoder.named_params("depth_enc"))
        out += list(self.image_encoder.named_params("image_enc"))
        for i, d in enumerate(self.deconvs):
            out += list(d.named_params(f"decoder.up{i}"))
        out += list(self.out_conv.named_params("decoder.out"))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True

    def param_bytes(self) -> bytes:
        buf = io.BytesIO()
        for _, p in self.named_parameters():
            buf.write(np.ascontiguousarray(p.data).tobytes())
        return buf.getvalue()

    def forward(self, d: Tensor, image: Tensor) -> Tensor:
        return cpn_forward(self, d, image)


class DcnModel:
    kind = "dcn"

    def __init__(self, depth_encoder, image_encoder, up_stages, out_conv, unsupervised_variant, max_depth, config):
        self.depth_encoder = depth_encoder
        self.image_encoder = image_encoder
        self.up_stages = up_stages  # list of dicts: deconv (or None for nearest), refine (or None)
        self.out_conv = out_conv
        self.unsupervised_variant = unsupervised_variant
        self.max_depth = max_depth
        self.config = config

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = list(self.depth_encoder.named_params("depth_enc"))
        out += list(self.image_encoder.named_params("image_enc"))
        for i, stage in enumerate(self.up_stages):
            if stage["deconv"] is not None:
                out += list(stage["deconv"].named_params(f"decoder.up{i}"))
            if stage["refine"] is not None:
                out += list(stage["refine"].named_params(f"decoder.refine{i}"))
        out += list(self.out_conv.named_params("decoder.out"))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True

    def param_bytes(self) -> bytes:
        buf = io.BytesIO()
        for _, p in self.named_parameters():
            buf.write(np.ascontiguousarray(p.data).tobytes())
        return buf.getvalue()

    def forward(self, z_map: Tensor, image: Tensor) -> Tensor:
        return dcn_forward(self, z_map, image)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _validate_pair(depth_spec: EncoderSpec, image_spec: EncoderSpec):
    if depth_spec.in_channels != 1:
        raise ValueError(f"depth branch must take 1 channel, got {depth_spec.in_channels}")
    if image_spec.in_channels != 3:
        raise ValueError(f"image branch must take 3 channels, got {image_spec.in_channels}")
    if len(depth_spec.base_channels) != len(image_spec.base_channels):
        raise ValueError("both branches must have the same number of stages")


def build_cpn(depth_spec: EncoderSpec, image_spec: EncoderSpec, eta: int, seed: int,
              bottleneck_ratio: float = 1.0 / 16.0, max_depth: float = 80.0,
              dtype=np.float64) -> CpnModel:
    """Construct the prior network with a compressive depth branch.

    The last depth-encoder stage is narrowed so the bottleneck holds at most
    ``bottleneck_ratio`` times the depth-input pixel count.
    """
    if eta not in (1, 2):
        raise ValueError(f"build_cpn: eta must be 1 or 2, got {eta}")
    _validate_pair(depth_spec, image_spec)

    strides = depth_spec.strides()
    if image_spec.strides() != strides:
        raise ValueError("CPN branches must share one stride schedule")
    spatial_shrink = 1
    for s in strides:
        spatial_shrink *= s * s
    bottleneck_c = max(1, int(spatial_shrink * bottleneck_ratio))
    if bottleneck_c >= spatial_shrink:
        raise ValueError(
            f"build_cpn: bottleneck of {bottleneck_c} channels at 1/{spatial_shrink} resolution "
            f"does not compress the depth input")

    d_channels = depth_spec.stage_channels()
    d_channels[-1] = min(d_channels[-1], bottleneck_c)
    i_channels = image_spec.stage_channels()

    rng = np.random.default_rng(seed)
    depth_enc = Encoder(rng, d_channels, strides, 1, depth_spec.block, dtype)
    image_enc = Encoder(rng, i_channels, strides, 3, image_spec.block, dtype)

    steps = _decoder_plan(strides, i_channels)
    deconvs = []
    c = d_channels[-1] + i_channels[-1]
    prev = c
    for _, _, mirror in steps:
        u = i_channels[mirror] if mirror is not None else max(1, prev // 2)
        deconvs.append(DeconvLayer(rng, c, u, dtype))
        c = u
        prev = u
    out_conv = ConvLayer(rng, c, 1, KERNEL, 1, dtype, bias_init=1.5)

    config = {
        "kind": "cpn",
        "depth_base": ",".join(str(v) for v in depth_spec.base_channels),
        "depth_k": depth_spec.k,
        "image_base": ",".join(str(v) for v in image_spec.base_channels),
        "image_k": image_spec.k,
        "strides": ",".join(str(v) for v in strides),
        "block": depth_spec.block,
        "eta": eta,
        "bottleneck_ratio": bottleneck_ratio,
        "max_depth": max_depth,
        "seed": seed,
        "dtype": np.dtype(dtype).name,
    }
    return CpnModel(depth_enc, image_enc, deconvs, out_conv, eta, max_depth, config)


def build_dcn(depth_spec: EncoderSpec, image_spec: EncoderSpec, unsupervised_variant: bool,
              seed: int, max_depth: float = 80.0, dtype=np.float64) -> DcnModel:
    """Construct the completion network with dual-branch skip connections."""
    _validate_pair(depth_spec, image_spec)

    n = len(depth_spec.base_channels)
    if depth_spec.stride_schedule is not None:
        strides = depth_spec.strides()
    else:
        strides = [1] + [2] * (n - 1)
    if unsupervised_variant:
        strides = [2] + strides[1:]
    if image_spec.stride_schedule is not None and image_spec.strides() != strides:
        raise ValueError("DCN branches must share one stride schedule")

    d_channels = depth_spec.stage_channels()
    i_channels = image_spec.stage_channels()
    combined = [cd + ci for cd, ci in zip(d_channels, i_channels)]

    rng = np.random.default_rng(seed)
    depth_enc = Encoder(rng, d_channels, strides, 1, depth_spec.block, dtype)
    image_enc = Encoder(rng, i_channels, strides, 3, image_spec.block, dtype)

    steps = _decoder_plan(strides, combined)
    up_stages = []
    c = combined[-1]
    for idx, (_, skip, _) in enumerate(steps):
        last = idx == len(steps) - 1
        if unsupervised_variant and last:
            # final learned upsample replaced by parameter-free nearest neighbor
            up_stages.append({"deconv": None, "refine": None, "skip": None})
            continue
        u = skip if skip > 0 else max(1, c // 2)
        deconv = DeconvLayer(rng, c, u, dtype)
        refine = None
        c = u
        if skip > 0:
            refine = ConvLayer(rng, u + skip, u, KERNEL, 1, dtype)
        up_stages.append({"deconv": deconv, "refine": refine, "skip": skip})
    out_conv = ConvLayer(rng, c, 1, KERNEL, 1, dtype, bias_init=1.5)

    config = {
        "kind": "dcn",
        "depth_base": ",".join(str(v) for v in depth_spec.base_channels),
        "depth_k": depth_spec.k,
        "image_base": ",".join(str(v) for v in image_spec.base_channels),
        "image_k": image_spec.k,
        "strides": ",".join(str(v) for v in strides),
        "block": depth_spec.block,
        "unsupervised_variant": int(unsupervised_variant),
        "max_depth": max_depth,
        "seed": seed,
        "dtype": np.dtype(dtype).name,
    }
    return DcnModel(depth_enc, image_enc, up_stages, out_conv, unsupervised_variant, max_depth, config)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _check_forward_shapes(model, d: Tensor, image: Tensor, what: str):
    if d.data.ndim != 4 or image.data.ndim != 4:
        raise ValueError(f"{what}: inputs must be rank-4")
    if d.shape[1] != 1:
        raise ValueError(f"{what}: depth input must have 1 channel, got shape {d.shape}")
    if image.shape[1] != 3:
        raise ValueError(f"{what}: image input must have 3 channels, got shape {image.shape}")
    if d.shape[0] != image.shape[0] or d.shape[2:] != image.shape[2:]:
        raise ValueError(f"{what}: misaligned inputs {d.shape} vs {image.shape}")
    f = model.depth_encoder.downsample_factor()
    if d.shape[2] % f or d.shape[3] % f:
        raise ValueError(f"{what}: spatial size {d.shape[2]}x{d.shape[3]} not divisible by {f}")


def cpn_forward(model: CpnModel, d: Tensor, image: Tensor) -> Tensor:
    """Reconstruct the depth input through the bottlenecked encoder pair."""
    _check_forward_shapes(model, d, image, "cpn_forward")
    # depth enters in units of the scene range so both branches feed the
    # fusion at comparable magnitudes
    d_feats = model.depth_encoder(mul(d, 1.0 / model.max_depth))
    i_feats = model.image_encoder(image)
    h = concat_channels(d_feats[-1], i_feats[-1])
    for deconv in model.deconvs:
        h = relu(deconv(h))
    h = model.out_conv(h)
    return _depth_activation(h, model.max_depth)


def dcn_forward(model: DcnModel, z_map: Tensor, image: Tensor) -> Tensor:
    """Dense strictly-positive depth from a zero-filled sparse map and image."""
    _check_forward_shapes(model, z_map, image, "dcn_forward")
    d_feats = model.depth_encoder(mul(z_map, 1.0 / model.max_depth))
    i_feats = model.image_encoder(image)
    steps = _decoder_plan(model.depth_encoder.strides,
                          [cd + ci for cd, ci in zip(model.depth_encoder.channels, model.image_encoder.channels)])
    h = concat_channels(d_feats[-1], i_feats[-1])
    for stage, (_, skip, mirror) in zip(model.up_stages, steps):
        if stage["deconv"] is None:
            h = upsample_nearest2x(h)
            continue
        h = relu(stage["deconv"](h))
        if skip > 0:
            h = concat_channels(h, concat_channels(d_feats[mirror], i_feats[mirror]))
            h = relu(stage["refine"](h))
    h = model.out_conv(h)
    return _depth_activation(h, model.max_depth)


def reconstruction_energy(d_prime: Tensor, d: Tensor, eta: int) -> Tensor:
    """Separable penalty of the reconstruction residual; the prior energy."""
    return power_penalty(sub(d_prime, d), eta)


def cpn_score(model: CpnModel, d: Tensor, image: Tensor) -> Tensor:
    """Negative log prior energy E of a candidate depth given the image.

    The prior probability is exp(-E), reported in the log domain; lower E
    means the candidate is more compatible with the image.
    """
    d_prime = cpn_forward(model, d, image)
    return reconstruction_energy(d_prime, d, model.eta)


# ---------------------------------------------------------------------------
# Parameter accounting
# ---------------------------------------------------------------------------

def count_parameters(obj, include_bias: bool = False) -> int:
    """Trainable scalar count for a model or a bare ConvLayerSpec.

    Bias terms are excluded by default so layer-level counts reduce to the
    plain kernel arithmetic k*k*c_in*c_out.
    """
    if isinstance(obj, ConvLayerSpec):
        n = obj.kernel * obj.kernel * obj.in_channels * obj.out_channels
        if include_bias:
            n += obj.out_channels
        return n
    if isinstance(obj, (list, tuple)):
        return sum(count_parameters(o, include_bias) for o in obj)
    total = 0
    for name, p in obj.named_parameters():
        if not include_bias and name.endswith(".bias"):
            continue
        total += p.size
    return total


def parameter_breakdown(model, include_bias: bool = False) -> list[tuple[str, int]]:
    rows = []
    for name, p in model.named_parameters():
        if not include_bias and name.endswith(".bias"):
            continue
        rows.append((name, p.size))
    return rows


# ---------------------------------------------------------------------------
# Checkpoints: text manifest + little-endian flat blob
# ---------------------------------------------------------------------------

_MAGIC = "densedepth-checkpoint v1"


def save_checkpoint(path: str, model, extra: Optional[dict] = None):
    """Write a human-readable manifest at ``path`` and raw data at ``path + '.bin'``."""
    blob_path = path + ".bin"
    lines = [_MAGIC, f"blob {os.path.basename(blob_path)}"]
    for key, value in model.config.items():
        lines.append(f"config {key} {value}")
    for key, value in (extra or {}).items():
        lines.append(f"extra {key} {value}")
    offset = 0
    payload = io.BytesIO()
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.data)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        shape = "x".join(str(v) for v in arr.shape)
        lines.append(f"tensor {name} {shape} {arr.dtype.name} {offset} {len(raw)}")
        payload.write(raw)
        offset += len(raw)
    tmp_manifest = path + ".tmp"
    tmp_blob = blob_path + ".tmp"
    with open(tmp_blob, "wb") as f:
        f.write(payload.getvalue())
    with open(tmp_manifest, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp_blob, blob_path)
    os.replace(tmp_manifest, path)


def _rebuild_from_config(cfg: dict):
    strides = [int(v) for v in cfg["strides"].split(",")]
    block = cfg["block"]
    dtype = np.dtype(cfg.get("dtype", "float64"))
    depth_spec = EncoderSpec(
        base_channels=[int(v) for v in cfg["depth_base"].split(",")],
        k=float(cfg["depth_k"]), in_channels=1, stride_schedule=strides, block=block)
    image_spec = EncoderSpec(
        base_channels=[int(v) for v in cfg["image_base"].split(",")],
        k=float(cfg["image_k"]), in_channels=3, stride_schedule=strides, block=block)
    if cfg["kind"] == "cpn":
        return build_cpn(depth_spec, image_spec, eta=int(cfg["eta"]), seed=int(cfg["seed"]),
                         bottleneck_ratio=float(cfg["bottleneck_ratio"]),
                         max_depth=float(cfg["max_depth"]), dtype=dtype)
    if cfg["kind"] == "dcn":
        return build_dcn(depth_spec, image_spec,
                         unsupervised_variant=bool(int(cfg["unsupervised_variant"])),
                         seed=int(cfg["seed"]), max_depth=float(cfg["max_depth"]), dtype=dtype)
    raise ValueError(f"unknown checkpoint kind {cfg['kind']!r}")


def load_checkpoint(path: str):
    """Rebuild the model recorded in the manifest and restore its data bit-exactly.

    Returns (model, extra) where extra holds the free-form string entries
    written alongside the parameters.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"not a checkpoint manifest: {path}")
    cfg: dict = {}
    extra: dict = {}
    tensors = []
    blob_name = None
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split(" ")
        if parts[0] == "blob":
            blob_name = parts[1]
        elif parts[0] == "config":
            cfg[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "extra":
            extra[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "tensor":
            name, shape, dtype, offset, nbytes = parts[1], parts[2], parts[3], int(parts[4]), int(parts[5])
            tensors.append((name, shape, dtype, offset, nbytes))
        else:
            raise ValueError(f"malformed manifest line in {path}: {ln!r}")
    if blob_name is None:
        raise ValueError(f"manifest {path} lists no blob")
    blob_path = os.path.join(os.path.dirname(path) or ".", blob_name)
    with open(blob_path, "rb") as f:
        raw = f.read()

    model = _rebuild_from_config(cfg)
    params = dict(model.named_parameters())
    if len(params) != len(tensors):
        raise ValueError(f"checkpoint {path}: expected {len(params)} tensors, manifest lists {len(tensors)}")
    for name, shape_s, dtype_s, offset, nbytes in tensors:
        if name not in params:
            raise ValueError(f"checkpoint {path}: unknown tensor {name!r}")
        shape = tuple(int(v) for v in shape_s.split("x")) if shape_s else ()
        dt = np.dtype(dtype_s).newbyteorder("<")
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype=dt).reshape(shape)
        p = params[name]
        if p.data.shape != shape:
            raise ValueError(f"checkpoint {path}: tensor {name} shape {shape} does not match model {p.data.shape}")
        p.data = arr.astype(np.dtype(dtype_s))
    return model, extra
