"""Run orchestration: prior pretraining, completion training, evaluation, ablation.

All randomness is derived from the run seed, so a (config, seed) pair
reproduces checkpoints, logs, and CSV outputs exactly in double precision.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from . import data as data_mod
from .data import AugmentationConfig, Scene, SceneConfig, SparseSample, generate_scene, sample_sparse
from .losses import LossWeights, NormSpec, map_fidelity, photometric_raw, photometric_ssim, posterior_score, prior_energy, supervised_loss
from .metrics import EvalResult, aggregate, compute_metrics
from .networks import (
    CpnModel,
    DcnModel,
    EncoderSpec,
    build_cpn,
    build_dcn,
    cpn_forward,
    dcn_forward,
    load_checkpoint,
    save_checkpoint,
)
from .optim import Adam, halved_lr
from .tensor import Tensor, mul, no_grad, power_penalty, sub

MODES = ("cpn", "supervised", "unsupervised", "stereo")


# ---------------------------------------------------------------------------
# Presets and run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelPreset:
    name: str
    base_channels: tuple[int, ...]
    input_hw: tuple[int, int]
    dcn_k_depth: float = 0.25
    dcn_k_image: float = 0.75
    # the prior needs a strong image branch to be informative; its depth
    # branch is capped by the bottleneck anyway
    cpn_k: float = 1.0


PRESETS = {
    # desk-scale defaults: base schedule scaled down by 4, three stages
    "desk": ModelPreset("desk", (16, 32, 64), (64, 192)),
    "tiny": ModelPreset("tiny", (8, 16, 32), (32, 96)),
    "full": ModelPreset("full", (64, 128, 256, 512, 512), (320, 768)),
}


def preset_scene_config(preset: ModelPreset, make_stereo: bool, d_max: float = 80.0) -> SceneConfig:
    h, w = preset.input_hw
    return SceneConfig(height=h, width=w, d_max=d_max,
                       focal_px=w / 2.0, make_stereo=make_stereo)


def dcn_specs(preset: ModelPreset) -> tuple[EncoderSpec, EncoderSpec]:
    depth = EncoderSpec(base_channels=list(preset.base_channels), k=preset.dcn_k_depth,
                        in_channels=1, block="resnet_block")
    image = EncoderSpec(base_channels=list(preset.base_channels), k=preset.dcn_k_image,
                        in_channels=3, block="resnet_block")
    return depth, image


def cpn_specs(preset: ModelPreset) -> tuple[EncoderSpec, EncoderSpec]:
    depth = EncoderSpec(base_channels=list(preset.base_channels), k=preset.cpn_k,
                        in_channels=1, block="plain_conv")
    image = EncoderSpec(base_channels=list(preset.base_channels), k=preset.cpn_k,
                        in_channels=3, block="plain_conv")
    return depth, image


@dataclass
class RunConfig:
    mode: str = "supervised"
    preset: str = "desk"
    norms: NormSpec = field(default_factory=NormSpec)
    weights: LossWeights = field(default_factory=LossWeights)
    lr0: float = 1e-4
    half_every: int = 1000
    total_steps: int = 5000
    batch: int = 4
    n_scenes: int = 200
    density: float = 0.05
    val_fraction: float = 0.1
    augmentation: Optional[AugmentationConfig] = None
    unsupervised_variant: Optional[bool] = None  # None: follow the mode
    max_depth: float = 80.0
    eval_every: int = 250
    seed: int = 0
    out_dir: str = "runs/run"
    dtype: str = "float64"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"RunConfig: mode must be one of {MODES}, got {self.mode!r}")
        if self.preset not in PRESETS:
            raise ValueError(f"RunConfig: unknown preset {self.preset!r}")
        if self.total_steps < 0:
            raise ValueError("RunConfig: total_steps must be >= 0")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"RunConfig: density must be in (0, 1], got {self.density}")
        if self.batch < 1:
            raise ValueError("RunConfig: batch must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"RunConfig: dtype must be float32 or float64, got {self.dtype!r}")

    def model_preset(self) -> ModelPreset:
        return PRESETS[self.preset]

    def default_augmentation(self) -> AugmentationConfig:
        if self.augmentation is not None:
            return self.augmentation
        # horizontal flips would flip the warp direction within a batch, so
        # stereo runs keep them off
        flip_h = 0.0 if self.mode == "stereo" else 0.5
        return AugmentationConfig(crop=None, flip_h=flip_h, flip_v=0.5, hist_eq=False,
                                  sparse_shift=self.mode in ("unsupervised", "stereo"))


# ---------------------------------------------------------------------------
# Scene pools and batching
# ---------------------------------------------------------------------------

def _scene_seed(run_seed: int, index: int) -> int:
    return run_seed * 1_000_003 + index


def build_scene_pools(cfg: RunConfig):
    """Deterministic train/val split: every k-th generated scene validates."""
    stride = max(2, int(round(1.0 / max(cfg.val_fraction, 1e-9))))
    scene_cfg = preset_scene_config(cfg.model_preset(), make_stereo=(cfg.mode == "stereo"),
                                    d_max=cfg.max_depth)
    train, val = [], []
    for i in range(cfg.n_scenes):
        scene = generate_scene(_scene_seed(cfg.seed, i), scene_cfg)
        (val if i % stride == 0 else train).append(scene)
    if not train or not val:
        raise ValueError(f"build_scene_pools: split produced empty pool from {cfg.n_scenes} scenes")
    return train, val


def _stack_batch(scenes: list[Scene], samples: list[Optional[SparseSample]], dtype=np.float64):
    images = np.stack([s.image for s in scenes]).astype(dtype)
    depths = np.stack([s.depth for s in scenes]).astype(dtype)
    stereo = None
    if all(s.stereo_image is not None for s in scenes):
        stereo = np.stack([s.stereo_image for s in scenes]).astype(dtype)
    z_maps = None
    validity = None
    if samples is not None and all(sp is not None for sp in samples):
        h, w = depths.shape[2], depths.shape[3]
        z_maps = np.zeros((len(scenes), 1, h, w), dtype=dtype)
        validity = np.zeros((len(scenes), 1, h, w), dtype=dtype)
        for i, sp in enumerate(samples):
            z_maps[i, 0, sp.omega[:, 0], sp.omega[:, 1]] = sp.z
            validity[i, 0] = sp.validity[0]
    return images, depths, stereo, z_maps, validity


def _model_dtype(model) -> np.dtype:
    return model.parameters()[0].dtype


def _augmented_batch(cfg: RunConfig, scenes: list[Scene], step: int, rng: np.random.Generator,
                     with_sparse: bool):
    aug = cfg.default_augmentation()
    idx = rng.integers(0, len(scenes), size=cfg.batch)
    picked, samples = [], []
    for j, i in enumerate(idx):
        scene = scenes[i]
        sample = None
        if with_sparse:
            sample = sample_sparse(scene, cfg.density, seed=_scene_seed(cfg.seed, 7919 * step + j))
        scene, sample = data_mod.augment(scene, sample, aug, seed=_scene_seed(cfg.seed, 104729 * step + j))
        if with_sparse and sample.omega.shape[0] < 1:
            # jitter can push every point off a small crop; resample
            sample = sample_sparse(scene, cfg.density, seed=_scene_seed(cfg.seed, 15485863 * step + j))
        picked.append(scene)
        samples.append(sample)
    return picked, samples


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------

class RunLog:
    """Per-step loss records plus periodic validation snapshots, CSV-backed."""

    def __init__(self, out_dir: str, components: list[str]):
        self.out_dir = out_dir
        self.components = components
        self.step_rows: list[dict] = []
        self.val_rows: list[dict] = []
        self.started = time.time()

    def log_step(self, step: int, lr: float, total: float, components: dict):
        row = {"step": step, "lr": lr, "total": total}
        row.update({k: components.get(k, 0.0) for k in self.components})
        self.step_rows.append(row)

    def log_val(self, step: int, result: EvalResult | float):
        if isinstance(result, EvalResult):
            row = {"step": step, "rmse_mm": result.rmse_mm, "mae_mm": result.mae_mm,
                   "irmse_per_km": result.irmse_per_km, "imae_per_km": result.imae_per_km,
                   "absrel": result.absrel}
        else:
            row = {"step": step, "recon_energy": result}
        self.val_rows.append(row)

    def flush(self):
        os.makedirs(self.out_dir, exist_ok=True)
        if self.step_rows:
            keys = list(self.step_rows[0].keys())
            with open(os.path.join(self.out_dir, "train_log.csv"), "w", encoding="utf-8") as f:
                f.write(",".join(keys) + "\n")
                for row in self.step_rows:
                    f.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys) + "\n")
        if self.val_rows:
            keys = list(self.val_rows[0].keys())
            with open(os.path.join(self.out_dir, "val_log.csv"), "w", encoding="utf-8") as f:
                f.write(",".join(keys) + "\n")
                for row in self.val_rows:
                    f.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys) + "\n")
        # wall-clock lives outside the CSVs so (config, seed) reproduces them exactly
        with open(os.path.join(self.out_dir, "run_summary.txt"), "w", encoding="utf-8") as f:
            f.write(f"steps {len(self.step_rows)}\n")
            f.write(f"wall_clock_s {time.time() - self.started:.3f}\n")


@dataclass
class TrainResult:
    checkpoint_path: str
    log: RunLog
    best_val: float
    final_val: float
    initial_train_loss: float
    final_train_loss: float


# ---------------------------------------------------------------------------
# Validation passes
# ---------------------------------------------------------------------------

def _cpn_val_energy(model: CpnModel, scenes: list[Scene]) -> float:
    dt = _model_dtype(model)
    total = 0.0
    with no_grad():
        for s in scenes:
            d = Tensor(s.depth[None].astype(dt))
            im = Tensor(s.image[None].astype(dt))
            recon = cpn_forward(model, d, im)
            total += power_penalty(sub(recon, d), model.eta).item()
    return total / len(scenes)


def _dcn_val_rmse(model: DcnModel, scenes: list[Scene], density: float, run_seed: int) -> EvalResult:
    dt = _model_dtype(model)
    results = []
    with no_grad():
        for i, s in enumerate(scenes):
            sp = sample_sparse(s, density, seed=_scene_seed(run_seed, 424243 + i))
            z_map = np.zeros_like(s.depth)
            z_map[0, sp.omega[:, 0], sp.omega[:, 1]] = sp.z
            pred = dcn_forward(model, Tensor(z_map[None].astype(dt)), Tensor(s.image[None].astype(dt)))
            results.append(compute_metrics(pred.data[0], s.depth, np.ones_like(s.depth)))
    return aggregate(results)


# ---------------------------------------------------------------------------
# Training commands
# ---------------------------------------------------------------------------

def train_cpn(cfg: RunConfig, resume_from: Optional[str] = None) -> TrainResult:
    """Pretrain the prior by minimizing reconstruction energy on dense depth."""
    if cfg.mode != "cpn":
        raise ValueError(f"train_cpn: config mode is {cfg.mode!r}, expected 'cpn'")
    preset = cfg.model_preset()
    train_scenes, val_scenes = build_scene_pools(cfg)

    start_step = 0
    if resume_from is not None:
        model, extra = load_checkpoint(resume_from)
        if model.kind != "cpn":
            raise ValueError(f"train_cpn: checkpoint {resume_from} holds a {model.kind} model")
        start_step = int(extra.get("step", 0))
    else:
        d_spec, i_spec = cpn_specs(preset)
        model = build_cpn(d_spec, i_spec, eta=cfg.norms.eta, seed=cfg.seed,
                          max_depth=cfg.max_depth, dtype=np.dtype(cfg.dtype))

    opt = Adam(model.parameters(), lr=cfg.lr0)
    log = RunLog(cfg.out_dir, components=["recon"])
    rng = np.random.default_rng(np.random.SeedSequence([0x7A1, cfg.seed]))
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = os.path.join(cfg.out_dir, "cpn.ckpt")

    best = _cpn_val_energy(model, val_scenes)
    save_checkpoint(ckpt_path, model, extra={"step": start_step, "val_energy": best})
    initial_loss = None
    final_loss = None

    for step in range(start_step, cfg.total_steps):
        scenes, _ = _augmented_batch(cfg, train_scenes, step, rng, with_sparse=False)
        images, depths, _, _, _ = _stack_batch(scenes, None, dtype=np.dtype(cfg.dtype))
        d_t = Tensor(depths)
        i_t = Tensor(images)
        recon = cpn_forward(model, d_t, i_t)
        loss = mul(power_penalty(sub(recon, d_t), model.eta), 1.0 / cfg.batch)
        loss.backward()
        opt.lr = halved_lr(step, cfg.lr0, cfg.half_every)
        opt.step()

        value = loss.item()
        if initial_loss is None:
            initial_loss = value
        final_loss = value
        log.log_step(step, opt.lr, value, {"recon": value})

        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.total_steps:
            energy = _cpn_val_energy(model, val_scenes)
            log.log_val(step + 1, energy)
            if energy < best:
                best = energy
                save_checkpoint(ckpt_path, model, extra={"step": step + 1, "val_energy": energy})

    final = _cpn_val_energy(model, val_scenes)
    log.flush()
    return TrainResult(ckpt_path, log, best, final,
                       initial_loss if initial_loss is not None else best,
                       final_loss if final_loss is not None else best)


def _stereo_sign_check(scenes: list[Scene]):
    signs = {s.stereo_sign for s in scenes}
    if len(signs) > 1:
        raise ValueError("stereo batch mixes warp directions; disable horizontal flips")
    return signs.pop()


def train_dcn(cfg: RunConfig, cpn_checkpoint: Optional[str] = None,
              resume_from: Optional[str] = None) -> TrainResult:
    """Train the completion network in supervised, unsupervised, or stereo mode."""
    if cfg.mode not in ("supervised", "unsupervised", "stereo"):
        raise ValueError(f"train_dcn: config mode is {cfg.mode!r}")
    cpn = None
    cpn_bytes = None
    if cfg.mode in ("unsupervised", "stereo"):
        if cpn_checkpoint is None:
            raise ValueError(f"train_dcn: {cfg.mode} mode requires a prior checkpoint")
        cpn, _ = load_checkpoint(cpn_checkpoint)
        if cpn.kind != "cpn":
            raise ValueError(f"train_dcn: {cpn_checkpoint} does not hold a prior network")
        cpn.freeze()
        cpn_bytes = cpn.param_bytes()

    preset = cfg.model_preset()
    train_scenes, val_scenes = build_scene_pools(cfg)
    if cfg.mode == "stereo" and any(s.stereo_image is None for s in train_scenes):
        raise ValueError("train_dcn: stereo mode requires scenes with a stereo mate")

    start_step = 0
    if resume_from is not None:
        model, extra = load_checkpoint(resume_from)
        if model.kind != "dcn":
            raise ValueError(f"train_dcn: checkpoint {resume_from} holds a {model.kind} model")
        start_step = int(extra.get("step", 0))
    else:
        variant = cfg.unsupervised_variant
        if variant is None:
            variant = cfg.mode in ("unsupervised", "stereo")
        d_spec, i_spec = dcn_specs(preset)
        model = build_dcn(d_spec, i_spec, unsupervised_variant=variant, seed=cfg.seed,
                          max_depth=cfg.max_depth, dtype=np.dtype(cfg.dtype))

    opt = Adam(model.parameters(), lr=cfg.lr0)
    components = ["fidelity", "prior", "psi_c", "psi_s"]
    log = RunLog(cfg.out_dir, components=components)
    rng = np.random.default_rng(np.random.SeedSequence([0x7A2, cfg.seed]))
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = os.path.join(cfg.out_dir, "dcn.ckpt")

    best_res = _dcn_val_rmse(model, val_scenes, cfg.density, cfg.seed)
    best = best_res.rmse_mm
    save_checkpoint(ckpt_path, model, extra={"step": start_step, "val_rmse_mm": best})
    initial_loss = None
    final_loss = None

    for step in range(start_step, cfg.total_steps):
        scenes, samples = _augmented_batch(cfg, train_scenes, step, rng, with_sparse=True)
        images, depths, stereo, z_maps, validity = _stack_batch(scenes, samples, dtype=np.dtype(cfg.dtype))
        i_t = Tensor(images)
        comp: dict = {}

        if cfg.mode == "supervised":
            pred = dcn_forward(model, Tensor(z_maps), i_t)
            loss = mul(supervised_loss(pred, Tensor(depths), np.ones_like(depths)), 1.0 / cfg.batch)
            comp["fidelity"] = loss.item()
            total_val = loss.item()
        else:
            pred = dcn_forward(model, Tensor(z_maps), i_t)
            fid = map_fidelity(pred, z_maps, validity, cfg.norms.gamma)
            loss = fid
            comp["fidelity"] = fid.item() / cfg.batch
            if cfg.weights.alpha > 0:
                pri = prior_energy(pred, i_t, cpn, cfg.norms.eta)
                loss = loss + mul(pri, cfg.weights.alpha)
                comp["prior"] = pri.item() / cfg.batch
            if cfg.mode == "stereo":
                sign = _stereo_sign_check(scenes)
                rig = scenes[0].rig
                st_t = Tensor(stereo)
                if cfg.weights.beta_c > 0:
                    psi_c = photometric_raw(i_t, st_t, pred, rig, sign=sign)
                    loss = loss + mul(psi_c, cfg.weights.beta_c)
                    comp["psi_c"] = psi_c.item() / cfg.batch
                if cfg.weights.beta_s > 0:
                    psi_s = photometric_ssim(i_t, st_t, pred, rig, sign=sign)
                    loss = loss + mul(psi_s, cfg.weights.beta_s)
                    comp["psi_s"] = psi_s.item() / cfg.batch
            loss = mul(loss, 1.0 / cfg.batch)
            total_val = loss.item()

        loss.backward()
        opt.lr = halved_lr(step, cfg.lr0, cfg.half_every)
        opt.step()

        if initial_loss is None:
            initial_loss = total_val
        final_loss = total_val
        log.log_step(step, opt.lr, total_val, comp)

        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.total_steps:
            res = _dcn_val_rmse(model, val_scenes, cfg.density, cfg.seed)
            log.log_val(step + 1, res)
            if res.rmse_mm < best:
                best = res.rmse_mm
                save_checkpoint(ckpt_path, model, extra={"step": step + 1, "val_rmse_mm": best})

    final_res = _dcn_val_rmse(model, val_scenes, cfg.density, cfg.seed)
    log.flush()
    if cpn is not None and cpn.param_bytes() != cpn_bytes:
        raise RuntimeError("train_dcn: frozen prior parameters changed during training")
    return TrainResult(ckpt_path, log, best, final_res.rmse_mm,
                       initial_loss if initial_loss is not None else 0.0,
                       final_loss if final_loss is not None else 0.0)


# ---------------------------------------------------------------------------
# Baseline
# ---------------------------------------------------------------------------

def nearest_valid_interpolation(z_map: np.ndarray, validity: np.ndarray) -> np.ndarray:
    """Fill every pixel with the value of its nearest valid sparse point."""
    z = np.asarray(z_map)
    v = np.asarray(validity)
    squeeze = z.ndim == 3
    if squeeze:
        z, v = z[0], v[0]
    if v.sum() < 1:
        raise ValueError("nearest_valid_interpolation: no valid points")
    _, (ir, ic) = ndimage.distance_transform_edt(v == 0, return_indices=True)
    filled = z[ir, ic]
    return filled[None] if squeeze else filled


# ---------------------------------------------------------------------------
# Evaluation over manifests
# ---------------------------------------------------------------------------

def evaluate_checkpoint(checkpoint: str, manifest_path: str, density: float,
                        out_csv: Optional[str] = None, seed: int = 0,
                        per_pixel: bool = False):
    """Deterministic metrics over a manifest; returns (per-image results, aggregate)."""
    entries = data_mod.dataset_manifest(manifest_path)
    if not entries:
        raise ValueError(f"evaluate_checkpoint: manifest {manifest_path} lists no samples")
    model, _ = load_checkpoint(checkpoint)
    if model.kind != "dcn":
        raise ValueError(f"evaluate_checkpoint: {checkpoint} does not hold a completion model")

    dt = _model_dtype(model)
    results = []
    with no_grad():
        for i, entry in enumerate(entries):
            image = data_mod.read_image_png(entry.image_path)
            gt, gt_validity = data_mod.read_depth_png(entry.depth_path)
            z_map, validity = _sample_from_gt(gt, gt_validity, density, _scene_seed(seed, 31 + i))
            pred = dcn_forward(model, Tensor(z_map[None].astype(dt)), Tensor(image[None].astype(dt)))
            results.append(compute_metrics(pred.data[0], gt, gt_validity))
    agg = aggregate(results, per_pixel=per_pixel)

    if out_csv is not None:
        lines = ["index," + EvalResult.csv_header()]
        for i, r in enumerate(results):
            lines.append(f"{i}," + ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r.as_row()))
        lines.append("mean," + ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in agg.as_row()))
        os.makedirs(os.path.dirname(os.path.abspath(out_csv)), exist_ok=True)
        with open(out_csv, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    return results, agg


def _sample_from_gt(gt: np.ndarray, gt_validity: np.ndarray, density: float, seed: int):
    """Draw the sparse input from annotated ground-truth pixels."""
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must be in (0, 1], got {density}")
    _, h, w = gt.shape
    k = int(np.floor(density * h * w + 0.5))
    if k < 1:
        raise ValueError(f"density {density} yields zero points on a {h}x{w} lattice")
    valid_flat = np.flatnonzero(gt_validity[0] > 0)
    if valid_flat.size < k:
        k = valid_flat.size
    if k < 1:
        raise ValueError("no annotated pixels to sample from")
    rng = np.random.default_rng(np.random.SeedSequence([0x5A3, seed]))
    chosen = rng.choice(valid_flat, size=k, replace=False)
    rows, cols = np.unravel_index(chosen, (h, w))
    z_map = np.zeros((1, h, w))
    validity = np.zeros((1, h, w))
    z_map[0, rows, cols] = gt[0, rows, cols]
    validity[0, rows, cols] = 1.0
    return z_map, validity


# ---------------------------------------------------------------------------
# Norm/weight ablation
# ---------------------------------------------------------------------------

def ablate(base_cfg: RunConfig, norm_pairs: list[tuple[int, int]], alphas: list[float],
           out_csv: Optional[str] = None, cpn_steps: int = 300):
    """Train one short unsupervised run per (gamma, eta, alpha) grid point.

    Emits (gamma, eta, alpha, val_rmse_mm) rows; a prior is trained once per
    eta, since the prior's own objective depends on it.
    """
    if not norm_pairs or not alphas:
        raise ValueError("ablate: empty grid")
    cpn_by_eta: dict[int, str] = {}
    for eta in sorted({eta for _, eta in norm_pairs}):
        ccfg = replace(base_cfg, mode="cpn", norms=NormSpec(gamma=1, eta=eta),
                       total_steps=cpn_steps, out_dir=os.path.join(base_cfg.out_dir, f"cpn_eta{eta}"))
        cpn_by_eta[eta] = train_cpn(ccfg).checkpoint_path

    rows = []
    for gamma, eta in norm_pairs:
        for alpha in alphas:
            run = replace(
                base_cfg, mode="unsupervised",
                norms=NormSpec(gamma=gamma, eta=eta),
                weights=replace(base_cfg.weights, alpha=alpha),
                out_dir=os.path.join(base_cfg.out_dir, f"g{gamma}_e{eta}_a{alpha}"),
            )
            result = train_dcn(run, cpn_checkpoint=cpn_by_eta[eta])
            rows.append((gamma, eta, alpha, result.final_val))

    if out_csv is not None:
        os.makedirs(os.path.dirname(os.path.abspath(out_csv)), exist_ok=True)
        with open(out_csv, "w", encoding="utf-8") as f:
            f.write("gamma,eta,alpha,val_rmse_mm\n")
            for g, e, a, r in rows:
                f.write(f"{g},{e},{a!r},{r!r}\n")
    return rows


# ---------------------------------------------------------------------------
# Prediction export
# ---------------------------------------------------------------------------

_ERROR_ANCHORS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_ERROR_COLORS = np.array([
    [0, 0, 130],
    [0, 60, 255],
    [20, 255, 120],
    [255, 230, 0],
    [255, 0, 0],
], dtype=np.float64)


def error_colormap(err: np.ndarray) -> np.ndarray:
    """Map normalized error in [0, 1] to RGB; warmer means larger error."""
    e = np.clip(np.asarray(err, dtype=np.float64), 0.0, 1.0)
    chans = [np.interp(e, _ERROR_ANCHORS, _ERROR_COLORS[:, c]) for c in range(3)]
    return np.stack(chans) / 255.0


def predict(checkpoint: str, image_path: str, sparse_path: str, out_dir: str,
            gt_path: Optional[str] = None, cpn_checkpoint: Optional[str] = None,
            norms: Optional[NormSpec] = None, alpha: float = 0.045):
    """Run the completion model on files and export depth, error map, and score."""
    model, _ = load_checkpoint(checkpoint)
    if model.kind != "dcn":
        raise ValueError(f"predict: {checkpoint} does not hold a completion model")
    image = data_mod.read_image_png(image_path)
    z_map, validity = data_mod.read_depth_png(sparse_path)
    if image.shape[1:] != z_map.shape[1:]:
        raise ValueError(f"predict: image {image.shape} and sparse depth {z_map.shape} disagree")

    os.makedirs(out_dir, exist_ok=True)
    dt = _model_dtype(model)
    with no_grad():
        pred = dcn_forward(model, Tensor((z_map * validity)[None].astype(dt)),
                           Tensor(image[None].astype(dt)))
    pred_map = pred.data[0]
    depth_out = os.path.join(out_dir, "pred_depth.png")
    data_mod.write_depth_png(depth_out, np.minimum(pred_map, 255.99), np.ones_like(pred_map))

    error_out = None
    if gt_path is not None:
        gt, gt_validity = data_mod.read_depth_png(gt_path)
        # error of the exported (quantized) prediction, so a ground truth equal
        # to the written file is exactly zero everywhere
        exported = data_mod.quantize_depth(np.minimum(pred_map, 255.99))
        err = np.abs(exported[0] - gt[0]) * gt_validity[0]
        peak = err.max()
        norm = err / peak if peak > 0 else err
        error_out = os.path.join(out_dir, "error_map.png")
        data_mod.write_image_png(error_out, error_colormap(norm))

    score = None
    if cpn_checkpoint is not None:
        cpn, _ = load_checkpoint(cpn_checkpoint)
        if cpn.kind != "cpn":
            raise ValueError(f"predict: {cpn_checkpoint} does not hold a prior network")
        cpn.freeze()
        cdt = _model_dtype(cpn)
        rows, cols = np.nonzero(validity[0])
        z = z_map[0, rows, cols]
        omega = np.stack([rows, cols], axis=1)
        ns = norms if norms is not None else NormSpec()
        with no_grad():
            cand = Tensor(pred.data.astype(cdt))
            score = posterior_score(cand, z, omega, Tensor(image[None].astype(cdt)), cpn, ns, alpha).item()
    return {"depth_png": depth_out, "error_png": error_out, "posterior_score": score,
            "pred": pred_map}
