"""Synthetic driving-style scenes with exact ground truth, plus file I/O.

Scenes are piecewise-planar worlds (textured ground, boxes, cylinders, and a
far wall) rendered by per-pixel ray casting. The stereo mate is rendered
from a camera shifted along -x, so a world point seen at column u in the
primary image appears at u + F*B/Z in the mate: the photometric identity
holds by construction everywhere except at occlusions.

Textures are smooth world-anchored sinusoids whose frequency scales with
1/depth, keeping the on-screen frequency low enough for clean bilinear
resampling while staying non-constant on every surface.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .geometry import StereoRig


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 192
    d_min: float = 1.0
    d_max: float = 80.0
    focal_px: float = 96.0
    baseline_m: float = 0.3
    camera_height_m: float = 1.5
    n_objects_min: int = 2
    n_objects_max: int = 6
    texture_amp: float = 0.22
    make_stereo: bool = True

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ValueError(f"SceneConfig: degenerate extent {self.height}x{self.width}")
        if not (0 < self.d_min < self.d_max):
            raise ValueError(f"SceneConfig: need 0 < d_min < d_max, got ({self.d_min}, {self.d_max})")
        if self.n_objects_min > self.n_objects_max or self.n_objects_min < 0:
            raise ValueError("SceneConfig: bad object count range")

    @property
    def background_z(self) -> float:
        return 0.95 * self.d_max

    def rig(self) -> StereoRig:
        return StereoRig(focal_px=self.focal_px, baseline_m=self.baseline_m)


@dataclass
class Scene:
    image: np.ndarray                       # (3, H, W) in [0, 1]
    depth: np.ndarray                       # (1, H, W) meters, strictly positive
    stereo_image: Optional[np.ndarray]      # (3, H, W) or None
    rig: Optional[StereoRig]
    seed: int
    stereo_sign: int = 1                    # warp direction for I(x) == I'(x + sign*s)
    nonoccluded: Optional[np.ndarray] = None  # (1, H, W) generator-side mask, tests only


@dataclass
class SparseSample:
    z: np.ndarray          # (K,)
    omega: np.ndarray      # (K, 2) (row, col)
    validity: np.ndarray   # (1, H, W) 0/1
    density: float


@dataclass
class AugmentationConfig:
    crop: Optional[tuple[int, int]] = None  # (h, w); None keeps full size
    flip_h: float = 0.0
    flip_v: float = 0.0
    hist_eq: bool = False
    sparse_shift: bool = False

    def __post_init__(self):
        for p in (self.flip_h, self.flip_v):
            if not 0.0 <= p <= 1.0:
                raise ValueError("AugmentationConfig: flip probabilities must be in [0, 1]")


# ---------------------------------------------------------------------------
# Ray-cast rendering
# ---------------------------------------------------------------------------

def _texture(points: np.ndarray, spec: dict, amp: float) -> np.ndarray:
    """Smooth RGB albedo field over world positions; points is (3, N)."""
    base = spec["base"][:, None]
    k1, k2 = spec["k1"], spec["k2"]
    ph1, ph2 = spec["ph1"], spec["ph2"]
    u = k1 @ points
    v = k2 @ points
    pattern = np.sin(u + ph1) + 0.6 * np.sin(v + ph2)
    color = base + amp * spec["amp_dir"][:, None] * pattern[None, :]
    return np.clip(color, 0.05, 0.95)


def _ground_texture(points: np.ndarray, spec: dict, amp: float) -> np.ndarray:
    x, z = points[0], points[2]
    pattern = np.sin(spec["kx"] * x + spec["ph1"]) + 0.8 * np.sin(spec["kz"] * np.log(np.maximum(z, 0.5)) + spec["ph2"])
    color = spec["base"][:, None] + amp * spec["amp_dir"][:, None] * pattern[None, :]
    return np.clip(color, 0.05, 0.95)


def _make_objects(rng: np.random.Generator, cfg: SceneConfig) -> list[dict]:
    objs = []
    n = int(rng.integers(cfg.n_objects_min, cfg.n_objects_max + 1))
    zbg = cfg.background_z
    for _ in range(n):
        kind = "box" if rng.random() < 0.6 else "cylinder"
        z_c = float(rng.uniform(max(cfg.d_min * 1.5, 4.0), 0.7 * zbg))
        half_fov_x = 0.5 * cfg.width / cfg.focal_px
        x_c = float(rng.uniform(-0.8, 0.8)) * half_fov_x * z_c
        ang_w = float(rng.uniform(14, 55))   # apparent width in pixels
        ang_h = float(rng.uniform(18, 60))
        w_m = ang_w * z_c / cfg.focal_px
        h_m = ang_h * z_c / cfg.focal_px
        h_m = min(h_m, 12.0)
        depth_m = float(rng.uniform(0.5, 3.0))
        # texture frequency scaled by 1/depth keeps on-screen frequency flat
        freq = rng.uniform(8.0, 22.0, size=2) / z_c
        obj = {
            "kind": kind,
            "x0": x_c - 0.5 * w_m, "x1": x_c + 0.5 * w_m,
            "z0": z_c - 0.5 * depth_m, "z1": z_c + 0.5 * depth_m,
            "y0": cfg.camera_height_m - h_m, "y1": cfg.camera_height_m,
            "xc": x_c, "zc": z_c, "radius": 0.5 * w_m,
            "tex": {
                "base": rng.uniform(0.3, 0.7, size=3),
                "amp_dir": rng.uniform(0.5, 1.0, size=3) * rng.choice([-1.0, 1.0], size=3),
                "k1": rng.normal(size=3) * freq[0],
                "k2": rng.normal(size=3) * freq[1],
                "ph1": float(rng.uniform(0, 2 * np.pi)),
                "ph2": float(rng.uniform(0, 2 * np.pi)),
            },
            "shade": float(rng.uniform(0.75, 1.0)),
        }
        objs.append(obj)
    return objs


def _ray_grid(cfg: SceneConfig):
    h, w = cfg.height, cfg.width
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = (us - cx) / cfg.focal_px
    dy = (vs - cy) / cfg.focal_px
    return dx.ravel(), dy.ravel()


def _raycast(cfg: SceneConfig, objects: list[dict], ground_tex: dict, wall_tex: dict,
             cam_x: float, amp: float):
    """Render depth (z of nearest hit) and RGB image from a camera at (cam_x, 0, 0)."""
    dx, dy = _ray_grid(cfg)
    n_px = dx.size
    big = np.inf

    # background wall, z = background_z (dz == 1 so t == z)
    best_t = np.full(n_px, cfg.background_z)
    surf_id = np.zeros(n_px, dtype=np.int64)  # 0 wall, 1 ground, 2+i objects

    # ground plane y = camera_height
    with np.errstate(divide="ignore"):
        t_g = np.where(dy > 1e-9, cfg.camera_height_m / np.where(dy > 1e-9, dy, 1.0), big)
    hit = t_g < best_t
    best_t = np.where(hit, t_g, best_t)
    surf_id = np.where(hit, 1, surf_id)

    for i, o in enumerate(objects):
        if o["kind"] == "box":
            t = _box_enter_t(o, cam_x, dx, dy)
        else:
            t = _cylinder_enter_t(o, cam_x, dx, dy)
        hit = t < best_t
        best_t = np.where(hit, t, best_t)
        surf_id = np.where(hit, 2 + i, surf_id)

    depth = best_t  # dz == 1: ray parameter equals z depth
    px = cam_x + best_t * dx
    py = best_t * dy
    pz = best_t
    points = np.stack([px, py, pz])

    img = np.empty((3, n_px))
    sel = surf_id == 0
    if sel.any():
        img[:, sel] = _texture(points[:, sel], wall_tex, amp) * 0.9
    sel = surf_id == 1
    if sel.any():
        img[:, sel] = _ground_texture(points[:, sel], ground_tex, amp)
    for i, o in enumerate(objects):
        sel = surf_id == 2 + i
        if sel.any():
            img[:, sel] = _texture(points[:, sel], o["tex"], amp) * o["shade"]

    h, w = cfg.height, cfg.width
    return img.reshape(3, h, w), depth.reshape(1, h, w)


def _box_enter_t(o: dict, cam_x: float, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    big = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        tx0 = (o["x0"] - cam_x) / dx
        tx1 = (o["x1"] - cam_x) / dx
        txmin = np.minimum(tx0, tx1)
        txmax = np.maximum(tx0, tx1)
        flat = np.abs(dx) < 1e-12
        inside_x = (cam_x >= o["x0"]) & (cam_x <= o["x1"])
        txmin = np.where(flat, np.where(inside_x, -big, big), txmin)
        txmax = np.where(flat, np.where(inside_x, big, -big), txmax)

        ty0 = o["y0"] / dy
        ty1 = o["y1"] / dy
        tymin = np.minimum(ty0, ty1)
        tymax = np.maximum(ty0, ty1)
        flat = np.abs(dy) < 1e-12
        inside_y = (0.0 >= o["y0"]) & (0.0 <= o["y1"])
        tymin = np.where(flat, np.where(inside_y, -big, big), tymin)
        tymax = np.where(flat, np.where(inside_y, big, -big), tymax)

    tz0, tz1 = o["z0"], o["z1"]  # dz == 1
    t_enter = np.maximum(np.maximum(txmin, tymin), tz0)
    t_exit = np.minimum(np.minimum(txmax, tymax), tz1)
    ok = (t_enter <= t_exit) & (t_enter > 0.05)
    return np.where(ok, t_enter, big)


def _cylinder_enter_t(o: dict, cam_x: float, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Vertical cylinder around (xc, zc) with the box's y-extent."""
    big = np.inf
    ox = cam_x - o["xc"]
    oz = -o["zc"]
    a = dx * dx + 1.0
    b = 2.0 * (ox * dx + oz)
    c = ox * ox + oz * oz - o["radius"] ** 2
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        t = (-b - sq) / (2 * a)
    y_hit = t * dy
    ok = (disc > 0) & (t > 0.05) & (y_hit >= o["y0"]) & (y_hit <= o["y1"])
    return np.where(ok, t, big)


def generate_scene(seed: int, config: Optional[SceneConfig] = None) -> Scene:
    """Deterministic textured world with exact depth and an optional stereo mate."""
    cfg = config if config is not None else SceneConfig()
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE4E, seed]))
    objects = _make_objects(rng, cfg)
    ground_tex = {
        "base": rng.uniform(0.35, 0.6, size=3),
        "amp_dir": rng.uniform(0.5, 1.0, size=3) * rng.choice([-1.0, 1.0], size=3),
        "kx": float(rng.uniform(0.25, 0.6)),
        "kz": float(rng.uniform(0.6, 1.2)),
        "ph1": float(rng.uniform(0, 2 * np.pi)),
        "ph2": float(rng.uniform(0, 2 * np.pi)),
    }
    wall_freq = rng.uniform(8.0, 18.0, size=2) / cfg.background_z
    wall_tex = {
        "base": rng.uniform(0.35, 0.65, size=3),
        "amp_dir": rng.uniform(0.5, 1.0, size=3) * rng.choice([-1.0, 1.0], size=3),
        "k1": rng.normal(size=3) * wall_freq[0],
        "k2": rng.normal(size=3) * wall_freq[1],
        "ph1": float(rng.uniform(0, 2 * np.pi)),
        "ph2": float(rng.uniform(0, 2 * np.pi)),
    }

    image, depth = _raycast(cfg, objects, ground_tex, wall_tex, cam_x=0.0, amp=cfg.texture_amp)
    stereo_image = None
    nonocc = None
    rig = None
    if cfg.make_stereo:
        rig = cfg.rig()
        stereo_image, stereo_depth = _raycast(cfg, objects, ground_tex, wall_tex,
                                              cam_x=-cfg.baseline_m, amp=cfg.texture_amp)
        nonocc = _nonoccluded_mask(depth, stereo_depth, rig)

    return Scene(image=image, depth=depth, stereo_image=stereo_image, rig=rig,
                 seed=seed, stereo_sign=1, nonoccluded=nonocc)


def _nonoccluded_mask(depth: np.ndarray, mate_depth: np.ndarray, rig: StereoRig) -> np.ndarray:
    """Pixels whose warp target lands on the same surface in the mate view.

    Both neighboring mate columns must agree with the primary depth, which
    also prunes pixels whose bilinear sample straddles a depth edge.
    """
    _, h, w = depth.shape
    z = depth[0]
    s = rig.focal_px * rig.baseline_m / z
    coords = np.arange(w)[None, :] + s
    inb = coords <= w - 1
    u0 = np.clip(np.floor(coords), 0, w - 2).astype(np.int64)
    rows = np.arange(h)[:, None]
    md = mate_depth[0]
    tol = np.maximum(0.02 * z, 0.1)
    agree = (np.abs(md[rows, u0] - z) < tol) & (np.abs(md[rows, u0 + 1] - z) < tol)
    return (inb & agree).astype(np.float64)[None]


# ---------------------------------------------------------------------------
# Sparse sampling and augmentation
# ---------------------------------------------------------------------------

def sample_sparse(scene: Scene, density: float, seed: int) -> SparseSample:
    """K = round(density * H * W) lattice points drawn uniformly without replacement."""
    if not 0.0 < density <= 1.0:
        raise ValueError(f"sample_sparse: density must be in (0, 1], got {density}")
    _, h, w = scene.depth.shape
    k = int(np.floor(density * h * w + 0.5))
    if k < 1:
        raise ValueError(f"sample_sparse: density {density} yields zero points on a {h}x{w} lattice")
    rng = np.random.default_rng(np.random.SeedSequence([0x5A3, seed]))
    flat = rng.choice(h * w, size=k, replace=False)
    rows, cols = np.unravel_index(flat, (h, w))
    omega = np.stack([rows, cols], axis=1).astype(np.int64)
    z = scene.depth[0, rows, cols].copy()
    validity = np.zeros((1, h, w))
    validity[0, rows, cols] = 1.0
    return SparseSample(z=z, omega=omega, validity=validity, density=density)


def _luminance(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]


def _hist_eq_lut(y: np.ndarray, bins: int = 256):
    hist, edges = np.histogram(y, bins=bins, range=(0.0, 1.0))
    cdf = np.cumsum(hist).astype(np.float64)
    if cdf[-1] == 0:
        return lambda v: v
    cdf /= cdf[-1]

    def apply(v):
        idx = np.clip((v * bins).astype(np.int64), 0, bins - 1)
        return cdf[idx]

    return apply


def _equalize(img: np.ndarray, lut) -> np.ndarray:
    y = _luminance(img)
    y_eq = lut(y)
    ratio = (y_eq + 1e-6) / (y + 1e-6)
    return np.clip(img * ratio[None], 0.0, 1.0)


def augment(scene: Scene, sample: Optional[SparseSample], cfg: AugmentationConfig, seed: int):
    """Identical crop/flip on all aligned maps; jitter and equalization as configured.

    Returns a new (scene, sample); the inputs are never mutated. A missing
    sample is passed through as None.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0xA6, seed]))
    _, h, w = scene.depth.shape

    image = scene.image.copy()
    depth = scene.depth.copy()
    stereo = None if scene.stereo_image is None else scene.stereo_image.copy()
    nonocc = None if scene.nonoccluded is None else scene.nonoccluded.copy()
    sign = scene.stereo_sign
    omega = sample.omega.copy() if sample is not None else np.zeros((0, 2), dtype=np.int64)
    z = sample.z.copy() if sample is not None else np.zeros(0)

    if cfg.crop is not None:
        ch, cw = cfg.crop
        if ch > h or cw > w:
            raise ValueError(f"augment: crop {cfg.crop} larger than scene {h}x{w}")
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        image = image[:, top : top + ch, left : left + cw]
        depth = depth[:, top : top + ch, left : left + cw]
        if stereo is not None:
            stereo = stereo[:, top : top + ch, left : left + cw]
        if nonocc is not None:
            nonocc = nonocc[:, top : top + ch, left : left + cw]
        keep = ((omega[:, 0] >= top) & (omega[:, 0] < top + ch)
                & (omega[:, 1] >= left) & (omega[:, 1] < left + cw))
        omega = omega[keep] - np.array([top, left])
        z = z[keep]
        h, w = ch, cw

    if cfg.flip_h > 0 and rng.random() < cfg.flip_h:
        image = image[:, :, ::-1].copy()
        depth = depth[:, :, ::-1].copy()
        if stereo is not None:
            stereo = stereo[:, :, ::-1].copy()
            sign = -sign
        if nonocc is not None:
            nonocc = nonocc[:, :, ::-1].copy()
        omega = omega.copy()
        omega[:, 1] = w - 1 - omega[:, 1]

    if cfg.flip_v > 0 and rng.random() < cfg.flip_v:
        image = image[:, ::-1, :].copy()
        depth = depth[:, ::-1, :].copy()
        if stereo is not None:
            stereo = stereo[:, ::-1, :].copy()
        if nonocc is not None:
            nonocc = nonocc[:, ::-1, :].copy()
        omega = omega.copy()
        omega[:, 0] = h - 1 - omega[:, 0]

    if cfg.hist_eq:
        lut = _hist_eq_lut(_luminance(image))
        image = _equalize(image, lut)
        if stereo is not None:
            stereo = _equalize(stereo, lut)

    if cfg.sparse_shift and omega.shape[0] > 0:
        offsets = rng.integers(-1, 2, size=omega.shape)
        shifted = omega + offsets
        keep = ((shifted[:, 0] >= 0) & (shifted[:, 0] < h)
                & (shifted[:, 1] >= 0) & (shifted[:, 1] < w))
        shifted = shifted[keep]
        zs = z[keep]
        # collisions keep the larger depth
        order = np.argsort(zs, kind="stable")
        shifted = shifted[order]
        zs = zs[order]
        zmap = np.zeros((h, w))
        zmap[shifted[:, 0], shifted[:, 1]] = zs
        rows, cols = np.nonzero(zmap)
        omega = np.stack([rows, cols], axis=1).astype(np.int64)
        z = zmap[rows, cols]

    new_scene = Scene(image=image, depth=depth, stereo_image=stereo, rig=scene.rig,
                      seed=scene.seed, stereo_sign=sign, nonoccluded=nonocc)
    if sample is None:
        return new_scene, None
    validity = np.zeros((1, h, w))
    if omega.shape[0] > 0:
        validity[0, omega[:, 0], omega[:, 1]] = 1.0
    new_sample = SparseSample(z=z, omega=omega, validity=validity,
                              density=float(omega.shape[0]) / (h * w))
    return new_scene, new_sample


# ---------------------------------------------------------------------------
# File I/O: 16-bit depth PNG, 8-bit images, manifests
# ---------------------------------------------------------------------------

def write_depth_png(path: str, depth: np.ndarray, validity: np.ndarray):
    """KITTI-style encoding: uint16 = round(depth_m * 256), 0 marks invalid."""
    d = np.asarray(depth)
    v = np.asarray(validity)
    if d.ndim == 3:
        d = d[0]
    if v.ndim == 3:
        v = v[0]
    if d.shape != v.shape:
        raise ValueError(f"write_depth_png: depth {d.shape} and validity {v.shape} differ")
    if np.any(d[v > 0] >= 256.0):
        raise ValueError("write_depth_png: depth of 256 m or more cannot be encoded in 16 bits")
    if np.any(d[v > 0] < 0):
        raise ValueError("write_depth_png: negative depth")
    stored = np.floor(d * 256.0 + 0.5)
    stored = np.where(v > 0, stored, 0.0)
    if np.any((stored == 0) & (v > 0)):
        raise ValueError("write_depth_png: valid depth too small to encode (rounds to 0)")
    arr = stored.astype("<u2")
    img = Image.fromarray(arr)  # uint16 maps to 16-bit grayscale
    tmp = path + ".tmp"
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_depth_png(path: str):
    """Inverse of write_depth_png: returns (depth (1,H,W), validity (1,H,W))."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"depth png not found: {path}")
    img = Image.open(path)
    if img.mode not in ("I;16", "I", "I;16B"):
        raise ValueError(f"malformed depth png {path}: mode {img.mode}, expected 16-bit grayscale")
    arr = np.asarray(img, dtype=np.uint32)
    if arr.ndim != 2:
        raise ValueError(f"malformed depth png {path}: expected single channel")
    validity = (arr > 0).astype(np.float64)
    depth = arr.astype(np.float64) / 256.0
    return depth[None], validity[None]


def quantize_depth(depth: np.ndarray) -> np.ndarray:
    """The value a depth map takes after one write/read round trip."""
    return np.floor(np.asarray(depth) * 256.0 + 0.5) / 256.0


def write_image_png(path: str, image: np.ndarray):
    arr = np.clip(np.floor(np.asarray(image) * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    img = Image.fromarray(arr)
    tmp = path + ".tmp"
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_image_png(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise FileNotFoundError(f"image png not found: {path}")
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    depth_path: str
    stereo_path: Optional[str] = None
    rig: Optional[StereoRig] = None


def dataset_manifest(path: str) -> list[ManifestEntry]:
    """Parse a line-oriented sample list; every referenced file must exist.

    Each line is either ``image depth`` or ``image depth stereo F B`` with
    single-space separators; paths are resolved relative to the manifest.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    entries: list[ManifestEntry] = []
    problems: list[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) not in (2, 5):
                problems.append(f"line {lineno}: expected 2 or 5 fields, got {len(parts)}")
                continue
            paths = [p if os.path.isabs(p) else os.path.join(base, p) for p in parts[: 3 if len(parts) == 5 else 2]]
            for p in paths:
                if not os.path.exists(p):
                    problems.append(f"line {lineno}: missing file {p}")
            rig = None
            stereo = None
            if len(parts) == 5:
                stereo = paths[2]
                try:
                    rig = StereoRig(focal_px=float(parts[3]), baseline_m=float(parts[4]))
                except ValueError as e:
                    problems.append(f"line {lineno}: {e}")
            entries.append(ManifestEntry(image_path=paths[0], depth_path=paths[1], stereo_path=stereo, rig=rig))
    if problems:
        raise ValueError("manifest " + path + " has errors:\n  " + "\n  ".join(problems))
    return entries


def write_dataset(out_dir: str, seeds: list[int], config: Optional[SceneConfig] = None,
                  with_stereo: bool = True) -> str:
    """Render scenes to PNG files plus a manifest; returns the manifest path."""
    cfg = config if config is not None else SceneConfig()
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for seed in seeds:
        scene = generate_scene(seed, cfg)
        img_name = f"image_{seed:06d}.png"
        dep_name = f"depth_{seed:06d}.png"
        write_image_png(os.path.join(out_dir, img_name), scene.image)
        write_depth_png(os.path.join(out_dir, dep_name), scene.depth,
                        np.ones_like(scene.depth))
        if with_stereo and scene.stereo_image is not None:
            st_name = f"stereo_{seed:06d}.png"
            write_image_png(os.path.join(out_dir, st_name), scene.stereo_image)
            lines.append(f"{img_name} {dep_name} {st_name} {scene.rig.focal_px} {scene.rig.baseline_m}")
        else:
            lines.append(f"{img_name} {dep_name}")
    manifest_path = os.path.join(out_dir, "manifest.txt")
    tmp = manifest_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
    os.replace(tmp, manifest_path)
    return manifest_path
