"""Training objectives: sparse fidelity, learned prior, and stereo photometric terms.

All losses are sums (not means) over their support; relative weighting is
carried entirely by LossWeights. Each returns the scalar loss tensor, and
composite losses additionally return their components as floats for logging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import StereoRig, disparity_from_depth, erode_mask3x3, ssim_map, warp_horizontal
from .networks import CpnModel, DcnModel, cpn_forward, dcn_forward
from .tensor import Tensor, add, mean_channels, mul, power_penalty, sub


@dataclass(frozen=True)
class NormSpec:
    """Penalty exponents: gamma for the data term, eta for the prior term."""

    gamma: int = 1
    eta: int = 2

    def __post_init__(self):
        if self.gamma not in (1, 2) or self.eta not in (1, 2):
            raise ValueError(f"NormSpec: exponents must be in {{1, 2}}, got gamma={self.gamma}, eta={self.eta}")


@dataclass(frozen=True)
class LossWeights:
    """Non-negative term weights; the likelihood temperature is folded in."""

    alpha: float = 0.045
    beta: float = 1.20
    beta_c: float = 0.15
    beta_s: float = 0.425

    def __post_init__(self):
        for name in ("alpha", "beta", "beta_c", "beta_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"LossWeights: {name} must be non-negative")


def sparse_points_to_maps(z: np.ndarray, omega: np.ndarray, shape: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Scatter (z, omega) onto the lattice: a zero-filled value map and a 0/1 mask."""
    h, w = shape
    z = np.asarray(z, dtype=np.float64)
    omega = np.asarray(omega)
    if z.ndim != 1 or omega.shape != (z.size, 2):
        raise ValueError(f"sparse sample: z must be (K,), omega (K, 2); got {z.shape} and {omega.shape}")
    if z.size < 1:
        raise ValueError("sparse sample: the index set is empty")
    rows, cols = omega[:, 0], omega[:, 1]
    if rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w:
        raise ValueError(f"sparse sample: indices fall outside the {h}x{w} lattice")
    z_map = np.zeros((h, w))
    validity = np.zeros((h, w))
    z_map[rows, cols] = z
    validity[rows, cols] = 1.0
    return z_map, validity


def map_fidelity(d: Tensor, z_map: np.ndarray, validity: np.ndarray, gamma: int) -> Tensor:
    """sum over the mask of |z - d|^gamma, on already-rasterized sparse maps."""
    if validity.sum() < 1:
        raise ValueError("map_fidelity: no valid sparse points")
    target = Tensor(np.broadcast_to(z_map, d.shape).copy())
    mask = np.broadcast_to(validity, d.shape).copy()
    return power_penalty(sub(target, d), gamma, mask=Tensor(mask))


def sparse_fidelity(d: Tensor, z: np.ndarray, omega: np.ndarray, gamma: int) -> Tensor:
    """Data term of the posterior: sum_{x in omega} |z(x) - d(x)|^gamma."""
    if d.data.ndim != 4 or d.shape[0] != 1 or d.shape[1] != 1:
        raise ValueError(f"sparse_fidelity: expected a single (1,1,H,W) depth map, got {d.shape}")
    z_map, validity = sparse_points_to_maps(z, omega, (d.shape[2], d.shape[3]))
    return map_fidelity(d, z_map[None, None], validity[None, None], gamma)


def supervised_loss(pred: Tensor, gt: Tensor, gt_validity: np.ndarray) -> Tensor:
    """L1 prediction error over annotated pixels."""
    if pred.shape != gt.shape:
        raise ValueError(f"supervised_loss: shape mismatch {pred.shape} vs {gt.shape}")
    mask = np.asarray(gt_validity, dtype=np.float64)
    if mask.shape != pred.shape:
        mask = np.broadcast_to(mask, pred.shape).copy()
    if mask.sum() < 1:
        raise ValueError("supervised_loss: no valid ground-truth pixels")
    return power_penalty(sub(pred, gt), 1, mask=Tensor(mask))


def prior_energy(d: Tensor, image: Tensor, cpn: CpnModel, eta: int) -> Tensor:
    """Reconstruction energy of d under the frozen prior network.

    Gradients flow through the reconstruction into d, never into the prior's
    own parameters.
    """
    if any(p.requires_grad for p in cpn.parameters()):
        raise ValueError("prior_energy: the prior network must be frozen")
    d_prime = cpn_forward(cpn, d, image)
    return power_penalty(sub(d_prime, d), eta)


def _map_posterior_energy(d: Tensor, z_map: np.ndarray, validity: np.ndarray, image: Tensor,
                          cpn: CpnModel, norms: NormSpec, alpha: float):
    fidelity = map_fidelity(d, z_map, validity, norms.gamma)
    if alpha == 0.0:
        return fidelity, fidelity, None
    prior = prior_energy(d, image, cpn, norms.eta)
    total = add(fidelity, mul(prior, alpha))
    return total, fidelity, prior


def unsupervised_loss(z: np.ndarray, omega: np.ndarray, image: Tensor, dcn: DcnModel,
                      cpn: CpnModel, norms: NormSpec, weights: LossWeights):
    """Sparse fidelity plus alpha times the learned prior energy.

    Returns (total, components) with components = {"fidelity", "prior"}.
    """
    z_map, validity = sparse_points_to_maps(z, omega, (image.shape[2], image.shape[3]))
    z_map = z_map[None, None]
    validity = validity[None, None]
    d = dcn_forward(dcn, Tensor(z_map), image)
    total, fidelity, prior = _map_posterior_energy(d, z_map, validity, image, cpn, norms, weights.alpha)
    components = {"fidelity": fidelity.item(), "prior": prior.item() if prior is not None else 0.0}
    return total, components


def photometric_raw(image: Tensor, image_prime: Tensor, d: Tensor, rig: StereoRig, sign: int = 1) -> Tensor:
    """Intensity-constancy penalty: per-pixel L1 color difference against the
    stereo mate warped by the disparity synthesized from d."""
    if image.shape != image_prime.shape:
        raise ValueError(f"photometric_raw: image shapes differ {image.shape} vs {image_prime.shape}")
    disp = disparity_from_depth(d, rig)
    warped, mask = warp_horizontal(image_prime, disp, sign=sign)
    mask_c = np.repeat(mask, image.shape[1], axis=1)
    return power_penalty(sub(image, warped), 1, mask=Tensor(mask_c))


def photometric_ssim(image: Tensor, image_prime: Tensor, d: Tensor, rig: StereoRig, sign: int = 1) -> Tensor:
    """Structural penalty: sum of (1 - SSIM) between the image and the warped mate."""
    if image.shape != image_prime.shape:
        raise ValueError(f"photometric_ssim: image shapes differ {image.shape} vs {image_prime.shape}")
    disp = disparity_from_depth(d, rig)
    warped, mask = warp_horizontal(image_prime, disp, sign=sign)
    sm = mean_channels(ssim_map(image, warped))
    terms = sub(Tensor(np.ones_like(sm.data)), sm)
    # exclude pixels whose 3x3 SSIM window touches out-of-bounds samples
    tight = erode_mask3x3(mask)
    return power_penalty(terms, 1, mask=Tensor(tight))


def stereo_loss(z: np.ndarray, omega: np.ndarray, image: Tensor, image_prime: Tensor,
                rig: StereoRig, dcn: DcnModel, cpn: CpnModel, norms: NormSpec,
                weights: LossWeights, sign: int = 1):
    """Full training objective when a rectified mate is available.

    total = unsupervised + beta_c * psi_c + beta_s * psi_s, with all terms
    sharing one completion forward pass. Returns (total, components).
    """
    z_map, validity = sparse_points_to_maps(z, omega, (image.shape[2], image.shape[3]))
    z_map = z_map[None, None]
    validity = validity[None, None]
    d = dcn_forward(dcn, Tensor(z_map), image)
    unsup, fidelity, prior = _map_posterior_energy(d, z_map, validity, image, cpn, norms, weights.alpha)
    total = unsup
    psi_c_val = 0.0
    psi_s_val = 0.0
    if weights.beta_c > 0:
        psi_c = photometric_raw(image, image_prime, d, rig, sign=sign)
        psi_c_val = psi_c.item()
        total = add(total, mul(psi_c, weights.beta_c))
    if weights.beta_s > 0:
        psi_s = photometric_ssim(image, image_prime, d, rig, sign=sign)
        psi_s_val = psi_s.item()
        total = add(total, mul(psi_s, weights.beta_s))
    components = {
        "unsupervised": unsup.item(),
        "fidelity": fidelity.item(),
        "prior": prior.item() if prior is not None else 0.0,
        "psi_c": psi_c_val,
        "psi_s": psi_s_val,
    }
    return total, components


def posterior_score(d: Tensor, z: np.ndarray, omega: np.ndarray, image: Tensor,
                    cpn: CpnModel, norms: NormSpec, alpha: float) -> Tensor:
    """Negative log posterior (up to a constant) of a fixed candidate depth map."""
    z_map, validity = sparse_points_to_maps(z, omega, (image.shape[2], image.shape[3]))
    total, _, _ = _map_posterior_energy(d, z_map[None, None], validity[None, None], image, cpn, norms, alpha)
    return total
