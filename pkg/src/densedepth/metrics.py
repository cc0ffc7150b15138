"""Benchmark-convention depth metrics: mm for errors, 1/km for inverse errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalResult:
    rmse_mm: float
    mae_mm: float
    irmse_per_km: float
    imae_per_km: float
    absrel: float
    n_valid: int

    def as_row(self) -> list[float]:
        return [self.rmse_mm, self.mae_mm, self.irmse_per_km, self.imae_per_km, self.absrel, self.n_valid]

    @staticmethod
    def csv_header() -> str:
        return "rmse_mm,mae_mm,irmse_per_km,imae_per_km,absrel,n_valid"


def compute_metrics(pred: np.ndarray, gt: np.ndarray, validity: np.ndarray) -> EvalResult:
    """Errors between predicted and reference depth (meters) on valid pixels."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(validity) > 0
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise ValueError(f"compute_metrics: shapes differ: pred {pred.shape}, gt {gt.shape}, validity {mask.shape}")
    n = int(mask.sum())
    if n < 1:
        raise ValueError("compute_metrics: empty validity mask")
    p = pred[mask]
    g = gt[mask]
    if np.any(p <= 0) or np.any(g <= 0):
        raise ValueError("compute_metrics: non-positive depth on a valid pixel; inverse metrics undefined")
    diff = p - g
    rmse_mm = float(np.sqrt(np.mean(diff ** 2)) * 1000.0)
    mae_mm = float(np.mean(np.abs(diff)) * 1000.0)
    idiff = 1.0 / p - 1.0 / g
    irmse = float(np.sqrt(np.mean(idiff ** 2)) * 1000.0)
    imae = float(np.mean(np.abs(idiff)) * 1000.0)
    absrel = float(np.mean(np.abs(diff) / g))
    return EvalResult(rmse_mm=rmse_mm, mae_mm=mae_mm, irmse_per_km=irmse,
                      imae_per_km=imae, absrel=absrel, n_valid=n)


def aggregate(results: list[EvalResult], per_pixel: bool = False) -> EvalResult:
    """Dataset-level result: mean of per-image metrics, or pixel-pooled means."""
    if not results:
        raise ValueError("aggregate: no results")
    if per_pixel:
        weights = np.array([r.n_valid for r in results], dtype=np.float64)
        total = weights.sum()
        rmse = float(np.sqrt(np.sum(weights * np.array([r.rmse_mm for r in results]) ** 2) / total))
        irmse = float(np.sqrt(np.sum(weights * np.array([r.irmse_per_km for r in results]) ** 2) / total))
        mae = float(np.sum(weights * np.array([r.mae_mm for r in results])) / total)
        imae = float(np.sum(weights * np.array([r.imae_per_km for r in results])) / total)
        absrel = float(np.sum(weights * np.array([r.absrel for r in results])) / total)
        return EvalResult(rmse, mae, irmse, imae, absrel, int(total))
    n = len(results)
    return EvalResult(
        rmse_mm=float(np.mean([r.rmse_mm for r in results])),
        mae_mm=float(np.mean([r.mae_mm for r in results])),
        irmse_per_km=float(np.mean([r.irmse_per_km for r in results])),
        imae_per_km=float(np.mean([r.imae_per_km for r in results])),
        absrel=float(np.mean([r.absrel for r in results])),
        n_valid=int(np.sum([r.n_valid for r in results])),
    )
