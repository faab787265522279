"""Video quality and temporal consistency metrics.

Flow convention for the temporal metrics: ``flows[i]`` is a pull field on
frame i+1's pixel grid whose vectors point back into frame i, so warping
frame i with it produces frame i's content aligned to frame i+1. Pixels
whose warp taps leave the frame, whose flow is flagged invalid, or that are
masked out by an occlusion mask are excluded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flow import FlowField
from .numerics import Frame, bilinear_warp

__all__ = [
    "MetricReport",
    "fsim_temporal",
    "psnr",
    "read_report_csv",
    "ssim",
    "warping_error",
    "write_report_csv",
]

REPORT_COLUMNS = ["sequence", "method", "task", "PSNR", "SSIM", "WE_e3", "FSim", "seed"]


def psnr(a: Frame, b: Frame, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); +inf for identical frames."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def _to_gray(frame: Frame) -> np.ndarray:
    """Rec. 601 luma for RGB; the single plane as-is for grayscale."""
    if frame.channels == 1:
        return frame.pixels[0]
    r, g, b = frame.pixels
    return 0.299 * r + 0.587 * g + 0.114 * b


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: Frame, b: Frame, peak: float = 1.0) -> float:
    """Mean windowed SSIM with an 11x11 Gaussian (sigma 1.5) window.

    RGB inputs are first reduced to Rec. 601 luma. Windows are fully inside
    the frame (valid mode); frames smaller than the window are an error.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    size = 11
    if a.height < size or a.width < size:
        raise ValueError(f"frame {a.height}x{a.width} smaller than the {size}x{size} window")
    ga, gb = _to_gray(a), _to_gray(b)
    win = _gaussian_window(size, 1.5)

    def windows(img: np.ndarray) -> np.ndarray:
        return np.lib.stride_tricks.sliding_window_view(img, (size, size))

    wa, wb = windows(ga), windows(gb)
    mu_a = np.einsum("ijkl,kl->ij", wa, win)
    mu_b = np.einsum("ijkl,kl->ij", wb, win)
    e_aa = np.einsum("ijkl,kl->ij", wa * wa, win)
    e_bb = np.einsum("ijkl,kl->ij", wb * wb, win)
    e_ab = np.einsum("ijkl,kl->ij", wa * wb, win)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


def _paired_valid(
    video: list[Frame],
    flows: list[FlowField],
    occ: list[np.ndarray] | None,
):
    if len(video) < 2:
        raise ValueError("need at least two frames")
    if len(flows) != len(video) - 1:
        raise ValueError(f"need {len(video) - 1} flows for {len(video)} frames, got {len(flows)}")
    if occ is not None and len(occ) != len(flows):
        raise ValueError(f"need {len(flows)} occlusion masks, got {len(occ)}")
    for i, fl in enumerate(flows):
        warped, valid = bilinear_warp(video[i], fl)
        if occ is not None:
            valid = valid & np.asarray(occ[i], dtype=bool)
        yield i, warped, valid


def warping_error(
    video: list[Frame],
    flows: list[FlowField],
    occ: list[np.ndarray] | None = None,
) -> float:
    """Mean masked MSE between each frame and its warped predecessor, x1e3."""
    totals = []
    for i, warped, valid in _paired_valid(video, flows, occ):
        if not valid.any():
            continue
        diff = video[i + 1].pixels - warped.pixels
        totals.append(float(np.mean(diff[:, valid] ** 2)))
    if not totals:
        raise ValueError("no valid pixels in any frame pair")
    return float(np.mean(totals)) * 1e3


def fsim_temporal(video: list[Frame], flows: list[FlowField],
                  occ: list[np.ndarray] | None = None) -> float:
    """Mean cosine similarity between each frame and its warped predecessor.

    Both frames are vectorized over the valid pixels only. A zero-norm
    vector on either side is an error.
    """
    sims = []
    for i, warped, valid in _paired_valid(video, flows, occ):
        if not valid.any():
            continue
        va = video[i + 1].pixels[:, valid].reshape(-1)
        vb = warped.pixels[:, valid].reshape(-1)
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na == 0.0 or nb == 0.0:
            raise ValueError(f"zero-norm frame in pair {i}")
        sims.append(float(va @ vb / (na * nb)))
    if not sims:
        raise ValueError("no valid pixels in any frame pair")
    return float(np.mean(sims))


@dataclass
class MetricReport:
    """One benchmark row: identity fields plus the four scores."""

    sequence: str
    method: str
    task: str
    psnr: float
    ssim: float
    we_e3: float
    fsim: float
    seed: int
    per_frame: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (self.psnr >= 0.0 or self.psnr == float("inf")):
            raise ValueError(f"PSNR must be >= 0 or +inf, got {self.psnr}")
        if not -1.0 <= self.ssim <= 1.0:
            raise ValueError(f"SSIM must be in [-1, 1], got {self.ssim}")
        if not -1.0 <= self.fsim <= 1.0:
            raise ValueError(f"FSim must be in [-1, 1], got {self.fsim}")
        if self.we_e3 < 0.0:
            raise ValueError(f"WE must be >= 0, got {self.we_e3}")

    def row(self) -> list:
        return [self.sequence, self.method, self.task,
                f"{self.psnr:.4f}", f"{self.ssim:.6f}", f"{self.we_e3:.6f}",
                f"{self.fsim:.6f}", self.seed]


def write_report_csv(reports: list[MetricReport], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(REPORT_COLUMNS)
        for rep in reports:
            writer.writerow(rep.row())


def read_report_csv(path: str | Path) -> list[dict]:
    """Rows as dicts with the numeric columns parsed back to float/int."""
    with open(path, newline="") as fp:
        reader = csv.DictReader(fp)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for col in ("PSNR", "SSIM", "WE_e3", "FSim"):
                row[col] = float(row[col])
            row["seed"] = int(row["seed"])
            rows.append(row)
        return rows
