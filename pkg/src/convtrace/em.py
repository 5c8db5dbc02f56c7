"""Expectation-Maximization estimation of local pixel-correlation kernels.

Each pixel of a channel is modeled as a linear combination of its N x N
neighborhood (anchor excluded).  Pixels either follow that linear model
with Gaussian residuals (inliers) or an outlier model with constant
density p0.  The EM loop alternates per-pixel membership weights with a
weighted least-squares re-estimate of the kernel and of the residual
scale sigma.

Array convention: planes are indexed data[y, x]; an offset (s, t) points
at the neighbor data[y + t, x + s].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientSupportError,
    InvalidKernelSizeError,
    NonPositiveSigmaError,
    PlaneTooSmallError,
    SingularSystemError,
    ZeroWeightMassError,
)
from .imaging import ImagePlane, RgbImage

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class EmConfig:
    """Knobs of the EM estimator; defaults follow the fixed-protocol run."""

    kernel_size: int
    max_iters: int = 100
    sigma0: float = 5.0
    p0: float = 1.0 / 256.0
    convergence_tol: float = 1e-6
    ridge: float = 1e-10
    rng_seed: int = 0

    def __post_init__(self):
        if self.kernel_size < 2:
            raise InvalidKernelSizeError(f"kernel_size must be >= 2, got {self.kernel_size}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.sigma0 <= 0:
            raise NonPositiveSigmaError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.p0 <= 0:
            raise ValueError("p0 must be > 0")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be >= 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")


@dataclass(frozen=True)
class NeighborhoodOffsets:
    """Ordered (s, t) offsets covering the window, anchor (0, 0) excluded.

    Ordering is row-major by (t, s) and is part of the feature-file
    contract; it must never change.
    """

    kernel_size: int
    offsets: tuple[tuple[int, int], ...]
    anchor_convention: str

    def __len__(self):
        return len(self.offsets)


@dataclass
class KernelEstimate:
    """Converged kernel weights (aligned to NeighborhoodOffsets) plus sigma."""

    kernel_size: int
    weights: np.ndarray
    sigma: float
    iterations_run: int
    converged: bool

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = self.kernel_size ** 2 - 1
        if self.weights.shape != (expected,):
            raise ValueError(
                f"weights must have length {expected}, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite values")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


@dataclass
class WeightMap:
    """Per-pixel inlier probabilities over the valid interior region."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise ValueError("values shape disagrees with width/height")


def neighborhood_offsets(n: int) -> NeighborhoodOffsets:
    """Window offsets for kernel size n.

    Odd n spans s, t in [-(n-1)/2, (n-1)/2]; even n spans [-n/2, n/2 - 1].
    """
    if n < 2:
        raise InvalidKernelSizeError(f"kernel size must be >= 2, got {n}")
    if n % 2 == 1:
        half = (n - 1) // 2
        rng = range(-half, half + 1)
        convention = "odd N: window centered on the anchor (0,0); anchor excluded"
    else:
        rng = range(-n // 2, n // 2)
        convention = ("even N: window spans s,t in [-N/2, N/2-1] around the "
                      "anchor (0,0); anchor excluded")
    offs = tuple((s, t) for t in rng for s in rng if (s, t) != (0, 0))
    return NeighborhoodOffsets(kernel_size=n, offsets=offs, anchor_convention=convention)


def valid_region(height: int, width: int, offsets: NeighborhoodOffsets):
    """Slices (rows, cols) of pixels whose whole window stays in the plane."""
    ss = [s for s, _ in offsets.offsets]
    ts = [t for _, t in offsets.offsets]
    y0, y1 = -min(ts), height - max(ts)
    x0, x1 = -min(ss), width - max(ss)
    if y1 <= y0 or x1 <= x0:
        raise PlaneTooSmallError(
            f"plane {width}x{height} too small for kernel size {offsets.kernel_size}")
    return slice(y0, y1), slice(x0, x1)


def _design_matrix(data: np.ndarray, offsets: NeighborhoodOffsets):
    """Stack neighbor values (one column per offset) over the valid region.

    Returns (X, center, region_shape) with X of shape (n_valid, len(offsets)).
    """
    h, w = data.shape
    rows, cols = valid_region(h, w, offsets)
    center = data[rows, cols]
    shape = center.shape
    X = np.empty((center.size, len(offsets)), dtype=np.float64)
    for j, (s, t) in enumerate(offsets.offsets):
        X[:, j] = data[rows.start + t:rows.stop + t, cols.start + s:cols.stop + s].ravel()
    return X, center.ravel(), shape


def residual_map(plane: ImagePlane, estimate: KernelEstimate) -> np.ndarray:
    """|pixel - kernel-weighted neighborhood| over the valid region."""
    offsets = neighborhood_offsets(estimate.kernel_size)
    X, center, shape = _design_matrix(plane.data, offsets)
    r = np.abs(center - X @ estimate.weights)
    return r.reshape(shape)


def expectation_step(residuals: np.ndarray, sigma: float, p0: float) -> WeightMap:
    """Posterior inlier probability per pixel: gaussian vs constant density.

    P = exp(-R^2 / (2 sigma^2)) / (sigma sqrt(2 pi));  w = P / (P + p0).
    """
    if sigma <= 0:
        raise NonPositiveSigmaError(f"sigma must be > 0, got {sigma}")
    if p0 <= 0:
        raise ValueError("p0 must be > 0")
    r = np.asarray(residuals, dtype=np.float64)
    dens = np.exp(-(r * r) / (2.0 * sigma * sigma)) / (sigma * math.sqrt(2.0 * math.pi))
    w = dens / (dens + p0)
    return WeightMap(width=r.shape[1], height=r.shape[0], values=w)


def update_sigma(residuals: np.ndarray, weights: WeightMap) -> float:
    """Weighted ML residual scale: sigma^2 = sum(w R^2) / sum(w), floored."""
    r = np.asarray(residuals, dtype=np.float64).ravel()
    w = weights.values.ravel()
    if r.shape != w.shape:
        raise ValueError("residual and weight shapes disagree")
    mass = float(w.sum())
    if mass <= 0.0:
        raise ZeroWeightMassError("weight map sums to zero")
    sigma = math.sqrt(float((w * r * r).sum()) / mass)
    return max(sigma, SIGMA_FLOOR)


def _solve_weighted(X: np.ndarray, center: np.ndarray, w: np.ndarray,
                    ridge: float) -> np.ndarray:
    """Solve the weighted normal equations A k = b with a relative ridge."""
    dim = X.shape[1]
    Xw = X * w[:, None]
    A = Xw.T @ X
    b = Xw.T @ center
    scale = float(np.trace(A)) / dim
    if scale <= 0.0:
        raise SingularSystemError("normal matrix has zero scale")
    evals = np.linalg.eigvalsh(A)
    if evals[0] <= evals[-1] * np.finfo(np.float64).eps * dim:
        raise SingularSystemError(
            "weighted normal equations are numerically rank-deficient "
            "(constant or near-constant support)")
    if ridge > 0.0:
        A = A + (ridge * scale) * np.eye(dim)
    try:
        k = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(k)):
        raise SingularSystemError("solution contains non-finite values")
    return k


def maximization_step(plane: ImagePlane, weights: WeightMap,
                      offsets: NeighborhoodOffsets, ridge: float = 1e-10) -> np.ndarray:
    """Kernel minimizing the weighted squared prediction error.

    Solves the (N^2-1) x (N^2-1) weighted normal equations; a Tikhonov term
    ridge * (trace(A)/dim) is added to the diagonal before solving.
    """
    X, center, shape = _design_matrix(plane.data, offsets)
    w = weights.values
    if w.shape != shape:
        raise ValueError(
            f"weight map shape {w.shape} does not match valid region {shape}")
    w = w.ravel()
    if np.count_nonzero(w > 0.0) < len(offsets):
        raise InsufficientSupportError(
            f"need at least {len(offsets)} pixels with positive weight")
    return _solve_weighted(X, center, w, ridge)


def em_fit(plane: ImagePlane, cfg: EmConfig) -> KernelEstimate:
    """Run the EM loop on one channel and return the converged kernel.

    The kernel starts at a seeded uniform draw in [-0.01, 0.01].  Early
    iterations on bright planes can leave the Gaussian likelihood with
    almost no mass anywhere (the initial predictions are near zero); in
    that regime the solve is skipped and only sigma is re-estimated until
    enough pixels carry weight to support the linear system.
    """
    data = plane.data
    offsets = neighborhood_offsets(cfg.kernel_size)
    dim = len(offsets)
    X, center, shape = _design_matrix(data, offsets)
    if float(np.ptp(data)) == 0.0:
        raise DegenerateInputError("constant plane: nothing to estimate")

    rng = np.random.default_rng(cfg.rng_seed)
    k = rng.uniform(-0.01, 0.01, dim)
    sigma = cfg.sigma0

    iterations = 0
    converged = False
    for _ in range(cfg.max_iters):
        iterations += 1
        r = np.abs(center - X @ k)
        wm = expectation_step(r.reshape(shape), sigma, cfg.p0)
        w = wm.values.ravel()
        mass = float(w.sum())
        if mass <= 0.0:
            raise InsufficientSupportError(
                "all inlier weights underflowed to zero; sigma0 far too small "
                "for this plane")
        sigma_next = update_sigma(r.reshape(shape), wm)
        if mass < dim:
            # not enough effective samples to trust a solve yet; let sigma
            # grow toward the residual scale and retry
            sigma = sigma_next
            continue
        if np.count_nonzero(w > 0.0) < dim:
            raise InsufficientSupportError(
                f"fewer than {dim} pixels with positive weight")
        k_next = _solve_weighted(X, center, w, cfg.ridge)
        sigma = sigma_next
        delta = float(np.max(np.abs(k_next - k)))
        k = k_next
        if delta < cfg.convergence_tol:
            converged = True
            break

    return KernelEstimate(
        kernel_size=cfg.kernel_size,
        weights=k,
        sigma=sigma,
        iterations_run=iterations,
        converged=converged,
    )


def em_fit_rgb(img: RgbImage, cfg: EmConfig) -> tuple[KernelEstimate, KernelEstimate, KernelEstimate]:
    """Fit each channel independently (R, G, B) with the same config."""
    results = []
    for name, plane in zip("RGB", img.planes):
        try:
            results.append(em_fit(plane, cfg))
        except Exception as exc:
            exc.args = (f"channel {name}: {exc}",) + exc.args[1:]
            raise
    return tuple(results)


def prediction_error(plane: ImagePlane, weights: WeightMap,
                     kernel: np.ndarray, offsets: NeighborhoodOffsets) -> float:
    """Weighted squared-error functional the M-step minimizes for fixed weights."""
    X, center, shape = _design_matrix(plane.data, offsets)
    if weights.values.shape != shape:
        raise ValueError("weight map shape does not match valid region")
    r = center - X @ np.asarray(kernel, dtype=np.float64)
    return float((weights.values.ravel() * r * r).sum())
