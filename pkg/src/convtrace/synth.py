"""Synthetic planes with planted correlation kernels.

Two constructions serve as ground-truth oracles for the estimator:

* ``generate`` runs a raster-scan causal recursion.  The noiseless state
  mixes already-generated neighbors with a base sample (the base weight is
  whatever causal mass is missing, so the process mean stays at the base
  mean); observation noise is added on top and the result is clamped to
  [0, 255].  The asymptotic least-squares optimum over the full window --
  the value the estimator actually converges to -- is computed from the
  stationary autocovariance of the recursion and returned as the recovery
  target.

* ``exact_relation_plane`` superposes oscillatory modes drawn from the
  characteristic variety of a full-window kernel, producing a plane that
  satisfies pixel = sum(kernel * neighbors) exactly.  Only kernels whose
  support touches all four window borders admit a unique window fit, so
  exact fixtures use spread-out, mixed-sign kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .em import neighborhood_offsets
from .errors import UnstableSpecError
from .imaging import ImagePlane, RgbImage

UNIFORM_MEAN = 127.5
UNIFORM_VAR = 255.0 ** 2 / 12.0
GAUSSIAN_MEAN = 128.0
GAUSSIAN_SIGMA = 40.0

BASES = ("iid_uniform", "iid_gaussian")


def is_causal(s: int, t: int) -> bool:
    """True when (s, t) precedes the anchor in raster order."""
    return t < 0 or (t == 0 and s < 0)


@dataclass
class SyntheticSpec:
    """Recipe for one generated plane."""

    width: int
    height: int
    kernel_size: int
    planted: dict[tuple[int, int], float]
    noise_sigma: float = 0.0
    base: str = "iid_uniform"
    rng_seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.base not in BASES:
            raise ValueError(f"base must be one of {BASES}, got {self.base!r}")
        window = set(neighborhood_offsets(self.kernel_size).offsets)
        for off, w in self.planted.items():
            if off not in window:
                raise ValueError(f"offset {off} outside the {self.kernel_size}x"
                                 f"{self.kernel_size} window")
            if not is_causal(*off):
                raise ValueError(f"offset {off} is not causal; the raster "
                                 "recursion only uses offsets before the anchor")
        total = sum(abs(w) for w in self.planted.values())
        if total > 1.2:
            raise ValueError(f"sum of |planted weights| = {total:.3f} exceeds "
                             "the stability bound 1.2")

    def base_mean(self) -> float:
        return UNIFORM_MEAN if self.base == "iid_uniform" else GAUSSIAN_MEAN

    def base_var(self) -> float:
        return UNIFORM_VAR if self.base == "iid_uniform" else GAUSSIAN_SIGMA ** 2


def _draw_base(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.base == "iid_uniform":
        return rng.uniform(0.0, 255.0, (spec.height, spec.width))
    return rng.normal(GAUSSIAN_MEAN, GAUSSIAN_SIGMA, (spec.height, spec.width))


def _run_recursion(spec: SyntheticSpec) -> np.ndarray:
    """Raw (unclamped) output of the raster recursion plus observation noise."""
    rng = np.random.default_rng(spec.rng_seed)
    base = _draw_base(spec, rng)
    taps = sorted(spec.planted.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    h, w = spec.height, spec.width
    state = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            mass = 0.0
            for (s, t), wgt in taps:
                yy, xx = y + t, x + s
                if 0 <= yy < h and 0 <= xx < w:
                    acc += wgt * state[yy, xx]
                    mass += wgt
            state[y, x] = acc + (1.0 - mass) * base[y, x]
    if spec.noise_sigma > 0:
        state = state + rng.normal(0.0, spec.noise_sigma, (h, w))
    return state


def generate(spec: SyntheticSpec) -> tuple[ImagePlane, np.ndarray]:
    """Run the raster recursion; returns (plane, effective kernel).

    The effective kernel is the full-window recovery target aligned to
    ``neighborhood_offsets(spec.kernel_size)``.
    """
    out = _run_recursion(spec)
    saturated = int(np.count_nonzero((out <= 0.0) | (out >= 255.0)))
    if saturated > 0.5 * out.size:
        raise UnstableSpecError(
            f"recursion diverged: {saturated}/{out.size} pixels saturated")
    return ImagePlane(np.clip(out, 0.0, 255.0)), effective_kernel(spec)


def clamped_fraction(spec: SyntheticSpec) -> float:
    """Fraction of pixels the [0,255] clamp actually modified."""
    out = _run_recursion(spec)
    return float(np.count_nonzero((out < 0.0) | (out > 255.0))) / out.size


def effective_kernel(spec: SyntheticSpec, grid: int = 512) -> np.ndarray:
    """Asymptotic full-window least-squares optimum for the recursion.

    With causal mass summing to 1 the base only seeds the boundary, the
    interior satisfies the planted relation exactly, and the target is the
    planted weights themselves.  Otherwise the base keeps injecting
    innovations, the field is a stationary autoregression, and the optimum
    follows from its spectral density: second moments of the window are
    assembled from mu^2 (mean part), the FFT-evaluated autocovariance, and
    the observation-noise variance on the diagonal.
    """
    offsets = neighborhood_offsets(spec.kernel_size)
    planted_vec = np.array([spec.planted.get(o, 0.0) for o in offsets.offsets])
    mass = sum(spec.planted.values())
    innovation_var = (1.0 - mass) ** 2 * spec.base_var()
    if innovation_var == 0.0:
        return planted_vec

    freqs = 2.0 * np.pi * np.fft.fftfreq(grid)
    wx, wy = np.meshgrid(freqs, freqs)
    transfer = np.zeros((grid, grid), dtype=complex)
    for (s, t), wgt in spec.planted.items():
        transfer += wgt * np.exp(-1j * (wx * s + wy * t))
    spectrum = innovation_var / np.abs(1.0 - transfer) ** 2
    cov = np.real(np.fft.ifft2(spectrum))

    mu2 = spec.base_mean() ** 2
    offs = offsets.offsets
    dim = len(offs)
    M = np.empty((dim, dim))
    rhs = np.empty(dim)
    for i, (si, ti) in enumerate(offs):
        rhs[i] = mu2 + cov[ti % grid, si % grid]
        for j, (sj, tj) in enumerate(offs):
            M[i, j] = mu2 + cov[(tj - ti) % grid, (sj - si) % grid]
            if i == j:
                M[i, j] += spec.noise_sigma ** 2
    return np.linalg.solve(M, rhs)


# -- exact-relation planes ---------------------------------------------------

def _lambda_roots(kernel: dict[tuple[int, int], float], mu: complex) -> np.ndarray:
    """Solve sum(k * lam^s * mu^t) = 1 for lam at fixed mu."""
    smin = min(s for s, _ in kernel)
    smax = max(s for s, _ in kernel)
    coeffs = np.zeros(smax - smin + 1, dtype=complex)
    for (s, t), wgt in kernel.items():
        coeffs[s - smin] += wgt * mu ** t
    coeffs[-smin] -= 1.0
    return np.roots(coeffs[::-1])


def exact_relation_plane(width: int, height: int,
                         kernel: dict[tuple[int, int], float],
                         rng: np.random.Generator,
                         n_modes: int = 24,
                         spread: float = 60.0) -> ImagePlane:
    """Plane satisfying pixel = sum(kernel * neighbors) exactly everywhere.

    The kernel weights must sum to 1 (so the 128 offset satisfies the
    relation too) and should touch all four borders of their window,
    otherwise the window fit is not unique.  Modes lam^x mu^y are sampled
    from the kernel's characteristic variety, keeping only well-scaled
    oscillatory ones.
    """
    total = sum(kernel.values())
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"kernel weights must sum to 1, got {total}")
    xs = np.arange(width)
    ys = np.arange(height)
    plane = np.zeros((height, width))
    made = 0
    tries = 0
    while made < n_modes:
        tries += 1
        if tries > 200 * n_modes:
            raise ValueError("could not sample enough exact modes; the kernel's "
                             "characteristic variety is too thin")
        radius = rng.uniform(0.998, 1.002)
        angle = rng.uniform(0.05, 3.1) * rng.choice([-1.0, 1.0])
        mu = radius * np.exp(1j * angle)
        for lam in _lambda_roots(kernel, mu):
            if not (0.96 <= abs(lam) <= 1.04) or abs(np.angle(lam)) < 0.05:
                continue
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.5, 1.0)
            mode = np.real(np.exp(1j * phase)
                           * np.power(lam, xs)[None, :]
                           * np.power(mu, ys)[:, None])
            rms = math.sqrt(float(np.mean(mode * mode)))
            if rms < 1e-9 or not np.isfinite(rms):
                continue
            plane += (amp / rms) * mode
            made += 1
            if made >= n_modes:
                break
    peak = float(np.max(np.abs(plane)))
    if peak > 0:
        plane *= spread / peak
    return ImagePlane(128.0 + plane)


# -- labeled corpora ---------------------------------------------------------

@dataclass
class CorpusSpec:
    """Per-class recipe: one SyntheticSpec template used for all 3 channels."""

    name: str
    template: SyntheticSpec


def generate_rgb(spec: SyntheticSpec, seed: int) -> RgbImage:
    """Three planes from per-channel seeds derived from ``seed``."""
    planes = []
    for channel in range(3):
        chan_spec = SyntheticSpec(
            width=spec.width, height=spec.height, kernel_size=spec.kernel_size,
            planted=spec.planted, noise_sigma=spec.noise_sigma, base=spec.base,
            rng_seed=seed * 3 + channel,
        )
        plane, _ = generate(chan_spec)
        planes.append(plane)
    return RgbImage(planes=tuple(planes))


def make_labeled_corpus(spec_a: CorpusSpec, spec_b: CorpusSpec,
                        count: int, out_dir: str | Path,
                        seed: int = 0) -> Path:
    """Write ``count`` PNGs per class under class-named subdirectories.

    Returns the manifest path; the manifest lists one ``path,class,seed``
    row per image.  Regeneration with the same seed is byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for class_index, cspec in enumerate((spec_a, spec_b)):
        class_dir = out / cspec.name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            img_seed = seed + class_index * count + i
            rgb = generate_rgb(cspec.template, img_seed)
            stacked = np.stack([p.data for p in rgb.planes], axis=-1)
            arr = np.rint(stacked).clip(0, 255).astype(np.uint8)
            path = class_dir / f"{cspec.name}_{i:04d}.png"
            Image.fromarray(arr, mode="RGB").save(path)
            rows.append(f"{path.relative_to(out)},{cspec.name},{img_seed}")
    manifest = out / "manifest.csv"
    manifest.write_text("path,class,seed\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return manifest
