"""Anti-forensic dither: per-coefficient resampling that erases the step comb.

Each dequantized coefficient Y = Q*X' receives an additive dither N drawn from
the model conditional for its quantizer bin, so Z = Y + N follows the fitted
Laplacian marginal while staying inside the originating bin. Support is the
half-open bin [-Q/2, Q/2); samples are nudged strictly inside so that
re-quantizing Z always recovers X' exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .block_codec import (
    BLOCK,
    BlockGrid,
    CoefficientPlane,
    QuantTable,
    QuantizedPlane,
    inverse_dct,
    jpeg_pipeline,
)
from .coeff_model import fit_all_subbands
from .pixel_io import GrayImage, assemble_blocks, round_half_away

# relative inset keeping samples strictly inside the bin across float paths
_SUPPORT_MARGIN = 1e-9

# spawn key reserved for the deblock noise stream; (i, j) subbands use 0..7
_DEBLOCK_KEY = (BLOCK, 0)


@dataclass
class DitherConfig:
    """Knobs for the attack; identical seed + inputs give bit-identical output."""

    seed: int = 0
    deblock: bool = True
    dc_fallback: str = "uniform"

    def __post_init__(self):
        if self.dc_fallback not in ("uniform", "none"):
            raise ValueError(f"dc_fallback must be 'uniform' or 'none', got {self.dc_fallback!r}")


def subband_rng(seed: int, i: int, j: int) -> np.random.Generator:
    """Decorrelated per-subband stream; draw position = block index."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j)))


def _clip_support(n, step):
    lim = 0.5 * step * (1.0 - _SUPPORT_MARGIN)
    return np.clip(n, -lim, lim)


def _zero_from_uniform(u, lam, step):
    # two-sided truncated exponential exp(-lam*|n|) on [-Q/2, Q/2)
    sign = np.where(u < 0.5, -1.0, 1.0)
    v = np.abs(2.0 * u - 1.0)
    mag = -np.log1p(-v * (1.0 - np.exp(-lam * step / 2.0))) / lam
    return _clip_support(sign * mag, step)


def _nonzero_from_uniform(u, lam, step, sgn):
    # one-sided truncated exponential exp(-sgn*lam*n) on [-Q/2, Q/2)
    c = 1.0 - np.exp(-lam * step)
    pos = -step / 2.0 - np.log1p(-u * c) / lam
    neg = step / 2.0 + np.log(np.exp(-lam * step) + u * c) / lam
    return _clip_support(np.where(np.asarray(sgn) > 0, pos, neg), step)


def _check_params(lam, step):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not step >= 1:
        raise ValueError(f"step must be >= 1, got {step}")


def sample_dither_zero(lam, step, rng, size=None):
    """Dither for zero-valued coefficients: density proportional to exp(-lam*|n|)."""
    _check_params(lam, step)
    u = rng.random(size)
    return _zero_from_uniform(u, float(lam), float(step))


def sample_dither_nonzero(lam, step, sign_of_y, rng, size=None):
    """Dither for nonzero coefficients, mass pulled toward zero magnitude.

    For y > 0 the density decreases in n, for y < 0 it increases.
    """
    _check_params(lam, step)
    if sign_of_y not in (-1, 1):
        raise ValueError(f"sign_of_y must be -1 or +1, got {sign_of_y}")
    u = rng.random(size)
    return _nonzero_from_uniform(u, float(lam), float(step), sign_of_y)


def apply_dither(levels: QuantizedPlane, table: QuantTable, fits, cfg: DitherConfig) -> CoefficientPlane:
    """Z = Y + N for every coefficient, one RNG substream per subband.

    Subbands with a usable fit get the Laplacian conditional dither; degenerate
    fits fall back to uniform bin filling, and the DC subband follows
    cfg.dc_fallback ('uniform' fills the bin, 'none' leaves Y untouched).
    """
    fits = list(fits)
    if len(fits) != BLOCK * BLOCK:
        raise ValueError(f"need {BLOCK * BLOCK} fits, got {len(fits)}")
    x = levels.levels
    by, bx = x.shape[:2]
    z = np.empty(x.shape, dtype=np.float64)
    for i in range(BLOCK):
        for j in range(BLOCK):
            q = float(table.steps[i, j])
            lev = x[:, :, i, j].astype(np.float64)
            y = lev * q
            u = subband_rng(cfg.seed, i, j).random(by * bx).reshape(by, bx)
            fit = fits[i * BLOCK + j]
            if fit is None:
                raise ValueError(f"missing fit for subband ({i}, {j})")
            if (i, j) == (0, 0):
                n = (u - 0.5) * q if cfg.dc_fallback == "uniform" else np.zeros_like(u)
            elif fit.degenerate or not fit.lambda_ml > 0:
                n = (u - 0.5) * q
            else:
                lam = fit.lambda_ml
                n = np.where(lev == 0,
                             _zero_from_uniform(u, lam, q),
                             _nonzero_from_uniform(u, lam, q, np.sign(y)))
            z[:, :, i, j] = y + n
    return CoefficientPlane(z)


def deblock(img: GrayImage, strength: int = 3, rng=None) -> GrayImage:
    """Median filter plus a weak seeded dither to break residual block seams.

    strength is the (odd) median window; 1 disables both filter and noise.
    """
    if strength % 2 == 0:
        raise ValueError(f"window size must be odd, got {strength}")
    if strength <= 1:
        return GrayImage(img.pixels.copy())
    med = ndimage.median_filter(img.pixels, size=strength, mode="reflect")
    if rng is None:
        rng = np.random.default_rng(0)
    noise = rng.uniform(-1.0, 1.0, med.shape)
    out = np.clip(round_half_away(med.astype(np.float64) + noise), 0, 255)
    return GrayImage(out.astype(np.uint8))


def antiforensic_pipeline(img: GrayImage, quality: int, cfg: DitherConfig = None) -> GrayImage:
    """Compress, fit every subband, dither, and synthesize the deniable image."""
    if cfg is None:
        cfg = DitherConfig()
    res = jpeg_pipeline(img, quality)
    fits = fit_all_subbands(res.levels, res.table)
    z = apply_dither(res.levels, res.table, fits, cfg)
    blocks = inverse_dct(z.coeffs, level_shift=True)
    out = assemble_blocks(BlockGrid(blocks))
    if cfg.deblock:
        noise_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=_DEBLOCK_KEY))
        out = deblock(out, strength=3, rng=noise_rng)
    return out
