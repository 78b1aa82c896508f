"""Per-subband coefficient histograms and the quantized-data Laplacian ML fit."""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .block_codec import BLOCK, CoefficientPlane, QuantTable, QuantizedPlane
from .pixel_io import round_half_away


@dataclass
class SubbandHistogram:
    """Integer-value histogram of one subband across all blocks."""

    subband: tuple
    counts: dict
    total: int
    bin_width: int = 1

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("total does not match counts")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("negative count")


@dataclass
class LaplacianFit:
    """ML Laplacian rate for one subband, estimated from quantized data.

    The closed form uses only the zero count, nonzero count, and the sum of
    absolute dequantized values, so it is invariant to permuting observations.
    """

    subband: tuple
    lambda_ml: float
    n_total: int
    n_zero: int
    n_nonzero: int
    s_abs_sum: float
    gamma: float
    degenerate: bool = False
    reason: str = ""


def _plane_array(plane) -> np.ndarray:
    if isinstance(plane, QuantizedPlane):
        return plane.levels
    if isinstance(plane, CoefficientPlane):
        return plane.coeffs
    raise TypeError(f"expected CoefficientPlane or QuantizedPlane, got {type(plane)}")


def subband_histogram(plane, subband) -> SubbandHistogram:
    """Histogram of rounded coefficient values at one (i, j) subband."""
    i, j = subband
    if not (0 <= i < BLOCK and 0 <= j < BLOCK):
        raise ValueError(f"subband index out of range: {subband}")
    vals = _plane_array(plane)[:, :, i, j]
    ints = round_half_away(vals).astype(np.int64).ravel()
    uniq, cnt = np.unique(ints, return_counts=True)
    counts = {int(v): int(c) for v, c in zip(uniq, cnt)}
    return SubbandHistogram(subband=(i, j), counts=counts, total=int(ints.size))


def fit_laplacian(values, step, subband=None) -> LaplacianFit:
    """Closed-form ML fit of the Laplacian rate from dequantized observations.

    values are the decoder-visible dequantized coefficients (multiples of the
    step); the fit maximizes the likelihood of the implied quantizer bins.
    Degenerate data is flagged rather than raised.
    """
    y = np.asarray(values, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("cannot fit an empty subband")
    q = float(step)
    if q < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    n_zero = int(np.count_nonzero(y == 0))
    n_nonzero = int(y.size - n_zero)
    s = float(np.abs(y).sum())
    base = dict(subband=subband, lambda_ml=0.0, n_total=int(y.size),
                n_zero=n_zero, n_nonzero=n_nonzero, s_abs_sum=s, gamma=0.0)
    if n_nonzero == 0:
        return LaplacianFit(degenerate=True, reason="all-zero subband", **base)
    n = y.size
    denom = 2.0 * n * q + 4.0 * s
    radicand = (n_zero * q) ** 2 - (2.0 * n_nonzero * q - 4.0 * s) * denom
    if radicand < 0:
        return LaplacianFit(degenerate=True, reason="negative radicand", **base)
    gamma = (-n_zero * q + math.sqrt(radicand)) / denom
    base["gamma"] = gamma
    if not 0.0 < gamma < 1.0:
        return LaplacianFit(degenerate=True, reason="gamma outside (0,1)", **base)
    base["lambda_ml"] = -2.0 / q * math.log(gamma)
    return LaplacianFit(**base)


def fit_all_subbands(levels: QuantizedPlane, table: QuantTable) -> list:
    """Fit all 64 subbands from quantization levels; row-major (i*8 + j) order.

    The DC subband is flagged degenerate ("dc-model-mismatch"): the zero-mean
    Laplacian model does not describe DC statistics, so downstream dithering
    falls back to uniform bin filling there.
    """
    fits = []
    for i in range(BLOCK):
        for j in range(BLOCK):
            q = int(table.steps[i, j])
            y = (levels.levels[:, :, i, j] * q).astype(np.float64).ravel()
            fit = fit_laplacian(y, q, subband=(i, j))
            if (i, j) == (0, 0) and not fit.degenerate:
                fit.degenerate = True
                fit.reason = "dc-model-mismatch"
            fits.append(fit)
    return fits


def write_histogram_csv(hist: SubbandHistogram, directory) -> str:
    """Write value,count rows to hist_<i>_<j>.csv inside directory."""
    i, j = hist.subband
    path = os.path.join(str(directory), f"hist_{i}_{j}.csv")
    with open(path, "w") as fh:
        fh.write("value,count\n")
        for v in sorted(hist.counts):
            fh.write(f"{v},{hist.counts[v]}\n")
    return path
