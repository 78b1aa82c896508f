"""JPEG-style transform codec: 8x8 DCT, quality-scaled tables, zigzag, PSNR."""

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .pixel_io import (
    BLOCK,
    BlockGrid,
    GrayImage,
    assemble_blocks,
    partition_blocks,
    round_half_away,
)


def _dct_basis() -> np.ndarray:
    # orthonormal DCT-II rows: T[i, x] = s(i) cos((2x+1) i pi / 16)
    t = np.empty((BLOCK, BLOCK))
    for i in range(BLOCK):
        s = math.sqrt(1.0 / BLOCK) if i == 0 else math.sqrt(2.0 / BLOCK)
        for x in range(BLOCK):
            t[i, x] = s * math.cos((2 * x + 1) * i * math.pi / (2 * BLOCK))
    return t


_T = _dct_basis()

# JPEG Annex K reference luminance table (quality 50 baseline)
BASE_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)


@dataclass
class QuantTable:
    """8x8 integer quantization steps, every entry >= 1."""

    steps: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.steps)
        if s.shape != (BLOCK, BLOCK):
            raise ValueError(f"steps must be 8x8, got {s.shape}")
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise ValueError("steps must be integers")
            s = s.astype(np.int64)
        if np.any(s < 1):
            raise ValueError("every quantization step must be >= 1")
        self.steps = s.astype(np.int64)


@dataclass
class CoefficientPlane:
    """Real DCT coefficients per block, shaped (blocks_y, blocks_x, 8, 8)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 4 or c.shape[2:] != (BLOCK, BLOCK):
            raise ValueError(f"coeffs must be (by, bx, 8, 8), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        self.coeffs = c

    @property
    def blocks_x(self) -> int:
        return self.coeffs.shape[1]

    @property
    def blocks_y(self) -> int:
        return self.coeffs.shape[0]


@dataclass
class QuantizedPlane:
    """Integer quantization levels per block, same shape as CoefficientPlane."""

    levels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.levels)
        if v.ndim != 4 or v.shape[2:] != (BLOCK, BLOCK):
            raise ValueError(f"levels must be (by, bx, 8, 8), got {v.shape}")
        if not np.issubdtype(v.dtype, np.integer):
            if not np.all(v == np.round(v)):
                raise ValueError("levels must be integers")
        self.levels = v.astype(np.int64)

    @property
    def blocks_x(self) -> int:
        return self.levels.shape[1]

    @property
    def blocks_y(self) -> int:
        return self.levels.shape[0]


def forward_dct(block, level_shift: bool = True) -> np.ndarray:
    """2-D DCT of one or more 8x8 blocks (any (..., 8, 8) array).

    With level_shift the transform is applied to pixel values minus 128,
    the convention used everywhere else in this package.
    """
    b = np.asarray(block, dtype=np.float64)
    if level_shift:
        b = b - 128.0
    return _T @ b @ _T.T


def inverse_dct(coeffs, level_shift: bool = True) -> np.ndarray:
    """Exact inverse of forward_dct. No rounding or clipping is done here."""
    c = np.asarray(coeffs, dtype=np.float64)
    b = _T.T @ c @ _T
    if level_shift:
        b = b + 128.0
    return b


def quality_to_table(quality: int) -> QuantTable:
    """Scale the reference luminance table by the conventional quality rule."""
    q = int(quality)
    if q != quality or not 1 <= q <= 100:
        raise ValueError(f"quality must be an integer in 1..100, got {quality!r}")
    scale = 5000 // q if q < 50 else 200 - 2 * q
    steps = (BASE_LUMA_TABLE * scale + 50) // 100
    return QuantTable(np.clip(steps, 1, 255))


def quantize(plane: CoefficientPlane, table: QuantTable) -> QuantizedPlane:
    """X' = round(X / Q), ties away from zero."""
    levels = round_half_away(plane.coeffs / table.steps)
    return QuantizedPlane(levels.astype(np.int64))


def dequantize(qplane: QuantizedPlane, table: QuantTable) -> CoefficientPlane:
    """Y = Q * X'; every output lies exactly on its step lattice."""
    return CoefficientPlane((qplane.levels * table.steps).astype(np.float64))


def zigzag_positions() -> list:
    """The 64 subband indices (i, j) in serpentine anti-diagonal order."""
    out = []
    for d in range(2 * BLOCK - 1):
        lo = max(0, d - (BLOCK - 1))
        hi = min(d, BLOCK - 1)
        rng = range(hi, lo - 1, -1) if d % 2 == 0 else range(lo, hi + 1)
        out.extend((i, d - i) for i in rng)
    return out


_ZIGZAG = zigzag_positions()
_ZIG_I = np.array([p[0] for p in _ZIGZAG])
_ZIG_J = np.array([p[1] for p in _ZIGZAG])


def zigzag_flatten(arr) -> np.ndarray:
    """Reorder the last two (8, 8) axes into a length-64 zigzag axis."""
    a = np.asarray(arr)
    return a[..., _ZIG_I, _ZIG_J]


class JpegResult(NamedTuple):
    decompressed: GrayImage
    levels: QuantizedPlane
    table: QuantTable


def transform_grid(grid: BlockGrid, level_shift: bool = True) -> CoefficientPlane:
    """Forward DCT of every block in a grid."""
    return CoefficientPlane(forward_dct(grid.blocks, level_shift=level_shift))


def jpeg_pipeline(img: GrayImage, quality: int, level_shift: bool = True) -> JpegResult:
    """Compress and immediately decompress, keeping the coefficient-domain state."""
    table = quality_to_table(quality)
    grid = partition_blocks(img)
    plane = transform_grid(grid, level_shift=level_shift)
    levels = quantize(plane, table)
    recon = inverse_dct(dequantize(levels, table).coeffs, level_shift=level_shift)
    decompressed = assemble_blocks(BlockGrid(recon))
    return JpegResult(decompressed, levels, table)


def psnr(a: GrayImage, b: GrayImage) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"dimension mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


COEFF_CSV_HEADER = ["block_x", "block_y", "i", "j", "level"]


def write_coeff_csv(plane, path) -> None:
    """Dump per-coefficient values as block_x,block_y,i,j,level rows.

    Accepts a QuantizedPlane (integer levels) or CoefficientPlane (real values).
    """
    arr = plane.levels if isinstance(plane, QuantizedPlane) else plane.coeffs
    by, bx = arr.shape[:2]
    is_int = np.issubdtype(arr.dtype, np.integer)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COEFF_CSV_HEADER)
        for yb in range(by):
            for xb in range(bx):
                block = arr[yb, xb]
                for i in range(BLOCK):
                    for j in range(BLOCK):
                        v = block[i, j]
                        w.writerow([xb, yb, i, j, int(v) if is_int else f"{v:.17g}"])


def read_coeff_csv(path) -> np.ndarray:
    """Read a coefficient dump back into a (by, bx, 8, 8) float array."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != COEFF_CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for rec in r:
            rows.append((int(rec[0]), int(rec[1]), int(rec[2]), int(rec[3]), float(rec[4])))
    bx = max(r[0] for r in rows) + 1
    by = max(r[1] for r in rows) + 1
    out = np.zeros((by, bx, BLOCK, BLOCK))
    for xb, yb, i, j, v in rows:
        out[yb, xb, i, j] = v
    return out


def write_coeff_bin(qplane: QuantizedPlane, path) -> None:
    """Binary dump: little-endian int32, block row-major then subband row-major."""
    arr = np.ascontiguousarray(qplane.levels, dtype="<i4")
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())


def read_coeff_bin(path, blocks_x: int, blocks_y: int) -> QuantizedPlane:
    with open(path, "rb") as fh:
        raw = fh.read()
    arr = np.frombuffer(raw, dtype="<i4")
    expected = blocks_x * blocks_y * BLOCK * BLOCK
    if arr.size != expected:
        raise ValueError(f"binary dump holds {arr.size} values, expected {expected}")
    return QuantizedPlane(arr.reshape(blocks_y, blocks_x, BLOCK, BLOCK).astype(np.int64))
