"""Grayscale image I/O, luminance conversion, and 8x8 block bookkeeping."""

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

BLOCK = 8

# integer luma weights, applied with round-half-away-from-zero
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Unreadable file or unsupported pixel format."""


def round_half_away(x):
    """Round to nearest integer, ties away from zero (sign-symmetric)."""
    x = np.asarray(x, dtype=np.float64)
    return np.trunc(x + np.copysign(0.5, x))


@dataclass
class GrayImage:
    """8-bit luminance raster, pixels shaped (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if p.shape[0] < BLOCK or p.shape[1] < BLOCK:
            raise ValueError(f"image must be at least {BLOCK}x{BLOCK}, got {p.shape}")
        if p.dtype != np.uint8:
            if np.any(p < 0) or np.any(p > 255):
                raise ValueError("samples outside [0, 255]")
            p = p.astype(np.uint8)
        self.pixels = p

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class BlockGrid:
    """Row-major grid of 8x8 pixel blocks, shaped (blocks_y, blocks_x, 8, 8)."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=np.float64)
        if b.ndim != 4 or b.shape[2:] != (BLOCK, BLOCK):
            raise ValueError(f"blocks must be (by, bx, 8, 8), got {b.shape}")
        self.blocks = b

    @property
    def blocks_x(self) -> int:
        return self.blocks.shape[1]

    @property
    def blocks_y(self) -> int:
        return self.blocks.shape[0]


def rgb_to_luma(rgb) -> np.ndarray:
    """Integer luminance from an (..., 3) uint8 array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = (LUMA_WEIGHTS[0] * rgb[..., 0]
         + LUMA_WEIGHTS[1] * rgb[..., 1]
         + LUMA_WEIGHTS[2] * rgb[..., 2])
    return np.clip(round_half_away(y), 0, 255).astype(np.uint8)


def _parse_pgm(data: bytes) -> np.ndarray:
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        return data[start:pos]

    if token() != b"P5":
        raise ImageFormatError("not a binary (P5) PGM file")
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"unsupported bit depth (maxval {maxval}, want 255)")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos:pos + width * height]
    if len(payload) != width * height:
        raise ImageFormatError("PGM payload shorter than header promises")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def load_image(path) -> GrayImage:
    """Read binary PGM (P5) or 8-bit PNG; color PNG is reduced to luminance."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data[:2] == b"P5":
        pixels = _parse_pgm(data)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        img = Image.open(io.BytesIO(data))
        if img.mode == "L":
            pixels = np.asarray(img, dtype=np.uint8)
        elif img.mode == "RGB":
            pixels = rgb_to_luma(np.asarray(img))
        elif img.mode in ("I;16", "I", "I;16B"):
            raise ImageFormatError("unsupported bit depth (16-bit PNG)")
        else:
            raise ImageFormatError(f"unsupported PNG mode {img.mode}")
    else:
        raise ImageFormatError(f"{path}: not a P5 PGM or PNG file")
    try:
        return GrayImage(pixels)
    except ValueError as exc:
        raise ImageFormatError(str(exc)) from exc


def write_pgm_array(arr: np.ndarray, path) -> None:
    """Raw P5 writer for any 2-D uint8 array (no minimum size)."""
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def save_image(img: GrayImage, path) -> None:
    """Write PGM or PNG depending on the file suffix."""
    name = str(path).lower()
    if name.endswith(".pgm"):
        write_pgm_array(img.pixels, path)
    elif name.endswith(".png"):
        Image.fromarray(img.pixels, mode="L").save(path, format="PNG")
    else:
        raise ImageFormatError(f"unsupported output suffix for {path} (use .pgm or .png)")


def partition_blocks(img: GrayImage) -> BlockGrid:
    """Split into 8x8 blocks; trailing pixels past the last full block are cropped."""
    by = img.height // BLOCK
    bx = img.width // BLOCK
    cropped = img.pixels[:by * BLOCK, :bx * BLOCK].astype(np.float64)
    blocks = cropped.reshape(by, BLOCK, bx, BLOCK).swapaxes(1, 2)
    return BlockGrid(blocks)


def assemble_blocks(grid: BlockGrid) -> GrayImage:
    """Inverse of partition_blocks; rounds to integers and clips to [0, 255]."""
    by, bx = grid.blocks_y, grid.blocks_x
    flat = grid.blocks.swapaxes(1, 2).reshape(by * BLOCK, bx * BLOCK)
    pixels = np.clip(round_half_away(flat), 0, 255).astype(np.uint8)
    return GrayImage(pixels)
