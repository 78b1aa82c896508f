"""JPEG-style block codec, compression forensics, and the anti-forensic dither attack."""

__version__ = "0.1.0"

from .pixel_io import (
    BLOCK,
    BlockGrid,
    GrayImage,
    ImageFormatError,
    assemble_blocks,
    load_image,
    partition_blocks,
    save_image,
)
from .block_codec import (
    CoefficientPlane,
    JpegResult,
    QuantTable,
    QuantizedPlane,
    dequantize,
    forward_dct,
    inverse_dct,
    jpeg_pipeline,
    psnr,
    quality_to_table,
    quantize,
    zigzag_positions,
)
from .coeff_model import (
    LaplacianFit,
    SubbandHistogram,
    fit_all_subbands,
    fit_laplacian,
    subband_histogram,
)
from .anti_forensics import (
    DitherConfig,
    antiforensic_pipeline,
    apply_dither,
    deblock,
    sample_dither_nonzero,
    sample_dither_zero,
)
from .forensic_detector import (
    VERDICT_CLEAN,
    VERDICT_COMPRESSED,
    ForensicReport,
    ForgeryMap,
    StepEstimate,
    block_artifact,
    compute_bam,
    estimate_quant_step,
    estimate_quant_table,
    forgery_map,
)

__all__ = [
    "BLOCK",
    "BlockGrid",
    "CoefficientPlane",
    "DitherConfig",
    "ForensicReport",
    "ForgeryMap",
    "GrayImage",
    "ImageFormatError",
    "JpegResult",
    "LaplacianFit",
    "QuantTable",
    "QuantizedPlane",
    "StepEstimate",
    "SubbandHistogram",
    "VERDICT_CLEAN",
    "VERDICT_COMPRESSED",
    "antiforensic_pipeline",
    "apply_dither",
    "assemble_blocks",
    "block_artifact",
    "compute_bam",
    "deblock",
    "dequantize",
    "estimate_quant_step",
    "estimate_quant_table",
    "fit_all_subbands",
    "fit_laplacian",
    "forgery_map",
    "forward_dct",
    "inverse_dct",
    "jpeg_pipeline",
    "load_image",
    "partition_blocks",
    "psnr",
    "quality_to_table",
    "quantize",
    "sample_dither_nonzero",
    "sample_dither_zero",
    "save_image",
    "subband_histogram",
    "zigzag_positions",
]
