"""dct-shield command line: compress, antiforensic, detect, forge-demo, evaluate."""

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .anti_forensics import DitherConfig, antiforensic_pipeline
from .block_codec import jpeg_pipeline, psnr, quality_to_table, write_coeff_csv
from .forensic_detector import (
    VERDICT_CLEAN,
    VERDICT_COMPRESSED,
    compute_bam,
    estimate_quant_table,
    forgery_map,
    save_report_json,
    transform_grid,
    write_forgery_csv,
    write_forgery_heatmap,
)
from .pixel_io import GrayImage, ImageFormatError, load_image, partition_blocks, save_image

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

THREADS_ENV = "DCT_SHIELD_THREADS"


@dataclass
class RunManifest:
    """Reproducibility record written beside every output artifact."""

    command: str
    inputs: list
    quality: object = None
    seed: object = None
    flags: dict = field(default_factory=dict)
    tool_version: str = __version__
    timestamp: str = ""

    def write(self, artifact_path) -> str:
        self.timestamp = datetime.now(timezone.utc).isoformat()
        path = str(artifact_path) + ".manifest.json"
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")
        return path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(Exception):
    pass


def _default_out(input_path, tag: str) -> str:
    p = Path(input_path)
    return str(p.with_name(f"{p.stem}.{tag}{p.suffix}"))


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_compress(args) -> int:
    img = load_image(args.input)
    res = jpeg_pipeline(img, args.quality)
    out = args.out or _default_out(args.input, f"q{args.quality}")
    save_image(res.decompressed, out)
    if args.dump_coeffs is not None:
        dump = args.dump_coeffs or out + ".coeffs.csv"
        write_coeff_csv(res.levels, dump)
    RunManifest("compress", [str(args.input)], quality=args.quality,
                flags={"dump_coeffs": args.dump_coeffs}).write(out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_antiforensic(args) -> int:
    img = load_image(args.input)
    cfg = DitherConfig(seed=args.seed, deblock=not args.no_deblock,
                       dc_fallback=args.dc_fallback)
    out_img = antiforensic_pipeline(img, args.quality, cfg)
    out = args.out or _default_out(args.input, f"af{args.quality}")
    save_image(out_img, out)
    if args.dump_coeffs is not None:
        from .anti_forensics import apply_dither
        from .coeff_model import fit_all_subbands
        res = jpeg_pipeline(img, args.quality)
        z = apply_dither(res.levels, res.table, fit_all_subbands(res.levels, res.table), cfg)
        write_coeff_csv(z, args.dump_coeffs or out + ".coeffs.csv")
    RunManifest("antiforensic", [str(args.input)], quality=args.quality, seed=args.seed,
                flags={"deblock": not args.no_deblock, "dc_fallback": args.dc_fallback,
                       "dump_coeffs": args.dump_coeffs}).write(out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    img = load_image(args.input)
    report = compute_bam(img, threshold=args.threshold)
    print(f"bam={report.bam:.6f} threshold={report.threshold_used} verdict={report.verdict}")
    if args.report:
        save_report_json(report, args.report)
        RunManifest("detect", [str(args.input)],
                    flags={"threshold": args.threshold}).write(args.report)
    return EXIT_OK


def _flag_decision(fmap) -> dict:
    n_blocks = fmap.b_grid.size
    flagged_count = int(fmap.flagged.sum())
    is_forged = flagged_count >= max(3, 0.002 * n_blocks)
    return {
        "n_blocks": int(n_blocks),
        "flagged_blocks": flagged_count,
        "inconsistency": fmap.inconsistency,
        "flagged_as_forged": bool(is_forged),
    }


def cmd_forge_demo(args) -> int:
    bg = load_image(args.background)
    patch = load_image(args.patch)
    bg_c = jpeg_pipeline(bg, args.quality_bg).decompressed
    patch_c = jpeg_pipeline(patch, args.quality_patch).decompressed
    ph, pw = patch_c.pixels.shape
    bh, bw = bg_c.pixels.shape
    if args.y + ph > bh or args.x + pw > bw:
        raise UsageError(f"patch {pw}x{ph} at ({args.x},{args.y}) exceeds background {bw}x{bh}")
    composite = bg_c.pixels.copy()
    composite[args.y:args.y + ph, args.x:args.x + pw] = patch_c.pixels
    image = GrayImage(composite)
    if args.conceal:
        cfg = DitherConfig(seed=args.seed)
        image = antiforensic_pipeline(image, args.quality_bg, cfg)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    out_img = outdir / "composite.pgm"
    save_image(image, out_img)
    fmap = forgery_map(image)
    write_forgery_csv(fmap, outdir / "forgery_map.csv")
    write_forgery_heatmap(fmap, outdir / "forgery_map.pgm")
    summary = _flag_decision(fmap)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    RunManifest("forge-demo", [str(args.background), str(args.patch)],
                quality={"background": args.quality_bg, "patch": args.quality_patch},
                seed=args.seed,
                flags={"x": args.x, "y": args.y, "conceal": args.conceal}).write(out_img)
    print(f"forged={summary['flagged_as_forged']} flagged_blocks={summary['flagged_blocks']} "
          f"inconsistency={summary['inconsistency']:.3f}")
    return EXIT_OK


def _evaluate_one(path, quality, seed):
    img = load_image(path)
    true_table = quality_to_table(quality)
    res = jpeg_pipeline(img, quality)
    report_jpeg = compute_bam(res.decompressed)
    attack = antiforensic_pipeline(img, quality, DitherConfig(seed=seed))
    report_attack = compute_bam(attack)
    h, w = attack.pixels.shape
    cropped = GrayImage(img.pixels[:h, :w])
    est_table, _ = estimate_quant_table(transform_grid(partition_blocks(res.decompressed)))
    recovery = float(np.mean(est_table.steps == true_table.steps))
    p = psnr(cropped, attack)
    return {
        "image": Path(path).name,
        "quality": quality,
        "seed": seed,
        "bam_jpeg": f"{report_jpeg.bam:.6f}",
        "bam_attack": f"{report_attack.bam:.6f}",
        "psnr_attack": "inf" if math.isinf(p) else f"{p:.3f}",
        "table_recovery_rate": f"{recovery:.4f}",
        "verdict_jpeg": report_jpeg.verdict,
        "verdict_attack": report_attack.verdict,
    }


EVALUATE_COLUMNS = ["image", "quality", "seed", "bam_jpeg", "bam_attack",
                    "psnr_attack", "table_recovery_rate", "verdict_jpeg", "verdict_attack"]


def _thread_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return min(4, os.cpu_count() or 1)


def cmd_evaluate(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise ImageFormatError(f"{corpus} is not a directory")
    images = sorted(p for p in corpus.iterdir()
                    if p.suffix.lower() in (".pgm", ".png"))
    if not images:
        raise ImageFormatError(f"no .pgm/.png images in {corpus}")
    jobs = [(str(p), q, s) for p in images for q in args.qualities for s in args.seeds]
    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda j: _evaluate_one(*j), jobs))
    else:
        rows = [_evaluate_one(*j) for j in jobs]
    rows.sort(key=lambda r: (r["image"], r["quality"], r["seed"]))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVALUATE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    RunManifest("evaluate", [str(p) for p in images],
                quality=args.qualities, seed=args.seeds,
                flags={"threads": workers}).write(args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="dct-shield",
                     description="JPEG-style codec, compression forensics, and the dither attack")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="lossy-compress and decompress an image")
    p.add_argument("input")
    p.add_argument("--quality", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--dump-coeffs", nargs="?", const="", default=None,
                   help="write quantization levels as CSV (optional path)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("antiforensic", help="compress with compression fingerprints erased")
    p.add_argument("input")
    p.add_argument("--quality", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-deblock", action="store_true")
    p.add_argument("--dc-fallback", choices=["uniform", "none"], default="uniform")
    p.add_argument("--out")
    p.add_argument("--dump-coeffs", nargs="?", const="", default=None,
                   help="write dithered coefficients as CSV (optional path)")
    p.set_defaults(func=cmd_antiforensic)

    p = sub.add_parser("detect", help="estimate the table and blocking artifact measure")
    p.add_argument("input")
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("forge-demo", help="cut-and-paste forgery with optional concealment")
    p.add_argument("background")
    p.add_argument("patch")
    p.add_argument("x", type=int)
    p.add_argument("y", type=int)
    p.add_argument("--quality-bg", type=int, default=75)
    p.add_argument("--quality-patch", type=int, default=40)
    p.add_argument("--conceal", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="forge_demo")
    p.set_defaults(func=cmd_forge_demo)

    p = sub.add_parser("evaluate", help="batch detector-vs-attacker metrics over a corpus")
    p.add_argument("corpus")
    p.add_argument("--qualities", type=_int_list, default=[50, 75, 90])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--out", default="results.csv")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
