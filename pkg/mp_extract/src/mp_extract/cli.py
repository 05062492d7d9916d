"""Command line entry point: one video in, one LMK1 stream out."""

import argparse
import sys

from .errors import MpExtractError
from .extract import ExtractionJob, extract


def main(argv=None, source=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mp_extract",
        description="Extract holistic landmarks from a dataset video into "
        "an LMK1 stream plus JSON sidecar.",
    )
    parser.add_argument("--video", required=True, help="video file, named <signer><word><camera>.<ext>")
    parser.add_argument("--annotation", required=True, help="trial annotation file for hand/fps lookup")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--min-confidence",
        type=float,
        default=0.5,
        help="detector confidence threshold (default 0.5)",
    )
    args = parser.parse_args(argv)
    try:
        job = ExtractionJob.from_annotation(
            args.video, args.annotation, args.out, args.min_confidence
        )
        out_path = extract(job, source=source)
    except MpExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
