"""CLI: export hidden states into a SEGREP1 directory.

Exit code 0 when every manifest entry was extracted, 1 when any file failed
(the rest are still written) or the job itself is invalid.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .extract import ExtractJob, extract


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="segrep-extract",
        description="Export per-layer hidden states from a pretrained speech "
                    "encoder into a SEGREP1 directory.",
    )
    parser.add_argument("--model", required=True,
                        help="checkpoint identifier or local path")
    parser.add_argument("--audio-manifest", required=True,
                        help="delimited text: utterance_id<TAB>wav_path")
    parser.add_argument("--output", required=True, help="SEGREP1 directory to write")
    parser.add_argument("--layers", default=None,
                        help="comma-separated hidden-state indices (default: all)")
    parser.add_argument("--sample-rate", type=int, default=16000)
    parser.add_argument("--no-normalize", action="store_true",
                        help="skip per-utterance input normalization")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    layers = None
    if args.layers:
        layers = [int(x) for x in args.layers.split(",")]
    try:
        job = ExtractJob(
            model_id=args.model,
            audio_manifest=Path(args.audio_manifest),
            output_dir=Path(args.output),
            layers=layers,
            sample_rate=args.sample_rate,
            normalize=not args.no_normalize,
            device=args.device,
        )
        result = extract(job)
    except Exception as e:
        logging.getLogger("segrep_extractor").error("%s", e)
        return 1
    if result.failed:
        for utt, reason in result.failed.items():
            logging.getLogger("segrep_extractor").error("failed %s: %s", utt, reason)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
