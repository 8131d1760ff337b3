"""capture: record top-k KV selection traces from a host model.

    capture --model ref-tiny --seed 7 --k 4 --steps 8 --out trace.dsat
"""

from __future__ import annotations

import argparse
import sys

from .capture import CaptureConfig, UnsupportedModelError, attach_and_capture


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="capture", description=__doc__)
    parser.add_argument("--model", required=True,
                        help="model identifier (ref-tiny)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--k", type=int, required=True, help="top-k budget")
    parser.add_argument("--steps", type=int, required=True,
                        help="decode steps to capture")
    parser.add_argument("--out", required=True, help="output trace file")
    parser.add_argument("--prefill", type=int, default=16)
    parser.add_argument("--layers", default=None,
                        help="comma list of layers to observe (default: all)")
    parser.add_argument("--score-dump", default=None,
                        help="also write a JSON dump of scores and tensors")
    args = parser.parse_args(argv)

    layers = None
    if args.layers:
        layers = tuple(int(x) for x in args.layers.split(","))
    config = CaptureConfig(model=args.model, top_k=args.k, out_path=args.out,
                           max_steps=args.steps, prefill_len=args.prefill,
                           seed=args.seed, layers=layers,
                           score_dump_path=args.score_dump)
    try:
        path = attach_and_capture(config)
    except UnsupportedModelError as exc:
        print(f"capture: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"capture: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"capture: i/o error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
