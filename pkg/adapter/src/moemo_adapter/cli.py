"""Command-line surface mirroring AdapterConfig.

  moemo-adapter export-keypoints FRAMES --out clip.mokp [--fps 30] ...
  moemo-adapter export-context   FRAMES --out clip.mocx ...

Exit codes: 0 success, 1 adapter/config error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import AdapterConfig, AdapterError
from .export import export_context, export_keypoints


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moemo-adapter")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("export-keypoints", "export-context"):
        p = sub.add_parser(name)
        p.add_argument("frames", help="video file or directory of image frames")
        p.add_argument("--out", required=True)
        p.add_argument("--clip-id", default=None, dest="clip_id")
        p.add_argument("--fps", type=float, default=30.0)
        p.add_argument("--target-hz", type=float, default=4.0, dest="target_hz")
        p.add_argument("--on-corrupt", choices=("abort", "skip"), default="abort", dest="on_corrupt")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(
            frames=Path(args.frames), source_fps=args.fps,
            target_hz=args.target_hz, on_corrupt=args.on_corrupt,
        )
        if args.command == "export-keypoints":
            path = export_keypoints(config, Path(args.out), clip_id=args.clip_id)
        else:
            path = export_context(config, Path(args.out), clip_id=args.clip_id)
        print(path)
        return 0
    except (AdapterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
