"""Command line entry point for the oracle sidecar."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ServiceConfig
from .server import serve


def _parse_color(text: str) -> tuple[float, float, float]:
    parts = tuple(float(c) for c in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected R,G,B")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="oracle-service",
        description="Inference sidecar speaking the texturing oracle "
                    "protocol (newline-delimited JSON).",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--mode", choices=("stub", "real"), default="stub",
                   help="stub answers analytically; real loads a plugin")
    io_group = p.add_mutually_exclusive_group()
    io_group.add_argument("--port", type=int, default=None,
                          help="TCP port (0 picks one and prints it)")
    io_group.add_argument("--stdio", action="store_true",
                          help="serve one session on stdin/stdout")
    p.add_argument("--host", default="127.0.0.1", help="TCP bind address")
    p.add_argument("--target-color", type=_parse_color, default=(1.0, 0.0, 0.0),
                   metavar="R,G,B",
                   help="stub noise target as a constant color")
    p.add_argument("--target-image", default=None,
                   help="stub noise target as a PNG (overrides the color)")
    p.add_argument("--plugin", default=None, metavar="MODULE:ATTR",
                   help="real-mode backend factory")
    p.add_argument("--segmenter", default=None,
                   help="segmentation model identifier or path (plugin-defined)")
    p.add_argument("--denoiser", default=None,
                   help="noise model identifier or path (plugin-defined)")
    p.add_argument("--asset", action="append", default=[], dest="assets",
                   metavar="PATH", help="asset path checked at startup")
    p.add_argument("--device", default="cpu", help="compute device hint")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ServiceConfig(
            mode=args.mode, host=args.host, port=args.port, stdio=args.stdio,
            target_color=args.target_color, target_image=args.target_image,
            plugin=args.plugin, segmenter=args.segmenter,
            denoiser=args.denoiser, device=args.device,
            asset_paths=tuple(args.assets))
        config.validate_assets()
        serve(config)
    except ConfigError as exc:
        print(f"oracle-service: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
