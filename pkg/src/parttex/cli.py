"""Command-line pipeline driver.

Subcommands map one-to-one onto pipeline stages:

    render        rasterize normal/label/color/depth maps for a view rig
    segment-vote  2D label maps -> voted per-vertex part labels
    texture       optimize the surface color field, bake vertex colors
    metrics       compare a reconstruction against ground truth
    decompose     split a labeled mesh into per-part meshes
    oracle-check  probe an oracle endpoint for protocol conformance

Exit codes: 0 success, 2 usage error (bad flag/arguments), 3 missing
input file, 4 oracle unreachable or failing, 5 invalid data (format or
contract violation), 1 unexpected internal error. Errors are reported as
one JSON object per line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import (ContractError, MeshFormatError, MeshValidationError,
                     OptimizationError, OracleError, PartTexError)
from .field import ColorField, FieldConfig, save_field
from .images import load_image, save_depth, save_image, save_label_map
from .mesh import PartLabel, compute_vertex_normals, extract_part
from .meshio import load_mesh, save_mesh
from .metrics import DEFAULT_P2S_SAMPLES, compare_meshes
from .oracle import (OracleClient, RecordingEndpoint, RemoteScoreModel,
                     OracleLabelSource, endpoint_from_spec)
from .raster import encode_normal_map, rasterize, render_colors, render_labels
from .sds import (DeltaScore, SdsConfig, load_sds_config, optimize)
from .views import frame_views, sample_viewpoints
from .voting import DirectoryLabelSource, segment_surface

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_ORACLE = 4
EXIT_INVALID_DATA = 5

_NAMED_COLORS = {
    "red": (1.0, 0.0, 0.0), "green": (0.0, 1.0, 0.0), "blue": (0.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0), "black": (0.0, 0.0, 0.0), "gray": (0.5, 0.5, 0.5),
}


def _err(message: str, code: int) -> int:
    print(json.dumps({"error": message, "exit_code": code}), file=sys.stderr)
    return code


def _info(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), file=sys.stderr)


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    return p


def _load_mesh_with_normals(path: str):
    mesh = load_mesh(_require_file(path))
    if mesh.vertex_normals is None:
        _info(event="computing_normals", mesh=str(path))
        mesh = compute_vertex_normals(mesh)
    return mesh


def _rig(args, mesh):
    views = sample_viewpoints(args.views, seed=args.seed)
    return frame_views(views, mesh, resolution=args.resolution)


def _effective_threads(args) -> int:
    if getattr(args, "deterministic", False):
        return 1
    return max(1, getattr(args, "threads", 1))


# --- subcommands -------------------------------------------------------------

def _cmd_render(args) -> int:
    mesh = _load_mesh_with_normals(args.mesh)
    views = _rig(args, mesh)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.labels and mesh.vertex_labels is None:
        raise ContractError("--labels requires a mesh with part_label")
    if args.colors and mesh.vertex_colors is None:
        raise ContractError("--colors requires a mesh with vertex colors")

    def render_one(item):
        i, view = item
        buffers = rasterize(mesh, view)
        save_image(out / f"normal_{i:03d}.png", encode_normal_map(buffers))
        if args.labels:
            save_label_map(out / f"label_{i:03d}.png",
                           render_labels(mesh, view, buffers=buffers))
        if args.colors:
            image, _ = render_colors(mesh, mesh.vertex_colors, view,
                                     buffers=buffers)
            save_image(out / f"color_{i:03d}.png", image)
        if args.depth:
            save_depth(out / f"depth_{i:03d}.dpt", buffers.depth)

    threads = _effective_threads(args)
    items = list(enumerate(views))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(render_one, items))
    else:
        for item in items:
            render_one(item)
    with open(out / "views.json", "w", encoding="utf-8") as fh:
        json.dump([v.to_json() for v in views], fh, indent=2, sort_keys=True)
        fh.write("\n")
    _info(event="rendered", views=len(views), out_dir=str(out))
    return EXIT_OK


def _make_label_source(args, record_path=None):
    """Returns (source, closer)."""
    if args.labels_dir:
        directory = Path(args.labels_dir)
        if not directory.is_dir():
            raise FileNotFoundError(f"label directory not found: {directory}")
        return DirectoryLabelSource(directory, pattern=args.pattern), None
    endpoint = endpoint_from_spec(args.oracle, timeout=args.timeout)
    if record_path:
        endpoint = RecordingEndpoint(endpoint, record_path)
    client = OracleClient(endpoint)
    return OracleLabelSource(client), client


def _cmd_segment_vote(args) -> int:
    if bool(args.labels_dir) == bool(args.oracle):
        raise ContractError("give exactly one of --labels-dir or --oracle")
    mesh = _load_mesh_with_normals(args.mesh)
    views = _rig(args, mesh)
    source, closer = _make_label_source(args, record_path=args.record)
    try:
        labeled, field = segment_surface(mesh, views, source,
                                         threads=_effective_threads(args))
    finally:
        if closer is not None:
            closer.close()
    save_mesh(labeled, args.out)
    _info(event="segmented", out=str(args.out),
          voted=float((field.confidence > 0).mean()),
          mean_confidence=float(field.confidence.mean()))
    return EXIT_OK


def _make_score(spec: str, resolution: int, timeout: float,
                record_path=None):
    """Returns (score_model, closer). delta:* is computed locally."""
    if spec.startswith("delta:"):
        what = spec[len("delta:"):]
        if what in _NAMED_COLORS:
            target = np.broadcast_to(
                np.asarray(_NAMED_COLORS[what]),
                (resolution, resolution, 3)).copy()
        elif what.startswith("#") and len(what) == 7:
            rgb = tuple(int(what[k:k + 2], 16) / 255.0 for k in (1, 3, 5))
            target = np.broadcast_to(
                np.asarray(rgb), (resolution, resolution, 3)).copy()
        else:
            target = load_image(_require_file(what))
            if target.shape != (resolution, resolution, 3):
                raise ContractError(
                    f"score target image is {target.shape[:2]}, render "
                    f"resolution is {resolution}")
        return DeltaScore(target), None
    endpoint = endpoint_from_spec(spec, timeout=timeout)
    if record_path:
        endpoint = RecordingEndpoint(endpoint, record_path)
    client = OracleClient(endpoint)
    return RemoteScoreModel(client), client


def _texture_config(args) -> SdsConfig:
    if args.config:
        config = load_sds_config(_require_file(args.config))
    else:
        config = SdsConfig()
    overrides = {}
    for key in ("steps", "batch", "cfg_scale", "lr", "seed", "sds_weight",
                "recon_weight"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.t_min is not None or args.t_max is not None:
        t_min = args.t_min if args.t_min is not None else config.t_range[0]
        t_max = args.t_max if args.t_max is not None else config.t_range[1]
        overrides["t_range"] = (t_min, t_max)
    if overrides:
        config = SdsConfig.from_json({**config.to_json(), **{
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in overrides.items()}})
    return config


def _cmd_texture(args) -> int:
    config = _texture_config(args)
    if args.seed is None:
        args.seed = config.seed
    if args.dump_config:
        snapshot = dict(config.to_json())
        snapshot["views"] = args.views
        snapshot["resolution"] = args.resolution
        print(json.dumps(snapshot, indent=2, sort_keys=True))
        return EXIT_OK
    mesh = _load_mesh_with_normals(args.mesh)
    if mesh.vertex_labels is None:
        raise ContractError("texture requires a part-labeled mesh; run "
                            "segment-vote first")
    views = _rig(args, mesh)
    front_image = front_mask = None
    if args.front_image:
        front_image = load_image(_require_file(args.front_image))
        res = views[0].resolution
        if front_image.shape != (res, res, 3):
            raise ContractError(
                f"front image is {front_image.shape[:2]}, render resolution "
                f"is {res}")
        front_mask = rasterize(mesh, views[0]).mask
    score = closer = None
    if config.sds_weight != 0.0:
        if not args.score:
            raise ContractError("texture needs --score unless the "
                                "score-distillation weight is 0")
        score, closer = _make_score(args.score, args.resolution,
                                    args.timeout, record_path=args.record)
    elif args.score:
        _info(event="score_ignored", reason="sds_weight is 0")
    try:
        field = ColorField(FieldConfig(), seed=config.seed)
        result = optimize(mesh, field, score, config, views,
                          front_image=front_image, front_mask=front_mask,
                          log_path=args.log)
    finally:
        if closer is not None:
            closer.close()
    save_mesh(result.mesh, args.out)
    if args.checkpoint:
        save_field(args.checkpoint, result.field)
        meta = {"steps": config.steps, "seed": config.seed,
                "final_lr": config.lr * config.lr_decay ** max(
                    0, config.steps - 1),
                "config": config.to_json()}
        with open(str(args.checkpoint) + ".json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _info(event="textured", out=str(args.out), steps=config.steps)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    pred = load_mesh(_require_file(args.pred))
    gt = load_mesh(_require_file(args.gt))
    report = compare_meshes(pred, gt, n_samples=args.samples, seed=args.seed,
                            resolution=args.resolution)
    text = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if args.out:
        report.save(args.out)
        _info(event="report_written", out=str(args.out))
    else:
        print(text)
    return EXIT_OK


def _cmd_decompose(args) -> int:
    mesh = load_mesh(_require_file(args.mesh))
    if mesh.vertex_labels is None:
        raise ContractError("decompose requires a mesh with part_label")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for code in PartLabel:
        if code == PartLabel.BACKGROUND:
            continue
        part = extract_part(mesh, code)
        if part.n_faces == 0:
            continue
        path = out / f"{code.name.lower().replace('_', '-')}.ply"
        save_mesh(part, path)
        written[code.name.lower()] = {
            "path": str(path), "vertices": part.n_vertices,
            "faces": part.n_faces,
        }
    print(json.dumps({"parts": written}, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    endpoint = endpoint_from_spec(args.oracle, timeout=args.timeout)
    checks = {}
    with OracleClient(endpoint) as client:
        client.ping()
        checks["ping"] = "ok"
        probe = np.full((16, 16, 3), 128, dtype=np.uint8)
        labels = client.segment(probe, front=False)
        checks["segment"] = f"ok ({int(labels.max())} max code)"
        x = np.full((8, 8, 3), 0.5)
        noise = client.predict_noise(x, 0.5)
        checks["predict_noise"] = f"ok (shape {list(noise.shape)})"
    print(json.dumps({"oracle": args.oracle, "checks": checks},
                     indent=2, sort_keys=True))
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

def _add_common(p, views_default=30, resolution_default=512):
    p.add_argument("--views", type=int, default=views_default,
                   help="number of viewpoints on the sphere")
    p.add_argument("--resolution", type=int, default=resolution_default,
                   help="square render resolution in pixels")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for per-view work")
    p.add_argument("--deterministic", action="store_true",
                   help="force serial execution regardless of --threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parttex",
        description="Part-guided mesh texturing pipeline",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("render", help="rasterize maps for a view rig",
                       formatter_class=fmt)
    p.add_argument("--mesh", required=True, help="input mesh (.ply/.obj)")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--labels", action="store_true",
                   help="also write label maps (needs part_label)")
    p.add_argument("--colors", action="store_true",
                   help="also write color renders (needs vertex colors)")
    p.add_argument("--depth", action="store_true",
                   help="also write depth buffers (.dpt)")
    _add_common(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("segment-vote",
                       help="vote per-vertex part labels from 2D label maps",
                       formatter_class=fmt)
    p.add_argument("--mesh", required=True, help="textureless mesh")
    p.add_argument("--labels-dir",
                   help="directory of per-view label PNGs")
    p.add_argument("--pattern", default="label_{index:03d}.png",
                   help="filename pattern inside --labels-dir")
    p.add_argument("--oracle",
                   help="oracle endpoint (tcp:HOST:PORT | spawn:CMD... | "
                        "replay:TRANSCRIPT)")
    p.add_argument("--out", default="m_part.ply",
                   help="output labeled mesh path")
    p.add_argument("--record", help="record oracle traffic to this transcript")
    p.add_argument("--timeout", type=float, default=120.0,
                   help="oracle timeout in seconds")
    _add_common(p)
    p.set_defaults(func=_cmd_segment_vote)

    p = sub.add_parser("texture", help="optimize the surface color field",
                       formatter_class=fmt)
    p.add_argument("--mesh", required=True, help="part-labeled mesh")
    p.add_argument("--score", default=None,
                   help="score model: delta:COLOR | delta:IMAGE.png | "
                        "tcp:HOST:PORT | spawn:CMD... | replay:TRANSCRIPT")
    p.add_argument("--front-image", help="front-view reference image (PNG)")
    p.add_argument("--out", default="m_tex.ply", help="output textured mesh")
    p.add_argument("--checkpoint", help="also write the color field (.cfld)")
    p.add_argument("--log", help="progress log path (JSON lines)")
    p.add_argument("--config", help="SdsConfig JSON file")
    p.add_argument("--steps", type=int, default=None,
                   help="optimization steps (default 4000)")
    p.add_argument("--batch", type=int, default=None,
                   help="views per step (default 4)")
    p.add_argument("--cfg-scale", dest="cfg_scale", type=float, default=None,
                   help="classifier-free guidance scale (default 100)")
    p.add_argument("--t-min", dest="t_min", type=float, default=None,
                   help="lower noise-level bound (default 0.02)")
    p.add_argument("--t-max", dest="t_max", type=float, default=None,
                   help="upper noise-level bound (default 0.98)")
    p.add_argument("--lr", type=float, default=None,
                   help="initial learning rate (default 0.01)")
    p.add_argument("--sds-weight", dest="sds_weight", type=float,
                   default=None, help="score-distillation weight (default 1)")
    p.add_argument("--recon-weight", dest="recon_weight", type=float,
                   default=None, help="reconstruction weight (default 1)")
    p.add_argument("--record", help="record oracle traffic to this transcript")
    p.add_argument("--timeout", type=float, default=120.0,
                   help="oracle timeout in seconds")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration and exit")
    _add_common(p)
    p.set_defaults(func=_cmd_texture, seed=None)

    p = sub.add_parser("metrics", help="evaluate a mesh against ground truth",
                       formatter_class=fmt)
    p.add_argument("--pred", required=True, help="reconstructed mesh")
    p.add_argument("--gt", required=True, help="ground-truth mesh")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--samples", type=int, default=DEFAULT_P2S_SAMPLES,
                   help="surface sample count for P2S/CD")
    p.add_argument("--resolution", type=int, default=512,
                   help="render resolution for IoU/PSNR views")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("decompose", help="split a labeled mesh into parts",
                       formatter_class=fmt)
    p.add_argument("--mesh", required=True, help="labeled mesh")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("oracle-check", help="probe an oracle endpoint",
                       formatter_class=fmt)
    p.add_argument("--oracle", required=True,
                   help="endpoint (tcp:HOST:PORT | spawn:CMD... | "
                        "replay:TRANSCRIPT)")
    p.add_argument("--timeout", type=float, default=120.0,
                   help="oracle timeout in seconds")
    p.set_defaults(func=_cmd_oracle_check)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _err(str(exc), EXIT_MISSING_INPUT)
    except (OracleError,) as exc:
        return _err(str(exc), EXIT_ORACLE)
    except (ContractError, MeshFormatError, MeshValidationError,
            OptimizationError) as exc:
        return _err(str(exc), EXIT_INVALID_DATA)
    except PartTexError as exc:
        return _err(str(exc), EXIT_INVALID_DATA)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
