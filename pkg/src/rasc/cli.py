"""``rasc`` command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data error, 4 network error.
Every command that writes output also writes ``<out>.config.json`` with the
exact settings it ran with.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .codecs import AeConfig, CodecId, EncodedPayload, TrainConfig, load_checkpoint, save_checkpoint, train_ae
from .codecs import decode as codec_decode
from .codecs import encode as codec_encode
from .datamodel import GridConfig, Image8, PointCloud, RangeGrid, load_artifact, save_artifact
from .errors import RascError
from .lidar import denormalize_grid, grid_to_pointcloud, normalize_grid, pointcloud_to_grid
from .metrics import detection_error_summary, ingest_detection_report, rd_csv, rd_point
from .synthetic import synthetic_frame

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NETWORK = 0, 2, 3, 4

CODEC_NAMES = {"dct": CodecId.BLOCK_DCT, "ae": CodecId.LEARNED_AE}

log = logging.getLogger("rasc")


class UsageError(Exception):
    pass


class NetworkError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _grid_config(args) -> GridConfig:
    return GridConfig(args.grid_h, args.grid_w, args.fov_max, args.fov_min, args.r_max)


def _write_config(out: Path, command: str, settings: dict) -> Path:
    """Sidecar next to ``out`` (or inside it, for directories)."""
    path = out / "config.json" if out.is_dir() else out.with_name(out.name + ".config.json")
    body = {"command": command, "version": __version__, **settings}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def resize_image(img: Image8, height: int, width: int) -> Image8:
    """Antialiased bilinear resize."""
    x = torch.from_numpy(img.data.astype(np.float32).transpose(2, 0, 1).copy())[None]
    y = torch.nn.functional.interpolate(x, size=(height, width), mode="bilinear", antialias=True,
                                        align_corners=False)
    return Image8(np.clip(np.round(y[0].numpy().transpose(1, 2, 0)), 0, 255).astype(np.uint8))


def load_corpus(corpus: str, size: int | None = None) -> list[tuple[str, Image8]]:
    """``synthetic:N`` or a directory of PPM images, optionally resized square."""
    if corpus.startswith("synthetic:"):
        n = int(corpus.split(":", 1)[1])
        items = [(f"synthetic_{i:04d}", synthetic_frame(1000 + i)) for i in range(n)]
    else:
        root = Path(corpus)
        if not root.is_dir():
            raise FileNotFoundError(f"corpus directory {corpus} not found")
        items = []
        for p in sorted(root.iterdir()):
            if p.is_file():
                obj = load_artifact(p)
                if isinstance(obj, Image8):
                    items.append((p.name, obj))
    if not items:
        raise ValueError(f"no images in corpus {corpus}")
    if size:
        items = [(n, im if im.data.shape[:2] == (size, size) else resize_image(im, size, size)) for n, im in items]
    return items


def _codec_input(obj, grid_cfg: GridConfig):
    if isinstance(obj, PointCloud):
        return normalize_grid(pointcloud_to_grid(obj, grid_cfg))
    if isinstance(obj, RangeGrid):
        return normalize_grid(obj)
    return obj


def _load_model(path) -> "torch.nn.Module | None":
    return None if path is None else load_checkpoint(path)


# --------------------------------------------------------------------------
# commands


def cmd_transform(args) -> int:
    cfg = _grid_config(args)
    obj = load_artifact(args.input)
    out = Path(args.out)
    if isinstance(obj, PointCloud):
        result = pointcloud_to_grid(obj, cfg)
    elif isinstance(obj, RangeGrid):
        result = grid_to_pointcloud(obj)
    else:
        raise ValueError("transform expects a point cloud or a range grid")
    save_artifact(result, out)
    _write_config(out, "transform", {"input": args.input, "grid": asdict(cfg)})
    print(f"wrote {out}")
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = _grid_config(args)
    codec = CODEC_NAMES[args.codec]
    model = _load_model(args.checkpoint)
    obj = _codec_input(load_artifact(args.input), cfg)
    payload = codec_encode(obj, codec, args.quality, model)
    out = Path(args.out)
    out.write_bytes(payload.to_bytes())
    _write_config(out, "encode", {"input": args.input, "codec": args.codec, "quality": args.quality,
                                  "checkpoint": args.checkpoint, "grid": asdict(cfg)})
    print(f"wrote {out}: {payload.byte_length} bytes, {payload.bpp:.4f} bpp")
    return EXIT_OK


def cmd_decode(args) -> int:
    payload = EncodedPayload.from_bytes(Path(args.input).read_bytes())
    out_obj = codec_decode(payload, _load_model(args.checkpoint))
    out = Path(args.out)
    if payload.is_grid:
        grid = denormalize_grid(out_obj)
        out_obj = grid_to_pointcloud(grid) if args.points else grid
    save_artifact(out_obj, out)
    _write_config(out, "decode", {"input": args.input, "checkpoint": args.checkpoint, "points": args.points})
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    items = load_corpus(args.data)
    init = _load_model(args.init)
    mcfg = AeConfig(hidden=args.hidden, latent=args.latent, lam=args.lam)
    cfg = TrainConfig(lam=args.lam, steps=args.steps, lr=args.lr, batch=args.batch, crop=args.crop,
                      seed=args.seed, model=mcfg)
    result = train_ae([im for _, im in items], cfg, init=init)
    out = Path(args.out)
    save_checkpoint(result.model, out)
    trace = out.with_name(out.name + ".loss.csv")
    lines = ["step,loss,mse,bpp"] + [
        f"{i},{l!r},{m!r},{b!r}" for i, (l, m, b) in enumerate(zip(result.losses, result.mse, result.bpp))]
    trace.write_text("\n".join(lines) + "\n")
    _write_config(out, "train", {"data": args.data, "init": args.init, "train": asdict(cfg)})
    smooth = result.smoothed()
    print(f"wrote {out}: loss {smooth[0]:.6f} -> {smooth[-1]:.6f} (smoothed)")
    return EXIT_OK


def _load_lpips(path) -> dict:
    if path is None:
        return {}
    table = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            table[(str(rec["image"]), str(rec["rate"]))] = float(rec["lpips"])
    return table


def cmd_rd_sweep(args) -> int:
    codec = CODEC_NAMES[args.codec]
    items = load_corpus(args.corpus, args.size)
    if codec == CodecId.BLOCK_DCT:
        if not args.qualities:
            raise UsageError("--qualities is required for the block codec")
        rates = [(str(q), q, None) for q in args.qualities]
    else:
        if not args.checkpoints:
            raise UsageError("the learned codec needs one --checkpoints entry per rate point")
        rates = [(Path(c).name, 0, load_checkpoint(c)) for c in args.checkpoints]
    if len(rates) < 2:
        raise UsageError("a sweep needs at least two rate points")
    lpips = _load_lpips(args.lpips)
    points = []
    for name, img in items:
        for label, q, model in rates:
            payload = codec_encode(img, codec, q, model)
            recon = codec_decode(EncodedPayload.from_bytes(payload.to_bytes()), model)
            p = rd_point(img, recon, payload.byte_length)
            if lpips:
                p = type(p)(p.bpp, p.mse, p.psnr, p.ms_ssim, lpips.get((name, label)))
            points.append(p)
    out = Path(args.out)
    out.write_text(rd_csv(points))
    _write_config(out, "rd-sweep", {"codec": args.codec, "corpus": args.corpus, "size": args.size,
                                    "qualities": args.qualities, "checkpoints": args.checkpoints,
                                    "lpips": args.lpips})
    print(f"wrote {out}: {len(points)} rows")
    return EXIT_OK


def _source(name: str, frames: int | None, seed: int, loop: bool = False):
    from .stream import ReplaySource, SyntheticSource

    if name in ("camera", "lidar"):
        return SyntheticSource(name, frames=frames, seed=seed)
    src = ReplaySource(name, loop=loop)
    if frames is None:
        return src
    import itertools

    class _Limited:
        live = src.live

        def __iter__(self):
            return itertools.islice(iter(src), frames)

    return _Limited()


def _settings(args):
    from .stream import CodecSettings

    codec = CODEC_NAMES[args.codec]
    model = _load_model(args.checkpoint)
    if codec == CodecId.LEARNED_AE and model is None:
        raise UsageError("the learned codec needs --checkpoint")
    return CodecSettings(codec, args.quality, model, _grid_config(args))


def _write_report(out: Path, report, records) -> None:
    from .stream import records_csv

    out.mkdir(parents=True, exist_ok=True)
    (out / "frames.csv").write_text(records_csv(records))
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(report.summary() + "\n")


def cmd_bench(args) -> int:
    from .stream import aggregate_timings, run_sender
    from .stream.bench import loopback_bench

    if args.duration is not None and args.duration <= 0:
        raise UsageError("--duration must be positive")
    if args.duration is None and args.frames is None:
        raise UsageError("give --duration and/or --frames")
    settings = _settings(args)
    source = _source(args.source, args.frames, args.seed, loop=True)
    if args.mode == "loopback":
        report, records = loopback_bench(source, settings, duration=args.duration, window_seconds=args.window)
    else:
        if not args.connect:
            raise UsageError("remote mode needs --connect HOST:PORT")
        try:
            sent = run_sender(source, settings, _parse_endpoint(args.connect), duration=args.duration)
        except OSError as exc:
            raise NetworkError(str(exc)) from exc
        records = sent.records
        if not records:
            raise NetworkError(sent.error or "no frames sent")
        elapsed = max(1e-9, (max(r.t_capture_ns for r in records) - min(r.t_capture_ns for r in records)) / 1e9)
        report = aggregate_timings(records, args.window, elapsed_seconds=elapsed, dropped=sent.dropped)
    out = Path(args.out)
    _write_report(out, report, records)
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    _write_config(out, "bench", cfg)
    print(report.summary())
    return EXIT_OK


def cmd_send(args) -> int:
    from .stream import run_sender

    settings = _settings(args)
    source = _source(args.source, args.frames, args.seed)
    try:
        result = run_sender(source, settings, _parse_endpoint(args.connect), duration=args.duration)
    except OSError as exc:
        raise NetworkError(str(exc)) from exc
    print(f"sent {len(result.records)} frames, dropped {result.dropped}")
    if result.error:
        print(result.error, file=sys.stderr)
        return EXIT_NETWORK
    return EXIT_OK


def cmd_receive(args) -> int:
    from .stream import aggregate_timings, records_csv, run_receiver

    model = _load_model(args.checkpoint)
    try:
        result = run_receiver(_parse_endpoint(args.listen), args.sink, model, max_frames=args.frames,
                              shared_clock=args.shared_clock)
    except OSError as exc:
        raise NetworkError(str(exc)) from exc
    print(f"received {len(result.records)} frames, malformed {result.malformed}, "
          f"decode failures {result.decode_failures}")
    if args.out and result.records:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "frames.csv").write_text(records_csv(result.records))
        if args.shared_clock:
            report = aggregate_timings(result.records)
            (out / "summary.txt").write_text(report.summary() + "\n")
        _write_config(out, "receive", {k: v for k, v in vars(args).items() if k != "func"})
    return EXIT_OK


def cmd_eval_detections(args) -> int:
    records = ingest_detection_report(args.report, args.threshold)
    summary = detection_error_summary(records)
    out = Path(args.out)
    out.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _write_config(out, "eval-detections", {"report": args.report, "threshold": args.threshold})
    for r in summary["rates"]:
        print(f"bpp {r['bpp']:.4f}  n {r['n']}  mean {r['mean']:.2f}%  "
              f"at -100%: {r['share_minus_100']:.2%}  at 0%: {r['share_zero']:.2%}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_grid(p):
    d = GridConfig()
    p.add_argument("--grid-h", type=int, default=d.h)
    p.add_argument("--grid-w", type=int, default=d.w)
    p.add_argument("--fov-min", type=float, default=d.elev_min, help="lowest elevation, degrees")
    p.add_argument("--fov-max", type=float, default=d.elev_max, help="highest elevation, degrees")
    p.add_argument("--r-max", type=float, default=d.r_max, help="range limit, meters")


def _add_codec(p, quality=75):
    p.add_argument("--codec", choices=sorted(CODEC_NAMES), default="dct")
    p.add_argument("--quality", type=int, default=quality, help="block codec quality, 1-100")
    p.add_argument("--checkpoint", help="autoencoder checkpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rasc", description="Camera/lidar compression and streaming toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="point cloud <-> range grid")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_grid(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("encode", help="compress an image, point cloud or grid")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_codec(p)
    _add_grid(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress a payload")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--points", action="store_true", help="write lidar output as a point cloud")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train the autoencoder codec")
    p.add_argument("--data", default="synthetic:16", help="image directory or synthetic:N")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--latent", type=int, default=16)
    p.add_argument("--init", help="start from this checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rd-sweep", help="rate-distortion table over a corpus")
    p.add_argument("--codec", choices=sorted(CODEC_NAMES), default="dct")
    p.add_argument("--corpus", default="synthetic:10", help="image directory or synthetic:N")
    p.add_argument("--size", type=int, default=256, help="resize to SIZE x SIZE (0 keeps sizes)")
    p.add_argument("--qualities", type=int, nargs="+")
    p.add_argument("--checkpoints", nargs="+", help="one autoencoder per rate point")
    p.add_argument("--lpips", help="JSON lines {image, rate, lpips} to merge in")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rd_sweep)

    p = sub.add_parser("bench", help="timed streaming run")
    p.add_argument("--mode", choices=["loopback", "remote"], default="loopback")
    p.add_argument("--source", default="camera", help="camera, lidar or a replay directory")
    p.add_argument("--duration", type=float)
    p.add_argument("--frames", type=int)
    p.add_argument("--window", type=float, default=300.0)
    p.add_argument("--connect")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report directory")
    _add_codec(p)
    _add_grid(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("send", help="stream frames to a receiver")
    p.add_argument("--connect", required=True)
    p.add_argument("--source", default="camera")
    p.add_argument("--duration", type=float)
    p.add_argument("--frames", type=int)
    p.add_argument("--seed", type=int, default=0)
    _add_codec(p)
    _add_grid(p)
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("receive", help="accept one stream and decode it")
    p.add_argument("--listen", required=True)
    p.add_argument("--sink", help="write decoded frames here")
    p.add_argument("--checkpoint")
    p.add_argument("--frames", type=int)
    p.add_argument("--shared-clock", action="store_true", help="sender runs on this host")
    p.add_argument("--out", help="report directory")
    p.set_defaults(func=cmd_receive)

    p = sub.add_parser("eval-detections", help="relative detection error statistics")
    p.add_argument("report")
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_detections)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (NetworkError, ConnectionError, socket.timeout) as exc:
        print(f"rasc: network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except (RascError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"rasc: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
