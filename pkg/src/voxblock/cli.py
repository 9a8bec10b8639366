"""Command line entry point.

Every subcommand prints a single JSON document on stdout; logs go to stderr.
Failures exit with status 1 and print ``{"code", "message", "context"}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import augment, engine, metrics, pyramid, sdt, unet
from .n5 import CodecError, N5Container, N5Dataset, StoreBoundsError
from .volume import Roi, VoxelSize, VoxelVolume

log = logging.getLogger("voxblock")

WORKERS_ENV = "VOXBLOCK_WORKERS"


class CliError(Exception):
    def __init__(self, code: str, message: str, **context):
        super().__init__(message)
        self.code = code
        self.context = context


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, prog=self.prog)


def _shape(text: str):
    parts = text.lower().replace(",", "x").split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected ZxYxX, got {text!r}")
    return tuple(int(p) for p in parts)


def _floats(text: str):
    parts = [float(p) for p in text.replace("x", ",").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma separated numbers, got {text!r}")
    return tuple(parts)


def _split_dataset(spec: str):
    """``container.n5:name`` -> (container, name); a bare path splits at its last component."""
    if ":" in spec and not Path(spec).exists():
        container, name = spec.rsplit(":", 1)
        return N5Container(container), name
    path = Path(spec)
    return N5Container(path.parent), path.name


def _open(spec: str) -> N5Dataset:
    container, name = _split_dataset(spec)
    if name not in container:
        raise CliError("not_found", f"no dataset at {spec}", dataset=spec)
    return container[name]


def _create_like(spec: str, shape, chunk_size, element_type, voxel_size, compression="gzip") -> N5Dataset:
    container, name = _split_dataset(spec)
    return container.create_dataset(name, shape, chunk_size=chunk_size, element_type=element_type,
                                    compression=compression, voxel_size=voxel_size, overwrite=True)


def _whole(ds: N5Dataset) -> VoxelVolume:
    return ds.read_roi(ds.roi)


def _write_whole(spec: str, volume: VoxelVolume, like: N5Dataset) -> N5Dataset:
    out = _create_like(spec, volume.shape, like.attrs.chunk_size, volume.element_type,
                       volume.voxel_size, like.attrs.compression)
    out.write_roi(volume)
    return out


def _mask_arg(text: str):
    dataset, _, factors = text.rpartition(":")
    if not dataset:
        raise CliError("usage", f"--mask expects <dataset>:<fz,fy,fx>, got {text!r}")
    return _open(dataset), tuple(int(f) for f in factors.split(","))


def _context(args, block_shape):
    if getattr(args, "arch", None):
        return unet.context_per_side(unet.load_arch(args.arch), block_shape)
    return tuple(args.context) if args.context else (0, 0, 0)


# -- subcommands --------------------------------------------------------------

def cmd_plan(args):
    if args.input:
        total = _open(args.input).roi
    elif args.total:
        total = Roi((0, 0, 0), args.total)
    else:
        raise CliError("usage", "plan needs --input or --total")
    context = _context(args, args.blocks)
    mask, factors = (None, (1, 1, 1))
    if args.mask:
        mask_ds, factors = _mask_arg(args.mask)
        mask = _whole(mask_ds)
    plans = engine.plan_blocks(total, args.blocks, context, mask, factors)
    return {
        "n_blocks": len(plans),
        "n_masked_in": sum(p.masked_in for p in plans),
        "context": list(context),
        "blocks": [p.to_json() for p in plans],
    }


def _predictor(args, context, out_dtype):
    kind = args.predictor
    if kind == "identity":
        return engine.IdentityPredictor(context, out_dtype)
    if kind in ("stencil", "gaussian"):
        return engine.StencilPredictor(context, "box" if kind == "stencil" else "gaussian", out_dtype)
    if kind == "oracle":
        if not args.labels:
            raise CliError("usage", "the oracle predictor needs --labels")
        return engine.OraclePredictor(_open(args.labels), context, args.scale)
    raise CliError("usage", f"unknown predictor {kind!r}")


def cmd_predict(args):
    source = _open(args.input)
    blocks = args.blocks
    context = _context(args, blocks)
    mask, factors = (None, (1, 1, 1))
    if args.mask:
        mask_ds, factors = _mask_arg(args.mask)
        mask = _whole(mask_ds)
    plans = engine.plan_blocks(source.roi, blocks, context, mask, factors)
    if args.partition:
        index, n_parts = (int(p) for p in args.partition.split("/"))
        plans = engine.partition(plans, n_parts, index)
    container, name = _split_dataset(args.output)
    if name in container:
        target = container[name]
    else:
        target = container.create_dataset(name, source.shape, chunk_size=blocks,
                                          element_type=args.dtype, voxel_size=source.voxel_size)
    predictor = _predictor(args, context, target.dtype)
    report = engine.run(plans, predictor, source, target, n_workers=args.workers,
                        fill=args.fill, journal=args.resume, prefetch=args.prefetch)
    out = report.to_json()
    out["context"] = list(context)
    return out


def cmd_evaluate(args):
    pred, truth = _whole(_open(args.pred)), _whole(_open(args.truth))
    if args.pred_threshold is not None:
        pred = sdt.threshold_to_labels(pred, args.pred_threshold)
    ignore = _whole(_open(args.ignore)) if args.ignore else None
    try:
        score = metrics.cleft_score(pred, truth, args.voxel_size or truth.voxel_size, ignore,
                                    ignore_value=args.ignore_value)
    except ValueError as exc:
        raise CliError("shape", str(exc), pred=args.pred, truth=args.truth) from None
    return score.to_json()


def cmd_sedt(args):
    ds = _open(args.input)
    labels = _whole(ds)
    try:
        out = sdt.sedt(labels, args.voxel_size or ds.voxel_size)
    except sdt.EmptyClassError as exc:
        raise CliError("empty_class", str(exc), dataset=args.input) from None
    _write_whole(args.output, out, ds)
    return {"output": args.output, "min": float(out.data.min()), "max": float(out.data.max())}


def cmd_stdt(args):
    ds = _open(args.input)
    out = sdt.stdt(_whole(ds), args.scale)
    _write_whole(args.output, out, ds)
    return {"output": args.output, "scale": args.scale}


def cmd_threshold(args):
    ds = _open(args.input)
    out = sdt.threshold_to_labels(_whole(ds), args.threshold)
    _write_whole(args.output, out, ds)
    return {"output": args.output, "n_positive": int(out.data.sum())}


def cmd_sample(args):
    raw, labels = _whole(_open(args.raw)), _whole(_open(args.labels))
    aux = _whole(_open(args.aux)) if args.aux else None
    config = augment.AugmentConfig.load(args.augment) if args.augment else augment.AugmentConfig()
    container = N5Container(args.output)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.count, dtype=np.uint64)
    batches = []
    for i, seed in enumerate(seeds):
        batch = augment.sample_batch(raw, labels, args.shape, args.context or (0, 0, 0), config,
                                     int(seed), aux_labels=aux)
        for key, vol in (("raw", batch.raw), ("labels", batch.labels), ("aux_labels", batch.aux_labels)):
            if vol is None:
                continue
            ds = container.create_dataset(f"batch_{i}/{key}", vol.shape, chunk_size=vol.shape,
                                          element_type=vol.element_type, voxel_size=vol.voxel_size,
                                          overwrite=True)
            ds.write_roi(VoxelVolume(ds.roi, vol.data, vol.voxel_size))
        container.set_attributes(f"batch_{i}", rng_seed=int(seed), attempts=batch.attempts,
                                 offset=list(batch.labels.roi.offset[::-1]))
        batches.append({"name": f"batch_{i}", "rng_seed": int(seed), "attempts": batch.attempts})
    return {"output": args.output, "batches": batches}


def cmd_pyramid(args):
    container, name = _split_dataset(args.input)
    levels = [tuple(int(f) for f in level.split(",")) for level in args.levels.split()]
    result = pyramid.build_pyramid(container, name, levels, group=args.group, n_workers=args.workers)
    return {"levels": [{"level": l.level, "factors": list(l.factors), "dataset": str(l.dataset.path),
                        "shape": list(l.dataset.shape)} for l in result]}


def cmd_mask(args):
    ds = _open(args.input)
    lo, _, hi = args.range.partition(":")
    out = pyramid.build_mask(_whole(ds), float(lo), float(hi))
    _write_whole(args.output, out, ds)
    return {"output": args.output, "fraction": float(out.data.mean())}


def cmd_density(args):
    ds = _open(args.input)
    out = metrics.psf_density(_whole(ds), args.sigma, args.output_voxel_size)
    _write_whole(args.output, out, ds)
    return {"output": args.output, "shape": list(out.shape), "voxel_size": list(out.voxel_size.as_tuple()),
            "total": float(out.data.sum())}


def cmd_bench(args):
    report = engine.bench(args.delay_ms / 1000.0, args.io_ms / 1000.0, args.workers, args.n_blocks,
                          args.block_shape, prefetch=args.prefetch)
    out = report.to_json()
    if args.total_voxels:
        out["eta_seconds"] = engine.eta(args.total_voxels, args.workers, report.voxels_per_second / args.workers)
    return out


def cmd_eta(args):
    seconds = engine.eta(args.total_voxels, args.workers, args.rate)
    return {"seconds": seconds, "days": seconds / 86400.0}


def build_parser() -> argparse.ArgumentParser:
    default_workers = int(os.environ.get(WORKERS_ENV, "1"))
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--voxel-size", type=_floats, default=None, help="nm, z,y,x (default: dataset's)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--workers", type=int, default=default_workers)
    common.add_argument("--config", help="JSON file with option defaults")

    parser = _Parser(prog="voxblock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    p = add("plan", cmd_plan, "list output blocks")
    p.add_argument("--input")
    p.add_argument("--total", type=_shape)
    p.add_argument("--blocks", type=_shape, required=True)
    p.add_argument("--context", type=_shape)
    p.add_argument("--arch")
    p.add_argument("--mask")

    p = add("predict", cmd_predict, "blockwise prediction")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--blocks", type=_shape, required=True)
    p.add_argument("--arch")
    p.add_argument("--context", type=_shape)
    p.add_argument("--predictor", default="stencil", choices=["identity", "stencil", "gaussian", "oracle"])
    p.add_argument("--labels", help="ground-truth dataset for the oracle predictor")
    p.add_argument("--scale", type=float, default=sdt.DEFAULT_SCALE_NM)
    p.add_argument("--mask")
    p.add_argument("--resume", help="journal file of finished block ids")
    p.add_argument("--partition", help="i/n: run only share i of n")
    p.add_argument("--dtype", default="f32")
    p.add_argument("--fill", type=float, default=0)
    p.add_argument("--prefetch", type=int, default=2)

    p = add("evaluate", cmd_evaluate, "CREMI cleft score")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--ignore")
    p.add_argument("--ignore-value", type=int)
    p.add_argument("--pred-threshold", type=float)

    p = add("sedt", cmd_sedt, "signed distance transform")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("stdt", cmd_stdt, "tanh-scaled distance")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=float, default=sdt.DEFAULT_SCALE_NM)

    p = add("threshold", cmd_threshold, "threshold to binary labels")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float, default=0.0)

    p = add("sample", cmd_sample, "write augmented training batches")
    p.add_argument("--raw", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--aux")
    p.add_argument("--shape", type=_shape, required=True)
    p.add_argument("--context", type=_shape)
    p.add_argument("--augment", help="AugmentConfig JSON")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--output", required=True)

    p = add("pyramid", cmd_pyramid, "build a scale pyramid")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", required=True, help='relative factors, e.g. "1,2,2 2,2,2"')
    p.add_argument("--group")

    p = add("mask", cmd_mask, "threshold a pyramid level into a mask")
    p.add_argument("--input", required=True)
    p.add_argument("--range", required=True, help="lo:hi, inclusive")
    p.add_argument("--output", required=True)

    p = add("density", cmd_density, "Gaussian PSF density simulation")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sigma", type=_floats, required=True, help="nm, z,y,x")
    p.add_argument("--output-voxel-size", type=_floats)

    p = add("bench", cmd_bench, "pipeline utilization benchmark")
    p.add_argument("--delay-ms", type=float, default=10.0)
    p.add_argument("--io-ms", type=float, default=2.0)
    p.add_argument("--n-blocks", type=int, default=100)
    p.add_argument("--block-shape", type=_shape, default=(8, 8, 8))
    p.add_argument("--prefetch", type=int, default=2)
    p.add_argument("--total-voxels", type=float)

    p = add("eta", cmd_eta, "prediction time estimate")
    p.add_argument("--total-voxels", type=float, required=True)
    p.add_argument("--rate", type=float, required=True, help="voxels per second per worker")
    return parser


def _apply_config(parser, argv):
    """Parse ``argv``, taking option defaults from ``--config`` when given."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config and command:
        try:
            overrides = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError("config", f"cannot read config {known.config}: {exc}") from None
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        sub = subparsers[command]
        for action in sub._actions:
            if action.dest in overrides:
                action.required = False
        sub.set_defaults(**overrides)
    args = parser.parse_args(argv)
    for key in ("blocks", "total", "context", "shape", "block_shape"):
        if isinstance(getattr(args, key, None), list):
            setattr(args, key, tuple(getattr(args, key)))
    for key in ("voxel_size", "sigma", "output_voxel_size"):
        if isinstance(getattr(args, key, None), list):
            setattr(args, key, tuple(float(v) for v in getattr(args, key)))
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        if args.voxel_size is not None:
            args.voxel_size = VoxelSize.of(args.voxel_size)
        result = args.func(args)
    except CliError as exc:
        print(json.dumps({"code": exc.code, "message": str(exc), "context": exc.context}))
        return 1
    except engine.BlockError as exc:
        print(json.dumps({"code": "block", "message": str(exc), "context": {"block_id": exc.block_id}}))
        return 1
    except (CodecError, StoreBoundsError, OSError, ValueError, KeyError, TypeError,
            augment.SamplingError) as exc:
        print(json.dumps({"code": type(exc).__name__, "message": str(exc), "context": {}}))
        return 1
    print(json.dumps(_finite(result), allow_nan=False))
    return 0


def _finite(value):
    """JSON has no infinity; non-finite floats become null (scores also carry ``undefined``)."""
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


if __name__ == "__main__":
    sys.exit(main())
