"""Blockwise prediction over large chunked volumes.

Output blocks tile the requested region without overlap; each block's input
is the output block grown by the predictor's context, so neighbouring inputs
overlap. Blocks are independent, which makes the final result independent of
block shape, worker count and completion order as long as the predictor only
looks at voxels within its declared context.
"""

from __future__ import annotations

import logging
import os
import queue
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import ndimage

from .sdt import DEFAULT_SCALE_NM, stdt_target
from .volume import Roi, VoxelVolume, roi_grow, roi_intersect

log = logging.getLogger(__name__)


class PredictorContractError(RuntimeError):
    pass


class BlockError(RuntimeError):
    """A block failed; ``block_id`` says which."""

    def __init__(self, block_id: int, cause: BaseException):
        super().__init__(f"block {block_id} failed: {cause!r}")
        self.block_id = block_id
        self.cause = cause


@dataclass(frozen=True)
class BlockPlan:
    block_id: int
    output_roi: Roi
    input_roi: Roi
    masked_in: bool = True

    def to_json(self) -> dict:
        return {
            "block_id": self.block_id,
            "output": {"offset": list(self.output_roi.offset), "shape": list(self.output_roi.shape)},
            "input": {"offset": list(self.input_roi.offset), "shape": list(self.input_roi.shape)},
            "masked_in": self.masked_in,
        }


def _mask_hit(mask: VoxelVolume, factors, roi: Roi) -> bool:
    lo = tuple(o // f for o, f in zip(roi.offset, factors))
    hi = tuple((e - 1) // f + 1 for e, f in zip(roi.end, factors))
    footprint = Roi(lo, tuple(h - l for l, h in zip(lo, hi)))
    overlap = roi_intersect(footprint, mask.roi)
    if overlap.empty():
        return False
    return bool(np.any(mask.data[overlap.slices(mask.roi)]))


def plan_blocks(total_roi: Roi, block_shape, context=(0, 0, 0),
                mask: Optional[VoxelVolume] = None, mask_factors=(1, 1, 1)) -> List[BlockPlan]:
    """Tile ``total_roi`` with output blocks in z-major order.

    Edge blocks are truncated to ``total_roi``. With a ``mask`` (a low
    resolution volume whose voxel ``m`` covers full-resolution voxels
    ``m * mask_factors`` up to ``(m + 1) * mask_factors``), a block is marked
    ``masked_in`` when its footprint touches at least one positive mask voxel.
    """
    block_shape = tuple(int(b) for b in block_shape)
    mask_factors = tuple(int(f) for f in mask_factors)
    if len(block_shape) != 3 or min(block_shape) < 1:
        raise ValueError(f"block shape must be 3 positive integers, got {block_shape}")
    if min(mask_factors) < 1:
        raise ValueError(f"mask factors must be >= 1, got {mask_factors}")
    counts = [-(-s // b) for s, b in zip(total_roi.shape, block_shape)]
    plans = []
    for block_id, grid in enumerate(product(*(range(c) for c in counts))):
        offset = tuple(o + g * b for o, g, b in zip(total_roi.offset, grid, block_shape))
        shape = tuple(min(b, e - o) for b, e, o in zip(block_shape, total_roi.end, offset))
        out_roi = Roi(offset, shape)
        masked_in = True if mask is None else _mask_hit(mask, mask_factors, out_roi)
        plans.append(BlockPlan(block_id, out_roi, roi_grow(out_roi, context), masked_in))
    return plans


def partition(plans: Sequence[BlockPlan], n_parts: int, index: int) -> List[BlockPlan]:
    """Static share ``index`` of ``n_parts`` contiguous slices of the plan list."""
    if not 0 <= index < n_parts:
        raise ValueError(f"partition index {index} outside [0, {n_parts})")
    bounds = np.linspace(0, len(plans), n_parts + 1).round().astype(int)
    return list(plans[bounds[index]:bounds[index + 1]])


# -- predictors ---------------------------------------------------------------

class Predictor:
    """Maps an input block to the output block it was grown from.

    Subclasses set ``context`` and implement :meth:`predict`, which receives
    the input volume (covering ``roi_grow(output_roi, context)``) and must
    return an array shaped like ``output_roi``.
    """

    context = (0, 0, 0)
    output_dtype = np.dtype(np.float32)
    channels = 1

    def predict(self, volume: VoxelVolume, output_roi: Roi) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, volume: VoxelVolume, output_roi: Roi) -> np.ndarray:
        return self.predict(volume, output_roi)


def _crop(data: np.ndarray, outer: Roi, inner: Roi) -> np.ndarray:
    return data[inner.slices(outer)]


class IdentityPredictor(Predictor):
    def __init__(self, context=(0, 0, 0), output_dtype=None):
        self.context = tuple(context)
        self.output_dtype = None if output_dtype is None else np.dtype(output_dtype)

    def predict(self, volume, output_roi):
        out = _crop(volume.data, volume.roi, output_roi)
        return out if self.output_dtype is None else out.astype(self.output_dtype)


class StencilPredictor(Predictor):
    """Separable box or Gaussian filter whose radius equals the context.

    Every output voxel is a fixed-order weighted sum of the inputs inside its
    context window, so results are bit-identical for any blocking.
    """

    def __init__(self, context=(1, 1, 1), kind: str = "box", output_dtype=np.float32):
        self.context = tuple(int(c) for c in context)
        self.kind = kind
        self.output_dtype = np.dtype(output_dtype)
        self._kernels = []
        for c in self.context:
            if kind == "box":
                k = np.full(2 * c + 1, 1.0 / (2 * c + 1))
            elif kind == "gaussian":
                x = np.arange(-c, c + 1, dtype=np.float64)
                k = np.exp(-0.5 * (x / max(c / 2.0, 0.5)) ** 2)
                k /= k.sum()
            else:
                raise ValueError(f"unknown stencil kind {kind!r}")
            self._kernels.append(k)

    def predict(self, volume, output_roi):
        data = np.asarray(volume.data, dtype=np.float64)
        for axis, k in enumerate(self._kernels):
            if k.size > 1:
                data = ndimage.correlate1d(data, k, axis=axis, mode="constant")
        return _crop(data, volume.roi, output_roi).astype(self.output_dtype)


class OraclePredictor(Predictor):
    """Emits the STDT of a colocated ground-truth label dataset.

    Ignores the raw input. Useful for exercising the pipeline end to end:
    thresholding its output at 0 reproduces the ground truth exactly.
    """

    def __init__(self, labels, context=(0, 0, 0), scale_s: float = DEFAULT_SCALE_NM):
        self.labels = labels
        self.context = tuple(context)
        self.scale_s = scale_s

    def predict(self, volume, output_roi):
        labels = self.labels.read_roi(volume.roi)
        target = stdt_target(labels, self.scale_s)
        return _crop(np.asarray(target.data), volume.roi, output_roi).astype(np.float32)


class FixedDelayPredictor(Predictor):
    """Sleeps ``delay`` seconds per block, then passes the input through."""

    def __init__(self, delay: float, output_dtype=np.float32):
        self.delay = float(delay)
        self.output_dtype = np.dtype(output_dtype)

    def predict(self, volume, output_roi):
        time.sleep(self.delay)
        return _crop(volume.data, volume.roi, output_roi).astype(self.output_dtype)


class DelayedDataset:
    """Wraps a dataset so every region read and write takes ``delay`` seconds longer."""

    def __init__(self, dataset, delay: float):
        self._dataset = dataset
        self.delay = float(delay)

    def read_roi(self, roi, fill=0):
        time.sleep(self.delay)
        return self._dataset.read_roi(roi, fill)

    def write_roi(self, volume):
        time.sleep(self.delay)
        self._dataset.write_roi(volume)

    def __getattr__(self, name):
        return getattr(self._dataset, name)


# -- journal and reports ------------------------------------------------------

class Journal:
    """Append-only record of finished block ids, one per line."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def done(self) -> set:
        if not self.path.exists():
            return set()
        # only newline-terminated records count; a torn tail may be a prefix of a longer id
        lines = self.path.read_text(encoding="utf-8").split("\n")[:-1]
        return {int(line) for line in (l.strip() for l in lines) if line.isdigit()}

    def append(self, block_id: int) -> None:
        with self._lock:
            with open(self.path, "a+b") as fh:
                fh.seek(0, os.SEEK_END)
                torn = False
                if fh.tell():
                    fh.seek(-1, os.SEEK_END)
                    torn = fh.read(1) != b"\n"
                # close a torn tail with a non-digit so it never parses as an id
                prefix = b"#\n" if torn else b""
                fh.write(prefix + f"{block_id}\n".encode("utf-8"))
                fh.flush()
                os.fsync(fh.fileno())


@dataclass
class RunReport:
    blocks_done: int = 0
    blocks_skipped: int = 0
    blocks_resumed: int = 0
    voxels_written: int = 0
    wall_seconds: float = 0.0
    voxels_per_second: float = 0.0
    worker_utilization: List[float] = field(default_factory=list)

    @property
    def utilization(self) -> float:
        """Mean fraction of wall time the predictor was busy, over workers."""
        return float(np.mean(self.worker_utilization)) if self.worker_utilization else 0.0

    def to_json(self) -> dict:
        out = asdict(self)
        out["utilization"] = self.utilization
        return out


def eta(total_voxels: float, n_workers: int, rate_per_worker: float) -> float:
    """Seconds to predict ``total_voxels`` at ``rate_per_worker`` voxels/s each."""
    if total_voxels <= 0 or n_workers <= 0 or rate_per_worker <= 0:
        raise ValueError("eta arguments must be positive")
    return total_voxels / (n_workers * rate_per_worker)


def _check_alignment(plans: Iterable[BlockPlan], dataset) -> None:
    chunk = dataset.attrs.chunk_size
    dims = dataset.attrs.dimensions
    for plan in plans:
        roi = plan.output_roi
        for o, e, c, d in zip(roi.offset, roi.end, chunk, dims):
            if o % c or (e % c and e != d):
                raise ValueError(
                    f"block {plan.block_id} {roi} is not aligned to output chunks {chunk}; "
                    "parallel writes need chunk-aligned blocks (or use one worker)"
                )


def run(plans: Sequence[BlockPlan], predictor: Predictor, input_ds, output_ds,
        n_workers: int = 1, fill=0, journal=None, prefetch: int = 2) -> RunReport:
    """Predict every masked-in block and write its output.

    Each worker keeps up to ``prefetch`` input reads in flight on a shared I/O
    pool, so block ``k + 1`` loads while block ``k`` is predicted; writes are
    handed back to the pool as well. ``journal`` (a path or :class:`Journal`)
    makes the run resumable: blocks already listed are skipped and each block
    is recorded once its output is on disk.
    """
    n_workers = max(1, int(n_workers))
    prefetch = max(1, int(prefetch))
    if journal is not None and not isinstance(journal, Journal):
        journal = Journal(journal)
    done = journal.done() if journal is not None else set()

    active = [p for p in plans if p.masked_in]
    report = RunReport(blocks_skipped=len(plans) - len(active))
    todo_plans = [p for p in active if p.block_id not in done]
    report.blocks_resumed = len(active) - len(todo_plans)
    if n_workers > 1:
        _check_alignment(todo_plans, output_ds)

    todo: "queue.Queue[BlockPlan]" = queue.Queue()
    for plan in todo_plans:
        todo.put(plan)
    stop = threading.Event()
    errors: list = []
    lock = threading.Lock()
    busy = [0.0] * n_workers
    out_dtype = output_ds.dtype

    def read_input(plan):
        return input_ds.read_roi(plan.input_roi, fill)

    def write_output(plan, data):
        output_ds.write_roi(VoxelVolume(plan.output_roi, data.astype(out_dtype, copy=False),
                                        output_ds.voxel_size))
        if journal is not None:
            journal.append(plan.block_id)
        with lock:
            report.blocks_done += 1
            report.voxels_written += plan.output_roi.size

    def fail(plan, exc):
        with lock:
            errors.append(exc if isinstance(exc, BlockError) else BlockError(plan.block_id, exc))
        stop.set()

    def worker(wid, io):
        pending = deque()

        def refill():
            while len(pending) < prefetch and not stop.is_set():
                try:
                    plan = todo.get_nowait()
                except queue.Empty:
                    return
                pending.append((plan, io.submit(read_input, plan)))

        writes = []
        refill()
        while pending and not stop.is_set():
            plan, future = pending.popleft()
            refill()
            try:
                volume = future.result()
                t0 = time.perf_counter()
                out = np.asarray(predictor(volume, plan.output_roi))
                busy[wid] += time.perf_counter() - t0
                if out.shape != plan.output_roi.shape:
                    raise PredictorContractError(
                        f"block {plan.block_id}: predictor returned {out.shape}, "
                        f"expected {plan.output_roi.shape}"
                    )
            except BaseException as exc:
                fail(plan, exc)
                break
            fut = io.submit(write_output, plan, out)
            fut.add_done_callback(
                lambda f, plan=plan: f.exception() is not None and fail(plan, f.exception())
            )
            writes.append(fut)
        for fut in writes:
            fut.exception()

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=n_workers * (prefetch + 1), thread_name_prefix="io") as io:
        threads = [threading.Thread(target=worker, args=(w, io), name=f"worker-{w}") for w in range(n_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    report.wall_seconds = time.perf_counter() - start
    if report.wall_seconds > 0:
        report.voxels_per_second = report.voxels_written / report.wall_seconds
        report.worker_utilization = [b / report.wall_seconds for b in busy]
    if errors:
        raise errors[0]
    log.info("run: %d blocks done, %d skipped, %d resumed, %.1f Mvox/s",
             report.blocks_done, report.blocks_skipped, report.blocks_resumed,
             report.voxels_per_second / 1e6)
    return report


def bench(delay: float = 0.010, io_delay: float = 0.002, n_workers: int = 4, n_blocks: int = 100,
          block_shape=(8, 8, 8), workdir=None, prefetch: int = 2) -> RunReport:
    """Synthetic pipeline run with a fixed-delay predictor and slowed-down I/O."""
    import tempfile

    from .n5 import N5Container

    block_shape = tuple(int(b) for b in block_shape)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        container = N5Container(Path(tmp) / "bench.n5")
        shape = (n_blocks * block_shape[0], block_shape[1], block_shape[2])
        src = container.create_dataset("in", shape, chunk_size=block_shape, compression="raw")
        dst = container.create_dataset("out", shape, chunk_size=block_shape,
                                       element_type="f32", compression="raw")
        plans = plan_blocks(src.roi, block_shape)
        return run(plans, FixedDelayPredictor(delay), DelayedDataset(src, io_delay),
                   DelayedDataset(dst, io_delay), n_workers=n_workers, prefetch=prefetch)
