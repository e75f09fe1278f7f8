"""Reusable inference session: preallocated buffers plus an optional thread pool.

Layer outputs are partitioned by output channel (conv) or output row (fc)
into contiguous blocks, one per worker.  Every output element is computed by
exactly one thread with the same per-element accumulation order as the
single-threaded reference, so results are bit-identical for any worker
count.  A session may be used from one thread at a time (buffers are
reused), but can be handed between threads.
"""

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor, wait

import numpy as np

from .network import check_store_matches, shape_chain
from .tensor_ops import ShapeError, conv2d_forward, fc_forward

log = logging.getLogger(__name__)


def _block_ranges(total, blocks):
    edges = np.linspace(0, total, min(blocks, total) + 1).astype(int)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(len(edges) - 1)]


class InferenceSession:
    def __init__(self, spec, store, worker_count=1):
        if worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        cpus = os.cpu_count() or 1
        if worker_count > cpus:
            log.warning("worker_count %d exceeds %d available cores; proceeding (results "
                        "are unaffected, only timing)", worker_count, cpus)
        check_store_matches(store, spec)
        self.spec = spec
        self.store = store
        self.worker_count = worker_count
        self._dtype = store.dtype
        shapes = shape_chain(spec)
        self._out_bufs = []
        for layer, shape in zip(spec.layers, shapes[1:]):
            if layer.kind == "flatten":
                self._out_bufs.append(None)  # filled as a view of the previous buffer
            else:
                self._out_bufs.append(np.empty(shape, dtype=self._dtype))
        for i, layer in enumerate(spec.layers):
            if layer.kind == "flatten":
                # flatten of the input itself has no buffer to alias; infer
                # reshapes the incoming frame instead (entry stays None)
                prev = self._out_bufs[i - 1] if i > 0 else None
                self._out_bufs[i] = prev.reshape(-1) if prev is not None else None
        self._ranges = []
        for layer in spec.layers:
            if layer.kind == "conv":
                self._ranges.append(_block_ranges(layer.out_ch, worker_count))
            elif layer.kind == "fc":
                self._ranges.append(_block_ranges(layer.out_dim, worker_count))
            else:
                self._ranges.append(None)
        self._pool = ThreadPoolExecutor(max_workers=worker_count - 1) if worker_count > 1 else None
        self._closed = False
        if self._pool is not None:
            self._each_worker(lambda: None)  # spawn threads up front

    def _each_worker(self, fn):
        """Run fn exactly once on every pool thread."""
        n = self._pool._max_workers
        barrier = threading.Barrier(n)

        def task():
            barrier.wait()
            return fn()

        futures = [self._pool.submit(task) for _ in range(n)]
        wait(futures)
        for f in futures:
            f.result()

    def set_affinity(self, cores):
        """Pin the internal worker threads to the given cores.

        The calling thread is left alone (it belongs to whoever drives the
        session).  Returns False when the platform has no thread affinity.
        """
        if not hasattr(os, "sched_setaffinity"):
            log.warning("thread affinity not supported on this platform; leaving workers unpinned")
            return False
        cores = set(int(c) for c in cores)
        if self._pool is not None:
            self._each_worker(lambda: os.sched_setaffinity(0, cores))
        return True

    def infer(self, frame):
        """Run the network on one preprocessed frame, returning the scalar output.

        The frame must match the spec input shape; dtype is coerced to the
        weight dtype if needed.
        """
        if self._closed:
            raise RuntimeError("session is closed")
        if frame.shape != tuple(self.spec.input_shape):
            raise ShapeError(
                f"frame shape {frame.shape} does not match network input {tuple(self.spec.input_shape)}"
            )
        cur = np.ascontiguousarray(frame, dtype=self._dtype)
        for idx, layer in enumerate(self.spec.layers):
            out = self._out_bufs[idx]
            if layer.kind == "flatten":
                cur = out if out is not None else cur.reshape(-1)
                continue
            p = self.store.params[idx]
            ranges = self._ranges[idx]
            run = conv2d_forward if layer.kind == "conv" else fc_forward
            if self._pool is not None and len(ranges) > 1:
                futures = [self._pool.submit(run, cur, p, out, r) for r in ranges[1:]]
                run(cur, p, out, ranges[0])
                wait(futures)
                for f in futures:
                    f.result()
            else:
                run(cur, p, out)
            if layer.activation == "relu":
                np.maximum(out, 0, out=out)
            cur = out
        return float(cur[0])

    def infer_many(self, frames):
        return np.array([self.infer(f) for f in frames], dtype=np.float64)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
