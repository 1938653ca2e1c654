"""Deterministic process pool for independent work cells.

Every cell (an inner-loop adaptation, an evaluation run) executes with
single-threaded BLAS regardless of the worker count, so results are
bit-identical whether a run uses 1 or many jobs; the job count only
changes wall time. Results come back in submission order.
"""

from __future__ import annotations

import multiprocessing as mp

from threadpoolctl import threadpool_limits

_WORKER_FN = None


def _init_worker(fn):
    global _WORKER_FN
    _WORKER_FN = fn


def _run_cell(indexed_args):
    i, args = indexed_args
    with threadpool_limits(limits=1):
        return i, _WORKER_FN(args)


def run_cells(fn, args_list, jobs=1):
    """Map fn over args_list; fn must be a picklable module-level callable."""
    args_list = list(args_list)
    if not args_list:
        return []
    jobs = max(1, min(int(jobs), len(args_list)))
    if jobs == 1:
        out = []
        with threadpool_limits(limits=1):
            for args in args_list:
                out.append(fn(args))
        return out
    ctx = mp.get_context("fork")
    with ctx.Pool(jobs, initializer=_init_worker, initargs=(fn,)) as pool:
        results = pool.map(_run_cell, list(enumerate(args_list)))
    results.sort(key=lambda pair: pair[0])
    return [r for _, r in results]
