"""Shared helpers: RNG discipline, worker count, file hashing."""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def rng_from_seed(seed):
    """Return a Generator for an int seed; pass Generators through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed, count):
    """Independent per-item generators split from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def worker_count():
    """Worker count from IMAGING_LAB_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("IMAGING_LAB_THREADS", "")
    if raw.strip():
        n = int(raw)
        if n < 1:
            raise ValueError("IMAGING_LAB_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def ordered_map(fn, items):
    """Map preserving order, threaded when more than one worker is configured.

    Work items must be independent; results are returned in input order so the
    output is deterministic regardless of scheduling.
    """
    items = list(items)
    n_workers = min(worker_count(), len(items)) if items else 1
    if n_workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))


def sha256_of_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def format_float(x):
    """Shortest round-trip decimal form; reruns produce byte-identical text."""
    return repr(float(x))
