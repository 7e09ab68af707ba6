"""Threaded writer/reader stress harness over one shared row buffer.

Exactly one writer thread rolls frames into the buffer, stamping each row
with a monotonically increasing write counter and its frame number.  A
reader scans rows concurrently and must find torn reads from the stamps
alone via :func:`detect_tearing`; the stored frame numbers give the ground
truth to compare against.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .pipeline import detect_tearing


@dataclass
class StressResult:
    flagged: list
    truth: list
    stamps: np.ndarray
    frames: np.ndarray

    @property
    def consistent(self) -> bool:
        return self.flagged == self.truth


def run_stress(rows: int = 256, frames: int = 50, reads: int = 20, seed: int = 0) -> list[StressResult]:
    """Race one writer against repeated full-buffer reads."""
    stamps = np.zeros(rows, dtype=np.int64)
    owner = np.full(rows, -1, dtype=np.int64)
    lock = threading.Lock()  # guards each row's (stamp, frame) pair only
    done = threading.Event()
    rng = np.random.default_rng(seed)
    pauses = rng.integers(0, 3, size=frames * rows)

    def writer():
        tick = 0
        for f in range(frames):
            for r in range(rows):
                tick += 1
                with lock:
                    stamps[r] = tick
                    owner[r] = f
                if pauses[tick - 1] == 0:
                    threading.Event().wait(0)
        done.set()

    results = []
    t = threading.Thread(target=writer, daemon=True)
    t.start()
    for _ in range(reads):
        seen_s = np.empty(rows, dtype=np.int64)
        seen_f = np.empty(rows, dtype=np.int64)
        for r in range(rows):
            with lock:
                seen_s[r], seen_f[r] = stamps[r], owner[r]
        truth = (np.flatnonzero(np.diff(seen_f) < 0) + 1).tolist()
        results.append(StressResult(detect_tearing(seen_s), truth, seen_s, seen_f))
        if done.is_set():
            break
    t.join()
    return results
