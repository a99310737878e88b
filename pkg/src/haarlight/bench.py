"""Wall-time measurements of transform-domain rotation."""

from __future__ import annotations

import csv
import gc
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .fixtures import phong_lobe_map
from .haar2d import forward_transform, size_exp_of
from .haarrot import build_rotated_pyramid
from .spheremap import random_rotations

LINEAR_RANGE = (3.0, 6.0)
DROP_RANGE = (2.0, 8.0)


@dataclass(frozen=True)
class BenchRow:
    size: int
    start_level: int
    synthesis: str
    fill_finer: bool
    seconds: float


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)
    size_ratios: dict = field(default_factory=dict)
    drop_ratios: dict = field(default_factory=dict)

    @property
    def linear_ok(self) -> bool:
        return all(LINEAR_RANGE[0] <= r <= LINEAR_RANGE[1] for r in self.size_ratios.values())

    @property
    def drop_ok(self) -> bool:
        return all(DROP_RANGE[0] <= r <= DROP_RANGE[1] for r in self.drop_ratios.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["size", "start_level", "synthesis", "fill_finer", "seconds"])
        for r in self.rows:
            writer.writerow([r.size, r.start_level, r.synthesis, int(r.fill_finer), repr(r.seconds)])
        return buf.getvalue()

    def time_of(self, size, start_level, synthesis="recursive", fill_finer=True) -> float:
        for r in self.rows:
            if (r.size, r.start_level, r.synthesis, r.fill_finer) == (size, start_level, synthesis, fill_finer):
                return r.seconds
        raise KeyError((size, start_level, synthesis, fill_finer))


def _interleaved_medians(fns: list, trials: int) -> list[float]:
    """Median wall time of each callable, timed round-robin with the GC paused.

    Interleaving spreads slow stretches of a shared machine over every
    configuration instead of letting them land on one.
    """
    times = [[] for _ in fns]
    enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        for _ in range(trials):
            for slot, fn in zip(times, fns):
                t0 = time.perf_counter()
                fn()
                slot.append(time.perf_counter() - t0)
    finally:
        if enabled:
            gc.enable()
    return [float(np.median(t)) for t in times]


def run_bench(sizes=(128, 256), start_levels=None, trials: int = 5, seed: int = 0) -> BenchResult:
    """Median rotation time per configuration.

    ``size_ratios`` compares consecutive sizes rotated from their finest
    level; ``drop_ratios`` compares, at the largest size, each start level
    with the next coarser one when finer levels are skipped.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = sorted(int(s) for s in sizes)
    rot = random_rotations(1, np.random.default_rng(seed))[0]
    result = BenchResult()
    configs, fns = [], []
    for size in sizes:
        n = size_exp_of(size)
        if n < 2:
            raise ValueError("bench sizes must be at least 4")
        pyr = forward_transform(phong_lobe_map(n))
        build_rotated_pyramid(pyr, rot, n - 1)  # warm caches
        levels = sorted(start_levels or [n - 1, n - 2], reverse=True)
        for level in levels:
            if not 1 <= level <= n - 1:
                continue
            for synthesis in ("recursive", "direct"):
                for fill in (True, False):
                    configs.append((size, level, synthesis, fill))
                    fns.append(lambda p=pyr, l=level, r=synthesis == "recursive", f=fill: build_rotated_pyramid(p, rot, l, r, f))
    for (size, level, synthesis, fill), t in zip(configs, _interleaved_medians(fns, trials)):
        result.rows.append(BenchRow(size, level, synthesis, fill, t))
    for small, large in zip(sizes, sizes[1:]):
        a = result.time_of(small, size_exp_of(small) - 1)
        b = result.time_of(large, size_exp_of(large) - 1)
        result.size_ratios[f"{small}->{large}"] = b / a
    top = sizes[-1]
    levels = sorted({r.start_level for r in result.rows if r.size == top}, reverse=True)
    for fine, coarse in zip(levels, levels[1:]):
        a = result.time_of(top, fine, fill_finer=False)
        b = result.time_of(top, coarse, fill_finer=False)
        result.drop_ratios[f"{top}:{fine}->{coarse}"] = a / b
    return result
