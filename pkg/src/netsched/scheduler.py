"""Schedule generation: i.i.d. block draws and frequency-exact shuffles."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .params import Partition, ProbabilityVector, ScheduleParameters
from .rng import derive_rng

__all__ = [
    "FrequencyTable",
    "Partition",
    "ProbabilityVector",
    "Schedule",
    "ScheduleParameters",
    "frequency_table",
    "generate_schedule_exact",
    "generate_schedule_iid",
    "mode_signal",
    "mode_matrix",
    "write_schedule_csv",
]

STABLE = "s"
UNSTABLE = "u"


@dataclass(frozen=True)
class FrequencyTable:
    counts: tuple

    @property
    def T(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True, eq=False)
class Schedule:
    """Block indices ``seq[t]`` in 1..v for t = 0..T-1."""

    seq: np.ndarray
    seed: int
    mode: str

    def __post_init__(self):
        seq = np.asarray(self.seq, dtype=np.int64)
        seq.setflags(write=False)
        object.__setattr__(self, "seq", seq)

    @property
    def T(self) -> int:
        return len(self.seq)

    def counts(self, v: int) -> tuple:
        return tuple(int(c) for c in np.bincount(self.seq - 1, minlength=v))

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return self.mode == other.mode and self.seed == other.seed and np.array_equal(self.seq, other.seq)


def frequency_table(probs: Sequence, T: int) -> FrequencyTable:
    """Counts ``p_j T``; non-integer products use largest-remainder rounding (ties to lower index)."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    quotas = [Fraction(p) * T for p in probs]
    counts = [math.floor(q) for q in quotas]
    left = T - sum(counts)
    order = sorted(range(len(quotas)), key=lambda j: (-(quotas[j] - counts[j]), j))
    for j in order[:left]:
        counts[j] += 1
    return FrequencyTable(tuple(counts))


def generate_schedule_exact(params: ScheduleParameters, T: int, seed: int, index: int = 0) -> Schedule:
    """Uniform random ordering of the multiset holding ``f_j`` copies of block j.

    The shuffle is Fisher-Yates over an explicit length-T array.
    """
    table = frequency_table(params.probabilities, T)
    seq = np.repeat(np.arange(1, params.v + 1), table.counts)
    derive_rng(seed, "schedule-exact", index).shuffle(seq)
    return Schedule(seq, seed, "exact")


def generate_schedule_iid(params: ScheduleParameters, T: int, seed: int, index: int = 0) -> Schedule:
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    probs = np.array([float(p) for p in params.probabilities])
    rng = derive_rng(seed, "schedule-iid", index)
    seq = rng.choice(np.arange(1, params.v + 1), size=T, p=probs / probs.sum())
    return Schedule(seq, seed, "iid")


def generate_schedule(params: ScheduleParameters, T: int, seed: int, mode: str = "exact", index: int = 0) -> Schedule:
    if mode == "exact":
        return generate_schedule_exact(params, T, seed, index)
    if mode == "iid":
        return generate_schedule_iid(params, T, seed, index)
    raise ValueError(f"unknown schedule mode {mode!r} (expected 'iid' or 'exact')")


def _membership(params: ScheduleParameters, plant_index: int) -> np.ndarray:
    """Boolean lookup ``in_block[j]`` for j = 1..v (index 0 unused)."""
    N = params.partition.N
    if not 1 <= plant_index <= N:
        raise KeyError(f"unknown plant index {plant_index}")
    in_block = np.zeros(params.v + 1, dtype=bool)
    in_block[params.partition.block_of(plant_index)] = True
    return in_block


def mode_matrix(seqs: np.ndarray, params: ScheduleParameters, plant_index: int) -> np.ndarray:
    """True where the plant is in the active block; works on any array of block indices."""
    return _membership(params, plant_index)[np.asarray(seqs)]


def mode_signal(schedule: Schedule, params: ScheduleParameters, plant_index: int) -> tuple:
    stable = mode_matrix(schedule.seq, params, plant_index)
    return tuple(STABLE if s else UNSTABLE for s in stable)


def write_schedule_csv(path, schedule: Schedule, params: ScheduleParameters) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "block_index", "plants"])
        for t, j in enumerate(schedule.seq):
            w.writerow([t, int(j), ",".join(str(i) for i in params.partition.blocks[j - 1])])
