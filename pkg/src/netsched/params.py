"""Schedule parameters: a partition of the plants and one probability per block."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .mjls import as_probability


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    """Disjoint M-subsets of ``{1..N}`` covering every plant exactly once.

    Each block is stored sorted; block order is kept as given (it pairs with
    the probability vector). ``canonical()`` orders blocks by smallest element.
    """

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        if not blocks or any(not b for b in blocks):
            raise PartitionError("partition needs at least one non-empty block")
        sizes = {len(b) for b in blocks}
        if len(sizes) != 1:
            raise PartitionError(f"blocks must all have the same size, got sizes {sorted(sizes)}")
        flat = [i for b in blocks for i in b]
        if len(flat) != len(set(flat)):
            raise PartitionError("blocks are not disjoint")
        if sorted(flat) != list(range(1, len(flat) + 1)):
            raise PartitionError(f"blocks must cover exactly 1..{len(flat)}")
        object.__setattr__(self, "blocks", blocks)

    def canonical(self) -> "Partition":
        return Partition(tuple(sorted(self.blocks, key=lambda b: b[0])))

    @property
    def v(self) -> int:
        return len(self.blocks)

    @property
    def M(self) -> int:
        return len(self.blocks[0])

    @property
    def N(self) -> int:
        return self.v * self.M

    def block_of(self, plant: int) -> int:
        """1-based index of the unique block containing ``plant``."""
        hits = [j for j, b in enumerate(self.blocks, start=1) if plant in b]
        if len(hits) != 1:
            raise KeyError(f"plant {plant} is in {len(hits)} blocks")
        return hits[0]

    def as_lists(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]


@dataclass(frozen=True)
class ProbabilityVector:
    values: tuple

    def __post_init__(self):
        vals = tuple(as_probability(p) for p in self.values)
        if sum(vals, Fraction(0)) != 1:
            raise ValueError(f"probabilities must sum to exactly 1, got {sum(vals)}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, j):
        return self.values[j]

    def as_strings(self) -> list[str]:
        return [str(p) for p in self.values]


@dataclass(frozen=True)
class ScheduleParameters:
    partition: Partition
    probabilities: ProbabilityVector

    def __post_init__(self):
        if not isinstance(self.partition, Partition):
            object.__setattr__(self, "partition", Partition(self.partition))
        if not isinstance(self.probabilities, ProbabilityVector):
            object.__setattr__(self, "probabilities", ProbabilityVector(tuple(self.probabilities)))
        if len(self.probabilities) != self.partition.v:
            raise ValueError(
                f"{len(self.probabilities)} probabilities for {self.partition.v} blocks"
            )

    @property
    def v(self) -> int:
        return self.partition.v

    def probability_of(self, plant: int) -> Fraction:
        return self.probabilities[self.partition.block_of(plant) - 1]

    @classmethod
    def from_lists(cls, blocks: Iterable, probabilities: Iterable) -> "ScheduleParameters":
        return cls(Partition(tuple(blocks)), ProbabilityVector(tuple(probabilities)))
