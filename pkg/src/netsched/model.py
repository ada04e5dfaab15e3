"""Plant and NCS data model, assumption checks, random benchmark generation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .rng import derive_rng

# strict inequalities in the stability conditions need explicit margins
TOL_SPECTRAL = 1e-9
TOL_RANK = 1e-9
MAX_RESAMPLE = 10_000


class ModelError(ValueError):
    """Malformed plant or network data."""


class GainMissingError(ModelError):
    def __init__(self, index=None):
        msg = "gain not set" if index is None else f"gain not set for plant {index}"
        super().__init__(msg)


class GenerationError(RuntimeError):
    pass


def _as_matrix(name: str, value, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a flat vector is read as a column (B of a single-input plant) unless cols says otherwise
        arr = arr.reshape(1, -1) if rows == 1 else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ModelError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise ModelError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PlantModel:
    """One discrete-time plant ``x(t+1) = A x(t) + B u(t)`` with optional gain ``u = K x``."""

    index: int
    A: np.ndarray
    B: np.ndarray
    K: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.index) != self.index or self.index < 1:
            raise ModelError(f"plant index must be a positive integer, got {self.index!r}")
        A = _as_matrix("A", self.A)
        if A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got shape {A.shape}")
        d = A.shape[0]
        B = _as_matrix("B", self.B, rows=d)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.K is not None:
            object.__setattr__(self, "K", _as_matrix("K", self.K, rows=B.shape[1], cols=d))

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def has_gain(self) -> bool:
        return self.K is not None

    def with_gain(self, K) -> "PlantModel":
        return replace(self, K=K)

    def __eq__(self, other):
        if not isinstance(other, PlantModel):
            return NotImplemented
        if self.index != other.index or (self.K is None) != (other.K is None):
            return False
        same = np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)
        if self.K is not None:
            same = same and np.array_equal(self.K, other.K)
        return bool(same)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ModeMatrices:
    """Closed-loop (stable mode) and open-loop (unstable mode) dynamics of one plant."""

    stable: np.ndarray
    unstable: np.ndarray

    @classmethod
    def from_plant(cls, plant: PlantModel) -> "ModeMatrices":
        return cls(stable=closed_loop_matrix(plant), unstable=plant.A)


@dataclass(frozen=True)
class NcsConfig:
    plants: tuple
    M: int

    def __post_init__(self):
        plants = tuple(self.plants)
        object.__setattr__(self, "plants", plants)
        N = len(plants)
        if not (0 < self.M < N):
            raise ModelError(f"capacity must satisfy 0<M<N (got M={self.M}, N={N})")
        indices = sorted(p.index for p in plants)
        if indices != list(range(1, N + 1)):
            raise ModelError(f"plant indices must be exactly 1..{N}, got {indices}")
        object.__setattr__(self, "plants", tuple(sorted(plants, key=lambda p: p.index)))

    @property
    def N(self) -> int:
        return len(self.plants)

    @property
    def v(self) -> int:
        return self.N // self.M

    def plant(self, index: int) -> PlantModel:
        if not 1 <= index <= self.N:
            raise KeyError(f"unknown plant index {index}")
        return self.plants[index - 1]

    def with_gains(self, gains: dict) -> "NcsConfig":
        plants = [p.with_gain(gains[p.index]) if p.index in gains else p for p in self.plants]
        return NcsConfig(plants=tuple(plants), M=self.M)

    @property
    def all_gains_set(self) -> bool:
        return all(p.has_gain for p in self.plants)


@dataclass(frozen=True)
class PlantFlags:
    index: int
    open_loop_unstable: bool
    closed_loop_stable: bool
    controllable: bool

    @property
    def passed(self) -> bool:
        return self.open_loop_unstable and self.closed_loop_stable and self.controllable


@dataclass(frozen=True)
class AssumptionReport:
    plants: tuple = field(default_factory=tuple)
    divisible: bool = True

    @property
    def passed(self) -> bool:
        return self.divisible and all(f.passed for f in self.plants)

    def failures(self) -> list[str]:
        out = []
        for f in self.plants:
            if not f.open_loop_unstable:
                out.append(f"plant {f.index}: A is Schur stable (expected open-loop unstable)")
            if not f.closed_loop_stable:
                out.append(f"plant {f.index}: A+BK is not Schur stable")
            if not f.controllable:
                out.append(f"plant {f.index}: (A, B) is not controllable")
        if not self.divisible:
            out.append("N % M != 0")
        return out


def closed_loop_matrix(plant: PlantModel) -> np.ndarray:
    if plant.K is None:
        raise GainMissingError()
    return plant.A + plant.B @ plant.K


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ModelError(f"expected a square matrix, got shape {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def is_schur_stable(M, tol: float = TOL_SPECTRAL) -> bool:
    return spectral_radius(M) < 1.0 - tol


def controllability_matrix(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise ModelError(f"dimension mismatch: A {A.shape}, B {B.shape}")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol: float = TOL_RANK) -> bool:
    """Kalman rank test; singular values below ``tol * s_max`` count as zero."""
    C = controllability_matrix(A, B)
    s = np.linalg.svd(C, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False
    return int(np.sum(s > tol * s[0])) == C.shape[0]


def check_assumptions(config: NcsConfig) -> AssumptionReport:
    flags = []
    for plant in config.plants:
        closed = plant.has_gain and is_schur_stable(closed_loop_matrix(plant))
        flags.append(
            PlantFlags(
                index=plant.index,
                open_loop_unstable=not is_schur_stable(plant.A),
                closed_loop_stable=bool(closed),
                controllable=is_controllable(plant.A, plant.B),
            )
        )
    return AssumptionReport(plants=tuple(flags), divisible=config.N % config.M == 0)


def generate_random_ncs(N: int, d: int, seed: int, M: int = 1, m: int = 1) -> NcsConfig:
    """Random unstable, controllable plants: A uniform on [-2, 2], B uniform on {0, 1}.

    Draws are rejection-sampled per plant from a stream derived from ``(seed, plant)``.
    """
    if N < 2 or d < 1:
        raise ModelError(f"need N >= 2 and d >= 1 (got N={N}, d={d})")
    plants = []
    for i in range(1, N + 1):
        rng = derive_rng(seed, "generate", i)
        for _ in range(MAX_RESAMPLE):
            A = rng.uniform(-2.0, 2.0, size=(d, d))
            B = rng.integers(0, 2, size=(d, m)).astype(float)
            if not is_schur_stable(A) and is_controllable(A, B):
                plants.append(PlantModel(index=i, A=A, B=B))
                break
        else:
            raise GenerationError(f"plant {i}: no unstable controllable draw in {MAX_RESAMPLE} attempts")
    return NcsConfig(plants=tuple(plants), M=M)


def stack_plants(matrices: Sequence[tuple], M: int) -> NcsConfig:
    """Build a config from ``(A, B)`` or ``(A, B, K)`` tuples numbered 1..N."""
    plants = [PlantModel(i, *mats) for i, mats in enumerate(matrices, start=1)]
    return NcsConfig(plants=tuple(plants), M=M)
