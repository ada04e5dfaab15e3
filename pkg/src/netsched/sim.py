"""Trajectory simulation under a schedule and Monte Carlo cost estimates."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import GainMissingError, ModelError, NcsConfig, PlantModel, closed_loop_matrix
from .params import ScheduleParameters
from .scheduler import STABLE, Schedule, generate_schedule_iid, mode_matrix

OVERFLOW_GUARD = 1e150
AGREEMENT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Trajectory:
    plant: int
    states: np.ndarray  # (T+1, d)
    modes: np.ndarray  # (T,) True = stable (closed loop)

    @property
    def T(self) -> int:
        return len(self.modes)

    @property
    def norms_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.states, self.states)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    trials: int
    horizon: int
    tail_ratio: float
    diverged: bool
    diverged_trials: int = 0


def _as_modes(modes) -> np.ndarray:
    if isinstance(modes, str):
        modes = list(modes)
    arr = np.asarray(modes)
    if arr.dtype == bool:
        return arr
    if arr.dtype.kind in "US":
        bad = set(arr.tolist()) - {"s", "u"}
        if bad:
            raise ModelError(f"modes must be 's' or 'u', got {sorted(bad)}")
        return arr == STABLE
    return arr.astype(bool)


def simulate_plant(plant: PlantModel, modes, x0) -> Trajectory:
    """Run ``x(t+1) = A_sigma(t) x(t)`` and cross-check it against ``A x + B u``."""
    if not plant.has_gain:
        raise GainMissingError(plant.index)
    stable = _as_modes(modes)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (plant.d,):
        raise ModelError(f"initial state has length {x0.size}, expected {plant.d}")
    A_s = closed_loop_matrix(plant)
    T = len(stable)
    states = np.empty((T + 1, plant.d))
    direct = np.empty_like(states)
    states[0] = direct[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for t, s in enumerate(stable):
            states[t + 1] = (A_s if s else plant.A) @ states[t]
            u = plant.K @ direct[t] if s else np.zeros(plant.m)
            direct[t + 1] = plant.A @ direct[t] + plant.B @ u
    # rounding errors scale with the largest state seen so far and the size of
    # the operators involved (A + BK may cancel to nearly zero)
    weight = 1.0 + np.linalg.norm(plant.A, 2) + np.linalg.norm(plant.B, 2) * np.linalg.norm(plant.K, 2)
    with np.errstate(over="ignore", invalid="ignore"):
        peak = np.maximum.accumulate(np.abs(states).max(axis=1))
    finite = np.all(np.isfinite(states), axis=1) & (peak < OVERFLOW_GUARD)
    scale = np.maximum(peak[finite] * weight, np.finfo(float).tiny)
    gap = np.abs(states[finite] - direct[finite]).max(axis=1) / scale
    if gap.size and gap.max() > AGREEMENT_RTOL * max(1, T):
        raise ArithmeticError(f"mode-matrix and input forms disagree: relative gap {gap.max():.3g}")
    return Trajectory(plant.index, states, stable)


def cumulative_cost(traj: Trajectory, horizon: Optional[int] = None) -> np.ndarray:
    """Partial sums ``sum_{t<=tau} |x(t)|^2`` for tau = 0..horizon."""
    if horizon is None:
        horizon = traj.T
    if not 0 <= horizon <= traj.T:
        raise ValueError(f"horizon {horizon} outside 0..{traj.T}")
    return np.cumsum(traj.norms_sq[: horizon + 1])


def tail_increment_ratio(partial_sums, window: Optional[int] = None) -> float:
    """Growth over the last ``window`` steps (default: last decile) relative to the total."""
    s = np.asarray(partial_sums, dtype=float)
    if window is None:
        window = max(1, (len(s) - 1) // 10)
    total = s[-1]
    if total == 0:
        return 0.0
    if not np.isfinite(total):
        return float("inf")
    return float((total - s[-1 - window]) / total)


def _mc_chunk(A_s, A_u, params, plant_index, x0, T, seed, trials, window):
    n = len(trials)
    seqs = np.stack([generate_schedule_iid(params, T, seed, index=k).seq for k in trials])
    stable = mode_matrix(seqs, params, plant_index)
    x = np.tile(x0, (n, 1))
    cost = np.einsum("ij,ij->i", x, x)
    at_window = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    for t in range(T):
        if t == T - window:
            at_window = cost.copy()
        nxt = np.where(stable[:, t, None], x @ A_s.T, x @ A_u.T)
        sq = np.einsum("ij,ij->i", nxt, nxt)
        blown = alive & ~(sq < OVERFLOW_GUARD**2)
        alive &= ~blown
        cost = np.where(alive, cost + sq, cost)
        x = np.where(alive[:, None], nxt, 0.0)
    return cost, at_window, ~alive


def estimate_stochastic_stability(
    plant: PlantModel,
    params: ScheduleParameters,
    x0,
    T: int,
    trials: int,
    seed: int,
    threads: int = 1,
) -> MonteCarloEstimate:
    """Average truncated cost ``sum_{t=0}^{T} |x(t)|^2`` over independent i.i.d. schedules.

    Trial k uses the schedule stream ``(seed, k)``, so results do not depend on
    ``threads``. Trials whose state norm passes the overflow guard stop
    accumulating and set the divergence flag.
    """
    if trials < 1 or T < 1:
        raise ValueError("need at least one trial and a horizon of at least one step")
    if not plant.has_gain:
        raise GainMissingError(plant.index)
    A_s = closed_loop_matrix(plant)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (plant.d,):
        raise ModelError(f"initial state has length {x0.size}, expected {plant.d}")
    window = max(1, T // 10)
    chunk = 2048
    ids = [range(i, min(i + chunk, trials)) for i in range(0, trials, chunk)]

    def run(r):
        return _mc_chunk(A_s, plant.A, params, plant.index, x0, T, seed, r, window)

    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, ids))
    else:
        parts = [run(r) for r in ids]
    cost = np.concatenate([p[0] for p in parts])
    before = np.concatenate([p[1] for p in parts])
    blown = np.concatenate([p[2] for p in parts])
    with np.errstate(over="ignore", invalid="ignore"):
        mean = float(cost.mean())
        stderr = float(cost.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    tail = 0.0 if mean == 0 else float((mean - before.mean()) / mean)
    return MonteCarloEstimate(
        mean=mean,
        stderr=stderr,
        trials=trials,
        horizon=T,
        tail_ratio=tail,
        diverged=bool(blown.any()),
        diverged_trials=int(blown.sum()),
    )


def simulate_ncs(
    config: NcsConfig, schedule: Schedule, params: ScheduleParameters, x0s: dict
) -> dict:
    """All plants advanced in lockstep under one shared schedule; returns ``{index: Trajectory}``."""
    missing = [p.index for p in config.plants if not p.has_gain]
    if missing:
        raise GainMissingError(missing[0] if len(missing) == 1 else missing)
    out = {}
    for plant in config.plants:
        modes = mode_matrix(schedule.seq, params, plant.index)
        out[plant.index] = simulate_plant(plant, modes, x0s[plant.index])
    return out


def write_trajectory_csv(path, trajectories: Sequence[Trajectory]) -> None:
    d = max(tr.states.shape[1] for tr in trajectories)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "plant", "mode", "norm_sq"] + [f"x_{k}" for k in range(1, d + 1)])
        for tr in trajectories:
            norms = tr.norms_sq
            for t in range(tr.T + 1):
                mode = ("s" if tr.modes[t] else "u") if t < tr.T else ""
                coords = [repr(float(c)) for c in tr.states[t]]
                w.writerow([t, tr.plant, mode, repr(float(norms[t]))] + coords + [""] * (d - len(coords)))


def write_cost_csv(path, trajectories: Sequence[Trajectory]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "plant", "partial_sum"])
        for tr in trajectories:
            for t, s in enumerate(cumulative_cost(tr)):
                w.writerow([t, tr.plant, repr(float(s))])
