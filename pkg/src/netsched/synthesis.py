"""Static state-feedback design for plants sharing the network.

Per plant, with block activation probability p:

1. pick symmetric PD ``(P_s, P_u)`` with ``A' Pbar A - P_u < 0``
   (``solve_open_loop_feasibility``);
2. find ``Y`` with ``(A P_s^-1 + B Y)' Pbar (A P_s^-1 + B Y) - P_s^-1 < 0``
   (``solve_gain_feasibility``);
3. set ``K = Y P_s``.

Step 2 is the congruence image of ``(A+BK)' Pbar (A+BK) - P_s < 0``, so steps
1-3 together give a certificate for the closed loop. The quadratic form in Y
is minimized in closed form by completing the square, which decides step 2
exactly when ``B' Pbar B`` is invertible.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .certify import DEFAULT_KAPPA, TOL_ND, TOL_PD, StabilityCertificate, _sym, verify_certificate
from .mjls import as_probability
from .model import ModelError, NcsConfig, spectral_radius
from .params import ScheduleParameters

RICCATI_MAX_ITER = 20_000
RICCATI_RTOL = 1e-12
RICCATI_BLOWUP = 1e14


def _check_probability_kappa(p, kappa):
    q = as_probability(p)
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in ]0,1[, got {kappa}")
    return q


def _spd_inverse(P: np.ndarray) -> np.ndarray:
    c = scipy.linalg.cho_factor(P)
    return scipy.linalg.cho_solve(c, np.eye(P.shape[0]))


def open_loop_stein(A, p, p_s_level: float, q: float = 1.0) -> Optional[np.ndarray]:
    """P_u solving ``(1-p) A' P_u A - P_u = -(q I + p s A' A)`` for ``P_s = s I``.

    Solvable with a PD solution iff ``(1-p) rho(A)^2 < 1``; returns None otherwise.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    pf = float(as_probability(p))
    if (1.0 - pf) * spectral_radius(A) ** 2 >= 1.0:
        return None
    Q = q * np.eye(A.shape[0]) + pf * p_s_level * (A.T @ A)
    # solve_discrete_lyapunov(a, Q) solves a X a^H - X + Q = 0
    return _sym(scipy.linalg.solve_discrete_lyapunov(math.sqrt(1.0 - pf) * A.T, Q))


def _stein_pair(A, p, kappa):
    """Band-fitted pair with ``P_s = kappa I`` exactly and ``lambda_max(P_u) = 1``."""
    d = A.shape[0]
    X0 = open_loop_stein(A, p, 0.0, 1.0)
    if X0 is None:
        return None
    X1 = open_loop_stein(A, p, 1.0, 0.0)

    def top(q):
        return np.linalg.eigvalsh(q * X0 + kappa * X1)[-1] - 1.0

    if top(0.0) >= 0.0:
        return None
    q = scipy.optimize.brentq(top, 0.0, 1.0 / np.linalg.eigvalsh(X0)[-1], xtol=1e-15, rtol=1e-14)
    P_u = _sym(q * X0 + kappa * X1)
    # brentq may land a hair above 1
    P_u /= max(1.0, np.linalg.eigvalsh(P_u)[-1])
    return kappa * np.eye(d), P_u


def coupled_riccati_pair(A, B, p, max_iter: int = RICCATI_MAX_ITER):
    """Fixed point of the jump-system Riccati map with control only in the stable mode.

        P_u = I + A' Pbar A
        P_s = I + A' Pbar A - A' Pbar B (B' Pbar B)^+ B' Pbar A

    Iterated from zero; converges (monotonically) iff the plant is mean-square
    stabilizable by a gain active with probability p. Returns None on divergence
    or when the iteration budget runs out.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    pf = float(as_probability(p))
    d = A.shape[0]
    I = np.eye(d)
    P_s = np.zeros((d, d))
    P_u = np.zeros((d, d))
    for _ in range(max_iter):
        P_bar = pf * P_s + (1.0 - pf) * P_u
        open_part = A.T @ P_bar @ A
        BPA = B.T @ P_bar @ A
        new_u = _sym(I + open_part)
        new_s = _sym(I + open_part - BPA.T @ np.linalg.pinv(B.T @ P_bar @ B) @ BPA)
        size = max(np.abs(new_u).max(), np.abs(new_s).max())
        if not np.isfinite(size) or size > RICCATI_BLOWUP:
            return None
        step = max(np.abs(new_u - P_u).max(), np.abs(new_s - P_s).max())
        P_s, P_u = new_s, new_u
        if step <= RICCATI_RTOL * size:
            return P_s, P_u
    return None


def _in_band(P_s, P_u, kappa) -> bool:
    eig = np.concatenate([np.linalg.eigvalsh(P_s), np.linalg.eigvalsh(P_u)])
    return eig.max() <= 1.0 + TOL_PD and eig.min() >= kappa * (1.0 - TOL_PD)


def solve_open_loop_feasibility(A, p, kappa: float = DEFAULT_KAPPA, B=None):
    """A pair ``(P_s, P_u)`` in the band ``[kappa I, I]`` with ``A' Pbar A - P_u < 0``.

    Without ``B`` the pair has ``P_s = kappa I`` and ``P_u`` from a Stein
    equation. With ``B`` the pair is the coupled Riccati fixed point, which
    satisfies the same inequality and also leaves room for the gain step; when
    that iteration fails the Stein pair is returned instead. None when
    ``(1-p) rho(A)^2 >= 1`` (no pair exists) or the band cannot be met.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    q = _check_probability_kappa(p, kappa)
    if (1.0 - float(q)) * spectral_radius(A) ** 2 >= 1.0:
        return None
    pair = None
    if B is not None:
        pair = coupled_riccati_pair(A, B, q)
        if pair is not None:
            top = max(np.linalg.eigvalsh(pair[0])[-1], np.linalg.eigvalsh(pair[1])[-1])
            pair = (pair[0] / top, pair[1] / top)
            if not _in_band(*pair, kappa):
                pair = None
    if pair is None:
        pair = _stein_pair(A, q, kappa)
    if pair is None or not _in_band(*pair, kappa):
        return None
    P_s, P_u = pair
    pf = float(q)
    R_u = A.T @ (pf * P_s + (1.0 - pf) * P_u) @ A - P_u
    if np.linalg.eigvalsh(_sym(R_u))[-1] >= -TOL_ND * (1.0 + np.linalg.norm(P_u)):
        return None
    return P_s, P_u


def gain_quadratic_form(A, B, Y, P_s, P_u, p) -> np.ndarray:
    """``F(Y) = (A P_s^-1 + B Y)' Pbar (A P_s^-1 + B Y)``."""
    pf = float(as_probability(p))
    P_bar = pf * P_s + (1.0 - pf) * P_u
    C = A @ _spd_inverse(P_s) + B @ Y
    return _sym(C.T @ P_bar @ C)


def gain_feasibility_margin(A, B, Y, P_s, P_u, p) -> float:
    """lambda_max of ``P_s (F(Y) - P_s^-1) P_s``; negative iff Y is feasible.

    The congruence by P_s keeps the sign and turns the test into the
    closed-loop residual ``(A+BK)' Pbar (A+BK) - P_s`` with ``K = Y P_s``,
    which is well scaled even when P_s is nearly singular.
    """
    pf = float(as_probability(p))
    P_bar = pf * P_s + (1.0 - pf) * P_u
    A_s = A + B @ (Y @ P_s)
    return float(np.linalg.eigvalsh(_sym(A_s.T @ P_bar @ A_s - P_s))[-1])


def solve_gain_feasibility(A, B, P_s, P_u, p) -> Optional[np.ndarray]:
    """Completed-square minimizer ``Y* = -(B' W B)^+ B' W A P_s^-1`` with ``W = Pbar``, if feasible."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    P_s = np.asarray(P_s, dtype=float)
    P_u = np.asarray(P_u, dtype=float)
    pf = float(as_probability(p))
    W = pf * P_s + (1.0 - pf) * P_u
    try:
        P_s_inv = _spd_inverse(P_s)
        scipy.linalg.cho_factor(W)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"P_s and Pbar must be positive definite: {exc}") from None
    Y = -np.linalg.pinv(B.T @ W @ B) @ B.T @ W @ A @ P_s_inv
    tol = TOL_ND * (1.0 + np.linalg.norm(W, "fro"))
    if gain_feasibility_margin(A, B, Y, P_s, P_u, pf) < -tol:
        return Y
    return None


def compute_gain(Y, P_s) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    P_s = np.atleast_2d(np.asarray(P_s, dtype=float))
    if Y.shape[1] != P_s.shape[0]:
        raise ModelError(f"Y {Y.shape} and P_s {P_s.shape} are not conformable")
    return Y @ P_s


def gain_block_matrix(A, B, Y, P_s, P_u, p) -> np.ndarray:
    """``[[-Pbar^-1, A P_s^-1 + B Y], [*, -P_s^-1]]``."""
    pf = float(as_probability(p))
    P_bar = pf * P_s + (1.0 - pf) * P_u
    C = A @ _spd_inverse(P_s) + B @ Y
    return _sym(np.block([[-_spd_inverse(P_bar), C], [C.T, -_spd_inverse(P_s)]]))


def closed_loop_block_matrix(A_s, P_s, P_u, p) -> np.ndarray:
    """``[[-Pbar, Pbar A_s], [*, -P_s]]``, negative definite iff the stable-mode residual is."""
    pf = float(as_probability(p))
    P_bar = pf * P_s + (1.0 - pf) * P_u
    return _sym(np.block([[-P_bar, P_bar @ A_s], [(P_bar @ A_s).T, -P_s]]))


@dataclass(frozen=True, eq=False)
class PlantSynthesis:
    index: int
    p: object
    K: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None
    certificate: Optional[StabilityCertificate] = None
    reason: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.reason is None


@dataclass(frozen=True)
class SynthesisResult:
    plants: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.plants)

    @property
    def gains(self) -> dict:
        return {r.index: r.K for r in self.plants if r.ok}

    @property
    def certificates(self) -> dict:
        return {r.index: r.certificate for r in self.plants if r.ok}

    def failures(self) -> dict:
        return {r.index: r.reason for r in self.plants if not r.ok}

    def apply(self, config: NcsConfig) -> NcsConfig:
        """Config with every successfully synthesized gain installed (old gains overwritten)."""
        return config.with_gains(self.gains)


def synthesize_plant(A, B, p, kappa: float = DEFAULT_KAPPA, index: int = 0) -> PlantSynthesis:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    q = _check_probability_kappa(p, kappa)
    pair = solve_open_loop_feasibility(A, q, kappa, B=B)
    if pair is None:
        return PlantSynthesis(index, q, reason="open-loop feasibility")
    P_s, P_u = pair
    Y = solve_gain_feasibility(A, B, P_s, P_u, q)
    if Y is None:
        return PlantSynthesis(index, q, reason="gain feasibility")
    K = compute_gain(Y, P_s)
    cert = StabilityCertificate(q, P_s, P_u, kappa)
    check = verify_certificate(A + B @ K, A, cert, band="strict")
    if not check:
        return PlantSynthesis(index, q, K=K, Y=Y, reason="certificate verification: " + "; ".join(check.diagnostics))
    return PlantSynthesis(index, q, K=K, Y=Y, certificate=cert)


def synthesize_controllers(
    config: NcsConfig, params: ScheduleParameters, kappa: float = DEFAULT_KAPPA, threads: int = 1
) -> SynthesisResult:
    if params.partition.N != config.N or params.partition.M != config.M:
        raise ValueError(
            f"partition covers N={params.partition.N}, M={params.partition.M}; config has N={config.N}, M={config.M}"
        )

    def one(plant):
        return synthesize_plant(plant.A, plant.B, params.probability_of(plant.index), kappa, plant.index)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, config.plants))
    else:
        results = [one(pl) for pl in config.plants]
    return SynthesisResult(tuple(sorted(results, key=lambda r: r.index)))
