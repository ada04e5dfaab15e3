"""Stability certificates for one plant under activation probability p.

A certificate is a pair of symmetric positive definite matrices (P_s, P_u)
with, for ``Pbar = p P_s + (1-p) P_u``,

    A_s' Pbar A_s - P_s < 0   and   A_u' Pbar A_u - P_u < 0.

``find_certificate`` does not run a semidefinite solver. With identical
transition rows the two inequalities are the coupled Lyapunov conditions
of an i.i.d. jump system, so it solves the coupled Stein equations with
right-hand side -I exactly (a 2 d^2 linear system), then checks positive
definiteness and re-verifies the residuals by eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .mjls import _square_pair, as_probability
from .model import ModelError

DEFAULT_KAPPA = 1e-8
TOL_SYM = 1e-12
TOL_PD = 1e-10
TOL_ND = 1e-9


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def _is_symmetric(X: np.ndarray, tol: float = TOL_SYM) -> bool:
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    return bool(np.max(np.abs(X - X.T), initial=0.0) <= tol * scale)


@dataclass(frozen=True, eq=False)
class StabilityCertificate:
    p: Fraction
    P_s: np.ndarray
    P_u: np.ndarray
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        object.__setattr__(self, "p", as_probability(self.p))
        P_s = np.atleast_2d(np.array(self.P_s, dtype=float))
        P_u = np.atleast_2d(np.array(self.P_u, dtype=float))
        if P_s.shape != P_u.shape or P_s.shape[0] != P_s.shape[1]:
            raise ModelError(f"P_s {P_s.shape} and P_u {P_u.shape} must be square and equal-sized")
        object.__setattr__(self, "P_s", P_s)
        object.__setattr__(self, "P_u", P_u)

    @property
    def d(self) -> int:
        return self.P_s.shape[0]

    @property
    def P_bar(self) -> np.ndarray:
        p = float(self.p)
        return p * self.P_s + (1.0 - p) * self.P_u

    def scaled(self, c: float) -> "StabilityCertificate":
        return StabilityCertificate(self.p, c * self.P_s, c * self.P_u, self.kappa)

    def normalized(self) -> "StabilityCertificate":
        """Same certificate scaled so that the largest eigenvalue of the pair is 1."""
        top = max(np.linalg.eigvalsh(_sym(self.P_s))[-1], np.linalg.eigvalsh(_sym(self.P_u))[-1])
        if top <= 0:
            raise ValueError("cannot normalize a certificate with no positive eigenvalue")
        return self.scaled(1.0 / top)


@dataclass(frozen=True, eq=False)
class ResidualPair:
    R_s: np.ndarray
    R_u: np.ndarray

    @property
    def margins(self) -> tuple[float, float]:
        return float(np.linalg.eigvalsh(self.R_s)[-1]), float(np.linalg.eigvalsh(self.R_u)[-1])


@dataclass(frozen=True, eq=False)
class Verification:
    ok: bool
    diagnostics: tuple = ()
    residuals: Optional[ResidualPair] = None

    def __bool__(self):
        return self.ok


def condition_residuals(A_s, A_u, cert: StabilityCertificate) -> ResidualPair:
    A_s, A_u = _square_pair(A_s, A_u)
    if A_s.shape != cert.P_s.shape:
        raise ModelError(f"mode matrices {A_s.shape} do not match certificate {cert.P_s.shape}")
    P_bar = cert.P_bar
    R_s = A_s.T @ P_bar @ A_s - cert.P_s
    R_u = A_u.T @ P_bar @ A_u - cert.P_u
    return ResidualPair(R_s=_sym(R_s), R_u=_sym(R_u))


def verify_certificate(A_s, A_u, cert: StabilityCertificate, band: str = "scaled") -> Verification:
    """Check symmetry, definiteness, the kappa band and both residual inequalities.

    ``band="strict"`` requires ``kappa I <= P_k <= I`` literally. ``band="scaled"``
    checks the band after normalizing the pair by its largest eigenvalue; the
    residual conditions are homogeneous, so this is the scale-free form of the
    same requirement (a condition-number bound of 1/kappa). ``band=None`` skips it.
    """
    if band not in ("scaled", "strict", None):
        raise ValueError(f"unknown band mode {band!r}")
    diag = []
    for name, P in (("P_s", cert.P_s), ("P_u", cert.P_u)):
        if not _is_symmetric(P):
            diag.append(f"symmetry violated: {name}")
    if diag:
        return Verification(False, tuple(diag))

    eig_s = np.linalg.eigvalsh(cert.P_s)
    eig_u = np.linalg.eigvalsh(cert.P_u)
    top = max(eig_s[-1], eig_u[-1])
    low = min(eig_s[0], eig_u[0])
    if top <= 0 or low <= TOL_PD * top:
        diag.append(f"not positive definite: min eigenvalue {low:.6g}")
    elif band is not None:
        scale = 1.0 if band == "strict" else top
        if top / scale > 1.0 + TOL_PD:
            diag.append(f"band violated: max eigenvalue {top:.6g} > 1")
        if low / scale < cert.kappa * (1.0 - TOL_PD):
            diag.append(f"band violated: min eigenvalue {low / scale:.6g} < kappa={cert.kappa:g}")

    res = condition_residuals(A_s, A_u, cert)
    tol = TOL_ND * (1.0 + np.linalg.norm(cert.P_bar, "fro"))
    m_s, m_u = res.margins
    if not m_s < -tol:
        diag.append(f"stable-mode residual not negative definite: lambda_max={m_s:.6g}")
    if not m_u < -tol:
        diag.append(f"unstable-mode residual not negative definite: lambda_max={m_u:.6g}")
    return Verification(not diag, tuple(diag), res)


def coupled_stein_solve(A_s, A_u, p, Q_s=None, Q_u=None):
    """Solve ``A_k' (p P_s + (1-p) P_u) A_k - P_k = -Q_k`` for k in {s, u}.

    Returns the symmetrized ``(P_s, P_u)`` or None when the system is singular.
    """
    A_s, A_u = _square_pair(A_s, A_u)
    d = A_s.shape[0]
    pf = float(as_probability(p))
    I = np.eye(d * d)
    # row-major vec: vec(A' X A) = kron(A', A') vec(X)
    K_s = np.kron(A_s.T, A_s.T)
    K_u = np.kron(A_u.T, A_u.T)
    lhs = np.block([[pf * K_s - I, (1.0 - pf) * K_s], [pf * K_u, (1.0 - pf) * K_u - I]])
    Q_s = np.eye(d) if Q_s is None else np.asarray(Q_s, dtype=float)
    Q_u = np.eye(d) if Q_u is None else np.asarray(Q_u, dtype=float)
    rhs = -np.concatenate([Q_s.reshape(-1), Q_u.reshape(-1)])
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return _sym(sol[: d * d].reshape(d, d)), _sym(sol[d * d :].reshape(d, d))


def find_certificate(A_s, A_u, p, kappa: float = DEFAULT_KAPPA) -> Optional[StabilityCertificate]:
    """Certificate for (A_s, A_u, p) scaled into ``[kappa I, I]``, or None ("no solution found")."""
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in ]0,1[, got {kappa}")
    q = as_probability(p)
    pair = coupled_stein_solve(A_s, A_u, q)
    if pair is None:
        return None
    P_s, P_u = pair
    eig_s = np.linalg.eigvalsh(P_s)
    eig_u = np.linalg.eigvalsh(P_u)
    top = max(eig_s[-1], eig_u[-1])
    if top <= 0 or min(eig_s[0], eig_u[0]) <= TOL_PD * top:
        return None
    cert = StabilityCertificate(q, P_s / top, P_u / top, kappa)
    if not verify_certificate(A_s, A_u, cert, band="strict"):
        return None
    return cert
