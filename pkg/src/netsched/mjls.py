"""Markov-jump view of one plant under a probabilistic schedule.

Because every row of the mode transition matrix is ``[p, 1-p]``, the mode
sequence is i.i.d. and the state second moment obeys a linear recursion
``vec(X(t+1)) = M vec(X(t))`` with
``M = p (A_s kron A_s) + (1-p) (A_u kron A_u)``. That operator gives an
exact stability test and a closed form for the expected quadratic cost,
independent of any Lyapunov-type certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np
import scipy.linalg

from .model import TOL_SPECTRAL, ModelError, spectral_radius


class DivergentExpectationError(ArithmeticError):
    pass


def as_probability(p) -> Fraction:
    """Exact rational in ]0, 1[. Floats are converted exactly (binary value)."""
    if isinstance(p, str):
        q = Fraction(p)
    elif isinstance(p, (Rational, float)):
        q = Fraction(p)
    else:
        raise TypeError(f"probability must be rational, got {type(p).__name__}")
    if not 0 < q < 1:
        raise ValueError(f"probability must lie in ]0,1[, got {q}")
    return q


@dataclass(frozen=True)
class TransitionMatrix:
    p: Fraction

    @property
    def rows(self) -> tuple:
        return ((self.p, 1 - self.p), (self.p, 1 - self.p))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)


def transition_matrix(p) -> TransitionMatrix:
    return TransitionMatrix(as_probability(p))


def _square_pair(A_s, A_u):
    A_s = np.atleast_2d(np.asarray(A_s, dtype=float))
    A_u = np.atleast_2d(np.asarray(A_u, dtype=float))
    if A_s.shape != A_u.shape or A_s.shape[0] != A_s.shape[1]:
        raise ModelError(f"mode matrices must be square and conformable: {A_s.shape} vs {A_u.shape}")
    return A_s, A_u


@dataclass(frozen=True, eq=False)
class SecondMomentOperator:
    matrix: np.ndarray
    p: Fraction
    stable: np.ndarray
    unstable: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.matrix)


def second_moment_operator(A_s, A_u, p) -> SecondMomentOperator:
    A_s, A_u = _square_pair(A_s, A_u)
    q = as_probability(p)
    pf = float(q)
    M = pf * np.kron(A_s, A_s) + (1.0 - pf) * np.kron(A_u, A_u)
    return SecondMomentOperator(matrix=M, p=q, stable=A_s, unstable=A_u)


def iid_stability_test(A_s, A_u, p, tol: float = TOL_SPECTRAL) -> bool:
    return second_moment_operator(A_s, A_u, p).spectral_radius < 1.0 - tol


def expected_cost_exact(A_s, A_u, p, x0) -> float:
    """``E[sum_{t>=0} |x(t)|^2]`` with a fresh mode drawn at every step, t=0 included."""
    op = second_moment_operator(A_s, A_u, p)
    d = op.stable.shape[0]
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (d,):
        raise ModelError(f"initial state has length {x0.size}, expected {d}")
    if op.spectral_radius >= 1.0 - TOL_SPECTRAL:
        raise DivergentExpectationError("divergent expectation: second-moment spectral radius >= 1")
    rhs = np.outer(x0, x0).reshape(-1)
    lu = scipy.linalg.lu_factor(np.eye(d * d) - op.matrix)
    total = scipy.linalg.lu_solve(lu, rhs)
    return max(float(np.eye(d).reshape(-1) @ total), 0.0)
