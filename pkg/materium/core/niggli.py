"""
@file niggli.py
@brief Niggli reduction of a lattice (Krivy-Gruber algorithm on the metric tensor).

@details
The reduction works on the metric tensor G = L Lᵀ and tracks the integer basis change, so that the
reduced basis is `T @ L` for the input lattice matrix L. Comparisons use an absolute tolerance
`e = tol * V^(1/3)`.

@references
- I. Krivy, B. Gruber, "A unified algorithm for determining the reduced (Niggli) cell", Acta Cryst. A32 (1976).
- R. W. Grosse-Kunstleve, N. K. Sauter, P. D. Adams, "Numerically stable algorithms for the computation
  of reduced unit cells", Acta Cryst. A60 (2004).
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from .errors import NonConvergence

logger = logging.getLogger(__name__)

_SWAP_AB = np.array([[0, -1, 0], [-1, 0, 0], [0, 0, -1]])
_SWAP_BC = np.array([[-1, 0, 0], [0, 0, -1], [0, -1, 0]])
_STEP_8 = np.array([[1, 0, 1], [0, 1, 1], [0, 0, 1]])


def _sign(x: float, e: float) -> int:
    if abs(x) < e:
        return 0
    return 1 if x > 0 else -1


def reduce_metric(G: np.ndarray, e: float, max_steps: int = 1000) -> Tuple[np.ndarray, np.ndarray]:
    """
    @brief Run Krivy-Gruber on a metric tensor.
    @param G 3x3 metric tensor (symmetric, positive definite)
    @param e absolute comparison tolerance
    @param max_steps cap on the number of outer iterations
    @return (G_reduced, T) with G_reduced = T G Tᵀ and T integer, det(T) = +1
    @throws NonConvergence when the cap is exceeded
    """
    G = np.array(G, dtype=float)
    T = np.eye(3, dtype=np.int64)

    def apply(M):
        nonlocal G, T
        G = M.T @ G @ M
        T = M.T @ T

    for _ in range(max_steps):
        A, B, C = G[0, 0], G[1, 1], G[2, 2]
        E, N, Y = 2 * G[1, 2], 2 * G[0, 2], 2 * G[0, 1]

        # A1
        if A > B + e or (abs(A - B) < e and abs(E) > abs(N) + e):
            apply(_SWAP_AB)
            A, B, C = G[0, 0], G[1, 1], G[2, 2]
            E, N, Y = 2 * G[1, 2], 2 * G[0, 2], 2 * G[0, 1]

        # A2
        if B > C + e or (abs(B - C) < e and abs(N) > abs(Y) + e):
            apply(_SWAP_BC)
            continue

        l, m, n = _sign(E, e), _sign(N, e), _sign(Y, e)
        if l * m * n == 1:
            # A3
            i = -1 if l == -1 else 1
            j = -1 if m == -1 else 1
            k = -1 if n == -1 else 1
            apply(np.diag((i, j, k)))
        else:
            # A4
            i = -1 if l == 1 else 1
            j = -1 if m == 1 else 1
            k = -1 if n == 1 else 1
            if i * j * k == -1:
                if n == 0:
                    k = -1
                elif m == 0:
                    j = -1
                elif l == 0:
                    i = -1
            apply(np.diag((i, j, k)))

        A, B, C = G[0, 0], G[1, 1], G[2, 2]
        E, N, Y = 2 * G[1, 2], 2 * G[0, 2], 2 * G[0, 1]

        # A5
        if abs(E) > B + e or (abs(E - B) < e and 2 * N < Y - e) or (abs(E + B) < e and Y < -e):
            apply(np.array([[1, 0, 0], [0, 1, -int(np.sign(E))], [0, 0, 1]]))
            continue

        # A6
        if abs(N) > A + e or (abs(A - N) < e and 2 * E < Y - e) or (abs(A + N) < e and Y < -e):
            apply(np.array([[1, 0, -int(np.sign(N))], [0, 1, 0], [0, 0, 1]]))
            continue

        # A7
        if abs(Y) > A + e or (abs(A - Y) < e and 2 * E < N - e) or (abs(A + Y) < e and N < -e):
            apply(np.array([[1, -int(np.sign(Y)), 0], [0, 1, 0], [0, 0, 1]]))
            continue

        # A8
        s = E + N + Y + A + B
        if s < -e or (abs(s) < e and 2 * (A + N) + Y > e):
            apply(_STEP_8)
            continue

        break
    else:
        raise NonConvergence(f"Niggli reduction did not converge in {max_steps} steps")

    if round(np.linalg.det(T)) < 0:
        T = -T
    return G, T


def metric_to_params(G: np.ndarray) -> Tuple[float, float, float, float, float, float]:
    a, b, c = np.sqrt(np.diag(G))
    alpha = np.degrees(np.arccos(np.clip(G[1, 2] / (b * c), -1.0, 1.0)))
    beta = np.degrees(np.arccos(np.clip(G[0, 2] / (a * c), -1.0, 1.0)))
    gamma = np.degrees(np.arccos(np.clip(G[0, 1] / (a * b), -1.0, 1.0)))
    return float(a), float(b), float(c), float(alpha), float(beta), float(gamma)


def niggli_conditions_hold(G: np.ndarray, e: float) -> bool:
    """@brief Main Niggli conditions: A ≤ B ≤ C, |ξ| ≤ B, |η| ≤ A, |ζ| ≤ A, and uniform sign of ξ, η, ζ."""
    A, B, C = G[0, 0], G[1, 1], G[2, 2]
    E, N, Y = 2 * G[1, 2], 2 * G[0, 2], 2 * G[0, 1]
    if A > B + e or B > C + e:
        return False
    if abs(E) > B + e or abs(N) > A + e or abs(Y) > A + e:
        return False
    signs = {_sign(v, e) for v in (E, N, Y)}
    positive = signs == {1}
    non_positive = 1 not in signs
    return positive or non_positive
