"""Quantum Fisher information and the standard metrological thresholds.

The central quantity is F_Q[rho, G] = 2 sum_{l,v} (p_l - p_v)^2/(p_l + p_v)
|<l|G|v>|^2 over the eigendecomposition of rho; nearly-null eigenvalue
pairs are skipped, matching the convex-roof limit.  The two-operator
variant F_Q[rho, A, B] drives the gradient-magnetometry module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .spin_algebra import Basis, Operator, QuantumState, collective_xyz, expectation, variance

PAIR_SKIP_TOL = 1e-12
EIG_CLIP_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigendecomposition of a density matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns match eigenvalues
    rank_tol: float

    @classmethod
    def of(cls, state: QuantumState, rank_tol: float = EIG_CLIP_TOL) -> "EigenDecomposition":
        rho = state.density()
        w, v = np.linalg.eigh(rho)
        w, v = w[::-1].copy(), v[:, ::-1].copy()
        if w.min() < -rank_tol:
            raise ValueError(f"density matrix eigenvalue {w.min():.2e} below -{rank_tol}")
        w = np.clip(w, 0.0, None)
        recon = (v * w) @ v.conj().T
        if np.abs(recon - rho).max() > 1e-10:
            raise ValueError("eigendecomposition failed to reconstruct the state")
        return cls(w, v, rank_tol)


def _pair_weights(p: np.ndarray) -> np.ndarray:
    """2 (p_l - p_v)^2 / (p_l + p_v) with near-null pairs zeroed."""
    s = p[:, None] + p[None, :]
    d = p[:, None] - p[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 2.0 * d * d / s
    w[s < PAIR_SKIP_TOL] = 0.0
    return w


def _check_bases(state: QuantumState, *ops: Operator):
    for op in ops:
        if op.basis != state.basis:
            raise ValueError("operator basis does not match state basis")


def qfi(state: QuantumState, generator: Operator) -> float:
    """Quantum Fisher information F_Q[rho, G] for unitary phase encoding."""
    _check_bases(state, generator)
    if state.is_pure:
        return 4.0 * variance(state, generator)
    dec = EigenDecomposition.of(state)
    g = dec.eigenvectors.conj().T @ generator.matrix @ dec.eigenvectors
    w = _pair_weights(dec.eigenvalues)
    return float(np.sum(w * np.abs(g) ** 2).real)


def qfi_cross(state: QuantumState, a: Operator, b: Operator) -> float:
    """Two-operator QFI F_Q[rho, A, B]; reduces to qfi() when A = B.

    A and B are expected to commute (the theory only uses commuting pairs);
    a warning is emitted otherwise.  The real part is returned and the
    imaginary part is required to be negligible.
    """
    _check_bases(state, a, b)
    comm = a.matrix @ b.matrix - b.matrix @ a.matrix
    scale = max(np.abs(a.matrix).max() * np.abs(b.matrix).max(), 1.0)
    if np.abs(comm).max() > 1e-10 * scale:
        warnings.warn("qfi_cross called with non-commuting operators", stacklevel=2)
    if state.is_pure:
        val = expectation(state, (a.matrix @ b.matrix + b.matrix @ a.matrix) / 2)
        return 4.0 * (val - expectation(state, a) * expectation(state, b))
    dec = EigenDecomposition.of(state)
    va = dec.eigenvectors.conj().T @ a.matrix @ dec.eigenvectors
    vb = dec.eigenvectors.conj().T @ b.matrix @ dec.eigenvectors
    w = _pair_weights(dec.eigenvalues)
    total = np.sum(w * va * vb.T)
    if abs(total.imag) > 1e-8 * max(1.0, abs(total.real)):
        raise ValueError(f"qfi_cross imaginary part {total.imag:.2e} is not negligible")
    return float(total.real)


def avg_qfi(state: QuantumState) -> float:
    """QFI averaged over all rotation axes: (1/3) sum_l F_Q[rho, J_l]."""
    jx, jy, jz = collective_xyz(state.basis)
    return (qfi(state, jx) + qfi(state, jy) + qfi(state, jz)) / 3.0


def classical_fisher(
    state: QuantumState,
    generator: Operator,
    theta: float,
    povm: list[np.ndarray],
    step: float = 1e-5,
) -> float:
    """Classical Fisher information of a projective/POVM measurement.

    Outcome probabilities p_m(theta) = tr(Pi_m U rho U+) with
    U = exp(-i theta G); derivatives by central differences with one
    Richardson extrapolation level.  Terms with p_m < 1e-12 are dropped.
    """
    _check_bases(state, generator)
    dim = state.basis.dim
    acc = np.zeros((dim, dim), dtype=complex)
    for pi in povm:
        pi = np.asarray(pi)
        if np.linalg.eigvalsh(pi)[0] < -1e-10:
            raise ValueError("POVM element is not positive semidefinite")
        acc += pi
    if np.abs(acc - np.eye(dim)).max() > 1e-10:
        raise ValueError("POVM does not sum to the identity")

    w, v = np.linalg.eigh(generator.matrix)
    rho0 = v.conj().T @ state.density() @ v
    povm_rot = [v.conj().T @ np.asarray(pi) @ v for pi in povm]

    def probs(th: float) -> np.ndarray:
        phase = np.exp(-1j * th * w)
        rho_th = (phase[:, None] * rho0) * phase.conj()[None, :]
        return np.array([np.trace(pi @ rho_th).real for pi in povm_rot])

    def slope(h: float) -> np.ndarray:
        return (probs(theta + h) - probs(theta - h)) / (2 * h)

    d = (4.0 * slope(step / 2) - slope(step)) / 3.0
    p = probs(theta)
    mask = p >= PAIR_SKIP_TOL
    return float(np.sum(d[mask] ** 2 / p[mask]))


def pezze_smerzi_bound(mean_jy: float, var_jx: float) -> float:
    """Spin-squeezing lower bound <J_y>^2 / Var(J_x) on the QFI."""
    if var_jx <= 0:
        raise ValueError("variance must be positive")
    return mean_jy**2 / var_jx


def producibility_cap(k: int, n: int) -> float:
    """Largest QFI reachable by k-producible states: s k^2 + (N - s k)^2, s = floor(N/k)."""
    s = n // k
    return s * k**2 + (n - s * k) ** 2


def entanglement_depth(qfi_value: float, n: int) -> int:
    """Entanglement depth certified by a QFI value.

    Returns the smallest k+1 whose k-producibility cap is exceeded, or 1 when
    the value stays at or below the separable cap N.  For k that neither
    divides N nor satisfies k << N the cap is the same closed form, used as a
    heuristic.
    """
    if qfi_value > n**2 * (1 + 1e-12) + 1e-9:
        raise ValueError(f"QFI value {qfi_value} exceeds the Heisenberg cap N^2 = {n**2}")
    depth = 1
    for k in range(1, n):
        if qfi_value > producibility_cap(k, n):
            depth = k + 1
    return depth


def polarized_precision_cap(mean_jy: float, n: int) -> float:
    """Precision ceiling 2N + N^2 (1 - <J_y>^2/J_max^2) for polarized probes."""
    jmax = n / 2.0
    return 2.0 * n + n**2 * (1.0 - mean_jy**2 / jmax**2)


@dataclass(frozen=True)
class QfiMatrix:
    """Symmetric 2x2 QFI matrix for the (homogeneous, gradient) field pair."""

    f00: float
    f01: float
    f11: float

    def __post_init__(self):
        if self.f00 < -1e-10 or self.f11 < -1e-10:
            raise ValueError("QFI matrix diagonal must be nonnegative")
        det = self.f00 * self.f11 - self.f01**2
        scale = max(self.f00 * self.f11, 1.0)
        if det < -1e-10 * scale:
            raise ValueError("QFI matrix is not positive semidefinite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.f00, self.f01], [self.f01, self.f11]])


def evolve(state: QuantumState, generator: Operator, angle: float) -> QuantumState:
    """exp(-i angle G) rho exp(+i angle G)."""
    _check_bases(state, generator)
    u = sla.expm(-1j * angle * generator.matrix)
    if state.is_pure:
        return QuantumState(u @ state.data, state.basis)
    return QuantumState(u @ state.data @ u.conj().T, state.basis)


def jx_eigenprojectors(basis: Basis) -> list[np.ndarray]:
    """Rank-structured eigenprojectors of J_x (a convenient collective POVM)."""
    jx, _, _ = collective_xyz(basis)
    w, v = np.linalg.eigh(jx.matrix)
    projs = []
    i = 0
    while i < len(w):
        k = i
        while k + 1 < len(w) and w[k + 1] - w[i] < 1e-9:
            k += 1
        block = v[:, i : k + 1]
        projs.append(block @ block.conj().T)
        i = k + 1
    return projs
