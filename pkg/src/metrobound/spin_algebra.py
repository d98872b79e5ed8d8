"""Collective spin operators and named multi-qubit states.

Everything is built on dense numpy arrays in one of two bases:

* ``full``      -- the (2j+1)^N product basis.  Per-particle levels are
  ordered by increasing magnetic quantum number m = -j..+j and the last
  particle runs fastest, so index 0 is |{-j},...,{-j}> and the top index
  is |{+j},...,{+j}>.  J_z is diagonal in this basis.
* ``symmetric`` -- the maximal-J (J = Nj) subspace, dimension 2Nj+1,
  ordered by decreasing M = +Nj..-Nj.  Collective operators are plain
  spin-(Nj) matrices here, so J_z is again diagonal.

All constructors return immutable wrappers (`Operator`, `QuantumState`)
that validate hermiticity / normalization on creation.  Functions are
pure; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

# Hard cap on the full product-basis dimension (12 qubits by default).
# Large-N work belongs in the symmetric subspace.
FULL_DIM_CAP = 4096

HERMITICITY_TOL = 1e-12
NORM_TOL = 1e-12
POSITIVITY_TOL = 1e-10
DEGENERACY_RTOL = 1e-8

_AXES = ("x", "y", "z")


def _check_spin(j: float) -> float:
    two_j = 2 * j
    if abs(two_j - round(two_j)) > 1e-12 or round(two_j) < 1:
        raise ValueError(f"spin must be a positive half-integer, got j={j}")
    return round(two_j) / 2


@dataclass(frozen=True)
class Basis:
    """Tag identifying the representation an operator/state lives in."""

    kind: str  # 'full' or 'symmetric'
    n_particles: int
    spin: float = 0.5

    def __post_init__(self):
        if self.kind not in ("full", "symmetric"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        object.__setattr__(self, "spin", _check_spin(self.spin))
        if self.kind == "full" and self.dim > FULL_DIM_CAP:
            raise ValueError(
                f"full basis dimension {self.dim} exceeds cap {FULL_DIM_CAP}"
            )

    @property
    def dim(self) -> int:
        d1 = round(2 * self.spin + 1)
        if self.kind == "full":
            return d1**self.n_particles
        return round(2 * self.n_particles * self.spin + 1)

    @property
    def total_j(self) -> float:
        """Maximal collective spin Nj."""
        return self.n_particles * self.spin


def full_basis(n: int, j: float = 0.5) -> Basis:
    return Basis("full", n, j)


def symmetric_basis(n: int, j: float = 0.5) -> Basis:
    return Basis("symmetric", n, j)


@dataclass(frozen=True)
class Operator:
    """Dense Hermitian matrix tagged with its basis."""

    matrix: np.ndarray
    basis: Basis

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        if m.shape[0] != self.basis.dim:
            raise ValueError(
                f"matrix dimension {m.shape[0]} does not match basis dim {self.basis.dim}"
            )
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.conj().T).max() > HERMITICITY_TOL * scale:
            raise ValueError("operator is not Hermitian within tolerance")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def spectral_range(self) -> tuple[float, float]:
        w = np.linalg.eigvalsh(self.matrix)
        return float(w[0]), float(w[-1])


@dataclass(frozen=True)
class QuantumState:
    """Pure state vector or density matrix in a tagged basis."""

    data: np.ndarray
    basis: Basis

    def __post_init__(self):
        a = np.asarray(self.data, dtype=complex)
        if a.ndim == 1:
            if a.shape[0] != self.basis.dim:
                raise ValueError("state vector does not match basis dimension")
            nrm = np.linalg.norm(a)
            if abs(nrm - 1.0) > NORM_TOL:
                raise ValueError(f"pure state norm deviates from 1 by {abs(nrm-1):.2e}")
        elif a.ndim == 2:
            if a.shape[0] != a.shape[1] or a.shape[0] != self.basis.dim:
                raise ValueError("density matrix does not match basis dimension")
            scale = max(np.abs(a).max(), 1.0)
            if np.abs(a - a.conj().T).max() > HERMITICITY_TOL * scale:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(a).real - 1.0) > NORM_TOL * a.shape[0]:
                raise ValueError("density matrix trace deviates from 1")
            wmin = np.linalg.eigvalsh(a)[0]
            if wmin < -POSITIVITY_TOL:
                raise ValueError(f"density matrix has negative eigenvalue {wmin:.2e}")
        else:
            raise ValueError("state must be a vector or a square matrix")
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data


# ---------------------------------------------------------------------------
# single-spin matrices

def _spin_matrices(j: float, ascending: bool = False):
    """Raw (jx, jy, jz) for one spin-j particle, hbar = 1.

    Default ordering is m = +j..-j; `ascending` flips to m = -j..+j
    (the per-particle ordering of the full product basis).
    """
    j = _check_spin(j)
    d = round(2 * j + 1)
    if ascending:
        m = np.arange(d) - j  # m = -j..+j
        c = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
        jp = np.zeros((d, d))
        jp[np.arange(1, d), np.arange(d - 1)] = c  # J+ |m> ~ |m+1>, subdiagonal
    else:
        m = j - np.arange(d)  # m = +j..-j
        c = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
        jp = np.zeros((d, d))
        jp[np.arange(d - 1), np.arange(1, d)] = c
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    jz = np.diag(m).astype(float)
    return jx, jy, jz


def single_spin_matrices(j: float) -> tuple[Operator, Operator, Operator]:
    """(j_x, j_y, j_z) in the z eigenbasis ordered m = +j..-j."""
    j = _check_spin(j)
    basis = symmetric_basis(1, j)
    jx, jy, jz = _spin_matrices(j)
    return Operator(jx, basis), Operator(jy, basis), Operator(jz, basis)


# ---------------------------------------------------------------------------
# collective operators

def _axis_vector(axis) -> np.ndarray:
    if isinstance(axis, str):
        if axis not in _AXES:
            raise ValueError(f"axis must be one of {_AXES} or a unit 3-vector")
        v = np.zeros(3)
        v["xyz".index(axis)] = 1.0
        return v
    v = np.asarray(axis, dtype=float)
    if v.shape != (3,):
        raise ValueError("axis vector must have 3 components")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError("axis vector must be normalized")
    return v / nrm


def _site_embed(mat: np.ndarray, site: int, n: int) -> np.ndarray:
    """Embed a single-particle matrix at `site` (0-based) of an n-fold product."""
    d1 = mat.shape[0]
    out = np.array([[1.0 + 0j]])
    for k in range(n):
        out = np.kron(out, mat if k == site else np.eye(d1))
    return out


def site_operator(mat: np.ndarray, site: int, basis: Basis) -> Operator:
    """Single-site operator 1 x..x mat x..x 1 in the full basis.

    `mat` must use the ascending per-particle ordering m = -j..+j.
    """
    if basis.kind != "full":
        raise ValueError("site operators exist only in the full basis")
    return Operator(_site_embed(mat, site, basis.n_particles), basis)


def _collective_xyz_raw(basis: Basis):
    """Raw (Jx, Jy, Jz) ndarrays for a basis."""
    if basis.kind == "symmetric":
        return _spin_matrices(basis.total_j)
    jx1, jy1, jz1 = _spin_matrices(basis.spin, ascending=True)
    n = basis.n_particles
    dim = basis.dim
    out = []
    for m1 in (jx1, jy1, jz1):
        acc = np.zeros((dim, dim), dtype=complex)
        for k in range(n):
            acc += _site_embed(m1, k, n)
        out.append(acc)
    return tuple(out)


def collective_operator(axis, basis: Basis) -> Operator:
    """Collective J along `axis` ('x','y','z' or a unit 3-vector)."""
    v = _axis_vector(axis)
    jx, jy, jz = _collective_xyz_raw(basis)
    return Operator(v[0] * jx + v[1] * jy + v[2] * jz, basis)


def collective_xyz(basis: Basis) -> tuple[Operator, Operator, Operator]:
    jx, jy, jz = _collective_xyz_raw(basis)
    return Operator(jx, basis), Operator(jy, basis), Operator(jz, basis)


def total_j2(basis: Basis) -> Operator:
    jx, jy, jz = _collective_xyz_raw(basis)
    return Operator(jx @ jx + jy @ jy + jz @ jz, basis)


# ---------------------------------------------------------------------------
# rotations

def _single_rotation_to_axis(axis, j: float) -> np.ndarray:
    """U with U|m>_z = |m>_axis (up to per-vector phases), ascending ordering."""
    v = _axis_vector(axis)
    jx, jy, jz = _spin_matrices(j, ascending=True)
    if np.allclose(v, [0, 0, 1]):
        return np.eye(round(2 * j + 1), dtype=complex)
    if np.allclose(v, [0, 0, -1]):
        return sla.expm(-1j * math.pi * jy)
    # rotate z into v about u = z x v
    u = np.cross([0.0, 0.0, 1.0], v)
    u /= np.linalg.norm(u)
    theta = math.acos(max(-1.0, min(1.0, v[2])))
    gen = u[0] * jx + u[1] * jy + u[2] * jz
    return sla.expm(-1j * theta * gen)


def rotation_to_axis(axis, basis: Basis) -> np.ndarray:
    """Unitary mapping J_z eigenstates onto J_axis eigenstates (same eigenvalue)."""
    if basis.kind == "symmetric":
        # ordering of the symmetric basis is descending, so build directly
        v = _axis_vector(axis)
        jx, jy, jz = _spin_matrices(basis.total_j)
        if np.allclose(v, [0, 0, 1]):
            return np.eye(basis.dim, dtype=complex)
        if np.allclose(v, [0, 0, -1]):
            return sla.expm(-1j * math.pi * jy)
        u = np.cross([0.0, 0.0, 1.0], v)
        u /= np.linalg.norm(u)
        theta = math.acos(max(-1.0, min(1.0, v[2])))
        return sla.expm(-1j * theta * (u[0] * jx + u[1] * jy + u[2] * jz))
    u1 = _single_rotation_to_axis(axis, basis.spin)
    out = np.array([[1.0 + 0j]])
    for _ in range(basis.n_particles):
        out = np.kron(out, u1)
    return out


def qubit_axis_kets(axis) -> tuple[np.ndarray, np.ndarray]:
    """(|0>_axis, |1>_axis) for one qubit in the ascending z basis (|0>=m=-1/2).

    Phases fixed so that <0|_z|0>_x = -1/sqrt2, <0|_z|0>_y = -i/sqrt2,
    <0|_z|1>_y = +i/sqrt2 and all remaining overlaps with the z basis
    are +1/sqrt2; this is the sign convention the Dicke-overlap closed
    form is derived in.
    """
    s = 1 / math.sqrt(2)
    if axis == "z":
        return np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex)
    if axis == "x":
        return np.array([-s, s], dtype=complex), np.array([s, s], dtype=complex)
    if axis == "y":
        return np.array([-1j * s, s], dtype=complex), np.array([1j * s, s], dtype=complex)
    raise ValueError("axis must be 'x', 'y' or 'z'")


# ---------------------------------------------------------------------------
# named states

def _binom(n: int, k: int) -> int:
    return math.comb(n, k)


def dicke_basis_matrix(n: int) -> np.ndarray:
    """Isometry (2^n x (n+1)) whose column k is the z Dicke state |D_{n,k}>.

    Column k has M = n/2 - k, i.e. k spins flipped down from all-up.
    Spin-1/2 only.
    """
    dim = 2**n
    mat = np.zeros((dim, n + 1))
    counts = np.array([bin(i).count("1") for i in range(dim)])  # number of up spins
    for k in range(n + 1):
        idx = np.nonzero(counts == n - k)[0]
        mat[idx, k] = 1.0 / math.sqrt(_binom(n, k))
    return mat


def embed_symmetric(state: QuantumState) -> QuantumState:
    """Map a symmetric-basis spin-1/2 state into the full product basis."""
    if state.basis.kind != "symmetric" or state.basis.spin != 0.5:
        raise ValueError("embedding is implemented for symmetric spin-1/2 states")
    n = state.basis.n_particles
    iso = dicke_basis_matrix(n)
    target = full_basis(n)
    if state.is_pure:
        return QuantumState(iso @ state.data, target)
    return QuantumState(iso @ state.data @ iso.T, target)


def dicke_state(n: int, k: int, axis="z", basis: Basis | None = None) -> QuantumState:
    """Symmetrized spin-1/2 state with k excitations along `axis` (M = n/2 - k)."""
    if basis is None:
        basis = symmetric_basis(n)
    if basis.spin != 0.5 or basis.n_particles != n:
        raise ValueError("Dicke states are defined for n spin-1/2 particles")
    if not 0 <= k <= n:
        raise ValueError(f"excitation number k={k} outside 0..{n}")
    if basis.kind == "symmetric":
        vec = np.zeros(basis.dim, dtype=complex)
        vec[k] = 1.0
    else:
        vec = dicke_basis_matrix(n)[:, k].astype(complex)
    u = rotation_to_axis(axis, basis)
    return QuantumState(u @ vec, basis)


def unpolarized_dicke(n: int, axis="x", basis: Basis | None = None) -> QuantumState:
    if n % 2:
        raise ValueError("unpolarized Dicke state needs even n")
    return dicke_state(n, n // 2, axis, basis)


def ghz_state(n: int, basis: Basis | None = None) -> QuantumState:
    """(|0...0> + |1...1>)/sqrt2 for spin-1/2 particles."""
    if basis is None:
        basis = symmetric_basis(n)
    if basis.spin != 0.5 or basis.n_particles != n:
        raise ValueError("GHZ state is defined for n spin-1/2 particles")
    vec = np.zeros(basis.dim, dtype=complex)
    if basis.kind == "full":
        vec[0] = vec[-1] = 1 / math.sqrt(2)  # all-down and all-up product states
    else:
        vec[0] = vec[n] = 1 / math.sqrt(2)  # M = +n/2 and M = -n/2
    return QuantumState(vec, basis)


def polarized_state(n: int, j: float = 0.5, axis="y", basis: Basis | None = None) -> QuantumState:
    """Product of single-particle maximal-weight states along `axis`."""
    if basis is None:
        basis = symmetric_basis(n, j)
    if basis.n_particles != n or basis.spin != _check_spin(j):
        raise ValueError("basis does not match requested n, j")
    if basis.kind == "symmetric":
        vec = np.zeros(basis.dim, dtype=complex)
        vec[0] = 1.0  # M = +Nj
        u = rotation_to_axis(axis, basis)
        return QuantumState(u @ vec, basis)
    d1 = round(2 * j + 1)
    top = np.zeros(d1, dtype=complex)
    top[-1] = 1.0  # m = +j in ascending ordering
    single = _single_rotation_to_axis(axis, j) @ top
    vec = np.array([1.0 + 0j])
    for _ in range(n):
        vec = np.kron(vec, single)
    return QuantumState(vec, basis)


def pi_singlet(n: int, j: float = 0.5) -> QuantumState:
    """Permutationally invariant singlet: uniform mixture over the J = 0 subspace."""
    j = _check_spin(j)
    if abs(n * j - round(n * j)) > 1e-12:
        raise ValueError("no singlet subspace: N*j must be an integer")
    basis = full_basis(n, j)
    j2 = total_j2(basis).matrix
    w, v = np.linalg.eigh(j2)
    cols = v[:, w < 1e-8]
    if cols.shape[1] == 0:
        raise ValueError(f"no J=0 subspace for N={n}, j={j}")
    rho = (cols @ cols.conj().T) / cols.shape[1]
    return QuantumState(rho, basis)


def thermal_dicke(n: int, temperature: float, axis="x", basis: Basis | None = None) -> QuantumState:
    """Gaussian mixture of Dicke states around the unpolarized one.

    Weights exp(-(k - n/2)^2 / T) over excitation number k; T = 0 gives the
    pure unpolarized Dicke state.
    """
    if n % 2:
        raise ValueError("thermal Dicke mixture needs even n")
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if basis is None:
        basis = symmetric_basis(n)
    if temperature == 0:
        state = dicke_state(n, n // 2, axis, basis)
        return QuantumState(state.density(), basis)
    k = np.arange(n + 1)
    w = np.exp(-((k - n / 2) ** 2) / temperature)
    w /= w.sum()
    if basis.kind == "symmetric":
        rho_z = np.diag(w).astype(complex)
    else:
        iso = dicke_basis_matrix(n)
        rho_z = (iso * w) @ iso.T
    u = rotation_to_axis(axis, basis)
    return QuantumState(u @ rho_z @ u.conj().T, basis)


@dataclass(frozen=True)
class SqueezingGroundState:
    """Ground state of the squeezing Hamiltonian with diagnostics."""

    state: QuantumState
    energy: float
    gap: float
    degenerate: bool
    hamiltonian: Operator = field(repr=False)


def squeezing_ground_state(
    n: int, lam: float, sign: int = +1, basis: Basis | None = None
) -> SqueezingGroundState:
    """Ground state of sign*J_x^2 - lam*J_y on the symmetric subspace.

    lam -> infinity polarizes along +y; lam -> 0+ with sign=+1 approaches the
    unpolarized Dicke state along x.  A relative spectral gap below 1e-8
    raises the `degenerate` flag (the state is still returned).
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if basis is None:
        basis = symmetric_basis(n)
    if basis.kind != "symmetric":
        raise ValueError("squeezing ground states are computed in the symmetric basis")
    jx, jy, _ = _collective_xyz_raw(basis)
    h = sign * (jx @ jx) - lam * jy
    w, v = np.linalg.eigh(h)
    width = w[-1] - w[0]
    gap = w[1] - w[0] if len(w) > 1 else np.inf
    degenerate = gap < DEGENERACY_RTOL * max(width, 1.0)
    state = QuantumState(v[:, 0], basis)
    return SqueezingGroundState(state, float(w[0]), float(gap), bool(degenerate), Operator(h, basis))


# ---------------------------------------------------------------------------
# expectation values

def expectation(state: QuantumState, op) -> float:
    """Real expectation value <op> (op may be an Operator or a raw matrix)."""
    mat = op.matrix if isinstance(op, Operator) else np.asarray(op)
    if isinstance(op, Operator) and op.basis != state.basis:
        raise ValueError("operator and state bases differ")
    if state.is_pure:
        val = state.data.conj() @ (mat @ state.data)
    else:
        val = np.trace(mat @ state.data)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation value has imaginary part {val.imag:.2e}")
    return float(val.real)


def variance(state: QuantumState, op) -> float:
    mat = op.matrix if isinstance(op, Operator) else np.asarray(op)
    return expectation(state, mat @ mat) - expectation(state, mat) ** 2


def fidelity_with_pure(state: QuantumState, reference: QuantumState) -> float:
    """<ref|rho|ref> for a pure reference state."""
    if not reference.is_pure:
        raise ValueError("reference must be pure")
    if state.basis != reference.basis:
        raise ValueError("states live in different bases")
    if state.is_pure:
        return float(abs(reference.data.conj() @ state.data) ** 2)
    return float((reference.data.conj() @ state.data @ reference.data).real)


# ---------------------------------------------------------------------------
# combinatorics and quasi-probability helpers

def dicke_overlap(n: int, m: int) -> float:
    """Squared overlap of the z Dicke state |D_{n,m}> with the x unpolarized one.

    Zero for odd m; otherwise binom(n/2,m/2)^2 binom(n,n/2) / (2^n binom(n,m)),
    evaluated with log-factorials so it stays finite for large n.
    """
    if n % 2:
        raise ValueError("n must be even")
    if not 0 <= m <= n:
        raise ValueError(f"m={m} outside 0..{n}")
    if m % 2:
        return 0.0
    lb = math.lgamma
    def lbinom(a, b):
        return lb(a + 1) - lb(b + 1) - lb(a - b + 1)
    logval = (
        2 * lbinom(n // 2, m // 2)
        + lbinom(n, n // 2)
        - n * math.log(2.0)
        - lbinom(n, m)
    )
    return math.exp(logval)


def husimi_q(state: QuantumState, phi: float, theta: float) -> float:
    """Husimi Q at solid angle (phi, theta), normalized so the sphere integral is 1.

    Q = (N+1)/(4 pi) <Omega|rho|Omega> with |Omega> = e^{-i phi Jz} e^{-i theta Jy}|1..1>.
    """
    basis = state.basis
    if basis.kind != "symmetric" or basis.spin != 0.5:
        raise ValueError("Husimi Q is implemented for symmetric spin-1/2 states")
    n = basis.n_particles
    jx, jy, jz = _spin_matrices(basis.total_j)
    top = np.zeros(basis.dim, dtype=complex)
    top[0] = 1.0
    omega = np.exp(-1j * phi * np.diag(jz)) * (sla.expm(-1j * theta * jy) @ top)
    val = (omega.conj() @ state.density() @ omega).real
    return float((n + 1) / (4 * math.pi) * val)


def husimi_norm(state: QuantumState, n_theta: int = 64, n_phi: int = 64) -> float:
    """Quadrature of the Husimi Q over the sphere (Gauss-Legendre x trapezoid)."""
    nodes, weights = np.polynomial.legendre.leggauss(n_theta)
    thetas = np.arccos(nodes)
    phis = 2 * math.pi * np.arange(n_phi) / n_phi
    total = 0.0
    for th, w in zip(thetas, weights):
        row = sum(husimi_q(state, ph, th) for ph in phis)
        total += w * row * (2 * math.pi / n_phi)
    return total


def swap_operator(basis: Basis, a: int, b: int) -> np.ndarray:
    """Permutation matrix exchanging particles a and b in the full basis."""
    if basis.kind != "full":
        raise ValueError("swap operators act on the full basis")
    n, d1 = basis.n_particles, round(2 * basis.spin + 1)
    dim = basis.dim
    idx = np.arange(dim)
    digits = []
    rem = idx
    for _ in range(n):
        digits.append(rem % d1)
        rem = rem // d1
    digits = digits[::-1]  # digits[k] is the level of particle k (last fastest)
    digits[a], digits[b] = digits[b], digits[a]
    new_idx = np.zeros(dim, dtype=int)
    for k in range(n):
        new_idx = new_idx * d1 + digits[k]
    perm = np.zeros((dim, dim))
    perm[new_idx, idx] = 1.0
    return perm


def is_permutation_invariant(op: Operator, tol: float = 1e-10) -> bool:
    """True if the full-basis operator commutes with every pair swap."""
    basis = op.basis
    scale = max(np.abs(op.matrix).max(), 1.0)
    for a in range(basis.n_particles):
        for b in range(a + 1, basis.n_particles):
            s = swap_operator(basis, a, b)
            if np.abs(s @ op.matrix - op.matrix @ s).max() > tol * scale:
                return False
    return True
