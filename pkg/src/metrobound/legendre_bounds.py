"""Tight lower bounds on the QFI from measured expectation values.

Given constraints w_k = <W_k> on the initial state, the convex-roof
structure of the QFI turns its Legendre transform into an eigenvalue
problem,

    hat(r) = sup_mu  lambda_max[ sum_k r_k W_k - 4 (G - mu)^2 ],

and the certified lower bound is  B(w) = sup_r { r.w - hat(r) }.  The outer
objective is concave in r, so any r yields a valid bound; the inner mu
landscape is in general not unimodal, so mu is maximized on a dense grid
with golden-section refinement and automatic grid doubling (sloppy mu
maximization would understate hat and overstate the bound, which is the
one failure mode that must not happen).

lambda_max is evaluated per mu through one of three backends: an exact
closed form when everything is diagonal, a banded Hermitian solver when
the constraint operators are narrow-banded in the generator eigenbasis
(all collective-moment sets are), a secular-equation solver for a single
rank-one witness (fidelity bounds), and dense diagonalization otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .spin_algebra import (
    Basis,
    Operator,
    QuantumState,
    collective_xyz,
    dicke_state,
    is_permutation_invariant,
    symmetric_basis,
)

MU_REFINE_TOL = 1e-10
GRID_STABLE_RTOL = 1e-8
MAX_BANDWIDTH = 8


class InfeasibleConstraints(ValueError):
    """No quantum state is compatible with the requested expectation values."""


@dataclass(frozen=True)
class ConstraintSet:
    """Expectation-value constraints (W_k, w_k) sharing one basis."""

    operators: tuple[Operator, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        ops = tuple(self.operators)
        vals = tuple(float(v) for v in self.values)
        if len(ops) != len(vals) or not ops:
            raise ValueError("need equally many operators and values (at least one)")
        basis = ops[0].basis
        if any(op.basis != basis for op in ops):
            raise ValueError("all constraint operators must share one basis")
        ranges = tuple(op.spectral_range() for op in ops)
        for (lo, hi), w in zip(ranges, vals):
            tol = 1e-9 * max(1.0, abs(lo), abs(hi))
            if not (lo - tol <= w <= hi + tol):
                raise InfeasibleConstraints(
                    f"value {w} outside operator spectrum [{lo}, {hi}]"
                )
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_ranges", ranges)

    @property
    def basis(self) -> Basis:
        return self.operators[0].basis

    @property
    def spectral_radii(self) -> np.ndarray:
        return np.array([max(abs(lo), abs(hi), 1e-30) for lo, hi in self._ranges])


@dataclass(frozen=True)
class BoundResult:
    """Certified lower bound with the optimizer coordinates that produced it."""

    bound: float
    r_star: np.ndarray
    mu_star: float
    iterations: int
    mu_grid_size: int
    converged: bool


# ---------------------------------------------------------------------------
# lambda_max backends

def _band_form(mat: np.ndarray, bw: int) -> np.ndarray:
    d = mat.shape[0]
    ab = np.zeros((bw + 1, d), dtype=complex)
    for k in range(bw + 1):
        ab[bw - k, k:] = np.diagonal(mat, k)
    return ab


def _bandwidth(mat: np.ndarray, tol: float) -> int:
    d = mat.shape[0]
    bw = 0
    for k in range(d - 1, 0, -1):
        if np.abs(np.diagonal(mat, k)).max(initial=0.0) > tol:
            bw = k
            break
    return bw


def _merge_poles(d: np.ndarray, w2: np.ndarray):
    order = np.argsort(d)
    d, w2 = d[order], w2[order]
    scale = max(1.0, np.abs(d).max())
    out_d, out_w = [d[0]], [w2[0]]
    for val, wt in zip(d[1:], w2[1:]):
        if val - out_d[-1] < 1e-12 * scale:
            out_w[-1] += wt
        else:
            out_d.append(val)
            out_w.append(wt)
    return np.array(out_d), np.array(out_w)


def _dpr1_lambda_max(diag: np.ndarray, rho: float, v_abs2: np.ndarray) -> float:
    """Largest eigenvalue of diag(d) + rho * v v^dagger via the secular equation."""
    dmax = float(diag.max())
    total = v_abs2.sum()
    if rho == 0.0 or total <= 0.0:
        return dmax
    mask = v_abs2 > 1e-15 * v_abs2.max()
    dm, w2 = _merge_poles(diag[mask], v_abs2[mask])
    rest = diag[~mask]
    rest_max = float(rest.max()) if rest.size else -math.inf

    def secular(lam: float) -> float:
        return 1.0 - rho * np.sum(w2 / (lam - dm))

    top = float(dm[-1])
    span = max(1.0, abs(top), abs(dm[0]))
    if rho > 0:
        lo, hi = top, top + rho * total
        eps = 1e-14 * span
        while secular(top + eps) > 0:  # shrink towards the pole until negative
            eps *= 0.25
            if eps < 1e-30 * span:
                return max(top, rest_max)
        root = brentq(secular, top + eps, hi + eps, xtol=1e-14 * span)
        return max(root, rest_max)
    # rho < 0: largest root sits just below the top pole
    lo = float(dm[-2]) if len(dm) > 1 else top + rho * total - span
    eps = 1e-14 * span
    a, b = lo + eps, top - eps
    while secular(b) > 0:
        b = top - (top - b) * 0.25
        if top - b < 1e-30 * span:
            return max(top, rest_max)
    while secular(a) < 0:
        a = lo + (a - lo) * 0.25
        if a - lo < 1e-30 * span:
            a = lo + 1e-30 * span
            break
    root = brentq(secular, a, b, xtol=1e-14 * span)
    return max(root, rest_max)


class _HatProblem:
    """Precomputed machinery for evaluating hat(r) = sup_mu lambda_max[...]."""

    def __init__(self, cs: ConstraintSet, generator: Operator, mu_grid: int = 201):
        if generator.basis != cs.basis:
            raise ValueError("generator basis does not match the constraints")
        self.mu_grid = int(mu_grid)
        if self.mu_grid < 5:
            raise ValueError("mu grid too coarse")
        gmat = generator.matrix
        gdiag = np.diagonal(gmat)
        if np.abs(gmat - np.diag(gdiag)).max() <= 1e-13 * max(1.0, np.abs(gmat).max()):
            self.gvals = gdiag.real.copy()
            self.ws = [op.matrix for op in cs.operators]
        else:  # rotate everything to the generator eigenbasis
            w, v = np.linalg.eigh(gmat)
            self.gvals = w
            self.ws = [v.conj().T @ op.matrix @ v for op in cs.operators]
        self.mu_lo = float(self.gvals.min())
        self.mu_hi = float(self.gvals.max())
        self.dim = len(self.gvals)
        self.quad_diag = -4.0 * self.gvals**2

        scale = max(max(np.abs(w).max() for w in self.ws), 1.0)
        self.w_diags = [np.diagonal(w).real.copy() for w in self.ws]
        self.all_diagonal = all(
            np.abs(w - np.diag(dg)).max() <= 1e-13 * scale
            for w, dg in zip(self.ws, self.w_diags)
        )
        self.bandwidth = max((_bandwidth(w, 1e-13 * scale) for w in self.ws), default=0)
        self.banded = (not self.all_diagonal) and self.bandwidth <= MAX_BANDWIDTH
        if self.banded:
            self.w_bands = [_band_form(w, self.bandwidth) for w in self.ws]
        self.rank1 = None
        if len(self.ws) == 1 and not self.all_diagonal and not self.banded:
            w_eig, w_vec = np.linalg.eigh(self.ws[0])
            idx = int(np.argmax(np.abs(w_eig)))
            if np.abs(np.delete(w_eig, idx)).max(initial=0.0) <= 1e-12 * abs(w_eig[idx]):
                self.rank1 = (float(w_eig[idx]), np.abs(w_vec[:, idx]) ** 2)

    # -- single-mu evaluators -------------------------------------------------
    def _lmax_banded(self, r: np.ndarray, mu: float) -> float:
        bw = self.bandwidth
        ab = sum(rk * band for rk, band in zip(r, self.w_bands))
        ab = np.array(ab, dtype=complex)
        ab[bw] += self.quad_diag + 8.0 * mu * self.gvals - 4.0 * mu**2
        w = sla.eig_banded(
            ab, lower=False, eigvals_only=True, select="i",
            select_range=(self.dim - 1, self.dim - 1),
        )
        return float(w[0])

    def _lmax_dense(self, r: np.ndarray, mu: float) -> float:
        m = sum(rk * w for rk, w in zip(r, self.ws))
        m = np.asarray(m, dtype=complex)
        idx = np.arange(self.dim)
        m[idx, idx] += self.quad_diag + 8.0 * mu * self.gvals - 4.0 * mu**2
        return float(np.linalg.eigvalsh(m)[-1])

    def _lmax_rank1(self, r: np.ndarray, mu: float) -> float:
        rho, v2 = self.rank1
        diag = self.quad_diag + 8.0 * mu * self.gvals - 4.0 * mu**2
        return _dpr1_lambda_max(diag, float(r[0]) * rho, v2)

    # -- sup over mu ----------------------------------------------------------
    def hat(self, r: np.ndarray) -> tuple[float, float, int]:
        """(sup value, mu at the sup, final grid size)."""
        r = np.asarray(r, dtype=float)
        if self.all_diagonal:
            # every lambda(mu) is a parabola peaking at mu = g_i; the sup is exact
            vals = sum(rk * dg for rk, dg in zip(r, self.w_diags))
            vals = np.asarray(vals) + np.zeros(self.dim)
            best = int(np.argmax(vals))
            return float(vals[best]), float(self.gvals[best]), self.mu_grid

        if self.rank1 is not None:
            f = lambda mu: self._lmax_rank1(r, mu)
        elif self.banded:
            f = lambda mu: self._lmax_banded(r, mu)
        else:
            f = lambda mu: self._lmax_dense(r, mu)
        return _sup_on_grid(f, self.mu_lo, self.mu_hi, self.mu_grid)


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - phi * (b - a)
    x2 = a + phi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + phi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - phi * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _sup_on_grid(f, lo: float, hi: float, grid0: int, max_doublings: int = 6):
    """Grid + golden-section sup of f on [lo, hi], doubling the grid until stable."""
    mus = np.linspace(lo, hi, grid0)
    vals = np.array([f(m) for m in mus])
    best_val, best_mu = -math.inf, lo
    prev_sup = None
    for _ in range(max_doublings + 1):
        # refine around the best three local maxima (plus the global best)
        n = len(mus)
        cand = set()
        interior = np.arange(1, n - 1)
        local = interior[(vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])]
        for i in local[np.argsort(vals[local])][-3:]:
            cand.add(int(i))
        cand.add(int(np.argmax(vals)))
        if vals[0] >= vals[1]:
            cand.add(0)
        if vals[-1] >= vals[-2]:
            cand.add(n - 1)
        for i in cand:
            a = mus[max(i - 1, 0)]
            b = mus[min(i + 1, n - 1)]
            if b - a < MU_REFINE_TOL:
                mu_c, val_c = mus[i], vals[i]
            else:
                mu_c, val_c = _golden_max(f, a, b, MU_REFINE_TOL)
            if vals[i] > val_c:
                mu_c, val_c = mus[i], vals[i]
            if val_c > best_val:
                best_val, best_mu = val_c, mu_c
        if prev_sup is not None and abs(best_val - prev_sup) <= GRID_STABLE_RTOL * max(
            1.0, abs(best_val)
        ):
            return best_val, best_mu, len(mus)
        prev_sup = best_val
        mids = (mus[:-1] + mus[1:]) / 2.0
        mid_vals = np.array([f(m) for m in mids])
        merged = np.empty(2 * n - 1)
        merged[0::2] = mus
        merged[1::2] = mids
        merged_vals = np.empty(2 * n - 1)
        merged_vals[0::2] = vals
        merged_vals[1::2] = mid_vals
        mus, vals = merged, merged_vals
    return best_val, best_mu, len(mus)


def legendre_hat(
    r, cs: ConstraintSet, generator: Operator, mu_grid: int = 201
) -> tuple[float, float]:
    """sup_mu lambda_max[sum_k r_k W_k - 4 (G - mu)^2] and the maximizing mu."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    prob = _HatProblem(cs, generator, mu_grid)
    value, mu_star, _ = prob.hat(r)
    return value, mu_star


# ---------------------------------------------------------------------------
# outer concave maximization

def qfi_lower_bound(
    cs: ConstraintSet,
    generator: Operator,
    *,
    mu_grid: int = 201,
    seed: int = 0,
    n_starts: int = 5,
    max_evals: int = 10_000,
    step_tol: float = 1e-8,
    r0=None,
) -> BoundResult:
    """Certified QFI lower bound sup_r { r.w - hat(r) } (floored at zero).

    Derivative-free coordinate ascent with adaptive per-coordinate steps,
    started from r = 0 (or `r0`, for warm starts across sweeps) plus
    `n_starts` - 1 seeded random points.  The objective is concave, and any
    returned r certifies its bound value even without convergence.
    """
    prob = _HatProblem(cs, generator, mu_grid)
    scales = cs.spectral_radii
    w = np.asarray(cs.values, dtype=float) / scales
    k = len(w)
    glo, ghi = prob.mu_lo, prob.mu_hi
    cap = (ghi - glo) ** 2  # largest possible QFI for this generator

    state = {"evals": 0, "mu": 0.0, "grid": mu_grid}

    # hat() was precomputed on the unscaled operators; r is kept in scaled
    # units (unit spectral radius per witness) and rescaled on the fly.
    def objective_scaled(r: np.ndarray) -> float:
        state["evals"] += 1
        val, mu_star, grid = prob.hat(r / scales)
        state["mu"], state["grid"] = mu_star, grid
        return float(r @ w - val)

    rng = np.random.default_rng(seed)
    start_scale = max(cap, 1.0)
    starts = [np.zeros(k) if r0 is None else np.asarray(r0, dtype=float) * scales]
    for _ in range(max(0, n_starts - 1)):
        starts.append(rng.uniform(-start_scale, start_scale, size=k))

    best_r = starts[0].copy()
    best_f = objective_scaled(best_r)
    best_mu = state["mu"]
    converged = False
    for r_start in starts:
        r = r_start.copy()
        f_cur = objective_scaled(r)
        step = np.full(k, max(1.0, start_scale / 16.0))
        while state["evals"] < max_evals:
            improved = False
            for i in range(k):
                moved = False
                for direction in (+1.0, -1.0):
                    trial = r.copy()
                    trial[i] += direction * step[i]
                    f_t = objective_scaled(trial)
                    while f_t > f_cur:
                        r, f_cur = trial, f_t
                        moved = True
                        step[i] *= 2.0
                        trial = r.copy()
                        trial[i] += direction * step[i]
                        if state["evals"] >= max_evals:
                            break
                        f_t = objective_scaled(trial)
                    if moved:
                        break
                if moved:
                    improved = True
                else:
                    step[i] *= 0.5
            if f_cur > best_f:
                best_f, best_r, best_mu = f_cur, r.copy(), state["mu"]
            if step.max() < step_tol * (1.0 + np.abs(r).max()):
                converged = True
                break
            if not improved and step.max() < step_tol:
                converged = True
                break
        if f_cur > best_f:
            best_f, best_r, best_mu = f_cur, r.copy(), state["mu"]

    bound = max(best_f, 0.0)
    if bound > cap * (1.0 + 1e-9) + 1e-6:
        raise InfeasibleConstraints(
            f"bound {bound} exceeds the spectral cap {cap}; the constraint set "
            "is not reachable by any quantum state"
        )
    return BoundResult(
        bound=float(bound),
        r_star=best_r / scales,
        mu_star=float(best_mu),
        iterations=state["evals"],
        mu_grid_size=state["grid"],
        converged=converged,
    )


# ---------------------------------------------------------------------------
# named bounds

def ghz_fidelity_bound(fidelity: float, n: int) -> float:
    """Closed-form QFI bound from the GHZ fidelity: 4N^2 (F - 1/2)^2 for F > 1/2.

    Obtained by maximizing r F - hat(r) with hat(r) = r/2 + r^2/(16 N^2) on
    0 <= r <= 4N^2 (and -N^2 + r beyond); zero at or below F = 1/2.
    """
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    if fidelity <= 0.5:
        return 0.0
    return 4.0 * n**2 * (fidelity - 0.5) ** 2


def dicke_fidelity_floor(n: int) -> float:
    """Fidelity of the z-polarized product state with the x Dicke state."""
    lb = math.lgamma
    return math.exp(lb(n + 1) - 2 * lb(n // 2 + 1) - n * math.log(2.0))


def dicke_fidelity_bound(fidelity: float, n: int, **opts) -> float:
    """Numeric QFI bound from the fidelity with the unpolarized x Dicke state."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    if n % 2:
        raise ValueError("n must be even")
    if fidelity <= dicke_fidelity_floor(n) + 1e-12:
        return 0.0
    basis = symmetric_basis(n)
    target = dicke_state(n, n // 2, "x", basis)
    witness = Operator(np.outer(target.data, target.data.conj()), basis)
    _, _, jz = collective_xyz(basis)
    cs = ConstraintSet((witness,), (fidelity,))
    return qfi_lower_bound(cs, jz, **opts).bound


def spin_squeezing_bound(
    mean_jy: float,
    var_jx: float,
    n: int,
    constrain_jx_zero: bool = False,
    extra_jx4: float | None = None,
    **opts,
) -> BoundResult:
    """QFI bound from the spin-squeezing data (<J_y>, Var(J_x)) with <J_x> = 0.

    The witness set is {J_y, J_x^2} (so <J_x^2> = Var(J_x)); the explicit
    <J_x> = 0 constraint is redundant by symmetry and off by default.  An
    optional <J_x^4> value sharpens the bound.
    """
    basis = symmetric_basis(n)
    jx, jy, jz = collective_xyz(basis)
    jx2 = Operator(jx.matrix @ jx.matrix, basis)
    ops = [jy, jx2]
    vals = [mean_jy, var_jx]
    if constrain_jx_zero:
        ops.append(jx)
        vals.append(0.0)
    if extra_jx4 is not None:
        ops.append(Operator(jx2.matrix @ jx2.matrix, basis))
        vals.append(extra_jx4)
    cs = ConstraintSet(tuple(ops), tuple(vals))
    return qfi_lower_bound(cs, jz, **opts)


@dataclass(frozen=True)
class DickeExperimentResult:
    """Scaled-system extrapolation for the many-particle Dicke experiment."""

    gamma: float
    bound_per_n: float
    sweep: tuple[tuple[int, float], ...]  # (N', extrapolated bound/N)
    converged: bool


def dicke_experiment_bound(
    jy2: float,
    jx2_eq_jz2: float,
    n: int,
    nprime_max: int,
    nprime_values=None,
    mu_grid: int = 201,
    seed: int = 0,
) -> DickeExperimentResult:
    """Extrapolated QFI bound per particle for Dicke-state data at large N.

    The measured second moments (<J_y^2> small, <J_x^2> = <J_z^2> large) are
    scaled by gamma onto the maximal angular momentum shell, re-expressed in
    a smaller symmetric system of N' particles with <J_y^2> kept constant,
    bounded there with witnesses {J_x^2, J_y^2, J_z^2}, and mapped back
    through the shell ratio.  Returns the value at the largest N' together
    with the whole (monotone) sweep.
    """
    shell_n = n * (n + 2) / 4.0
    total = jy2 + 2.0 * jx2_eq_jz2
    if total <= 0:
        raise ValueError("moments must be positive")
    if total > shell_n * (1 + 1e-9):
        raise InfeasibleConstraints("second moments exceed the maximal shell")
    gamma = shell_n / total
    jy2_sym = gamma * jy2

    if nprime_values is None:
        base = [24, 32, 48, 64, 96, 128, 200, 280, 400, 560, 800, 1200, 1700, 2300]
        nprime_values = [m for m in base if m <= nprime_max]
        if not nprime_values or nprime_values[-1] != nprime_max:
            nprime_values.append(nprime_max)
    sweep = []
    r_warm = None
    converged = True
    for npr in nprime_values:
        shell = npr * (npr + 2) / 4.0
        if shell <= jy2_sym * (1 + 1e-12):
            raise InfeasibleConstraints(
                f"N'={npr} too small: scaled <J_y^2> exceeds its shell"
            )
        jx2_sym = (shell - jy2_sym) / 2.0
        basis = symmetric_basis(npr)
        jx, jy, jz = collective_xyz(basis)
        ops = tuple(
            Operator(op.matrix @ op.matrix, basis) for op in (jx, jy, jz)
        )
        cs = ConstraintSet(ops, (jx2_sym, jy2_sym, jx2_sym))
        res = qfi_lower_bound(
            cs, jz, mu_grid=mu_grid, seed=seed,
            n_starts=5 if r_warm is None else 1,
            r0=r_warm,
        )
        r_warm = res.r_star
        converged = converged and res.converged
        # bound_N = (1/gamma) (shell_N / shell_N') bound_sym = total/shell_N' * bound_sym
        sweep.append((npr, res.bound * total / shell / n))
    bound_per_n = sweep[-1][1]
    return DickeExperimentResult(gamma, bound_per_n, tuple(sweep), converged)


def symmetric_validity_check(
    operators, generator: Operator, result: BoundResult | None = None
) -> bool:
    """Whether a symmetric-subspace bound certifies the unrestricted problem.

    Requires every witness to be permutationally invariant and, when a
    solved `result` is supplied, a non-degenerate maximal eigenvalue of the
    Legendre argument at (r*, mu*).  Operators must be given in the full
    basis.
    """
    ops = list(operators)
    if any(op.basis.kind != "full" for op in ops):
        raise ValueError("validity check requires full-basis operators")
    if not all(is_permutation_invariant(op) for op in ops):
        return False
    if result is None:
        return True
    arg = sum(rk * op.matrix for rk, op in zip(result.r_star, ops))
    g = generator.matrix
    shift = g - result.mu_star * np.eye(g.shape[0])
    arg = arg - 4.0 * shift @ shift
    w = np.linalg.eigvalsh(arg)
    width = max(w[-1] - w[0], 1.0)
    return bool(w[-1] - w[-2] > 1e-8 * width)


def legendre_1d(f, r: float, search: tuple[float, float], tol: float = 1e-10) -> float:
    """sup_x { r x - f(x) } on an interval, by golden section on the concave objective."""
    lo, hi = search
    if not hi > lo:
        raise ValueError("empty search interval")
    x_star, val = _golden_max(lambda x: r * x - f(x), lo, hi, tol * max(1.0, hi - lo))
    edge = 1e-6 * (hi - lo)
    if x_star - lo < edge or hi - x_star < edge:
        raise ValueError("objective appears unbounded on the search interval")
    return val
