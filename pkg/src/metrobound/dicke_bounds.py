"""Closed-form precision bounds for states near unpolarized Dicke states.

The estimation scheme rotates the probe about z and reads out <J_x^2>; the
phase sensitivity then follows from the error-propagation formula.  With the
parity conditions (<{J_x,J_y}> = 0 and the two fourth-order analogues) the
whole theta dependence reduces to five moments of the initial state:
<J_x^2>, <J_x^4>, <J_y^2>, <J_y^4> and <J_x J_y^2 J_x>.

The theta-independent part of the fourth-moment combination is rewritten via
the operator identity

    {J_x^2, J_y^2} + {J_x, J_y}^2 = 4 J_y^2 - 3 J_z^2 - 2 J_x^2 + 6 J_x J_y^2 J_x

which holds exactly (it only uses the angular-momentum commutators).

Note: the minimum of a/t^2 + b t^2 over t is 2 sqrt(ab); the optimal-angle
bound therefore carries a factor 2 in front of sqrt(Var(Jx^2) Var(Jy^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .qfi_core import evolve
from .spin_algebra import QuantumState, collective_xyz, expectation

VAR_CLIP_RTOL = 1e-10
PARITY_TOL = 1e-10


@dataclass(frozen=True)
class DickeMoments:
    """Moment set entering the Dicke precision bounds.

    `jz2` defaults to `jy2` (rotational invariance about the x axis, the
    experimentally relevant situation); `moments_from_state` fills it in
    exactly.  `jxjy2jx_is_bounded` records that <J_x J_y^2 J_x> was replaced
    by its symmetric-subspace upper bound rather than measured.
    """

    jx2: float
    jx4: float
    jy2: float
    jy4: float
    jxjy2jx: float
    n: int
    jz2: float | None = None
    jxjy2jx_is_bounded: bool = False
    parity_ok: bool = True

    def __post_init__(self):
        for name in ("jx2", "jx4", "jy2", "jy4", "jxjy2jx"):
            if getattr(self, name) < -1e-12:
                raise ValueError(f"moment {name} must be nonnegative")
        for m2, m4 in ((self.jx2, self.jx4), (self.jy2, self.jy4)):
            if m4 < m2**2 * (1 - 1e-9) - 1e-9:
                raise ValueError("fourth moment below squared second moment")
        shell = self.n * (self.n + 2) / 4
        if self.jx2 + self.jy2 > shell * (1 + 1e-9) + 1e-9:
            raise ValueError("second moments exceed the maximal angular momentum shell")

    @property
    def jz2_effective(self) -> float:
        return self.jy2 if self.jz2 is None else self.jz2

    @property
    def var_jx2(self) -> float:
        return _clipped_var(self.jx4, self.jx2)

    @property
    def var_jy2(self) -> float:
        return _clipped_var(self.jy4, self.jy2)

    def cross_term(self) -> float:
        """Theta-independent numerator piece of the precision formula."""
        return (
            4 * self.jy2
            - 3 * self.jz2_effective
            - 2 * self.jx2 * (1 + self.jy2)
            + 6 * self.jxjy2jx
        )

    def with_bounded_cross(self) -> "DickeMoments":
        """Replace <J_x J_y^2 J_x> by its symmetric-shell upper bound."""
        return replace(self, jxjy2jx=fourth_moment_bound(self), jxjy2jx_is_bounded=True)


def _clipped_var(m4: float, m2: float) -> float:
    var = m4 - m2**2
    if var < 0:
        if var < -VAR_CLIP_RTOL * max(1.0, m4):
            raise ValueError(f"variance {var:.3e} below round-off clip")
        var = 0.0
    return var


def moments_from_state(state: QuantumState) -> DickeMoments:
    """Evaluate the five moments (and <J_z^2>) of a state by trace.

    Also checks the parity conditions <{Jx,Jy}> = <{Jx^2,{Jx,Jy}}> =
    <{Jy^2,{Jx,Jy}}> = 0 required for the closed formula; violations are
    recorded in `parity_ok`.
    """
    jx, jy, jz = (op.matrix for op in collective_xyz(state.basis))
    jx2, jy2, jz2 = jx @ jx, jy @ jy, jz @ jz
    n = state.basis.n_particles
    mom = dict(
        jx2=expectation(state, jx2),
        jx4=expectation(state, jx2 @ jx2),
        jy2=expectation(state, jy2),
        jy4=expectation(state, jy2 @ jy2),
        jxjy2jx=expectation(state, jx @ jy2 @ jx),
        jz2=expectation(state, jz2),
    )
    anti = jx @ jy + jy @ jx
    scale = max(1.0, abs(mom["jy2"]))
    parity_ok = all(
        abs(expectation(state, term)) < PARITY_TOL * scale
        for term in (anti, jx2 @ anti + anti @ jx2, jy2 @ anti + anti @ jy2)
    )
    return DickeMoments(n=n, parity_ok=parity_ok, **mom)


def precision_vs_theta(m: DickeMoments, theta: float, extras: dict | None = None) -> float:
    """Inverse-variance precision (dtheta)^-2 at rotation angle theta.

    `extras` may override `var_jx2`, `var_jy2` or `cross_term` (the
    theta-independent numerator piece).
    """
    extras = extras or {}
    a = extras.get("var_jx2", m.var_jx2)
    b = extras.get("var_jy2", m.var_jy2)
    cross = extras.get("cross_term", m.cross_term())
    denom = 4.0 * (m.jy2 - m.jx2) ** 2
    t2 = math.tan(theta) ** 2
    if t2 == 0.0:
        if a > 0:
            return 0.0
        numerator = cross
    elif math.isinf(t2):
        if b > 0:
            return 0.0
        numerator = cross
    else:
        numerator = a / t2 + b * t2 + cross
    if numerator <= 0:
        raise ValueError("precision formula produced a nonpositive variance")
    return denom / numerator


def optimal_precision(m: DickeMoments, extras: dict | None = None) -> tuple[float, float]:
    """Best (dtheta)^-2 over theta and the optimal angle.

    tan^2(theta_opt) = sqrt(Var(Jx^2)/Var(Jy^2)); at the exact Dicke point
    (both variances zero) the analytic limit gives theta_opt = 0.
    """
    extras = extras or {}
    a = extras.get("var_jx2", m.var_jx2)
    b = extras.get("var_jy2", m.var_jy2)
    cross = extras.get("cross_term", m.cross_term())
    if a == 0.0:
        theta_opt = 0.0
        numerator = cross
    elif b == 0.0:
        theta_opt = math.pi / 2
        numerator = cross
    else:
        theta_opt = math.atan((a / b) ** 0.25)
        numerator = 2.0 * math.sqrt(a * b) + cross
    if numerator <= 0:
        raise ValueError("precision formula produced a nonpositive variance")
    return 4.0 * (m.jy2 - m.jx2) ** 2 / numerator, theta_opt


def fourth_moment_bound(m: DickeMoments) -> float:
    """Upper bound N(N+2)/8 <J_x^2> - <J_x^4>/2 on <J_x J_y^2 J_x>.

    Saturated by symmetric states; strict for states with weight outside
    the maximal angular momentum shell.
    """
    return m.n * (m.n + 2) / 8 * m.jx2 - m.jx4 / 2


def second_moment_bound(jx2: float, jy2: float, n: int, beta: float = 3.0) -> float:
    """Precision bound from second moments only.

    Uses <J_y^4> <= N^2/4 <J_y^2> and the Gaussian-shape surrogate
    <J_x^4> = beta <J_x^2>^2 (beta = 3 for a Gaussian), on top of the
    symmetric-shell bound for <J_x J_y^2 J_x>.  Returns (dtheta)^-2.
    """
    if jy2 <= jx2:
        raise ValueError("requires <J_y^2> > <J_x^2> (degenerate denominator)")
    if beta < 1:
        raise ValueError("beta must be >= 1")
    ratio = n**2 / (4 * jy2) - 1.0
    if ratio < 0:
        raise ValueError("<J_y^2> exceeds N^2/4")
    numerator = (
        jy2
        + (3 * n * (n + 2) - 8) / 4 * jx2
        + 2 * jx2 * jy2 * math.sqrt((beta - 1) * ratio)
        - 2 * jx2 * jy2
        - 3 * beta * jx2**2
    )
    if numerator <= 0:
        raise ValueError("precision formula produced a nonpositive variance")
    return 4.0 * (jy2 - jx2) ** 2 / numerator


def error_propagation_precision(state: QuantumState, theta: float) -> float:
    """Direct |d<Jx^2>/dtheta|^2 / Var(Jx^2) on the rotated state.

    Exact Heisenberg-picture evaluation (the derivative is i<[Jz, Jx^2]>),
    independent of the closed formula; used as its oracle.
    """
    jx, _, jz = collective_xyz(state.basis)
    jx2 = jx.matrix @ jx.matrix
    rotated = evolve(state, jz, theta)
    comm = 1j * (jz.matrix @ jx2 - jx2 @ jz.matrix)
    slope = expectation(rotated, comm)
    var = expectation(rotated, jx2 @ jx2) - expectation(rotated, jx2) ** 2
    if var <= 0:
        return math.inf if abs(slope) > 0 else 0.0
    return slope**2 / var


def resample_gaussian(bound_fn, inputs: dict, sigmas: dict, n_draws: int = 10_000, seed: int = 0) -> dict:
    """Gaussian-resample named inputs and summarize the bound distribution.

    Draws each key of `sigmas` from N(inputs[key], sigma^2) with a seeded
    generator, re-evaluates `bound_fn(**inputs)` per draw and reports
    mean/std/percentiles.  Draws where the bound is undefined are dropped
    (their count is reported).
    """
    rng = np.random.default_rng(seed)
    for key, sig in sigmas.items():
        if sig < 0:
            raise ValueError(f"negative sigma for {key!r}")
        if key not in inputs:
            raise ValueError(f"unknown input {key!r}")
    keys = sorted(sigmas)
    draws = {k: rng.normal(inputs[k], sigmas[k], size=n_draws) for k in keys}
    values = []
    failed = 0
    for i in range(n_draws):
        trial = dict(inputs)
        trial.update({k: float(draws[k][i]) for k in keys})
        try:
            values.append(bound_fn(**trial))
        except ValueError:
            failed += 1
    values = np.array(values)
    if len(values) == 0:
        raise ValueError("all resampled evaluations failed")
    pct = np.percentile(values, [2.5, 16, 50, 84, 97.5])
    return {
        "mean": float(values.mean()),
        "std": float(values.std()),
        "n_draws": n_draws,
        "n_failed": failed,
        "percentiles": {"2.5": pct[0], "16": pct[1], "50": pct[2], "84": pct[3], "97.5": pct[4]},
    }
