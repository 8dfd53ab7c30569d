"""Bordered Newton iteration for the dispersive nonlinear eigenproblem.

The unknown pair is (u, lam) with lam = omega^2: every supported
permittivity is even in omega, so the problem is rational in lam and the
omega <-> -omega sign ambiguity never enters. The residual map is

    T(lam) u = [K - lam*(alpha1*M1 + eps2(lam)*M2)] u,

closed by the normalization P_y u = y^H M u = 1 against a fixed vector y
(M is the plain, unweighted mass). One Newton step solves the bordered
Hermitian-plus-border system

    [[T(lam), dT(lam) u], [y^H M, 0]] (s, nu) = (-T(lam) u, 0)

as a single sparse (n+1) x (n+1) factorization -- T(lam) itself turns
singular at convergence, so eliminating through it is exactly the wrong
move, while the bordered matrix stays well conditioned. The constraint row
forces y^H M s = 0, so the normalization survives every update; an explicit
renormalization after each step removes roundoff drift.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from . import dispersion
from .assembly import assemble_tm, weighted_mass
from .eigeniter import Pencil, inverse_power_rq
from .errors import NonConvergenceError, SingularMatrixError
from .linalg import DualNorm, Factorization, HermitianSparse, rayleigh_quotient
from .trace import IterationTrace, TraceRow

__all__ = [
    "NonlinearPencil",
    "NewtonState",
    "newton_step",
    "newton_solve",
    "warm_start",
    "decay_exponent",
]


@dataclass
class NonlinearPencil:
    """T(lam) = K - lam*(alpha1*M1 + eps2(lam)*M2) and its lam-derivative."""

    K: HermitianSparse
    M1: HermitianSparse
    M2: HermitianSparse
    model: object
    alpha1: float = 1.0

    def __post_init__(self):
        if self.alpha1 <= 0.0:
            raise ValueError(f"alpha1 must be positive, got {self.alpha1}")
        self._mass = None
        self._dual = None

    @classmethod
    def from_mesh(cls, mesh, k, model, alpha1=1.0, forms=None):
        if forms is None:
            forms = assemble_tm(mesh, k)
        return cls(K=forms.K, M1=forms.M1, M2=forms.M2, model=model,
                   alpha1=alpha1)

    @property
    def n(self):
        return self.K.n

    @property
    def mass(self):
        """Plain mass M1 + M2: the normalization and residual weight."""
        if self._mass is None:
            self._mass = HermitianSparse((self.M1.mat + self.M2.mat).tocsr())
        return self._mass

    @property
    def dual(self):
        if self._dual is None:
            self._dual = DualNorm(self.K.mat, self.mass.mat)
        return self._dual

    def T(self, lam):
        lam = float(lam)
        eps2 = dispersion.eval_lambda(self.model, lam)
        return (
            self.K.mat
            - lam * self.alpha1 * self.M1.mat
            - lam * eps2 * self.M2.mat
        ).tocsr()

    def dT(self, lam):
        """d/dlam of T: -alpha1*M1 - (eps2 + lam*eps2')*M2."""
        lam = float(lam)
        eps2 = dispersion.eval_lambda(self.model, lam)
        deps2 = dispersion.eval_dlambda(self.model, lam)
        return (
            -self.alpha1 * self.M1.mat - (eps2 + lam * deps2) * self.M2.mat
        ).tocsr()

    def residual_dual(self, u, lam):
        """Dual norm of T(lam) applied to the mass-normalized field."""
        nrm = math.sqrt(np.vdot(u, self.mass @ u).real)
        if nrm <= 0.0:
            raise ValueError("residual of a zero field")
        return self.dual(self.T(lam) @ (u / nrm))


@dataclass
class NewtonState:
    """One Newton iterate: field u (with P_y u = 1), eigenvalue lam, and y."""

    u: np.ndarray
    lam: float
    y: np.ndarray

    @property
    def omega(self):
        if self.lam < 0.0:
            raise ValueError(f"lam = {self.lam} is negative; omega undefined")
        return math.sqrt(self.lam)


def _normalized_against(u, my, what="start vector"):
    pyu = np.vdot(my, u)
    if abs(pyu) < 1e-300:
        raise ValueError(
            f"{what} is orthogonal to the normalization functional; "
            "pick a different y"
        )
    return u / pyu


def newton_step(pencil, state):
    """One bordered Newton update; returns the new state.

    Raises SingularMatrixError if the bordered matrix cannot be factored,
    which means the current (u, lam) sits where the border fails to control
    the nullspace -- restart closer to the eigenpair or change y.
    """
    T = pencil.T(state.lam)
    c = pencil.dT(state.lam) @ state.u
    my = pencil.mass @ state.y
    n = pencil.n
    bordered = sparse.bmat(
        [[T, c.reshape(n, 1)], [my.conj().reshape(1, n), None]],
        format="csr",
    )
    rhs = np.concatenate([-(T @ state.u), [0.0]])
    try:
        sol = Factorization(bordered).solve(rhs)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            "bordered Newton matrix is singular at lam = %r; restart from a "
            "better (u, lam) or choose a different normalization vector y "
            "(%s)" % (state.lam, exc)
        ) from exc
    u = state.u + sol[:n]
    # nu is real up to roundoff (Hermitian T, real lam); keep lam real
    lam = state.lam + sol[n].real
    u = _normalized_against(u, my, what="updated field")
    return NewtonState(u=u, lam=lam, y=state.y)


def newton_solve(pencil, u0, omega0, y, tol=1e-13, maxit=30, mesh_level=0,
                 trace=None, ref_lam=None):
    """Newton iteration from (u0, omega0) until the dual residual reaches tol.

    The start is rescaled to P_y u0 = 1. The trace records the residual of
    the *start* as its first row, then one row per Newton step, so decay
    diagnostics see the full history. Divergence (three consecutive residual
    increases) and running out of iterations both raise NonConvergenceError
    with the trace attached.

    Returns (u, omega, trace); u has P_y u = 1.
    """
    if trace is None:
        trace = IterationTrace()
    y = np.asarray(y)
    my = pencil.mass @ y
    u = _normalized_against(np.asarray(u0, dtype=complex), my)
    lam = float(omega0) ** 2

    def record(res, wall):
        rel = abs(lam - ref_lam) / abs(ref_lam) if ref_lam is not None else np.nan
        trace.append(
            TraceRow(
                j=trace.next_j,
                mesh_level=mesh_level,
                dofs=pencil.n,
                mu=lam,
                lam=lam,
                residual_dual=res,
                wall_seconds=wall,
                rel_err=rel,
            )
        )

    res = pencil.residual_dual(u, lam)
    record(res, 0.0)
    if res <= tol:
        return u, math.sqrt(lam), trace

    state = NewtonState(u=u, lam=lam, y=y)
    worse = 0
    for _ in range(maxit):
        t0 = time.perf_counter()
        state = newton_step(pencil, state)
        lam = state.lam
        new_res = pencil.residual_dual(state.u, state.lam)
        record(new_res, time.perf_counter() - t0)
        if new_res <= tol:
            return state.u, state.omega, trace
        worse = worse + 1 if new_res > res else 0
        if worse >= 3:
            raise NonConvergenceError(
                "Newton residual grew three steps in a row (last %.3e); "
                "the start is outside the attraction basin" % new_res,
                trace=trace,
            )
        res = new_res
    raise NonConvergenceError(
        f"Newton did not reach {tol:g} within {maxit} steps",
        trace=trace,
    )


def warm_start(mesh, k, const_eps2=2.0, rq_steps=8, alpha1=1.0, forms=None):
    """Start pair from Rayleigh iteration on a constant-permittivity proxy.

    Freezes the dispersive permittivity at ``const_eps2``, runs ``rq_steps``
    Rayleigh-quotient inverse-power steps on the resulting linear pencil
    (unit shift), and returns that iterate together with omega0 = sqrt(lam).
    ``rq_steps = 0`` skips the iteration and returns the all-ones start with
    its raw Rayleigh value.
    """
    if const_eps2 <= 0.0:
        raise ValueError(f"const_eps2 must be positive, got {const_eps2}")
    if rq_steps < 0:
        raise ValueError(f"rq_steps must be >= 0, got {rq_steps}")
    if forms is None:
        forms = assemble_tm(mesh, k)
    M_w = weighted_mass(mesh, alpha1, const_eps2, forms=forms)
    pencil = Pencil.from_stiffness(forms.K, M_w, beta=1.0)
    u = np.ones(pencil.n, dtype=complex)
    if rq_steps == 0:
        lam = rayleigh_quotient(u, pencil.A_beta, pencil.M_w) - 1.0
    else:
        tr, u = inverse_power_rq(pencil, u, steps=rq_steps)
        lam = tr[-1].lam
    if lam <= 0.0:
        raise NonConvergenceError(
            f"warm start produced a non-positive eigenvalue {lam}"
        )
    return pencil.normalized(u), math.sqrt(lam)


def decay_exponent(residuals, transitions=3, saturation=5.0):
    """Fitted p in r_{j+1} ~ C * r_j^p over the last ``transitions`` decreases.

    Only strictly decreasing consecutive pairs count, and pairs whose
    endpoint lands within ``saturation`` times the smallest residual of the
    whole sequence are dropped: those steps crashed into the floating-point
    residual floor (a quadratic step from 1e-9 "reaches" 1e-13 instead of
    1e-18, reading as sublinear) and measure the floor, not the method.
    Needs at least two surviving pairs; quadratic convergence shows up as p
    close to 2.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two residuals to fit an exponent")
    floor = r.min()
    pairs = [
        (r[i], r[i + 1])
        for i in range(len(r) - 1)
        if r[i] > r[i + 1] > saturation * floor
    ]
    pairs = pairs[-transitions:]
    if len(pairs) < 2:
        raise ValueError(
            "need at least two decreasing residual steps above the "
            "saturation floor to fit an exponent"
        )
    lo = np.log([p[0] for p in pairs])
    hi = np.log([p[1] for p in pairs])
    slope, _ = np.polyfit(lo, hi, 1)
    return float(slope)
