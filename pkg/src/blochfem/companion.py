"""Linearization of the rational (lossless Drude-Lorentz) eigenproblem.

The TM problem with permittivity alpha1 on the background and
eps2(lam) = alpha2 + sum_l xi2_l/(eta2_l - lam) on the disk is equivalent to
the nonlinear equation

    K(k) u + Xi*M2 u = lam*M_alpha u + s(lam)*M2 u,
    s(lam) = sum_l xi2_l*eta2_l/(eta2_l - lam),   M_alpha = alpha1*M1 + alpha2*M2,

whose strictly proper tail s(lam) can be traded for L auxiliary fields
supported on the disk. That turns the problem into one *linear* Hermitian
pencil on the extended space V x X^L:

    [[K + Xi*M2 + beta*M_alpha,  -b_1 R,        -b_2 R,       ...]
     [-b_1 R^H,                  (eta2_1+beta)*M_X,  0,       ...]   z = mu [[M_alpha,      ]
     [-b_2 R^H,                  0,             (eta2_2+beta)*M_X ]]          [  M_X, M_X, ..]] z

with mu = lam + beta. X is spanned by the V basis functions whose support
meets the disk; with that choice R (the V-to-X coupling mass on the disk)
and M_X are literally sub-blocks of M2 and the equivalence holds exactly at
the discrete level, not just in the limit. The same sub-block structure lets
every inverse power step eliminate the auxiliary blocks exactly (see
:class:`EliminatedPencil`) -- essential in floating point, where M_X is
singular to working precision on quadrature-cut cells.

The extended matrix is positive definite once beta exceeds the resonance
spread max(eta2) - min(eta2); smaller shifts are rejected up front
(ShiftBoundError) because every positivity statement downstream relies on
that bound.
"""

import numpy as np
import scipy.sparse as sparse
from dataclasses import dataclass

from . import dispersion
from .assembly import assemble_tm, weighted_mass
from .errors import ShiftBoundError
from .eigeniter import Pencil, inverse_power_rq
from .linalg import DualNorm, Factorization, HermitianSparse

__all__ = [
    "XSpace",
    "CompanionSystem",
    "CompanionSolution",
    "EliminatedPencil",
    "NonlinearResidual",
    "build_xspace",
    "build_companion",
    "default_big_start",
    "solve_linearized",
    "nonlinear_residual_dl",
    "shift_lower_bound",
]


@dataclass
class XSpace:
    """Disk-supported subspace bookkeeping.

    ``xdofs`` lists the V-DOFs whose basis functions overlap the disk (the
    criterion is an exactly-positive diagonal in the disk mass M2 -- the
    diagonal is a sum of nonnegative quadrature contributions, so it is zero
    precisely for basis functions the disk quadrature never sees). ``R`` is
    M2 restricted to those columns (full V rows), and ``M_X`` is the square
    restriction; by construction ``R[xdofs, :] == M_X`` entry for entry.
    """

    xdofs: np.ndarray
    R: sparse.csr_matrix
    M_X: sparse.csr_matrix

    @property
    def n_x(self):
        return self.xdofs.shape[0]


def build_xspace(M2):
    mat = M2.mat if isinstance(M2, HermitianSparse) else sparse.csr_matrix(M2)
    diag = mat.diagonal().real
    xdofs = np.flatnonzero(diag > 0.0)
    R = mat.tocsc()[:, xdofs].tocsr()
    M_X = R[xdofs, :]
    return XSpace(xdofs=xdofs, R=R, M_X=M_X)


def shift_lower_bound(model):
    """Positivity threshold for the extended system: the resonance spread."""
    if not model.terms:
        return 0.0
    eta2 = [t.eta2 for t in model.terms]
    return max(eta2) - min(eta2)


@dataclass
class CompanionSystem:
    """Assembled extended pencil plus everything needed to interpret it."""

    ABig: HermitianSparse
    IBig: HermitianSparse
    beta: float
    xspace: XSpace
    realization: dispersion.Realization
    model: object
    alpha1: float
    forms: object  # the V-space AssembledForms this system was built from
    M_alpha: HermitianSparse

    @property
    def n_v(self):
        return self.forms.K.n

    @property
    def n_big(self):
        return self.ABig.n

    def split(self, z):
        """Split an extended vector into (u, x) with x of shape (L, n_x)."""
        n_v, n_x = self.n_v, self.xspace.n_x
        u = z[:n_v]
        L = self.realization.order
        x = z[n_v:].reshape(L, n_x) if L else np.zeros((0, n_x), dtype=z.dtype)
        return u, x

    def pencil(self):
        return EliminatedPencil(self)

    def nonlinear_residual(self):
        return NonlinearResidual(self.forms, self.M_alpha, self.realization)


class EliminatedPencil(Pencil):
    """Extended pencil whose inverse steps eliminate the auxiliary fields.

    Solving with the assembled extended matrix directly is numerically
    hopeless: a basis function whose support meets the disk only in a thin
    sliver carries disk mass near roundoff, and restricted to such slivers
    neighbouring basis functions are almost parallel, so M_X (and with it the
    extended mass) is singular to working precision -- condition numbers
    around 1e20 on level 1, untouched by diagonal scaling. Factoring the
    extended matrix then leaks O(1e-10) noise into the iterates through the
    near-null sliver directions.

    The cure is that no solve ever needs M_X. Since R and M_X are literal
    sub-blocks of M2 (and M2 has no nonzero column outside the X-DOFs),

        R^H v = M_X * (v restricted to X),      R * (w|_X) = M2 * w

    hold entry for entry, and eliminating the auxiliary blocks from
    A_beta z = I q turns one inverse application into a single solve with the
    V-space Schur complement

        S = K + Xi*M2 + beta*M_alpha - sum_l b_l^2/(eta2_l + beta) * M2

    (Hermitian positive definite for every admissible shift) followed by the
    closed-form update z_l = (x_l + b_l * z_u|_X) / (eta2_l + beta). In exact
    arithmetic this is the same power iteration as solving with the extended
    matrix; in floating point it is the difference between a mu-trace that
    wanders at 1e-10 near the fixed point and one that is monotone to
    working precision.
    """

    def __init__(self, system):
        super().__init__(system.ABig, system.IBig, system.beta)
        self.system = system
        self._schur = None

    @property
    def schur(self):
        """Factorization of the V-space Schur complement S (built lazily)."""
        if self._schur is None:
            cs = self.system
            eta2 = np.asarray(cs.realization.A, dtype=float)
            b = np.asarray(cs.realization.b, dtype=float)
            weight = cs.realization.Xi - np.sum(b * b / (eta2 + cs.beta))
            S = (
                cs.forms.K.mat
                + weight * cs.forms.M2.mat
                + cs.beta * cs.M_alpha.mat
            ).tocsr()
            self._schur = Factorization(HermitianSparse(S))
        return self._schur

    def step(self, q):
        cs = self.system
        u, x = cs.split(np.asarray(q, dtype=complex))
        eta2 = np.asarray(cs.realization.A, dtype=float)
        b = np.asarray(cs.realization.b, dtype=float)
        rhs = cs.M_alpha @ u
        if cs.realization.order:
            rhs = rhs + cs.xspace.R @ ((b / (eta2 + cs.beta)) @ x)
        z_u = self.schur.solve(rhs)
        z_x = (x + np.outer(b, z_u[cs.xspace.xdofs])) / (eta2 + cs.beta)[:, None]
        return np.concatenate([z_u, z_x.ravel()])


def build_companion(mesh, k, model, alpha1=1.0, beta=None, forms=None):
    """Assemble the extended Hermitian pencil for a lossless rational model.

    ``beta`` defaults to the resonance spread plus one. Shifts at or below
    the spread are rejected (ShiftBoundError): positivity of the extended
    matrix is only guaranteed above it.

    With an empty model (no resonances) the construction degenerates to the
    plain shifted pencil (K + beta*M_alpha, M_alpha) on V.
    """
    if not isinstance(model, dispersion.SimplifiedDL):
        raise TypeError(
            "the linearization needs the lossless Drude-Lorentz variant, got "
            f"{type(model).__name__}"
        )
    if alpha1 <= 0.0:
        raise ValueError(f"alpha1 must be positive, got {alpha1}")
    bound = shift_lower_bound(model)
    if beta is None:
        beta = bound + 1.0
    beta = float(beta)
    if beta <= bound:
        raise ShiftBoundError(
            f"shift beta = {beta} does not exceed the resonance spread "
            f"max(eta2) - min(eta2) = {bound}; positivity of the extended "
            "matrix is not guaranteed below that bound"
        )

    if forms is None:
        forms = assemble_tm(mesh, k)
    realization = dispersion.realize(model)
    xspace = build_xspace(forms.M2)
    M_alpha = weighted_mass(mesh, alpha1, model.alpha2, forms=forms)

    A00 = (
        forms.K.mat
        + realization.Xi * forms.M2.mat
        + beta * M_alpha.mat
    ).tocsr()
    L = realization.order
    if L == 0:
        ABig = HermitianSparse(A00)
        IBig = M_alpha
    else:
        blocks = [[A00] + [-b_l * xspace.R for b_l in realization.b]]
        for ell in range(L):
            row = [None] * (L + 1)
            row[0] = -realization.b[ell] * xspace.R.conj().T
            row[ell + 1] = (realization.A[ell] + beta) * xspace.M_X
            blocks.append(row)
        ABig = HermitianSparse(sparse.bmat(blocks, format="csr"))
        IBig = HermitianSparse(
            sparse.block_diag([M_alpha.mat] + [xspace.M_X] * L, format="csr")
        )
    return CompanionSystem(
        ABig=ABig,
        IBig=IBig,
        beta=beta,
        xspace=xspace,
        realization=realization,
        model=model,
        alpha1=alpha1,
        forms=forms,
        M_alpha=M_alpha,
    )


def default_big_start(cs):
    """All-ones on the physical field, zero on the auxiliary blocks."""
    z = np.zeros(cs.n_big, dtype=complex)
    z[: cs.n_v] = 1.0
    return z


class NonlinearResidual:
    """Dual-norm residual of the rational eigenproblem, reusable across steps.

    The dual norm lives on V with the pivot mass M_alpha; its factorization
    is built once. The input u is renormalized to M_alpha-norm 1 so residual
    magnitudes are comparable across steps and meshes.
    """

    def __init__(self, forms, M_alpha, realization):
        self.forms = forms
        self.M_alpha = M_alpha
        self.realization = realization
        self.dual = DualNorm(forms.K.mat, M_alpha.mat)

    def __call__(self, u, lam):
        nrm = np.sqrt(np.vdot(u, self.M_alpha @ u).real)
        if nrm <= 0.0:
            raise ValueError("residual of a zero field")
        u = u / nrm
        s = dispersion.transfer(self.realization, lam)
        r = (
            self.forms.K @ u
            + self.realization.Xi * (self.forms.M2 @ u)
            - lam * (self.M_alpha @ u)
            - s * (self.forms.M2 @ u)
        )
        return self.dual(r)


@dataclass
class CompanionSolution:
    trace: object
    u: np.ndarray
    x: np.ndarray
    lam: float
    mu: float


def solve_linearized(cs, z0=None, steps=None, tol=None, mesh_level=0,
                     trace=None, ref_mu=None, max_steps=10000):
    """Rayleigh inverse iteration on the extended pencil.

    Trace rows (and the ``tol`` stop) use the dual-norm residual of the
    recovered field in the *nonlinear* problem -- that is the quantity the
    linearization exists to drive down; the extended-space linear residual
    is available from the returned pencil if needed.

    Returns a :class:`CompanionSolution` with the M_alpha-normalized field
    ``u``, the auxiliary blocks ``x`` (shape (L, n_x)) taken from the same
    extended iterate, and ``lam = mu - beta``.
    """
    if z0 is None:
        z0 = default_big_start(cs)
    z0 = np.asarray(z0, dtype=complex)
    if not np.any(z0[: cs.n_v]):
        raise ValueError("start vector has a zero physical component")
    pencil = cs.pencil()
    resid = cs.nonlinear_residual()

    def residual_fn(q, mu):
        u, _ = cs.split(q)
        return resid(u, mu - cs.beta)

    trace, z = inverse_power_rq(
        pencil,
        z0,
        steps=steps,
        tol=tol,
        mesh_level=mesh_level,
        trace=trace,
        ref_mu=ref_mu,
        max_steps=max_steps,
        residual_fn=residual_fn,
    )
    mu = trace[-1].mu
    u, x = cs.split(z)
    nrm = np.sqrt(np.vdot(u, cs.M_alpha @ u).real)
    return CompanionSolution(
        trace=trace, u=u / nrm, x=x / nrm, lam=mu - cs.beta, mu=mu
    )


def nonlinear_residual_dl(mesh, k, model, u, lam, alpha1=1.0, forms=None):
    """One-shot dual-norm residual of (u, lam) in the rational eigenproblem.

    Assembles and factorizes from scratch unless ``forms`` is supplied, so
    prefer :func:`solve_linearized`'s built-in residual tracking (or a
    reused :class:`NonlinearResidual`) inside loops.
    """
    if not isinstance(model, dispersion.SimplifiedDL):
        raise TypeError(
            "the rational residual needs the lossless Drude-Lorentz variant, "
            f"got {type(model).__name__}"
        )
    if forms is None:
        forms = assemble_tm(mesh, k)
    realization = dispersion.realize(model)
    M_alpha = weighted_mass(mesh, alpha1, model.alpha2, forms=forms)
    evaluator = NonlinearResidual(forms, M_alpha, realization)
    return evaluator(np.asarray(u, dtype=complex), float(lam))
