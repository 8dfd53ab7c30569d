"""Complex Hermitian sparse matrices: storage, factorization, quotients.

All heavy lifting is delegated to scipy.sparse / SuperLU; this module pins
the contracts the eigensolvers rely on:

* construction-time Hermiticity validation (hard error, not a warning),
* reusable factorizations with an explicit singularity signal and a
  1e-10 backward-error guarantee (one step of iterative refinement),
* real Rayleigh quotients with an imaginary-residue diagnostics counter,
* dual-norm residual evaluation sqrt(r^H (K+M)^{-1} r) with a cached
  factorization of K+M.
"""

import numpy as np
from scipy import sparse
from scipy.io import mmread, mmwrite
from scipy.sparse.linalg import splu

from .errors import HermitianViolationError, SingularMatrixError

__all__ = [
    "HermitianSparse",
    "Factorization",
    "factorize",
    "solve",
    "rayleigh_quotient",
    "dual_norm_residual",
    "DualNorm",
    "imag_residue_warnings",
    "reset_imag_residue_warnings",
    "is_positive_definite",
    "save_matrix",
    "load_matrix",
]

#: relative entrywise tolerance for the Hermiticity check
HERMITIAN_RTOL = 1e-13

#: backward-error target for solves
SOLVE_RTOL = 1e-10

# diagnostics: number of Rayleigh quotients whose imaginary residue exceeded
# the 1e-12 relative threshold (should stay 0 for Hermitian pencils)
_imag_warnings = 0


def imag_residue_warnings():
    """Count of Rayleigh-quotient evaluations with suspicious imaginary parts."""
    return _imag_warnings


def reset_imag_residue_warnings():
    global _imag_warnings
    _imag_warnings = 0


def _bump_imag_warnings():
    global _imag_warnings
    _imag_warnings += 1


class HermitianSparse:
    """A square sparse matrix with an optional validated Hermitian flag.

    The underlying scipy CSR matrix is exposed as ``.mat``; the wrapper only
    adds the validation contract and a few conveniences. Real symmetric
    matrices are fine (Hermitian with zero imaginary part) and keep their
    real dtype.
    """

    def __init__(self, mat, hermitian=True):
        mat = sparse.csr_matrix(mat)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("matrix must be square, got %r" % (mat.shape,))
        self.mat = mat
        self.n = mat.shape[0]
        self.hermitian = bool(hermitian)
        if self.hermitian:
            self._validate_hermitian()

    def _validate_hermitian(self):
        diff = self.mat - self.mat.getH()
        scale = np.abs(self.mat.data).max() if self.mat.nnz else 0.0
        worst = np.abs(diff.data).max() if diff.nnz else 0.0
        if scale > 0 and worst > HERMITIAN_RTOL * scale:
            raise HermitianViolationError(
                "matrix flagged hermitian violates symmetry: "
                "max|A - A^H| = %.3e vs max|A| = %.3e" % (worst, scale)
            )

    @property
    def shape(self):
        return self.mat.shape

    @property
    def dtype(self):
        return self.mat.dtype

    def dot(self, x):
        return self.mat @ x

    def __matmul__(self, x):
        return self.mat @ x

    def toarray(self):
        return self.mat.toarray()

    def __repr__(self):
        return "HermitianSparse(n=%d, nnz=%d, dtype=%s, hermitian=%s)" % (
            self.n,
            self.mat.nnz,
            self.mat.dtype,
            self.hermitian,
        )


def _as_csr(A):
    if isinstance(A, HermitianSparse):
        return A.mat
    return sparse.csr_matrix(A)


class Factorization:
    """Reusable sparse LU factorization (SuperLU) of a square matrix.

    ``solve`` enforces the 1e-10 backward-error contract with at most one
    step of iterative refinement. The original matrix is kept (sparse, cheap)
    to compute residuals.
    """

    def __init__(self, A):
        mat = _as_csr(A)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("can only factorize square matrices")
        self.mat = mat
        self.n = mat.shape[0]
        # inf-norm of A, used in the backward-error denominator
        self.norm = np.abs(mat).sum(axis=1).max() if mat.nnz else 0.0
        try:
            # All matrices here have symmetric sparsity (Hermitian pencils,
            # bordered systems), where the AT+A minimum-degree ordering
            # produces ~3x less fill than the default column ordering.
            self.lu = splu(
                mat.tocsc(),
                permc_spec="MMD_AT_PLUS_A",
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            # SuperLU reports exact singularity through RuntimeError
            raise SingularMatrixError(
                "sparse factorization failed (matrix singular to working "
                "precision): %s" % exc
            ) from exc
        self.refinements = 0

    def _raw_solve(self, b):
        # a real factorization handles a complex right-hand side part by
        # part (A real => re/im decouple); complex factorizations and real
        # right-hand sides go straight through
        if np.iscomplexobj(b) and not np.iscomplexobj(self.lu.U.data):
            return self.lu.solve(np.ascontiguousarray(b.real)) + 1j * self.lu.solve(
                np.ascontiguousarray(b.imag)
            )
        return self.lu.solve(b.astype(self.lu.U.dtype, copy=False))

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.n:
            raise ValueError(
                "right-hand side length %d does not match matrix size %d"
                % (b.shape[0], self.n)
            )
        x = self._raw_solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError(
                "solve produced non-finite entries; matrix is singular to "
                "working precision"
            )
        r = b - self.mat @ x
        nb = np.linalg.norm(b)
        denom = self.norm * np.linalg.norm(x) + nb
        if denom > 0 and np.linalg.norm(r) > SOLVE_RTOL * denom:
            x = x + self._raw_solve(r)
            self.refinements += 1
        return x


def factorize(A):
    """Factorize a (Hermitian or general) sparse matrix for repeated solves."""
    return Factorization(A)


def solve(F, b):
    """Solve A x = b with a previously computed factorization of A."""
    return F.solve(b)


def rayleigh_quotient(u, A, B):
    """(u^H A u) / (u^H B u) for a Hermitian pencil; returns a real number.

    The imaginary parts of numerator and denominator are checked against a
    1e-12 relative threshold and then discarded; exceedances bump the
    module-level diagnostics counter.
    """
    u = np.asarray(u)
    if not np.any(u):
        raise ValueError("Rayleigh quotient of the zero vector")
    num = np.vdot(u, _as_csr(A) @ u)
    den = np.vdot(u, _as_csr(B) @ u)
    if abs(num.imag) > 1e-12 * abs(num) or abs(den.imag) > 1e-12 * abs(den):
        _bump_imag_warnings()
    if den.real == 0.0:
        raise ZeroDivisionError("Rayleigh quotient denominator is zero")
    return num.real / den.real


class DualNorm:
    """Evaluator of the dual norm sqrt(r^H (K+M)^{-1} r).

    Holds one factorization of K+M; meant to be constructed once per mesh
    (and wave vector) and reused for every residual of the run.
    """

    def __init__(self, K, M):
        KM = _as_csr(K) + _as_csr(M)
        try:
            self.fact = Factorization(KM)
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                "K+M is singular; dual norm undefined (%s)" % exc
            ) from exc

    @classmethod
    def from_factorization(cls, fact):
        """Wrap an existing factorization whose matrix already *is* K+M.

        Shift-by-one pencils hit this: K + 1.0*M is bitwise the shifted
        operator, so the solver factorization doubles as the dual-norm
        factorization for free.
        """
        dn = cls.__new__(cls)
        dn.fact = fact
        return dn

    def __call__(self, r):
        r = np.asarray(r)
        if not np.any(r):
            return 0.0
        z = self.fact.solve(r)
        val = np.vdot(r, z)
        # r^H (K+M)^{-1} r is real nonnegative for Hermitian positive K+M;
        # tiny negative round-off is clipped
        return float(np.sqrt(max(val.real, 0.0)))


def dual_norm_residual(r, K, M):
    """One-shot dual norm; prefer DualNorm when evaluating many residuals."""
    return DualNorm(K, M)(r)


def is_positive_definite(A):
    """Dense Cholesky test; intended for small matrices in validation paths."""
    arr = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
    try:
        np.linalg.cholesky(arr)
        return True
    except np.linalg.LinAlgError:
        return False


def save_matrix(A, path):
    """Write a matrix in Matrix Market coordinate format (debug interface)."""
    mat = _as_csr(A)
    symmetry = "general"
    if isinstance(A, HermitianSparse) and A.hermitian:
        symmetry = "hermitian" if np.iscomplexobj(mat) else "symmetric"
    mmwrite(str(path), mat.tocoo(), symmetry=symmetry)


def load_matrix(path, hermitian=False):
    """Read a Matrix Market file back into a HermitianSparse wrapper."""
    return HermitianSparse(sparse.csr_matrix(mmread(str(path))), hermitian=hermitian)
