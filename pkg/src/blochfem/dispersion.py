"""Frequency-dependent permittivity models and their rational realization.

Four model variants cover the material laws we solve with:

* :class:`Constant` -- dispersion-free, eps(omega) = c.
* :class:`SimplifiedDL` -- lossless Drude-Lorentz sum
  ``alpha2 + sum_l xi2_l / (eta2_l - omega^2)``.  This is the only variant
  that admits the exact rational :class:`Realization` consumed by the
  companion linearization.
* :class:`RealDL` -- real part of the damped Drude-Lorentz sum,
  ``alpha + sum_l xi2_l (eta2_l - omega^2) / ((eta2_l - omega^2)^2
  + gamma_l^2 omega^2)``.
* :class:`RealCP` -- real part of the critical-points model, evaluated
  through its closed real form (per complex pole pair (A, B)) rather than
  by summing the complex partial fractions, which would cancel
  catastrophically near resonances.

Every variant is even in omega.  We hard-wire that by evaluating all models
in the variable ``lam = omega**2``; ``eval(model, -w) == eval(model, w)``
holds bitwise, not just to roundoff.  Derivatives in omega come from the
chain rule d/domega = 2*omega * d/dlam.

Evaluation is refused within a small relative guard of any real pole
(``NearPoleError``) instead of letting values silently blow up.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NearPoleError

__all__ = [
    "LorentzTerm",
    "Constant",
    "SimplifiedDL",
    "RealDL",
    "RealCP",
    "Realization",
    "POLE_GUARD",
    "eval",
    "eval_dlambda",
    "eval_domega",
    "real_poles",
    "realize",
    "transfer",
    "lambda_weight",
]

# Relative half-width of the exclusion window around each real pole,
# measured in lam = omega^2.  A pole at lam = p rejects evaluation for
# |lam - p| < POLE_GUARD * max(1, |p|); the max(1, .) floor keeps the
# window non-empty for poles at (or near) zero.
POLE_GUARD = 1e-8


def _check_finite_real(value, name):
    v = float(value)
    if not np.isfinite(v):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return v


@dataclass(frozen=True)
class LorentzTerm:
    """One oscillator: strength xi2 = xi^2, resonance eta2 = eta^2, damping gamma.

    eta2 and gamma must be non-negative.  xi2 may be negative: fitted
    real-part models (the silver data used by :class:`RealDL`) carry
    negative oscillator strengths, and nothing in the evaluation formulas
    requires a sign.  The variants that *do* need xi2 >= 0 (the lossless
    sum feeding the Hermitian linearization) enforce it themselves.
    """

    xi2: float
    eta2: float
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xi2", _check_finite_real(self.xi2, "xi2"))
        eta2 = _check_finite_real(self.eta2, "eta2")
        gamma = _check_finite_real(self.gamma, "gamma")
        if eta2 < 0.0:
            raise ValueError(f"eta2 must be >= 0, got {eta2}")
        if gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {gamma}")
        object.__setattr__(self, "eta2", eta2)
        object.__setattr__(self, "gamma", gamma)


@dataclass(frozen=True)
class Constant:
    """eps(omega) = c for all omega."""

    c: float

    def __post_init__(self):
        object.__setattr__(self, "c", _check_finite_real(self.c, "c"))


@dataclass(frozen=True)
class SimplifiedDL:
    """Lossless Drude-Lorentz model alpha2 + sum xi2/(eta2 - omega^2).

    All gamma must be exactly zero and all xi2 >= 0: those two conditions
    are what make lam*eps(lam) a strictly proper rational function with a
    symmetric positive realization, so the companion linearization stays
    Hermitian.  Real poles sit exactly at lam = eta2_l.
    """

    alpha2: float
    terms: tuple = ()

    def __post_init__(self):
        alpha2 = _check_finite_real(self.alpha2, "alpha2")
        if alpha2 <= 0.0:
            raise ValueError(f"alpha2 must be > 0, got {alpha2}")
        object.__setattr__(self, "alpha2", alpha2)
        terms = tuple(self.terms)
        for t in terms:
            if not isinstance(t, LorentzTerm):
                raise TypeError(f"terms must be LorentzTerm, got {type(t).__name__}")
            if t.gamma != 0.0:
                raise ValueError("SimplifiedDL requires gamma == 0 in every term")
            if t.xi2 < 0.0:
                raise ValueError("SimplifiedDL requires xi2 >= 0 in every term")
        object.__setattr__(self, "terms", terms)


@dataclass(frozen=True)
class RealDL:
    """Real part of the damped Drude-Lorentz sum.

    For gamma_l = 0 a term degenerates to the lossless xi2/(eta2 - lam)
    with a real pole at eta2_l; damped terms have no real pole.
    """

    alpha: float
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_finite_real(self.alpha, "alpha"))
        terms = tuple(self.terms)
        for t in terms:
            if not isinstance(t, LorentzTerm):
                raise TypeError(f"terms must be LorentzTerm, got {type(t).__name__}")
        object.__setattr__(self, "terms", terms)


@dataclass(frozen=True)
class RealCP:
    """Real part of the critical-points model, one complex pair (A, B) per pole.

    Evaluated per pair through the closed real form

        N/D with N = 2*(lam - |B|^2)*Re(A conj(B)) - 4*lam*Im(A)*Im(B),
                 D = (lam - |B|^2)^2 + 4*lam*Im(B)^2,

    added to the vacuum constant 1.  A pair only has a real pole when
    Im(B) == 0 (then lam = |B|^2 makes D vanish).
    """

    pairs: tuple = ()

    def __post_init__(self):
        pairs = []
        for p in self.pairs:
            a, b = p
            a = complex(a)
            b = complex(b)
            if not (np.isfinite(a.real) and np.isfinite(a.imag)
                    and np.isfinite(b.real) and np.isfinite(b.imag)):
                raise ValueError(f"non-finite pole pair {p!r}")
            pairs.append((a, b))
        object.__setattr__(self, "pairs", tuple(pairs))


@dataclass(frozen=True)
class Realization:
    """Diagonal state-space realization of the strictly proper part of
    lam * eps(lam) for a :class:`SimplifiedDL` model.

    ``A`` holds the diagonal (the eta2_l), ``b`` the input vector entries
    xi_l * eta_l, and ``Xi = sum xi2_l`` the feed-through correction, so
    that  b^T (A - lam I)^{-1} b  =  sum xi2_l eta2_l / (eta2_l - lam).
    """

    A: np.ndarray
    b: np.ndarray
    Xi: float

    def __post_init__(self):
        A = np.atleast_1d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.ndim != 1 or b.shape != A.shape:
            raise ValueError("A and b must be matching 1-d arrays")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "Xi", float(self.Xi))

    @property
    def order(self):
        return self.A.shape[0]


# ---------------------------------------------------------------------------
# pole bookkeeping


def real_poles(model):
    """Real poles of the model in the variable lam = omega^2, as a sorted array."""
    if isinstance(model, Constant):
        poles = []
    elif isinstance(model, SimplifiedDL):
        poles = [t.eta2 for t in model.terms]
    elif isinstance(model, RealDL):
        poles = [t.eta2 for t in model.terms if t.gamma == 0.0]
    elif isinstance(model, RealCP):
        poles = [abs(b) ** 2 for (_, b) in model.pairs if b.imag == 0.0]
    else:
        raise TypeError(f"not a dispersion model: {type(model).__name__}")
    return np.sort(np.asarray(poles, dtype=float))


def _guard_poles(model, lam):
    for p in real_poles(model):
        if abs(lam - p) < POLE_GUARD * max(1.0, abs(p)):
            raise NearPoleError(
                f"evaluation at omega^2 = {lam!r} is within the guard window "
                f"of the real pole at {p!r}"
            )


# ---------------------------------------------------------------------------
# evaluation (internally in lam = omega^2)


def _eval_lam(model, lam):
    if isinstance(model, Constant):
        return model.c
    if isinstance(model, SimplifiedDL):
        acc = model.alpha2
        for t in model.terms:
            acc += t.xi2 / (t.eta2 - lam)
        return acc
    if isinstance(model, RealDL):
        acc = model.alpha
        for t in model.terms:
            s = t.eta2 - lam
            if t.gamma == 0.0:
                # undamped term: evaluate without squaring s, which both
                # avoids needless rounding and makes the gamma -> 0 limit
                # agree bitwise with the lossless model
                acc += t.xi2 / s
            else:
                acc += t.xi2 * s / (s * s + t.gamma * t.gamma * lam)
        return acc
    if isinstance(model, RealCP):
        acc = 1.0
        for a, b in model.pairs:
            m = lam - abs(b) ** 2
            num = 2.0 * m * (a * b.conjugate()).real - 4.0 * lam * a.imag * b.imag
            den = m * m + 4.0 * lam * b.imag ** 2
            acc += num / den
        return acc
    raise TypeError(f"not a dispersion model: {type(model).__name__}")


def _dlam(model, lam):
    if isinstance(model, Constant):
        return 0.0
    if isinstance(model, SimplifiedDL):
        acc = 0.0
        for t in model.terms:
            s = t.eta2 - lam
            acc += t.xi2 / (s * s)
        return acc
    if isinstance(model, RealDL):
        acc = 0.0
        for t in model.terms:
            s = t.eta2 - lam
            if t.gamma == 0.0:
                acc += t.xi2 / (s * s)
                continue
            den = s * s + t.gamma * t.gamma * lam
            # d/dlam [xi2*s/den]; the numerator collapses to s^2 - gamma^2*eta2
            acc += t.xi2 * (s * s - t.gamma * t.gamma * t.eta2) / (den * den)
        return acc
    if isinstance(model, RealCP):
        acc = 0.0
        for a, b in model.pairs:
            p = (a * b.conjugate()).real
            q = a.imag * b.imag
            r = b.imag ** 2
            m = lam - abs(b) ** 2
            num = 2.0 * m * p - 4.0 * lam * q
            den = m * m + 4.0 * lam * r
            dnum = 2.0 * p - 4.0 * q
            dden = 2.0 * m + 4.0 * r
            acc += (dnum * den - num * dden) / (den * den)
        return acc
    raise TypeError(f"not a dispersion model: {type(model).__name__}")


def eval(model, omega):
    """eps(omega).  Raises NearPoleError inside the guard window of a real pole."""
    lam = float(omega) ** 2
    _guard_poles(model, lam)
    return _eval_lam(model, lam)


def eval_dlambda(model, lam):
    """d eps / d lam at lam = omega^2 (what the Newton residual actually needs)."""
    lam = float(lam)
    _guard_poles(model, lam)
    return _dlam(model, lam)


def eval_domega(model, omega):
    """d eps / d omega, analytically (chain rule through lam = omega^2)."""
    omega = float(omega)
    lam = omega ** 2
    _guard_poles(model, lam)
    return 2.0 * omega * _dlam(model, lam)


def eval_lambda(model, lam):
    """eps evaluated at lam = omega^2 directly (no square root round trip)."""
    lam = float(lam)
    _guard_poles(model, lam)
    return _eval_lam(model, lam)


# ---------------------------------------------------------------------------
# realization of the simplified model


def realize(model):
    """Diagonal realization (A, b, Xi) of a :class:`SimplifiedDL` model.

    A = diag(eta2_l), b_l = xi_l * eta_l = sqrt(xi2_l * eta2_l), and
    Xi = sum xi2_l, so the strictly proper part of lam*eps(lam) is the
    scalar transfer function b^T (A - lam I)^{-1} b.
    """
    if not isinstance(model, SimplifiedDL):
        raise TypeError(
            "only the lossless Drude-Lorentz variant admits this realization; "
            f"got {type(model).__name__}"
        )
    eta2 = np.array([t.eta2 for t in model.terms], dtype=float)
    xi2 = np.array([t.xi2 for t in model.terms], dtype=float)
    return Realization(A=eta2, b=np.sqrt(xi2 * eta2), Xi=float(np.sum(xi2)))


def transfer(realization, lam):
    """Scalar transfer function b^T (A - lam I)^{-1} b of a realization.

    A is stored as its diagonal, so the resolvent apply is elementwise.
    Raises NearPoleError when lam sits in the guard window of a diagonal
    entry (those are exactly the poles).
    """
    lam = float(lam)
    for p in realization.A:
        if abs(lam - p) < POLE_GUARD * max(1.0, abs(p)):
            raise NearPoleError(
                f"transfer function evaluated at lam = {lam!r} within the "
                f"guard window of the pole at {p!r}"
            )
    return float(np.sum(realization.b ** 2 / (realization.A - lam)))


# ---------------------------------------------------------------------------
# the lam-weight split used by the companion system


@dataclass(frozen=True)
class LambdaWeight:
    """lam * eps(lam) for a SimplifiedDL model, split as affine + strictly proper.

    value  = affine + proper
    affine = lam * alpha2 - Xi
    proper = sum xi2_l eta2_l / (eta2_l - lam)
    """

    value: float
    affine: float
    proper: float


def lambda_weight(model, lam):
    """Split lam*eps(lam) into its affine and strictly proper parts.

    Cross-checks the split against the direct product lam * eps(lam) to
    1e-12 relative (with an absolute floor of 1 for the near-cancellation
    case lam -> 0, where the two routes agree only to roundoff of the
    individual pieces) and raises ArithmeticError on disagreement --
    a failure here means the model parameters were mangled somewhere.
    """
    if not isinstance(model, SimplifiedDL):
        raise TypeError(
            f"lambda_weight needs the lossless variant, got {type(model).__name__}"
        )
    lam = float(lam)
    _guard_poles(model, lam)
    Xi = sum(t.xi2 for t in model.terms)
    affine = lam * model.alpha2 - Xi
    proper = sum(t.xi2 * t.eta2 / (t.eta2 - lam) for t in model.terms)
    value = affine + proper
    direct = lam * _eval_lam(model, lam)
    scale = max(1.0, abs(value), abs(direct))
    if abs(value - direct) > 1e-12 * scale:
        raise ArithmeticError(
            f"lam*eps split disagrees with direct evaluation at lam={lam!r}: "
            f"{value!r} vs {direct!r}"
        )
    return LambdaWeight(value=value, affine=affine, proper=proper)
