"""Experiment orchestration: refinement schedules, references, CSV traces.

The central object is the steps-per-mesh schedule: run a fixed number of
eigensolver steps on each mesh level, prolongate the iterate, refine, and
repeat; on the finest level iterate until the dual-norm residual meets the
tolerance (or a step budget runs out). Coarse solves are cheap, so most of
the convergence happens before the expensive fine-mesh factorization ever
exists -- that is the entire point of the schedule, and the wall-time
columns in the emitted traces are how we check it keeps being true.

Three experiment families share the schedule machinery:

``linear`` / ``homogeneous_check``
    constant permittivity, shifted inverse power / Rayleigh iteration;
``dl_linearized``
    lossless two-pole permittivity through the extended linear pencil;
``newton``
    dispersive permittivity attacked directly with the bordered Newton
    method, warm-started from a constant-model Rayleigh run.

Everything here is plumbing around the solver modules: configuration
parsing, level hand-offs, reference solutions, CSV persistence. No
numerics of its own beyond the eigenvalue-error column.
"""

import configparser
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dispersion
from .assembly import assemble_tm, weighted_mass
from .companion import build_companion, default_big_start, shift_lower_bound, solve_linearized
from .eigeniter import Pencil, inverse_power_rq
from .errors import BlochFEMError, NonConvergenceError
from .mesh import build_mesh, prolongate
from .newton import NewtonState, NonlinearPencil, newton_solve, newton_step, warm_start
from .trace import CSV_HEADER, IterationTrace, TraceRow

__all__ = [
    "EXPERIMENTS",
    "RunConfig",
    "ReferenceSolution",
    "SweepPoint",
    "run_schedule",
    "compute_reference",
    "emit_csv",
    "k_sweep",
    "emit_sweep_csv",
]

EXPERIMENTS = ("linear", "dl_linearized", "newton", "homogeneous_check", "k_sweep")

REFERENCE_TOL = 1e-12


@dataclass
class RunConfig:
    """One experiment run, fully determined (together with the binary).

    ``model`` is a dispersion-model instance; :meth:`from_ini` builds it
    from the ``[model]`` section. ``beta = None`` picks the standard shift
    for the experiment (1.0 for constant models, the positivity bound + 1
    for the linearized rational ones).
    """

    experiment: str = "linear"
    kx: float = math.pi / 2
    ky: float = math.pi
    model: object = field(default_factory=lambda: dispersion.Constant(1.0))
    alpha1: float = 1.0
    beta: float = None
    steps_per_mesh: int = 5
    max_level: int = 3
    fine_only: bool = False
    tol: float = 1e-10
    max_fine_steps: int = 400
    seed: int = 0
    use_reference: bool = False
    warm_eps2: float = 2.0
    warm_rq_steps: int = 8
    out: str = None
    # [sweep] section; only consulted by k_sweep paths
    sweep_from: tuple = (0.0, 0.0)
    sweep_to: tuple = (math.pi, 0.0)
    sweep_points: int = 9

    @property
    def k(self):
        return (self.kx, self.ky)

    def resolved_beta(self):
        if self.beta is not None:
            return float(self.beta)
        if self.experiment == "dl_linearized":
            return shift_lower_bound(self.model) + 1.0
        return 1.0

    def validate(self):
        """Reject impossible configurations before any assembly happens."""
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                "unknown experiment %r (one of %s)" % (self.experiment, ", ".join(EXPERIMENTS))
            )
        if self.steps_per_mesh < 1:
            raise ValueError("steps_per_mesh must be >= 1")
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.max_fine_steps < 1:
            raise ValueError("max_fine_steps must be >= 1")
        if not self.alpha1 > 0.0:
            raise ValueError("alpha1 must be positive")
        if self.experiment in ("linear", "homogeneous_check", "k_sweep"):
            if not isinstance(self.model, dispersion.Constant):
                raise ValueError(
                    "experiment %r needs a constant model" % self.experiment
                )
            if not self.model.c > 0.0:
                raise ValueError("constant permittivity must be positive")
            if self.beta is not None and not self.beta > 0.0:
                raise ValueError("beta must be positive for the constant model")
        if self.experiment == "dl_linearized":
            # the companion shift bound depends on the model: check it now
            # rather than after the level-0 assembly
            bound = shift_lower_bound(self.model)
            if self.beta is not None and not self.beta > bound:
                raise ValueError(
                    "beta = %g violates the companion shift bound %g" % (self.beta, bound)
                )
        if self.experiment == "newton":
            if not self.warm_eps2 > 0.0:
                raise ValueError("warm-start permittivity must be positive")
            if self.warm_rq_steps < 0:
                raise ValueError("warm_rq_steps must be >= 0")
        if self.sweep_points < 1:
            raise ValueError("sweep needs at least one point")
        return self

    @classmethod
    def from_ini(cls, path):
        """Read a run configuration from a flat INI file.

        Schema: ``[run]`` holds the scalar knobs (every field of this class
        except the model), ``[model]`` the permittivity (``kind`` plus its
        parameters), ``[sweep]`` an optional straight k-path. Unknown keys
        are rejected -- silent typos have burned enough afternoons.
        """
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        read = cp.read(path)
        if not read:
            raise OSError("cannot read config file %r" % (path,))
        cfg = cls()
        if cp.has_section("run"):
            run = cp["run"]
            known = {
                "experiment": str,
                "kx": float,
                "ky": float,
                "alpha1": float,
                "beta": float,
                "steps_per_mesh": int,
                "max_level": int,
                "fine_only": None,
                "tol": float,
                "max_fine_steps": int,
                "seed": int,
                "use_reference": None,
                "warm_eps2": float,
                "warm_rq_steps": int,
                "out": str,
            }
            for key in run:
                if key not in known:
                    raise ValueError("unknown [run] key %r in %s" % (key, path))
            kwargs = {}
            for key, conv in known.items():
                if key not in run:
                    continue
                if conv is None:
                    kwargs[key] = run.getboolean(key)
                else:
                    kwargs[key] = conv(run[key])
            cfg = replace(cfg, **kwargs)
        cfg = replace(cfg, model=_model_from_section(cp))
        if cp.has_section("sweep"):
            sw = cp["sweep"]
            for key in sw:
                if key not in ("from_kx", "from_ky", "to_kx", "to_ky", "points"):
                    raise ValueError("unknown [sweep] key %r in %s" % (key, path))
            cfg = replace(
                cfg,
                sweep_from=(sw.getfloat("from_kx", 0.0), sw.getfloat("from_ky", 0.0)),
                sweep_to=(sw.getfloat("to_kx", math.pi), sw.getfloat("to_ky", 0.0)),
                sweep_points=sw.getint("points", 9),
            )
        return cfg.validate()


def _floats(text):
    return tuple(float(part) for part in text.replace(",", " ").split())


def _model_from_section(cp):
    if not cp.has_section("model"):
        return dispersion.Constant(1.0)
    sec = cp["model"]
    kind = sec.get("kind", "constant").strip().lower()
    if kind == "constant":
        return dispersion.Constant(sec.getfloat("eps2", 1.0))
    xi2 = _floats(sec.get("xi2", ""))
    eta2 = _floats(sec.get("eta2", ""))
    if len(xi2) != len(eta2):
        raise ValueError("model needs matching xi2/eta2 lists")
    if kind == "simplified_dl":
        terms = tuple(
            dispersion.LorentzTerm(xi2=x, eta2=e) for x, e in zip(xi2, eta2)
        )
        return dispersion.SimplifiedDL(alpha2=sec.getfloat("alpha2", 1.0), terms=terms)
    if kind == "real_dl":
        gamma = _floats(sec.get("gamma", ""))
        if len(gamma) != len(xi2):
            raise ValueError("real_dl model needs one gamma per pole")
        terms = tuple(
            dispersion.LorentzTerm(xi2=x, eta2=e, gamma=g)
            for x, e, g in zip(xi2, eta2, gamma)
        )
        return dispersion.RealDL(alpha=sec.getfloat("alpha", 1.0), terms=terms)
    raise ValueError("unknown model kind %r" % (kind,))


@dataclass(frozen=True)
class ReferenceSolution:
    """Eigenvalue on one level beyond max_level, iterated to 1e-12."""

    mu_ref: float
    lam_ref: float
    level: int
    dofs: int
    residual_dual: float


@dataclass(frozen=True)
class SweepPoint:
    kx: float
    ky: float
    lam1: float
    error: str = None

    def as_csv(self):
        return "%.17g,%.17g,%.17g" % (self.kx, self.ky, self.lam1)


# ---------------------------------------------------------------------------
# the schedule


def _levels(config):
    if config.fine_only:
        return [config.max_level]
    return list(range(config.max_level + 1))


def run_schedule(config, reference=None):
    """Run one experiment through the steps-per-mesh schedule.

    Starts from the all-ones field on level 0 (or directly on the finest
    level when ``fine_only`` is set), runs ``steps_per_mesh`` solver steps
    per level, prolongates the iterate through each refinement, and iterates
    on the finest level until ``tol`` or ``max_fine_steps``. Returns the
    accumulated :class:`IterationTrace`; a solver failure is noted in
    ``trace.notes`` and re-raised with the partial trace attached.

    ``reference`` fills the relative-eigenvalue-error column.
    """
    config.validate()
    trace = IterationTrace()
    ref_mu = reference.mu_ref if reference is not None else None
    try:
        if config.experiment in ("linear", "homogeneous_check", "k_sweep"):
            _schedule_power(config, trace, ref_mu)
        elif config.experiment == "dl_linearized":
            _schedule_companion(config, trace, ref_mu)
        elif config.experiment == "newton":
            _schedule_newton(config, trace, ref_mu)
    except NonConvergenceError as err:
        trace.note("aborted: %s" % err)
        if err.trace is None:
            err.trace = trace
        raise
    return trace


def _schedule_power(config, trace, ref_mu):
    beta = config.resolved_beta()
    eps2 = config.model.c
    mesh = build_mesh(_levels(config)[0])
    u = np.ones(mesh.dof_count, dtype=complex)
    for level in _levels(config):
        if mesh.level != level:
            fine = build_mesh(level)
            u = prolongate(u, mesh, fine)
            mesh = fine
        forms = assemble_tm(mesh, config.k)
        pencil = Pencil.from_stiffness(
            forms.K, weighted_mass(mesh, config.alpha1, eps2, forms=forms), beta
        )
        if level < config.max_level:
            _, u = inverse_power_rq(
                pencil, u, steps=config.steps_per_mesh,
                mesh_level=level, trace=trace, ref_mu=ref_mu,
            )
        else:
            _, u = inverse_power_rq(
                pencil, u, tol=config.tol, max_steps=config.max_fine_steps,
                mesh_level=level, trace=trace, ref_mu=ref_mu,
            )
    return trace


def _schedule_companion(config, trace, ref_mu):
    beta = config.resolved_beta()
    mesh = build_mesh(_levels(config)[0])
    cs = build_companion(mesh, config.k, config.model, alpha1=config.alpha1, beta=beta)
    z = default_big_start(cs)
    for level in _levels(config):
        if mesh.level != level:
            fine = build_mesh(level)
            fine_cs = build_companion(
                fine, config.k, config.model, alpha1=config.alpha1, beta=beta
            )
            # prolongate the physical field; reseed the auxiliary blocks
            # from their defining relation at the current eigenvalue
            u, _ = cs.split(z)
            u = prolongate(u, mesh, fine)
            lam = trace[-1].lam
            eta2 = np.asarray(fine_cs.realization.A, dtype=float)
            b = np.asarray(fine_cs.realization.b, dtype=float)
            x = (b / (eta2 - lam))[:, None] * u[fine_cs.xspace.xdofs][None, :]
            z = np.concatenate([u, x.ravel()])
            mesh, cs = fine, fine_cs
        if level < config.max_level:
            sol = solve_linearized(
                cs, z, steps=config.steps_per_mesh,
                mesh_level=level, trace=trace, ref_mu=ref_mu,
            )
        else:
            sol = solve_linearized(
                cs, z, tol=config.tol, max_steps=config.max_fine_steps,
                mesh_level=level, trace=trace, ref_mu=ref_mu,
            )
        z = np.concatenate([sol.u, sol.x.ravel()])
    return trace


def _newton_leg(pencil, state, steps, trace, mesh_level, ref_lam):
    """Fixed number of Newton steps with per-step trace rows."""
    for _ in range(steps):
        t0 = time.perf_counter()
        state = newton_step(pencil, state)
        res = pencil.residual_dual(state.u, state.lam)
        wall = time.perf_counter() - t0
        rel = abs(state.lam - ref_lam) / abs(ref_lam) if ref_lam else math.nan
        trace.append(TraceRow(
            j=trace.next_j, mesh_level=mesh_level, dofs=pencil.n,
            mu=state.lam, lam=state.lam, residual_dual=res,
            wall_seconds=wall, rel_err=rel,
        ))
    return state


def _schedule_newton(config, trace, ref_lam):
    mesh = build_mesh(_levels(config)[0])
    forms = assemble_tm(mesh, config.k)
    u, omega = warm_start(
        mesh, config.k, const_eps2=config.warm_eps2,
        rq_steps=config.warm_rq_steps, alpha1=config.alpha1, forms=forms,
    )
    trace.note(
        "warm start: %d Rayleigh steps on the eps2=%g model, omega0=%.6g"
        % (config.warm_rq_steps, config.warm_eps2, omega)
    )
    lam = omega ** 2
    for level in _levels(config):
        if mesh.level != level:
            fine = build_mesh(level)
            u = prolongate(u, mesh, fine)
            mesh = fine
            forms = assemble_tm(mesh, config.k)
        pencil = NonlinearPencil(
            K=forms.K, M1=forms.M1, M2=forms.M2,
            model=config.model, alpha1=config.alpha1,
        )
        y = np.random.default_rng([config.seed, level]).standard_normal(pencil.n)
        if level < config.max_level:
            my = pencil.mass @ y
            state = NewtonState(u=u / np.vdot(my, u), lam=lam, y=y)
            state = _newton_leg(
                pencil, state, config.steps_per_mesh, trace, level, ref_lam
            )
            u, lam = state.u, state.lam
        else:
            u, omega, _ = newton_solve(
                pencil, u, math.sqrt(lam), y,
                tol=config.tol, maxit=config.max_fine_steps,
                mesh_level=level, trace=trace, ref_lam=ref_lam,
            )
            lam = omega ** 2
    return trace


# ---------------------------------------------------------------------------
# references and persistence


def compute_reference(config, tol=REFERENCE_TOL):
    """Eigenvalue on the (max_level + 1) mesh, iterated down to ``tol``."""
    config.validate()
    ref = replace(
        config,
        fine_only=True,
        max_level=config.max_level + 1,
        tol=tol,
        max_fine_steps=max(config.max_fine_steps, 2000),
        use_reference=False,
    )
    trace = run_schedule(ref)
    last = trace[-1]
    return ReferenceSolution(
        mu_ref=last.mu,
        lam_ref=last.lam,
        level=ref.max_level,
        dofs=last.dofs,
        residual_dual=last.residual_dual,
    )


def emit_csv(trace, path):
    """Write a trace as CSV (17 significant digits, LF endings)."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in trace:
                fh.write(row.as_csv() + "\n")
    except OSError as err:
        raise OSError("cannot write trace CSV %r: %s" % (str(path), err)) from err


def linear_k_path(start, stop, points):
    """``points`` k-vectors evenly spaced on the segment [start, stop]."""
    if points < 1:
        raise ValueError("need at least one point")
    if points == 1:
        return [tuple(map(float, start))]
    ts = np.linspace(0.0, 1.0, points)
    a, b = np.asarray(start, float), np.asarray(stop, float)
    return [tuple(a + t * (b - a)) for t in ts]


def k_sweep(config, k_path):
    """Smallest eigenvalue along a list of Bloch vectors.

    Each point runs the configured solver through :func:`run_schedule`.
    A failing point is recorded (``lam1 = NaN`` plus the error text) and
    the sweep moves on.
    """
    if not k_path:
        raise ValueError("empty k path")
    config.validate()
    points = []
    for kx, ky in k_path:
        cfg = replace(config, kx=float(kx), ky=float(ky), out=None)
        try:
            tr = run_schedule(cfg)
            points.append(SweepPoint(kx=cfg.kx, ky=cfg.ky, lam1=tr[-1].lam))
        except (BlochFEMError, np.linalg.LinAlgError) as err:
            points.append(
                SweepPoint(kx=cfg.kx, ky=cfg.ky, lam1=math.nan, error=str(err))
            )
    return points


def emit_sweep_csv(points, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("kx,ky,lambda1\n")
            for p in points:
                fh.write(p.as_csv() + "\n")
    except OSError as err:
        raise OSError("cannot write sweep CSV %r: %s" % (str(path), err)) from err
