"""Schedule plumbing: level hand-offs, CSV persistence, sweeps, configs."""

import math
import pathlib

import numpy as np
import pytest

from blochfem import dispersion, driver
from blochfem.errors import NonConvergenceError
from blochfem.trace import CSV_HEADER, IterationTrace

from test_dispersion import silver

K_POINT = (math.pi / 2, math.pi)
REPO = pathlib.Path(__file__).resolve().parent.parent


def fourier_lambda1(k):
    return min(
        (k[0] + 2 * math.pi * a) ** 2 + (k[1] + 2 * math.pi * b) ** 2
        for a in range(-3, 4)
        for b in range(-3, 4)
    )


def linear_config(**kw):
    base = dict(
        experiment="linear",
        model=dispersion.Constant(8.0),
        steps_per_mesh=3,
        max_level=1,
        tol=1e-10,
    )
    base.update(kw)
    return driver.RunConfig(**base)


def two_oscillator():
    return dispersion.SimplifiedDL(
        alpha2=2.0,
        terms=(
            dispersion.LorentzTerm(xi2=98.6960, eta2=55.2698),
            dispersion.LorentzTerm(xi2=197.3921, eta2=63.1655),
        ),
    )


# ---------------------------------------------------------------------------
# the schedule


def test_levels_increment_every_s_steps():
    cfg = linear_config(steps_per_mesh=3, max_level=2)
    tr = driver.run_schedule(cfg)
    levels = tr.levels()
    assert list(levels[:6]) == [0, 0, 0, 1, 1, 1]
    assert set(levels[6:]) == {2}
    assert np.all(np.diff(levels) >= 0)
    assert [r.j for r in tr] == list(range(1, len(tr) + 1))
    assert tr[-1].residual_dual <= cfg.tol


def test_fine_only_stays_on_one_level():
    cfg = linear_config(fine_only=True, max_level=1)
    tr = driver.run_schedule(cfg)
    assert set(tr.levels()) == {1}
    assert tr[-1].residual_dual <= cfg.tol


def test_max_level_zero_equals_fine_only():
    a = driver.run_schedule(linear_config(max_level=0, steps_per_mesh=50))
    b = driver.run_schedule(linear_config(max_level=0, fine_only=True))
    assert np.array_equal(a.mus(), b.mus())


def test_runs_are_deterministic():
    cfg = linear_config(max_level=1)
    a = driver.run_schedule(cfg)
    b = driver.run_schedule(cfg)
    assert np.array_equal(a.mus(), b.mus())
    assert np.array_equal(a.lams(), b.lams())
    assert np.array_equal(a.residuals(), b.residuals())


def test_reference_fills_rel_err_column():
    cfg = linear_config(max_level=1)
    ref = driver.compute_reference(cfg)
    tr = driver.run_schedule(cfg, reference=ref)
    expected = abs(tr[0].mu - ref.mu_ref) / abs(ref.mu_ref)
    assert tr[0].rel_err == pytest.approx(expected, rel=1e-12)
    assert np.all(np.isfinite([r.rel_err for r in tr]))


def test_budget_exhaustion_raises_and_annotates():
    cfg = linear_config(max_level=0, tol=1e-13, max_fine_steps=3)
    with pytest.raises(NonConvergenceError) as info:
        driver.run_schedule(cfg)
    assert len(info.value.trace) == 3
    assert any("aborted" in note for note in info.value.trace.notes)


def test_companion_schedule_levels_and_monotonicity():
    cfg = driver.RunConfig(
        experiment="dl_linearized", model=two_oscillator(),
        steps_per_mesh=5, max_level=1, tol=1e-8,
    )
    tr = driver.run_schedule(cfg)
    assert list(tr.levels()[:5]) == [0] * 5
    assert set(tr.levels()[5:]) == {1}
    assert tr.monotone_mu_violation() <= 1e-13
    assert tr[-1].residual_dual <= 1e-8
    assert tr[-1].lam == pytest.approx(2.79574883, abs=1e-6)


def test_newton_schedule_reaches_fine_tolerance():
    cfg = driver.RunConfig(
        experiment="newton", model=silver(),
        steps_per_mesh=3, max_level=1, tol=1e-12, seed=0,
    )
    tr = driver.run_schedule(cfg)
    assert any("warm start" in note for note in tr.notes)
    assert list(tr.levels()[:3]) == [0] * 3
    assert tr[-1].residual_dual <= 1e-12
    assert tr[-1].lam == pytest.approx(6.3080838, abs=1e-6)


# ---------------------------------------------------------------------------
# references


def test_reference_brackets_analytic_value():
    cfg = driver.RunConfig(
        experiment="homogeneous_check", model=dispersion.Constant(1.0),
        max_level=3, tol=1e-10,
    )
    ref = driver.compute_reference(cfg)
    exact = fourier_lambda1(K_POINT) + 1.0  # mu = lambda + beta
    assert ref.level == 4
    assert exact < ref.mu_ref < exact * (1.0 + 1e-6)
    assert ref.residual_dual <= driver.REFERENCE_TOL


def test_reference_levels_pin_exact_mode_and_disk_converges():
    # empty cell: the constant field is an exact discrete eigenvector at
    # every level, so references sit on the analytic value up to solver
    # noise instead of decreasing (see the decision ledger on nestedness)
    exact = fourier_lambda1(K_POINT) + 1.0
    for max_level in (1, 2):
        cfg = driver.RunConfig(
            experiment="homogeneous_check", model=dispersion.Constant(1.0),
            max_level=max_level, tol=1e-10,
        )
        assert driver.compute_reference(cfg).mu_ref == pytest.approx(exact, abs=1e-9)
    # the disk problem does discretize: consecutive references approach
    # each other (the interface quadrature makes them oscillate, not
    # decrease, around the limit)
    mus = []
    for max_level in (1, 2, 3):
        cfg = driver.RunConfig(
            experiment="linear", model=dispersion.Constant(8.0),
            max_level=max_level, tol=1e-10,
        )
        mus.append(driver.compute_reference(cfg).mu_ref)
    assert abs(mus[2] - mus[1]) < 0.2 * abs(mus[1] - mus[0])


# ---------------------------------------------------------------------------
# persistence


def test_emit_csv_roundtrip(tmp_path):
    cfg = linear_config(max_level=1)
    tr = driver.run_schedule(cfg)
    path = tmp_path / "run.csv"
    driver.emit_csv(tr, path)
    text = path.read_text(encoding="utf-8")
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == len(tr) + 1
    for line, row in zip(lines[1:], tr):
        parts = line.split(",")
        assert int(parts[0]) == row.j
        assert int(parts[1]) == row.mesh_level
        # 17 significant digits survive the float round trip exactly
        assert float(parts[3]) == row.mu
        assert float(parts[4]) == row.lam
        assert float(parts[6]) == row.residual_dual


def test_emit_csv_empty_trace_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    driver.emit_csv(IterationTrace(), path)
    assert path.read_text(encoding="utf-8") == CSV_HEADER + "\n"


def test_emit_csv_bad_path_reports_context(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        driver.emit_csv(IterationTrace(), tmp_path / "no" / "such" / "dir.csv")


def test_same_seed_same_csv_columns(tmp_path):
    cfg = linear_config(max_level=1)
    cols = []
    for name in ("a.csv", "b.csv"):
        driver.emit_csv(driver.run_schedule(cfg), tmp_path / name)
        lines = (tmp_path / name).read_text().splitlines()[1:]
        cols.append([tuple(l.split(",")[3:5]) for l in lines])
    assert cols[0] == cols[1]


# ---------------------------------------------------------------------------
# sweeps


def test_homogeneous_sweep_matches_plane_waves():
    cfg = driver.RunConfig(
        experiment="k_sweep", model=dispersion.Constant(1.0),
        steps_per_mesh=5, max_level=1, tol=1e-8,
    )
    path = driver.linear_k_path((0.0, 0.0), (math.pi, 0.0), 3)
    points = driver.k_sweep(cfg, path)
    assert len(points) == 3
    assert all(p.error is None for p in points)
    assert abs(points[0].lam1) <= 1e-8
    for p in points[1:]:
        assert p.lam1 == pytest.approx(fourier_lambda1((p.kx, p.ky)), rel=1e-5)


def test_sweep_k_and_minus_k_agree():
    cfg = driver.RunConfig(
        experiment="k_sweep", model=dispersion.Constant(1.0),
        steps_per_mesh=5, max_level=1, tol=1e-10,
    )
    k = (1.1, 0.7)
    pts = driver.k_sweep(cfg, [k, (-k[0], -k[1])])
    assert pts[0].lam1 == pytest.approx(pts[1].lam1, abs=1e-11)


def test_single_point_sweep_equals_direct_run():
    cfg = driver.RunConfig(
        experiment="k_sweep", model=dispersion.Constant(1.0),
        kx=K_POINT[0], ky=K_POINT[1],
        steps_per_mesh=5, max_level=1, tol=1e-10,
    )
    direct = driver.run_schedule(cfg)
    pts = driver.k_sweep(cfg, [K_POINT])
    assert pts[0].lam1 == direct[-1].lam


def test_sweep_records_failures_and_continues():
    # with the disk present, Gamma still converges instantly (the constant
    # field is the exact zero mode) while the zone-edge point cannot finish
    # inside the tiny budget
    cfg = driver.RunConfig(
        experiment="k_sweep", model=dispersion.Constant(8.0),
        steps_per_mesh=5, max_level=0, tol=1e-10, max_fine_steps=6,
    )
    pts = driver.k_sweep(cfg, [(0.0, 0.0), (math.pi, 0.0)])
    assert pts[0].error is None and np.isfinite(pts[0].lam1)
    assert pts[1].error is not None and math.isnan(pts[1].lam1)


def test_sweep_csv_format(tmp_path):
    points = [
        driver.SweepPoint(kx=0.0, ky=0.0, lam1=0.5),
        driver.SweepPoint(kx=1.0, ky=0.0, lam1=math.nan, error="x"),
    ]
    path = tmp_path / "sweep.csv"
    driver.emit_sweep_csv(points, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "kx,ky,lambda1"
    assert lines[1] == "0,0,0.5"
    assert "nan" in lines[2]


def test_empty_k_path_rejected():
    with pytest.raises(ValueError):
        driver.k_sweep(linear_config(), [])


def test_linear_k_path_endpoints():
    path = driver.linear_k_path((0.0, 0.0), (1.0, 2.0), 5)
    assert path[0] == (0.0, 0.0)
    assert path[-1] == (1.0, 2.0)
    assert len(path) == 5
    assert driver.linear_k_path((0.3, 0.4), (9.9, 9.9), 1) == [(0.3, 0.4)]


# ---------------------------------------------------------------------------
# configuration


def test_shipped_configs_parse_and_validate():
    for ini in sorted((REPO / "configs").glob("*.ini")):
        cfg = driver.RunConfig.from_ini(ini)
        assert cfg.experiment in driver.EXPERIMENTS, ini


def test_from_ini_reads_model_and_shift():
    cfg = driver.RunConfig.from_ini(REPO / "configs" / "experiment2.ini")
    assert cfg.experiment == "dl_linearized"
    assert isinstance(cfg.model, dispersion.SimplifiedDL)
    assert [t.eta2 for t in cfg.model.terms] == [55.2698, 63.1655]
    assert cfg.resolved_beta() == pytest.approx(8.8957, abs=1e-10)
    assert cfg.out == "traces/experiment2.csv"


def test_unknown_keys_rejected(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nexperiment = linear\ntypo_key = 1\n")
    with pytest.raises(ValueError, match="typo_key"):
        driver.RunConfig.from_ini(bad)
    bad.write_text("[run]\nexperiment = linear\n[sweep]\nnonsense = 1\n")
    with pytest.raises(ValueError, match="nonsense"):
        driver.RunConfig.from_ini(bad)


def test_missing_config_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        driver.RunConfig.from_ini(tmp_path / "missing.ini")


def test_validate_rejects_bad_values():
    with pytest.raises(ValueError, match="experiment"):
        driver.RunConfig(experiment="warp_drive").validate()
    with pytest.raises(ValueError, match="steps_per_mesh"):
        linear_config(steps_per_mesh=0).validate()
    with pytest.raises(ValueError, match="tol"):
        linear_config(tol=0.0).validate()
    with pytest.raises(ValueError, match="constant model"):
        driver.RunConfig(experiment="linear", model=two_oscillator()).validate()
    with pytest.raises(ValueError, match="shift bound"):
        driver.RunConfig(
            experiment="dl_linearized", model=two_oscillator(), beta=1.0
        ).validate()


def test_default_beta_per_experiment():
    assert linear_config().resolved_beta() == 1.0
    dl = driver.RunConfig(experiment="dl_linearized", model=two_oscillator())
    assert dl.resolved_beta() == pytest.approx(8.8957, abs=1e-10)
