import math

import numpy as np
import pytest

from cfswipt import experiments as ex
from cfswipt.config import RunConfig
from cfswipt.geometry import colocated_equivalent

LAM = 1.2e-5  # about 12 APs: quick SDPs


@pytest.fixture(scope="module")
def cfg():
    return RunConfig(lambda_a=LAM)


def test_sweep_spec_validation():
    with pytest.raises(ValueError, match="kind"):
        ex.SweepSpec("fig9", [0.0], [0])
    with pytest.raises(ValueError, match="grid"):
        ex.SweepSpec("er_region", [], [0])
    with pytest.raises(ValueError, match="seeds"):
        ex.SweepSpec("density", [1e-5], [])


def test_profile_defaults():
    desk = ex.profile_defaults(RunConfig())
    assert desk["lambda_a"] == ex.DESK["lambda_a"]
    assert desk["seeds"] == [0, 1, 2]
    full = ex.profile_defaults(RunConfig(profile="full"))
    assert full["lambda_a"] == RunConfig().lambda_a
    assert len(full["seeds"]) == 50
    assert len(full["density_grid"]) == 13
    over = ex.profile_defaults(RunConfig(sweep={"seeds": [9], "er_grid": [1e-5]}))
    assert over["seeds"] == [9] and over["er_grid"] == [1e-5]


def test_realization_paired_and_deterministic(cfg):
    a = ex.realization(cfg, 5, LAM)
    b = ex.realization(cfg, 5, LAM)
    co = ex.realization(cfg, 5, LAM, "colocated")
    np.testing.assert_array_equal(a.iu_gains, b.iu_gains)
    np.testing.assert_array_equal(a.eh_gains, b.eh_gains)
    ref = colocated_equivalent(a)
    np.testing.assert_array_equal(co.iu_gains, ref.iu_gains)
    np.testing.assert_array_equal(co.eh_gains, ref.eh_gains)
    np.testing.assert_allclose(co.iu_gains.sum(axis=1), a.iu_gains.sum(axis=1), rtol=1e-12)


def test_ap_cap():
    big = RunConfig(lambda_a=2e-4, n_aps_cap=40)
    g = ex.realization(big, 0, 2e-4)
    assert g.n_aps == 40
    assert ex.realization(big.replace(n_aps_cap=1000), 0, 2e-4).n_aps > 40


def test_separation_realization_shares_aps(cfg):
    g0 = ex.separation_realization(cfg, 3, LAM, 0.0)
    g5 = ex.separation_realization(cfg, 3, LAM, 500.0)
    assert g0.n_users == 1 and g0.n_aps == g5.n_aps
    # same AP set and shadowing: only the geometry moves
    assert not np.allclose(g0.eh_gains, g5.eh_gains)
    shared = ex.separation_realization(cfg.replace(shared_shadowing=True), 3, LAM, 0.0)
    np.testing.assert_allclose(shared.iu_gains[0], shared.eh_gains, rtol=1e-12)


def test_er_sweep_rows_and_infeasible_kept(cfg):
    spec = ex.SweepSpec("er_region", [0.0, 1.0], [0], [0.3])
    rows = ex.run_er_sweep(spec, cfg, "cellfree", lambda_a=LAM)
    assert len(rows) == 2
    by = {r.sweep_value: r for r in rows}
    assert by[0.0].status == "optimal" and by[0.0].esr_worst >= 0
    assert by[1.0].status == "infeasible" and by[1.0].esr_worst == 0.0
    assert all(r.esr_worst >= 0 for r in rows)
    assert set(rows[0].to_dict()) == {f.name for f in ex.ResultRow.__dataclass_fields__.values()}


def test_er_sweep_bit_exact(cfg):
    spec = ex.SweepSpec("er_region", [1e-6], [1], [0.4])
    a = ex.run_er_sweep(spec, cfg, "cellfree", lambda_a=LAM)[0].to_dict()
    b = ex.run_er_sweep(spec, cfg, "cellfree", lambda_a=LAM)[0].to_dict()
    assert a == b


def test_model_rejected(cfg):
    with pytest.raises(ValueError, match="model"):
        ex.run_er_sweep(ex.SweepSpec("er_region", [0.0], [0]), cfg, "distributed")


def test_separation_sweep_single_user(cfg):
    spec = ex.SweepSpec("separation", [0.0, 300.0], [0], [0.5])
    rows = ex.run_separation_sweep(spec, cfg, lambda_a=LAM)
    assert [r.sweep_value for r in rows] == [0.0, 300.0]
    assert all(r.status == "optimal" for r in rows)


def test_convergence_trace_nondecreasing(cfg):
    rows = ex.run_convergence(cfg, [0], inits=(-8.0,), e_min=0.0, phi=0.3, lambda_a=LAM)
    pis = [r.pi for r in rows]
    assert [r.iteration for r in rows] == list(range(1, len(rows) + 1))
    assert np.all(np.diff(pis) >= -1e-7)


def _row(model, value, esr, status="optimal", seed=0):
    return ex.ResultRow("er_region", model, value, 0.3, seed, 10, esr, esr, 0.0, esr * math.log(2),
                        1, True, True, status)


def test_seed_average():
    rows = [_row("cellfree", 0.0, 1.0, seed=0), _row("cellfree", 0.0, 3.0, seed=1),
            _row("cellfree", 0.0, 0.0, "infeasible", seed=2),
            _row("cellfree", 0.0, 0.0, "numerical-failure", seed=3),
            _row("colocated", 0.0, 2.0)]
    avg = ex.seed_average(rows)
    mean, se, n = avg[("cellfree", 0.0, 0.3)]
    assert n == 3 and mean == pytest.approx(4.0 / 3)
    assert se == pytest.approx(np.std([1.0, 3.0, 0.0], ddof=1) / np.sqrt(3))
    assert avg[("colocated", 0.0, 0.3)] == (2.0, 0.0, 1)


@pytest.mark.parametrize("val,expected", [(None, 1), ("3", 3), ("0", 1), ("many", 1)])
def test_worker_count(monkeypatch, val, expected):
    if val is None:
        monkeypatch.delenv(ex.WORKERS_ENV, raising=False)
    else:
        monkeypatch.setenv(ex.WORKERS_ENV, val)
    assert ex.worker_count() == expected


def test_sweep_lambda_overrides_profile():
    assert ex.profile_defaults(RunConfig(sweep={"lambda_a": 1e-5}))["lambda_a"] == 1e-5
    assert ex.profile_defaults(RunConfig(profile="full", sweep={"lambda_a": 1e-5}))["lambda_a"] == 1e-5


def test_restart_leaves_zero_rate_fixed_point():
    cfg = RunConfig()
    g = ex.realization(cfg, 0, ex.DESK["lambda_a"], "colocated")
    stuck, _ = ex.solve_point(cfg, g, 0.3, 0.0, init=cfg.init)
    assert stuck.pi <= 0
    rep, _ = ex.solve_point(cfg, g, 0.3, 0.0)
    assert rep.pi > 1.0
    assert rep.diagnostics["init"] in cfg.restart_inits
