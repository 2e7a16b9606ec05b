import numpy as np
import pytest

from momenta_node.benchmarks.classify import TrainConfig, run_classification, two_moons, two_spirals
from momenta_node.benchmarks.landscapes import LANDSCAPES, get_landscape
from momenta_node.benchmarks.stability import (
    MODEL_SPECS,
    EmptySeries,
    MalformedRow,
    NonMonotoneTime,
    duffing_probe,
    fair_hidden_widths,
    ingest_series_csv,
    model_spec,
    run_stability_probe,
    write_series_csv,
)
from momenta_node.benchmarks.trajectories import FLOWS, run_trajectory_experiment
from momenta_node.csv_formats import (
    CsvFormatError,
    read_trajectory_csv,
    write_trajectory_csv,
)
from momenta_node.dynamics import DynamicsSpec, VANILLA


# ------------------------------------------------------------------ landscapes

def test_rosenbrock_frozen_values():
    ros = get_landscape("rosenbrock")
    assert ros.eval(np.array([0.0, 0.0])) == 1.0
    np.testing.assert_allclose(ros.grad(np.array([0.0, 0.0])), [-2.0, 0.0], rtol=0.0, atol=0.0)
    assert ros.eval(np.array([-2.0, 2.0])) == 409.0
    assert ros.eval(ros.minimizer) <= 1e-12
    np.testing.assert_allclose(ros.grad(ros.minimizer), [0.0, 0.0], rtol=0.0, atol=1e-12)


def test_beale_frozen_values():
    beale = get_landscape("beale")
    assert beale.eval(np.array([0.0, 0.0])) == 14.203125
    np.testing.assert_allclose(beale.grad(np.array([0.0, 0.0])), [-12.75, 0.0], rtol=0.0, atol=0.0)
    assert beale.eval(beale.minimizer) <= 1e-12
    np.testing.assert_allclose(beale.grad(beale.minimizer), [0.0, 0.0], rtol=0.0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(LANDSCAPES))
def test_gradients_match_finite_differences(name):
    land = get_landscape(name)
    rng = np.random.default_rng(11)
    (xl, xh), (yl, yh) = land.domain
    h = 1e-6
    for _ in range(20):
        p = np.array([rng.uniform(xl, xh), rng.uniform(yl, yh)])
        g = land.grad(p)
        for i in range(2):
            dp = np.zeros(2)
            dp[i] = h
            fd = (land.eval(p + dp) - land.eval(p - dp)) / (2.0 * h)
            np.testing.assert_allclose(g[i], fd, rtol=1e-5, atol=1e-4)


def test_huge_inputs_do_not_raise():
    # A diverging flow hands the landscape astronomically large points;
    # the value saturates to inf instead of raising.
    beale = get_landscape("beale")
    assert np.isinf(beale.eval(np.array([1e200, 1e200])))
    assert not np.all(np.isfinite(beale.grad(np.array([1e200, 1e200]))))
    ros = get_landscape("rosenbrock")
    assert np.isinf(ros.eval(np.array([1e200, -1e200])))


def test_landscape_registry():
    assert set(LANDSCAPES) == {"rosenbrock", "beale"}
    np.testing.assert_allclose(get_landscape("rosenbrock").minimizer, [1.0, 1.0])
    np.testing.assert_allclose(get_landscape("beale").minimizer, [3.0, 0.5])
    np.testing.assert_allclose(get_landscape("rosenbrock").default_start, [-2.0, 2.0])
    np.testing.assert_allclose(get_landscape("beale").default_start, [-4.0, -4.0])
    with pytest.raises(ValueError, match="rosenbrock"):
        get_landscape("himmelblau")


# ---------------------------------------------------------------- trajectories

def test_stationary_start_stays_put():
    exp = run_trajectory_experiment("rosenbrock", x0=(1.0, 1.0), t_end=1.0)
    for run in exp.runs.values():
        assert run.status == "success"
        assert run.final_distance_to_min == 0.0
        assert run.first_time_within_radius == 0.0


def test_short_run_structure():
    exp = run_trajectory_experiment("rosenbrock", t_end=2.0, n_samples=51)
    assert tuple(exp.runs) == FLOWS
    np.testing.assert_allclose(exp.x0, [-2.0, 2.0])
    for run in exp.runs.values():
        assert run.status == "success"
        assert run.ts[0] == 0.0 and run.ts[-1] == 2.0
        assert run.xs.shape == (51, 2)
        np.testing.assert_allclose(run.xs[0], exp.x0, rtol=0.0, atol=0.0)
        assert np.isfinite(run.final_distance_to_min)


def test_all_flows_reach_basin_under_adaptive_solver():
    exp = run_trajectory_experiment("rosenbrock", t_end=30.0, method="dopri45")
    for run in exp.runs.values():
        assert run.status == "success"
        assert run.first_time_within_radius is not None
        assert run.first_time_within_radius < 30.0


def test_trajectory_input_validation():
    with pytest.raises(ValueError):
        run_trajectory_experiment("rosenbrock", dynamics_list=("ode", "sgd"))
    with pytest.raises(ValueError):
        run_trajectory_experiment("rosenbrock", x0=(50.0, 50.0))
    with pytest.raises(ValueError):
        run_trajectory_experiment("rosenbrock", t_end=-1.0)
    with pytest.raises(ValueError):
        run_trajectory_experiment("rosenbrock", method="euler")


def test_trajectory_csv_round_trip(tmp_path):
    exp = run_trajectory_experiment("rosenbrock", t_end=2.0, n_samples=51)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, exp)
    minimizer, series = read_trajectory_csv(path)
    np.testing.assert_array_equal(minimizer, exp.landscape.minimizer)
    assert set(series) == set(FLOWS)
    for name, (ts, xs) in series.items():
        # repr round trip is bit-exact.
        np.testing.assert_array_equal(ts, exp.runs[name].ts)
        np.testing.assert_array_equal(xs, exp.runs[name].xs)


def test_trajectory_csv_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x,y,dynamics\n")
    with pytest.raises(CsvFormatError, match="minimizer|data"):
        read_trajectory_csv(path)
    path.write_text("# minimizer,1.0,1.0\nt,x,y\n0.0,1.0,2.0\n")
    with pytest.raises(CsvFormatError, match="header"):
        read_trajectory_csv(path)
    path.write_text("# minimizer,1.0,1.0\nt,x,y,dynamics\n0.0,oops,2.0,ode\n")
    with pytest.raises(CsvFormatError, match="line 3"):
        read_trajectory_csv(path)


# ------------------------------------------------------------------- stability

def test_duffing_probe_deterministic():
    p1 = duffing_probe(seed=3)
    p2 = duffing_probe(seed=3)
    np.testing.assert_array_equal(p1.outputs, p2.outputs)
    p3 = duffing_probe(seed=4)
    assert not np.array_equal(p1.outputs, p3.outputs)


def test_series_csv_round_trip_exact(tmp_path):
    probe = duffing_probe(seed=5)
    path = tmp_path / "series.csv"
    write_series_csv(path, probe)
    back = ingest_series_csv(path)
    np.testing.assert_array_equal(back.times, probe.times)
    np.testing.assert_array_equal(back.inputs, probe.inputs)
    np.testing.assert_array_equal(back.outputs, probe.outputs)


def test_ingest_rejects_with_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("")
    with pytest.raises(EmptySeries):
        ingest_series_csv(path)
    path.write_text("t,input,output\n")
    with pytest.raises(EmptySeries) as exc:
        ingest_series_csv(path)
    assert exc.value.line == 2
    path.write_text("time,u,y\n0,0,0\n")
    with pytest.raises(MalformedRow) as exc:
        ingest_series_csv(path)
    assert exc.value.line == 1
    path.write_text("t,input,output\n0.0,1.0\n")
    with pytest.raises(MalformedRow) as exc:
        ingest_series_csv(path)
    assert exc.value.line == 2
    path.write_text("t,input,output\n0.0,1.0,2.0\n0.5,nope,2.0\n")
    with pytest.raises(MalformedRow) as exc:
        ingest_series_csv(path)
    assert exc.value.line == 3
    path.write_text("t,input,output\n0.0,1.0,2.0\n0.0,1.0,2.0\n")
    with pytest.raises(NonMonotoneTime) as exc:
        ingest_series_csv(path)
    assert exc.value.line == 3


def test_ingest_resamples_non_uniform(tmp_path):
    ts = np.array([0.0, 0.1, 0.4, 1.0])
    us = np.array([0.0, 1.0, 2.0, 3.0])
    ys = np.array([5.0, 4.0, 3.0, 2.0])
    path = tmp_path / "irregular.csv"
    with open(path, "w") as fh:
        fh.write("t,input,output\n")
        for t, u, y in zip(ts, us, ys):
            fh.write(f"{float(t)!r},{float(u)!r},{float(y)!r}\n")
    probe = ingest_series_csv(path)
    np.testing.assert_allclose(probe.times, np.linspace(0.0, 1.0, 4), atol=1e-15)
    np.testing.assert_allclose(probe.inputs, np.interp(probe.times, ts, us), atol=1e-15)
    np.testing.assert_allclose(probe.outputs, np.interp(probe.times, ts, ys), atol=1e-15)


def test_fair_hidden_widths_parity():
    widths = fair_hidden_widths(MODEL_SPECS, d=4, base_hidden=16)
    assert widths["node"] == 16
    assert all(w >= 1 for w in widths.values())
    probe = duffing_probe(seed=0)
    res = run_stability_probe(probe, seed=0)
    counts = list(res.param_counts.values())
    assert (max(counts) - min(counts)) / min(counts) < 0.10


def test_zero_field_keeps_hidden_norm_constant():
    # Zero weights with the stock initial fills give every formulation a
    # motionless hidden block, whatever else the moment blocks do.
    probe = duffing_probe(seed=1)
    res = run_stability_probe(probe, seed=1, gain=0.0)
    for name, curve in res.log10_norms.items():
        np.testing.assert_allclose(curve, curve[0], rtol=0.0, atol=1e-9)


def test_blowup_curve_carries_last_value():
    probe = duffing_probe(seed=0)
    res = run_stability_probe(probe, models={"sonode": model_spec("sonode")}, seed=0, gain=16.0)
    assert res.statuses["sonode"] != "SUCCESS"
    assert "sonode" in res.blowup_at
    assert 0.0 < res.blowup_at["sonode"] < 64.0
    curve = res.log10_norms["sonode"]
    assert curve.size == probe.grid.size
    assert np.all(curve[-5:] == curve[-5])


def test_probe_shares_one_grid():
    probe = duffing_probe(seed=2)
    models = {"node": model_spec("node"), "adamnode": model_spec("adamnode")}
    res = run_stability_probe(probe, models=models, seed=2)
    np.testing.assert_array_equal(res.grid, probe.grid)
    assert list(res.log10_norms) == list(models)
    for curve in res.log10_norms.values():
        assert curve.shape == res.grid.shape
        assert np.all(np.isfinite(curve))


def test_model_spec_rejects_unknown_name():
    with pytest.raises(ValueError, match="adamnode"):
        model_spec("resnet")


# -------------------------------------------------------------- classification

def test_datasets_are_balanced_and_deterministic():
    for maker in (two_spirals, two_moons):
        xs, ys = maker(n=64, seed=9)
        assert xs.shape == (64, 2)
        assert ys.shape == (64,)
        assert int(ys.sum()) == 32
        xs2, ys2 = maker(n=64, seed=9)
        np.testing.assert_array_equal(xs, xs2)
        np.testing.assert_array_equal(ys, ys2)


def test_untrained_model_sits_exactly_at_chance():
    cfg = TrainConfig(epochs=0, n_points=64, hidden=(8,))
    run = run_classification(DynamicsSpec(kind=VANILLA), cfg)
    assert not run.diverged
    assert len(run.records) == 1
    r = run.records[0]
    assert r.epoch == 0
    assert r.test_accuracy == 0.5
    np.testing.assert_allclose(r.train_loss, np.log(2.0), rtol=0.0, atol=1e-12)
    assert r.backward_nfe == 0
    assert r.efficacy_bwd == 0.0


def test_nfe_counters_and_efficacy_quotients():
    cfg = TrainConfig(epochs=2, n_points=64, hidden=(8,), seed=1)
    run = run_classification(DynamicsSpec(kind=VANILLA), cfg)
    assert not run.diverged
    recs = run.records
    assert [r.epoch for r in recs] == [0, 1, 2]
    # 64 points split 80/20 per class: 52 train, 12 test; batch 32 gives
    # 2 train solves and 1 eval solve per epoch.
    train_solves, eval_solves = 2, 1
    assert all(b.forward_nfe > a.forward_nfe for a, b in zip(recs, recs[1:]))
    assert all(b.backward_nfe >= a.backward_nfe for a, b in zip(recs, recs[1:]))
    mean0 = recs[0].forward_nfe / (train_solves + eval_solves)
    np.testing.assert_allclose(recs[0].efficacy_fwd, recs[0].test_accuracy / mean0, rtol=1e-12)
    for prev, cur in zip(recs, recs[1:]):
        mean_fwd = (cur.forward_nfe - prev.forward_nfe) / (train_solves + eval_solves)
        mean_bwd = (cur.backward_nfe - prev.backward_nfe) / train_solves
        np.testing.assert_allclose(cur.efficacy_fwd, cur.test_accuracy / mean_fwd, rtol=1e-12)
        np.testing.assert_allclose(cur.efficacy_bwd, cur.test_accuracy / mean_bwd, rtol=1e-12)


def test_training_is_seed_reproducible():
    cfg = TrainConfig(epochs=1, n_points=64, hidden=(8,), seed=4)
    r1 = run_classification(model_spec("hbnode"), cfg)
    r2 = run_classification(model_spec("hbnode"), cfg)
    assert r1.records == r2.records
    assert r1.param_count == r2.param_count


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1).validate()
    with pytest.raises(ValueError):
        TrainConfig(dataset="cifar").validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0).validate()
