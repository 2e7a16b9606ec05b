import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from momenta_node import dynamics as dyn
from momenta_node.adjoint import (
    AdjointRun,
    BackwardSolveError,
    ReconstructionDivergence,
    backward,
    gradcheck,
    loss_grad_from_h,
    make_adjoint_rhs,
    param_count,
)
from momenta_node.field_net import FieldNet, init_field, params_to_vec
from momenta_node.solver import IntegratorConfig, SolveStatus, solve_dopri45


def tight():
    return IntegratorConfig(rtol=1e-10, atol=1e-10, h_min=1e-14, max_steps=1_000_000)


def zero_field(state_dim, out_dim, time_conditioned=True):
    inw = state_dim + (1 if time_conditioned else 0)
    return FieldNet([np.zeros((out_dim, inw))], [np.zeros(out_dim)], time_conditioned=time_conditioned)


def run_forward(spec, field, h0, t1, cfg):
    d = field.out_dim - spec.aug_width
    rhs = dyn.make_node_rhs(spec, field, d)
    y0 = dyn.initial_state(spec, np.asarray(h0, dtype=float))
    return solve_dopri45(rhs, y0, 0.0, t1, cfg, sample_times=[0.0, t1])


def test_zero_cotangent_gives_zero_gradients():
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    field = init_field(2, (5,), 2, seed=2)
    fwd = run_forward(spec, field, [0.4, -0.3], 1.0, tight())
    run = backward(fwd, np.zeros(6), spec, field, tight())
    assert np.all(np.abs(run.grad_params) < 1e-12)
    assert np.all(np.abs(dyn.pack(run.grad_initial_state)) < 1e-12)


def test_linear_field_adjoint_matches_matrix_exponential():
    # f = W h  (no bias update, no time slot): a(t0) = expm(W^T (t1-t0)) a(t1).
    rng = np.random.default_rng(3)
    W = rng.normal(size=(3, 3)) * 0.5
    field = FieldNet([W.copy()], [np.zeros(3)], time_conditioned=False)
    spec = dyn.DynamicsSpec(kind=dyn.VANILLA)
    t1 = 1.5
    fwd = run_forward(spec, field, rng.normal(size=3), t1, tight())
    aT = rng.normal(size=3)
    run = backward(fwd, aT, spec, field, tight())
    expected = expm(W.T * t1) @ aT
    np.testing.assert_allclose(run.grad_initial_state.h, expected, rtol=1e-7, atol=1e-9)


def test_heavy_ball_zero_field_closed_form():
    hb = dyn.HeavyBallParams(theta=0.3)
    gamma = hb.gamma
    spec = dyn.DynamicsSpec(kind=dyn.HEAVY_BALL, hb=hb, m0=0.8)
    field = zero_field(1, 1)
    T = 2.0
    fwd = run_forward(spec, field, [0.5], T, tight())
    p, q = 1.3, -0.7  # terminal cotangents for h and m
    run = backward(fwd, np.array([p, q]), spec, field, tight())
    a_m0 = (q + p / gamma) * np.exp(-gamma * T) - p / gamma
    np.testing.assert_allclose(run.grad_initial_state.h, [p], rtol=1e-9)
    np.testing.assert_allclose(run.grad_initial_state.m, [a_m0], rtol=1e-7)


def test_adam_zero_field_matches_quadrature():
    p = dyn.AdamParams(alpha=0.9, beta=0.99, epsilon=1e-3)
    spec = dyn.DynamicsSpec(kind=dyn.ADAM, adam=p, m0=0.4, v0=1.0)
    field = zero_field(1, 1)
    T = 2.0
    fwd = run_forward(spec, field, [0.2], T, tight())
    ah, am, av = 0.9, -0.5, 0.3
    run = backward(fwd, np.array([ah, am, av]), spec, field, tight())

    # With f = 0 the h cotangent is constant and v(t) decays exponentially.
    v = lambda t: spec.v0 * np.exp(-(1.0 - p.beta) * t)
    la = 1.0 - p.alpha
    integral, _ = quad(lambda u: np.exp(la * (0.0 - u)) * ah / np.sqrt(v(u) + p.epsilon), T, 0.0)
    expected_am0 = np.exp(la * (0.0 - T)) * am + integral
    np.testing.assert_allclose(run.grad_initial_state.h, [ah], rtol=1e-9)
    np.testing.assert_allclose(run.grad_initial_state.m, [expected_am0], rtol=1e-6)

    # a_v via quadrature too: a_v' = -a_h m(t)/(2 (v+eps)^{3/2}) + (1-beta) a_v.
    m = lambda t: spec.m0 * np.exp(-la * t)
    lb = 1.0 - p.beta
    src = lambda u: -ah * m(u) / (2.0 * (v(u) + p.epsilon) ** 1.5)
    integral_v, _ = quad(lambda u: np.exp(lb * (0.0 - u)) * src(u), T, 0.0)
    expected_av0 = np.exp(lb * (0.0 - T)) * av + integral_v
    np.testing.assert_allclose(run.grad_initial_state.v, [expected_av0], rtol=1e-6)


ALL_SPECS = [
    dyn.DynamicsSpec(kind=dyn.VANILLA),
    dyn.DynamicsSpec(kind=dyn.AUGMENTED, aug_width=1),
    dyn.DynamicsSpec(kind=dyn.SECOND_ORDER),
    dyn.DynamicsSpec(kind=dyn.HEAVY_BALL),
    dyn.DynamicsSpec(kind=dyn.GENERALIZED_HEAVY_BALL),
    dyn.DynamicsSpec(kind=dyn.ADAM),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=[s.kind for s in ALL_SPECS])
def test_gradcheck_all_formulations(spec):
    report = gradcheck(spec, d=2, hidden=(6,), seed=1)
    assert report["max_rel_err"] < 1e-3, report["per_param_worst"]
    assert report["init_state_max_rel_err"] < 1e-3
    assert report["n_params"] <= 200


def test_literal_variant_fails_where_exact_passes():
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    exact = gradcheck(spec, d=2, hidden=(6,), seed=4, variant="exact")
    literal = gradcheck(spec, d=2, hidden=(6,), seed=4, variant="literal")
    assert exact["max_rel_err"] < 1e-3
    # Recorded for documentation: the simplified cotangent rows miss the
    # rate and chain factors, so their gradients are not the true ones.
    assert literal["max_rel_err"] > 10.0 * exact["max_rel_err"]
    print(
        f"adaptive-moment gradcheck: exact {exact['max_rel_err']:.3e}, "
        f"literal {literal['max_rel_err']:.3e}"
    )


def test_loose_solver_tolerance_envelope():
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    report = gradcheck(spec, d=2, hidden=(6,), seed=1, solver_tol=1e-3)
    assert report["max_rel_err"] < 1e-1


def test_backward_is_deterministic():
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    field = init_field(2, (6,), 2, seed=8)
    fwd = run_forward(spec, field, [0.3, 0.6], 1.0, tight())
    lg = loss_grad_from_h(spec, np.array([1.0, -2.0]))
    a = backward(fwd, lg, spec, field, tight())
    b = backward(fwd, lg, spec, field, tight())
    assert np.array_equal(a.grad_params, b.grad_params)
    assert np.array_equal(dyn.pack(a.grad_initial_state), dyn.pack(b.grad_initial_state))
    assert a.backward_nfe == b.backward_nfe


def test_zero_length_interval_is_identity():
    spec = dyn.DynamicsSpec(kind=dyn.HEAVY_BALL)
    field = init_field(2, (4,), 2, seed=0)
    y0 = dyn.initial_state(spec, np.array([0.1, 0.2]))
    from momenta_node.solver import SolveResult

    degenerate = SolveResult(
        ts=np.array([0.0]),
        states=y0.reshape(1, -1),
        nfe=0,
        accepted_steps=0,
        rejected_steps=0,
        status=SolveStatus.SUCCESS,
        t_final=0.0,
        y_final=y0,
    )
    lg = np.arange(4.0)
    run = backward(degenerate, lg, spec, field)
    assert run.backward_nfe == 0
    np.testing.assert_array_equal(dyn.pack(run.grad_initial_state), lg)
    np.testing.assert_array_equal(run.grad_params, np.zeros(param_count(spec, field)))


def test_store_mode_agrees_with_recompute():
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    field = init_field(2, (6,), 2, seed=5)
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-9, h_min=1e-14)
    fwd = run_forward(spec, field, [0.5, -0.4], 1.0, cfg)
    lg = loss_grad_from_h(spec, np.array([1.0, 0.5]))
    rec = backward(fwd, lg, spec, field, cfg, mode="recompute")
    sto = backward(fwd, lg, spec, field, cfg, mode="store")
    # Store mode reads the forward state from a cubic spline over accepted
    # steps, so agreement is limited by interpolation error, not solver tol.
    np.testing.assert_allclose(sto.grad_params, rec.grad_params, rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(
        dyn.pack(sto.grad_initial_state), dyn.pack(rec.grad_initial_state), rtol=1e-4, atol=1e-7
    )
    assert sto.forward_state_reconstruction_error == 0.0


def test_reconstruction_divergence_guard():
    spec = dyn.DynamicsSpec(kind=dyn.VANILLA)
    field = init_field(2, (4,), 2, seed=1)
    fwd = run_forward(spec, field, [1.0, 1.0], 1.0, tight())
    fwd.states[0] = fwd.states[0] + 0.5  # inconsistent stored initial state
    with pytest.raises(ReconstructionDivergence):
        backward(fwd, np.ones(2), spec, field, tight())


def test_reconstruction_error_is_reported_small():
    spec = dyn.DynamicsSpec(kind=dyn.SECOND_ORDER)
    field = init_field(4, (6,), 2, seed=9)
    fwd = run_forward(spec, field, [0.2, -0.1], 2.0, tight())
    run = backward(fwd, np.ones(4), spec, field, tight())
    h0 = np.linalg.norm(dyn.unpack(fwd.states[0], spec, 2).h)
    assert run.forward_state_reconstruction_error < 1e-6 * max(h0, 1.0)


def test_v_clamp_guard_counts_and_stays_finite():
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    field = init_field(1, (3,), 1, seed=0)
    counters = {"v_clamps": 0}
    rhs = make_adjoint_rhs(spec, field, 1, counters=counters)
    joint = np.zeros(rhs.n_joint)
    joint[2] = -0.5  # v block pushed negative
    out = rhs(0.0, joint)
    assert counters["v_clamps"] == 1
    assert np.all(np.isfinite(out))


def test_backward_rejects_failed_forward():
    spec = dyn.DynamicsSpec(kind=dyn.VANILLA)
    field = init_field(1, (3,), 1, seed=0)
    fwd = run_forward(spec, field, [0.1], 1.0, tight())
    fwd.status = SolveStatus.STEP_UNDERFLOW
    with pytest.raises(ValueError):
        backward(fwd, np.ones(1), spec, field)


def test_batched_backward_matches_per_sample_sum():
    # Gradients of a summed batch loss equal the sum of per-sample gradients.
    spec = dyn.DynamicsSpec(kind=dyn.ADAM)
    d = 2
    field = init_field(d, (5,), d, seed=11)
    rng = np.random.default_rng(1)
    H0 = rng.normal(size=(3, d))
    A = rng.normal(size=(3, d))
    cfg = tight()

    rhs_b = dyn.make_node_rhs(spec, field, d, batch=3)
    y0_b = dyn.initial_state(spec, H0)
    fwd_b = solve_dopri45(rhs_b, y0_b, 0.0, 1.0, cfg, sample_times=[0.0, 1.0])
    run_b = backward(fwd_b, loss_grad_from_h(spec, A), spec, field, cfg)

    total = np.zeros(param_count(spec, field))
    for i in range(3):
        fwd_i = run_forward(spec, field, H0[i], 1.0, cfg)
        run_i = backward(fwd_i, loss_grad_from_h(spec, A[i]), spec, field, cfg)
        total += run_i.grad_params
        np.testing.assert_allclose(
            run_b.grad_initial_state.h[i], run_i.grad_initial_state.h, rtol=1e-6, atol=1e-10
        )
    np.testing.assert_allclose(run_b.grad_params, total, rtol=1e-6, atol=1e-10)
