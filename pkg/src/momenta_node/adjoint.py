"""Continuous adjoint gradients for every dynamics formulation.

The backward pass integrates one joint system from ``t1`` down to ``t0``:
the forward state (recomputed in reverse, so memory stays constant in
trajectory length), the state cotangent, and a running parameter-gradient
accumulator.  For state ``z' = g(z, theta, t)`` the cotangent obeys
``a' = -a^T dg/dz`` and the accumulator ``q' = -a^T dg/dtheta``; starting
from ``a(t1) = dL/dz(t1)`` and ``q(t1) = 0``, the solve lands on
``a(t0) = dL/dz(t0)`` and ``q(t0) = dL/dtheta``.

For the adaptive-moment formulation two cotangent systems are available.
The default (``variant="exact"``) contracts against the true Jacobian of
the forward equations, including the ``1 - alpha`` / ``1 - beta`` rate
factors and the ``2 f`` chain factor from the squared-field term; it is
the variant that passes finite-difference verification.  A simplified
variant (``variant="literal"``) drops those factors from the rows that
contract the field Jacobian and is kept only for comparison; expect it to
fail :func:`gradcheck`.

Every formulation's trainable parameters are the field's flat vector,
with the damping pre-activation appended for the heavy-ball family.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from . import dynamics as dyn
from . import field_net as fn
from .solver import IntegratorConfig, SolveResult, SolveStatus, solve_dopri45


class BackwardSolveError(RuntimeError):
    """The joint backward integration did not reach t0."""

    def __init__(self, status: SolveStatus):
        super().__init__(f"backward solve failed with status {status.value}")
        self.status = status


class ReconstructionDivergence(RuntimeError):
    """Reverse-recomputed state drifted too far from the stored initial state."""


@dataclass
class AdjointRun:
    """Gradients and bookkeeping from one backward pass.

    ``grad_params`` follows :func:`momenta_node.field_net.params_to_vec`
    order, with the scalar damping gradient appended for the heavy-ball
    family.  ``grad_initial_state`` holds the cotangent blocks at ``t0``.
    """

    grad_params: np.ndarray
    grad_initial_state: dyn.PackedState
    backward_nfe: int
    forward_state_reconstruction_error: float
    v_underflow_clamps: int = 0


def loss_grad_from_h(spec: dyn.DynamicsSpec, a_h: np.ndarray) -> np.ndarray:
    """Flat terminal cotangent for a loss that reads only the h block."""
    a_h = np.asarray(a_h, dtype=float)
    zeros = np.zeros_like(a_h)
    return dyn.pack(
        dyn.PackedState(
            h=a_h,
            m=zeros if spec.has_m else None,
            v=zeros if spec.has_v else None,
        )
    )


def param_count(spec: dyn.DynamicsSpec, field: fn.FieldNet) -> int:
    return field.n_params + spec.extra_param_count


def _adjoint_core(spec, field, t, st, ast, variant, counters):
    """Time derivatives of (forward blocks, cotangent blocks, parameter accumulator)."""
    kind = spec.kind
    if kind in (dyn.VANILLA, dyn.AUGMENTED):
        f, cache = fn.eval_cached(field, st.h, t)
        g_h, g_th = fn.vjp_from_cache(field, cache, ast.h)
        return dyn.PackedState(h=f), dyn.PackedState(h=-g_h), -g_th

    if kind == dyn.SECOND_ORDER:
        hm = np.concatenate([st.h, st.m], axis=-1)
        f, cache = fn.eval_cached(field, hm, t)
        g_in, g_th = fn.vjp_from_cache(field, cache, ast.m)
        w = st.h.shape[-1]
        g_h, g_m = g_in[..., :w], g_in[..., w:]
        dst = dyn.PackedState(h=st.m.copy(), m=f)
        dast = dyn.PackedState(h=-g_h, m=-ast.h - g_m)
        return dst, dast, -g_th

    if kind in (dyn.HEAVY_BALL, dyn.GENERALIZED_HEAVY_BALL):
        gamma = spec.hb.gamma
        f, cache = fn.eval_cached(field, st.h, t)
        g_h, g_th = fn.vjp_from_cache(field, cache, ast.m)
        if kind == dyn.HEAVY_BALL:
            dh = -st.m
            dash_m = ast.h + gamma * ast.m
        else:
            b = spec.saturation_bound
            dh = -np.clip(st.m, -b, b)
            mask = (np.abs(st.m) < b).astype(float)
            dash_m = mask * ast.h + gamma * ast.m
        dst = dyn.PackedState(h=dh, m=-gamma * st.m + f)
        dast = dyn.PackedState(h=-g_h, m=dash_m)
        # d(gamma)/d(theta) = gamma (1 - gamma); the damping enters as -gamma m.
        d_damp = gamma * (1.0 - gamma) * float(np.sum(ast.m * st.m))
        return dst, dast, np.concatenate([-g_th, [d_damp]])

    # Adaptive-moment dynamics.
    p = spec.adam
    f, cache = fn.eval_cached(field, st.h, t)
    v = st.v
    if np.any(v < 0.0):
        counters["v_clamps"] += 1
        v = np.maximum(v, 0.0)
    root = np.sqrt(v + p.epsilon)
    if variant == "exact":
        c = (1.0 - p.alpha) * ast.m - (1.0 - p.beta) * (2.0 * f * ast.v)
    else:
        c = ast.m - ast.v
    g_h, g_th = fn.vjp_from_cache(field, cache, c)
    dst = dyn.PackedState(
        h=-st.m / root,
        m=(1.0 - p.alpha) * (-f - st.m),
        v=(1.0 - p.beta) * (f * f - st.v),
    )
    dast = dyn.PackedState(
        h=g_h,
        m=ast.h / root + (1.0 - p.alpha) * ast.m,
        v=-ast.h * st.m / (2.0 * root**3) + (1.0 - p.beta) * ast.v,
    )
    return dst, dast, g_th


def make_adjoint_rhs(
    spec: dyn.DynamicsSpec,
    field: fn.FieldNet,
    d: int,
    batch: int = 1,
    variant: str = "exact",
    counters: dict | None = None,
    forward_of_t=None,
):
    """Flat RHS of the joint backward system.

    Default layout is ``[forward state, cotangent, parameter accumulator]``.
    When ``forward_of_t`` is given (store mode) the forward blocks are read
    from that interpolant instead and the layout drops to
    ``[cotangent, accumulator]``.
    """
    if variant not in ("exact", "literal"):
        raise ValueError("variant must be 'exact' or 'literal'")
    if counters is None:
        counters = {"v_clamps": 0}
    bd = batch * spec.state_dim(d)
    n_par = param_count(spec, field)

    if forward_of_t is None:

        def rhs(t, joint):
            st = dyn.unpack(joint[:bd], spec, d, batch)
            ast = dyn.unpack(joint[bd : 2 * bd], spec, d, batch)
            dst, dast, dth = _adjoint_core(spec, field, t, st, ast, variant, counters)
            return np.concatenate([dyn.pack(dst), dyn.pack(dast), dth])

    else:

        def rhs(t, joint):
            st = dyn.unpack(np.asarray(forward_of_t(t), dtype=float), spec, d, batch)
            ast = dyn.unpack(joint[:bd], spec, d, batch)
            _, dast, dth = _adjoint_core(spec, field, t, st, ast, variant, counters)
            return np.concatenate([dyn.pack(dast), dth])

    rhs.n_joint = (2 * bd if forward_of_t is None else bd) + n_par
    return rhs


def _infer_batch(spec, d, flat_size):
    per = spec.state_dim(d)
    if flat_size % per:
        raise ValueError(f"state size {flat_size} is not a multiple of {per}")
    return flat_size // per


def backward(
    forward: SolveResult,
    loss_grad: np.ndarray,
    spec: dyn.DynamicsSpec,
    field: fn.FieldNet,
    cfg: IntegratorConfig | None = None,
    variant: str = "exact",
    mode: str = "recompute",
) -> AdjointRun:
    """Gradients of a terminal loss through one forward solve.

    Parameters
    ----------
    forward : SolveResult
        Successful forward solve whose first sample is the initial state
        and whose last sample is the terminal state.
    loss_grad : array_like
        ``dL/dz(t1)`` over the flat packed state (zeros in the blocks the
        loss ignores).
    spec, field : dynamics description and its field network.
    cfg : IntegratorConfig, optional
        Tolerances for the backward solve (defaults if omitted).
    variant : str
        ``"exact"`` (default) or ``"literal"``; see the module docstring.
    mode : str
        ``"recompute"`` (default) re-integrates the forward state inside
        the joint system.  ``"store"`` re-runs the forward solve once,
        keeps its accepted steps, and reads the forward state from a cubic
        spline during the backward sweep; its evaluations count toward
        ``backward_nfe``.

    Raises
    ------
    BackwardSolveError
        If the joint solve fails.
    ReconstructionDivergence
        If the recomputed initial h drifts beyond 1e-2 * ||h(t0)||.
    """
    if mode not in ("recompute", "store"):
        raise ValueError("mode must be 'recompute' or 'store'")
    if forward.status is not SolveStatus.SUCCESS:
        raise ValueError("forward solve must have succeeded")
    if forward.ts.size < 1:
        raise ValueError("forward result carries no samples")
    t0 = float(forward.ts[0])
    t1 = float(forward.ts[-1])
    y0 = forward.states[0]
    y1 = forward.states[-1]
    d = field.out_dim - spec.aug_width
    batch = _infer_batch(spec, d, y1.size)
    loss_grad = np.asarray(loss_grad, dtype=float)
    if loss_grad.shape != y1.shape:
        raise ValueError("loss_grad must match the flat state shape")
    n_par = param_count(spec, field)

    if t0 == t1:
        return AdjointRun(
            grad_params=np.zeros(n_par),
            grad_initial_state=dyn.unpack(loss_grad, spec, d, batch),
            backward_nfe=0,
            forward_state_reconstruction_error=0.0,
        )

    if cfg is None:
        cfg = IntegratorConfig()
    counters = {"v_clamps": 0}
    bd = batch * spec.state_dim(d)
    extra_nfe = 0

    if mode == "store":
        fwd_rhs = dyn.make_node_rhs(spec, field, d, batch)
        stored = solve_dopri45(fwd_rhs, y0, t0, t1, cfg, record_steps=True)
        if stored.status is not SolveStatus.SUCCESS:
            raise BackwardSolveError(stored.status)
        extra_nfe = stored.nfe
        knots = np.concatenate([[t0], stored.step_ts])
        values = np.vstack([y0, stored.step_states])
        spline = CubicSpline(knots, values, axis=0)
        rhs = make_adjoint_rhs(spec, field, d, batch, variant, counters, forward_of_t=spline)
        joint0 = np.concatenate([loss_grad, np.zeros(n_par)])
    else:
        rhs = make_adjoint_rhs(spec, field, d, batch, variant, counters)
        joint0 = np.concatenate([y1, loss_grad, np.zeros(n_par)])

    res = solve_dopri45(rhs, joint0, t1, t0, cfg, sample_times=[t0])
    if res.status is not SolveStatus.SUCCESS:
        raise BackwardSolveError(res.status)
    final = res.states[-1]

    stored_h = dyn.unpack(y0, spec, d, batch).h
    if mode == "store":
        a0 = final[:bd]
        grad_theta = final[bd:]
        recon_err = 0.0
    else:
        recon_h = dyn.unpack(final[:bd], spec, d, batch).h
        a0 = final[bd : 2 * bd]
        grad_theta = final[2 * bd :]
        recon_err = float(np.linalg.norm(recon_h - stored_h))
        ref = float(np.linalg.norm(stored_h))
        if recon_err > 1e-2 * ref:
            raise ReconstructionDivergence(
                f"reverse recomputation drifted by {recon_err:.3e} (state norm {ref:.3e})"
            )

    if counters["v_clamps"]:
        warnings.warn(
            f"second-moment block clamped at zero in {counters['v_clamps']} backward evaluations",
            RuntimeWarning,
        )
    return AdjointRun(
        grad_params=grad_theta,
        grad_initial_state=dyn.unpack(a0, spec, d, batch),
        backward_nfe=res.nfe + extra_nfe,
        forward_state_reconstruction_error=recon_err,
        v_underflow_clamps=counters["v_clamps"],
    )


def _solve_loss(spec, field, y0, t1, c, cfg):
    rhs = dyn.make_node_rhs(spec, field, field.out_dim - spec.aug_width)
    res = solve_dopri45(rhs, y0, 0.0, t1, cfg, sample_times=[0.0, t1])
    if res.status is not SolveStatus.SUCCESS:
        raise RuntimeError(f"gradcheck forward solve failed: {res.status.value}")
    return float(c @ res.states[-1]), res


def gradcheck(
    spec: dyn.DynamicsSpec,
    d: int = 2,
    hidden: tuple = (8,),
    activation: str = "tanh",
    seed: int = 0,
    t1: float = 1.0,
    delta: float = 1e-5,
    solver_tol: float = 1e-10,
    variant: str = "exact",
) -> dict:
    """Compare adjoint gradients against central finite differences.

    Builds a small field from ``seed``, takes a random linear loss over
    the full terminal state, and differences every trainable parameter
    and every initial-state entry with step ``delta``.  Relative errors
    use denominator ``max(|adjoint|, |difference|, 1e-8)``.
    """
    field = fn.init_field(
        spec.field_in_dim(d), hidden, spec.width(d), activation=activation, seed=seed
    )
    rng = np.random.default_rng(seed)
    h0 = rng.normal(size=d)
    y0 = dyn.initial_state(spec, h0)
    c = rng.normal(size=y0.size)
    cfg = IntegratorConfig(rtol=solver_tol, atol=solver_tol, h_min=1e-14, max_steps=1_000_000)

    _, fwd = _solve_loss(spec, field, y0, t1, c, cfg)
    run = backward(fwd, c, spec, field, cfg, variant=variant)
    g_adj = run.grad_params

    base_vec = fn.params_to_vec(field)
    n_field = base_vec.size
    n_total = n_field + spec.extra_param_count
    g_fd = np.zeros(n_total)
    for i in range(n_total):
        if i < n_field:
            vp = base_vec.copy()
            vm = base_vec.copy()
            vp[i] += delta
            vm[i] -= delta
            lp, _ = _solve_loss(spec, fn.vec_to_params(field, vp), y0, t1, c, cfg)
            lm, _ = _solve_loss(spec, fn.vec_to_params(field, vm), y0, t1, c, cfg)
        else:
            sp = replace(spec, hb=dyn.HeavyBallParams(theta=spec.hb.theta + delta))
            sm = replace(spec, hb=dyn.HeavyBallParams(theta=spec.hb.theta - delta))
            lp, _ = _solve_loss(sp, field, y0, t1, c, cfg)
            lm, _ = _solve_loss(sm, field, y0, t1, c, cfg)
        g_fd[i] = (lp - lm) / (2.0 * delta)

    denom = np.maximum(np.maximum(np.abs(g_adj), np.abs(g_fd)), 1e-8)
    rel = np.abs(g_adj - g_fd) / denom

    a0_flat = dyn.pack(run.grad_initial_state)
    g0_fd = np.zeros(y0.size)
    for i in range(y0.size):
        yp = y0.copy()
        ym = y0.copy()
        yp[i] += delta
        ym[i] -= delta
        lp, _ = _solve_loss(spec, field, yp, t1, c, cfg)
        lm, _ = _solve_loss(spec, field, ym, t1, c, cfg)
        g0_fd[i] = (lp - lm) / (2.0 * delta)
    rel0 = np.abs(a0_flat - g0_fd) / np.maximum(np.maximum(np.abs(a0_flat), np.abs(g0_fd)), 1e-8)

    order = np.argsort(rel)[::-1][:5]
    return {
        "formulation": spec.kind,
        "variant": variant,
        "seed": seed,
        "n_params": int(n_total),
        "max_rel_err": float(rel.max()),
        "init_state_max_rel_err": float(rel0.max()),
        "per_param_worst": [
            {
                "index": int(i),
                "rel_err": float(rel[i]),
                "adjoint": float(g_adj[i]),
                "finite_difference": float(g_fd[i]),
            }
            for i in order
        ],
    }
