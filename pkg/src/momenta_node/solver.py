"""Explicit Runge-Kutta integrators over flat float64 state vectors.

Two integrators are provided:

* :func:`solve_dopri45` -- adaptive Dormand-Prince 5(4) with the FSAL
  property, an embedded 4th-order error estimate, and a 4th-order dense
  output used to sample the solution at caller-requested times without
  constraining step placement.
* :func:`solve_rk4` -- fixed-step classical RK4 with the standard cubic
  continuous extension, used as an independent cross-check.

Both count every right-hand-side evaluation (accepted and rejected
attempts alike) and report non-finite states as a solve status instead of
raising, so finite-time blow-up is observable data rather than a crash.
"""

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

RHS = Callable[[float, np.ndarray], np.ndarray]

# Dormand-Prince 5(4) tableau.  Stage 7 evaluates the RHS at the accepted
# 5th-order solution, so it doubles as stage 1 of the next step (FSAL).
_C = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0])
_A = (
    np.array([1.0 / 5.0]),
    np.array([3.0 / 40.0, 9.0 / 40.0]),
    np.array([44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0]),
    np.array([19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0]),
    np.array([9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0]),
    np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0]),
)
_B5 = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0])
# Difference between the 5th-order propagated weights and the embedded
# 4th-order weights; h * (E @ K) is the local error estimate.
_E = np.array([
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
])
# Dense-output weights: y(t + theta*h) = y + h * (K^T P) @ [theta, ..., theta^4].
_P = np.array([
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
])


class SolveStatus(enum.Enum):
    """Terminal condition of an integration run."""

    SUCCESS = "success"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"
    STEP_UNDERFLOW = "step_underflow"
    NON_FINITE_STATE = "non_finite_state"


@dataclass
class IntegratorConfig:
    """Shared tolerances and step-control limits.

    Attributes
    ----------
    rtol, atol : float
        Relative and absolute tolerance entering the mixed error norm.
    h_init : float
        Magnitude of the first attempted step.
    h_min, h_max : float
        Step-magnitude bounds for the controller.  The final step of a
        solve may be shorter than ``h_min`` in order to land on ``t1``.
    max_steps : int
        Budget of accepted plus rejected step attempts.
    safety : float
        Controller safety factor in (0, 1].
    """

    rtol: float = 1e-6
    atol: float = 1e-6
    h_init: float = 1e-2
    h_min: float = 1e-12
    h_max: float = 10.0
    max_steps: int = 100_000
    safety: float = 0.9

    def validate(self) -> None:
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not (0.0 < self.safety <= 1.0):
            raise ValueError("safety must lie in (0, 1]")


@dataclass
class SolveResult:
    """Sampled solution of one integration run.

    ``ts``/``states`` hold the dense samples actually emitted (all of the
    requested times on success, a prefix of them on failure).  ``t_final``
    and ``y_final`` are the last accepted step regardless of sampling, and
    mark the blow-up time when ``status`` is ``NON_FINITE_STATE``.
    ``step_ts``/``step_states`` are populated only when the solve was asked
    to record its accepted steps.
    """

    ts: np.ndarray
    states: np.ndarray
    nfe: int
    accepted_steps: int
    rejected_steps: int
    status: SolveStatus
    t_final: float
    y_final: np.ndarray
    step_ts: np.ndarray | None = None
    step_states: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.SUCCESS


def _check_inputs(y0, t0, t1, sample_times):
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim != 1 or y0.size == 0:
        raise ValueError("y0 must be a non-empty 1-D vector")
    if not np.all(np.isfinite(y0)):
        raise ValueError("y0 must be finite")
    if not (np.isfinite(t0) and np.isfinite(t1)):
        raise ValueError("t0 and t1 must be finite")
    if t0 == t1:
        raise ValueError("t0 and t1 must differ")
    samples = np.asarray(sample_times, dtype=float)
    if samples.ndim != 1:
        raise ValueError("sample_times must be one-dimensional")
    direction = 1.0 if t1 > t0 else -1.0
    if samples.size:
        lo, hi = min(t0, t1), max(t0, t1)
        if samples.min() < lo or samples.max() > hi:
            raise ValueError("sample_times must lie within [t0, t1]")
        if samples.size > 1 and not np.all(direction * np.diff(samples) > 0.0):
            raise ValueError("sample_times must be strictly monotone in the direction of integration")
    return y0, samples, direction


def _call_rhs(rhs, t, y, n):
    f = np.asarray(rhs(t, y), dtype=float)
    if f.shape != (n,):
        raise ValueError(f"rhs returned shape {f.shape}, expected ({n},)")
    return f


def solve_dopri45(
    rhs: RHS,
    y0: np.ndarray,
    t0: float,
    t1: float,
    cfg: IntegratorConfig | None = None,
    sample_times: Sequence[float] = (),
    record_steps: bool = False,
) -> SolveResult:
    """Integrate ``dy/dt = rhs(t, y)`` from ``t0`` to ``t1`` adaptively.

    Parameters
    ----------
    rhs : callable
        Right-hand side mapping ``(t, y)`` to a vector of ``y``'s shape.
    y0 : array_like
        Finite initial state.
    t0, t1 : float
        Integration interval endpoints, ``t0 != t1``.  ``t1 < t0``
        integrates backward in time.
    cfg : IntegratorConfig, optional
        Tolerances and step control; defaults are used when omitted.
    sample_times : sequence of float, optional
        Times at which to emit dense samples.  They must lie inside the
        interval and be strictly monotone in the direction of integration.
        Sampling never alters step placement; a sample that coincides with
        an accepted step endpoint reproduces that step's solution exactly.
    record_steps : bool, optional
        Also return every accepted step endpoint and state.

    Returns
    -------
    SolveResult
        Samples emitted so far, exact RHS evaluation count, step counts,
        and the terminal status.  Failures return partial data rather than
        raising.
    """
    if cfg is None:
        cfg = IntegratorConfig()
    cfg.validate()
    y0, samples, direction = _check_inputs(y0, t0, t1, sample_times)
    n = y0.size

    out_ts: list[float] = []
    out_ys: list[np.ndarray] = []
    step_ts: list[float] = []
    step_ys: list[np.ndarray] = []
    si = 0
    if si < samples.size and samples[si] == t0:
        out_ts.append(t0)
        out_ys.append(y0.copy())
        si += 1

    t = float(t0)
    y = y0.copy()
    K = np.empty((7, n))
    accepted = 0
    rejected = 0
    theta_pow = np.empty(4)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        k1 = _call_rhs(rhs, t, y, n)
        nfe = 1
        h = min(cfg.h_init, abs(t1 - t0))
        status = None
        while True:
            if t == t1:
                status = SolveStatus.SUCCESS
                break
            if accepted + rejected >= cfg.max_steps:
                status = SolveStatus.STEP_BUDGET_EXHAUSTED
                break
            remaining = abs(t1 - t)
            landing = h >= remaining
            h_att = remaining if landing else h
            hs = direction * h_att
            t_new = t1 if landing else t + hs

            K[0] = k1
            for i in range(1, 6):
                yi = y + hs * (K[:i].T @ _A[i - 1])
                K[i] = _call_rhs(rhs, t + _C[i] * hs, yi, n)
            y_new = y + hs * (K[:6].T @ _A[5])
            K[6] = _call_rhs(rhs, t_new, y_new, n)
            nfe += 6
            err_vec = hs * (K.T @ _E)

            if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y_new)) and np.all(np.isfinite(err_vec))):
                rejected += 1
                if h_att <= cfg.h_min:
                    status = SolveStatus.NON_FINITE_STATE
                    break
                h = max(h_att / 2.0, cfg.h_min)
                continue

            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

            if err <= 1.0:
                accepted += 1
                if si < samples.size:
                    Q = None
                    while si < samples.size and direction * (samples[si] - t_new) <= 0.0:
                        s = samples[si]
                        if s == t_new:
                            ys = y_new.copy()
                        else:
                            if Q is None:
                                Q = K.T @ _P
                            th = (s - t) / hs
                            theta_pow[0] = th
                            theta_pow[1] = th * th
                            theta_pow[2] = theta_pow[1] * th
                            theta_pow[3] = theta_pow[2] * th
                            ys = y + hs * (Q @ theta_pow)
                        out_ts.append(s)
                        out_ys.append(ys)
                        si += 1
                if record_steps:
                    step_ts.append(t_new)
                    step_ys.append(y_new.copy())
                t = t_new
                y = y_new
                k1 = K[6].copy()
            else:
                rejected += 1
                if h_att <= cfg.h_min:
                    status = SolveStatus.STEP_UNDERFLOW
                    break

            if err == 0.0:
                h = cfg.h_max
            else:
                h = min(max(cfg.safety * h_att * err ** -0.2, cfg.h_min), cfg.h_max)

    return SolveResult(
        ts=np.array(out_ts),
        states=np.array(out_ys).reshape(len(out_ys), n),
        nfe=nfe,
        accepted_steps=accepted,
        rejected_steps=rejected,
        status=status,
        t_final=t,
        y_final=y,
        step_ts=np.array(step_ts) if record_steps else None,
        step_states=np.array(step_ys).reshape(len(step_ys), n) if record_steps else None,
    )


def solve_rk4(
    rhs: RHS,
    y0: np.ndarray,
    t0: float,
    t1: float,
    n_steps: int,
    sample_times: Sequence[float] = (),
) -> SolveResult:
    """Integrate with classical RK4 on a uniform grid of ``n_steps`` steps.

    Uses exactly ``4 * n_steps`` RHS evaluations.  Samples between grid
    nodes come from the cubic continuous extension of the four stages;
    samples at grid nodes reproduce the node states exactly.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    y0, samples, direction = _check_inputs(y0, t0, t1, sample_times)
    n = y0.size
    nodes = np.linspace(t0, t1, n_steps + 1)

    out_ts: list[float] = []
    out_ys: list[np.ndarray] = []
    si = 0
    if si < samples.size and samples[si] == t0:
        out_ts.append(t0)
        out_ys.append(y0.copy())
        si += 1

    y = y0.copy()
    nfe = 0
    status = SolveStatus.SUCCESS
    t_final = float(t0)
    completed = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(n_steps):
            t = float(nodes[i])
            t_new = float(nodes[i + 1])
            h = t_new - t
            k1 = _call_rhs(rhs, t, y, n)
            k2 = _call_rhs(rhs, t + h / 2.0, y + (h / 2.0) * k1, n)
            k3 = _call_rhs(rhs, t + h / 2.0, y + (h / 2.0) * k2, n)
            k4 = _call_rhs(rhs, t_new, y + h * k3, n)
            nfe += 4
            y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y_new)):
                status = SolveStatus.NON_FINITE_STATE
                break
            while si < samples.size and direction * (samples[si] - t_new) <= 0.0:
                s = samples[si]
                if s == t_new:
                    ys = y_new.copy()
                else:
                    th = (s - t) / h
                    b1 = th - 1.5 * th**2 + (2.0 / 3.0) * th**3
                    b23 = th**2 - (2.0 / 3.0) * th**3
                    b4 = -0.5 * th**2 + (2.0 / 3.0) * th**3
                    ys = y + h * (b1 * k1 + b23 * (k2 + k3) + b4 * k4)
                out_ts.append(s)
                out_ys.append(ys)
                si += 1
            y = y_new
            t_final = t_new
            completed += 1

    return SolveResult(
        ts=np.array(out_ts),
        states=np.array(out_ys).reshape(len(out_ys), n),
        nfe=nfe,
        accepted_steps=completed,
        rejected_steps=0,
        status=status,
        t_final=t_final,
        y_final=y,
    )
