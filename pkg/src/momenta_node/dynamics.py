"""State layouts and right-hand sides for continuous-depth dynamics.

Six trainable formulations share a common packed-state convention
(``h`` block, then optional momentum ``m``, then optional second-moment
``v``):

* ``vanilla`` -- dh/dt = f(h, t)
* ``augmented`` -- vanilla on a state widened with zero-initialized extra
  channels
* ``second_order`` -- dh/dt = m, dm/dt = f([h, m], t)
* ``heavy_ball`` -- dh/dt = -m, dm/dt = -gamma*m + f(h, t) with
  gamma = sigmoid(theta) and theta trainable
* ``generalized_heavy_ball`` -- heavy ball with the momentum saturated
  elementwise inside the h-equation
* ``adam`` -- dh/dt = -m/sqrt(v + eps), dm/dt = (1-alpha)(-f(h, t) - m),
  dv/dt = (1-beta)(f(h, t)^2 - v)

Pure-optimization counterparts driven by an explicit objective gradient
(gradient flow, damped momentum flow, and the adaptive-moment flow where
``m`` chases grad F instead of ``-f``) live here as well, together with
the discrete adaptive-moment update they are the small-step limit of.

All block arrays may carry a leading batch axis; the flat layout
concatenates the blocks in order, each row-major, so a single sample
packs as ``[h, m, v]``.
"""

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import field_net as fn

VANILLA = "vanilla"
AUGMENTED = "augmented"
SECOND_ORDER = "second_order"
HEAVY_BALL = "heavy_ball"
GENERALIZED_HEAVY_BALL = "generalized_heavy_ball"
ADAM = "adam"

ALL_KINDS = (VANILLA, AUGMENTED, SECOND_ORDER, HEAVY_BALL, GENERALIZED_HEAVY_BALL, ADAM)

# Which kinds carry which auxiliary blocks.
_HAS_M = {SECOND_ORDER, HEAVY_BALL, GENERALIZED_HEAVY_BALL, ADAM}
_HAS_V = {ADAM}


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class AdamParams:
    """Rates and floor for the adaptive-moment dynamics."""

    alpha: float = 0.9
    beta: float = 0.99
    epsilon: float = 1e-5

    def validate(self):
        if not (0.0 <= self.alpha < 1.0 and 0.0 <= self.beta < 1.0):
            raise ValueError("alpha and beta must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass
class HeavyBallParams:
    """Trainable damping: gamma = sigmoid(theta)."""

    theta: float = -3.0

    @property
    def gamma(self) -> float:
        return float(sigmoid(self.theta))


@dataclass
class DynamicsSpec:
    """Serializable description of one formulation and its constants.

    ``m0``/``v0`` are the scalar fills used when building initial states
    (momentum defaults to rest, second moment to one).
    """

    kind: str = VANILLA
    adam: AdamParams | None = None
    hb: HeavyBallParams | None = None
    aug_width: int = 0
    saturation_bound: float = 1.0
    m0: float = 0.0
    v0: float = 1.0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == ADAM and self.adam is None:
            self.adam = AdamParams()
        if self.kind in (HEAVY_BALL, GENERALIZED_HEAVY_BALL) and self.hb is None:
            self.hb = HeavyBallParams()
        if self.kind == AUGMENTED and self.aug_width < 1:
            raise ValueError("augmented dynamics need aug_width >= 1")
        if self.kind != AUGMENTED:
            self.aug_width = 0
        if self.kind == GENERALIZED_HEAVY_BALL and self.saturation_bound <= 0.0:
            raise ValueError("saturation_bound must be positive")
        if self.v0 < 0.0:
            raise ValueError("v0 must be non-negative")
        if self.adam is not None:
            self.adam.validate()

    @property
    def has_m(self) -> bool:
        return self.kind in _HAS_M

    @property
    def has_v(self) -> bool:
        return self.kind in _HAS_V

    @property
    def n_blocks(self) -> int:
        return 1 + self.has_m + self.has_v

    def width(self, d: int) -> int:
        """Width of the h block for a nominal data dimension ``d``."""
        return d + self.aug_width

    def state_dim(self, d: int) -> int:
        return self.width(d) * self.n_blocks

    @property
    def extra_param_count(self) -> int:
        """Trainable scalars beyond the field's parameters (the damping)."""
        return 1 if self.kind in (HEAVY_BALL, GENERALIZED_HEAVY_BALL) else 0

    def field_in_dim(self, d: int) -> int:
        """State width the field consumes (time slot excluded)."""
        w = self.width(d)
        return 2 * w if self.kind == SECOND_ORDER else w

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "m0": self.m0, "v0": self.v0}
        if self.kind == ADAM:
            out.update(alpha=self.adam.alpha, beta=self.adam.beta, epsilon=self.adam.epsilon)
        if self.kind in (HEAVY_BALL, GENERALIZED_HEAVY_BALL):
            out["theta"] = self.hb.theta
        if self.kind == AUGMENTED:
            out["aug_width"] = self.aug_width
        if self.kind == GENERALIZED_HEAVY_BALL:
            out["saturation_bound"] = self.saturation_bound
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "DynamicsSpec":
        data = dict(data)
        kind = data.pop("kind")
        adam = None
        if kind == ADAM:
            adam = AdamParams(
                alpha=data.pop("alpha", 0.9),
                beta=data.pop("beta", 0.99),
                epsilon=data.pop("epsilon", 1e-5),
            )
        hb = None
        if kind in (HEAVY_BALL, GENERALIZED_HEAVY_BALL):
            hb = HeavyBallParams(theta=data.pop("theta", -3.0))
        spec = cls(
            kind=kind,
            adam=adam,
            hb=hb,
            aug_width=data.pop("aug_width", 1 if kind == AUGMENTED else 0),
            saturation_bound=data.pop("saturation_bound", 1.0),
            m0=data.pop("m0", 0.0),
            v0=data.pop("v0", 1.0),
        )
        if data:
            raise ValueError(f"unknown dynamics keys: {sorted(data)}")
        return spec

    @classmethod
    def from_json(cls, text: str) -> "DynamicsSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class PackedState:
    """Named view of the state blocks; absent blocks are None."""

    h: np.ndarray
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def blocks(self):
        return [b for b in (self.h, self.m, self.v) if b is not None]


def pack(state: PackedState) -> np.ndarray:
    """Concatenate the present blocks into one flat float vector."""
    return np.concatenate([np.asarray(b, dtype=float).ravel() for b in state.blocks()])


def unpack(vec: np.ndarray, spec: DynamicsSpec, d: int, batch: int = 1) -> PackedState:
    """Split a flat vector back into ``(h, m, v)`` blocks of width ``spec.width(d)``.

    With ``batch > 1`` each block becomes a ``(batch, width)`` array;
    otherwise blocks are plain vectors.
    """
    vec = np.asarray(vec, dtype=float)
    w = spec.width(d)
    nb = spec.n_blocks
    expected = nb * w * batch
    if vec.shape != (expected,):
        raise ValueError(f"flat state has {vec.shape}, expected ({expected},)")
    shape = (batch, w) if batch > 1 else (w,)
    size = w * batch
    parts = [vec[i * size : (i + 1) * size].reshape(shape) for i in range(nb)]
    h = parts[0]
    m = parts[1] if spec.has_m else None
    v = parts[-1] if spec.has_v else None
    return PackedState(h=h, m=m, v=v)


def initial_state(spec: DynamicsSpec, h0: np.ndarray) -> np.ndarray:
    """Build the flat initial state from data ``h0``.

    Augmented dynamics append ``aug_width`` zero channels; momentum blocks
    fill with ``spec.m0`` and second-moment blocks with ``spec.v0``.
    ``h0`` may be ``(d,)`` or ``(batch, d)``.
    """
    h0 = np.asarray(h0, dtype=float)
    if spec.kind == AUGMENTED:
        zshape = h0.shape[:-1] + (spec.aug_width,)
        h0 = np.concatenate([h0, np.zeros(zshape)], axis=-1)
    blocks = [h0]
    if spec.has_m:
        blocks.append(np.full_like(h0, spec.m0))
    if spec.has_v:
        blocks.append(np.full_like(h0, spec.v0))
    return np.concatenate([b.ravel() for b in blocks])


# ---------------------------------------------------------------------------
# Right-hand sides.  Every function takes and returns block arrays that may
# have a leading batch axis.

GradFn = Callable[[np.ndarray], np.ndarray]


def vanilla_rhs(t: float, state: PackedState, field: fn.FieldNet) -> PackedState:
    return PackedState(h=fn.forward(field, state.h, t))


def augmented_rhs(t: float, state: PackedState, field: fn.FieldNet, aug_width: int) -> PackedState:
    if field.state_dim != state.h.shape[-1]:
        raise ValueError("field width does not match the augmented state")
    if aug_width < 1:
        raise ValueError("aug_width must be >= 1")
    return PackedState(h=fn.forward(field, state.h, t))


def sonode_rhs(t: float, state: PackedState, field: fn.FieldNet) -> PackedState:
    hm = np.concatenate([state.h, state.m], axis=-1)
    return PackedState(h=state.m.copy(), m=fn.forward(field, hm, t))


def hb_node_rhs(t: float, state: PackedState, field: fn.FieldNet, hb: HeavyBallParams) -> PackedState:
    gamma = hb.gamma
    f = fn.forward(field, state.h, t)
    return PackedState(h=-state.m, m=-gamma * state.m + f)


def ghb_node_rhs(
    t: float,
    state: PackedState,
    field: fn.FieldNet,
    hb: HeavyBallParams,
    bound: float,
) -> PackedState:
    gamma = hb.gamma
    f = fn.forward(field, state.h, t)
    return PackedState(h=-np.clip(state.m, -bound, bound), m=-gamma * state.m + f)


def adam_node_rhs(t: float, state: PackedState, field: fn.FieldNet, p: AdamParams) -> PackedState:
    f = fn.forward(field, state.h, t)
    root = np.sqrt(state.v + p.epsilon)
    return PackedState(
        h=-state.m / root,
        m=(1.0 - p.alpha) * (-f - state.m),
        v=(1.0 - p.beta) * (f * f - state.v),
    )


def gradient_flow_rhs(t: float, x: np.ndarray, grad_f: GradFn) -> np.ndarray:
    return -np.asarray(grad_f(x), dtype=float)


def hb_ode_rhs(t: float, state: PackedState, grad_f: GradFn, gamma: float) -> PackedState:
    """Damped momentum descent flow: x' = m, m' = -gamma*m - grad F.

    This is the small-step limit of the classical momentum recursion and
    collapses to x'' + gamma*x' = -grad F, so the objective decreases
    along trajectories (energy F + ||m||^2/2 dissipates at rate
    gamma*||m||^2).
    """
    g = np.asarray(grad_f(state.h), dtype=float)
    return PackedState(h=state.m, m=-gamma * state.m - g)


def adam_ode_rhs(t: float, state: PackedState, grad_f: GradFn, p: AdamParams) -> PackedState:
    g = np.asarray(grad_f(state.h), dtype=float)
    root = np.sqrt(state.v + p.epsilon)
    return PackedState(
        h=-state.m / root,
        m=(1.0 - p.alpha) * (g - state.m),
        v=(1.0 - p.beta) * (g * g - state.v),
    )


def discrete_adam_step(
    x: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    grad_f: GradFn,
    s: float,
    alpha: float = 0.9,
    beta: float = 0.99,
    epsilon: float = 1e-8,
):
    """One uncorrected adaptive-moment update with step size ``s``.

    The position moves first; both moment estimates then blend in the
    gradient taken at the new position.  Returns ``(x', m', v')``.
    """
    x_new = x - s * m / np.sqrt(v + epsilon)
    g = np.asarray(grad_f(x_new), dtype=float)
    m_new = alpha * m + (1.0 - alpha) * g
    v_new = beta * v + (1.0 - beta) * g * g
    return x_new, m_new, v_new


def make_node_rhs(
    spec: DynamicsSpec, field: fn.FieldNet, d: int, batch: int = 1
) -> Callable[[float, np.ndarray], np.ndarray]:
    """Adapt a trainable formulation to the solver's flat-vector interface."""
    expected = spec.field_in_dim(d) + (1 if field.time_conditioned else 0)
    if field.in_dim != expected:
        raise ValueError(f"field consumes {field.in_dim} inputs, dynamics supply {expected}")
    w = spec.width(d)
    if field.out_dim != w:
        raise ValueError(f"field emits {field.out_dim} outputs, dynamics need {w}")

    kind = spec.kind

    def rhs(t, y):
        state = unpack(y, spec, d, batch)
        if kind == VANILLA:
            out = vanilla_rhs(t, state, field)
        elif kind == AUGMENTED:
            out = augmented_rhs(t, state, field, spec.aug_width)
        elif kind == SECOND_ORDER:
            out = sonode_rhs(t, state, field)
        elif kind == HEAVY_BALL:
            out = hb_node_rhs(t, state, field, spec.hb)
        elif kind == GENERALIZED_HEAVY_BALL:
            out = ghb_node_rhs(t, state, field, spec.hb, spec.saturation_bound)
        else:
            out = adam_node_rhs(t, state, field, spec.adam)
        return pack(out)

    return rhs


def make_flow_rhs(
    flow: str,
    grad_f: GradFn,
    gamma: float = 0.9,
    adam: AdamParams | None = None,
    warm_start: bool = True,
) -> tuple[Callable[[float, np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """Pure-optimization flow over an objective gradient.

    ``flow`` is one of ``"ode"`` (plain gradient flow), ``"hbode"``
    (damped momentum flow, fixed ``gamma``), or ``"adamode"``.  Returns
    ``(rhs, init)`` where ``init`` maps a start point to the flat state.

    With ``warm_start`` the adaptive flow seeds its moment estimates
    from the start-point gradient (m = grad, v = grad**2), matching what
    a bias-corrected first step would produce.  A cold start (zeros and
    ones) instead spends roughly 1/(1-beta) time units waiting for the
    second moment to forget the large gradients near a typical far-away
    start.  At a stationary point the warm start is zero, so it never
    moves a converged state.
    """
    if flow == "ode":
        return (lambda t, y: gradient_flow_rhs(t, y, grad_f)), (lambda x0: np.asarray(x0, float).copy())
    if flow == "hbode":

        def rhs(t, y):
            d = y.size // 2
            st = PackedState(h=y[:d], m=y[d:])
            out = hb_ode_rhs(t, st, grad_f, gamma)
            return np.concatenate([out.h, out.m])

        return rhs, (lambda x0: np.concatenate([np.asarray(x0, float), np.zeros(len(x0))]))
    if flow == "adamode":
        p = adam or AdamParams()

        def rhs(t, y):
            d = y.size // 3
            st = PackedState(h=y[:d], m=y[d : 2 * d], v=y[2 * d :])
            out = adam_ode_rhs(t, st, grad_f, p)
            return np.concatenate([out.h, out.m, out.v])

        def init(x0):
            x0 = np.asarray(x0, dtype=float)
            if warm_start:
                g0 = np.asarray(grad_f(x0), dtype=float)
                return np.concatenate([x0, g0, g0 * g0])
            return np.concatenate([x0, np.zeros(x0.size), np.ones(x0.size)])

        return rhs, init
    raise ValueError(f"unknown flow {flow!r}; expected 'ode', 'hbode', or 'adamode'")
