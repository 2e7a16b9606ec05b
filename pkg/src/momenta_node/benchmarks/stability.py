"""Norm-growth stability probe across the whole model family.

Randomly initialized continuous-depth models with an unbounded (relu)
field are integrated far past their usual horizon; momentum formulations
amplify the state exponentially and can overflow in finite time, while
the adaptive-moment formulation divides its velocity by a running
root-mean-square and stays tame with no bounded activation anywhere.
The probe records log10 of the hidden-block norm on a shared time grid
and flags finite-time blow-ups.

The driving signal is a forced Duffing oscillator by default; an
external series can be supplied as CSV (`t,input,output`) and is
validated and resampled onto a uniform grid.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from momenta_node.dynamics import (
    ADAM,
    AUGMENTED,
    GENERALIZED_HEAVY_BALL,
    HEAVY_BALL,
    SECOND_ORDER,
    VANILLA,
    DynamicsSpec,
    initial_state,
    make_node_rhs,
)
from momenta_node.field_net import FieldNet, init_field
from momenta_node.solver import IntegratorConfig, SolveStatus, solve_dopri45
from momenta_node.threads import thread_cap


class SeriesFormatError(ValueError):
    """Base class for series-CSV problems; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class MalformedRow(SeriesFormatError):
    pass


class NonMonotoneTime(SeriesFormatError):
    pass


class EmptySeries(SeriesFormatError):
    pass


@dataclass
class StabilityProbe:
    """A forcing/response series plus the probe horizon.

    ``times``/``inputs``/``outputs`` describe the generator signal; the
    first few output values seed the models' initial hidden state.
    ``norm_samples`` is filled by :func:`run_stability_probe` with
    log10 hidden-norm curves per model, all on the same grid.
    """

    times: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    t1: float = 64.0
    n_grid: int = 129
    norm_samples: dict[str, np.ndarray] = field(default_factory=dict)
    blowup_at: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if not (self.times.size == self.inputs.size == self.outputs.size):
            raise ValueError("times, inputs, and outputs must have equal length")
        if self.times.size == 0:
            raise ValueError("probe series is empty")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("probe series times must be strictly increasing")
        if self.t1 <= 0:
            raise ValueError("probe horizon t1 must be positive")
        if self.n_grid < 2:
            raise ValueError("need at least two grid points")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t1, self.n_grid)


def duffing_probe(
    seed: int = 0,
    n: int = 256,
    t_end: float = 16.0,
    t1: float = 64.0,
    n_grid: int = 129,
) -> StabilityProbe:
    """Forced Duffing oscillator response, sampled on a uniform grid.

    x'' + delta x' + a x + b x^3 = A cos(omega t), with the initial
    condition and forcing phase drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    delta, a, b = 0.3, -1.0, 1.0
    amp, omega = 0.5, 1.2
    phase = rng.uniform(0.0, 2.0 * np.pi)
    x0 = rng.uniform(-1.0, 1.0, size=2)

    def rhs(t, y):
        x, xdot = y
        force = amp * math.cos(omega * t + phase)
        return np.array([xdot, force - delta * xdot - a * x - b * x**3])

    ts = np.linspace(0.0, t_end, n)
    res = solve_dopri45(
        rhs, x0, 0.0, t_end, IntegratorConfig(rtol=1e-9, atol=1e-9), sample_times=ts
    )
    if not res.ok:
        raise RuntimeError(f"probe generator failed: {res.status.name}")
    states = np.asarray(res.states)
    return StabilityProbe(
        times=ts,
        inputs=amp * np.cos(omega * ts + phase),
        outputs=states[:, 0],
        t1=t1,
        n_grid=n_grid,
    )


def write_series_csv(path, probe: StabilityProbe) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "input", "output"])
        for t, u, y in zip(probe.times, probe.inputs, probe.outputs):
            writer.writerow([repr(float(t)), repr(float(u)), repr(float(y))])


def ingest_series_csv(path, t1: float = 64.0, n_grid: int = 129) -> StabilityProbe:
    """Read a `t,input,output` series, validate it, and build a probe.

    Non-uniform time stamps are resampled onto a uniform grid of the
    same length; already-uniform series pass through untouched so a
    write/ingest round trip is exact.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptySeries("series file is empty", line=1)
    header = [c.strip() for c in rows[0]]
    if header != ["t", "input", "output"]:
        raise MalformedRow(f"expected header 't,input,output', got {','.join(header)!r}", line=1)
    body = rows[1:]
    if not body:
        raise EmptySeries("series has a header but no rows", line=2)

    ts, us, ys = [], [], []
    for i, row in enumerate(body, start=2):
        if len(row) != 3:
            raise MalformedRow(f"expected 3 fields, got {len(row)}", line=i)
        try:
            t, u, y = (float(c) for c in row)
        except ValueError:
            raise MalformedRow(f"non-numeric field in {row!r}", line=i) from None
        if not (math.isfinite(t) and math.isfinite(u) and math.isfinite(y)):
            raise MalformedRow(f"non-finite field in {row!r}", line=i)
        if ts and t <= ts[-1]:
            raise NonMonotoneTime(f"time {t!r} does not increase past {ts[-1]!r}", line=i)
        ts.append(t)
        us.append(u)
        ys.append(y)

    t_arr = np.array(ts)
    u_arr = np.array(us)
    y_arr = np.array(ys)
    if t_arr.size >= 3:
        dt = np.diff(t_arr)
        if np.max(np.abs(dt - dt.mean())) > 1e-9 * max(dt.mean(), 1e-300):
            uniform = np.linspace(t_arr[0], t_arr[-1], t_arr.size)
            u_arr = np.interp(uniform, t_arr, u_arr)
            y_arr = np.interp(uniform, t_arr, y_arr)
            t_arr = uniform
    return StabilityProbe(times=t_arr, inputs=u_arr, outputs=y_arr, t1=t1, n_grid=n_grid)


MODEL_SPECS: dict[str, DynamicsSpec] = {
    "node": DynamicsSpec(kind=VANILLA),
    "anode": DynamicsSpec(kind=AUGMENTED, aug_width=1),
    "sonode": DynamicsSpec(kind=SECOND_ORDER),
    "hbnode": DynamicsSpec(kind=HEAVY_BALL),
    "ghbnode": DynamicsSpec(kind=GENERALIZED_HEAVY_BALL),
    "adamnode": DynamicsSpec(kind=ADAM),
}


def model_spec(name: str) -> DynamicsSpec:
    try:
        return replace(MODEL_SPECS[name])
    except KeyError:
        known = ", ".join(MODEL_SPECS)
        raise ValueError(f"unknown model {name!r}; expected one of: {known}") from None


def _field_param_count(spec: DynamicsSpec, d: int, hidden: int) -> int:
    w_in = spec.field_in_dim(d) + 1
    w_out = spec.width(d)
    n_field = w_in * hidden + hidden * w_out + hidden + w_out
    return n_field + spec.extra_param_count


def fair_hidden_widths(
    specs: dict[str, DynamicsSpec], d: int, base_hidden: int, tolerance: float = 0.10
) -> dict[str, int]:
    """Pick one hidden width per model so parameter counts nearly match.

    The vanilla model at ``base_hidden`` sets the budget; every other
    model gets the width whose count lands closest.  Raises if the
    relative spread cannot be brought under ``tolerance``.
    """
    budget = _field_param_count(DynamicsSpec(kind=VANILLA), d, base_hidden)
    widths: dict[str, int] = {}
    counts: dict[str, int] = {}
    for name, spec in specs.items():
        best = min(range(1, 4097), key=lambda h: abs(_field_param_count(spec, d, h) - budget))
        widths[name] = best
        counts[name] = _field_param_count(spec, d, best)
    spread = (max(counts.values()) - min(counts.values())) / budget
    if spread >= tolerance:
        raise ValueError(
            f"cannot match parameter counts within {tolerance:.0%}: {counts} (spread {spread:.1%})"
        )
    return widths


def _scaled_field(spec: DynamicsSpec, d: int, hidden: int, activation: str, seed: int, gain: float) -> FieldNet:
    base = init_field(spec.field_in_dim(d), (hidden,), spec.width(d), activation=activation, seed=seed)
    return FieldNet(
        weights=[gain * W for W in base.weights],
        biases=[b.copy() for b in base.biases],
        activation=base.activation,
        time_conditioned=base.time_conditioned,
    )


@dataclass
class StabilityResult:
    grid: np.ndarray
    log10_norms: dict[str, np.ndarray]
    blowup_at: dict[str, float]
    statuses: dict[str, str]
    param_counts: dict[str, int]
    widths: dict[str, int]
    d: int
    seed: int


def run_stability_probe(
    probe: StabilityProbe,
    models: dict[str, DynamicsSpec] | None = None,
    d: int = 4,
    base_hidden: int = 16,
    activation: str = "relu",
    seed: int = 0,
    gain: float = 2.0,
    cfg: IntegratorConfig | None = None,
) -> StabilityResult:
    """Integrate every model from the same start and record norm growth.

    All models share the init seed and a parameter-fair hidden width.
    A model whose solve dies (overflow, step underflow) gets its failure
    time recorded in ``blowup_at``; its curve holds the last finite
    value so the grid stays rectangular.
    """
    if models is None:
        models = dict(MODEL_SPECS)
    if probe.outputs.size < d:
        raise ValueError(f"probe series has {probe.outputs.size} samples; need at least d={d}")
    cfg = cfg or IntegratorConfig(rtol=1e-6, atol=1e-6, max_steps=200_000)
    grid = probe.grid
    h0 = probe.outputs[:d]
    widths = fair_hidden_widths(models, d, base_hidden)

    def run_one(item):
        name, spec = item
        fld = _scaled_field(spec, d, widths[name], activation, seed, gain)
        rhs = make_node_rhs(spec, fld, d)
        y0 = initial_state(spec, h0)
        res = solve_dopri45(rhs, y0, 0.0, probe.t1, cfg, sample_times=grid)
        w = spec.width(d)
        if len(res.states) > 0:
            states = np.asarray(res.states)
            # Norms of huge-but-finite states can overflow to inf; they
            # are filtered out just below like any other lost sample.
            with np.errstate(over="ignore", invalid="ignore"):
                norms = np.linalg.norm(states[:, :w], axis=1)
        else:
            norms = np.array([])
        norms = norms[np.isfinite(norms)]
        if norms.size == 0:
            norms = np.array([float(np.linalg.norm(h0))])
        curve = np.empty(grid.size)
        n_have = min(norms.size, grid.size)
        curve[:n_have] = norms[:n_have]
        curve[n_have:] = norms[n_have - 1]
        with np.errstate(divide="ignore"):
            log_curve = np.log10(np.maximum(curve, 1e-300))
        blow = None if res.ok else float(res.t_final)
        return name, log_curve, blow, res.status

    results = {}
    with ThreadPoolExecutor(max_workers=thread_cap(len(models))) as pool:
        for name, log_curve, blow, status in pool.map(run_one, models.items()):
            results[name] = (log_curve, blow, status)

    probe.norm_samples = {name: r[0] for name, r in results.items()}
    probe.blowup_at = {name: r[1] for name, r in results.items() if r[1] is not None}
    return StabilityResult(
        grid=grid,
        log10_norms={name: r[0] for name, r in results.items()},
        blowup_at={name: r[1] for name, r in results.items() if r[1] is not None},
        statuses={name: r[2].name for name, r in results.items()},
        param_counts={n: _field_param_count(models[n], d, widths[n]) for n in models},
        widths=widths,
        d=d,
        seed=seed,
    )
