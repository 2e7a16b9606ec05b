"""Continuous-depth models with momentum and adaptive-moment state.

Core pieces: ``solver`` (explicit Runge-Kutta integrators), ``dynamics``
(the model family's right-hand sides and the optimization flows),
``field_net`` (small dense networks and parameter packing), ``adjoint``
(reverse-time gradients plus a finite-difference gate), ``benchmarks``
(landscape trajectories, stability probe, classification efficacy), and
``cli`` (the ``momenta-node`` executable).
"""

from momenta_node.dynamics import DynamicsSpec, make_flow_rhs, make_node_rhs
from momenta_node.solver import IntegratorConfig, SolveResult, solve_dopri45, solve_rk4

__version__ = "0.1.0"

__all__ = [
    "DynamicsSpec",
    "make_flow_rhs",
    "make_node_rhs",
    "IntegratorConfig",
    "SolveResult",
    "solve_dopri45",
    "solve_rk4",
    "__version__",
]
