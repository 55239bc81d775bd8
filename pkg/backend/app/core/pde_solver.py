"""
Implicit L1 solver for the variable-order fractional diffusion equation

    d^{alpha(x)}/dt^{alpha(x)} q(t, x) = 1/2 q_xx(t, x)

and the residual of its integrated (mild) form.

Each grid point carries its own order alpha(x_i) and its own table of L1
weights. One time step solves (diag(b_0) - 1/2 D_xx) q^n = rhs, a
tridiagonal system, or a cyclic one on a periodic grid.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded
from scipy.special import gamma

from app.core.alpha_field import AlphaField
from app.core.errors import DomainError, SolverFailure

logger = logging.getLogger(__name__)

BOUNDARY_LEAK_TOL = 1e-6
TRACE_TOL = 1e-6


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET0 = "dirichlet0"
    NEUMANN0 = "neumann0"


@dataclass(frozen=True)
class Grid1D:
    """
    Uniform grid with n_x cells of width dx.

    Periodic grids put nodes at x_min + i dx; the other closures use cell
    centres, with a mirrored ghost value (Neumann0) or an odd one (Dirichlet0).
    """

    x_min: float
    x_max: float
    n_x: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if self.n_x < 3:
            raise DomainError("grid needs at least 3 points")
        if not self.x_max > self.x_min:
            raise DomainError("grid needs x_min < x_max")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def nodes(self) -> np.ndarray:
        i = np.arange(self.n_x, dtype=float)
        if self.boundary is Boundary.PERIODIC:
            return self.x_min + i * self.dx
        return self.x_min + (i + 0.5) * self.dx

    def second_difference(self, q) -> np.ndarray:
        """Three-point D_xx along the last axis."""
        q = np.asarray(q, dtype=float)
        if self.boundary is Boundary.PERIODIC:
            left = np.roll(q, 1, axis=-1)
            right = np.roll(q, -1, axis=-1)
        else:
            ghost = -1.0 if self.boundary is Boundary.DIRICHLET0 else 1.0
            left = np.concatenate((ghost * q[..., :1], q[..., :-1]), axis=-1)
            right = np.concatenate((q[..., 1:], ghost * q[..., -1:]), axis=-1)
        return (left - 2.0 * q + right) / self.dx**2

    def operator_bands(self, b0: np.ndarray) -> tuple[np.ndarray, float]:
        """Banded form of diag(b0) - 1/2 D_xx and the cyclic corner entry (0 unless periodic)."""
        h = 0.5 / self.dx**2
        bands = np.zeros((3, self.n_x))
        bands[0, 1:] = -h
        bands[2, :-1] = -h
        bands[1] = b0 + 2.0 * h
        if self.boundary is Boundary.PERIODIC:
            return bands, -h
        edge = 3.0 * h if self.boundary is Boundary.DIRICHLET0 else h
        bands[1, 0] = b0[0] + edge
        bands[1, -1] = b0[-1] + edge
        return bands, 0.0


class _TridiagonalSolver:
    """Direct solver for a fixed (cyclic) tridiagonal matrix; Sherman-Morrison for the corners."""

    def __init__(self, bands: np.ndarray, corner: float):
        self.cyclic = corner != 0.0
        self.bands = bands.copy()
        if not self.cyclic:
            return
        n = bands.shape[1]
        shift = -bands[1, 0]
        self.bands[1, 0] -= shift
        self.bands[1, -1] -= corner * corner / shift
        u = np.zeros(n)
        u[0], u[-1] = shift, corner
        self._v_last = corner / shift
        self._z = self._banded(u)
        self._denom = 1.0 + self._z[0] + self._v_last * self._z[-1]
        if self._denom == 0.0 or not np.isfinite(self._denom):
            raise SolverFailure("cyclic correction is singular")

    def _banded(self, rhs: np.ndarray) -> np.ndarray:
        try:
            return solve_banded((1, 1), self.bands, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SolverFailure(f"tridiagonal solve failed: {e}") from e

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        y = self._banded(rhs)
        if self.cyclic:
            y = y - (y[0] + self._v_last * y[-1]) / self._denom * self._z
        if not np.all(np.isfinite(y)):
            raise SolverFailure("non-finite values in the time step")
        return y


# ---------------------------------------------------------------------------
# L1 weights
# ---------------------------------------------------------------------------


def _l1_table(order: np.ndarray, n: int, dt: float) -> np.ndarray:
    """(n, n_x) table b_j(order_i); order 1 gives the backward Euler weights."""
    j = np.arange(n, dtype=float)[:, None]
    e = 1.0 - order[None, :]
    table = (j + 1.0) ** e - j**e
    table[0] = 1.0  # 0**0 would give 0 at order 1
    return table / (gamma(2.0 - order) * dt**order)[None, :]


def l1_weights(alpha: float, n: int, dt: float) -> np.ndarray:
    """b_j = ((j+1)^(1-a) - j^(1-a)) / (Gamma(2-a) dt^a), j = 0..n-1."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"L1 weights need 0 < alpha < 1, got {alpha}")
    if n < 1:
        raise DomainError("n must be at least 1")
    if not dt > 0:
        raise DomainError("dt must be positive")
    return _l1_table(np.array([float(alpha)]), n, dt)[:, 0]


@dataclass
class CaputoHistory:
    order: np.ndarray    # alpha(x_i)
    dt: float
    weights: np.ndarray  # (n_steps, n_x)

    @classmethod
    def build(cls, order: np.ndarray, n_steps: int, dt: float) -> "CaputoHistory":
        order = np.asarray(order, dtype=float)
        return cls(order=order, dt=dt, weights=_l1_table(order, n_steps, dt))

    @property
    def b0(self) -> np.ndarray:
        return self.weights[0]

    def memory(self, increments: np.ndarray, step: int) -> np.ndarray:
        """sum_{j=1}^{step-1} b_j (q^{step-j} - q^{step-j-1}); increments[m] = q^m - q^{m-1}."""
        if step <= 1:
            return np.zeros(self.order.size)
        return np.einsum("jx,jx->x", self.weights[1:step], increments[step - 1 : 0 : -1])


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


@dataclass
class FieldSolution:
    grid: Grid1D
    t_grid: np.ndarray
    q: np.ndarray        # (n_t + 1, n_x)
    initial: np.ndarray
    dt: float
    order: np.ndarray    # alpha at the nodes

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def final(self) -> np.ndarray:
        return self.q[-1]

    def at(self, x: float) -> float:
        """q(T, .) at the node nearest to x."""
        return float(self.final[int(np.argmin(np.abs(self.grid.nodes - x)))])


def node_order(field: AlphaField | float, grid: Grid1D) -> np.ndarray:
    if isinstance(field, AlphaField):
        order = np.broadcast_to(np.asarray(field.evaluate(grid.nodes), dtype=float), (grid.n_x,)).copy()
    else:
        order = np.full(grid.n_x, float(field))
    if np.any(order <= 0.0) or np.any(order > 1.0):
        raise DomainError("time order must lie in (0, 1] at every node")
    return order


def _check_initial(grid: Grid1D, u: np.ndarray) -> None:
    if u.shape != (grid.n_x,):
        raise DomainError(f"initial data must have {grid.n_x} values, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise DomainError("initial data must be finite")
    if grid.boundary is Boundary.DIRICHLET0:
        trace = np.array([1.5 * u[0] - 0.5 * u[1], 1.5 * u[-1] - 0.5 * u[-2]])
        if np.max(np.abs(trace)) > TRACE_TOL * max(1.0, float(np.max(np.abs(u)))):
            raise DomainError("Dirichlet0 grid needs initial data vanishing at the walls")


def solve_fde(
    field: AlphaField | float,
    grid: Grid1D,
    initial,
    T: float,
    dt: float,
) -> FieldSolution:
    """
    March the L1 scheme from u to time T.

    ``field`` may be a constant order in (0, 1]; order 1 is the backward
    Euler heat equation. ``initial`` is a vector on the nodes or a callable.
    """
    if not T > 0 or not dt > 0:
        raise DomainError("T and dt must be positive")
    n_t = int(round(T / dt))
    if n_t < 1 or abs(n_t * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T:g} is not a whole number of steps dt={dt:g}")

    u = np.asarray(initial(grid.nodes) if callable(initial) else initial, dtype=float).copy()
    _check_initial(grid, u)
    order = node_order(field, grid)

    history = CaputoHistory.build(order, n_t, dt)
    b0 = history.b0
    if not np.all(b0 > 0):
        raise SolverFailure("leading L1 weight must be positive")
    solver = _TridiagonalSolver(*grid.operator_bands(b0))

    q = np.empty((n_t + 1, grid.n_x))
    increments = np.zeros((n_t + 1, grid.n_x))
    q[0] = u
    logger.debug("solving %d steps on %d nodes (%s)", n_t, grid.n_x, grid.boundary.value)
    for n in range(1, n_t + 1):
        q[n] = solver.solve(b0 * q[n - 1] - history.memory(increments, n))
        increments[n] = q[n] - q[n - 1]

    if grid.boundary is not Boundary.PERIODIC:
        walls = np.abs(q[:, [0, -1]])
        if np.max(walls) > BOUNDARY_LEAK_TOL + np.max(np.abs(u[[0, -1]])):
            logger.warning("solution reaches the walls (max |q| = %.3g); widen the domain", np.max(walls))

    return FieldSolution(
        grid=grid, t_grid=np.arange(n_t + 1) * dt, q=q, initial=u, dt=dt, order=order
    )


# ---------------------------------------------------------------------------
# Mild form
# ---------------------------------------------------------------------------

KernelMoments = Callable[[np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]]


def power_law_moments(order: np.ndarray, lags: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Exact integrals of tau^-a / Gamma(1-a) against the two hat functions of a step.

    ``lags[m]`` is the distance a from t back to the right end of step m, so
    tau runs over [a, a + dt]. Returns the weights of the left and the right
    node value, each (n_steps, n_x).
    """
    a = np.asarray(lags, dtype=float)[:, None]
    e = 1.0 - order[None, :]
    i0 = ((a + dt) ** e - a**e) / e
    i1 = ((a + dt) ** (e + 1.0) - a ** (e + 1.0)) / (e + 1.0)
    scale = 1.0 / (dt * gamma(e))
    return (i1 - a * i0) * scale, ((a + dt) * i0 - i1) * scale


def mild_residual(
    solution: FieldSolution,
    field: AlphaField | float | None = None,
    *,
    kernel: KernelMoments = power_law_moments,
) -> float:
    """
    max_i | int_0^T (q(s) - u) k(T - s) ds - 1/2 D_xx int_0^T q(s) ds | at t = T.

    The kernel is integrated exactly against the piecewise-linear interpolant
    of q; the time integral on the right is the trapezoid rule.
    """
    order = solution.order if field is None else node_order(field, solution.grid)
    if np.any(order >= 1.0):
        raise DomainError("the mild form needs order below 1")
    q, dt = solution.q, solution.dt
    n_t = q.shape[0] - 1
    lags = (n_t - 1 - np.arange(n_t)) * dt
    w_left, w_right = kernel(order, lags, dt)
    diff = q - solution.initial[None, :]
    lhs = np.sum(w_left * diff[:-1] + w_right * diff[1:], axis=0)
    rhs = 0.5 * solution.grid.second_difference(trapezoid(q, dx=dt, axis=0))
    return float(np.max(np.abs(lhs - rhs)))
