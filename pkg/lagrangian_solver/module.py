#!/usr/bin/env python
"""
characteristic (Lagrangian) solver: particles y(t, xi) carry
U = u(t, y) and V = U_xi, with the nonlocal term evaluated by linear-time
one-sided exponential kernel sums
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import PchipInterpolator
from cocore.Logger import Logger

from model_core.module import (
    Field,
    h_values,
    norm_h_s,
    spectral_derivative,
)
from besov_lab.module import b0_inf_seminorm, besov_norm
from eulerian_solver.stepper import (
    AdaptiveStepper,
    Termination,
    TrajectoryRecord,
)

LOG = Logger()

DELTA_BREAK = 1e-6


class WaveBreakingError(RuntimeError):
    """
    raised when particle positions stop increasing or y_xi collapses
    """


@dataclass(frozen=True, eq=False)
class LagrangianState:
    """
    particles on fixed uniform labels; zeta = y - xi - Gamma t and
    zeta_xi are carried so that y_xi = zeta_xi + 1 holds exactly
    """

    grid: object
    time: float
    labels: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    velocities: np.ndarray = field(repr=False)
    slopes: np.ndarray = field(repr=False)
    zeta: np.ndarray = field(repr=False)
    zeta_xi: np.ndarray = field(repr=False)

    @property
    def y_xi(self):
        return self.zeta_xi + 1.0

    @property
    def eulerian_slopes(self):
        """u_x at the particles, V / y_xi"""
        return self.slopes / self.y_xi

    def pack(self):
        return np.concatenate(
            (
                self.positions,
                self.velocities,
                self.slopes,
                self.zeta,
                self.zeta_xi,
            )
        )

    @classmethod
    def unpack(cls, grid, labels, t, vector):
        y, U, V, z, zx = np.split(np.asarray(vector, dtype=float), 5)
        return cls(grid, float(t), labels, y, U, V, z, zx)

    def zeta_xi_drift(self):
        """
        max gap between the carried zeta_xi and the label derivative of
        zeta
        """
        n = self.grid.n_points
        dz = sfft.irfft(
            sfft.rfft(self.zeta) * self.grid.derivative_multiplier(1), n=n
        )
        return float(np.max(np.abs(dz - self.zeta_xi)))


@dataclass(frozen=True)
class LagrangianRates:
    positions: np.ndarray
    velocities: np.ndarray
    slopes: np.ndarray
    zeta: np.ndarray
    zeta_xi: np.ndarray


def init_from_eulerian(u0):
    """
    identity characteristics xi = y = x_i carrying u0 and u0'

    :param u0: Field
    :return: LagrangianState
    """
    grid = u0.grid
    nodes = grid.nodes
    zeros = np.zeros(grid.n_points)
    return LagrangianState(
        grid,
        u0.time,
        nodes,
        nodes.copy(),
        u0.values.copy(),
        spectral_derivative(u0).values,
        zeros,
        zeros.copy(),
    )


def _scan_sums(y, w):
    decay = np.exp(-np.diff(y)).tolist()
    weights = w.tolist()
    n = len(weights)
    left = [0.0] * n
    right = [0.0] * n
    acc = 0.0
    for i in range(1, n):
        acc = decay[i - 1] * (acc + weights[i - 1])
        left[i] = acc
    acc = 0.0
    for i in range(n - 2, -1, -1):
        acc = decay[i] * (acc + weights[i + 1])
        right[i] = acc
    return np.array(left), np.array(right)


def _check_pair(y, w):
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != w.shape or y.ndim != 1:
        raise ValueError(
            f"positions {y.shape} and weights {w.shape} must be equal 1-d"
        )
    return y, w


def fast_exp_kernel_sums(y, w):
    """
    A_i = sum_{j<i} exp(-(y_i - y_j)) w_j and
    B_i = sum_{j>i} exp(-(y_j - y_i)) w_j by two linear scans

    :param y: strictly increasing positions
    :param w: weights
    :return: (A, B)
    """
    y, w = _check_pair(y, w)
    if y.size > 1 and not np.all(np.diff(y) > 0):
        i = int(np.argmin(np.diff(y)))
        raise WaveBreakingError(
            f"positions not increasing at index {i}: "
            f"{y[i]:.17g} >= {y[i + 1]:.17g}"
        )
    if y.size == 0:
        return np.zeros(0), np.zeros(0)
    return _scan_sums(y, w)


def direct_exp_kernel_sums(y, w, chunk=512):
    """quadratic-cost oracle for fast_exp_kernel_sums"""
    y, w = _check_pair(y, w)
    n = y.size
    left = np.zeros(n)
    right = np.zeros(n)
    idx = np.arange(n)
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        gap = y[rows, None] - y[None, :]
        kernel = np.exp(-np.abs(gap)) * w[None, :]
        below = idx[None, :] < idx[rows, None]
        above = idx[None, :] > idx[rows, None]
        left[rows] = np.sum(np.where(below, kernel, 0.0), axis=1)
        right[rows] = np.sum(np.where(above, kernel, 0.0), axis=1)
    return left, right


class LagrangianOperator:
    """
    rates (y, U, V, zeta, zeta_xi)_t on the packed state vector
    """

    def __init__(self, grid, params, kink_correction=True):
        self.grid = grid
        self.params = params
        self.kink_correction = kink_correction
        self.dxi = grid.derivative_multiplier(1)

    def kernel_terms(self, U, V, y, y_xi):
        """
        Q~ and P on the particles, plus the density F, for weights
        F = (-h(U) + U^2) y_xi + V^2 / (2 y_xi)
        """
        h = self.grid.spacing
        transport = -h_values(U, self.params) + U ** 2
        density = transport * y_xi + 0.5 * V ** 2 / y_xi
        w = h * density
        left, right = _scan_sums(y, w)
        if self.kink_correction:
            # endpoint terms of the trapezoid rule on each one-sided half
            d_density = sfft.irfft(
                sfft.rfft(density) * self.dxi, n=self.grid.n_points
            )
            qtilde = 0.5 * ((left - right) - h ** 2 / 6.0 * d_density)
            p = 0.5 * (left + right + w - h ** 2 / 6.0 * y_xi * density)
        else:
            qtilde = 0.5 * (left - right)
            p = 0.5 * (left + right + w)
        return qtilde, p, density

    def qtilde_xi(self, U, V, y_xi, p):
        return (-h_values(U, self.params) + U ** 2 - p) * y_xi + V ** 2 / (
            2.0 * y_xi
        )

    def __call__(self, t, vector):
        y, U, V, z, zx = np.split(vector, 5)
        y_xi = zx + 1.0
        lam = self.params.lambda_d
        qtilde, p, _ = self.kernel_terms(U, V, y, y_xi)
        qxi = self.qtilde_xi(U, V, y_xi, p)
        return np.concatenate(
            (U + self.params.big_gamma, qtilde - lam * U, qxi - lam * V, U, V)
        )


def check_state(state, delta_break=DELTA_BREAK):
    """
    raises WaveBreakingError for non-monotone positions or
    y_xi < delta_break
    """
    y = state.positions
    if not np.all(np.diff(y) > 0):
        raise WaveBreakingError(
            f"characteristics crossed at t={state.time:.6g}"
        )
    low = float(np.min(state.y_xi))
    if low < delta_break:
        raise WaveBreakingError(
            f"y_xi={low:.3g} below {delta_break:.3g} at t={state.time:.6g}"
        )


def eval_qtilde(state, params, kink_correction=True):
    """
    Q~ = 1/2 (int_{eta<xi} - int_{eta>xi}) exp(-|y(xi) - y(eta)|) F deta
    """
    check_state(state)
    op = LagrangianOperator(state.grid, params, kink_correction)
    qtilde, _, _ = op.kernel_terms(
        state.velocities, state.slopes, state.positions, state.y_xi
    )
    return qtilde


def eval_P(state, params, kink_correction=True):
    """P = 1/2 int exp(-|y(xi) - y(eta)|) F deta"""
    check_state(state)
    op = LagrangianOperator(state.grid, params, kink_correction)
    _, p, _ = op.kernel_terms(
        state.velocities, state.slopes, state.positions, state.y_xi
    )
    return p


def eval_qtilde_xi(state, params, kink_correction=True):
    """
    Q~_xi = (-h(U) + U^2 - P) y_xi + V^2 / (2 y_xi)
    """
    check_state(state)
    op = LagrangianOperator(state.grid, params, kink_correction)
    U, V, y_xi = state.velocities, state.slopes, state.y_xi
    _, p, _ = op.kernel_terms(U, V, state.positions, y_xi)
    return op.qtilde_xi(U, V, y_xi, p)


def lagrangian_rhs(state, params, kink_correction=True):
    """
    y_t = U + Gamma, U_t = Q~ - lambda U, V_t = Q~_xi - lambda V,
    zeta_t = U, zeta_xi_t = V

    :return: LagrangianRates
    """
    check_state(state)
    op = LagrangianOperator(state.grid, params, kink_correction)
    rates = np.split(op(state.time, state.pack()), 5)
    return LagrangianRates(*rates)


def lagrangian_h1_norm(state):
    """(int U^2 y_xi + V^2 / y_xi dxi)^(1/2)"""
    y_xi = state.y_xi
    total = state.grid.spacing * np.sum(
        state.velocities ** 2 * y_xi + state.slopes ** 2 / y_xi
    )
    return math.sqrt(float(total))


def to_eulerian(state, grid=None):
    """
    monotone cubic interpolation of (y_i, U_i), extended periodically,
    sampled at the grid nodes

    :return: Field
    """
    grid = grid or state.grid
    L = grid.length
    y = state.positions
    xs = np.concatenate((y - L, y, y + L))
    if not np.all(np.diff(xs) > 0):
        raise WaveBreakingError(
            f"positions not increasing at t={state.time:.6g}, "
            f"cannot map back to the grid"
        )
    interp = PchipInterpolator(xs, np.tile(state.velocities, 3))
    nodes = grid.nodes
    # positions drift by Gamma t; fold nodes into the period they cover
    center = 0.5 * (y[0] + y[-1])
    shift = np.round((nodes - center) / L) * L
    return Field(grid, interp(nodes - shift), state.time)


class LagrangianMonitor:
    """
    fills a TrajectoryRecord from accepted particle states and remembers
    the last valid one
    """

    def __init__(self, grid, labels, cfg, delta_break):
        self.grid = grid
        self.labels = labels
        self.cfg = cfg
        self.delta_break = delta_break
        self.record = TrajectoryRecord(moment_n=int(cfg.moment_n))
        self.last_valid = None

    def _state(self, t, vector):
        return LagrangianState.unpack(self.grid, self.labels, t, vector)

    def _valid(self, state):
        return bool(
            np.all(np.diff(state.positions) > 0)
            and np.min(state.y_xi) >= self.delta_break
        )

    def observe(self, t, vector):
        cfg = self.cfg
        state = self._state(t, vector)
        if not self._valid(state):
            LOG.l(f"characteristics collide at t={t:.6g}")
            self.record.detected_by = "characteristics"
            return Termination.BLOWUP_DETECTED
        self.last_valid = state
        y_xi = state.y_xi
        ux = state.slopes / y_xi
        n = int(cfg.moment_n)
        u = to_eulerian(state)
        b_norm = math.nan
        if cfg.besov_index is not None:
            b_norm = besov_norm(u, cfg.besov_index)
        min_slope = float(np.min(ux))
        self.record.append(
            t,
            h1=lagrangian_h1_norm(state),
            min_slope=min_slope,
            linf=float(np.max(np.abs(ux))),
            b0=b0_inf_seminorm(spectral_derivative(u)),
            f_n=float(
                self.grid.spacing
                * np.sum(state.slopes ** (2 * n + 1) / y_xi ** (2 * n))
            ),
            h2=norm_h_s(u, 2.0),
            b_norm=b_norm,
        )
        if cfg.keep_states:
            self.record.states.append(u.values)
        if -min_slope > cfg.blowup_slope_threshold:
            self.record.detected_by = "slope_threshold"
            return Termination.BLOWUP_DETECTED
        return None

    def snapshot(self, t, vector):
        state = self._state(t, vector)
        if not self._valid(state):
            return
        self.record.snapshots.append(
            (
                float(t),
                {
                    "x": self.grid.nodes,
                    "u": to_eulerian(state).values,
                    "xi": state.labels,
                    "y": state.positions.copy(),
                    "U": state.velocities.copy(),
                    "V": state.slopes.copy(),
                },
            )
        )


def integrate_lagrangian(
    state0, params, cfg, delta_break=DELTA_BREAK, kink_correction=True
):
    """
    adaptive RK45 run of the characteristic system; stops with
    BlowupDetected when characteristics collide, y_xi < delta_break or
    the slope threshold is crossed

    :param state0: LagrangianState
    :param params: ModelParams
    :param cfg: TimeStepperConfig
    :return: (last valid LagrangianState, TrajectoryRecord)
    """
    check_state(state0, delta_break)
    grid = state0.grid
    LOG.l(
        f"lagrangian run N={grid.n_points} L={grid.length} "
        f"t_end={cfg.t_end} rtol={cfg.rtol}"
    )
    monitor = LagrangianMonitor(grid, state0.labels, cfg, delta_break)
    stepper = AdaptiveStepper(
        LagrangianOperator(grid, params, kink_correction),
        cfg,
        monitor,
        "LagrangianSolver",
    )
    t, vector, termination, n_steps, n_rejected = stepper.run(state0.pack())
    final = monitor.last_valid
    if final is None:
        final = LagrangianState.unpack(grid, state0.labels, 0.0, vector)
    record = monitor.record.close(
        termination, final.time, n_steps, n_rejected
    )
    state = LagrangianState.unpack(
        grid, state0.labels, state0.time + final.time, final.pack()
    )
    return state, record
