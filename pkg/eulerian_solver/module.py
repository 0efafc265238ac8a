#!/usr/bin/env python
"""
method-of-lines pseudo-spectral solver for
u_t + (u + Gamma) u_x + lambda u = Q with blow-up monitors
"""

import math

import numpy as np
from scipy import fft as sfft
from scipy.integrate import solve_ivp
from cocore.Logger import Logger

from model_core.module import (
    Field,
    h_values,
    norm_h_s,
    padded_samples,
    spectral_derivative,
    truncate_padded,
)
from besov_lab.module import b0_inf_seminorm, b1_inf_norm, besov_norm
from eulerian_solver.stepper import (
    AdaptiveStepper,
    Termination,
    TrajectoryRecord,
    classical_rk4,
)

LOG = Logger()


class EulerianOperator:
    """
    right-hand side of the nonlocal form on a fixed grid, as a function
    of the raw sample vector
    """

    def __init__(self, grid, params):
        self.grid = grid
        self.params = params
        k = grid.wavenumbers
        self.dx = grid.derivative_multiplier(1)
        self.q_mult = self.dx / (1.0 + k ** 2)
        self.degree = max(2, params.flux_degree)

    def __call__(self, t, values):
        p = self.params
        n = self.grid.n_points
        spec = sfft.rfft(values)
        v, vx = padded_samples((spec, spec * self.dx), n, self.degree)
        advection = truncate_padded((v + p.big_gamma) * vx, n)
        source = truncate_padded(h_values(v, p) - v ** 2 - 0.5 * vx ** 2, n)
        rates = sfft.irfft(source * self.q_mult - advection, n=n)
        return rates - p.lambda_d * values


def eulerian_rhs(u, params):
    """
    -(u + Gamma) u_x - lambda u + Q(u), products dealiased

    :param u: Field
    :param params: ModelParams
    :return: Field of time derivatives
    """
    return u.with_values(EulerianOperator(u.grid, params)(u.time, u.values))


def moment(ux_values, spacing, n):
    """f_n = integral of u_x^(2n+1)"""
    return float(spacing * np.sum(ux_values ** (2 * n + 1)))


class EulerianMonitor:
    """
    fills a TrajectoryRecord from accepted Eulerian states

    besides the slope threshold the monitor watches the share of the
    H1-weighted spectrum above two thirds of the grid cutoff; once it
    passes cfg.resolution_tol the grid can no longer follow the front. A
    slope that is still steepening at that point is reported as breaking,
    anything else as StepUnderflow
    """

    def __init__(self, grid, cfg):
        self.grid = grid
        self.cfg = cfg
        self.record = TrajectoryRecord(moment_n=int(cfg.moment_n))
        k = grid.wavenumbers
        self.k_squared = k ** 2
        self.tail = k > (2.0 / 3.0) * k[-1]
        self.steepest = math.inf
        self.initial_slope = None

    def tail_fraction(self, values):
        weighted = self.k_squared * np.abs(sfft.rfft(values)) ** 2
        total = float(np.sum(weighted))
        if total == 0.0:
            return 0.0
        return float(np.sum(weighted[self.tail])) / total

    def _stop(self, how, status, t, detail):
        self.record.detected_by = how
        LOG.l(f"{status.value} by {how} at t={t:.6g}: {detail}")
        return status

    def observe(self, t, values):
        cfg = self.cfg
        u = Field(self.grid, values, t)
        ux = spectral_derivative(u)
        min_slope = float(np.min(ux.values))
        if self.initial_slope is None:
            self.initial_slope = min_slope
        self.steepest = min(self.steepest, min_slope)
        b_norm = math.nan
        if cfg.besov_index is not None:
            b_norm = besov_norm(u, cfg.besov_index)
        b1_norm = b1_inf_norm(u) if cfg.track_b1 else math.nan
        self.record.append(
            t,
            h1=norm_h_s(u, 1.0),
            min_slope=min_slope,
            linf=float(np.max(np.abs(ux.values))),
            b0=b0_inf_seminorm(ux),
            f_n=moment(ux.values, self.grid.spacing, cfg.moment_n),
            h2=norm_h_s(u, 2.0),
            b_norm=b_norm,
            b1_norm=b1_norm,
        )
        if cfg.keep_states:
            self.record.states.append(np.array(values, dtype=float))
        if -min_slope > cfg.blowup_slope_threshold:
            return self._stop(
                "slope_threshold",
                Termination.BLOWUP_DETECTED,
                t,
                f"min u_x={min_slope:.6g}",
            )
        tail = self.tail_fraction(values)
        if tail > cfg.resolution_tol:
            steepening = (
                min_slope < 0
                and self.steepest < self.initial_slope
                and min_slope <= 0.9 * self.steepest
            )
            status = (
                Termination.BLOWUP_DETECTED
                if steepening
                else Termination.STEP_UNDERFLOW
            )
            return self._stop(
                "resolution",
                status,
                t,
                f"spectral tail {tail:.3g}, min u_x={min_slope:.6g}",
            )
        return None

    def snapshot(self, t, values):
        self.record.snapshots.append(
            (float(t), {"x": self.grid.nodes, "u": np.array(values)})
        )


def integrate(u0, params, cfg):
    """
    adaptive RK45 run from u0 to cfg.t_end, stopped early on slope
    threshold crossing or step underflow

    :param u0: Field
    :param params: ModelParams
    :param cfg: TimeStepperConfig
    :return: (final Field, TrajectoryRecord)
    """
    LOG.l(
        f"eulerian run N={u0.grid.n_points} L={u0.grid.length} "
        f"t_end={cfg.t_end} rtol={cfg.rtol} ({params.reduction()})"
    )
    monitor = EulerianMonitor(u0.grid, cfg)
    stepper = AdaptiveStepper(
        EulerianOperator(u0.grid, params), cfg, monitor, "EulerianSolver"
    )
    t, y, termination, n_steps, n_rejected = stepper.run(u0.values)
    record = monitor.record.close(termination, t, n_steps, n_rejected)
    return Field(u0.grid, y, u0.time + t), record


def rk4_fixed(u0, params, dt, t_end):
    """
    classical fourth order Runge-Kutta with a fixed step
    """
    y = classical_rk4(EulerianOperator(u0.grid, params), u0.values, dt, t_end)
    return Field(u0.grid, y, u0.time + t_end)


def reference_solution(u0, params, t_end, rtol=1e-12, atol=1e-14):
    """tight-tolerance DOP853 solution at t_end"""
    sol = solve_ivp(
        EulerianOperator(u0.grid, params),
        (0.0, t_end),
        u0.values,
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"reference solve failed: {sol.message}")
    return sol.y[:, -1]


def temporal_errors(u0, params, dt_list, t_end=0.4, exact=None):
    """
    max-norm errors of rk4_fixed at t_end for each step size

    :param exact: optional callable t -> sample array replacing the
        numerical reference
    :return: numpy array of errors, one per dt
    """
    if exact is not None:
        target = np.asarray(exact(t_end), dtype=float)
    else:
        target = reference_solution(u0, params, t_end)
    errors = []
    for dt in dt_list:
        approx = rk4_fixed(u0, params, dt, t_end).values
        errors.append(float(np.max(np.abs(approx - target))))
    return np.array(errors)


def temporal_order_test(u0, params, dt_list, t_end=0.4, exact=None):
    """
    slope of log(error) against log(dt) for the fixed-step integrator

    :return: measured order
    """
    if len(dt_list) < 2:
        raise ValueError("temporal_order_test needs at least two step sizes")
    errors = temporal_errors(u0, params, dt_list, t_end, exact)
    if np.any(errors <= 0):
        raise ValueError(f"errors hit round-off, use larger dt: {errors}")
    order = float(np.polyfit(np.log(dt_list), np.log(errors), 1)[0])
    LOG.l(f"temporal order {order:.3f} from errors {errors.tolist()}")
    return order
