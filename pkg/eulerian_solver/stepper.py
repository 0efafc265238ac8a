#!/usr/bin/env python
"""
adaptive and fixed-step time stepping shared by the Eulerian and
Lagrangian solvers, plus the trajectory record both of them fill
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import RK45
from cocore.Logger import Logger

LOG = Logger()

RECORD_COLUMNS = (
    "times",
    "h1_norms",
    "min_slope",
    "linf_slopes",
    "b0_slopes",
    "integral_linf",
    "integral_b0",
    "moments_f_n",
    "h2_norms",
    "b_norms",
    "b1_norms",
    "log_ratio",
)


class Termination(Enum):
    COMPLETED = "Completed"
    BLOWUP_DETECTED = "BlowupDetected"
    STEP_UNDERFLOW = "StepUnderflow"


@dataclass(frozen=True)
class TimeStepperConfig:
    """
    tolerances, horizon and blow-up threshold of one run
    """

    t_end: float = 1.0
    rtol: float = 1e-9
    atol: float = 1e-12
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    blowup_slope_threshold: float = 1e6
    moment_n: int = 1
    snapshot_every: float = 0.0
    besov_index: object = None
    max_steps: int = 1000000
    keep_states: bool = False
    resolution_tol: float = 1e-12
    track_b1: bool = False

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"time.t_end must be > 0, got {self.t_end}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError(
                f"time.rtol and time.atol must be > 0, got "
                f"{self.rtol}, {self.atol}"
            )
        if not 0 < self.dt_min <= self.dt_init:
            raise ValueError(
                f"time.dt_min must satisfy 0 < dt_min <= dt_init, got "
                f"dt_min={self.dt_min}, dt_init={self.dt_init}"
            )
        if not self.blowup_slope_threshold > 0:
            raise ValueError("time.blowup_slope_threshold must be > 0")
        if int(self.moment_n) != self.moment_n or self.moment_n < 1:
            raise ValueError(
                f"time.moment_n must be an integer >= 1, got {self.moment_n}"
            )
        if self.snapshot_every < 0:
            raise ValueError("output.snapshot_every must be >= 0")
        if self.max_steps < 1:
            raise ValueError("time.max_steps must be >= 1")
        if not 0 < self.resolution_tol < 1:
            raise ValueError(
                f"time.resolution_tol must lie in (0, 1), got "
                f"{self.resolution_tol}"
            )


@dataclass
class TrajectoryRecord:
    """
    monitors sampled at t = 0 and after every accepted step; columns are
    lists while a run is live and numpy arrays once it is closed
    """

    moment_n: int = 1
    times: list = field(default_factory=list)
    h1_norms: list = field(default_factory=list)
    min_slope: list = field(default_factory=list)
    linf_slopes: list = field(default_factory=list)
    b0_slopes: list = field(default_factory=list)
    integral_linf: list = field(default_factory=list)
    integral_b0: list = field(default_factory=list)
    moments_f_n: list = field(default_factory=list)
    h2_norms: list = field(default_factory=list)
    b_norms: list = field(default_factory=list)
    b1_norms: list = field(default_factory=list)
    log_ratio: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    states: list = field(default_factory=list)
    terminated: Termination = None
    n_steps: int = 0
    n_rejected: int = 0
    t_final: float = 0.0
    detected_by: str = None

    def append(
        self,
        t,
        h1,
        min_slope,
        linf,
        b0,
        f_n,
        h2,
        b_norm=math.nan,
        b1_norm=math.nan,
    ):
        """
        adds one sample; the running integrals use the trapezoid rule
        """
        if self.times:
            dt = t - self.times[-1]
            i_linf = self.integral_linf[-1] + 0.5 * dt * (
                self.linf_slopes[-1] + linf
            )
            i_b0 = self.integral_b0[-1] + 0.5 * dt * (self.b0_slopes[-1] + b0)
        else:
            i_linf = 0.0
            i_b0 = 0.0
        self.times.append(float(t))
        self.h1_norms.append(float(h1))
        self.min_slope.append(float(min_slope))
        self.linf_slopes.append(float(linf))
        self.b0_slopes.append(float(b0))
        self.integral_linf.append(i_linf)
        self.integral_b0.append(i_b0)
        self.moments_f_n.append(float(f_n))
        self.h2_norms.append(float(h2))
        self.b_norms.append(float(b_norm))
        self.b1_norms.append(float(b1_norm))
        self.log_ratio.append(
            float(linf / (b0 * math.log(2.0 + h2) + 1.0))
        )

    def close(self, terminated, t_final, n_steps, n_rejected):
        for name in RECORD_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.terminated = terminated
        self.t_final = float(t_final)
        self.n_steps = int(n_steps)
        self.n_rejected = int(n_rejected)
        return self

    @property
    def final_integral_linf(self):
        return float(self.integral_linf[-1])

    @property
    def final_integral_b0(self):
        return float(self.integral_b0[-1])

    @property
    def blowup_time_estimate(self):
        """
        wave-breaking time extrapolated from the steepening tail: near
        breaking 1/min u_x is close to linear in t, so a line through the
        samples with min u_x at most half the final one is continued to
        zero. nan when the slope is not steepening
        """
        slopes = np.asarray(self.min_slope, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if len(slopes) < 3 or not slopes[-1] < 0:
            return math.nan
        tail = np.flatnonzero(slopes <= 0.5 * slopes[-1])
        if len(tail) < 3:
            tail = np.arange(len(slopes) - 3, len(slopes))
        if np.any(slopes[tail] >= 0):
            return math.nan
        a, b = np.polyfit(times[tail], 1.0 / slopes[tail], 1)
        if not a > 0:
            return math.nan
        return float(-b / a)

    def columns(self):
        """time series columns in output order"""
        columns = {
            "t": self.times,
            "H1": self.h1_norms,
            "min_ux": self.min_slope,
            "I_Linf": self.integral_linf,
            "I_B0inf": self.integral_b0,
            "f_n": self.moments_f_n,
            "B_norm": self.b_norms,
            "H2": self.h2_norms,
            "log_ratio": self.log_ratio,
        }
        if np.any(np.isfinite(self.b1_norms)):
            columns["B1_inf"] = self.b1_norms
        return columns


def snapshot_times(cfg):
    if cfg.snapshot_every <= 0:
        return []
    count = int(math.floor(cfg.t_end / cfg.snapshot_every + 1e-9))
    return [i * cfg.snapshot_every for i in range(1, count + 1)]


class AdaptiveStepper:
    """
    drives scipy's RK45 one accepted step at a time so that monitors can
    stop a run between steps

    the observer supplies observe(t, y) -> Termination or None and
    snapshot(t, y); both are called with accepted states only
    """

    def __init__(self, fun, cfg, observer, name="AdaptiveStepper"):
        self.fun = fun
        self.cfg = cfg
        self.observer = observer
        self.logger = Logger(name)

    def run(self, y0):
        """
        :param y0: initial state vector
        :return: (t, y, Termination, n_steps, n_rejected)
        """
        cfg = self.cfg
        y0 = np.asarray(y0, dtype=float)
        status = self.observer.observe(0.0, y0)
        self.observer.snapshot(0.0, y0)
        if status is not None:
            return 0.0, y0, status, 0, 0

        solver = RK45(
            self.fun,
            0.0,
            y0,
            cfg.t_end,
            rtol=cfg.rtol,
            atol=cfg.atol,
            first_step=min(cfg.dt_init, cfg.t_end),
        )
        pending = snapshot_times(cfg)
        t_last, y_last = 0.0, y0
        n_steps = 0
        termination = Termination.COMPLETED

        while solver.status == "running":
            t_old = solver.t
            message = solver.step()
            if solver.status == "failed":
                self.logger.l(f"solver failed at t={t_old:.6g}: {message}")
                termination = Termination.STEP_UNDERFLOW
                break
            if not np.all(np.isfinite(solver.y)):
                self.logger.l(f"non-finite state after t={t_old:.6g}")
                termination = Termination.STEP_UNDERFLOW
                break
            n_steps += 1
            if pending and pending[0] <= solver.t:
                dense = solver.dense_output()
                while pending and pending[0] <= solver.t:
                    ts = pending.pop(0)
                    if ts < solver.t:
                        self.observer.snapshot(ts, dense(ts))
                    elif solver.status == "running":
                        self.observer.snapshot(ts, solver.y)
            status = self.observer.observe(solver.t, solver.y)
            if status is not None:
                termination = status
                t_last, y_last = solver.t, solver.y.copy()
                break
            t_last, y_last = solver.t, solver.y.copy()
            if solver.status == "running" and solver.step_size < cfg.dt_min:
                self.logger.l(
                    f"step {solver.step_size:.3g} below dt_min at "
                    f"t={solver.t:.6g}"
                )
                termination = Termination.STEP_UNDERFLOW
                break
            if n_steps >= cfg.max_steps:
                self.logger.l(f"max_steps={cfg.max_steps} reached")
                termination = Termination.STEP_UNDERFLOW
                break

        self.observer.snapshot(t_last, y_last)
        # every RK45 attempt costs six evaluations after the initial one
        attempts = max((solver.nfev - 1) // 6, n_steps)
        n_rejected = attempts - n_steps
        self.logger.l(
            f"{termination.value} at t={t_last:.6g} after {n_steps} steps "
            f"({n_rejected} rejected)"
        )
        return t_last, y_last, termination, n_steps, n_rejected


def classical_rk4(fun, y0, dt, t_end):
    """
    fixed-step fourth order Runge-Kutta; t_end must be a whole number of
    steps
    """
    steps = int(round(t_end / dt))
    if steps < 1 or not math.isclose(steps * dt, t_end, rel_tol=1e-9):
        raise ValueError(f"dt={dt} does not divide t_end={t_end}")
    y = np.asarray(y0, dtype=float).copy()
    t = 0.0
    for _ in range(steps):
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = fun(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = fun(t + dt, y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return y
