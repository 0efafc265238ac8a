#!/usr/bin/env python
"""
experiments that hold the solvers against the analytic statements about
the equation: H1 decay, small-data global runs, blow-up criteria,
lifespan bounds and norm inflation
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad
from cocore.Logger import Logger

from model_core.module import (
    BesovIndex,
    Field,
    ModelParams,
    norm_h_s,
    spectral_derivative,
    spectral_eval,
)
from besov_lab.module import b1_inf_norm, besov_norm, make_illposed_datum
from eulerian_solver.module import integrate, moment
from eulerian_solver.stepper import Termination, TimeStepperConfig

LOG = Logger()

SAFETY_FACTOR = 2.0


class DegenerateFamilyError(ValueError):
    """
    raised when no member of a family gives a defined
    Gagliardo-Nirenberg ratio
    """


class AdmissibilityError(ValueError):
    """
    raised for eta outside (0, eta_0]
    """


def _config(cfg, t_end, **overrides):
    cfg = cfg or TimeStepperConfig(t_end=t_end)
    return replace(cfg, t_end=t_end, **overrides)


@dataclass
class DecayReport:
    max_relative_deviation: float
    truncated: bool
    status: Termination
    record: object = field(default=None, repr=False)


def decay_experiment(u0, params, t_end, cfg=None):
    """
    max over recorded times of |e^(lambda t) ||u(t)||_H1 / ||u0||_H1 - 1|

    :param u0: Field
    :param params: ModelParams
    :param t_end: horizon
    :param cfg: optional TimeStepperConfig, its t_end is replaced
    :return: DecayReport; truncated is set when the run stopped early
    """
    _, record = integrate(u0, params, _config(cfg, t_end))
    h0 = record.h1_norms[0]
    if h0 == 0:
        deviation = 0.0
    else:
        scaled = record.h1_norms * np.exp(params.lambda_d * record.times)
        deviation = float(np.max(np.abs(scaled / h0 - 1.0)))
    truncated = record.terminated is not Termination.COMPLETED
    if truncated:
        LOG.l(
            f"decay run stopped at t={record.t_final:.6g} "
            f"({record.terminated.value}); deviation covers [0, t_final]"
        )
    LOG.l(f"max relative H1 deviation {deviation:.3e}")
    return DecayReport(deviation, truncated, record.terminated, record)


def small_data_functional(b_norm, params):
    """
    |alpha| + |Gamma| + ||u|| + |beta|/3 ||u||^2 + |gamma|/4 ||u||^3
    """
    return (
        abs(params.alpha)
        + abs(params.big_gamma)
        + b_norm
        + abs(params.beta) / 3.0 * b_norm ** 2
        + abs(params.gamma_c) / 4.0 * b_norm ** 3
    )


@dataclass
class SmallDataReport:
    H0: float
    H_trace: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    bounded: bool
    eps_implied: float
    status: Termination


def small_data_experiment(
    u0, params, idx=None, t_end=50.0, cfg=None, tol=0.05
):
    """
    evolves u0 and checks H(t) <= (1 + tol) H0 with the Besov norm at
    idx, by default (3/2, 2, 1)

    :return: SmallDataReport; bounded also requires a Completed run
    """
    idx = idx or BesovIndex.critical()
    _, record = integrate(u0, params, _config(cfg, t_end, besov_index=idx))
    trace = small_data_functional(record.b_norms, params)
    h0 = float(trace[0])
    bounded = bool(
        record.terminated is Termination.COMPLETED
        and np.max(trace) <= h0 * (1.0 + tol)
    )
    eps = h0 / params.lambda_d if params.lambda_d > 0 else math.inf
    LOG.l(
        f"small data run: H0={h0:.6g} max H={np.max(trace):.6g} "
        f"bounded={bounded} ({record.terminated.value})"
    )
    return SmallDataReport(
        h0, trace, record.times, bounded, eps, record.terminated
    )


def locate_small_data_threshold(
    profile,
    grid,
    params,
    idx=None,
    t_end=50.0,
    lo=0.0,
    hi=1.0,
    iterations=8,
    cfg=None,
    tol=0.05,
):
    """
    bisection on the amplitude a of a * profile(x) between a bounded lo
    and an unbounded hi

    :return: the largest amplitude found bounded
    """
    shape = np.asarray(profile(grid.nodes), dtype=float)

    def bounded(amp):
        report = small_data_experiment(
            Field(grid, amp * shape), params, idx, t_end, cfg, tol
        )
        return report.bounded

    if bounded(hi):
        LOG.l(f"amplitude {hi} already bounded, no threshold below it")
        return hi
    if lo > 0 and not bounded(lo):
        raise ValueError(f"lower amplitude {lo} is not bounded")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if bounded(mid):
            lo = mid
        else:
            hi = mid
        LOG.l(f"threshold bracket [{lo:.6g}, {hi:.6g}]", 10)
    LOG.l(f"empirical small-data threshold a*={lo:.6g}")
    return lo


def gn_ratio(u, n):
    """
    |int u_x^(2n+1)|^(2n/(2n-1)) /
    ((int u_x^2)^(1/(2n-1)) int u_x^(2n+2)), None when undefined
    """
    ux = spectral_derivative(u).values
    h = u.grid.spacing
    odd = h * np.sum(ux ** (2 * n + 1))
    square = h * np.sum(ux ** 2)
    even = h * np.sum(ux ** (2 * n + 2))
    if not (square > 1e-300 and even > 1e-300):
        return None
    ratio = abs(odd) ** (2.0 * n / (2 * n - 1)) / (
        square ** (1.0 / (2 * n - 1)) * even
    )
    return float(ratio) if math.isfinite(ratio) else None


def gn_constant_estimate(n, family):
    """
    largest Gagliardo-Nirenberg ratio over a family of fields

    :param n: moment index >= 1
    :param family: iterable of Field
    :return: c_est
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n}")
    ratios = [r for r in (gn_ratio(u, int(n)) for u in family) if r]
    if not ratios:
        raise DegenerateFamilyError(
            f"no field in the family gives a defined nonzero ratio for n={n}"
        )
    c_est = max(ratios)
    LOG.l(f"GN constant estimate n={n}: {c_est:.6g} over {len(ratios)}")
    return c_est


@dataclass
class LifespanBound:
    n: int
    c_gn: float
    C1: float
    C2: float
    C3: float
    K1_2: float
    K2: float
    f0: float
    h1_norm: float
    threshold: float
    condition_met: bool
    bound_T: float
    bound_T_raw: float
    bound_T_4c: float


def lifespan_constants(params, h1, n, c):
    """
    (C1, C2, C3, K1^2, K^2) of the moment blow-up theorem for
    ||u0||_H1 = h1 and Gagliardo-Nirenberg constant c
    """
    a, g = abs(params.alpha), abs(params.big_gamma)
    b, q = abs(params.beta), abs(params.gamma_c)
    lam = params.lambda_d
    root2 = math.sqrt(2.0)
    C1 = 2.0 * (a + g) * h1 ** (n + 1) / root2 ** (n - 1) + b * (
        h1 ** (3 * (n + 1)) + h1 ** (3 * n + 5)
    ) / (3.0 * root2 ** (3 * n + 1))
    C3 = q * h1 ** (4 * n + 4) / 2.0 ** (2 * (n + 1)) + h1 ** (
        2 * (n + 1)
    ) / 2.0 ** n
    C2 = a + g + b / 3.0 + q / 4.0 + 0.5
    K1_2 = (
        (2 * n + 1)
        * (C1 + C3)
        / (n + 1)
        * (8.0 * n * (2 * n + 1) * C2 / ((2 * n - 1) * (n + 1))) ** n
    )
    inner = 4.0 * c * lam * (n + 1) * h1 ** (2.0 / (2 * n - 1))
    K2 = K1_2 + lam * (n + 1) * inner ** (2 * n - 1) / (2.0 * n ** (2 * n))
    return C1, C2, C3, K1_2, K2


def lifespan_integral(f0, h1, n, c, K2, denominator=8.0):
    """
    int_{-f0}^inf dy / ((2n-1)/(denominator c) h1^(-2/(2n-1)) y^q - K2),
    infinite when the integrand is not positive at the lower limit
    """
    q = 2.0 * n / (2 * n - 1)
    coeff = (2 * n - 1) / (denominator * c) * h1 ** (-2.0 / (2 * n - 1))
    start = -f0
    if not (start > 0 and coeff * start ** q > K2):
        return math.inf
    value, _ = quad(lambda y: 1.0 / (coeff * y ** q - K2), start, math.inf)
    return float(value)


def lifespan_bound(u0, params, n, c_est, safety=SAFETY_FACTOR):
    """
    blow-up condition and lifespan bound from the moment
    f(t) = int u_x^(2n+1) dx, with c = safety * c_est

    :return: LifespanBound; bound_T is +inf when the condition fails
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n}")
    n = int(n)
    h1 = norm_h_s(u0, 1.0)
    ux = spectral_derivative(u0).values
    f0 = moment(ux, u0.grid.spacing, n)
    c = safety * c_est
    C1, C2, C3, K1_2, K2 = lifespan_constants(params, h1, n, c)
    if h1 == 0:
        threshold = 0.0
        met = False
    else:
        threshold = -(
            (8.0 * c * K2 * h1 ** (2.0 / (2 * n - 1)) / (2 * n - 1))
            ** ((2 * n - 1) / (2.0 * n))
        )
        met = bool(f0 < threshold)
    bound = bound_raw = bound_4c = math.inf
    if met:
        bound = lifespan_integral(f0, h1, n, c, K2, 8.0)
        bound_4c = lifespan_integral(f0, h1, n, c, K2, 4.0)
        raw_K2 = lifespan_constants(params, h1, n, c_est)[4]
        bound_raw = lifespan_integral(f0, h1, n, c_est, raw_K2, 8.0)
        # the integral from f(0) itself passes the pole at |y| = -threshold
        LOG.l(
            f"lifespan integral from f(0) instead of -f(0) is not finite "
            f"(pole at |y|={-threshold:.6g})",
            10,
        )
    LOG.l(
        f"lifespan n={n}: f0={f0:.6g} threshold={threshold:.6g} "
        f"met={met} T<={bound:.6g} (raw {bound_raw:.6g}, 4c {bound_4c:.6g})"
    )
    return LifespanBound(
        n,
        c,
        C1,
        C2,
        C3,
        K1_2,
        K2,
        f0,
        h1,
        threshold,
        met,
        bound,
        bound_raw,
        bound_4c,
    )


@dataclass
class AdmissibilityReport:
    eta: float
    eta0: float
    kappa: float
    x0: float
    slope: float
    h1_norm: float
    f0: float
    condition_met: bool
    interval: tuple = None

    @property
    def empty(self):
        return self.interval is None


def eta_lambda_admissibility(u0, eta, x0=None, params=None, f0=None):
    """
    slope condition eta u0_x(x0) < min(-||u0||^(1/2), -||u0||^2) and the
    dissipation interval (0, -(f0/4)(eta^2 s^2 + min(||u0||, ||u0||^4))
    / (eta^2 s^2)) under which the solution breaks

    :param x0: evaluation point, the steepest node when None
    :param f0: f(0), min of u0_x when None
    :return: AdmissibilityReport, interval None when not admissible
    """
    params = params or ModelParams()
    eta0 = params.eta_ceiling
    if not 0 < eta <= eta0:
        raise AdmissibilityError(
            f"eta={eta} outside (0, eta_0={eta0:.6g}] for "
            f"kappa={params.kappa:.6g}"
        )
    ux = spectral_derivative(u0).values
    if x0 is None:
        x0 = float(u0.grid.nodes[int(np.argmin(ux))])
    if f0 is None:
        f0 = float(np.min(ux))
    slope = spectral_eval(u0, x0, 1)
    h1 = norm_h_s(u0, 1.0)
    met = bool(eta * slope < min(-math.sqrt(h1), -(h1 ** 2)))
    interval = None
    if met:
        e2s2 = eta ** 2 * slope ** 2
        upper = -(f0 / 4.0) * (e2s2 + min(h1, h1 ** 4)) / e2s2
        if upper > 0:
            interval = (0.0, float(upper))
    LOG.l(
        f"admissibility eta={eta} x0={x0:.6g} slope={slope:.6g} "
        f"met={met} interval={interval}"
    )
    return AdmissibilityReport(
        eta,
        eta0,
        params.kappa,
        x0,
        slope,
        h1,
        f0,
        met,
        interval,
    )


def moment_tracker(record, n, grid):
    """
    f(t) = h sum (u_x)_i^(2n+1) at every stored field of a trajectory;
    uses record.states when kept, otherwise the snapshots
    """
    if len(record.states):
        fields = list(record.states)
    elif record.snapshots:
        fields = [columns["u"] for _, columns in record.snapshots]
    else:
        raise ValueError(
            "trajectory holds no fields, run with keep_states=True"
        )
    return np.array(
        [
            moment(spectral_derivative(Field(grid, v)).values, grid.spacing, n)
            for v in fields
        ]
    )


def criterion_growth_exponent(record):
    """
    sup_t ln(||u(t)||_B / ||u0||_B) / int_0^t ||u_x||_inf, the exponent of
    the Gronwall bound behind the blow-up criterion
    """
    b = np.asarray(record.b_norms, dtype=float)
    if b.size == 0 or np.any(np.isnan(b)):
        raise ValueError("trajectory carries no Besov norms")
    integral = np.asarray(record.integral_linf)
    mask = (integral > 0) & (b > 0)
    if b[0] <= 0 or not np.any(mask):
        return 0.0
    return float(np.max(np.log(b[mask] / b[0]) / integral[mask]))


@dataclass
class InflationReport:
    target_eps: float
    initial_norm: float
    initial_b1: float
    final_b1: float
    inflation_ratio: float
    peak_b1: float
    peak_ratio: float
    t_final: float
    lifespan_below_eps: bool
    status: Termination
    record: object = field(default=None, repr=False)


def inflation_experiment(spec, params, grid, idx=None, cfg=None):
    """
    evolves the dyadic datum until breaking or cfg.t_end and compares
    ||u||_{B^1_{inf,inf}} at the end, and its largest value along the
    run, with the initial one; the per-step trace is the B1_inf column
    of the record

    :param spec: IllposedDatumSpec
    :param idx: index of the recorded Besov norm, spec.index when None
    :return: InflationReport
    """
    idx = idx or spec.index
    u0 = make_illposed_datum(spec, grid)
    cfg = cfg or TimeStepperConfig(t_end=1.0)
    u, record = integrate(
        u0, params, replace(cfg, besov_index=idx, track_b1=True)
    )
    initial = besov_norm(u0, spec.index)
    b1_start = b1_inf_norm(u0)
    b1_end = b1_inf_norm(u)
    b1_peak = float(np.max(record.b1_norms))
    ratio = b1_end / b1_start if b1_start > 0 else math.nan
    peak_ratio = b1_peak / b1_start if b1_start > 0 else math.nan
    below = bool(
        record.terminated is Termination.BLOWUP_DETECTED
        and record.t_final < spec.target_eps
    )
    LOG.l(
        f"inflation: ||u0||={initial:.6g} (eps={spec.target_eps}) "
        f"B1 ratio={ratio:.4g} (peak {peak_ratio:.4g}) "
        f"at t={record.t_final:.6g} "
        f"({record.terminated.value})"
    )
    return InflationReport(
        spec.target_eps,
        initial,
        b1_start,
        b1_end,
        ratio,
        b1_peak,
        peak_ratio,
        record.t_final,
        below,
        record.terminated,
        record,
    )
