#!/usr/bin/env python
"""
module holding the model parameters, periodic grids, sampled fields and the
spectral operators of the weakly dissipative generalized Camassa-Holm
equation

    u_t + (u + Gamma) u_x + lambda u = Q,
    Q = (1 - d_xx)^-1 d_x (h(u) - u^2 - u_x^2 / 2),
    h(u) = (alpha + Gamma) u + beta/3 u^3 + gamma/4 u^4
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from cocore.Logger import Logger

LOG = Logger()

PRESETS = {
    "ch": dict(alpha=0.0, beta=0.0, gamma_c=0.0, big_gamma=0.0),
    "wdch": dict(alpha=0.0, beta=0.0, gamma_c=0.0, big_gamma=0.0),
    "dgh": dict(alpha=1.0, beta=0.0, gamma_c=0.0, big_gamma=0.0),
    "wdgh": dict(alpha=1.0, beta=0.0, gamma_c=0.0, big_gamma=2.0),
    "full": dict(alpha=1.0, beta=3.0, gamma_c=4.0, big_gamma=2.0),
}


class InvalidFieldError(ValueError):
    """
    raised for non-finite samples, mismatched grids or invalid grid sizes
    """


@dataclass(frozen=True)
class ModelParams:
    """
    real coefficients (alpha, beta, gamma, Gamma, lambda) of the equation
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma_c: float = 0.0
    big_gamma: float = 0.0
    lambda_d: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma_c", "big_gamma", "lambda_d"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"model.{name} must be finite, got {value}")
        if self.lambda_d < 0:
            raise ValueError(
                f"model.lambda must be >= 0, got {self.lambda_d}"
            )
        if self.lambda_d == 0:
            LOG.l("lambda = 0: running in conservative mode", 10)

    @classmethod
    def preset(cls, name, lambda_d=None):
        """
        parameter sets of the reductions of the equation

        :param name: one of ch, wdch, dgh, wdgh, full
        :param lambda_d: dissipation, defaults to 0 for ch/dgh and 0.5
            for the dissipative families
        :return: ModelParams
        """
        if name not in PRESETS:
            raise ValueError(
                f"unknown preset {name}, expected one of {sorted(PRESETS)}"
            )
        if lambda_d is None:
            lambda_d = 0.0 if name in ("ch", "dgh") else 0.5
        return cls(lambda_d=lambda_d, **PRESETS[name])

    @property
    def conservative(self):
        return self.lambda_d == 0

    @property
    def flux_degree(self):
        """polynomial degree of the source h(u) - u^2 - u_x^2 / 2"""
        if self.gamma_c != 0:
            return 4
        if self.beta != 0:
            return 3
        return 2

    @property
    def kappa(self):
        return max(
            abs(self.alpha),
            abs(self.beta) / 3.0,
            abs(self.gamma_c) / 4.0,
            abs(self.big_gamma),
        )

    @property
    def eta_ceiling(self):
        """eta_0 = sqrt(2 / (1 + 12 kappa))"""
        return math.sqrt(2.0 / (1.0 + 12.0 * self.kappa))

    def reduction(self):
        """
        name of the classical equation this parameter set reduces to
        """
        a, b, g, big, lam = (
            self.alpha,
            self.beta,
            self.gamma_c,
            self.big_gamma,
            self.lambda_d,
        )
        if a == b == g == big == 0:
            return "ch" if lam == 0 else "wdch"
        if lam == b == big == 0 and a != 0:
            return "dgh"
        if b == g == 0 and lam > 0 and a * big != 0:
            return "wdgh"
        return "general"


@dataclass(frozen=True)
class PeriodicGrid:
    """
    uniform grid x_i = -L/2 + i h, i = 0..N-1, on one period of length L
    """

    length: float = 80.0
    n_points: int = 2048

    def __post_init__(self):
        n = self.n_points
        if not self.length > 0:
            raise InvalidFieldError(f"grid.L must be > 0, got {self.length}")
        if n < 16:
            raise InvalidFieldError(f"grid.N must be >= 16, got {n}")
        if n & (n - 1):
            raise InvalidFieldError(
                f"grid.N must be a power of two, got {n}"
            )

    @property
    def spacing(self):
        return self.length / self.n_points

    @property
    def nodes(self):
        return -0.5 * self.length + self.spacing * np.arange(self.n_points)

    @property
    def wavenumbers(self):
        """non-negative wavenumbers k_m = 2 pi m / L of the real FFT"""
        return 2.0 * np.pi * np.arange(self.n_points // 2 + 1) / self.length

    @property
    def k_max(self):
        return np.pi * self.n_points / self.length

    def derivative_multiplier(self, order=1):
        """
        Fourier symbol (ik)^order; the Nyquist mode is dropped for odd
        orders so that real fields stay real
        """
        mult = (1j * self.wavenumbers) ** order
        if order % 2:
            mult[-1] = 0.0
        return mult


@dataclass(frozen=True, eq=False)
class Field:
    """
    samples u(t, x_i) of a periodic function on a PeriodicGrid
    """

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise InvalidFieldError(
                f"field has shape {values.shape}, grid expects "
                f"({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidFieldError(
                f"field at t={self.time} holds non-finite samples"
            )
        if self.time < 0:
            raise InvalidFieldError(f"field time must be >= 0: {self.time}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, fn, time=0.0):
        return cls(grid, fn(grid.nodes), time)

    @classmethod
    def zeros(cls, grid, time=0.0):
        return cls(grid, np.zeros(grid.n_points), time)

    def with_values(self, values, time=None):
        return Field(self.grid, values, self.time if time is None else time)

    def spectrum(self):
        return sfft.rfft(self.values)

    def integral(self):
        return self.grid.spacing * float(np.sum(self.values))


@dataclass(frozen=True)
class BesovIndex:
    """
    regularity s and integrability indices p, r of B^s_{p,r};
    infinity is math.inf
    """

    s: float
    p: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError(f"besov s must be finite, got {self.s}")
        if not self.p >= 1 or not self.r >= 1:
            raise ValueError(
                f"besov p and r must be >= 1, got p={self.p}, r={self.r}"
            )

    @classmethod
    def critical(cls, p=2.0, r=1.0):
        """the critical index s = 1 + 1/p"""
        return cls(1.0 + 1.0 / p, p, r)

    @property
    def p_conjugate(self):
        if self.p == 1:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)


def _check_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise InvalidFieldError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


def padded_size(n_points, degree):
    """
    number of points that resolves a degree-d product of n_points-mode
    data without aliasing into the retained modes
    """
    m = n_points * (degree + 1) // 2
    return m + (m % 2)


def dealiased_evaluate(expression, spectra, n_points, degree):
    """
    evaluates a pointwise polynomial expression on a zero-padded grid and
    truncates the result back to the n_points grid

    :param expression: callable taking the padded sample arrays
    :param spectra: real-FFT spectra (length n_points // 2 + 1)
    :param n_points: size of the unpadded grid
    :param degree: polynomial degree of expression
    :return: real-FFT spectrum of the dealiased result
    """
    samples = padded_samples(spectra, n_points, degree)
    return truncate_padded(expression(*samples), n_points)


def padded_samples(spectra, n_points, degree):
    """
    samples of each spectrum on the padded grid of padded_size points;
    the Nyquist mode is dropped
    """
    half = n_points // 2
    m = padded_size(n_points, degree)
    samples = []
    for spec in spectra:
        padded = np.zeros(m // 2 + 1, dtype=complex)
        padded[:half] = spec[:half] * (m / n_points)
        samples.append(sfft.irfft(padded, n=m))
    return samples


def truncate_padded(values, n_points):
    """real-FFT spectrum of padded samples, cut back to n_points modes"""
    half = n_points // 2
    m = len(values)
    product = sfft.rfft(values)
    out = np.zeros(half + 1, dtype=complex)
    out[:half] = product[:half] * (n_points / m)
    return out


def h_values(u, params):
    return (
        (params.alpha + params.big_gamma) * u
        + params.beta / 3.0 * u ** 3
        + params.gamma_c / 4.0 * u ** 4
    )


def eval_h(u, params):
    """
    nonlinear flux h(u) = (alpha + Gamma) u + beta/3 u^3 + gamma/4 u^4
    """
    return u.with_values(h_values(u.values, params))


def spectral_derivative(u, order=1):
    """
    derivative of the given order via the multiplier (ik)^order
    """
    if int(order) != order or order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    mult = u.grid.derivative_multiplier(int(order))
    return u.with_values(sfft.irfft(u.spectrum() * mult, n=u.grid.n_points))


def helmholtz_inverse(f):
    """
    periodic solution g of (1 - d_xx) g = f
    """
    k = f.grid.wavenumbers
    return f.with_values(
        sfft.irfft(f.spectrum() / (1.0 + k ** 2), n=f.grid.n_points)
    )


def helmholtz(g):
    """(1 - d_xx) g"""
    k = g.grid.wavenumbers
    return g.with_values(
        sfft.irfft(g.spectrum() * (1.0 + k ** 2), n=g.grid.n_points)
    )


def nonlocal_source_spectrum(u, params):
    """
    dealiased spectrum of h(u) - u^2 - u_x^2 / 2
    """
    grid = u.grid
    spec = u.spectrum()

    def source(v, vx):
        return h_values(v, params) - v ** 2 - 0.5 * vx ** 2

    return dealiased_evaluate(
        source,
        (spec, spec * grid.derivative_multiplier(1)),
        grid.n_points,
        params.flux_degree,
    )


def eval_Q(u, params):
    """
    nonlocal term Q = (1 - d_xx)^-1 d_x (h(u) - u^2 - u_x^2 / 2)
    """
    grid = u.grid
    k = grid.wavenumbers
    mult = grid.derivative_multiplier(1) / (1.0 + k ** 2)
    q = nonlocal_source_spectrum(u, params) * mult
    return u.with_values(sfft.irfft(q, n=grid.n_points))


def _plancherel_weights(n_points):
    weights = np.full(n_points // 2 + 1, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    return weights


def norm_h_s(u, s=1.0):
    """
    Sobolev norm (sum_m (1 + k_m^2)^s |u_m|^2)^(1/2), normalized so that
    the s = 1 value squared is the integral of u^2 + u_x^2
    """
    grid = u.grid
    coeffs = u.spectrum() / grid.n_points
    weights = _plancherel_weights(grid.n_points)
    total = grid.length * np.sum(
        weights * (1.0 + grid.wavenumbers ** 2) ** s * np.abs(coeffs) ** 2
    )
    return math.sqrt(float(total))


def norm_lp(u, p=2.0):
    """
    discrete L^p norm (h sum |u_i|^p)^(1/p); sample max for p = inf
    """
    values = np.abs(u.values)
    if math.isinf(p):
        return float(np.max(values))
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    return float((u.grid.spacing * np.sum(values ** p)) ** (1.0 / p))


def norm_w1inf(u):
    """||u||_inf + ||u_x||_inf"""
    return norm_lp(u, math.inf) + norm_lp(spectral_derivative(u), math.inf)


def spectral_eval(u, x, order=0):
    """
    evaluates the trigonometric interpolant of u (or its derivative of the
    given order) at a point x or an array of points
    """
    grid = u.grid
    k = grid.wavenumbers
    spec = u.spectrum()
    if order:
        spec = spec * grid.derivative_multiplier(order)
    weights = _plancherel_weights(grid.n_points) * spec / grid.n_points
    points = np.asarray(x, dtype=float)
    phase = np.exp(1j * np.multiply.outer(points - grid.nodes[0], k))
    values = np.real(phase @ weights)
    if points.ndim == 0:
        return float(values)
    return values


def inner_h1(u, v):
    """
    H^1 inner product, the integral of u v + u_x v_x
    """
    grid = _check_same_grid(u, v)
    coeffs_u = u.spectrum() / grid.n_points
    coeffs_v = v.spectrum() / grid.n_points
    weights = _plancherel_weights(grid.n_points)
    return float(
        grid.length
        * np.sum(
            weights
            * (1.0 + grid.wavenumbers ** 2)
            * np.real(coeffs_u * np.conj(coeffs_v))
        )
    )
