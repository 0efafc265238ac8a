#!/usr/bin/env python
"""
discrete Littlewood-Paley blocks, Besov functionals and the dyadic
norm-inflation datum
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from cocore.Logger import Logger

from model_core.module import (
    BesovIndex,
    Field,
    InvalidFieldError,
    norm_h_s,
    norm_lp,
    spectral_eval,
)

LOG = Logger()

# low-pass cutoff is 1 on |k| <= 1 and 0 on |k| >= 4/3, so every block
# multiplier equals 1 on the plateau [4/3, 2] * 2^j
CUTOFF_INNER = 1.0
CUTOFF_OUTER = 4.0 / 3.0
PLATEAU = (4.0 / 3.0, 2.0)
MIN_LEVEL_ONE_MODES = 8


class InsufficientResolutionError(ValueError):
    """
    raised when a grid cannot carry the requested dyadic levels
    """


def _transition(t):
    """C-infinity step, 0 for t <= 0 and 1 for t >= 1"""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    rise = np.zeros_like(t)
    fall = np.zeros_like(t)
    pos = t > 0
    rise[pos] = np.exp(-1.0 / t[pos])
    below = t < 1
    fall[below] = np.exp(-1.0 / (1.0 - t[below]))
    return rise / (rise + fall)


def low_cutoff(k):
    k = np.abs(np.asarray(k, dtype=float))
    return 1.0 - _transition(
        (k - CUTOFF_INNER) / (CUTOFF_OUTER - CUTOFF_INNER)
    )


def annular_bump(xi, center=5.0 / 3.0, half_width=1.0 / 3.0):
    """
    smooth non-negative even bump supported on
    |xi| in (center - half_width, center + half_width)
    """
    t = (np.abs(np.asarray(xi, dtype=float)) - center) / half_width
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def top_level(grid):
    """index of the last dyadic block on a grid"""
    nominal = int(round(math.log2(grid.n_points // 2))) - 1
    covering = int(math.ceil(math.log2(grid.k_max)))
    return max(nominal, covering, 0)


@lru_cache(maxsize=32)
def dyadic_multipliers(grid):
    """
    multipliers of the partition of unity on the grid wavenumbers, low
    pass first; the last block carries everything above 4/3 2^j_max
    """
    k = grid.wavenumbers
    j_max = top_level(grid)
    mults = [low_cutoff(k)]
    for j in range(j_max):
        mults.append(low_cutoff(k / 2.0 ** (j + 1)) - low_cutoff(k / 2.0 ** j))
    mults.append(1.0 - low_cutoff(k / 2.0 ** j_max))
    for m in mults:
        m.setflags(write=False)
    return tuple(mults)


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    """
    dyadic pieces of a field: low_pass is the j = -1 block, blocks[j] is
    the j-th annulus
    """

    low_pass: Field
    blocks: list
    partition: tuple = field(repr=False)

    @property
    def j_max(self):
        return len(self.blocks) - 1

    def all_blocks(self):
        return [self.low_pass] + list(self.blocks)

    def reconstruct(self):
        total = self.low_pass.values.copy()
        for block in self.blocks:
            total += block.values
        return self.low_pass.with_values(total)


def decompose(u):
    """
    splits u into its Littlewood-Paley blocks

    :param u: Field
    :return: BlockDecomposition
    """
    grid = u.grid
    spec = u.spectrum()
    mults = dyadic_multipliers(grid)
    pieces = [
        u.with_values(sfft.irfft(spec * m, n=grid.n_points)) for m in mults
    ]
    return BlockDecomposition(pieces[0], pieces[1:], mults)


def block_norms(u, p=2.0):
    """L^p norms of the blocks, low pass first"""
    return np.array([norm_lp(b, p) for b in decompose(u).all_blocks()])


def _lr_norm(values, r):
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0.0
    if math.isinf(r):
        return float(np.max(values))
    return float(np.sum(values ** r) ** (1.0 / r))


def besov_norm(u, idx):
    """
    l^r norm over j >= -1 of 2^(js) ||Delta_j u||_{L^p}

    :param u: Field
    :param idx: BesovIndex
    :return: float
    """
    norms = block_norms(u, idx.p)
    levels = np.arange(-1, len(norms) - 1)
    return _lr_norm(2.0 ** (levels * idx.s) * norms, idx.r)


def b0_inf_seminorm(u):
    """sup over all blocks of the sample maximum"""
    return float(max(norm_lp(b, math.inf) for b in decompose(u).all_blocks()))


def b1_inf_norm(u):
    """
    sup over blocks of 2^j ||Delta_j u||_inf, the B^1_{inf,inf} norm
    """
    return besov_norm(u, BesovIndex(1.0, math.inf, math.inf))


def filter_bound(grid):
    """
    largest l^1 norm of the discrete block kernels, so that
    b0_inf_seminorm(u) <= filter_bound(grid) * max|u|
    """
    return float(
        max(
            np.sum(np.abs(sfft.irfft(m, n=grid.n_points)))
            for m in dyadic_multipliers(grid)
        )
    )


def overlap_bounds(grid):
    """
    (c1, c2) with c1 ||u||^2 <= sum_j ||Delta_j u||^2 <= c2 ||u||^2 on
    the grid
    """
    squares = sum(m ** 2 for m in dyadic_multipliers(grid))
    return float(np.min(squares)), float(np.max(squares))


@dataclass(frozen=True)
class IllposedDatumSpec:
    """
    parameters of the dyadic datum sum_{j=1..K} 4^-j j^(-2/(1+r)) g_j
    rescaled to Besov norm target_eps at index (1 + 1/p, p, r)
    """

    r_index: float = 2.0
    truncation: int = 4
    target_eps: float = 0.5
    p_index: float = 2.0
    bump_center: float = 5.0 / 3.0
    bump_half_width: float = 1.0 / 3.0

    def __post_init__(self):
        if not self.r_index > 1:
            raise ValueError(
                f"illposed.r must lie in (1, inf], got {self.r_index}"
            )
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise ValueError(
                f"illposed.K must be an integer >= 1, got {self.truncation}"
            )
        if not self.target_eps > 0:
            raise ValueError(
                f"illposed.eps must be > 0, got {self.target_eps}"
            )
        if not self.p_index >= 1:
            raise ValueError(
                f"illposed.p must be >= 1, got {self.p_index}"
            )
        low = self.bump_center - self.bump_half_width
        high = self.bump_center + self.bump_half_width
        if self.bump_half_width <= 0 or low < PLATEAU[0] - 1e-12:
            raise ValueError(
                f"illposed bump ({low}, {high}) must sit inside {PLATEAU}"
            )
        if high > PLATEAU[1] + 1e-12:
            raise ValueError(
                f"illposed bump ({low}, {high}) must sit inside {PLATEAU}"
            )

    @property
    def level_exponent(self):
        if math.isinf(self.r_index):
            return 0.0
        return 2.0 / (1.0 + self.r_index)

    @property
    def index(self):
        return BesovIndex(1.0 + 1.0 / self.p_index, self.p_index, self.r_index)

    def weight(self, j):
        return 4.0 ** -j * j ** -self.level_exponent


def check_resolution(spec, grid):
    """
    raises InsufficientResolutionError unless the grid carries levels
    1..K of the datum
    """
    K = int(spec.truncation)
    if grid.n_points < 2 ** (K + 3):
        raise InsufficientResolutionError(
            f"grid.N = {grid.n_points} < 2^(K+3) = {2 ** (K + 3)} for K={K}"
        )
    top = (spec.bump_center + spec.bump_half_width) * 2.0 ** K
    if grid.k_max < top:
        raise InsufficientResolutionError(
            f"level {K} reaches wavenumber {top:.3f} beyond k_max "
            f"{grid.k_max:.3f}; raise N or lower K"
        )
    support = annular_bump(
        grid.wavenumbers / 2.0, spec.bump_center, spec.bump_half_width
    )
    modes = int(np.count_nonzero(support))
    if modes < MIN_LEVEL_ONE_MODES:
        raise InsufficientResolutionError(
            f"level 1 holds {modes} lattice modes, need "
            f"{MIN_LEVEL_ONE_MODES}; raise grid.L"
        )


def datum_levels(spec, grid):
    """
    the weighted pieces 4^-j j^(-2/(1+r)) g_j, j = 1..K, each real and
    odd about x = 0
    """
    check_resolution(spec, grid)
    k = grid.wavenumbers
    # (-1)^m moves the origin of the FFT from x_0 = -L/2 to x = 0
    phase = (-1.0) ** np.arange(k.size)
    levels = []
    for j in range(1, int(spec.truncation) + 1):
        xi = k / 2.0 ** j
        spec_j = (
            spec.weight(j)
            * phase
            * 1j
            * xi
            * annular_bump(xi, spec.bump_center, spec.bump_half_width)
        )
        spec_j[-1] = 0.0
        levels.append(Field(grid, sfft.irfft(spec_j, n=grid.n_points)))
    return levels


def make_illposed_datum(spec, grid):
    """
    eps S_K(g) / ||S_K(g)|| with the norm taken at (1 + 1/p, p, r)

    :param spec: IllposedDatumSpec
    :param grid: PeriodicGrid
    :return: Field
    """
    levels = datum_levels(spec, grid)
    total = np.sum([f.values for f in levels], axis=0)
    g = Field(grid, total)
    norm = besov_norm(g, spec.index)
    if not norm > 0:
        raise InvalidFieldError("illposed datum vanished on the grid")
    u0 = g.with_values(spec.target_eps * total / norm)
    LOG.l(
        f"illposed datum K={spec.truncation} r={spec.r_index} "
        f"eps={spec.target_eps}: u0'(0)={spectral_eval(u0, 0.0, 1):.6g}",
        10,
    )
    return u0


def slope_condition(u0, eta, x0=0.0):
    """
    eta u0_x(x0) < min(-||u0||_{H1}^(1/2), -||u0||_{H1}^2)
    """
    slope = spectral_eval(u0, x0, 1)
    h1 = norm_h_s(u0, 1.0)
    return eta * slope < min(-math.sqrt(h1), -(h1 ** 2))


def choose_truncation(spec, grid, eta, params=None):
    """
    smallest K for which the datum meets the slope condition at x = 0

    :param spec: IllposedDatumSpec, its truncation is ignored
    :param grid: PeriodicGrid
    :param eta: slope factor in (0, eta_ceiling]
    :param params: optional ModelParams bounding eta
    :return: (K, datum)
    """
    if params is not None and eta > params.eta_ceiling:
        raise ValueError(
            f"eta={eta} exceeds eta_0={params.eta_ceiling:.6g}"
        )
    K = 1
    while True:
        candidate = replace(spec, truncation=K)
        try:
            u0 = make_illposed_datum(candidate, grid)
        except InsufficientResolutionError as e:
            raise InsufficientResolutionError(
                f"no K up to {K - 1} meets the slope condition for "
                f"eta={eta}: {e}"
            )
        if slope_condition(u0, eta):
            LOG.l(f"slope condition met at K={K} for eta={eta}")
            return K, u0
        K += 1
