"""Sobolev-type norms for marginal kernels and weighted hierarchy norms.

The level-k norm is

    ||gamma||_{H^alpha}^2 = sum_{p,p'} prod_j <p_j>^(2 alpha) <p'_j>^(2 alpha)
                            |gamma_hat(p;p')|^2 / L^(2kn)

with <p> = sqrt(1 + |p|^2), one factor 1/L^n of lattice measure per momentum
variable.  A factorized kernel never needs materializing:
||F(phi, k)||_{H^alpha} equals ||phi||_{H^alpha}^(2k), and differences of two
factorized kernels reduce to one-particle inner products.

Hierarchy sequences are measured by sum_k xi^k ||gamma^(k)||, trajectories
by the maximum of that over time nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import FactorizedKernel, HierarchySequence, MarginalKernel
from .spectral import GridSpec, variable_bracket

_CHUNK = 1 << 16


@dataclass(frozen=True)
class NormParams:
    """Regularity exponent alpha and level weight xi of the hierarchy norm."""

    alpha: float = 1.0
    xi: float = 0.5

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")


def accurate_sum(values: np.ndarray) -> float:
    """Compensated total of a real array: exact fsum over chunk subtotals."""
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    if flat.size <= _CHUNK:
        return math.fsum((float(np.sum(flat)),))
    nchunks = -(-flat.size // _CHUNK)
    return math.fsum(float(np.sum(part)) for part in np.array_split(flat, nchunks))


def profile_norm_sq(phi_hat: np.ndarray, grid: GridSpec, alpha: float) -> float:
    """||phi||_{H^alpha}^2 of a one-particle momentum profile."""
    w = variable_bracket(grid) ** (2.0 * alpha) if alpha != 0 else 1.0
    return accurate_sum(w * np.abs(phi_hat) ** 2) * grid.measure_weight


def profile_inner(phi_hat: np.ndarray, psi_hat: np.ndarray, grid: GridSpec,
                  alpha: float) -> complex:
    w = variable_bracket(grid) ** (2.0 * alpha) if alpha != 0 else 1.0
    terms = w * phi_hat * np.conj(psi_hat)
    return complex(
        accurate_sum(terms.real) * grid.measure_weight,
        accurate_sum(terms.imag) * grid.measure_weight,
    )


def _weighted_abs_sq(kernel: MarginalKernel, alpha: float) -> np.ndarray:
    grid, k, n = kernel.grid, kernel.k, kernel.grid.n
    acc = np.abs(kernel.data) ** 2
    if alpha != 0:
        wb = variable_bracket(grid) ** (2.0 * alpha)
        for var in range(2 * k):
            shape = [1] * (2 * k * n)
            shape[var * n: (var + 1) * n] = wb.shape
            acc *= wb.reshape(shape)
    return acc


def sobolev_norm(kernel, alpha: float = 1.0) -> float:
    """H^alpha norm of a dense or factorized kernel."""
    if isinstance(kernel, FactorizedKernel):
        return profile_norm_sq(kernel.phi_hat, kernel.grid, alpha) ** kernel.k
    total = accurate_sum(_weighted_abs_sq(kernel, alpha))
    scale = kernel.grid.measure_weight ** (2 * kernel.k)
    return math.sqrt(total * scale)


def level_diff_norm(a, b, alpha: float = 1.0) -> float:
    """||a - b||_{H^alpha} for any mix of dense and factorized kernels."""
    if a.grid != b.grid or a.k != b.k:
        raise ValueError("kernels live on different grids or levels")
    if isinstance(a, FactorizedKernel) and isinstance(b, FactorizedKernel):
        if a is b or np.array_equal(a.phi_hat, b.phi_hat):
            return 0.0
        k, grid = a.k, a.grid
        na = profile_norm_sq(a.phi_hat, grid, alpha)
        nb = profile_norm_sq(b.phi_hat, grid, alpha)
        z = abs(profile_inner(a.phi_hat, b.phi_hat, grid, alpha))
        val = na**(2 * k) + nb**(2 * k) - 2.0 * z**(2 * k)
        return math.sqrt(max(val, 0.0))
    if isinstance(a, FactorizedKernel):
        a = a.materialize()
    if isinstance(b, FactorizedKernel):
        b = b.materialize()
    return sobolev_norm(MarginalKernel(a.grid, a.k, a.data - b.data), alpha)


def weighted_norm(seq: HierarchySequence, params: NormParams) -> float:
    """sum_k xi^k ||gamma^(k)||_{H^alpha} over the truncated hierarchy."""
    return math.fsum(
        params.xi**k * sobolev_norm(seq.level(k), params.alpha)
        for k in range(1, seq.K + 1)
    )


def weighted_distance(seq_a: HierarchySequence, seq_b: HierarchySequence,
                      params: NormParams) -> float:
    if seq_a.K != seq_b.K:
        raise ValueError("sequences truncated at different depths")
    return math.fsum(
        params.xi**k * level_diff_norm(seq_a.level(k), seq_b.level(k), params.alpha)
        for k in range(1, seq_a.K + 1)
    )


def trajectory_norm(sequences, params: NormParams) -> float:
    """max over time nodes of the weighted hierarchy norm."""
    values = [weighted_norm(seq, params) for seq in sequences]
    if not values:
        raise ValueError("empty trajectory")
    return max(values)
