"""Picard iteration for the truncated hierarchy in Duhamel form.

The m-th iterate solves

    gamma_m^(k)(t) = U0(t) gamma0^(k)
                     + int_0^t U0(t-s) Btilde^(k) gamma_{m-1}^(k+off)(s) ds

level by level, starting from the convention trajectory gamma_0^(k)(t) ==
gamma0^(k) (constant in t).  Sourced levels are k <= K - off (off = 1 cubic,
2 quintic); the top off levels follow the closure rule: free evolution of
the initial data, identically zero, or the factorized NLS trajectory.

The integral is evaluated by composite quadrature over the stored nodes.
Writing g(s) = U0(-s) Btilde gamma^(k+off)(s), the prefix integrals of g
accumulate in O(N_t) array passes and each node needs only a short window
of g values, so a Picard step never holds a whole level's source list.

Iterates of the truncated system stabilize exactly after about K/off steps
(the system is lower triangular and nilpotent in the collapse), so Cauchy
distances decay geometrically and then hit zero; the partial sums of
Duhamel terms plus the convention-start remainder reproduce each iterate to
rounding, which the tests use as a cross-check of the whole pipeline.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nls
from .kernels import (
    FactorizedKernel,
    HierarchySequence,
    MarginalKernel,
    ResourceBudgetError,
    as_dense,
    hermiticity_defect,
    kernel_budget,
    symmetry_defect,
    trace,
)
from .norms import NormParams, level_diff_norm, sobolev_norm, weighted_distance, weighted_norm
from .operators import CUBIC, QUINTIC, Interaction, apply_btilde, apply_free_phase, free_evolve
from .spectral import GridSpec

FREE_TOP = "free_top"
ZERO_TOP = "zero_top"
FACTORIZED_TOP = "factorized_top"

TRAPEZOID = "trapezoid"
SIMPSON = "simpson"


@dataclass(frozen=True)
class ClosureRule:
    """Treatment of the top level(s) the truncated system cannot source."""

    kind: str = FREE_TOP
    phi0: np.ndarray | None = None
    substeps: int = 32

    def __post_init__(self):
        if self.kind not in (FREE_TOP, ZERO_TOP, FACTORIZED_TOP):
            raise ValueError(f"unknown closure rule {self.kind!r}")
        if self.kind == FACTORIZED_TOP and self.phi0 is None:
            raise ValueError("factorized_top needs the initial wavefunction phi0")


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    interaction: Interaction
    params: NormParams
    K: int
    T: float
    N_t: int
    m_max: int = 10
    closure: ClosureRule = field(default_factory=ClosureRule)
    quadrature: str = TRAPEZOID
    tol_cauchy: float = 1e-10
    budget: float | None = None
    record_defects: bool = True

    def __post_init__(self):
        k_min = 2 if self.interaction.kind == CUBIC else 3
        if self.K < k_min:
            raise ValueError(f"{self.interaction.kind} hierarchy needs K >= {k_min}")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.N_t < 1:
            raise ValueError("need at least one time interval")
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if self.quadrature not in (TRAPEZOID, SIMPSON):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if self.quadrature == SIMPSON and self.N_t % 2:
            raise ValueError("simpson quadrature needs an even node count N_t")
        if self.params.alpha <= self.grid.n / 2:
            warnings.warn(
                f"alpha={self.params.alpha} <= n/2={self.grid.n / 2}: outside the "
                "regime where the collapse bound is uniform",
                stacklevel=2,
            )

    @property
    def offset(self) -> int:
        return self.interaction.source_offset

    @property
    def sourced_levels(self) -> range:
        return range(1, self.K - self.offset + 1)

    @property
    def closure_levels(self) -> range:
        return range(self.K - self.offset + 1, self.K + 1)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N_t + 1)


@dataclass
class Trajectory:
    """Hierarchy states on uniform time nodes."""

    times: np.ndarray
    states: list

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("one state per time node required")
        if len(self.times) < 2:
            raise ValueError("trajectory needs at least two nodes")
        dt = np.diff(self.times)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-12):
            raise ValueError("time nodes must be uniform and increasing")

    def __len__(self):
        return len(self.times)

    @property
    def K(self) -> int:
        return self.states[0].K

    def level_series(self, k: int) -> list:
        return [state.level(k) for state in self.states]


@dataclass
class BoundReport:
    """Outcome of one theorem-bound measurement."""

    name: str
    ratio: float
    factor: float
    passed: bool
    flagged: bool
    eta: float
    delta_K: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ratio": self.ratio,
            "factor": self.factor,
            "passed": self.passed,
            "flagged": self.flagged,
            "eta": self.eta,
            "delta_K": self.delta_K,
            "details": dict(self.details),
        }


@dataclass
class RunReport:
    iterations: int
    converged: bool
    cauchy_distances: list
    stop_weight: float
    residuals: dict
    trace_drift: dict
    hermiticity_defects: dict
    symmetry_defects: dict
    trajectory_norm: float
    initial_norm: float
    c_hat: float | None
    wall_seconds: float
    planned_bytes: int
    quadrature: str
    closure: str
    duhamel: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["residuals"] = {str(k): v for k, v in self.residuals.items()}
        out["trace_drift"] = {str(k): v for k, v in self.trace_drift.items()}
        out["hermiticity_defects"] = {
            str(k): v for k, v in self.hermiticity_defects.items()
        }
        out["symmetry_defects"] = {str(k): v for k, v in self.symmetry_defects.items()}
        return out


# -- quadrature ---------------------------------------------------------------

class _PrefixIntegrator:
    """Running prefix integrals of a streamed integrand on uniform nodes.

    push(g_i) returns int_0^{t_i} g(s) ds by composite trapezoid, or by
    composite Simpson with a 3/8 closing rule at odd prefixes (plain
    trapezoid for the very first interval, which the even chain never
    propagates).
    """

    def __init__(self, rule: str, dt: float):
        self.rule = rule
        self.dt = dt
        self.i = -1
        self.window = []
        self.prefix = None
        self.even = None
        self.even_prev = None

    def push(self, g: np.ndarray) -> np.ndarray:
        self.i += 1
        i, dt = self.i, self.dt
        self.window.append(g)
        if len(self.window) > 4:
            self.window.pop(0)
        if i == 0:
            self.prefix = np.zeros_like(g)
            self.even = self.prefix
            return self.prefix
        if self.rule == TRAPEZOID:
            self.prefix = self.prefix + (dt / 2.0) * (self.window[-2] + self.window[-1])
            return self.prefix
        if i == 1:
            return (dt / 2.0) * (self.window[-2] + self.window[-1])
        if i % 2 == 0:
            g2, g1, g0 = self.window[-3], self.window[-2], self.window[-1]
            new_even = self.even + (dt / 3.0) * (g2 + 4.0 * g1 + g0)
            self.even_prev, self.even = self.even, new_even
            return new_even
        g3, g2, g1, g0 = self.window[-4:]
        return self.even_prev + (3.0 * dt / 8.0) * (g3 + 3.0 * g2 + 3.0 * g1 + g0)


def _integrate_duhamel(sources, times, rule, gamma0_data, grid, k, interaction,
                       collapse_cache=None):
    """Per-node U0(t_i)(gamma0 + prefix integral of U0(-s) Btilde src(s)).

    sources yields the (k+offset)-level kernel at each node; gamma0_data is
    the dense level-k initial array or None for the pure integral term.
    """
    dt = times[1] - times[0]
    integ = _PrefixIntegrator(rule, dt)
    cache = collapse_cache if collapse_cache is not None else {}
    out = []
    for i, src in enumerate(sources):
        key = id(src)
        if key in cache:
            g = cache[key].copy()
        else:
            g = apply_btilde(src, interaction).data
            cache[key] = g.copy()
        apply_free_phase(g, grid, k, -times[i])
        prefix = integ.push(g)
        new = prefix.copy() if gamma0_data is None else gamma0_data + prefix
        apply_free_phase(new, grid, k, times[i])
        out.append(MarginalKernel(grid, k, new))
    return out


# -- closure and start trajectories -----------------------------------------------

def _closure_states(gamma0: HierarchySequence, config: SolverConfig) -> dict:
    """Node lists for every closure level, shared by all iterates."""
    grid, times = config.grid, config.times()
    out = {}
    if config.closure.kind == ZERO_TOP:
        for k in config.closure_levels:
            zero = FactorizedKernel(
                grid, k, np.zeros((grid.M,) * grid.n, dtype=np.complex128)
            )
            out[k] = [zero] * len(times)
    elif config.closure.kind == FREE_TOP:
        for k in config.closure_levels:
            top = gamma0.level(k)
            out[k] = [free_evolve(top, t) for t in times]
    else:
        snapshots = nls.solve_nodes(
            config.closure.phi0, grid, config.interaction, times,
            substeps=config.closure.substeps,
        )
        for k in config.closure_levels:
            out[k] = [FactorizedKernel.from_position(v, grid, k) for v in snapshots]
    return out


def convention_trajectory(gamma0: HierarchySequence, config: SolverConfig) -> Trajectory:
    """The iteration start: the initial sequence frozen at every node."""
    state = HierarchySequence(
        config.K, config.params.xi,
        tuple(gamma0.level(k) for k in range(1, config.K + 1)),
    )
    times = config.times()
    return Trajectory(times, [state] * len(times))


def plan_memory(config: SolverConfig) -> dict:
    """Bytes the solve will hold at peak; raises if over budget."""
    grid = config.grid
    per_state = sum(grid.kernel_bytes(k) for k in config.sourced_levels)
    nodes = config.N_t + 1
    trajectories = 2 * nodes * per_state
    biggest = max(grid.kernel_bytes(k) for k in config.sourced_levels)
    transient = 8 * biggest
    total = trajectories + transient
    budget = kernel_budget(config.budget)
    if total > budget:
        raise ResourceBudgetError(
            f"solve needs ~{total:.3e} bytes "
            f"({nodes} nodes x 2 trajectories x {per_state:.3e} B + workspace), "
            f"over budget {budget:.3e}"
        )
    return {
        "per_state_bytes": per_state,
        "nodes": nodes,
        "trajectory_bytes": trajectories,
        "transient_bytes": transient,
        "total_bytes": total,
        "budget_bytes": budget,
    }


def _picard_step(prev: Trajectory, gamma0_data: dict, closure: dict,
                 config: SolverConfig) -> Trajectory:
    grid, K, off = config.grid, config.K, config.offset
    times = prev.times
    new_levels = {}
    for k in config.sourced_levels:
        sources = (prev.states[i].level(k + off) for i in range(len(times)))
        new_levels[k] = _integrate_duhamel(
            sources, times, config.quadrature, gamma0_data[k], grid, k,
            config.interaction,
        )
    states = []
    for i in range(len(times)):
        levels = [
            new_levels[k][i] if k in new_levels else closure[k][i]
            for k in range(1, K + 1)
        ]
        states.append(HierarchySequence(K, config.params.xi, tuple(levels)))
    return Trajectory(times, states)


def picard_step(prev: Trajectory, gamma0: HierarchySequence,
                config: SolverConfig) -> Trajectory:
    """One application of the Duhamel map to a stored trajectory."""
    if len(prev.times) != config.N_t + 1 or not np.allclose(
        prev.times, config.times(), rtol=1e-12, atol=1e-15
    ):
        raise ValueError("trajectory nodes do not match the configuration")
    gamma0_data = {
        k: as_dense(gamma0.level(k), config.budget).data
        for k in config.sourced_levels
    }
    return _picard_step(prev, gamma0_data, _closure_states(gamma0, config), config)


# -- Duhamel expansion terms -----------------------------------------------------

def duhamel_term(j: int, k: int, gamma0: HierarchySequence,
                 config: SolverConfig) -> list:
    """Trajectory of the j-th expansion term at level k.

    Xi_0 is the free evolution of gamma0^(k); Xi_j integrates the collapsed
    (j-1)-th term one level up.  The j=0 output keeps the representation of
    the initial data (possibly factorized); deeper terms are dense.
    """
    off = config.offset
    top = k + j * off
    if j < 0 or top > config.K:
        raise ValueError(
            f"term (j={j}, k={k}) needs level {top} but truncation is K={config.K}"
        )
    times = config.times()
    current = [free_evolve(gamma0.level(top), t) for t in times]
    for lvl in range(top - off, k - off, -off):
        current = _integrate_duhamel(
            iter(current), times, config.quadrature, None, config.grid, lvl,
            config.interaction,
        )
    return current


def duhamel_remainder(m: int, k: int, gamma0: HierarchySequence,
                      config: SolverConfig) -> list:
    """Convention-start remainder: iterate m minus the first m expansion terms.

    R_0 is the constant trajectory; R_m integrates R_{m-1} one level up and
    vanishes at closure levels from m=1 on.  Only meaningful for the
    free_top closure, where closure levels carry exactly the j=0 term.
    """
    if config.closure.kind != FREE_TOP:
        raise ValueError("remainder bookkeeping is defined for the free_top closure")
    times = config.times()
    grid, off = config.grid, config.offset

    def recurse(m_left: int, lvl: int):
        if m_left == 0:
            return [gamma0.level(lvl)] * len(times)
        if lvl in config.closure_levels:
            return None
        src = recurse(m_left - 1, lvl + off)
        if src is None:
            return None
        return _integrate_duhamel(
            iter(src), times, config.quadrature, None, grid, lvl,
            config.interaction,
        )

    out = recurse(m, k)
    if out is None:
        zero = MarginalKernel.zeros(grid, k, budget=config.budget)
        return [zero] * len(times)
    return out


# -- the solver -------------------------------------------------------------------

def _max_node_distance(a: Trajectory, b: Trajectory, params: NormParams) -> float:
    return max(
        weighted_distance(sa, sb, params) for sa, sb in zip(a.states, b.states)
    )


def solve(gamma0: HierarchySequence, config: SolverConfig,
          c_hat: float | None = None):
    """Iterate to the mild solution; returns (Trajectory, RunReport).

    Cauchy distances between successive iterates are measured in the
    weighted norm with weight eta = xi - c_hat*T when a collapse constant
    is supplied (and eta > 0), otherwise with xi itself.
    """
    t_start = time.perf_counter()
    if gamma0.grid != config.grid:
        raise ValueError("initial data grid differs from configuration grid")
    if gamma0.K != config.K:
        raise ValueError("initial data depth differs from configuration K")
    plan = plan_memory(config)

    xi, alpha = config.params.xi, config.params.alpha
    stop_weight = xi
    if c_hat is not None:
        eta = xi - c_hat * config.T
        if eta > 0:
            stop_weight = eta
        else:
            warnings.warn("eta = xi - c_hat*T is not positive; stopping in xi norm",
                          stacklevel=2)
    stop_params = NormParams(alpha=alpha, xi=stop_weight)

    closure = _closure_states(gamma0, config)
    gamma0_data = {
        k: as_dense(gamma0.level(k), config.budget).data
        for k in config.sourced_levels
    }

    prev = convention_trajectory(gamma0, config)
    distances = []
    converged = False
    iterations = 0
    for _ in range(config.m_max):
        new = _picard_step(prev, gamma0_data, closure, config)
        iterations += 1
        d = _max_node_distance(new, prev, stop_params)
        if not math.isfinite(d):
            raise FloatingPointError(
                f"non-finite Cauchy distance at iteration {iterations}"
            )
        distances.append(d)
        prev = new
        scale = max(1.0, weighted_norm(new.states[-1], stop_params))
        if d <= config.tol_cauchy * scale:
            converged = True
            break

    final = prev
    if not converged:
        warnings.warn(
            f"Picard iteration did not reach tol_cauchy in {config.m_max} steps "
            f"(last distance {distances[-1]:.3e})",
            stacklevel=2,
        )

    # self-consistency residual: one more Duhamel application, level by level
    extra = _picard_step(final, gamma0_data, closure, config)
    residuals = {}
    for k in config.sourced_levels:
        denom = max(
            (sobolev_norm(s.level(k), alpha) for s in final.states), default=0.0
        )
        gap = max(
            level_diff_norm(a.level(k), b.level(k), alpha)
            for a, b in zip(final.states, extra.states)
        )
        residuals[k] = gap / denom if denom > 0 else gap

    trace_drift = {}
    hermiticity = {}
    symmetry = {}
    for k in config.sourced_levels:
        t0 = trace(final.states[0].level(k))
        drift = max(abs(trace(s.level(k)) - t0) for s in final.states)
        trace_drift[k] = drift / max(1.0, abs(t0))
        if config.record_defects:
            hermiticity[k] = max(
                hermiticity_defect(s.level(k)) for s in final.states
            )
            symmetry[k] = max(symmetry_defect(s.level(k)) for s in final.states)

    report = RunReport(
        iterations=iterations,
        converged=converged,
        cauchy_distances=distances,
        stop_weight=stop_weight,
        residuals=residuals,
        trace_drift=trace_drift,
        hermiticity_defects=hermiticity,
        symmetry_defects=symmetry,
        trajectory_norm=max(
            weighted_norm(s, stop_params) for s in final.states
        ),
        initial_norm=weighted_norm(gamma0, config.params),
        c_hat=c_hat,
        wall_seconds=time.perf_counter() - t_start,
        planned_bytes=plan["total_bytes"],
        quadrature=config.quadrature,
        closure=config.closure.kind,
    )
    return final, report


def duhamel_bound_rows(gamma0: HierarchySequence, config: SolverConfig,
                       c_hat: float, j_max: int = 3, k_max: int = 3) -> list:
    """Norm-vs-bound table for the expansion terms at the final time."""
    alpha = config.params.alpha
    rows = []
    for k in range(1, min(k_max, config.K) + 1):
        for j in range(1, j_max + 1):
            top = k + j * config.offset
            if top > config.K:
                continue
            term = duhamel_term(j, k, gamma0, config)
            value = sobolev_norm(term[-1], alpha)
            bound = (
                math.comb(k + j - 1, j)
                * (c_hat * config.T) ** j
                * sobolev_norm(gamma0.level(top), alpha)
            )
            rows.append({
                "j": j,
                "k": k,
                "norm": value,
                "bound": bound,
                "ratio": value / bound if bound > 0 else math.inf,
            })
    return rows


# -- theorem bound checks ----------------------------------------------------------

def _eta_or_raise(config: SolverConfig, c_hat: float) -> float:
    eta = config.params.xi - c_hat * config.T
    if eta <= 0:
        raise ValueError(
            f"eta = xi - c_hat*T = {eta:.3e} <= 0: horizon too long for this constant"
        )
    return eta


def apriori_bound_check(traj: Trajectory, gamma0: HierarchySequence,
                        config: SolverConfig, c_hat: float,
                        delta_K: float = 0.0) -> BoundReport:
    """Solution growth against the eta/xi (cubic) or 1/(eta xi) (quintic) factor."""
    eta = _eta_or_raise(config, c_hat)
    alpha, xi = config.params.alpha, config.params.xi
    num = max(weighted_norm(s, NormParams(alpha, eta)) for s in traj.states)
    den = weighted_norm(gamma0, NormParams(alpha, xi))
    ratio = num / den if den > 0 else 0.0
    cubic_style = eta / xi
    factor = cubic_style if config.interaction.kind == CUBIC else 1.0 / (eta * xi)
    passed = ratio <= factor + delta_K
    flagged = (
        config.interaction.kind == QUINTIC
        and passed
        and ratio > cubic_style + delta_K
    )
    return BoundReport(
        name="apriori",
        ratio=ratio,
        factor=factor,
        passed=passed,
        flagged=flagged,
        eta=eta,
        delta_K=delta_K,
        details={"numerator": num, "denominator": den, "cubic_style": cubic_style},
    )


def contraction_factor_check(gamma0_a: HierarchySequence,
                             gamma0_b: HierarchySequence,
                             config: SolverConfig, c_hat: float,
                             delta_K: float = 0.0) -> BoundReport:
    """Lipschitz factor of the data-to-solution map at the special horizon.

    The quoted factors (4/5 cubic, 5/(4 xi^2) quintic) assume T = xi/(5 c_hat);
    the report records how far the configured horizon is from that."""
    eta = _eta_or_raise(config, c_hat)
    alpha, xi = config.params.alpha, config.params.xi
    traj_a, _ = solve(gamma0_a, config, c_hat=c_hat)
    traj_b, _ = solve(gamma0_b, config, c_hat=c_hat)
    num = max(
        weighted_distance(sa, sb, NormParams(alpha, eta))
        for sa, sb in zip(traj_a.states, traj_b.states)
    )
    den = weighted_distance(gamma0_a, gamma0_b, NormParams(alpha, xi))
    cubic_style = 0.8
    factor = cubic_style if config.interaction.kind == CUBIC else 1.25 / xi**2
    special_T = xi / (5.0 * c_hat)
    if den == 0.0:
        return BoundReport(
            name="contraction", ratio=0.0, factor=factor, passed=num == 0.0,
            flagged=False, eta=eta, delta_K=delta_K,
            details={"numerator": num, "denominator": den,
                     "special_T": special_T, "exact_equality": True},
        )
    ratio = num / den
    passed = ratio <= factor + delta_K
    flagged = (
        config.interaction.kind == QUINTIC
        and passed
        and ratio > cubic_style + delta_K
    )
    return BoundReport(
        name="contraction",
        ratio=ratio,
        factor=factor,
        passed=passed,
        flagged=flagged,
        eta=eta,
        delta_K=delta_K,
        details={
            "numerator": num,
            "denominator": den,
            "special_T": special_T,
            "T_matches_special": bool(abs(config.T - special_T)
                                      <= 1e-9 * max(1.0, special_T)),
            "cubic_style": cubic_style,
        },
    )
