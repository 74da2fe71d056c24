"""Expected-ebit minimization over stage schedules.

The cost-to-go F(alpha, depth) of implementing U(alpha) with at most
L - depth + 1 stages satisfies the backward recursion

    F(alpha, L) = 1                                  (deterministic stage)
    F(alpha, l) = min_beta  E(beta) + (1 - p_s) F(fold(alpha - a'), l + 1)

with gamma tied to (alpha, beta) by tan(beta) tan(gamma) = tan(alpha),
p_s = cos^2 b cos^2 g + sin^2 b sin^2 g, and a' the failure residual.  Depth
tables are memoized on a log-spaced alpha grid and interpolated linearly in
ln(alpha); the beta search runs on a log-spaced grid with parabolic
refinement during table builds and golden-section refinement at query time.

Also here: the beta_l = alpha_l doubling baseline cost (binary-expansion
form), and the small-angle upper bound whose flatness pins the ~5.64
ebits-per-radian constant.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import _backend
from .linalg import binary_entropy, resource_entanglement
from .protocol import (
    StageParams,
    StageSchedule,
    canon_angle,
    gamma_for,
)

# Small-angle entanglement rate of the optimized scheme, ebits per radian.
OPTIMIZED_EBIT_RATE = 5.6418
# Same limit for the doubling-baseline scheme.
BASELINE_EBIT_RATE = 5.9793


@dataclass(frozen=True)
class OptimizerConfig:
    """Grid resolutions and tolerances for the backward recursion."""

    max_stages: int = 25
    beta_grid: int = 1024
    refine_tol: float = 1e-9
    memo_points_per_decade: int = 2048
    memo_alpha_min: float = 1e-8

    def __post_init__(self):
        if self.max_stages < 2:
            raise ValueError("need at least two stages (one probabilistic + terminal)")
        if self.refine_tol > 1e-9:
            raise ValueError("refine_tol must be <= 1e-9")
        if not 0 < self.memo_alpha_min <= 1e-8:
            raise ValueError("memo grid must span [1e-8, pi/4]")


@dataclass(frozen=True)
class CostProfile:
    """Expected resources of a schedule: ebits, reach probabilities, bits."""

    alpha: float
    expected_ebits: float
    schedule: StageSchedule
    stage_reach_probs: tuple[float, ...]
    expected_bits_leader: float
    expected_bits_worker: float

    @property
    def terminal_reach_prob(self) -> float:
        return self.stage_reach_probs[-1] if self.schedule.terminal else 0.0


def expected_cost(schedule: StageSchedule) -> CostProfile:
    """Analytic expectation of ebits and raw bits over the branch tree."""
    schedule.validate()
    reach = 1.0
    probs = []
    ebits = 0.0
    bits = 0.0
    for st in schedule.stages:
        probs.append(reach)
        ebits += reach * st.ebits
        bits += reach
        reach *= 1.0 - st.success_probability
    if schedule.terminal:
        probs.append(reach)
        ebits += reach * 1.0
        bits += reach
    return CostProfile(alpha=canon_angle(schedule.alpha),
                       expected_ebits=ebits,
                       schedule=schedule,
                       stage_reach_probs=tuple(probs),
                       expected_bits_leader=bits,
                       expected_bits_worker=bits)


class _BetaGrid:
    """Log-spaced beta samples with the per-beta quantities the sweep needs."""

    def __init__(self, n: int):
        self.lnb = np.linspace(math.log(1e-9), math.log(math.pi / 2 * 0.99999), n)
        b = np.exp(self.lnb)
        self.eb = np.array([resource_entanglement(x) for x in b])
        self.tb = np.tan(b)
        self.t2b = self.tb ** 2
        self.s2b = np.sin(b) ** 2
        self.c2b = 1.0 - self.s2b
        self.hb = self.lnb[1] - self.lnb[0]


class EntanglementOptimizer:
    """Holds the converged depth tables; queries and extraction run off them."""

    def __init__(self, config: OptimizerConfig | None = None):
        self.config = config or OptimizerConfig()
        self.backend = _backend.active_backend()
        n_dec = math.log10((math.pi / 4) / self.config.memo_alpha_min)
        ng = int(math.ceil(n_dec * self.config.memo_points_per_decade)) + 1
        self.x0 = math.log(self.config.memo_alpha_min)
        self.x1 = math.log(math.pi / 4)
        self.hx = (self.x1 - self.x0) / (ng - 1)
        self.a_grid = np.exp(np.linspace(self.x0, self.x1, ng))
        self.betas = _BetaGrid(self.config.beta_grid)
        self._tables = None  # depth l -> F table, built lazily

    # -- table construction -------------------------------------------------

    def _sweep(self, fnext: np.ndarray):
        g = self.betas
        if self.backend == "numba":
            from . import _kernels_numba as K
            return K.backward_sweep(fnext, self.a_grid, self.x0, self.hx,
                                    self.config.memo_alpha_min, g.lnb, g.eb,
                                    g.tb, g.t2b, g.s2b, g.c2b)
        from . import _kernels_numpy as K
        return K.backward_sweep(fnext, self.a_grid, self.x0, self.hx,
                                self.config.memo_alpha_min, g.lnb, g.eb,
                                g.tb, g.t2b, g.s2b, g.c2b)

    def tables(self):
        """F tables indexed by depth 1..L (F[L] is the terminal constant 1)."""
        if self._tables is None:
            L = self.config.max_stages
            tabs = {L: np.ones(self.a_grid.shape[0])}
            for l in range(L - 1, 0, -1):
                tabs[l], _ = self._sweep(tabs[l + 1])
            self._tables = tabs
        return self._tables

    # -- interpolation and scalar objective ---------------------------------

    def _interp(self, F: np.ndarray, alpha: float) -> float:
        if alpha <= 0.0:
            return 0.0
        if alpha < self.config.memo_alpha_min:
            return float(F[0]) * (alpha / self.config.memo_alpha_min)
        t = (math.log(alpha) - self.x0) / self.hx
        i = min(int(t), F.shape[0] - 2)
        w = t - i
        return float(F[i]) * (1.0 - w) + float(F[i + 1]) * w

    def _objective(self, F_next: np.ndarray, a: float, beta: float):
        """(cost, p_success, canonical next target) for one candidate stage."""
        tb = math.tan(beta)
        ta = math.tan(a)
        tg = ta / tb
        c2g = 1.0 / (1.0 + tg * tg)
        s2b = math.sin(beta) ** 2
        ps = (1.0 - s2b) * c2g + s2b * (1.0 - c2g)
        anext = canon_angle(a + math.atan(tb * tb / ta))
        eb = binary_entropy(s2b)
        return eb + (1.0 - ps) * self._interp(F_next, anext), ps, anext

    def _best_stage(self, a: float, F_next: np.ndarray):
        """Coarse beta scan plus golden-section refinement at one target.

        Candidates that leave the folded target essentially unchanged are
        excluded: they tie the Bellman value from above (paying E(beta) for
        no progress) and only win argmin ties through interpolation noise.
        """
        g = self.betas
        ta = math.tan(a)
        tg = ta / g.tb
        c2g = 1.0 / (1.0 + tg * tg)
        ps = g.c2b * c2g + g.s2b * (1.0 - c2g)
        anext = np.mod(a + np.arctan(g.t2b / ta) + math.pi / 2, math.pi) - math.pi / 2
        anext = np.abs(anext)
        anext = np.where(anext > math.pi / 4, math.pi / 2 - anext, anext)
        from ._kernels_numpy import _interp as vinterp
        cost = g.eb + (1.0 - ps) * vinterp(F_next, self.x0, self.hx,
                                           self.config.memo_alpha_min, anext)
        cost = np.where(np.abs(anext - a) >= 1e-6 * a, cost, np.inf)
        j = int(np.argmin(cost))
        if cost[j] >= 1.0:
            return None  # deterministic stage is optimal here
        lo = g.lnb[max(j - 1, 0)]
        hi = g.lnb[min(j + 1, g.lnb.shape[0] - 1)]
        gr = (math.sqrt(5.0) - 1.0) / 2.0
        c = hi - gr * (hi - lo)
        d = lo + gr * (hi - lo)
        fc = self._objective(F_next, a, math.exp(c))[0]
        fd = self._objective(F_next, a, math.exp(d))[0]
        while math.exp(hi) - math.exp(lo) > self.config.refine_tol:
            if fc < fd:
                hi, d, fd = d, c, fc
                c = hi - gr * (hi - lo)
                fc = self._objective(F_next, a, math.exp(c))[0]
            else:
                lo, c, fc = c, d, fd
                d = lo + gr * (hi - lo)
                fd = self._objective(F_next, a, math.exp(d))[0]
        beta = math.exp(0.5 * (lo + hi))
        val, ps_b, anext_b = self._objective(F_next, a, beta)
        if val >= float(cost[j]):
            beta = math.exp(g.lnb[j])
            val, ps_b, anext_b = self._objective(F_next, a, beta)
        return val, beta, ps_b, anext_b

    # -- public operations ---------------------------------------------------

    def value(self, alpha: float) -> float:
        """Memoized expected ebits for U(alpha) (depth-1 table lookup)."""
        return self._interp(self.tables()[1], canon_angle(alpha))

    def optimize_schedule(self, alpha: float) -> CostProfile:
        """Extract the minimizing schedule by following the argmin chain."""
        if not math.isfinite(alpha):
            raise ValueError("alpha must be finite")
        a = canon_angle(alpha)
        L = self.config.max_stages
        tabs = self.tables()
        stages = []
        for l in range(1, L):
            if a <= 1e-12:
                break
            found = self._best_stage(a, tabs[l + 1])
            if found is None:
                break
            _, beta, _, anext = found
            stages.append(StageParams(alpha=a, beta=beta,
                                      gamma=gamma_for(a, beta),
                                      stage_index=l - 1))
            a = anext
        schedule = StageSchedule(alpha=canon_angle(alpha), stages=tuple(stages),
                                 max_stages=L, terminal=a > 1e-12)
        return expected_cost(schedule)

    def baseline_cost(self, alpha: float) -> float:
        return baseline_cost(alpha)

    def asymptotic_bound(self, A: float, tail_tol: float = 1e-14) -> float:
        """Small-angle upper bound on ebits/radian built from the cost at A.

        [F(A) + sum_{k>=1} 2^k E(A 2^-k)] / A; the series is truncated once a
        term's contribution to the ratio falls below tail_tol (the terms decay
        geometrically, so the discarded tail is of the same order).
        """
        if not 0.0 < A <= math.pi / 4:
            raise ValueError("A must lie in (0, pi/4]")
        total = self.optimize_schedule(A).expected_ebits
        k = 1
        while True:
            term = 2.0 ** k * resource_entanglement(A * 2.0 ** (-k))
            total += term
            if term < tail_tol * A:
                break
            k += 1
            if k > 2000:
                raise RuntimeError("tail series failed to truncate")
        return total / A

    def sweep_entanglement_curve(self, alphas):
        """Rows (alpha, optimized expected ebits, doubling-baseline ebits)."""
        rows = []
        for a in alphas:
            if not 0.0 < a <= math.pi / 4:
                raise ValueError(f"alpha {a} outside (0, pi/4]")
            rows.append((float(a), self.optimize_schedule(a).expected_ebits,
                         baseline_cost(a)))
        return rows


def baseline_dyadic_cost(n: int) -> float:
    """Expected ebits of the doubling chain for alpha = pi / 2^n."""
    if n < 1:
        raise ValueError("need n >= 1")
    total = 0.0
    for l in range(1, n):
        total += 2.0 ** (1 - l) * binary_entropy(
            math.sin(2.0 ** (l - 1) * math.pi / 2.0 ** n) ** 2)
    return total


def baseline_cost(alpha: float) -> float:
    """Baseline cost via the binary expansion alpha = sum a_n pi/2^n.

    Each set bit contributes the doubling-chain cost of its dyadic angle; the
    expansion stops once the residual is below 1e-12 * alpha.
    """
    if not 0.0 < alpha < math.pi:
        raise ValueError("alpha must lie in (0, pi)")
    residual = alpha
    total = 0.0
    n = 1
    while residual > 1e-12 * alpha and n <= 80:
        term = math.pi / 2.0 ** n
        if residual >= term - 1e-18:
            total += baseline_dyadic_cost(n)
            residual -= term
        n += 1
    return total


_shared: dict = {}


def shared_optimizer(config: OptimizerConfig | None = None) -> EntanglementOptimizer:
    """Process-wide optimizer cache keyed by configuration."""
    cfg = config or OptimizerConfig()
    if cfg not in _shared:
        _shared[cfg] = EntanglementOptimizer(cfg)
    return _shared[cfg]


def optimize_schedule(alpha: float, config: OptimizerConfig | None = None) -> CostProfile:
    return shared_optimizer(config).optimize_schedule(alpha)


def asymptotic_bound(A: float, tail_tol: float = 1e-14,
                     config: OptimizerConfig | None = None) -> float:
    return shared_optimizer(config).asymptotic_bound(A, tail_tol)


def sweep_entanglement_curve(alphas, config: OptimizerConfig | None = None):
    return shared_optimizer(config).sweep_entanglement_curve(alphas)
