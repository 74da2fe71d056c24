"""Classical-communication accounting for block-compressed protocol runs.

Worker messages compress to the entanglement rate by restricting the M-fold
resource to typical sequences and measuring jointly in the Fourier basis of
the typical subspace; the leader's position announcements do not compress.
Probabilities over bit sequences depend only on the number of ones, so set
sizes and captured mass are computed per Hamming shell (exact, O(M)); the
brute-force enumeration oracle lives in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .linalg import (
    StateVector,
    apply_local,
    basis_state,
    binary_entropy,
    project_subsystem,
    resource_entanglement,
    state,
)
from .optimizer import CostProfile
from .protocol import StageParams, gamma_for, failure_residual

MAX_BLOCK_LENGTH = 22


@dataclass(frozen=True)
class TypicalSetReport:
    """Size and captured probability of the delta-typical set at block length M."""

    M: int
    p: float
    delta: float
    set_size: int
    mass: float
    rate_variance: float

    def block_length_for(self, epsilon: float) -> int:
        """Chebyshev block length guaranteeing mass >= 1 - epsilon."""
        if epsilon <= 0 or self.delta <= 0:
            raise ValueError("need positive epsilon and delta")
        return max(1, math.ceil(self.rate_variance / (self.delta ** 2 * epsilon)))


@dataclass(frozen=True)
class CommProfile:
    """Per-use classical communication rates for one scheme."""

    alpha: float
    worker_bits_rate: float
    leader_bits_rate: float
    delta: float
    epsilon: float


def _shells(M: int, p: float):
    """Per-Hamming-weight (count, per-sequence probability, rate) triples."""
    for k in range(M + 1):
        if p in (0.0, 1.0):
            q = 1.0 if (p == 0.0 and k == 0) or (p == 1.0 and k == M) else 0.0
            rate = 0.0 if q > 0 else math.inf
        else:
            log2q = k * math.log2(p) + (M - k) * math.log2(1.0 - p)
            q = 2.0 ** log2q
            rate = -log2q / M
        yield math.comb(M, k), q, rate


def typical_set(M: int, p: float, delta: float) -> TypicalSetReport:
    """Sequences whose per-symbol information rate is within delta of h(p).

    Every member has probability >= 2^{-M (h + delta)}, so the size bound
    set_size <= 2^{M (h + delta)} holds unconditionally.
    """
    if not 1 <= M <= MAX_BLOCK_LENGTH:
        raise ValueError(f"block length {M} outside [1, {MAX_BLOCK_LENGTH}]")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    h = binary_entropy(p)
    size = 0
    mass = 0.0
    for count, q, rate in _shells(M, p):
        if rate != math.inf and abs(rate - h) <= delta + 1e-15:
            size += count
            mass += count * q
    if 0.0 < p < 1.0:
        var = p * (1 - p) * (math.log2((1 - p) / p)) ** 2
    else:
        var = 0.0
    return TypicalSetReport(M=M, p=p, delta=delta, set_size=size,
                            mass=min(mass, 1.0), rate_variance=var)


def compressed_state_fidelity(M: int, beta: float, delta: float) -> float:
    """|<psi_typical|psi>|^2 for the renormalized typical-set truncation.

    For the M-fold product resource, the squared amplitudes are the sequence
    probabilities, so the fidelity equals the typical set's captured mass.
    """
    report = typical_set(M, math.sin(beta) ** 2, delta)
    return report.mass


def worker_comm_rate(profile: CostProfile, delta: float) -> float:
    """Compressed worker-message rate, bits per use per worker party.

    Non-terminal stages compress at E(beta_l)(1+delta)^2; the terminal stage
    sends its single bit uncompressed.  At delta = 0 this equals the
    schedule's entanglement consumption (the terminal stage's bit matches its
    1 ebit).
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    total = 0.0
    probs = profile.stage_reach_probs
    for st, reach in zip(profile.schedule.stages, probs):
        total += reach * st.ebits * (1.0 + delta) ** 2
    if profile.schedule.terminal:
        total += probs[-1]
    return total


def leader_comm_rate(profile: CostProfile, mode: str = "uncompressed") -> float:
    """Leader position announcements: one bit per executed stage.

    `entropy_bound` replaces each stage's bit by h(p_success), a lower bound
    the block coding is not claimed to reach.
    """
    probs = profile.stage_reach_probs
    if mode == "uncompressed":
        return float(sum(probs))
    if mode == "entropy_bound":
        total = 0.0
        for st, reach in zip(profile.schedule.stages, probs):
            total += reach * binary_entropy(st.success_probability)
        if profile.schedule.terminal:
            total += probs[-1] * binary_entropy(0.5)
        return total
    raise ValueError(f"unknown mode {mode!r}")


def stage_success_probability(alpha: float, beta: float) -> float:
    """Success probability of a single stage targeting alpha with resource beta."""
    g = gamma_for(alpha, beta)
    return (math.cos(beta) ** 2 * math.cos(g) ** 2
            + math.sin(beta) ** 2 * math.sin(g) ** 2)


def optimize_leader_comm(alpha: float, delta: float = 0.05,
                         epsilon: float = 1e-3):
    """Single stage with beta maximizing the success probability.

    The failure branch falls back to the deterministic 1-ebit stage, so the
    leader sends h(p_fail) position bits per use plus p_fail fallback bits.
    Returns (beta, CommProfile, expected ebits).
    """
    if not 0.0 < alpha <= math.pi / 4:
        raise ValueError("alpha must lie in (0, pi/4]")
    n = 2048
    lnb = np.linspace(math.log(alpha * 1e-3), math.log(math.pi / 2 * 0.999), n)
    betas = np.exp(lnb)
    tg = math.tan(alpha) / np.tan(betas)
    c2g = 1.0 / (1.0 + tg ** 2)
    s2b = np.sin(betas) ** 2
    ps = (1.0 - s2b) * c2g + s2b * (1.0 - c2g)
    j = int(np.argmax(ps))
    lo, hi = lnb[max(j - 1, 0)], lnb[min(j + 1, n - 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0

    def neg_ps(lb):
        return -stage_success_probability(alpha, math.exp(lb))

    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = neg_ps(c), neg_ps(d)
    while math.exp(hi) - math.exp(lo) > 1e-12:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = neg_ps(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = neg_ps(d)
    beta = math.exp(0.5 * (lo + hi))
    p_fail = 1.0 - stage_success_probability(alpha, beta)
    leader = binary_entropy(p_fail) + p_fail
    worker = resource_entanglement(beta) * (1.0 + delta) ** 2 + p_fail
    ebits = resource_entanglement(beta) + p_fail
    return beta, CommProfile(alpha=alpha, worker_bits_rate=worker,
                             leader_bits_rate=leader, delta=delta,
                             epsilon=epsilon), ebits


def leader_ratio_curve(alphas):
    """Rows (alpha, leader_rate / alpha) for the communication-optimized stage."""
    alphas = sorted(float(a) for a in alphas)
    if alphas[0] <= 0:
        raise ValueError("alphas must be positive")
    if alphas[-1] / alphas[0] < 1e3 * (1.0 - 1e-9):
        raise ValueError("alpha grid must span at least three decades")
    rows = []
    for a in alphas:
        _, comm, _ = optimize_leader_comm(a)
        rows.append((a, comm.leader_bits_rate / a))
    return rows


def log_ratio_fit(rows):
    """Least squares of ratio against log2(1/alpha): (slope, intercept, r2)."""
    x = np.array([math.log2(1.0 / a) for a, _ in rows])
    y = np.array([r for _, r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# -- forced-outcome validation of the block Fourier measurement --------------

@dataclass(frozen=True)
class BlockCheckResult:
    M: int
    parties: int
    set_size: int
    worker_outcomes: tuple[int, ...]
    branches: tuple[str, ...]
    distance: float


def block_fourier_stage(alpha: float, beta: float, M: int, parties: int,
                        worker_outcomes, branches,
                        delta: float | None = None) -> BlockCheckResult:
    """Simulate M uses with a joint Fourier worker measurement, forced outcomes.

    Workers measure their share of the (typically truncated) M-fold resource
    in the Fourier basis of the typical-sequence index space and announce the
    modular sum; the leader phase-corrects and projects per use.  With the
    full sequence set the net operator must equal the tensor product of the
    per-use branch operators exactly; `distance` reports the scale- and
    phase-invariant deviation.  M <= 8 keeps the dense simulation feasible.
    """
    if not 1 <= M <= 8:
        raise ValueError("block simulation supports M <= 8")
    if parties < 2:
        raise ValueError("need at least two parties")
    p = math.sin(beta) ** 2
    h = binary_entropy(p)
    seqs = []
    for i in range(2 ** M):
        k = bin(i).count("1")
        if delta is None:
            seqs.append(i)
            continue
        q = p ** k * (1 - p) ** (M - k)
        if q > 0 and abs(-math.log2(q) / M - h) <= delta + 1e-15:
            seqs.append(i)
    d = len(seqs)
    if d == 0:
        raise ValueError("typical set is empty at these parameters")
    worker_outcomes = tuple(int(s) % d for s in worker_outcomes)
    if len(worker_outcomes) != parties - 1:
        raise ValueError("need one Fourier outcome per worker party")
    branches = tuple(branches)
    if len(branches) != M:
        raise ValueError("need one branch per use")

    g = gamma_for(alpha, beta)
    stage = StageParams(alpha=alpha, beta=beta, gamma=g)

    # amplitudes of the (renormalized) truncated resource
    mu = np.array([(1j * math.sin(beta)) ** bin(i).count("1")
                   * math.cos(beta) ** (M - bin(i).count("1")) for i in seqs])
    mu = mu / np.linalg.norm(mu)

    n_workers = parties - 1
    sys_dims = (2,) * (parties * M)
    dims = (d,) * n_workers + (2,) * M + sys_dims
    leader_off = n_workers
    sys_off = n_workers + M
    dim_sys = 2 ** (parties * M)
    omega = np.exp(2j * math.pi / d)

    # worker coupling: |idx(i)><idx(i)| (x) Z^{bits(i)} on that worker's uses
    zdiag_of = np.empty((d, 2 ** M))
    for kk, i in enumerate(seqs):
        zd = np.ones(2 ** M)
        for b in range(2 ** M):
            zd[b] = (-1.0) ** bin(b & i).count("1")
        zdiag_of[kk] = zd
    worker_block = np.zeros((d * 2 ** M, d * 2 ** M), dtype=complex)
    for kk in range(d):
        sl = slice(kk * 2 ** M, (kk + 1) * 2 ** M)
        worker_block[sl, sl] = np.diag(zdiag_of[kk])

    fourier = np.array([[omega ** (-(k * s)) for s in range(d)]
                        for k in range(d)]) / math.sqrt(d)
    s_tot = sum(worker_outcomes) % d
    corr = np.ones(2 ** M, dtype=complex)
    for kk, i in enumerate(seqs):
        corr[i] = omega ** (-(kk * s_tot))
    cz = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    proj = {
        "success": state((2,), [math.cos(g), math.sin(g)]),
        "failure": state((2,), [math.sin(g), -math.cos(g)]),
    }
    res = np.zeros(d ** n_workers * 2 ** M, dtype=complex)
    for kk, i in enumerate(seqs):
        idx = 0
        for _ in range(n_workers):
            idx = idx * d + kk
        res[idx * 2 ** M + i] = mu[kk]

    net = np.zeros((dim_sys, dim_sys), dtype=complex)
    for cidx in range(dim_sys):
        psi = StateVector(dims, np.kron(res, basis_state(sys_dims, cidx).amps))
        for w in range(n_workers):
            psi = apply_local(psi, worker_block,
                              [w] + [sys_off + w * M + m for m in range(M)])
        for m in range(M):
            psi = apply_local(psi, cz,
                              [leader_off + m, sys_off + (parties - 1) * M + m])
        amp_scale = 1.0
        for w in range(n_workers):
            onto = StateVector((d,), fourier[:, worker_outcomes[w]])
            psi, prob = project_subsystem(psi, 0, onto)
            if psi is None:
                raise ValueError("zero-probability forced Fourier outcome")
            amp_scale *= math.sqrt(prob)
        psi = apply_local(psi, np.diag(corr), list(range(M)))
        for m in range(M):
            psi, prob = project_subsystem(psi, 0, proj[branches[m]])
            if psi is None:
                raise ValueError("zero-probability forced branch")
            amp_scale *= math.sqrt(prob)
        net[:, cidx] = psi.amps * amp_scale

    # reference: tensor product of per-use branch rotations (scales are a
    # single global factor, removed by the normalized comparison below)
    ref_diag = np.ones(dim_sys, dtype=complex)
    for m, br in enumerate(branches):
        ang = stage.alpha if br == "success" else failure_residual(stage)
        for b in range(dim_sys):
            par = 0
            for j in range(parties):
                par ^= (b >> (parties * M - 1 - (j * M + m))) & 1
            ref_diag[b] *= np.exp(1j * ang * (1 - 2 * par))
    ref = np.diag(ref_diag)

    na = np.linalg.norm(net)
    nb = np.linalg.norm(ref)
    if na == 0 or nb == 0:
        dist = float(max(na, nb))
    else:
        a = net / na
        b = ref / nb
        ip = np.vdot(b, a)
        phase = ip / abs(ip) if abs(ip) > 0 else 1.0
        dist = float(np.max(np.abs(a - phase * b)))
    return BlockCheckResult(M=M, parties=parties, set_size=d,
                            worker_outcomes=worker_outcomes, branches=branches,
                            distance=dist)
