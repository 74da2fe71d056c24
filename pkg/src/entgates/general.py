"""General nonlocal unitaries U = sum_k lambda_k V_k^(1) (x) ... (x) V_k^(N).

The resource sum_k mu_k |k..k> is coupled through per-party controlled-V
operations; workers measure their resource register in the d-dimensional
Fourier basis, the leader undoes the accumulated phase with diag(w^{-k s})
for the modular outcome sum s, then projects onto sum_k nu_k |k>.  Whenever
mu_k nu_k^* is proportional to lambda_k the success branch applies U exactly;
the success probability is state-independent and equals 1/(sum_k |lambda_k|)^2
for the square-root resource policy.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .linalg import (
    OperatorMatrix,
    StateVector,
    apply_local,
    project_subsystem,
    tensor,
)
from .protocol import canon_angle

UNITARY_ASSEMBLY_TOL = 1e-9


@dataclass(frozen=True)
class TensorDecomposition:
    """Terms (lambda_k, per-party unitaries); term 0 is the identity term."""

    terms: tuple
    parties: int

    def __post_init__(self):
        terms = []
        for lam, ops in self.terms:
            ops = tuple(np.array(o, dtype=complex) for o in ops)
            if len(ops) != self.parties:
                raise ValueError("each term needs one operator per party")
            for o in ops:
                o.flags.writeable = False
            terms.append((complex(lam), ops))
        object.__setattr__(self, "terms", tuple(terms))
        lam0, ops0 = self.terms[0]
        for o in ops0:
            if np.max(np.abs(o - np.eye(o.shape[0]))) > 1e-12:
                raise ValueError("term 0 must carry identity operators")
        mags = [abs(l) for l, _ in self.terms]
        if abs(lam0) + 1e-9 < max(mags):
            raise ValueError("|lambda_0| must be maximal")
        U = self.assemble()
        err = np.max(np.abs(U.entries.conj().T @ U.entries
                            - np.eye(U.entries.shape[0])))
        if err > UNITARY_ASSEMBLY_TOL:
            raise ValueError(f"terms do not assemble to a unitary ({err:.3e})")

    @property
    def resource_dim(self) -> int:
        return len(self.terms)

    @property
    def system_dims(self) -> tuple[int, ...]:
        return tuple(o.shape[0] for o in self.terms[0][1])

    def assemble(self) -> OperatorMatrix:
        total = None
        for lam, ops in self.terms:
            M = np.array([[1.0 + 0j]])
            for o in ops:
                M = np.kron(M, o)
            total = lam * M if total is None else total + lam * M
        return OperatorMatrix(self.system_dims, total)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([l for l, _ in self.terms])


_SIGMA = (np.eye(2, dtype=complex),
          np.array([[0, 1], [1, 0]], dtype=complex),
          np.array([[0, -1j], [1j, 0]], dtype=complex),
          np.array([[1, 0], [0, -1]], dtype=complex))


def canonical_two_qubit(theta) -> TensorDecomposition:
    """exp(i sum_j theta_j s_j (x) s_j) expanded over the s_k (x) s_k basis.

    The three commuting exponentials multiply out to four coefficients; e.g.
    lambda_0 = cx cy cz + i sx sy sz.
    """
    tx, ty, tz = (float(t) for t in theta)
    for t in (tx, ty, tz):
        if abs(t) > math.pi / 4 + 1e-12:
            raise ValueError("canonical angles must lie in [-pi/4, pi/4]")
    cx, cy, cz = math.cos(tx), math.cos(ty), math.cos(tz)
    sx, sy, sz = math.sin(tx), math.sin(ty), math.sin(tz)
    lam = (cx * cy * cz + 1j * sx * sy * sz,
           1j * sx * cy * cz + sy * sz * cx,
           1j * sy * cx * cz + sx * sz * cy,
           1j * sz * cx * cy + sx * sy * cz)
    terms = tuple((lam[k], (_SIGMA[k], _SIGMA[k])) for k in range(4))
    return TensorDecomposition(terms=terms, parties=2)


def diagonal_family(phases, parties: int) -> TensorDecomposition:
    """Diagonal U with per-party V_k = diag(1, w^k): inverse DFT of the phases.

    The joint phase on |b_1..b_N> depends on (sum b_j) mod d, so d phases
    define the unitary; useful as an N-party test family with d up to 4.
    """
    phases = [float(p) for p in phases]
    d = len(phases)
    if d < 2:
        raise ValueError("need at least two phases")
    if abs(phases[0]) > 1e-12:
        raise ValueError("phase of the zero residue must vanish "
                         "(identity term must dominate)")
    w = np.exp(2j * math.pi / d)
    lam = [sum(np.exp(1j * phases[B]) * w ** (-(k * B)) for B in range(d)) / d
           for k in range(d)]
    terms = []
    for k in range(d):
        V = np.diag([1.0, w ** k]).astype(complex)
        terms.append((lam[k], tuple(V for _ in range(parties))))
    return TensorDecomposition(terms=tuple(terms), parties=parties)


@dataclass(frozen=True)
class ResourceDesign:
    """Resource amplitudes mu and success projector amplitudes nu."""

    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex).copy()
        nu = np.asarray(self.nu, dtype=complex).copy()
        for name, v in (("mu", mu), ("nu", nu)):
            n = np.linalg.norm(v)
            if abs(n - 1.0) > 1e-12:
                raise ValueError(f"{name} must be unit norm")
        mu.flags.writeable = False
        nu.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    def constraint_error(self, decomp: TensorDecomposition) -> float:
        """max_k |mu_k nu_k^* - c lambda_k| for the best single scale c."""
        prod = self.mu * self.nu.conj()
        lam = decomp.lambdas
        denom = np.vdot(lam, lam)
        c = np.vdot(lam, prod) / denom if abs(denom) > 0 else 0.0
        return float(np.max(np.abs(prod - c * lam)))


def design_resource(decomp: TensorDecomposition, policy="sqrt") -> ResourceDesign:
    """Resource/projector amplitudes with mu_k nu_k^* proportional to lambda_k.

    The sqrt policy takes |mu_k| = |nu_k| = sqrt(|lambda_k|) (normalized) and
    pushes the phases of lambda into nu.  Passing an amplitude vector instead
    of "sqrt" fixes mu and solves for nu, which fails when mu_k = 0 but
    lambda_k != 0.
    """
    lam = decomp.lambdas
    scale = np.sum(np.abs(lam))
    if scale == 0:
        raise ValueError("lambda coefficients are all zero")
    if isinstance(policy, str):
        if policy != "sqrt":
            raise ValueError(f"unknown policy {policy!r}")
        mu = np.sqrt(np.abs(lam) / scale).astype(complex)
        nu = np.zeros_like(mu)
        nz = np.abs(lam) > 0
        nu[nz] = lam[nz].conj() / np.sqrt(np.abs(lam[nz]) * scale)
    else:
        mu = np.asarray(policy, dtype=complex)
        if mu.shape != lam.shape:
            raise ValueError("custom mu has the wrong length")
        mu = mu / np.linalg.norm(mu)
        bad = (np.abs(mu) < 1e-14) & (np.abs(lam) > 1e-14)
        if np.any(bad):
            raise ValueError(
                f"constraint unsatisfiable: mu_k = 0 at k = "
                f"{np.nonzero(bad)[0].tolist()} where lambda_k != 0")
        nu = np.zeros_like(mu)
        nz = np.abs(mu) >= 1e-14
        nu[nz] = (lam[nz] / mu[nz]).conj()
        n = np.linalg.norm(nu)
        if n == 0:
            raise ValueError("derived nu is zero")
        nu = nu / n
    design = ResourceDesign(mu=mu, nu=nu)
    err = design.constraint_error(decomp)
    if err > 1e-10:
        raise ValueError(f"design violates mu nu^* ~ lambda ({err:.3e})")
    return design


def leader_basis(design: ResourceDesign) -> np.ndarray:
    """Orthonormal measurement basis: nu completed by Gram-Schmidt over e_k."""
    d = design.nu.shape[0]
    basis = [design.nu.astype(complex)]
    for k in range(d):
        v = np.zeros(d, dtype=complex)
        v[k] = 1.0
        for b in basis:
            v = v - np.vdot(b, v) * b
        n = np.linalg.norm(v)
        if n > 1e-9:
            basis.append(v / n)
        if len(basis) == d:
            break
    return np.array(basis)


@dataclass(frozen=True)
class GeneralForced:
    worker_outcomes: tuple
    branch: int  # 0 = success (projection onto nu)


@dataclass(frozen=True)
class GeneralOutcome:
    state: StateVector
    branch: int
    worker_outcomes: tuple[int, ...]
    probability: float
    branch_operator: OperatorMatrix


def run_general_protocol(decomp: TensorDecomposition, design: ResourceDesign,
                         system: StateVector, outcome_source) -> GeneralOutcome:
    """Couple, Fourier-measure the workers, phase-correct, project the leader.

    Returns the post-measurement system state, the leader branch (0 means the
    net operation is U itself), and the applied branch operator
    sum_k mu_k nu'_k^* (x)_j V_k^(j) for the realized outcome nu'.
    """
    n = decomp.parties
    d = decomp.resource_dim
    if d > 8:
        raise ValueError("resource dimension above 8 is not supported densely")
    if system.dims != decomp.system_dims:
        raise ValueError("system dims do not match the decomposition")
    forced = outcome_source if isinstance(outcome_source, GeneralForced) else None
    rng = None if forced is not None else outcome_source

    res = np.zeros(d ** n, dtype=complex)
    for k in range(d):
        idx = 0
        for _ in range(n):
            idx = idx * d + k
        res[idx] = design.mu[k]
    psi = tensor([StateVector((d,) * n, res), system])

    for j in range(n):
        dim_j = decomp.system_dims[j]
        block = np.zeros((d * dim_j, d * dim_j), dtype=complex)
        for k, (_, ops) in enumerate(decomp.terms):
            block[k * dim_j:(k + 1) * dim_j, k * dim_j:(k + 1) * dim_j] = ops[j]
        psi = apply_local(psi, block, [j, n + j])

    w = np.exp(2j * math.pi / d)
    fourier = np.array([[w ** (-(k * s)) for s in range(d)]
                        for k in range(d)]) / math.sqrt(d)
    outcomes = []
    for jw in range(n - 1):
        if forced is not None:
            s = int(forced.worker_outcomes[jw]) % d
        else:
            probs = []
            for s in range(d):
                _, p = project_subsystem(psi, 0, StateVector((d,), fourier[:, s]))
                probs.append(p)
            s = int(rng.choice(d, p=np.array(probs) / sum(probs)))
        psi, prob = project_subsystem(psi, 0, StateVector((d,), fourier[:, s]))
        if psi is None:
            raise ValueError("zero-probability forced worker outcome")
        outcomes.append(s)

    s_tot = sum(outcomes) % d
    corr = np.diag([w ** (-(k * s_tot)) for k in range(d)])
    psi = apply_local(psi, corr, [0])

    basis = leader_basis(design)
    if forced is not None:
        branch = int(forced.branch)
        if not 0 <= branch < d:
            raise ValueError(f"branch index {branch} out of range")
    else:
        probs = []
        for b in range(d):
            _, p = project_subsystem(psi, 0, StateVector((d,), basis[b]))
            probs.append(p)
        branch = int(rng.choice(d, p=np.array(probs) / sum(probs)))
    psi, prob = project_subsystem(psi, 0, StateVector((d,), basis[branch]))
    if psi is None:
        raise ValueError(f"zero-probability forced branch {branch}")

    coeffs = design.mu * basis[branch].conj()
    op = None
    for k, (_, ops) in enumerate(decomp.terms):
        M = np.array([[1.0 + 0j]])
        for o in ops:
            M = np.kron(M, o)
        op = coeffs[k] * M if op is None else op + coeffs[k] * M
    return GeneralOutcome(state=psi, branch=branch,
                          worker_outcomes=tuple(outcomes), probability=prob,
                          branch_operator=OperatorMatrix(decomp.system_dims, op))


def success_probability(decomp: TensorDecomposition) -> float:
    """State-independent success chance of the sqrt design: 1/(sum |lambda|)^2."""
    return 1.0 / float(np.sum(np.abs(decomp.lambdas))) ** 2


@dataclass(frozen=True)
class FailureCostReport:
    policy: str
    failure_probability: float
    ebits: float
    bits: float
    next_decomp: TensorDecomposition | None = None
    next_design: ResourceDesign | None = None


def failure_policy_cost(decomp: TensorDecomposition, design: ResourceDesign,
                        policy: str) -> FailureCostReport:
    """Cost accounting for the two failure-handling policies.

    `iterate` reduces a two-term self-inverse decomposition to the next-round
    rotation (the collective-Z recursion); `teleport` only accounts 2 ebits
    plus 4 bits per teleported subsystem pair (round trip).
    """
    p_fail = 1.0 - min(1.0, success_probability(decomp))
    if policy == "teleport":
        logs = sum(math.log2(dm) for dm in decomp.system_dims[:-1])
        return FailureCostReport(policy="teleport",
                                 failure_probability=p_fail,
                                 ebits=2.0 * logs, bits=4.0 * logs)
    if policy != "iterate":
        raise ValueError(f"unknown policy {policy!r}")
    support = [k for k, (lam, _) in enumerate(decomp.terms) if abs(lam) > 1e-14]
    if len(support) == 1:
        return FailureCostReport(policy="iterate", failure_probability=0.0,
                                 ebits=0.0, bits=0.0)
    if len(support) != 2 or support[0] != 0:
        raise ValueError("iterate policy is defined for two-term "
                         "decompositions only")
    lam1, ops = decomp.terms[support[1]]
    for o in ops:
        if np.max(np.abs(o @ o - np.eye(o.shape[0]))) > 1e-10:
            raise ValueError("iterate policy needs self-inverse operators")
    lams = np.array([decomp.terms[0][0], lam1])
    target = _two_term_angle(lams)
    sub_design = ResourceDesign(mu=design.mu[support], nu=design.nu[support])
    basis = leader_basis(sub_design)
    coeffs = sub_design.mu * basis[1].conj()
    residual = _two_term_angle(coeffs)
    # canonical correction target; sign and pi/2 parts are free local layers
    nxt = canon_angle(target - residual)
    lam = (math.cos(nxt), 1j * math.sin(nxt))
    next_decomp = TensorDecomposition(
        terms=((lam[0], decomp.terms[0][1]), (lam[1], ops)),
        parties=decomp.parties)
    next_design = design_resource(next_decomp, "sqrt")
    return FailureCostReport(policy="iterate", failure_probability=p_fail,
                             ebits=0.0, bits=0.0, next_decomp=next_decomp,
                             next_design=next_design)


def _two_term_angle(coeffs) -> float:
    """Angle t with (c_0, c_1) proportional to (cos t, i sin t)."""
    c0, c1 = complex(coeffs[0]), complex(coeffs[1])
    if abs(c0) < 1e-15:
        return math.pi / 2
    rel = c1 / c0
    if abs(rel.real) > 1e-9 * max(1.0, abs(rel)):
        raise ValueError("coefficients are not of the rotation form")
    return math.atan(rel.imag)


def failure_vanishing_check(family, s_values):
    """Rows (s, p_fail) for a family of decompositions approaching identity."""
    rows = []
    for s in s_values:
        decomp = family(s)
        design_resource(decomp, "sqrt")
        rows.append((float(s), 1.0 - min(1.0, success_probability(decomp))))
    return rows
