"""Exact simulation of the entanglement-assisted collective-Z stage protocol.

One *stage* couples a shared resource state cos(b)|0..0> + i sin(b)|1..1> to
the N system qubits with controlled-Z gates, measures the worker parties'
resource qubits in the Hadamard basis, parity-corrects at the leader, and
projects the leader's resource qubit.  The success branch applies
U(a) = exp(i a Z^(x)N); the failure branch applies U(a') for a known residual
a', which the next stage corrects.  A deterministic 1-ebit stage (b = pi/4)
terminates any chain.

Schedules store stage targets folded to the canonical range [0, pi/4]; the
runner reconciles canonical targets with the true remaining rotation by
inserting free local sigma-z layers (U(pi/2) is a local operation).
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .linalg import (
    OperatorMatrix,
    StateVector,
    Stator,
    PAULI_Z,
    HADAMARD,
    apply_local,
    basis_state,
    project_subsystem,
    resource_entanglement,
    resource_state,
    state,
)

EQ_CONSTRAINT_TOL = 1e-10

_CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def fold_pi(x: float) -> float:
    """Fold an angle into (-pi/2, pi/2] using U(x + pi) = -U(x)."""
    y = math.fmod(x + math.pi / 2, math.pi)
    if y <= 0.0:
        y += math.pi
    return y - math.pi / 2


def canon_angle(x: float) -> float:
    """Fold into [0, pi/4] using inversion symmetry and the local U(pi/2)."""
    y = abs(fold_pi(x))
    if y > math.pi / 4:
        y = math.pi / 2 - y
    return y


def split_canonical(x: float):
    """Write fold_pi(x) = sigma * a + k * pi/2 with a in [0, pi/4].

    Returns (a, sigma, k) with sigma in {-1, +1} and k in {-1, 0, +1}; the
    k * pi/2 part is realized by a free local sigma-z layer.
    """
    x = fold_pi(x)
    if abs(x) <= math.pi / 4:
        return abs(x), (1.0 if x >= 0 else -1.0), 0
    if x > 0:
        return math.pi / 2 - x, -1.0, 1
    return x + math.pi / 2, 1.0, -1


def gamma_for(alpha: float, beta: float) -> float:
    """Projection angle from tan(beta) tan(gamma) = tan(alpha), principal."""
    tb = math.tan(beta)
    if abs(math.sin(beta)) < 1e-12 or abs(math.cos(beta)) < 1e-12:
        if abs(math.sin(alpha)) < 1e-14:
            return 0.0
        raise ValueError(f"degenerate beta={beta} cannot target alpha={alpha}")
    return math.atan(math.tan(alpha) / tb)


@dataclass(frozen=True)
class StageParams:
    """One stage: target rotation alpha, resource beta, projection gamma."""

    alpha: float
    beta: float
    gamma: float
    stage_index: int = 0
    terminal: bool = False

    def __post_init__(self):
        lhs = math.sin(self.beta) * math.sin(self.gamma) * math.cos(self.alpha)
        rhs = math.cos(self.beta) * math.cos(self.gamma) * math.sin(self.alpha)
        if abs(lhs - rhs) > EQ_CONSTRAINT_TOL:
            raise ValueError(
                f"stage violates tan(beta) tan(gamma) = tan(alpha): "
                f"alpha={self.alpha}, beta={self.beta}, gamma={self.gamma}")

    @property
    def success_probability(self) -> float:
        """cos^2 b cos^2 g + sin^2 b sin^2 g; input-state independent."""
        return (math.cos(self.beta) ** 2 * math.cos(self.gamma) ** 2
                + math.sin(self.beta) ** 2 * math.sin(self.gamma) ** 2)

    @property
    def ebits(self) -> float:
        return resource_entanglement(self.beta)


def deterministic_stage(alpha: float, stage_index: int = 0) -> StageParams:
    """The 1-ebit stage (beta = pi/4, gamma = alpha); both branches correctable."""
    a = fold_pi(alpha)
    return StageParams(alpha=a, beta=math.pi / 4, gamma=a,
                       stage_index=stage_index, terminal=True)


def failure_residual(params: StageParams) -> float:
    """Rotation a' applied by the failure branch, folded to (-pi/2, pi/2]."""
    y = -math.sin(params.beta) * math.cos(params.gamma)
    x = math.cos(params.beta) * math.sin(params.gamma)
    if x == 0.0 and y == 0.0:
        return 0.0
    return fold_pi(math.atan2(y, x))


def failure_next_target(params: StageParams) -> float:
    """Canonical target of the correction stage after a failure."""
    return canon_angle(params.alpha - failure_residual(params))


@dataclass(frozen=True)
class StageSchedule:
    """Chained stages with canonical targets, optionally backed by a terminal stage."""

    alpha: float
    stages: tuple[StageParams, ...]
    max_stages: int
    terminal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        self.validate()

    def validate(self):
        if len(self.stages) + (1 if self.terminal else 0) > self.max_stages:
            raise ValueError("schedule longer than max_stages")
        target = canon_angle(self.alpha)
        for l, st in enumerate(self.stages):
            if st.terminal:
                raise ValueError("terminal stage must not appear in the chain")
            if abs(st.alpha - target) > 1e-9:
                raise ValueError(
                    f"stage {l}: target {st.alpha} inconsistent with chain value {target}")
            target = failure_next_target(st)
        if not self.terminal and target > 1e-12:
            raise ValueError(
                f"chain leaves residual {target} but has no terminal stage")

    @property
    def terminal_alpha(self) -> float:
        """Canonical residual handled by the terminal stage (0 if chain closes)."""
        target = canon_angle(self.alpha)
        for st in self.stages:
            target = failure_next_target(st)
        return target


def doubling_schedule(alpha: float, max_stages: int = 25) -> StageSchedule:
    """The beta_l = alpha_l baseline chain (gamma = pi/4, success chance 1/2)."""
    stages = []
    a = canon_angle(alpha)
    terminal = True
    for l in range(max_stages - 1):
        if a < 1e-12:
            terminal = False
            break
        st = StageParams(alpha=a, beta=a, gamma=math.pi / 4, stage_index=l)
        stages.append(st)
        a = failure_next_target(st)
    else:
        if a < 1e-12:
            terminal = False
    return StageSchedule(alpha=alpha, stages=tuple(stages),
                         max_stages=max_stages, terminal=terminal)


@dataclass(frozen=True)
class Forced:
    """Forced outcomes for one stage; worker_bits None means all zeros."""

    branch: str
    worker_bits: tuple | None = None


def collective_z(theta: float, parties: int) -> OperatorMatrix:
    """U(theta) = exp(i theta Z^(x)N) as an explicit diagonal."""
    idx = np.arange(2 ** parties)
    parity = np.zeros(2 ** parties, dtype=np.int64)
    for b in range(parties):
        parity ^= (idx >> b) & 1
    signs = 1.0 - 2.0 * parity
    return OperatorMatrix((2,) * parties, np.diag(np.exp(1j * theta * signs)),
                          unitary=True)


def z_layer(parties: int) -> OperatorMatrix:
    """Per-party sigma-z layer Z^(x)N = -i U(pi/2); a free local operation."""
    idx = np.arange(2 ** parties)
    parity = np.zeros(2 ** parties, dtype=np.int64)
    for b in range(parties):
        parity ^= (idx >> b) & 1
    return OperatorMatrix((2,) * parties, np.diag((1.0 - 2.0 * parity).astype(complex)),
                          unitary=True)


@dataclass(frozen=True)
class StageOutcome:
    state: StateVector
    branch: str
    worker_bits: tuple[int, ...]
    probability: float
    applied_angle: float
    zlayer_correction: bool = False


def coupling_stator(beta: float, parties: int) -> Stator:
    """The stator produced by Step 1: cos(b)|0..0> I + i sin(b)|1..1> Z^(x)N."""
    eye = [np.eye(2, dtype=complex)] * parties
    zzz = [PAULI_Z.copy()] * parties
    return Stator(resource_dim=2,
                  terms=((0, math.cos(beta), eye), (1, 1j * math.sin(beta), zzz)),
                  resource_parties=parties)


def run_stage(system: StateVector, params: StageParams, outcome_source) -> StageOutcome:
    """Simulate Steps 1-4 on the joint resource+system state vector.

    `outcome_source` is either a numpy Generator (sampled run) or a Forced
    record.  Forcing a branch whose probability is below 1e-14 is an error.
    """
    n = len(system.dims)
    if any(d != 2 for d in system.dims):
        raise ValueError("stage protocol acts on one qubit per party")
    forced = outcome_source if isinstance(outcome_source, Forced) else None
    rng = None if forced is not None else outcome_source

    psi = _couple(system, params.beta, n)

    worker_bits = []
    for j in range(n - 1):
        psi = apply_local(psi, HADAMARD, [0])
        if forced is not None:
            bit = 0 if forced.worker_bits is None else int(forced.worker_bits[j])
        else:
            _, p0 = project_subsystem(psi, 0, basis_state((2,), 0))
            bit = 0 if rng.random() < p0 else 1
        psi, prob = project_subsystem(psi, 0, basis_state((2,), bit))
        if psi is None:
            raise ValueError("zero-probability worker outcome forced")
        worker_bits.append(bit)

    if sum(worker_bits) % 2 == 1:
        psi = apply_local(psi, PAULI_Z, [0])

    g = params.gamma
    proj_success = state((2,), [math.cos(g), math.sin(g)])
    proj_failure = state((2,), [math.sin(g), -math.cos(g)])
    _, p_succ = project_subsystem(psi, 0, proj_success)
    if forced is not None:
        branch = forced.branch
        if branch not in ("success", "failure"):
            raise ValueError(f"unknown branch {branch!r}")
    else:
        branch = "success" if rng.random() < p_succ else "failure"
    proj = proj_success if branch == "success" else proj_failure
    psi, prob = project_subsystem(psi, 0, proj)
    if psi is None:
        raise ValueError(f"zero-probability forced branch {branch!r} "
                         f"(p = {prob:.3e})")
    applied = params.alpha if branch == "success" else failure_residual(params)
    return StageOutcome(state=psi, branch=branch, worker_bits=tuple(worker_bits),
                        probability=prob, applied_angle=applied)


def _couple(system: StateVector, beta: float, n: int) -> StateVector:
    """Step 1: attach the resource and apply per-party controlled-Z gates."""
    from .linalg import tensor

    joint = tensor([resource_state(beta, n), system])
    for j in range(n):
        joint = apply_local(joint, _CZ, [j, n + j])
    return joint


def run_deterministic_stage(system: StateVector, alpha: float,
                            outcome_source) -> StageOutcome:
    """The beta = pi/4 stage; the failure branch is fixed by a local Z layer.

    Either branch realizes U(alpha) up to a global phase, consuming exactly
    1 ebit and 1 bit of communication in each direction.
    """
    n = len(system.dims)
    params = deterministic_stage(alpha)
    out = run_stage(system, params, outcome_source)
    if out.branch == "failure":
        corrected = apply_local(out.state, z_layer(n).entries, list(range(n)))
        return StageOutcome(state=corrected, branch="failure",
                            worker_bits=out.worker_bits,
                            probability=out.probability,
                            applied_angle=params.alpha,
                            zlayer_correction=True)
    return out


@dataclass(frozen=True)
class StageRecord:
    stage_index: int
    branch: str
    worker_bits: tuple[int, ...]
    beta: float
    applied_angle: float
    zlayer_before: bool
    terminal: bool


@dataclass(frozen=True)
class Transcript:
    """Per-run record of outcomes, metered resources, and the net operator."""

    alpha: float
    outcomes: tuple[StageRecord, ...]
    ebits_consumed: float
    bits_from_workers: tuple[int, ...]
    bits_from_leader: int
    net_operator: OperatorMatrix
    final_state: StateVector
    succeeded_at: int | None


def run_protocol(alpha: float, schedule: StageSchedule, system: StateVector,
                 outcome_source) -> Transcript:
    """Run stages until success or the terminal stage; meter everything.

    `outcome_source` is a numpy Generator, or a sequence of Forced records
    consumed one per executed stage (terminal included).
    """
    schedule.validate()
    if abs(fold_pi(alpha) - fold_pi(schedule.alpha)) > 1e-12:
        raise ValueError("alpha does not match the schedule")
    n = len(system.dims)
    forced_seq = None
    rng = None
    if isinstance(outcome_source, np.random.Generator):
        rng = outcome_source
    else:
        forced_seq = list(outcome_source)

    def source(i):
        return rng if rng is not None else forced_seq[i]

    x = fold_pi(alpha)  # true remaining rotation
    net = np.eye(2 ** n, dtype=complex)
    psi = system
    records = []
    ebits = 0.0
    executed = 0
    succeeded_at = None

    if canon_angle(x) > 1e-12:
        for st in schedule.stages:
            a, sigma, k = split_canonical(x)
            if abs(a - st.alpha) > 1e-9:
                raise ValueError("runtime target diverged from the schedule chain")
            zlayer_before = k != 0
            if zlayer_before:
                layer = z_layer(n)
                psi = layer @ psi
                net = layer.entries @ net
            eff = StageParams(alpha=sigma * st.alpha, beta=st.beta,
                              gamma=sigma * st.gamma, stage_index=st.stage_index)
            out = run_stage(psi, eff, source(executed))
            psi = out.state
            net = collective_z(out.applied_angle, n).entries @ net
            ebits += st.ebits
            executed += 1
            records.append(StageRecord(stage_index=st.stage_index, branch=out.branch,
                                       worker_bits=out.worker_bits, beta=st.beta,
                                       applied_angle=out.applied_angle,
                                       zlayer_before=zlayer_before, terminal=False))
            if out.branch == "success":
                succeeded_at = st.stage_index
                x = 0.0
                break
            x = fold_pi(x - out.applied_angle
                        - (k * math.pi / 2 if zlayer_before else 0.0))
            if canon_angle(x) <= 1e-12:
                break
        else:
            if schedule.terminal:
                out = run_deterministic_stage(psi, x, source(executed))
                psi = out.state
                op = collective_z(out.applied_angle, n).entries
                if out.zlayer_correction:
                    op = z_layer(n).entries @ collective_z(
                        fold_pi(out.applied_angle - math.pi / 2), n).entries
                net = op @ net
                ebits += 1.0
                executed += 1
                records.append(StageRecord(stage_index=schedule.max_stages - 1,
                                           branch=out.branch,
                                           worker_bits=out.worker_bits,
                                           beta=math.pi / 4,
                                           applied_angle=out.applied_angle,
                                           zlayer_before=False, terminal=True))
                x = 0.0

    # a residual of +-pi/2 is a free local layer, not a protocol failure
    if abs(abs(fold_pi(x)) - math.pi / 2) < 1e-9:
        layer = z_layer(n)
        psi = layer @ psi
        net = layer.entries @ net

    return Transcript(alpha=alpha, outcomes=tuple(records), ebits_consumed=ebits,
                      bits_from_workers=(executed,) * (n - 1),
                      bits_from_leader=executed,
                      net_operator=OperatorMatrix((2,) * n, net, unitary=True),
                      final_state=psi, succeeded_at=succeeded_at)


def enumerate_protocol_leaves(alpha: float, schedule: StageSchedule,
                              system: StateVector):
    """Yield transcripts for every leaf of the branch tree (forced outcomes)."""
    n_chain = len(schedule.stages)
    for l in range(n_chain):
        forced = [Forced("failure")] * l + [Forced("success")]
        yield run_protocol(alpha, schedule, system, forced)
    tail = [Forced("failure")] * n_chain
    if schedule.terminal:
        for branch in ("success", "failure"):
            yield run_protocol(alpha, schedule, system, tail + [Forced(branch)])
    else:
        yield run_protocol(alpha, schedule, system, tail)


def empirical_net_operator(alpha: float, schedule: StageSchedule, parties: int,
                           forced) -> OperatorMatrix:
    """Assemble the net operator column-by-column from basis-state runs.

    Branch probabilities are input-state independent, so a forced outcome
    pattern is realizable for every basis input; the resulting columns share
    one positive scale and form the leaf's unitary.  This is the empirical
    counterpart checked against the oracle in tests and `verify`.
    """
    dim = 2 ** parties
    cols = np.zeros((dim, dim), dtype=complex)
    for c in range(dim):
        t = run_protocol(alpha, schedule, basis_state((2,) * parties, c),
                         list(forced))
        cols[:, c] = t.final_state.amps
    return OperatorMatrix((2,) * parties, cols, unitary=True)
