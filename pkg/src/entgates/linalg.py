"""Dense complex linear algebra over tensor-product Hilbert spaces.

Everything downstream (protocol simulation, the Hamiltonian compiler, the
general stator protocol) is verified against the matrix-exponential oracle
defined here, so this module deliberately depends on nothing but numpy.

Conventions fixed project-wide:
  * party 1 is the most significant digit of a joint basis index,
  * operator equality is always judged up to a global phase via
    ``op_distance_phase_invariant``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-10
MAX_JOINT_DIM = 2 ** 22

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


class DimensionError(ValueError):
    """Joint dimension exceeds the dense-simulation guard."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=complex)
    arr.flags.writeable = False
    return arr


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"invalid subsystem dimensions {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > MAX_JOINT_DIM:
        raise DimensionError(
            f"joint dimension {total} exceeds dense guard {MAX_JOINT_DIM}")
    return dims


@dataclass(frozen=True)
class StateVector:
    """Pure state over subsystems ``dims``, amplitudes in joint-index order."""

    dims: tuple[int, ...]
    amps: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        amps = _freeze(np.asarray(self.amps).reshape(-1))
        if amps.shape[0] != int(np.prod(dims)):
            raise ValueError(
                f"amplitude length {amps.shape[0]} != product of dims {dims}")
        if abs(np.vdot(amps, amps).real - 1.0) > NORM_TOL:
            raise ValueError("state is not normalized within 1e-12")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amps, other.amps))


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense square operator over subsystems ``dims``."""

    dims: tuple[int, ...]
    entries: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        dims = _check_dims(self.dims)
        entries = _freeze(np.asarray(self.entries))
        side = int(np.prod(dims))
        if entries.shape != (side, side):
            raise ValueError(
                f"operator shape {entries.shape} != ({side}, {side})")
        if self.unitary:
            err = np.max(np.abs(entries.conj().T @ entries - np.eye(side)))
            if err > UNITARY_TOL:
                raise ValueError(f"operator flagged unitary but U^dag U - I = {err:.3e}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.dims, self.entries.conj().T, unitary=self.unitary)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            if other.dims != self.dims:
                raise ValueError("dimension mismatch in operator product")
            return OperatorMatrix(self.dims, self.entries @ other.entries,
                                  unitary=self.unitary and other.unitary)
        if isinstance(other, StateVector):
            if other.dims != self.dims:
                raise ValueError("dimension mismatch in operator application")
            return StateVector(self.dims, self.entries @ other.amps)
        return NotImplemented


def state(dims, amps) -> StateVector:
    """Normalize and wrap raw amplitudes."""
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    n = np.linalg.norm(amps)
    if n == 0:
        raise ValueError("cannot normalize the zero vector")
    return StateVector(tuple(dims), amps / n)


def basis_state(dims, index: int) -> StateVector:
    amps = np.zeros(int(np.prod(tuple(dims))), dtype=complex)
    amps[index] = 1.0
    return StateVector(tuple(dims), amps)


def tensor(items):
    """Kronecker product of states or operators, party 1 most significant."""
    items = list(items)
    if not items:
        raise ValueError("tensor() needs a non-empty list")
    if all(isinstance(x, StateVector) for x in items):
        dims: tuple[int, ...] = ()
        amps = np.array([1.0 + 0j])
        for x in items:
            dims = dims + x.dims
            _check_dims(dims)
            amps = np.kron(amps, x.amps)
        return StateVector(dims, amps)
    if all(isinstance(x, OperatorMatrix) for x in items):
        dims = ()
        ent = np.array([[1.0 + 0j]])
        unit = True
        for x in items:
            dims = dims + x.dims
            _check_dims(dims)
            ent = np.kron(ent, x.entries)
            unit = unit and x.unitary
        return OperatorMatrix(dims, ent, unitary=unit)
    raise TypeError("tensor() arguments must be all states or all operators")


def expm_oracle(H: OperatorMatrix, scale: float) -> OperatorMatrix:
    """exp(i*scale*H) for hermitian H, by scaling-and-squaring of the series.

    This is the verification oracle for the whole package: it shares no code
    with the protocol simulator or the compiler, and truncates the Taylor
    series only when a term's max norm falls below 1e-16.
    """
    A = np.asarray(H.entries)
    herm_err = np.max(np.abs(A - A.conj().T))
    if herm_err > HERMITIAN_TOL:
        raise ValueError(f"expm_oracle needs a hermitian input, deviation {herm_err:.3e}")
    M = 1j * scale * A
    norm = np.max(np.sum(np.abs(M), axis=1))
    s = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    B = M / (2 ** s)
    n = B.shape[0]
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    k = 1
    while True:
        term = term @ B / k
        result = result + term
        if np.max(np.abs(term)) < 1e-16:
            break
        k += 1
        if k > 200:  # series for ||B|| <= 1/2 converges long before this
            raise RuntimeError("expm_oracle series failed to converge")
    for _ in range(s):
        result = result @ result
    return OperatorMatrix(H.dims, result, unitary=True)


def binary_entropy(p: float) -> float:
    """h(p) = -p log2 p - (1-p) log2 (1-p), with h(0) = h(1) = 0."""
    p = float(p)
    if -NORM_TOL <= p < 0.0:
        p = 0.0
    if 1.0 < p <= 1.0 + NORM_TOL:
        p = 1.0
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def resource_state(beta: float, parties: int) -> StateVector:
    """cos(beta)|0...0> + i sin(beta)|1...1> on `parties` qubits."""
    if parties < 2:
        raise ValueError("resource state needs at least 2 parties")
    dims = (2,) * parties
    _check_dims(dims)
    amps = np.zeros(2 ** parties, dtype=complex)
    amps[0] = math.cos(beta)
    amps[-1] = 1j * math.sin(beta)
    return StateVector(dims, amps)


def resource_entanglement(beta: float) -> float:
    """Ebits held by the resource state: h(sin^2 beta)."""
    return binary_entropy(math.sin(beta) ** 2)


def project_subsystem(psi: StateVector, party: int, onto: StateVector):
    """Project one subsystem onto `onto`; returns (remaining state, probability).

    The remaining state is over the other subsystems, renormalized.  A branch
    with probability below 1e-14 is flagged by returning None for the state.
    """
    if not 0 <= party < len(psi.dims):
        raise ValueError(f"party index {party} out of range")
    d = psi.dims[party]
    if onto.dims != (d,):
        raise ValueError(f"projector dimension {onto.dims} != subsystem dim {d}")
    pre = int(np.prod(psi.dims[:party], initial=1))
    post = int(np.prod(psi.dims[party + 1:], initial=1))
    cube = psi.amps.reshape(pre, d, post)
    reduced = np.tensordot(onto.amps.conj(), cube, axes=([0], [1]))
    prob = float(np.vdot(reduced, reduced).real)
    if prob < 1e-14:
        return None, prob
    rest_dims = psi.dims[:party] + psi.dims[party + 1:]
    if not rest_dims:
        rest_dims = (1,)
    return StateVector(rest_dims, reduced.reshape(-1) / math.sqrt(prob)), prob


def apply_local(psi: StateVector, op: np.ndarray, parties) -> StateVector:
    """Apply an operator to the listed subsystems of a state (in that order)."""
    parties = list(parties)
    dims = psi.dims
    n = len(dims)
    block = int(np.prod([dims[q] for q in parties]))
    op = np.asarray(op, dtype=complex)
    if op.shape != (block, block):
        raise ValueError(f"operator shape {op.shape} != block dim {block}")
    t = psi.amps.reshape(dims)
    t = np.tensordot(op.reshape([dims[q] for q in parties] * 2), t,
                     axes=(list(range(len(parties), 2 * len(parties))), parties))
    # tensordot moved the acted-on axes to the front; restore original order
    rest = [q for q in range(n) if q not in parties]
    perm = np.argsort(parties + rest)
    t = np.transpose(t, perm)
    return StateVector(dims, t.reshape(-1))


def op_distance_phase_invariant(A: OperatorMatrix, B: OperatorMatrix) -> float:
    """min over global phase phi of max-entry |A - e^{i phi} B|.

    Zero iff A and B are equal up to a global phase.  The Frobenius-optimal
    phase seeds a coarse scan plus golden-section refinement of the max-norm.
    """
    if A.dims != B.dims:
        raise ValueError("dimension mismatch")
    a, b = A.entries, B.entries

    def dist(phi: float) -> float:
        return float(np.max(np.abs(a - np.exp(1j * phi) * b)))

    ip = np.vdot(b, a)
    candidates = [float(np.angle(ip))] if abs(ip) > 0 else []
    grid = np.linspace(0.0, 2.0 * math.pi, 181, endpoint=False)
    vals = [dist(p) for p in grid]
    candidates.append(float(grid[int(np.argmin(vals))]))
    best = min(dist(p) for p in candidates)
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    for p0 in candidates:
        lo, hi = p0 - 0.05, p0 + 0.05
        c = hi - gr * (hi - lo)
        d_ = lo + gr * (hi - lo)
        fc, fd = dist(c), dist(d_)
        for _ in range(60):
            if fc < fd:
                hi, d_, fd = d_, c, fc
                c = hi - gr * (hi - lo)
                fc = dist(c)
            else:
                lo, c, fc = c, d_, fd
                d_ = lo + gr * (hi - lo)
                fd = dist(d_)
        best = min(best, fc, fd)
    return best


@dataclass(frozen=True)
class Stator:
    """Hybrid state-operator object: sum of (label, coefficient, local ops).

    Acting on a system state |chi> yields
        sum_k c_k |k>^(x n_resource_parties) (x) (V_k^(1) (x) ... ) |chi>,
    i.e. each term applies its operators and appends its resource label.
    """

    resource_dim: int
    terms: tuple
    resource_parties: int = 1

    def __post_init__(self):
        terms = []
        total = 0.0
        for label, coeff, ops in self.terms:
            label = int(label)
            if not 0 <= label < self.resource_dim:
                raise ValueError(f"label {label} outside resource dimension")
            ops = tuple(_freeze(np.asarray(o)) for o in ops)
            for o in ops:
                if o.shape[0] != o.shape[1]:
                    raise ValueError("per-party operators must be square")
                err = np.max(np.abs(o.conj().T @ o - np.eye(o.shape[0])))
                if err > UNITARY_TOL:
                    raise ValueError(f"per-party operator not unitary ({err:.3e})")
            total += abs(coeff) ** 2
            terms.append((label, complex(coeff), ops))
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError("stator coefficients must satisfy sum |c|^2 = 1")
        if len({t[0] for t in terms}) != len(terms):
            raise ValueError("stator labels must be distinct")
        object.__setattr__(self, "terms", tuple(terms))

    def apply(self, chi: StateVector) -> StateVector:
        """Action on a system state; resource registers come first."""
        d = self.resource_dim
        out_dims = (d,) * self.resource_parties + chi.dims
        _check_dims(out_dims)
        runs = _party_runs(chi.dims, [o.shape[0] for o in self.terms[0][2]])
        out = np.zeros(int(np.prod(out_dims)), dtype=complex)
        stride = chi.dim
        for label, coeff, ops in self.terms:
            applied = chi
            for run, o in zip(runs, ops):
                applied = apply_local(applied, o, run)
            idx = 0
            for _ in range(self.resource_parties):
                idx = idx * d + label
            out[idx * stride:(idx + 1) * stride] += coeff * applied.amps
        return StateVector(out_dims, out)


def _party_runs(sys_dims, sizes):
    """Split subsystems into contiguous runs matching per-party operator dims."""
    if int(np.prod(sizes)) != int(np.prod(sys_dims)):
        raise ValueError("stator per-party operators do not cover the system")
    runs = []
    k = 0
    for s in sizes:
        acc = 1
        start = k
        while acc < s:
            acc *= sys_dims[k]
            k += 1
        if acc != s:
            raise ValueError("per-party operator dims incompatible with state dims")
        runs.append(list(range(start, k)))
    return runs
