"""Compile tensor-product Hamiltonian evolution into collective-Z schedules.

exp(i t H1 (x) ... (x) HN) factors into local basis changes around a diagonal
evolution.  Each party attaches a carrier qubit; conditional swaps toggle the
carrier at fractions p_l = (a_l + 1)/2 of every interval so each eigenlevel
accumulates phase at its own rate a_l, and the collective-Z rotations supply
the shared clock.  All segment generators are diagonal in one computational
basis, so a single-term compilation is exact for any slice count; sums of
terms Trotterize with first-order error O(1/m).

Levels with a_l = +-1 need no swap events at all: the carrier is pinned by
the subspace embedding, which is why self-inverse factors compile to a bare
rotation between basis changes.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np

from .linalg import HERMITIAN_TOL, OperatorMatrix
from .optimizer import OPTIMIZED_EBIT_RATE
from .protocol import canon_angle

MAX_FACTOR_DIM = 4


class HamiltonianFormatError(ValueError):
    """Malformed Hamiltonian specification (file or in-memory)."""


@dataclass(frozen=True)
class HamiltonianSpec:
    """Sum of tensor-product terms, an evolution time, and a slice count."""

    terms: tuple[tuple[np.ndarray, ...], ...]
    time: float
    slices: int = 1

    def __post_init__(self):
        if self.slices < 1:
            raise HamiltonianFormatError("slices must be >= 1")
        if not self.terms:
            raise HamiltonianFormatError("need at least one tensor-product term")
        parties = len(self.terms[0])
        frozen = []
        for k, term in enumerate(self.terms):
            if len(term) != parties:
                raise HamiltonianFormatError(
                    f"term {k} has {len(term)} factors, expected {parties}")
            fs = []
            for j, H in enumerate(term):
                H = np.asarray(H, dtype=complex)
                if H.ndim != 2 or H.shape[0] != H.shape[1]:
                    raise HamiltonianFormatError(
                        f"term {k} factor {j} is not a square matrix")
                if H.shape[0] > MAX_FACTOR_DIM:
                    raise HamiltonianFormatError(
                        f"term {k} factor {j} has dimension {H.shape[0]} > "
                        f"{MAX_FACTOR_DIM}")
                dev = np.max(np.abs(H - H.conj().T))
                if dev > HERMITIAN_TOL:
                    raise HamiltonianFormatError(
                        f"term {k} factor {j} is not hermitian "
                        f"(deviation {dev:.3e})")
                H = H.copy()
                H.flags.writeable = False
                fs.append(H)
            frozen.append(tuple(fs))
        object.__setattr__(self, "terms", tuple(frozen))

    @classmethod
    def single(cls, factors, time: float, slices: int = 1) -> "HamiltonianSpec":
        return cls(terms=(tuple(factors),), time=time, slices=slices)

    @property
    def parties(self) -> int:
        return len(self.terms[0])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(H.shape[0] for H in self.terms[0])

    def dense(self) -> OperatorMatrix:
        """The full Hamiltonian as one dense hermitian matrix."""
        total = None
        for term in self.terms:
            M = np.array([[1.0 + 0j]])
            for H in term:
                M = np.kron(M, H)
            total = M if total is None else total + M
        return OperatorMatrix(self.dims, total)


def load_hamiltonian(source) -> HamiltonianSpec:
    """Parse the JSON Hamiltonian format ({"factors"| "terms", "time", "slices"}).

    Complex entries are [re, im] pairs; plain numbers are taken as real.
    """
    if isinstance(source, (str,)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise HamiltonianFormatError("top level must be a JSON object")
    if "time" not in doc:
        raise HamiltonianFormatError("missing field 'time'")
    time = doc["time"]
    if not isinstance(time, (int, float)):
        raise HamiltonianFormatError("field 'time' must be a number")
    slices = doc.get("slices", 1)
    if not isinstance(slices, int) or slices < 1:
        raise HamiltonianFormatError("field 'slices' must be a positive integer")
    if ("factors" in doc) == ("terms" in doc):
        raise HamiltonianFormatError(
            "exactly one of 'factors' or 'terms' must be present")
    raw_terms = [doc["factors"]] if "factors" in doc else doc["terms"]
    terms = []
    for k, term in enumerate(raw_terms):
        if not isinstance(term, list) or not term:
            raise HamiltonianFormatError(f"term {k} must be a non-empty list")
        factors = []
        for j, mat in enumerate(term):
            try:
                factors.append(_parse_matrix(mat))
            except HamiltonianFormatError as e:
                raise HamiltonianFormatError(
                    f"term {k} factor {j}: {e}") from None
        terms.append(tuple(factors))
    return HamiltonianSpec(terms=tuple(terms), time=float(time), slices=slices)


def _parse_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise HamiltonianFormatError("matrix must be a non-empty list of rows")
    n = len(rows)
    out = np.zeros((n, n), dtype=complex)
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise HamiltonianFormatError(f"row {r} must have {n} entries")
        for c, ent in enumerate(row):
            if isinstance(ent, (int, float)):
                out[r, c] = float(ent)
            elif (isinstance(ent, list) and len(ent) == 2
                  and all(isinstance(x, (int, float)) for x in ent)):
                out[r, c] = complex(ent[0], ent[1])
            else:
                raise HamiltonianFormatError(
                    f"entry ({r},{c}) must be a number or an [re, im] pair")
    return out


@dataclass(frozen=True)
class DiagonalizedForm:
    """Per-factor eigenbases Q_j, scaled spectra a_(l,j), and Delta = prod norms."""

    locals_q: tuple[np.ndarray, ...]
    diagonals: tuple[np.ndarray, ...]
    norms: tuple[float, ...]
    delta: float


def diagonalize(spec: HamiltonianSpec, term_index: int = 0) -> DiagonalizedForm:
    """Eigendecompose each factor, eigenvalues descending, spectra in [-1, 1]."""
    qs, diags, norms = [], [], []
    delta = 1.0
    for H in spec.terms[term_index]:
        w, v = np.linalg.eigh(H)
        w = w[::-1].copy()
        v = v[:, ::-1].copy()
        norm = float(np.max(np.abs(w))) if w.size else 0.0
        if norm == 0.0:
            a = np.zeros_like(w)
        else:
            a = w / norm
        qs.append(v)
        diags.append(a)
        norms.append(norm)
        delta *= norm
    return DiagonalizedForm(locals_q=tuple(qs), diagonals=tuple(diags),
                            norms=tuple(norms), delta=delta)


# -- schedule primitives ------------------------------------------------------

@dataclass(frozen=True)
class AncillaPrep:
    party: int
    dim: int = 2


@dataclass(frozen=True)
class SubspaceEmbed:
    party: int
    flip_levels: tuple[int, ...]


@dataclass(frozen=True)
class SubspaceRestrict:
    party: int
    flip_levels: tuple[int, ...]


@dataclass(frozen=True)
class LocalLayer:
    party: int
    matrix: np.ndarray
    kind: str  # "basis" or "swap"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class ZZRotation:
    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError("rotation angle must be finite")


@dataclass(frozen=True)
class CompiledSchedule:
    """Ordered primitives with rotation-cost annotations."""

    primitives: tuple
    dims: tuple[int, ...]
    time: float
    slices: int
    convention: str

    @property
    def total_rotation(self) -> float:
        return sum(abs(p.angle) for p in self.primitives
                   if isinstance(p, ZZRotation))

    @property
    def rotation_angles(self) -> tuple[float, ...]:
        return tuple(p.angle for p in self.primitives
                     if isinstance(p, ZZRotation))

    @property
    def interior_swap_events(self) -> int:
        return sum(1 for p in self.primitives
                   if isinstance(p, LocalLayer) and p.kind == "swap")


def _party_events(a_values: np.ndarray):
    """(flip levels, interior events) for one factor's scaled spectrum.

    Levels with a = +1 ride the carrier's |0>; a = -1 levels are pinned to
    |1> by the embedding; interior levels get swap events at p = (a+1)/2.
    """
    flips = []
    interior: dict[float, list[int]] = {}
    for l, a in enumerate(a_values):
        p = (float(a) + 1.0) / 2.0
        # eigensolver noise can push a +-1 level fractionally inside [0, 1]
        if p >= 1.0 - 1e-12:
            continue
        if p <= 1e-12:
            flips.append(l)
            continue
        interior.setdefault(p, []).append(l)
    events = sorted(interior.items())
    return tuple(flips), events


def _swap_matrix(dim: int, levels) -> np.ndarray:
    """Carrier X conditioned on the system level being in `levels`."""
    m = np.eye(2 * dim, dtype=complex)
    for l in levels:
        m[2 * l, 2 * l] = 0.0
        m[2 * l + 1, 2 * l + 1] = 0.0
        m[2 * l, 2 * l + 1] = 1.0
        m[2 * l + 1, 2 * l] = 1.0
    return m


def compile_factor_step(j: int, form: DiagonalizedForm, dt: float):
    """Primitive list simulating factor j's spectrum over one interval.

    Between events the generator stays the collective Z; each interior level
    pair accumulates phase p_l - (1 - p_l) = a_l per unit interval.
    """
    if dt == 0.0:
        return []
    d = form.diagonals[j].shape[0]
    flips, events = _party_events(form.diagonals[j])
    out = []
    prev = 0.0
    for p, levels in events:
        if p - prev > 0.0:
            out.append(ZZRotation((p - prev) * dt))
        out.append(LocalLayer(party=j, matrix=_swap_matrix(d, levels),
                              kind="swap"))
        prev = p
    out.append(ZZRotation((1.0 - prev) * dt))
    if events:
        all_levels = [l for _, levels in events for l in levels]
        out.append(LocalLayer(party=j, matrix=_swap_matrix(d, all_levels),
                              kind="swap"))
    return out


def _flatten(form: DiagonalizedForm, tau: float, out: list):
    """Nest every party's swap events inside the coarser parties' segments."""
    n = len(form.diagonals)
    events = [_party_events(a)[1] for a in form.diagonals]

    def rec(j: int, u: float):
        if u == 0.0:
            return
        if j == 0:
            out.append(ZZRotation(u))
            return
        evs = events[j - 1]
        d = form.diagonals[j - 1].shape[0]
        prev = 0.0
        for p, levels in evs:
            rec(j - 1, (p - prev) * u)
            out.append(LocalLayer(party=j - 1,
                                  matrix=_swap_matrix(d, levels), kind="swap"))
            prev = p
        rec(j - 1, (1.0 - prev) * u)
        if evs:
            all_levels = [l for _, levels in evs for l in levels]
            out.append(LocalLayer(party=j - 1,
                                  matrix=_swap_matrix(d, all_levels),
                                  kind="swap"))

    rec(n, tau)


def _compile_term(spec: HamiltonianSpec, term_index: int, time: float,
                  slices: int, convention: str) -> list:
    form = diagonalize(spec, term_index)
    dims = tuple(a.shape[0] for a in form.diagonals)
    sign = 1.0 if convention == "+i" else -1.0
    tau = sign * time * form.delta
    prims: list = []
    # basis layers act on the bare system, outside the prep/restrict bracket
    for j, q in enumerate(form.locals_q):
        if np.max(np.abs(q - np.eye(q.shape[0]))) > 1e-15:
            prims.append(LocalLayer(party=j, matrix=q.conj().T, kind="basis"))
    for j, d in enumerate(dims):
        prims.append(AncillaPrep(party=j, dim=2))
    flips = [_party_events(a)[0] for a in form.diagonals]
    for j in range(len(dims)):
        prims.append(SubspaceEmbed(party=j, flip_levels=flips[j]))
    if tau != 0.0 and form.delta != 0.0:
        for _ in range(slices):
            _flatten(form, tau / slices, prims)
    for j in range(len(dims)):
        prims.append(SubspaceRestrict(party=j, flip_levels=flips[j]))
    for j, q in enumerate(form.locals_q):
        if np.max(np.abs(q - np.eye(q.shape[0]))) > 1e-15:
            prims.append(LocalLayer(party=j, matrix=q, kind="basis"))
    return prims


def compile(spec: HamiltonianSpec, convention: str = "+i") -> CompiledSchedule:
    """Compile a single tensor-product term; exact for any slice count."""
    if convention not in ("+i", "-i"):
        raise ValueError("convention must be '+i' or '-i'")
    if len(spec.terms) != 1:
        raise ValueError("compile() takes a single-term spec; use compile_sum")
    prims = _compile_term(spec, 0, spec.time, spec.slices, convention)
    return CompiledSchedule(primitives=tuple(prims), dims=spec.dims,
                            time=spec.time, slices=spec.slices,
                            convention=convention)


def compile_sum(spec: HamiltonianSpec, slices: int | None = None,
                convention: str = "+i") -> CompiledSchedule:
    """First-order product formula: the m-fold repetition of per-term blocks."""
    if convention not in ("+i", "-i"):
        raise ValueError("convention must be '+i' or '-i'")
    m = spec.slices if slices is None else slices
    if m < 1:
        raise ValueError("slices must be >= 1")
    prims: list = []
    for _ in range(m):
        for k in range(len(spec.terms)):
            prims.extend(_compile_term(spec, k, spec.time / m, 1, convention))
    return CompiledSchedule(primitives=tuple(prims), dims=spec.dims,
                            time=spec.time, slices=m, convention=convention)


def evaluate_schedule(schedule: CompiledSchedule):
    """Dense product of the primitives; returns (operator, max leakage norm).

    The operator acts on the bare system dims; leakage measures amplitude
    left outside the embedded subspace at each restriction.
    """
    dims = list(schedule.dims)
    n = len(dims)
    d_in = int(np.prod(dims))
    slots = [('a', j, dims[j]) for j in range(n)]
    K = np.eye(d_in, dtype=complex)
    leakage = 0.0

    def slot_dims():
        return [s[2] for s in slots]

    def full_op(block: np.ndarray, positions):
        sd = slot_dims()
        total = int(np.prod(sd))
        rest = [i for i in range(len(sd)) if i not in positions]
        perm = list(positions) + rest
        bdim = int(np.prod([sd[i] for i in positions]))
        op = np.kron(block, np.eye(total // bdim))
        t = op.reshape([sd[i] for i in perm] + [sd[i] for i in perm])
        inv = np.argsort(perm)
        t = np.transpose(t, list(inv) + [len(sd) + i for i in inv])
        return t.reshape(total, total)

    for prim in schedule.primitives:
        if isinstance(prim, AncillaPrep):
            pos = _a_pos(slots, prim.party) + 1
            pre = int(np.prod([s[2] for s in slots[:pos]]))
            post = int(np.prod([s[2] for s in slots[pos:]]))
            newK = np.zeros((pre * 2 * post, K.shape[1]), dtype=complex)
            newK.reshape(pre, 2, post, -1)[:, 0, :, :] = K.reshape(pre, post, -1)
            K = newK
            slots.insert(pos, ('c', prim.party, 2))
        elif isinstance(prim, LocalLayer):
            ap = _a_pos(slots, prim.party)
            block = np.asarray(prim.matrix)
            if block.shape[0] == slots[ap][2]:
                K = full_op(block, [ap]) @ K
            else:
                cp = _c_pos(slots, prim.party)
                K = full_op(block, [ap, cp]) @ K
        elif isinstance(prim, (SubspaceEmbed, SubspaceRestrict)):
            ap = _a_pos(slots, prim.party)
            cp = _c_pos(slots, prim.party)
            dj = slots[ap][2]
            block = _swap_matrix(dj, prim.flip_levels)
            K = full_op(block, [ap, cp]) @ K
            if isinstance(prim, SubspaceRestrict):
                pre = int(np.prod([s[2] for s in slots[:cp]]))
                post = int(np.prod([s[2] for s in slots[cp + 1:]]))
                cube = K.reshape(pre, 2, post, -1)
                drop = cube[:, 1, :, :].reshape(-1, K.shape[1])
                leakage = max(leakage,
                              float(np.max(np.linalg.norm(drop, axis=0)))
                              if drop.size else 0.0)
                K = cube[:, 0, :, :].reshape(pre * post, -1)
                slots.pop(cp)
        elif isinstance(prim, ZZRotation):
            sd = slot_dims()
            idx = np.arange(int(np.prod(sd)))
            parity = np.zeros_like(idx)
            stride = int(np.prod(sd))
            for i, s in enumerate(slots):
                stride //= s[2]
                if s[0] == 'c':
                    parity ^= (idx // stride) % 2
            phases = np.exp(1j * prim.angle * (1.0 - 2.0 * parity))
            K = phases[:, None] * K
        else:
            raise TypeError(f"unknown primitive {prim!r}")
    if K.shape != (d_in, d_in):
        raise RuntimeError("schedule did not restore the bare system space")
    return OperatorMatrix(schedule.dims, K, unitary=True), leakage


def _a_pos(slots, party):
    for i, s in enumerate(slots):
        if s[0] == 'a' and s[1] == party:
            return i
    raise ValueError(f"no system slot for party {party}")


def _c_pos(slots, party):
    for i, s in enumerate(slots):
        if s[0] == 'c' and s[1] == party:
            return i
    raise ValueError(f"no carrier slot for party {party}")


def cost_estimate(schedule: CompiledSchedule, mode: str = "linear",
                  optimizer=None) -> float:
    """Entanglement estimate: linear small-angle rate or per-segment optimum."""
    angles = [abs(a) for a in schedule.rotation_angles]
    if mode == "linear":
        return OPTIMIZED_EBIT_RATE * sum(angles)
    if mode == "exact":
        if optimizer is None:
            from .optimizer import shared_optimizer
            optimizer = shared_optimizer()
        total = 0.0
        for a in angles:
            c = canon_angle(a)
            if c > 0:
                total += optimizer.optimize_schedule(c).expected_ebits
        return total
    raise ValueError(f"unknown mode {mode!r}")
