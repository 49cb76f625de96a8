"""Dense linear algebra for small labeled-mode quantum states.

A state lives on an ordered set of modes. Each mode is either a path qubit
(basis ``L``/``R`` mapped to indices 0/1) or a truncated Fock mode holding
0..n_max photons. Pure states are kept as amplitude vectors until the first
non-unitary channel, after which they are density matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, prod
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 4096


@dataclass(frozen=True)
class Tolerances:
    algebraic: float = 1e-9
    truncation: float = 1e-4


TOL = Tolerances()


def set_tolerances(algebraic: float | None = None, truncation: float | None = None) -> Tolerances:
    """Replace the module-wide tolerances; returns the previous value."""
    global TOL
    old = TOL
    TOL = Tolerances(
        algebraic=old.algebraic if algebraic is None else float(algebraic),
        truncation=old.truncation if truncation is None else float(truncation),
    )
    return old


class StateError(ValueError):
    """Invalid state, mode set, or operation arguments."""


class TruncationError(StateError):
    pass


@dataclass(frozen=True)
class Mode:
    label: str
    kind: str  # "qubit" or "fock"
    n_max: int = 1

    def __post_init__(self):
        if self.kind not in ("qubit", "fock"):
            raise StateError(f"unknown mode kind {self.kind!r}")
        if self.kind == "qubit" and self.n_max != 1:
            raise StateError("qubit modes have dimension 2")
        if self.n_max < 1:
            raise StateError("n_max must be >= 1")

    @property
    def dim(self) -> int:
        return self.n_max + 1


def qubit(label: str) -> Mode:
    return Mode(label, "qubit")


def fock(label: str, n_max: int = 2) -> Mode:
    return Mode(label, "fock", n_max)


@dataclass(frozen=True)
class ModeSet:
    modes: tuple[Mode, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise StateError(f"duplicate mode labels in {labels}")
        if self.dim > MAX_DIM:
            raise StateError(f"total dimension {self.dim} exceeds cap {MAX_DIM}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.dim for m in self.modes)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise StateError(f"no mode labeled {label!r}") from None

    def __getitem__(self, label: str) -> Mode:
        return self.modes[self.index(label)]

    def __len__(self):
        return len(self.modes)


@dataclass(frozen=True, eq=False)
class JointState:
    """Pure (``vec``) or mixed (``rho``) state over a ModeSet."""

    modeset: ModeSet
    vec: np.ndarray | None = None
    rho: np.ndarray | None = None
    _checked: bool = field(default=True, repr=False)

    def __post_init__(self):
        if (self.vec is None) == (self.rho is None):
            raise StateError("exactly one of vec/rho must be given")
        d = self.modeset.dim
        tol = TOL.algebraic
        if self.vec is not None:
            v = np.asarray(self.vec, dtype=complex).reshape(-1)
            if v.size != d:
                raise StateError(f"vector length {v.size} != dimension {d}")
            if abs(np.linalg.norm(v) - 1.0) > tol:
                raise StateError(f"pure state norm {np.linalg.norm(v)} != 1")
            object.__setattr__(self, "vec", v)
        else:
            r = np.asarray(self.rho, dtype=complex)
            if r.shape != (d, d):
                raise StateError(f"density matrix shape {r.shape} != {(d, d)}")
            if self._checked:
                _check_density(r, tol)
            object.__setattr__(self, "rho", r)

    @property
    def is_pure(self) -> bool:
        return self.vec is not None

    @property
    def labels(self):
        return self.modeset.labels

    def dm(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return np.outer(self.vec, self.vec.conj())

    def as_mixed(self) -> "JointState":
        return self if self.rho is not None else JointState(self.modeset, rho=self.dm())

    def purity(self) -> float:
        r = self.dm()
        return float(np.real(np.trace(r @ r)))

    def __repr__(self):
        kind = "pure" if self.is_pure else "mixed"
        return f"JointState({kind}, modes={self.labels})"


def _check_density(r: np.ndarray, tol: float) -> None:
    if np.max(np.abs(r - r.conj().T), initial=0.0) > tol:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(r).real - 1.0) > tol:
        raise StateError(f"density matrix trace {np.trace(r).real} != 1")
    ev = np.linalg.eigvalsh((r + r.conj().T) / 2)
    if ev[0] < -tol:
        raise StateError(f"density matrix has negative eigenvalue {ev[0]:.3e}")


# ---------------------------------------------------------------- constructors

PATH_INDEX = {"L": 0, "R": 1}


def _occupation_index(mode: Mode, value) -> int:
    if isinstance(value, str):
        if mode.kind != "qubit" or value not in PATH_INDEX:
            raise StateError(f"bad basis label {value!r} for mode {mode.label}")
        return PATH_INDEX[value]
    value = int(value)
    if not 0 <= value < mode.dim:
        raise StateError(f"occupation {value} outside mode {mode.label}")
    return value


def basis_vector(modeset: ModeSet, occupations: Sequence) -> np.ndarray:
    if len(occupations) != len(modeset):
        raise StateError("one occupation per mode required")
    idx = tuple(_occupation_index(m, o) for m, o in zip(modeset.modes, occupations))
    v = np.zeros(modeset.dims, dtype=complex)
    v[idx] = 1.0
    return v.reshape(-1)


def ket(modeset: ModeSet, occupations: Sequence) -> JointState:
    return JointState(modeset, vec=basis_vector(modeset, occupations))


def superposition(modeset: ModeSet, terms: dict) -> JointState:
    """Normalized sum of ``amplitude * |occupations>`` from ``{occupations: amplitude}``."""
    v = sum(amp * basis_vector(modeset, occ) for occ, amp in terms.items())
    n = np.linalg.norm(v)
    if n == 0:
        raise StateError("superposition has zero norm")
    return JointState(modeset, vec=v / n)


def mixture(states: Sequence[JointState], weights: Sequence[float]) -> JointState:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1) > TOL.algebraic:
        raise StateError("mixture weights must be non-negative and sum to 1")
    ms = states[0].modeset
    if any(s.modeset != ms for s in states):
        raise StateError("mixture of states on different mode sets")
    return JointState(ms, rho=sum(wi * s.dm() for wi, s in zip(w, states)))


def maximally_mixed(modeset: ModeSet) -> JointState:
    d = modeset.dim
    return JointState(modeset, rho=np.eye(d, dtype=complex) / d)


@dataclass(frozen=True)
class SourceParams:
    """Two-mode correlated-pair source with geometric ratio ``chi`` per extra pair."""

    chi: float
    n_max: int = 2

    def __post_init__(self):
        if not 0 <= self.chi < 0.5:
            raise StateError(f"chi={self.chi} outside [0, 0.5)")
        if self.n_max < 1:
            raise StateError("n_max must be >= 1")
        err = self.truncation_error
        if err >= TOL.truncation:
            raise TruncationError(
                f"truncation error {err:.2e} at chi={self.chi}, n_max={self.n_max} "
                f"exceeds {TOL.truncation:.0e}"
            )

    @property
    def truncation_error(self) -> float:
        # tail of the geometric series relative to the full sum
        return self.chi ** (self.n_max + 1)


def two_mode_squeezed(params: SourceParams, labels=("signal", "spinwave")) -> JointState:
    ms = ModeSet((fock(labels[0], params.n_max), fock(labels[1], params.n_max)))
    n = np.arange(params.n_max + 1)
    amps = np.sqrt(float(params.chi)) ** n if params.chi > 0 else (n == 0).astype(float)
    v = np.zeros((params.n_max + 1, params.n_max + 1), dtype=complex)
    v[n, n] = amps
    v /= np.linalg.norm(v)
    return JointState(ms, vec=v.reshape(-1))


# ------------------------------------------------------------------ operations

def tensor(a: JointState, b: JointState) -> JointState:
    ms = ModeSet(a.modeset.modes + b.modeset.modes)
    if a.is_pure and b.is_pure:
        return JointState(ms, vec=np.kron(a.vec, b.vec))
    return JointState(ms, rho=np.kron(a.dm(), b.dm()))


def _axes(modeset: ModeSet, labels: Iterable[str]) -> list[int]:
    axes = [modeset.index(l) for l in labels]
    if len(set(axes)) != len(axes):
        raise StateError("repeated mode label")
    return axes


def _apply_to_axes(t: np.ndarray, op: np.ndarray, axes: list[int], offset: int = 0) -> np.ndarray:
    """Contract ``op`` (already reshaped to out_dims + in_dims) into tensor axes."""
    k = len(axes)
    target = [a + offset for a in axes]
    out = np.tensordot(op, t, axes=(list(range(k, 2 * k)), target))
    return np.moveaxis(out, list(range(k)), target)


def _op_tensor(op: np.ndarray, dims: list[int]) -> np.ndarray:
    return np.asarray(op, dtype=complex).reshape(dims + dims)


def apply_operator(state: JointState, labels: Sequence[str], op: np.ndarray, *, renormalize=False):
    """Return ``op ρ op†`` (or ``op|ψ>``) on the named modes, unnormalized unless asked."""
    ms = state.modeset
    axes = _axes(ms, labels)
    dims = [ms.dims[a] for a in axes]
    opt = _op_tensor(op, dims)
    n = len(ms)
    if state.is_pure:
        t = state.vec.reshape(ms.dims)
        out = _apply_to_axes(t, opt, axes).reshape(-1)
        if renormalize:
            out = out / np.linalg.norm(out)
        return out
    t = state.rho.reshape(ms.dims + ms.dims)
    t = _apply_to_axes(t, opt, axes)
    t = _apply_to_axes(t, opt.conj(), axes, offset=n)
    out = t.reshape(ms.dim, ms.dim)
    if renormalize:
        out = out / np.trace(out).real
    return out


def apply_unitary(state: JointState, labels: Sequence[str], u: np.ndarray) -> JointState:
    out = apply_operator(state, labels, u)
    if state.is_pure:
        return JointState(state.modeset, vec=out)
    return JointState(state.modeset, rho=out)


def loss_kraus(n_max: int, transmission: float) -> list[np.ndarray]:
    """Kraus operators of a beamsplitter to a vacuum environment, environment traced out."""
    eta = float(transmission)
    ops = []
    for k in range(n_max + 1):
        a = np.zeros((n_max + 1, n_max + 1))
        for n in range(k, n_max + 1):
            a[n - k, n] = np.sqrt(comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(a)
    return ops


def apply_loss(state: JointState, mode: str, transmission: float) -> JointState:
    if not 0.0 <= transmission <= 1.0:
        raise StateError(f"transmission {transmission} outside [0, 1]")
    m = state.modeset[mode]
    if m.kind != "fock":
        raise StateError(f"loss applies to fock modes, {mode!r} is a {m.kind}")
    if transmission == 1.0:
        return state
    mixed = state.as_mixed()
    rho = sum(apply_operator(mixed, [mode], k) for k in loss_kraus(m.n_max, transmission))
    return JointState(state.modeset, rho=_hermitize(rho))


def _hermitize(r: np.ndarray) -> np.ndarray:
    return (r + r.conj().T) / 2


def measure_projective(state: JointState, labels, projector: np.ndarray):
    """Project onto ``projector`` acting on the named modes.

    Returns ``(probability, post_state)``; ``post_state`` is None when the
    outcome has zero probability.
    """
    if isinstance(labels, str):
        labels = [labels]
    ms = state.modeset
    dims = [ms[l].dim for l in labels]
    d = prod(dims)
    p = np.asarray(projector, dtype=complex)
    if p.shape != (d, d):
        raise StateError(f"projector shape {p.shape} does not match modes {labels}")
    tol = TOL.algebraic
    if np.max(np.abs(p - p.conj().T)) > tol or np.max(np.abs(p @ p - p)) > tol:
        raise StateError("not an orthogonal projector")
    out = apply_operator(state, labels, p)
    if state.is_pure:
        prob = float(np.vdot(out, out).real)
        if prob <= tol**2:
            return 0.0, None
        return prob, JointState(ms, vec=out / np.sqrt(prob))
    prob = float(np.trace(out).real)
    if prob <= tol**2:
        return 0.0, None
    return prob, JointState(ms, rho=_hermitize(out / prob))


def projector(vectors) -> np.ndarray:
    """Orthogonal projector onto the span of the given (orthonormalized) vectors."""
    v = np.atleast_2d(np.asarray(vectors, dtype=complex))
    q, _ = np.linalg.qr(v.T)
    return q @ q.conj().T


def partial_trace(state: JointState, keep: Sequence[str]) -> JointState:
    keep = list(keep)
    if not keep:
        raise StateError("keep set must not be empty")
    ms = state.modeset
    axes = _axes(ms, keep)
    if axes == list(range(len(ms))):
        return state
    n = len(ms)
    drop = [i for i in range(n) if i not in axes]
    if state.is_pure:
        t = state.vec.reshape(ms.dims)
        t = np.transpose(t, axes + drop)
        dk = prod(ms.dims[a] for a in axes)
        m = t.reshape(dk, -1)
        rho = m @ m.conj().T
    else:
        letters = "abcdefghijklmnopqrstuvwxyz"
        row = [letters[i] for i in range(n)]
        col = [letters[i] if i in drop else letters[i].upper() for i in range(n)]
        outs = "".join(row[a] for a in axes) + "".join(col[a] for a in axes)
        t = state.rho.reshape(ms.dims + ms.dims)
        r = np.einsum("".join(row) + "".join(col) + "->" + outs, t)
        dk = prod(ms.dims[a] for a in axes)
        rho = r.reshape(dk, dk)
    sub = ModeSet(tuple(ms.modes[a] for a in axes))
    return JointState(sub, rho=_hermitize(rho))


def reorder(state: JointState, labels: Sequence[str]) -> JointState:
    """Permute modes into the given label order."""
    ms = state.modeset
    axes = _axes(ms, labels)
    if len(axes) != len(ms):
        raise StateError("reorder needs every mode label exactly once")
    new = ModeSet(tuple(ms.modes[a] for a in axes))
    n = len(ms)
    if state.is_pure:
        return JointState(new, vec=np.transpose(state.vec.reshape(ms.dims), axes).reshape(-1))
    t = np.transpose(state.rho.reshape(ms.dims + ms.dims), axes + [a + n for a in axes])
    return JointState(new, rho=t.reshape(ms.dim, ms.dim))


def depolarize(state: JointState, mode: str, keep_fraction: float) -> JointState:
    """Mix one mode with white noise: ``λρ + (1-λ) Tr_mode(ρ) ⊗ I/d``."""
    lam = float(keep_fraction)
    if not 0 <= lam <= 1:
        raise StateError("keep_fraction outside [0, 1]")
    if lam == 1.0:
        return state
    ms = state.modeset
    ax = ms.index(mode)
    d = ms.dims[ax]
    others = [l for l in ms.labels if l != mode]
    noise = maximally_mixed(ModeSet((ms.modes[ax],)))
    if others:
        rest = partial_trace(state, others)
        noisy = reorder(tensor(rest, noise), ms.labels)
    else:
        noisy = noise
    rho = lam * state.dm() + (1 - lam) * noisy.dm()
    return JointState(ms, rho=_hermitize(rho))


def fidelity(rho: JointState, target: JointState) -> float:
    """Overlap ``<ψ|ρ|ψ>`` of a state with a pure target."""
    if not target.is_pure:
        raise StateError("target must be a pure state")
    if rho.modeset.dims != target.modeset.dims:
        raise StateError(f"dimension mismatch {rho.modeset.dims} vs {target.modeset.dims}")
    psi = target.vec
    if rho.is_pure:
        f = abs(np.vdot(psi, rho.vec)) ** 2
    else:
        f = np.vdot(psi, rho.rho @ psi).real
    tol = TOL.algebraic
    if f < -tol or f > 1 + tol:
        raise StateError(f"fidelity {f} outside [0, 1]")
    return float(min(max(f, 0.0), 1.0))


# ------------------------------------------------------------ named states

def bell_state(labels=("a", "b"), kind: str = "phi+") -> JointState:
    """Path-qubit Bell states; ``phi±`` = (|LL> ± |RR>)/√2, ``psi±`` = (|LR> ± |RL>)/√2."""
    ms = ModeSet((qubit(labels[0]), qubit(labels[1])))
    sign = 1 if kind.endswith("+") else -1
    if kind.startswith("phi"):
        return superposition(ms, {("L", "L"): 1, ("R", "R"): sign})
    if kind.startswith("psi"):
        return superposition(ms, {("L", "R"): 1, ("R", "L"): sign})
    raise StateError(f"unknown Bell state {kind!r}")


def werner(target: JointState, fid: float) -> JointState:
    """``p|ψ><ψ| + (1-p) I/d`` with ``p`` chosen so the fidelity to ψ is ``fid``."""
    d = target.modeset.dim
    p = (d * fid - 1) / (d - 1)
    if not -TOL.algebraic <= p <= 1 + TOL.algebraic:
        raise StateError(f"fidelity {fid} not reachable by white-noise mixing")
    p = min(max(p, 0.0), 1.0)
    if p == 1.0:
        return target
    return JointState(target.modeset, rho=p * target.dm() + (1 - p) * np.eye(d) / d)


def beamsplitter(state: JointState, mode_a: str, mode_b: str, transmission: float) -> JointState:
    """Lossless beamsplitter mixing two fock modes.

    Exact on the subspace where the two modes together hold at most
    ``min(n_max)`` photons; states outside that subspace are rejected.
    """
    from scipy.linalg import expm

    ms = state.modeset
    ma, mb = ms[mode_a], ms[mode_b]
    if ma.kind != "fock" or mb.kind != "fock":
        raise StateError("beamsplitter acts on fock modes")
    if not 0 <= transmission <= 1:
        raise StateError("transmission outside [0, 1]")
    da, db = ma.dim, mb.dim
    a = np.diag(np.sqrt(np.arange(1, da)), 1)
    b = np.diag(np.sqrt(np.arange(1, db)), 1)
    gen = np.kron(a.T, b) - np.kron(a, b.T)
    theta = np.arccos(np.sqrt(transmission))
    u = expm(theta * gen)
    nmax = min(ma.n_max, mb.n_max)
    occupied = apply_operator(state, [mode_a, mode_b], _total_number_projector(da, db, nmax, above=True))
    weight = np.vdot(occupied, occupied).real if state.is_pure else np.trace(occupied).real
    if weight > TOL.algebraic:
        raise StateError("beamsplitter input exceeds the truncation of the output modes")
    return apply_unitary(state, [mode_a, mode_b], u)


def _total_number_projector(da: int, db: int, nmax: int, above: bool) -> np.ndarray:
    na, nb = np.meshgrid(np.arange(da), np.arange(db), indexing="ij")
    tot = (na + nb).reshape(-1)
    return np.diag((tot > nmax) if above else (tot <= nmax)).astype(complex)


def vacuum_probability(state: JointState, labels: Sequence[str]) -> float:
    """Probability that every named fock mode is empty."""
    ms = state.modeset
    proj = np.zeros((1, 1))
    proj[0, 0] = 1
    for l in labels:
        d = ms[l].dim
        p0 = np.zeros((d, d))
        p0[0, 0] = 1
        proj = np.kron(proj, p0)
    prob, _ = measure_projective(state, list(labels), proj)
    return prob
