"""Local-Pauli state tomography for one or two path qubits.

Reconstruction is linear inversion followed by the eigenvalue-truncation
projection onto physical states; error bars come from Poisson resampling of
the raw counts.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np

from . import fock
from .fock import JointState, ModeSet

BASES = ("Z", "X", "Y")
_S = 1 / math.sqrt(2)
# +1 / -1 eigenvectors in the (L, R) basis
EIGENVECTORS = {
    "Z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
    "X": (np.array([_S, _S], dtype=complex), np.array([_S, -_S], dtype=complex)),
    "Y": (np.array([_S, 1j * _S], dtype=complex), np.array([_S, -1j * _S], dtype=complex)),
}
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class TomographyError(ValueError):
    pass


def settings_for(n_qubits: int) -> list[tuple[str, ...]]:
    return list(product(BASES, repeat=n_qubits))


def outcomes_for(n_qubits: int) -> list[str]:
    return ["".join(o) for o in product("+-", repeat=n_qubits)]


@lru_cache(maxsize=None)
def _projectors(setting: tuple[str, ...]) -> np.ndarray:
    """Outcome projectors of a setting, stacked in ``outcomes_for`` order."""
    out = []
    for signs in product((0, 1), repeat=len(setting)):
        v = np.array([1], dtype=complex)
        for basis, s in zip(setting, signs):
            v = np.kron(v, EIGENVECTORS[basis][s])
        out.append(np.outer(v, v.conj()))
    return np.array(out)


@dataclass
class CountsTable:
    n_qubits: int
    counts: dict  # setting tuple -> int array over outcomes_for(n_qubits)

    def __post_init__(self):
        k = 2**self.n_qubits
        clean = {}
        for s, c in self.counts.items():
            s = tuple(s)
            if len(s) != self.n_qubits or any(b not in BASES for b in s):
                raise TomographyError(f"bad setting {s}")
            c = np.asarray(c, dtype=np.int64)
            if c.shape != (k,) or np.any(c < 0):
                raise TomographyError(f"counts for {s} must be {k} non-negative integers")
            clean[s] = c
        self.counts = clean

    def total(self, setting=None) -> int:
        if setting is not None:
            return int(self.counts[tuple(setting)].sum())
        return int(sum(c.sum() for c in self.counts.values()))

    def is_complete(self) -> bool:
        return set(self.counts) == set(settings_for(self.n_qubits))

    def to_rows(self) -> list[tuple[str, str, int]]:
        rows = []
        for s in settings_for(self.n_qubits):
            if s in self.counts:
                for o, c in zip(outcomes_for(self.n_qubits), self.counts[s]):
                    rows.append(("".join(s), o, int(c)))
        return rows

    def dumps(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", "outcome", "count"])
        w.writerows(self.to_rows())
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "CountsTable":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["setting", "outcome", "count"]:
            raise TomographyError(f"unexpected header {reader.fieldnames}")
        raw: dict = {}
        n = None
        for row in reader:
            s = tuple(row["setting"])
            n = len(s) if n is None else n
            if len(s) != n or len(row["outcome"]) != n:
                raise TomographyError("inconsistent qubit count in counts file")
            raw.setdefault(s, {})[row["outcome"]] = int(row["count"])
        if n is None:
            raise TomographyError("empty counts file")
        counts = {}
        for s, d in raw.items():
            if set(d) != set(outcomes_for(n)):
                raise TomographyError(f"setting {''.join(s)} lacks some outcomes")
            counts[s] = [d[o] for o in outcomes_for(n)]
        return cls(n, counts)

    @classmethod
    def load(cls, path) -> "CountsTable":
        return cls.loads(Path(path).read_text())


def born_probabilities(rho: np.ndarray, setting) -> np.ndarray:
    p = np.einsum("kij,ji->k", _projectors(tuple(setting)), rho).real
    p = np.clip(p, 0, None)
    return p / p.sum()


def simulate_counts(rho, shots_per_setting: int, rng, settings=None) -> CountsTable:
    """Multinomial counts from Born probabilities for each setting."""
    m = rho.dm() if isinstance(rho, JointState) else np.asarray(rho, dtype=complex)
    n = int(round(math.log2(m.shape[0])))
    settings = settings or settings_for(n)
    counts = {tuple(s): rng.multinomial(shots_per_setting, born_probabilities(m, s)) for s in settings}
    return CountsTable(n, counts)


@lru_cache(maxsize=None)
def _design(n_qubits: int):
    """Map from stacked outcome frequencies to Pauli expansion coefficients."""
    paulis = ["".join(p) for p in product("IXYZ", repeat=n_qubits)]
    ops = []
    for p in paulis:
        m = np.array([[1]], dtype=complex)
        for c in p:
            m = np.kron(m, PAULI[c])
        ops.append(m)
    rows = []
    for s in settings_for(n_qubits):
        for proj in _projectors(s):
            rows.append([np.trace(proj @ op).real / 2**n_qubits for op in ops])
    a = np.array(rows)
    return paulis, np.array(ops), np.linalg.pinv(a)


def _frequencies(counts: CountsTable) -> np.ndarray:
    f = []
    for s in settings_for(counts.n_qubits):
        c = counts.counts[s].astype(float)
        tot = c.sum()
        if tot <= 0:
            raise TomographyError(f"setting {''.join(s)} has no counts")
        f.append(c / tot)
    return np.concatenate(f)


@dataclass(frozen=True)
class LinearEstimate:
    matrix: np.ndarray
    min_eigenvalue: float

    @property
    def negative(self) -> bool:
        return self.min_eigenvalue < 0


def _coeffs_to_matrix(coeffs, ops, n_qubits):
    m = np.tensordot(coeffs, ops, axes=(-1, 0))
    m = (m + np.swapaxes(m, -1, -2).conj()) / 2
    tr = np.trace(m, axis1=-2, axis2=-1).real
    return m / tr[..., None, None]


def linear_inversion(counts: CountsTable) -> LinearEstimate:
    """Least-squares Pauli-basis inversion of the observed frequencies."""
    if not counts.is_complete():
        missing = set(settings_for(counts.n_qubits)) - set(counts.counts)
        raise TomographyError(f"incomplete settings, missing {sorted(missing)}")
    _, ops, pinv = _design(counts.n_qubits)
    m = _coeffs_to_matrix(pinv @ _frequencies(counts), ops, counts.n_qubits)
    return LinearEstimate(m, float(np.linalg.eigvalsh(m)[0]))


def _truncate_eigenvalues(mu: np.ndarray) -> np.ndarray:
    """Closest trace-1 non-negative spectrum to ``mu`` (sorted descending)."""
    mu = mu.copy()
    d = mu.size
    acc = 0.0
    i = d
    while i > 0 and mu[i - 1] + acc / i < 0:
        acc += mu[i - 1]
        mu[i - 1] = 0.0
        i -= 1
    mu[:i] += acc / i
    return mu


def physicalize(raw, labels=None) -> JointState:
    """Project a Hermitian trace-1 matrix onto the density-matrix cone.

    Negative eigenvalues are zeroed and their total redistributed evenly
    over the remaining ones.
    """
    m = np.asarray(raw.matrix if isinstance(raw, LinearEstimate) else raw, dtype=complex)
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m / np.trace(m).real)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    mu = _truncate_eigenvalues(w)
    rho = (v * mu) @ v.conj().T
    rho = (rho + rho.conj().T) / 2
    n = int(round(math.log2(m.shape[0])))
    labels = labels or tuple(f"q{i + 1}" for i in range(n))
    ms = ModeSet(tuple(fock.qubit(l) for l in labels))
    return JointState(ms, rho=rho)


def _physicalize_batch(mats: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mats)
    w, v = w[:, ::-1], v[:, :, ::-1]
    mu = np.array([_truncate_eigenvalues(x) for x in w])
    return np.einsum("bij,bj,bkj->bik", v, mu, v.conj())


@dataclass(frozen=True)
class ReconstructionResult:
    rho: JointState
    fidelity_to_target: float
    error_bar: float
    method: str = "linear-inversion+eigenvalue-truncation"
    raw_min_eigenvalue: float = 0.0
    bootstrap_rounds: int = 0
    low_confidence: bool = False


def fidelity_with_errorbar(counts: CountsTable, target: JointState, rounds: int, rng) -> ReconstructionResult:
    """Point fidelity plus the 1σ spread over Poisson-resampled count tables."""
    est = linear_inversion(counts)
    rho = physicalize(est, labels=target.labels)
    f0 = fock.fidelity(rho, target)
    n = counts.n_qubits
    if rounds < 1:
        raise TomographyError("need at least one bootstrap round")
    settings = settings_for(n)
    base = np.array([counts.counts[s] for s in settings], dtype=float)
    sampled = rng.poisson(base, size=(rounds,) + base.shape).astype(float)
    tot = sampled.sum(axis=2, keepdims=True)
    k = base.shape[1]
    freqs = np.where(tot > 0, sampled / np.where(tot > 0, tot, 1), 1.0 / k).reshape(rounds, -1)
    _, ops, pinv = _design(n)
    mats = _coeffs_to_matrix(freqs @ pinv.T, ops, n)
    phys = _physicalize_batch(mats)
    psi = target.vec
    fids = np.einsum("i,bij,j->b", psi.conj(), phys, psi).real
    err = float(np.std(fids, ddof=1)) if rounds > 1 else 0.0
    return ReconstructionResult(rho, f0, err, raw_min_eigenvalue=est.min_eigenvalue,
                                bootstrap_rounds=rounds, low_confidence=rounds < 100)
