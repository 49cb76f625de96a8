"""Photon-pair statistics through lossy chains and threshold detectors.

Everything here is exact enumeration over the truncated Fock space built by
:mod:`maqm.fock`; no sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import fock
from .fock import ModeSet, SourceParams, StateError


@dataclass(frozen=True)
class DetectionChain:
    eta_aod: float = 0.95
    eta_fiber: float = 0.85
    eta_optics: float = 0.82
    eta_detector: float = 0.45
    dark_prob: float = 0.0  # per 100 ns detection gate

    def __post_init__(self):
        for name in ("eta_aod", "eta_fiber", "eta_optics", "eta_detector", "dark_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def ideal(cls, dark_prob: float = 0.0) -> "DetectionChain":
        return cls(1.0, 1.0, 1.0, 1.0, dark_prob)


def chain_transmission(chain: DetectionChain) -> float:
    return chain.eta_aod * chain.eta_fiber * chain.eta_optics * chain.eta_detector


@dataclass(frozen=True)
class CoincidenceStats:
    p_s: float
    p_i: float
    p_c: float
    g_c: float
    alpha: float = float("nan")

    def __post_init__(self):
        tol = 1e-12
        for name in ("p_s", "p_i", "p_c"):
            if not -tol <= getattr(self, name) <= 1 + tol:
                raise ValueError(f"{name} is not a probability")
        if self.p_c > min(self.p_s, self.p_i) + tol:
            raise ValueError("coincidence probability exceeds a singles probability")


# ---------------------------------------------------------------- detection

def _click_probability(state, clicks, dark):
    """P(every mode in ``clicks`` fires) for threshold detectors with dark counts.

    Inclusion-exclusion over the no-click events, each of which is the vacuum
    projection times the dark-count-free probability.
    """
    clicks = list(clicks)
    total = 0.0
    for r in range(len(clicks) + 1):
        for subset in combinations(clicks, r):
            if subset:
                p0 = fock.vacuum_probability(state, subset)
                p0 *= math.prod(1 - dark[m] for m in subset)
            else:
                p0 = 1.0
            total += (-1) ** r * p0
    return max(0.0, min(1.0, total))


def _detector_povm_state(state, mode, eta_detector):
    # inefficient detector == perfect detector behind a loss of eta_detector
    return fock.apply_loss(state, mode, eta_detector)


def _lossy_pair(source: SourceParams, signal_chain, idler_chain, retrieval, detector_in_chain):
    state = fock.two_mode_squeezed(source, labels=("signal", "idler"))
    if detector_in_chain:
        state = fock.apply_loss(state, "signal", chain_transmission(signal_chain))
        state = fock.apply_loss(state, "idler", retrieval * chain_transmission(idler_chain))
        return state
    ts = signal_chain.eta_aod * signal_chain.eta_fiber * signal_chain.eta_optics
    ti = retrieval * idler_chain.eta_aod * idler_chain.eta_fiber * idler_chain.eta_optics
    state = fock.apply_loss(state, "signal", ts)
    state = fock.apply_loss(state, "idler", ti)
    state = _detector_povm_state(state, "signal", signal_chain.eta_detector)
    return _detector_povm_state(state, "idler", idler_chain.eta_detector)


def herald_statistics(source: SourceParams, signal_chain: DetectionChain | None = None,
                      idler_chain: DetectionChain | None = None, retrieval: float = 1.0,
                      detector_in_chain: bool = True) -> CoincidenceStats:
    """Singles, coincidence and cross-correlation of the signal/idler pair.

    ``retrieval`` is the spin-wave to idler conversion efficiency applied in
    front of the idler chain.
    """
    signal_chain = signal_chain or DetectionChain()
    idler_chain = idler_chain or DetectionChain()
    if not 0 <= retrieval <= 1:
        raise ValueError("retrieval outside [0, 1]")
    state = _lossy_pair(source, signal_chain, idler_chain, retrieval, detector_in_chain)
    dark = {"signal": signal_chain.dark_prob, "idler": idler_chain.dark_prob}
    p_s = _click_probability(state, ["signal"], dark)
    p_i = _click_probability(state, ["idler"], dark)
    p_c = _click_probability(state, ["signal", "idler"], dark)
    g_c = p_c / (p_s * p_i) if p_s > 0 and p_i > 0 else float("nan")
    return CoincidenceStats(p_s, p_i, p_c, g_c)


def anticorrelation(source: SourceParams, idler_chain: DetectionChain | None = None,
                    signal_chain: DetectionChain | None = None, retrieval: float = 1.0) -> float:
    """Heralded autocorrelation of the idler split on a balanced beamsplitter.

    ``alpha = P(s,1,2) P(s) / (P(s,1) P(s,2))``.
    """
    signal_chain = signal_chain or DetectionChain()
    idler_chain = idler_chain or DetectionChain()
    state = _lossy_pair(source, signal_chain, idler_chain, retrieval, detector_in_chain=True)
    vac = fock.ket(ModeSet((fock.fock("idler_b", source.n_max),)), [0])
    state = fock.tensor(state, vac)
    state = fock.beamsplitter(state, "idler", "idler_b", 0.5)
    dark = {"signal": signal_chain.dark_prob, "idler": idler_chain.dark_prob,
            "idler_b": idler_chain.dark_prob}
    p_s = _click_probability(state, ["signal"], dark)
    p_s1 = _click_probability(state, ["signal", "idler"], dark)
    p_s2 = _click_probability(state, ["signal", "idler_b"], dark)
    p_s12 = _click_probability(state, ["signal", "idler", "idler_b"], dark)
    if p_s1 == 0 or p_s2 == 0:
        return 0.0
    return p_s12 * p_s / (p_s1 * p_s2)


def fidelity_bound(g_c: float) -> float:
    """Upper bound on the atom-photon entanglement fidelity set by ``g_c``."""
    if math.isinf(g_c):
        return 1.0
    if g_c < 0.5:
        raise ValueError(f"fidelity bound undefined for g_c={g_c} < 0.5")
    return (g_c - 0.5) / (g_c + 1)


def source_for(chi: float, n_min: int = 3) -> SourceParams:
    """Source at ``chi`` with the smallest truncation (>= n_min) meeting the tolerance."""
    n = n_min
    while chi ** (n + 1) >= fock.TOL.truncation:
        n += 1
    return SourceParams(chi, n)


class CalibrationError(ValueError):
    pass


def calibrate_chi(target_g_c: float, signal_chain: DetectionChain | None = None,
                  idler_chain: DetectionChain | None = None, retrieval: float = 1.0,
                  n_min: int = 3, tol: float = 1e-3, chi_max: float = 0.45) -> SourceParams:
    """Bisect the excitation parameter until ``g_c`` matches the target."""
    if not target_g_c > 1:
        raise CalibrationError(f"target g_c={target_g_c} unreachable (needs > 1)")

    def g(chi):
        return herald_statistics(source_for(chi, n_min), signal_chain, idler_chain, retrieval).g_c

    # with dark counts g_c -> 1 as chi -> 0, so bisect on the decreasing branch
    grid = np.geomspace(1e-6, chi_max, 40)
    vals = np.array([g(c) for c in grid])
    k = int(np.nanargmax(vals))
    lo, hi = grid[k], chi_max
    g_lo, g_hi = vals[k], vals[-1]
    if not g_hi <= target_g_c <= g_lo:
        raise CalibrationError(
            f"target g_c={target_g_c} outside reachable range [{g_hi:.4g}, {g_lo:.4g}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm - target_g_c) < tol:
            return source_for(mid, n_min)
        if gm > target_g_c:
            lo = mid
        else:
            hi = mid
    raise CalibrationError("bisection did not converge")
