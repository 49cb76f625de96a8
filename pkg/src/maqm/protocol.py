"""Repeater-node and random-access memory state machines.

A shot is a deterministic function of its configuration and its own RNG
stream. Times are in seconds from the start of the shot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import fock
from .fock import JointState, ModeSet
from .memory import (CellAddress, Empirical, Geometry, MemoryCell, SpinWave, crosstalk_leakage,
                     default_grid, spinwave_momentum, survival)
from .photonics import DetectionChain, chain_transmission


DETECTION_GATE = 100e-9  # the BSM verdict is known when the R-window gate closes


class LinkTimeout(RuntimeError):
    """No herald within the configured trial cap."""


class ProtocolError(ValueError):
    pass


# ------------------------------------------------------------------ config

def _pair(p):
    a, b = p
    return (a if isinstance(a, CellAddress) else CellAddress(*a),
            b if isinstance(b, CellAddress) else CellAddress(*b))


@dataclass(frozen=True)
class NodeConfig:
    pair1: tuple = ((2, 2), (3, 2))
    pair2: tuple = ((2, 3), (3, 3))
    p_S: float = 0.004
    trial_period: float = 1.5e-6  # 100 ns write + 500 ns clean + 0.9 us switching/control
    bsm_wait: float = 10e-6  # after the second herald, before the L retrieval
    bsm_gap: float = 5e-6  # between the L and R retrievals
    aod_switch_time: float = 0.5e-6
    raqm_switch_wait: float = 10e-6
    max_trials: int = 10**7
    number_resolving: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pair1", _pair(self.pair1))
        object.__setattr__(self, "pair2", _pair(self.pair2))
        if not 0 < self.p_S <= 1:
            raise ProtocolError("p_S must be in (0, 1]")
        for name in ("trial_period", "bsm_wait", "bsm_gap", "raqm_switch_wait"):
            if not getattr(self, name) > 0:
                raise ProtocolError(f"{name} must be positive")
        if not 0 <= self.aod_switch_time < 1e-6:
            raise ProtocolError("AOD switch time must be below 1 us")
        cells = set(self.pair1) | set(self.pair2)
        if len(cells) != 4:
            raise ProtocolError("cell pairs must be four distinct cells")
        if self.max_trials < 1:
            raise ProtocolError("max_trials must be >= 1")

    @property
    def pairs(self):
        return (self.pair1, self.pair2)


@dataclass(frozen=True)
class NoiseModel:
    """Every imperfection the protocol layer applies.

    ``link_fidelity`` is the Bell fidelity of a fresh atom-photon link;
    ``coherence_time`` is the 1/e time of the white-noise weight on stored
    qubits; ``bsm_visibility`` is the two-pair mode overlap in the BSM.
    """

    link_fidelity: float = 0.9423076923076923
    coherence_time: float = 3.964595466797326e-3
    bsm_visibility: float = 0.8013199320264245
    stirap_residual: float = 0.04
    tau_fast: float = 53e-6
    idler_chain: DetectionChain = field(default_factory=DetectionChain)
    grid: tuple = field(default_factory=lambda: tuple(default_grid()))

    def __post_init__(self):
        if not 0.25 <= self.link_fidelity <= 1:
            raise ProtocolError("link fidelity must be in [0.25, 1]")
        if not self.coherence_time > 0:
            raise ProtocolError("coherence time must be positive")
        if not 0 <= self.bsm_visibility <= 1:
            raise ProtocolError("BSM visibility must be in [0, 1]")
        if not 0 <= self.stirap_residual <= 1:
            raise ProtocolError("STIRAP residual must be in [0, 1]")
        if not self.tau_fast > 0:
            raise ProtocolError("tau_fast must be positive")
        object.__setattr__(self, "grid", tuple(self.grid))

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        cells = tuple(
            MemoryCell(c.address, 1.0, Empirical(math.inf)) for c in default_grid()
        )
        return cls(link_fidelity=1.0, coherence_time=math.inf, bsm_visibility=1.0,
                   stirap_residual=0.0, idler_chain=DetectionChain.ideal(), grid=cells)

    def cell(self, address: CellAddress) -> MemoryCell:
        for c in self.grid:
            if c.address == address:
                return c
        raise ProtocolError(f"cell {address} missing from the grid table")

    def keep_fraction(self, elapsed: float) -> float:
        if elapsed < 0:
            raise ProtocolError("negative storage time")
        return math.exp(-elapsed / self.coherence_time)

    def retrieval(self, address: CellAddress, stored_for: float) -> float:
        """Detected-idler probability of a spin wave in ``address`` after ``stored_for``."""
        return self.cell(address).retrieval(stored_for) * chain_transmission(self.idler_chain)


# ------------------------------------------------------------------ events

@dataclass(frozen=True)
class Event:
    shot: int
    time: float
    kind: str
    cells: tuple
    outcome: str = ""

    def record(self) -> dict:
        return {"shot": self.shot, "time": self.time, "kind": self.kind,
                "cells": [str(c) for c in self.cells], "outcome": self.outcome}


# ------------------------------------------------------------------- links

@dataclass(frozen=True)
class LinkState:
    status: str  # "idle", "heralded" or "consumed"
    pair: tuple
    index: int = 1
    herald_time: float | None = None
    trials: int = 0
    spinwaves: tuple = ()
    signal_record: str = ""
    state: JointState | None = None  # modes (s{index}, a{index})
    decohered_until: float | None = None

    def __post_init__(self):
        if self.status not in ("idle", "heralded", "consumed"):
            raise ProtocolError(f"unknown link status {self.status!r}")
        if self.status == "heralded":
            cells = {sw.cell for sw in self.spinwaves}
            if len(self.spinwaves) != 2 or cells != set(self.pair):
                raise ProtocolError("a heralded link holds one spin wave in each cell of its pair")

    @property
    def labels(self):
        return (f"s{self.index}", f"a{self.index}")


def link_target(index: int, theta: float = math.pi / 4, phi: float = 0.0) -> JointState:
    s, a = f"s{index}", f"a{index}"
    ms = ModeSet((fock.qubit(s), fock.qubit(a)))
    return fock.superposition(ms, {("L", "L"): math.cos(theta),
                                   ("R", "R"): np.exp(1j * phi) * math.sin(theta)})


def _sample_trials(p: float, config: NodeConfig, rng) -> int:
    n = int(rng.geometric(p)) if p < 1 else 1
    if n > config.max_trials:
        raise LinkTimeout(f"no herald within {config.max_trials} trials")
    return n


def generate_link(pair, config: NodeConfig, noise: NoiseModel, rng, *, index: int = 1,
                  start_time: float = 0.0, theta: float = math.pi / 4, phi: float = 0.0,
                  herald_prob: float | None = None, geometry: Geometry | None = None,
                  shot: int = 0, events: list | None = None) -> tuple[LinkState, float]:
    """Run write trials until a signal herald; return the link and the elapsed time."""
    pair = _pair(pair)
    p = config.p_S if herald_prob is None else herald_prob
    n = _sample_trials(p, config, rng)
    elapsed = n * config.trial_period
    t = start_time + elapsed
    geometry = geometry or Geometry.standard()
    k_write = spinwave_momentum(geometry, "after_write")
    waves = tuple(
        SpinWave(cell, "gs", k_write, t, payload=f"a{index}").freeze(geometry) for cell in pair
    )
    state = fock.werner(link_target(index, theta, phi), noise.link_fidelity)
    link = LinkState("heralded", pair, index, t, n, waves, f"s{index}", state, t)
    if events is not None:
        events.append(Event(shot, t, "herald", pair, f"link{index} trials={n}"))
    return link, elapsed


def decohere_links(links, now: float, noise: NoiseModel):
    """Apply white-noise mixing on the stored atom qubits up to time ``now``."""
    out = []
    for link in links:
        if link.status != "heralded":
            out.append(link)
            continue
        dt = now - link.decohered_until
        if dt < 0:
            raise ProtocolError("decoherence cannot run backwards in time")
        state = fock.depolarize(link.state, f"a{link.index}", noise.keep_fraction(dt))
        out.append(replace(link, state=state, decohered_until=now))
    return out


def link_survival(link: LinkState, noise: NoiseModel, now: float) -> dict:
    return {c: survival(noise.cell(c), now - link.herald_time) for c in link.pair}


# --------------------------------------------------------------------- BSM

_CONFIGS = ("LL", "LR", "RL", "RR")
_IDX = {"L": 0, "R": 1}


def _window(effs, dark, visibility, number_resolving):
    """Outcome probabilities of one retrieval window with two combiner ports.

    Returns ``(none, single, multi, genuine)``; ``genuine`` is the part of
    ``single`` where exactly one retrieved photon fired and no dark count
    could have revealed which cell it came from.
    """
    probs = {"none": 0.0, "single": 0.0, "multi": 0.0}
    for detected in product((0, 1), repeat=len(effs)):
        p_det = math.prod(e if d else 1 - e for e, d in zip(effs, detected))
        if p_det == 0:
            continue
        k = sum(detected)
        if k == 0:
            splits = [((0, 0), 1.0)]
        elif k == 1:
            splits = [((1, 0), 0.5), ((0, 1), 0.5)]
        else:
            same = (1 + visibility) / 2
            splits = [((2, 0), same / 2), ((0, 2), same / 2), ((1, 1), 1 - same)]
        for ports, p_split in splits:
            for darks in product((0, 1), repeat=2):
                p_dark = math.prod(dark if x else 1 - dark for x in darks)
                counts = [ports[i] + darks[i] for i in range(2)]
                fired = [c > 0 for c in counts]
                if sum(fired) == 0:
                    key = "none"
                elif sum(fired) == 2:
                    key = "multi"
                elif number_resolving and max(counts) > 1:
                    key = "multi"
                else:
                    key = "single"
                probs[key] += p_det * p_split * p_dark
    genuine = 0.0
    if len(effs) == 1:
        genuine = effs[0] * (1 - dark) * ((1 - dark) if number_resolving else 1.0)
    return probs["none"], probs["single"], probs["multi"], genuine


_Z1 = np.kron(np.diag([1.0, -1.0]), np.eye(2)).astype(complex)


@dataclass(frozen=True)
class BsmResult:
    """Exact outcome distribution of one sequential-retrieval BSM."""

    pattern_probs: dict  # (L outcome, R outcome) -> probability
    success_prob: float
    signal_raw: np.ndarray | None  # unnormalized, incl. accidental clicks
    signal_genuine: np.ndarray | None  # unnormalized, genuine photon pairs only


def bsm_kernel(joint: JointState, etas: dict, dark: float, visibility: float,
               number_resolving: bool = False) -> BsmResult:
    """Sequential L-then-R retrieval of atoms ``a1, a2`` with coincidence heralding.

    ``etas[(k, w)]`` is the detection probability of a spin wave stored in
    pair ``k`` (1 or 2) and path ``w`` ("L"/"R") during its window.
    Each window combines the two pairs on a balanced two-port combiner; an
    antisymmetric-port coincidence is mapped back to the symmetric Bell
    state by a phase flip on signal 1.
    """
    st = fock.reorder(joint.as_mixed(), ["s1", "s2", "a1", "a2"])
    r = st.rho.reshape((2,) * 8)

    def block(c, cp):
        return r[:, :, _IDX[c[0]], _IDX[c[1]], :, :, _IDX[cp[0]], _IDX[cp[1]]].reshape(4, 4)

    patterns: dict = {}
    raw = np.zeros((4, 4), dtype=complex)
    succ = {}
    genuine = {}
    for c in _CONFIGS:
        pop = np.trace(block(c, c)).real
        wins = {}
        for w in "LR":
            effs = [etas[(k + 1, w)] for k in range(2) if c[k] == w]
            wins[w] = _window(effs, dark, visibility, number_resolving)
        for i, oi in enumerate(("none", "single", "multi")):
            for j, oj in enumerate(("none", "single", "multi")):
                patterns[(oi, oj)] = patterns.get((oi, oj), 0.0) + pop * wins["L"][i] * wins["R"][j]
        succ[c] = wins["L"][1] * wins["R"][1]
        genuine[c] = wins["L"][3] * wins["R"][3] if c in ("LR", "RL") else 0.0
        acc = succ[c] - genuine[c]
        if acc > 0:
            b = block(c, c)
            raw += acc * 0.5 * (b + _Z1 @ b @ _Z1)

    gen = np.zeros((4, 4), dtype=complex)
    w_lr, w_rl = genuine["LR"], genuine["RL"]
    if w_lr > 0 or w_rl > 0:
        amps = {"LR": math.sqrt(w_lr), "RL": math.sqrt(w_rl)}
        # port signs per (L port, R port): photon from pair 2 enters the minus port with a sign flip
        for pl, pr in product((1, -1), repeat=2):
            sign = {"LR": pr, "RL": pl}
            corr = np.eye(4) if pl == pr else _Z1
            coh = np.zeros((4, 4), dtype=complex)
            inc = np.zeros((4, 4), dtype=complex)
            for c in ("LR", "RL"):
                for cp in ("LR", "RL"):
                    term = 0.25 * sign[c] * sign[cp] * amps[c] * amps[cp] * block(c, cp)
                    coh += term
                    if c == cp:
                        inc += term
            part = visibility * coh + (1 - visibility) * inc
            gen += corr @ part @ corr.conj().T
    raw += gen
    p_succ = float(np.trace(raw).real)
    return BsmResult(patterns, p_succ, raw if p_succ > 0 else None,
                     gen if np.trace(gen).real > 0 else None)


def _signal_state(m: np.ndarray) -> JointState:
    ms = ModeSet((fock.qubit("s1"), fock.qubit("s2")))
    m = (m + m.conj().T) / 2
    return JointState(ms, rho=m / np.trace(m).real)


@dataclass(frozen=True)
class SwapOutcome:
    success: bool
    coincidence_pattern: tuple
    output_state: JointState | None
    gap_time: float
    total_wall_time: float
    success_prob: float
    fidelity: float = float("nan")
    fidelity_conditioned: float = float("nan")
    herald_times: tuple = ()
    events: tuple = ()

    def __post_init__(self):
        if self.success and self.coincidence_pattern != ("single", "single"):
            raise ProtocolError("success requires one click in each window")


def swap_target() -> JointState:
    return fock.bell_state(("s1", "s2"), "psi+")


def bsm_sequential(links, config: NodeConfig, noise: NoiseModel, rng, *, shot: int = 0,
                   events: list | None = None) -> SwapOutcome:
    """Retrieve L modes of both pairs, wait, retrieve R modes, herald on coincidences."""
    l1, l2 = links
    if l1.status != "heralded" or l2.status != "heralded":
        raise ProtocolError("both links must be heralded")
    t0 = max(l1.herald_time, l2.herald_time)
    t_l = t0 + config.bsm_wait
    t_r = t_l + config.bsm_gap
    l1, l2 = decohere_links([l1, l2], t_l, noise)
    joint = fock.tensor(l1.state, l2.state)
    times = {"L": t_l, "R": t_r}
    etas = {}
    for k, link in ((1, l1), (2, l2)):
        for w, cell in zip("LR", link.pair):
            etas[(k, w)] = noise.retrieval(cell, times[w] - link.herald_time)
    dark = noise.idler_chain.dark_prob
    res = bsm_kernel(joint, etas, dark, noise.bsm_visibility, config.number_resolving)

    keys = list(res.pattern_probs)
    p = np.array([res.pattern_probs[k] for k in keys])
    pattern = keys[int(rng.choice(len(keys), p=p / p.sum()))]
    success = pattern == ("single", "single")

    log = [] if events is None else events
    log.append(Event(shot, t_l, "retrieve_L", (l1.pair[0], l2.pair[0]), pattern[0]))
    log.append(Event(shot, t_r, "retrieve_R", (l1.pair[1], l2.pair[1]), pattern[1]))
    state = fid = fid_c = None
    if success:
        state = _signal_state(res.signal_raw)
        fid = fock.fidelity(state, swap_target())
        fid_c = fock.fidelity(_signal_state(res.signal_genuine), swap_target()) \
            if res.signal_genuine is not None else float("nan")
    log.append(Event(shot, t_r + DETECTION_GATE, "bsm", l1.pair + l2.pair,
                     "success" if success else "fail"))
    gap = l2.herald_time - l1.herald_time
    return SwapOutcome(success, pattern, state, gap, t_r, res.success_prob,
                       float("nan") if fid is None else fid,
                       float("nan") if fid_c is None else fid_c,
                       (l1.herald_time, l2.herald_time), tuple(log))


def swap_at_gap(gap: float, config: NodeConfig, noise: NoiseModel) -> BsmResult:
    """Deterministic BSM result for links heralded ``gap`` apart (no sampling)."""
    l1, _ = _fixed_link(1, config.pair1, 0.0, noise)
    l2, _ = _fixed_link(2, config.pair2, gap, noise)
    t_l = gap + config.bsm_wait
    l1, l2 = decohere_links([l1, l2], t_l, noise)
    times = {"L": t_l, "R": t_l + config.bsm_gap}
    etas = {}
    for k, link in ((1, l1), (2, l2)):
        for w, cell in zip("LR", link.pair):
            etas[(k, w)] = noise.retrieval(cell, times[w] - link.herald_time)
    return bsm_kernel(fock.tensor(l1.state, l2.state), etas, noise.idler_chain.dark_prob,
                      noise.bsm_visibility, config.number_resolving)


def _fixed_link(index, pair, t, noise):
    geometry = Geometry.standard()
    k = spinwave_momentum(geometry, "after_write")
    waves = tuple(SpinWave(c, "gs", k, t, payload=f"a{index}").freeze(geometry) for c in pair)
    state = fock.werner(link_target(index), noise.link_fidelity)
    return LinkState("heralded", pair, index, t, 1, waves, f"s{index}", state, t), 0.0


def run_shot(shot: int, config: NodeConfig, noise: NoiseModel, rng) -> SwapOutcome:
    """Link 1, AOD switch, link 2, BSM."""
    events: list = []
    l1, _ = generate_link(config.pair1, config, noise, rng, index=1, start_time=0.0,
                          shot=shot, events=events)
    start2 = l1.herald_time + config.aod_switch_time
    l2, _ = generate_link(config.pair2, config, noise, rng, index=2, start_time=start2,
                          shot=shot, events=events)
    return bsm_sequential((l1, l2), config, noise, rng, shot=shot, events=events)


# ------------------------------------------------------------------- RAQM

@dataclass(frozen=True)
class RaqmQubitSpec:
    theta: float
    phi: float
    pair: int = 1  # 1 or 2

    def __post_init__(self):
        if not -1e-12 <= self.theta <= math.pi / 2 + 1e-12:
            raise ProtocolError("theta must be in [0, pi/2]")
        if not 0 <= self.phi < 2 * math.pi:
            raise ProtocolError("phi must be in [0, 2 pi)")
        if self.pair not in (1, 2):
            raise ProtocolError("pair must be 1 or 2")

    def target(self) -> JointState:
        ms = ModeSet((fock.qubit("a"),))
        return fock.superposition(ms, {("L",): math.cos(self.theta),
                                       ("R",): np.exp(1j * self.phi) * math.sin(self.theta)})


SIX_STATES = {
    "L": (0.0, 0.0),
    "R": (math.pi / 2, 0.0),
    "+": (math.pi / 4, 0.0),
    "-": (math.pi / 4, math.pi),
    "s+": (math.pi / 4, math.pi / 2),
    "s-": (math.pi / 4, 3 * math.pi / 2),
}


def raqm_spec(name: str, pair: int) -> RaqmQubitSpec:
    theta, phi = SIX_STATES[name]
    return RaqmQubitSpec(theta, phi, pair)


_PLUS = fock.projector([[1 / math.sqrt(2), 1 / math.sqrt(2)]])


@dataclass(frozen=True)
class StoredQubit:
    spec: RaqmQubitSpec
    pair: tuple
    herald_time: float
    trials: int
    state: JointState  # single atom qubit, mode "a"
    decohered_until: float


def raqm_write(spec: RaqmQubitSpec, config: NodeConfig, noise: NoiseModel, rng, *,
               start_time: float = 0.0, shot: int = 0, events: list | None = None) -> StoredQubit:
    """Herald a spin-wave qubit by detecting the signal in the (|L>+|R>)/√2 basis."""
    pair = config.pairs[spec.pair - 1]
    link = fock.werner(link_target(spec.pair, spec.theta, spec.phi), noise.link_fidelity)
    p_basis, post = fock.measure_projective(link, [f"s{spec.pair}"], _PLUS)
    link_state, elapsed = generate_link(pair, config, noise, rng, index=spec.pair,
                                        start_time=start_time, theta=spec.theta, phi=spec.phi,
                                        herald_prob=config.p_S * p_basis, shot=shot, events=events)
    atom = fock.partial_trace(post, [f"a{spec.pair}"])
    atom = JointState(ModeSet((fock.qubit("a"),)), rho=atom.rho)
    return StoredQubit(spec, pair, link_state.herald_time, link_state.trials, atom,
                       link_state.herald_time)


def raqm_read(qubits, order, config: NodeConfig, noise: NoiseModel, *, shot: int = 0,
              events: list | None = None) -> list[JointState]:
    """Read stored qubits in ``order`` (indices into ``qubits``); returns states in read order.

    The first read happens ``bsm_wait`` after the last herald, later reads
    follow every ``bsm_gap``. A read picks up leakage from the un-transferred
    population of the other stored qubits.
    """
    if sorted(order) != list(range(len(qubits))):
        raise ProtocolError(f"order {order} is not a permutation of the stored qubits")
    if any(q is None for q in qubits):
        raise ProtocolError("reading an unoccupied slot")
    t_last = max(q.herald_time for q in qubits)
    out = []
    for step, i in enumerate(order):
        t = t_last + config.bsm_wait + step * config.bsm_gap
        q = qubits[i]
        keep = noise.keep_fraction(t - q.decohered_until)
        own = fock.depolarize(q.state, "a", keep)
        w_own = survival(noise.cell(q.pair[0]), t - q.herald_time)
        mixed = own.dm() * w_own
        total = w_own
        for j, other in enumerate(qubits):
            if j == i:
                continue
            leak = crosstalk_leakage(1 - noise.stirap_residual, t - other.herald_time, noise.tau_fast)
            if leak > 0:
                o = fock.depolarize(other.state, "a", noise.keep_fraction(t - other.decohered_until))
                mixed = mixed + leak * o.dm()
                total += leak
        state = JointState(own.modeset, rho=mixed / total)
        out.append(state)
        if events is not None:
            events.append(Event(shot, t, "read", q.pair, f"qubit{i + 1}"))
    return out


def raqm_shot(specs, order, config: NodeConfig, noise: NoiseModel, rng, *, shot: int = 0):
    """Write every qubit one after another, then read in ``order``.

    Returns ``(states in qubit order, herald times, events)``.
    """
    events: list = []
    qubits = []
    t = 0.0
    for spec in specs:
        q = raqm_write(spec, config, noise, rng, start_time=t, shot=shot, events=events)
        qubits.append(q)
        t = q.herald_time + config.raqm_switch_wait
    states = raqm_read(qubits, order, config, noise, shot=shot, events=events)
    by_qubit = [None] * len(qubits)
    for i, s in zip(order, states):
        by_qubit[i] = s
    return by_qubit, tuple(q.herald_time for q in qubits), events
