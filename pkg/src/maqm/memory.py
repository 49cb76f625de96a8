"""Multicell memory model: addressing, spin-wave records, decay and STIRAP transfer."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

K_B = 1.380649e-23  # J/K
M_RB87 = 1.44316e-25  # kg
TWO_PI = 2 * math.pi

GRID_SIZE = 5
RF_X0_MHZ = 96.0
RF_Y0_MHZ = 100.0
RF_STEP_MHZ = 4.0
CELL_PITCH = 420e-6  # m

DEFAULT_WAVELENGTH = 795e-9
DEFAULT_ANGLE_DEG = 1.5
DEFAULT_TAU_FAST = 53e-6


class MemoryModelError(ValueError):
    pass


# ------------------------------------------------------------------ addressing

@dataclass(frozen=True, order=True)
class CellAddress:
    x: int
    y: int

    def __post_init__(self):
        for name in ("x", "y"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 1 <= v <= GRID_SIZE:
                raise MemoryModelError(f"cell {name}={v!r} outside 1..{GRID_SIZE}")

    def __str__(self):
        return f"(x{self.x},y{self.y})"

    def position(self, pitch: float = CELL_PITCH) -> tuple[float, float]:
        """Cell centre in metres relative to the grid centre."""
        c = (GRID_SIZE + 1) / 2
        return ((self.x - c) * pitch, (self.y - c) * pitch)


def address_to_rf(cell: CellAddress) -> tuple[float, float]:
    """AOD drive frequencies (MHz) selecting a cell."""
    if not isinstance(cell, CellAddress):
        cell = CellAddress(*cell)
    return (RF_X0_MHZ + RF_STEP_MHZ * (cell.x - 1), RF_Y0_MHZ + RF_STEP_MHZ * (cell.y - 1))


# --------------------------------------------------------------- decoherence

@dataclass(frozen=True)
class Empirical:
    """Exponential retrieval decay with 1/e time ``tau``."""

    tau: float = 1e-3
    R0: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise MemoryModelError("tau must be positive")
        if not 0 <= self.R0 <= 1:
            raise MemoryModelError("R0 must be a probability")

    def survival(self, t):
        return np.exp(-np.asarray(t, dtype=float) / self.tau)


@dataclass(frozen=True)
class Mechanistic:
    """Motional dephasing, free expansion out of the mode, and gradient dephasing.

    ``momentum`` is the stored spin-wave wavevector magnitude; a frozen spin
    wave has momentum ~0 and only the expansion term survives.
    """

    temperature: float = 30e-6
    beam_waist: float = 65e-6
    momentum: float = 0.0
    gradient_rate: float = 0.0
    mass: float = M_RB87

    def __post_init__(self):
        if not self.temperature > 0 or not self.beam_waist > 0:
            raise MemoryModelError("temperature and beam waist must be positive")
        if self.momentum < 0 or self.gradient_rate < 0:
            raise MemoryModelError("momentum and gradient rate must be non-negative")

    @property
    def thermal_velocity(self) -> float:
        return math.sqrt(K_B * self.temperature / self.mass)

    @property
    def expansion_time(self) -> float:
        return self.beam_waist / self.thermal_velocity

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        v = self.thermal_velocity
        motional = np.exp(-((self.momentum * v * t) ** 2) / 2)
        return motional * np.exp(-t / self.expansion_time) * np.exp(-self.gradient_rate * t)


DecoherenceModel = Union[Empirical, Mechanistic]


@dataclass(frozen=True)
class MemoryCell:
    address: CellAddress
    intrinsic_retrieval: float = 0.35
    lifetime_model: DecoherenceModel = field(default_factory=Empirical)
    pitch: float = CELL_PITCH

    def __post_init__(self):
        if not 0 <= self.intrinsic_retrieval <= 1:
            raise MemoryModelError("intrinsic retrieval must be in [0, 1]")
        if not self.pitch > 0:
            raise MemoryModelError("pitch must be positive")

    def retrieval(self, elapsed: float) -> float:
        """Intrinsic retrieval efficiency after storing for ``elapsed`` seconds."""
        return self.intrinsic_retrieval * survival(self, elapsed)


def survival(cell: MemoryCell, elapsed: float) -> float:
    if np.any(np.asarray(elapsed) < 0):
        raise MemoryModelError("elapsed time must be non-negative")
    out = cell.lifetime_model.survival(elapsed)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- geometry

@dataclass(frozen=True)
class Geometry:
    k_write: np.ndarray
    k_signal: np.ndarray
    k_pump1: np.ndarray
    k_pump2: np.ndarray
    angle: float  # rad, between write and signal

    def __post_init__(self):
        for name in ("k_write", "k_signal", "k_pump1", "k_pump2"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise MemoryModelError(f"{name} must be a 3-vector")
            object.__setattr__(self, name, v)
        c = np.dot(self.k_write, self.k_signal) / (
            np.linalg.norm(self.k_write) * np.linalg.norm(self.k_signal)
        )
        measured = math.acos(min(1.0, max(-1.0, c)))
        if abs(measured - abs(self.angle)) > 1e-6:
            raise MemoryModelError(f"angle {self.angle} does not match wavevectors ({measured})")

    @classmethod
    def standard(cls, wavelength: float = DEFAULT_WAVELENGTH, angle_deg: float = DEFAULT_ANGLE_DEG,
                 cancel: bool = True) -> "Geometry":
        """Write along z, signal tilted by ``angle_deg``.

        With ``cancel`` the pumps run along the signal and write directions so
        that the transfer removes the spin-wave momentum exactly.
        """
        k = TWO_PI / wavelength
        th = math.radians(angle_deg)
        kw = k * np.array([0.0, 0.0, 1.0])
        ks = k * np.array([math.sin(th), 0.0, math.cos(th)])
        if cancel:
            kp1, kp2 = ks, kw
        else:
            kp1 = kp2 = k * np.array([0.0, 1.0, 0.0])
        return cls(kw, ks, kp1, kp2, th)


def spinwave_momentum(geom: Geometry, stage: str = "after_write") -> np.ndarray:
    ks = geom.k_write - geom.k_signal
    if stage == "after_write":
        return ks
    if stage == "after_freeze":
        return ks + geom.k_pump1 - geom.k_pump2
    raise MemoryModelError(f"unknown stage {stage!r}")


@dataclass(frozen=True)
class SpinWave:
    cell: CellAddress
    level: str  # "gs" or "gs'"
    momentum: np.ndarray
    created_at: float
    payload: str = ""  # label of the JointState mode carrying the excitation
    residual: float = 1.0  # rad/m allowed on the clock level

    def __post_init__(self):
        if self.level not in ("gs", "gs'"):
            raise MemoryModelError(f"unknown level {self.level!r}")
        k = np.asarray(self.momentum, dtype=float)
        object.__setattr__(self, "momentum", k)
        if self.created_at < 0:
            raise MemoryModelError("created_at must be non-negative")
        if self.level == "gs'" and np.linalg.norm(k) > self.residual:
            raise MemoryModelError(f"frozen spin wave keeps |k|={np.linalg.norm(k):.3g} rad/m")

    def freeze(self, geom: Geometry) -> "SpinWave":
        return replace(self, level="gs'", momentum=self.momentum + geom.k_pump1 - geom.k_pump2)

    def unfreeze(self, geom: Geometry) -> "SpinWave":
        return replace(self, level="gs", momentum=self.momentum - geom.k_pump1 + geom.k_pump2)


# ------------------------------------------------------------------ STIRAP

@dataclass(frozen=True)
class StirapPulse:
    """Gaussian pump/Stokes pair; Rabi frequencies and detuning in rad/s."""

    omega1: float = TWO_PI * 20e6
    omega2: float = TWO_PI * 20e6
    sigma: float = 0.7e-6
    delay: float = 1.4e-6
    detuning: float = TWO_PI * 40e6

    def __post_init__(self):
        if self.omega1 < 0 or self.omega2 < 0:
            raise MemoryModelError("Rabi frequencies must be non-negative")
        if not self.sigma > 0 or not self.delay > 0:
            raise MemoryModelError("sigma and delay must be positive")


@dataclass(frozen=True)
class TransferResult:
    efficiency: float
    populations: tuple[float, float, float]  # initial, excited, target
    steps: int
    times: np.ndarray | None = None
    trajectory: np.ndarray | None = None  # populations per step, shape (steps+1, 3)


class IntegrationError(RuntimeError):
    pass


def _hamiltonians(pulse: StirapPulse, delta2: float, t: np.ndarray) -> np.ndarray:
    # basis: 0 = initial ground, 1 = excited, 2 = target ground
    # Stokes (omega2) is centred at t=0, pump (omega1) follows after the delay
    s2 = 2 * pulse.sigma**2
    o1 = pulse.omega1 * np.exp(-((t - pulse.delay) ** 2) / s2)
    o2 = pulse.omega2 * np.exp(-(t**2) / s2)
    h = np.zeros((t.size, 3, 3), dtype=complex)
    h[:, 0, 1] = h[:, 1, 0] = o1 / 2
    h[:, 1, 2] = h[:, 2, 1] = o2 / 2
    h[:, 1, 1] = pulse.detuning
    h[:, 2, 2] = delta2
    return h


def _time_grid(pulse: StirapPulse, steps_per_sigma: int):
    t0 = -5 * pulse.sigma
    t1 = pulse.delay + 5 * pulse.sigma
    n = int(math.ceil((t1 - t0) * steps_per_sigma / pulse.sigma))
    h = (t1 - t0) / n
    return t0, h, n


def _ordered_product(m: np.ndarray) -> np.ndarray:
    """``m[n-1] @ ... @ m[0]`` by pairwise reduction."""
    eye = np.eye(m.shape[-1], dtype=m.dtype)[None]
    while m.shape[0] > 1:
        if m.shape[0] % 2:
            m = np.concatenate([m, eye], axis=0)
        m = m[1::2] @ m[0::2]
    return m[0]


def rk4_propagators(pulse: StirapPulse, delta2: float, steps_per_sigma: int):
    """Per-step RK4 transfer matrices of the linear Schrödinger equation."""
    t0, h, n = _time_grid(pulse, steps_per_sigma)
    t = t0 + h * np.arange(n)
    a1 = -1j * _hamiltonians(pulse, delta2, t)
    a2 = -1j * _hamiltonians(pulse, delta2, t + h / 2)
    a3 = -1j * _hamiltonians(pulse, delta2, t + h)
    eye = np.eye(3)
    k1 = a1
    k2 = a2 @ (eye + h / 2 * k1)
    k3 = a2 @ (eye + h / 2 * k2)
    k4 = a3 @ (eye + h * k3)
    return t0, h, eye + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_final(pulse, delta2, steps_per_sigma):
    _, _, m = rk4_propagators(pulse, delta2, steps_per_sigma)
    psi = _ordered_product(m) @ np.array([1, 0, 0], dtype=complex)
    return np.abs(psi) ** 2, m.shape[0]


def stirap_transfer(pulse: StirapPulse, two_photon_detuning: float = 0.0, *,
                    steps_per_sigma: int = 200, tol: float = 1e-8, max_halvings: int = 8,
                    trajectory: bool = False) -> TransferResult:
    """Integrate the three-level Λ system through a counterintuitive pulse pair.

    Fixed-step RK4 over ±5σ around the pulse centres; the step is halved
    until successive efficiencies agree to ``tol``.
    """
    pops, n = _rk4_final(pulse, two_photon_detuning, steps_per_sigma)
    for _ in range(max_halvings):
        steps_per_sigma *= 2
        finer, n = _rk4_final(pulse, two_photon_detuning, steps_per_sigma)
        converged = abs(finer[2] - pops[2]) < tol
        pops = finer
        if converged:
            break
    else:
        raise IntegrationError(f"STIRAP integration did not reach {tol:g} after {max_halvings} halvings")
    if abs(pops.sum() - 1) > 1e-6:
        raise IntegrationError(f"norm drift {pops.sum() - 1:.2e}")

    times = traj = None
    if trajectory:
        t0, h, m = rk4_propagators(pulse, two_photon_detuning, steps_per_sigma)
        psi = np.array([1, 0, 0], dtype=complex)
        traj = np.empty((m.shape[0] + 1, 3))
        traj[0] = 1, 0, 0
        for i in range(m.shape[0]):
            psi = m[i] @ psi
            traj[i + 1] = np.abs(psi) ** 2
        times = t0 + h * np.arange(m.shape[0] + 1)
    return TransferResult(float(pops[2]), tuple(float(p) for p in pops), n, times, traj)


# --------------------------------------------------------------- crosstalk

def crosstalk_leakage(transfer_efficiency: float, elapsed: float, tau_fast: float = DEFAULT_TAU_FAST):
    """Un-transferred population still retrievable ``elapsed`` after the transfer."""
    if transfer_efficiency < 0 or tau_fast <= 0 or np.any(np.asarray(elapsed) < 0):
        raise MemoryModelError("crosstalk inputs must be non-negative")
    residual = max(0.0, 1.0 - transfer_efficiency)
    out = residual * np.exp(-((np.asarray(elapsed, dtype=float) / tau_fast) ** 2))
    return float(out) if np.ndim(out) == 0 else out


def calibrate_tau_fast(residual: float, elapsed: float, leakage: float) -> float:
    """Fast-decay time for which ``crosstalk_leakage`` hits ``leakage`` at ``elapsed``."""
    if not 0 < leakage < residual:
        raise MemoryModelError("need 0 < leakage < residual")
    return elapsed / math.sqrt(math.log(residual / leakage))


# -------------------------------------------------------------- grid table

def default_grid(intrinsic_retrieval: float = 0.35, tau: float = 1e-3) -> list[MemoryCell]:
    return [
        MemoryCell(CellAddress(x, y), intrinsic_retrieval, Empirical(tau))
        for y in range(1, GRID_SIZE + 1)
        for x in range(1, GRID_SIZE + 1)
    ]


def grid_from_records(records) -> list[MemoryCell]:
    cells = []
    seen = set()
    for rec in records:
        extra = set(rec) - {"x", "y", "R_i", "tau_seconds"}
        if extra:
            raise MemoryModelError(f"unknown grid fields {sorted(extra)}")
        missing = {"x", "y", "R_i", "tau_seconds"} - set(rec)
        if missing:
            raise MemoryModelError(f"grid record lacks {sorted(missing)}")
        addr = CellAddress(int(rec["x"]), int(rec["y"]))
        if addr in seen:
            raise MemoryModelError(f"duplicate cell {addr}")
        seen.add(addr)
        cells.append(MemoryCell(addr, float(rec["R_i"]), Empirical(float(rec["tau_seconds"]))))
    return cells


def grid_records(cells) -> list[dict]:
    out = []
    for c in cells:
        if not isinstance(c.lifetime_model, Empirical):
            raise MemoryModelError("only empirical cells serialize to the grid table")
        out.append({"x": c.address.x, "y": c.address.y, "R_i": c.intrinsic_retrieval,
                    "tau_seconds": c.lifetime_model.tau})
    return out


def load_grid(path) -> list[MemoryCell]:
    return grid_from_records(json.loads(Path(path).read_text()))


def save_grid(cells, path) -> None:
    Path(path).write_text(json.dumps(grid_records(cells), indent=2) + "\n")
