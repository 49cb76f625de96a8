"""Multicell atomic quantum memory repeater simulator."""

from .fock import JointState, ModeSet, SourceParams, TOL
from .memory import CellAddress, MemoryCell, crosstalk_leakage, stirap_transfer, survival
from .photonics import DetectionChain, calibrate_chi, chain_transmission, fidelity_bound, herald_statistics
from .protocol import NodeConfig, NoiseModel, run_shot
from .tomography import CountsTable, fidelity_with_errorbar
from .fitting import FitResult, fit_exponential

__version__ = "0.1.0"
