"""Simulation and tomography of polarization x time-bin hyper-entangled photon
pairs emitted by a quantum-dot biexciton-exciton cascade."""

from .qlin import DensityMatrix, Ket, normalize, partial_trace, tensor
from .source import PHI_PLUS, PSI_HYPER, TB_PLUS, SourceParams, build_hyper_state, calibrate_source
from .detection import MeasurementSetting, outcome_probabilities, synthesize_histogram
from .tomography import MLEConfig, hyper_set, mle_reconstruct, standard_pol_set, timebin_set_from_phases
from .metrics import concurrence, fidelity_to_pure, hyper_fidelity, subspace_report

__version__ = "0.1.0"
