import numpy as np
import pytest

from qdhyper import detection as det
from qdhyper.detection import MeasurementSetting
from qdhyper.qlin import DensityMatrix
from qdhyper.source import SourceParams, build_hyper_state, calibrate_source
from qdhyper.tomography import POL_LABELS, TIMEBIN_PHASES


def pol_settings():
    return [MeasurementSetting.from_labels(p, timebin_enabled=False) for p in POL_LABELS]


def hyper_settings():
    return [MeasurementSetting.from_labels(p, a, b) for p in POL_LABELS for a, b in TIMEBIN_PHASES]


def exact_counts(rho16, settings, n):
    return [det.exact_projection_counts(rho16, s, n) for s in settings]


def poisson_counts(rho16, settings, n, rng):
    out = []
    for pc in exact_counts(rho16, settings, n):
        drawn = {lab: float(min(rng.poisson(v), n)) for lab, v in pc.counts.items()}
        out.append(det.ProjectionCounts(pc.setting, drawn, n, dict(pc.efficiency)))
    return out


def embed_pol(rho4):
    """Place a two-qubit polarization state next to a fixed |EE> time-bin factor."""
    ee = np.zeros((4, 4))
    ee[0, 0] = 1
    m = rho4.matrix if isinstance(rho4, DensityMatrix) else np.asarray(rho4)
    return DensityMatrix(np.kron(m, ee))


def random_state(dim, rng, rank=None):
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


@pytest.fixture(scope="session")
def calibrated():
    return calibrate_source()


@pytest.fixture(scope="session")
def calibrated_rho16(calibrated):
    return build_hyper_state(calibrated).rho16


@pytest.fixture(scope="session")
def ideal_rho16():
    return build_hyper_state(SourceParams(eps=0.0)).rho16
