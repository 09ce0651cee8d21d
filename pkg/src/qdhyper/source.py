"""Noisy hyper-entangled pair state of a biexciton-exciton cascade.

The emitted state is modelled as a product of a polarization factor and a
time-bin factor on the ordering ``(pol_XX, pol_X, tb_XX, tb_X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Dict

import numpy as np

from .qlin import DensityMatrix, basis_ket, normalize, tensor

__all__ = [
    "HBAR_UEV_PS",
    "REFERENCE_VALUES",
    "SourceParams",
    "EmissionModel",
    "fss_coherence_factor",
    "build_polarization_state",
    "build_timebin_state",
    "build_hyper_state",
    "branch_weights",
    "calibrate_source",
    "PHI_PLUS",
    "TB_PLUS",
    "PSI_HYPER",
]

HBAR_UEV_PS = 658.2119569

# Reported measurement values, as (value, uncertainty).
REFERENCE_VALUES: Dict[str, tuple] = {
    "C_p_dedicated": (0.70, 0.04),
    "F_p_dedicated": (0.81, 0.02),
    "C_tb_at_HH": (0.69, 0.09),
    "F_tb_at_HH": (0.76, 0.06),
    "F_hyp": (0.55, 0.04),
    "C_p_subspace": (0.71, 0.05),
    "C_tb_subspace": (0.76, 0.08),
    "F_p_subspace": (0.81, 0.06),
    "F_tb_subspace": (0.87, 0.04),
}

# (|HH> + |VV>)/sqrt2 and (|EE> + |LL>)/sqrt2 share the same 4-vector.
PHI_PLUS = normalize([1, 0, 0, 1])
TB_PLUS = PHI_PLUS
PSI_HYPER = tensor(PHI_PLUS, TB_PLUS)


class SourceParamsError(ValueError):
    pass


@dataclass(frozen=True)
class SourceParams:
    """Physical knobs of the cascade source.

    ``tb_dephasing`` is the surviving fraction of early/late coherence, so 1
    means a fully coherent time-bin state. ``cross_dephasing`` is the white
    noise admixture of the polarization factor.
    """

    tau_xx: float = 220.0  # ps
    tau_x: float = 400.0  # ps
    fss: float = 0.0  # ueV
    eps: float = 0.06
    phi_p: float = 0.0  # rad
    delay: float = 3.0  # ns
    rep_rate: float = 82.0  # MHz
    cross_dephasing: float = 0.0
    tb_dephasing: float = 1.0
    background: float = 0.0
    jitter_sigma: float = 100.0  # ps
    double_excitation_weight: float = 1.0
    timebin_enabled: bool = True

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("timebin_enabled", "phi_p"):
                continue
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise SourceParamsError(f"{f.name} must be finite and nonnegative, got {v}")
        if not np.isfinite(self.phi_p):
            raise SourceParamsError("phi_p must be finite")
        for name in ("eps", "cross_dephasing", "tb_dephasing"):
            if getattr(self, name) > 1:
                raise SourceParamsError(f"{name} must lie in [0, 1]")
        if self.background >= 1:
            raise SourceParamsError("background must lie in [0, 1)")
        if self.timebin_enabled:
            if self.delay * 1000.0 <= 5 * max(self.tau_x, self.tau_xx):
                raise SourceParamsError("delay must exceed 5 lifetimes for distinguishable time bins")
            if self.rep_rate > 0 and 3 * self.delay >= 1000.0 / self.rep_rate:
                raise SourceParamsError("three arrival regions do not fit in one laser period")

    def replace(self, **changes) -> "SourceParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class EmissionModel:
    rho16: DensityMatrix
    branch_weights: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.rho16.dim != 16:
            raise ValueError("rho16 must be 16-dimensional")
        if abs(sum(self.branch_weights.values()) - 1.0) > 1e-9:
            raise ValueError("branch weights must sum to 1")


def fss_coherence_factor(params: SourceParams) -> float:
    """Magnitude of the time-averaged HH-VV coherence, 1/sqrt(1 + (S tau_x / hbar)^2)."""
    if params.tau_x <= 0:
        raise SourceParamsError("tau_x must be positive")
    x = params.fss * params.tau_x / HBAR_UEV_PS
    return 1.0 / np.sqrt(1.0 + x * x)


def build_polarization_state(params: SourceParams) -> DensityMatrix:
    k = fss_coherence_factor(params)
    bell = np.zeros((4, 4), dtype=complex)
    bell[0, 0] = bell[3, 3] = 0.5
    bell[0, 3] = bell[3, 0] = 0.5 * k
    w = params.cross_dephasing
    return DensityMatrix((1 - w) * bell + w * np.eye(4) / 4)


def branch_weights(params: SourceParams) -> Dict[str, float]:
    """Emission-branch probabilities early-early : late-late : early-late = 1 : 1 : c*eps."""
    if not params.timebin_enabled:
        return {"early-early": 1.0, "late-late": 0.0, "early-late": 0.0}
    d = params.double_excitation_weight * params.eps
    z = 2.0 + d
    return {"early-early": 1.0 / z, "late-late": 1.0 / z, "early-late": d / z}


def build_timebin_state(params: SourceParams) -> DensityMatrix:
    """Time-bin factor on (tb_XX, tb_X) with coherence phase 2*phi_p on |LL><EE|.

    With time-bin generation disabled (single excitation pulse) this is |EE><EE|.
    """
    if params.eps > 0.5:
        raise SourceParamsError("eps > 0.5 breaks the low-excitation assumption")
    if not params.timebin_enabled:
        return basis_ket(0, 4).density()
    w = branch_weights(params)
    rho = np.zeros((4, 4), dtype=complex)
    ee, el, le, ll = 0, 1, 2, 3
    rho[ee, ee] = w["early-early"]
    rho[ll, ll] = w["late-late"]
    rho[el, el] = w["early-late"]
    coh = params.tb_dephasing * np.sqrt(w["early-early"] * w["late-late"])
    rho[ll, ee] = coh * np.exp(2j * params.phi_p)
    rho[ee, ll] = np.conj(rho[ll, ee])
    return DensityMatrix(rho)


def build_hyper_state(params: SourceParams) -> EmissionModel:
    rho = tensor(build_polarization_state(params), build_timebin_state(params))
    return EmissionModel(rho, branch_weights(params))


def calibrate_source(
    concurrence_pol: float = 0.70,
    fidelity_tb: float = 0.87,
    fss: float = 0.5,
    base: SourceParams | None = None,
) -> SourceParams:
    """Choose ``cross_dephasing`` and ``tb_dephasing`` to hit target metrics.

    For the polarization factor the concurrence is ``(1-w)k - w/2``; for the
    time-bin factor the fidelity to (|EE>+|LL>)/sqrt2 is ``(1-e)(1+v)/2`` with
    ``e`` the early-late weight. Both are inverted in closed form.
    """
    base = base or SourceParams()
    p = base.replace(fss=fss)
    k = fss_coherence_factor(p)
    if not 0 <= concurrence_pol <= k:
        raise SourceParamsError(f"concurrence {concurrence_pol} unreachable with coherence factor {k:.4f}")
    w = (k - concurrence_pol) / (k + 0.5)
    e = branch_weights(p)["early-late"]
    v = 2 * fidelity_tb / (1 - e) - 1
    if not 0 <= v <= 1:
        raise SourceParamsError(f"time-bin fidelity {fidelity_tb} unreachable with early-late weight {e:.4f}")
    return p.replace(cross_dephasing=float(w), tb_dephasing=float(v))

