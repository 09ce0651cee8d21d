"""Fidelity, concurrence and purity of reconstructed states."""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .qlin import DensityMatrix, Ket, QuantumStateError, partial_trace, tensor

__all__ = [
    "EntanglementReport",
    "fidelity_to_pure",
    "concurrence",
    "purity",
    "subspace_report",
    "hyper_fidelity",
    "werner_state",
    "report",
]

_SIGMA_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


@dataclass(frozen=True)
class EntanglementReport:
    fidelity: float
    concurrence: float
    purity: float
    target_label: str
    dim: int = 4

    def __post_init__(self):
        tol = 1e-9
        if not -tol <= self.fidelity <= 1 + tol:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        if not -tol <= self.concurrence <= 1 + tol:
            raise ValueError(f"concurrence {self.concurrence} outside [0, 1]")
        if not 1 / self.dim - tol <= self.purity <= 1 + tol:
            raise ValueError(f"purity {self.purity} outside [1/dim, 1]")

    def as_dict(self):
        return {"fidelity": self.fidelity, "concurrence": self.concurrence, "purity": self.purity}


def _density(rho) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, Ket):
        return rho.density()
    return DensityMatrix(rho)


def fidelity_to_pure(rho, target: Ket) -> float:
    """Overlap <psi|rho|psi>, clipped to [0, 1]."""
    rho = _density(rho)
    psi = target.amplitudes
    if psi.size != rho.dim:
        raise QuantumStateError(f"target dim {psi.size} does not match state dim {rho.dim}")
    f = np.vdot(psi, rho.matrix @ psi)
    if abs(f.imag) > 1e-12:
        raise QuantumStateError("fidelity has an imaginary part; state is not Hermitian")
    return float(np.clip(f.real, 0.0, 1.0))


def purity(rho) -> float:
    return _density(rho).purity()


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state.

    The decreasing values lambda_i are the singular values of
    sqrt(rho) (Y x Y) conj(sqrt(rho)), whose Gram matrix is sqrt(rho) rho~ sqrt(rho).
    Taking singular values directly avoids square-rooting round-off in
    near-zero eigenvalues, which matters for rank-deficient states.
    """
    rho = _density(rho)
    if rho.dim != 4:
        raise QuantumStateError("concurrence is defined here for two-qubit states only")
    w, v = np.linalg.eigh(rho.matrix)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    lam = np.linalg.svd(sq @ _SIGMA_YY @ sq.conj(), compute_uv=False)
    return float(np.clip(lam[0] - lam[1] - lam[2] - lam[3], 0.0, 1.0))


_SUBSYSTEM_KEEP = {"polarization": (0, 1), "timebin": (2, 3)}


def subspace_report(rho16, which: str, target: Ket) -> EntanglementReport:
    """Partial-trace ``rho16`` onto one degree of freedom and quantify it."""
    rho16 = _density(rho16)
    if rho16.dim != 16:
        raise QuantumStateError("subspace report needs a 16-dimensional state")
    try:
        keep = _SUBSYSTEM_KEEP[which]
    except KeyError:
        raise ValueError(f"unknown subsystem {which!r}") from None
    red = partial_trace(rho16, keep, [2, 2, 2, 2])
    return EntanglementReport(fidelity_to_pure(red, target), concurrence(red), red.purity(), which)


def hyper_fidelity(rho16, phi_pol: Ket, phi_tb: Ket) -> float:
    rho16 = _density(rho16)
    if rho16.dim != 16:
        raise QuantumStateError("hyper fidelity needs a 16-dimensional state")
    return fidelity_to_pure(rho16, tensor(phi_pol, phi_tb))


def werner_state(p: float) -> DensityMatrix:
    """p |Phi+><Phi+| + (1 - p) I/4."""
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return DensityMatrix(p * np.outer(phi, phi) + (1 - p) * np.eye(4) / 4)


def report(rho, target: Ket, label: str) -> EntanglementReport:
    """Metrics of a two-qubit (or, without concurrence, 16-dim) state against ``target``."""
    rho = _density(rho)
    c = concurrence(rho) if rho.dim == 4 else 0.0
    return EntanglementReport(fidelity_to_pure(rho, target), c, rho.purity(), label, rho.dim)

