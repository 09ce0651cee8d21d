"""Small dense complex linear algebra for two-photon polarization/time-bin states.

Basis ordering is fixed throughout the package: polarization ``H=0, V=1``,
time bin ``early=0, late=1`` and composite order
``(pol_XX, pol_X, tb_XX, tb_X)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

__all__ = [
    "QuantumStateError",
    "Ket",
    "DensityMatrix",
    "normalize",
    "basis_ket",
    "tensor",
    "partial_trace",
    "eig_hermitian",
    "project_to_physical",
    "trace_distance",
    "write_density_matrix",
    "read_density_matrix",
]

MAX_DIM = 16
DENSITY_DIMS = (2, 4, 16)
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_FLOOR = -1e-9


class QuantumStateError(ValueError):
    """Raised when an array violates the invariants of a quantum state."""


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, DensityMatrix):
        return m.matrix
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise QuantumStateError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise QuantumStateError("matrix has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class Ket:
    """Normalized pure state vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size == 0 or amp.size > MAX_DIM:
            raise QuantumStateError(f"ket dimension {amp.size} outside 1..{MAX_DIM}")
        if not np.all(np.isfinite(amp)):
            raise QuantumStateError("ket has non-finite amplitudes")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise QuantumStateError("ket is not normalized; build it with normalize()")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix of dimension 2, 4 or 16.

    Validation happens on construction; instances are immutable.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(_as_matrix(self.matrix), dtype=complex)
        d = m.shape[0]
        if m.shape != (d, d) or d not in DENSITY_DIMS:
            raise QuantumStateError(f"density matrix must be square with dim in {DENSITY_DIMS}, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) >= HERMITIAN_TOL:
            raise QuantumStateError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) >= TRACE_TOL:
            raise QuantumStateError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        # Symmetrize so downstream eigensolvers see an exactly Hermitian array.
        m = 0.5 * (m + m.conj().T)
        if np.linalg.eigvalsh(m)[0] < PSD_FLOOR:
            raise QuantumStateError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def normalize(vec: Sequence[complex]) -> Ket:
    """Return the unit-norm ket along ``vec``."""
    v = np.asarray(vec, dtype=complex).reshape(-1)
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise QuantumStateError("cannot normalize a zero or non-finite vector")
    return Ket(v / n)


def basis_ket(index: int, dim: int) -> Ket:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return Ket(v)


State = Union[Ket, DensityMatrix]


def tensor(a: State, b: State) -> State:
    """Kronecker product of two kets or two density matrices."""
    if isinstance(a, Ket) and isinstance(b, Ket):
        if a.dim * b.dim > MAX_DIM:
            raise QuantumStateError(f"composite dimension {a.dim * b.dim} exceeds {MAX_DIM}")
        return normalize(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, Ket):
        a = a.density()
    if isinstance(b, Ket):
        b = b.density()
    if a.dim * b.dim > MAX_DIM:
        raise QuantumStateError(f"composite dimension {a.dim * b.dim} exceeds {MAX_DIM}")
    return DensityMatrix(np.kron(a.matrix, b.matrix))


def partial_trace(rho: State, keep: Union[int, Sequence[int]], dims: Sequence[int]) -> DensityMatrix:
    """Reduced state on the factors listed in ``keep``.

    ``dims`` gives the factor dimensions in composite order; ``keep`` is a
    factor index or a sequence of indices (returned in ascending order).
    """
    if isinstance(rho, Ket):
        rho = rho.density()
    m = _as_matrix(rho)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != m.shape[0]:
        raise QuantumStateError(f"factor dims {dims} do not multiply to {m.shape[0]}")
    keep = sorted({int(keep)} if np.isscalar(keep) else {int(k) for k in keep})
    if not keep or keep[0] < 0 or keep[-1] >= len(dims):
        raise QuantumStateError(f"keep selector {keep} inconsistent with {len(dims)} factors")
    n = len(dims)
    drop = [i for i in range(n) if i not in keep]
    t = m.reshape(dims + dims)
    # Contract each dropped ket index with its bra partner, highest first so
    # earlier axis numbers stay valid.
    for k, i in enumerate(sorted(drop, reverse=True)):
        cur = n - k
        t = np.trace(t, axis1=i, axis2=i + cur)
    dk = int(np.prod([dims[i] for i in keep]))
    return DensityMatrix(t.reshape(dk, dk))


def eig_hermitian(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and matching eigenvector columns of a Hermitian matrix."""
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise QuantumStateError("matrix is not square")
    if np.max(np.abs(a - a.conj().T)) >= HERMITIAN_TOL:
        raise QuantumStateError("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return w[::-1].copy(), v[:, ::-1].copy()


def project_to_physical(m) -> DensityMatrix:
    """Clip negative eigenvalues of the Hermitian part and renormalize the trace."""
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise QuantumStateError("matrix is not square")
    h = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise QuantumStateError("no positive spectrum; matrix has no physical projection")
    w = w / w.sum()
    return DensityMatrix((v * w) @ v.conj().T)


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    d = _as_matrix(a) - _as_matrix(b)
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


def write_density_matrix(path, rho: DensityMatrix) -> None:
    """Write ``rho`` as JSON with ``dim``, ``re`` and ``im`` at 12 significant digits."""
    m = rho.matrix

    def fmt(x):
        return [[float(f"{v:.12g}") for v in row] for row in x]

    doc = {"dim": rho.dim, "re": fmt(m.real), "im": fmt(m.imag)}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_density_matrix(path) -> DensityMatrix:
    doc = json.loads(Path(path).read_text())
    try:
        dim = int(doc["dim"])
        re = np.asarray(doc["re"], dtype=float)
        im = np.asarray(doc["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise QuantumStateError(f"malformed density-matrix file {path}: {exc}") from None
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise QuantumStateError(f"array shapes {re.shape}/{im.shape} do not match dim {dim}")
    m = re + 1j * im
    # 12-digit rounding can leave the trace off by ~1e-12; renormalize before validating.
    tr = np.trace(m).real
    if abs(tr - 1.0) < 1e-9:
        m = m / tr
    return DensityMatrix(m)
