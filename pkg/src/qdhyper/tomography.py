"""Projector sets, linear inversion and maximum-likelihood state reconstruction."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .detection import (
    REGIONS,
    MeasurementSetting,
    ProjectionCounts,
    canonical_phase,
    ket_from_label,
    region_labels,
    timebin_projector,
)
from .qlin import DensityMatrix, QuantumStateError, project_to_physical

__all__ = [
    "ReconstructionError",
    "ProjectorSet",
    "MLEConfig",
    "MLEResult",
    "POL_LABELS",
    "TIMEBIN_PHASES",
    "standard_pol_set",
    "timebin_set_from_phases",
    "timebin_region_projectors",
    "hyper_set",
    "projector_set_from_labels",
    "pauli_basis",
    "linear_inversion",
    "log_likelihood",
    "mle_reconstruct",
    "bootstrap_errors",
    "strip_polarization",
    "marginal_counts",
]

# The standard 16 two-photon analyzer settings for two-qubit tomography.
POL_LABELS = ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
              "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")
TIMEBIN_PHASES = ((0.0, 0.0), (0.0, np.pi / 2), (np.pi / 2, 0.0), (np.pi / 2, np.pi / 2))
# Normalization-free likelihood still needs a floor to keep log() finite.
_PROB_FLOOR = 1e-300


class ReconstructionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    dim: int
    labels: Tuple[str, ...]
    kets: np.ndarray  # shape (n, dim), one normalized ket per row

    def __post_init__(self):
        kets = np.asarray(self.kets, dtype=complex)
        if kets.shape != (len(self.labels), self.dim):
            raise ValueError("kets shape does not match labels and dim")
        kets.setflags(write=False)
        object.__setattr__(self, "kets", kets)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    def __len__(self):
        return len(self.labels)

    def ket(self, label: str) -> np.ndarray:
        try:
            return self.kets[self._index[label]]
        except KeyError:
            raise ReconstructionError(f"label {label!r} is not in this projector set") from None

    def measurement_matrix(self) -> np.ndarray:
        """Rows ``<psi_i| B_k |psi_i>`` over the Pauli-product basis ``B_k``."""
        return _measurement_rows(self.kets)

    @property
    def completeness_rank(self) -> int:
        return int(np.linalg.matrix_rank(self.measurement_matrix(), tol=1e-9))


@dataclass(frozen=True)
class MLEConfig:
    max_iterations: int = 10_000
    rel_loglik_tol: float = 1e-10
    init: str = "linear-inversion"

    def __post_init__(self):
        if self.rel_loglik_tol <= 0:
            raise ValueError("rel_loglik_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.init not in ("linear-inversion", "maximally-mixed"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class MLEResult:
    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    grad_norm: float
    message: str = ""


# ---------------------------------------------------------------------------
# projector sets

def _make_set(labels: Sequence[str], kets: Sequence[np.ndarray]) -> ProjectorSet:
    kets = np.array(kets, dtype=complex)
    return ProjectorSet(kets.shape[1], tuple(labels), kets)


def projector_set_from_labels(labels: Sequence[str]) -> ProjectorSet:
    """Projector set whose kets are parsed from the labels themselves."""
    labels = list(dict.fromkeys(labels))
    return _make_set(labels, [ket_from_label(lab).amplitudes for lab in labels])


def standard_pol_set() -> ProjectorSet:
    return projector_set_from_labels(POL_LABELS)


def timebin_region_projectors(phases=TIMEBIN_PHASES) -> List[Tuple[str, np.ndarray]]:
    """All (label, ket) pairs delivered by the 9 regions of each phase setting, with repeats."""
    out = []
    for phi_xx, phi_x in phases:
        labs = region_labels(MeasurementSetting(phi_xx=phi_xx, phi_x=phi_x))
        for r, s in REGIONS:
            out.append((labs[(r, s)], timebin_projector(r, s, phi_xx, phi_x).amplitudes))
    return out


def timebin_set_from_phases(phases=TIMEBIN_PHASES) -> ProjectorSet:
    """Deduplicated time-bin projectors from the analysis-phase settings.

    Kets are compared after rotating their global phase (first nonzero
    amplitude real positive) to within 1e-12.
    """
    labels, kets = [], []
    for lab, k in timebin_region_projectors(phases):
        k = canonical_phase(k)
        if any(np.max(np.abs(k - q)) < 1e-12 for q in kets):
            continue
        labels.append(lab)
        kets.append(k)
    return _make_set(labels, kets)


def hyper_set() -> ProjectorSet:
    pol, tb = standard_pol_set(), timebin_set_from_phases()
    labels, kets = [], []
    for (pl, pk), (tl, tk) in itertools.product(zip(pol.labels, pol.kets), zip(tb.labels, tb.kets)):
        labels.append(f"{pl}|{tl}")
        kets.append(np.kron(pk, tk))
    return _make_set(labels, kets)


@lru_cache(maxsize=None)
def pauli_basis(dim: int) -> np.ndarray:
    """Tensor products of {I, X, Y, Z}; shape (dim**2, dim, dim)."""
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError("dimension must be a power of two")
    single = [
        np.eye(2, dtype=complex),
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    out = []
    for combo in itertools.product(single, repeat=n):
        m = np.array([[1.0 + 0j]])
        for p in combo:
            m = np.kron(m, p)
        out.append(m)
    b = np.array(out)
    b.setflags(write=False)
    return b


def _measurement_rows(kets: np.ndarray) -> np.ndarray:
    basis = pauli_basis(kets.shape[1])
    return np.real(np.einsum("ni,kij,nj->nk", kets.conj(), basis, kets))


# ---------------------------------------------------------------------------
# data assembly

def _design(counts_list: Sequence[ProjectionCounts], pset: ProjectorSet):
    """Flatten labelled counts into (kets, exposure weights, counts)."""
    kets, weights, n = [], [], []
    for pc in counts_list:
        for lab, c in pc.counts.items():
            kets.append(pset.ket(lab))
            weights.append(pc.total_pairs * pc.efficiency.get(lab, 1.0))
            n.append(float(c))
    if not kets:
        raise ReconstructionError("no counts supplied")
    kets = np.array(kets)
    weights = np.array(weights, dtype=float)
    n = np.array(n, dtype=float)
    if np.any(n < 0) or np.any(weights <= 0):
        raise ReconstructionError("counts must be nonnegative and exposures positive")
    return kets, weights, n


def strip_polarization(counts_list: Sequence[ProjectionCounts]) -> List[ProjectionCounts]:
    """Drop the polarization prefix of hyper labels (time-bin data taken at one fixed analyzer)."""
    out = []
    for pc in counts_list:
        counts = {lab.split("|")[-1]: v for lab, v in pc.counts.items()}
        eff = {lab.split("|")[-1]: pc.efficiency[lab] for lab in pc.counts}
        out.append(ProjectionCounts(pc.setting, counts, pc.total_pairs, eff))
    return out


_TIME_BASIS = ("ee", "el", "le", "ll")
_POL_BASIS = ("HH", "HV", "VH", "VV")


def marginal_counts(counts_list: Sequence[ProjectionCounts], which: str) -> List[ProjectionCounts]:
    """Reduce hyper counts to one subsystem by summing over a complete basis of the other.

    ``which="polarization"`` sums the four time-basis regions (ee, el, le, ll)
    of every setting; ``which="timebin"`` sums each time-bin label over the
    H/V analyzer settings HH, HV, VH and VV of the same phase setting.
    """
    if which == "polarization":
        acc: Dict[str, List[float]] = {}
        for pc in counts_list:
            for lab, v in pc.counts.items():
                pol, _, tb = lab.partition("|")
                if tb in _TIME_BASIS:
                    a = acc.setdefault(pol, [0.0, 0.0])
                    a[0] += v
                    a[1] += pc.total_pairs * pc.efficiency[lab]
        return [_scaled(0.0, 0.0, {pol: n}, {pol: w}) for pol, (n, w) in acc.items()]
    if which == "timebin":
        acc2: Dict[Tuple[float, float], Dict[str, List[float]]] = {}
        for pc in counts_list:
            phases = (pc.setting.phi_xx, pc.setting.phi_x)
            for lab, v in pc.counts.items():
                pol, _, tb = lab.partition("|")
                if pol not in _POL_BASIS:
                    continue
                a = acc2.setdefault(phases, {}).setdefault(tb, [0.0, None, 0])
                w = pc.total_pairs * pc.efficiency[lab]
                if a[1] is not None and abs(a[1] - w) > 1e-9 * w:
                    raise ReconstructionError("time-bin marginal needs equal exposure across H/V settings")
                a[0] += v
                a[1] = w
                a[2] += 1
        out = []
        for (pxx, px), d in sorted(acc2.items()):
            if any(a[2] != 4 for a in d.values()):
                raise ReconstructionError("time-bin marginal needs all four H/V analyzer settings")
            counts = {tb: a[0] for tb, a in d.items()}
            eff = {tb: a[1] for tb, a in d.items()}
            out.append(_scaled(pxx, px, counts, eff))
        return out
    raise ValueError(f"unknown subsystem {which!r}")


def _scaled(pxx, px, counts, exposures) -> ProjectionCounts:
    # Express summed exposures through total_pairs/efficiency while keeping count <= total.
    total = max(max(exposures.values()), max(counts.values()))
    eff = {k: w / total for k, w in exposures.items()}
    return ProjectionCounts(MeasurementSetting(phi_xx=pxx, phi_x=px), counts, total, eff)


# ---------------------------------------------------------------------------
# estimators

def linear_inversion(counts_list: Sequence[ProjectionCounts], pset: ProjectorSet, normalize: bool = True) -> np.ndarray:
    """Least-squares state from counts, expanded in the Pauli basis.

    Models ``count_i = mu * exposure_i * <psi_i|rho|psi_i>`` with unknown
    overall scale ``mu``; the result is divided by its trace. Hermitian by
    construction, possibly not positive.
    """
    kets, w, n = _design(counts_list, pset)
    rows = _measurement_rows(kets)
    d = pset.dim
    if np.linalg.matrix_rank(rows, tol=1e-9) < d * d:
        raise ReconstructionError("projector set is not tomographically complete")
    coef, *_ = np.linalg.lstsq(rows * w[:, None], n, rcond=None)
    rho = np.einsum("k,kij->ij", coef, pauli_basis(d)) / d
    rho = 0.5 * (rho + rho.conj().T)
    if not normalize:
        return rho
    tr = np.trace(rho).real
    if tr <= 0:
        raise ReconstructionError("linear inversion gave a non-positive trace")
    return rho / tr


def _loglik_from_probs(q: np.ndarray, w: np.ndarray, n: np.ndarray) -> float:
    # Profile out the overall scale mu = sum(n) / sum(w q).
    total = n.sum()
    s = float(np.dot(w, q))
    mu = total / s
    lam = mu * w * q
    with np.errstate(divide="ignore"):
        terms = np.where(n > 0, n * np.log(np.maximum(lam, 0.0)), 0.0)
    return float(terms.sum() - lam.sum())


def log_likelihood(rho, counts_list: Sequence[ProjectionCounts], pset: ProjectorSet) -> float:
    """Poisson log-likelihood (up to data-only constants) with the count scale profiled out."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    kets, w, n = _design(counts_list, pset)
    q = np.real(np.einsum("ni,ij,nj->n", kets.conj(), m, kets))
    return _loglik_from_probs(q, w, n)


def _tril_indices(d):
    return np.tril_indices(d), np.tril_indices(d, -1)


def _pack(t: np.ndarray) -> np.ndarray:
    d = t.shape[0]
    lo, strict = _tril_indices(d)
    return np.concatenate([t[lo].real, t[strict].imag])


def _unpack(x: np.ndarray, d: int) -> np.ndarray:
    lo, strict = _tril_indices(d)
    t = np.zeros((d, d), dtype=complex)
    t[lo] = x[: len(lo[0])]
    t[strict] += 1j * x[len(lo[0]) :]
    return t


def _initial_state(counts_list, pset, cfg: MLEConfig) -> np.ndarray:
    d = pset.dim
    if cfg.init == "linear-inversion":
        try:
            rho = project_to_physical(linear_inversion(counts_list, pset)).matrix
        except (ReconstructionError, QuantumStateError):
            rho = np.eye(d) / d
    else:
        rho = np.eye(d) / d
    # A full-rank start keeps the Cholesky factor well defined.
    return (1 - 1e-6) * rho + 1e-6 * np.eye(d) / d


def mle_reconstruct(
    counts_list: Sequence[ProjectionCounts], pset: ProjectorSet, cfg: Optional[MLEConfig] = None
) -> MLEResult:
    """Maximum-likelihood density matrix under independent Poisson counts.

    The state is parameterized as ``rho = T T^dagger / tr(T T^dagger)`` with
    lower-triangular ``T``; the profiled likelihood is scale invariant so the
    trace never needs enforcing during the search. L-BFGS stops when the
    per-iteration relative change of the deviance (log-likelihood measured
    from the saturated model) drops below ``cfg.rel_loglik_tol`` or after
    ``cfg.max_iterations`` iterations.
    """
    cfg = cfg or MLEConfig()
    kets, w, n = _design(counts_list, pset)
    total = n.sum()
    if total <= 0:
        raise ReconstructionError("all counts are zero; nothing to reconstruct")
    d = pset.dim
    kc = kets.conj()
    pos = n > 0
    # Offset by the saturated-model likelihood so the objective is a deviance
    # (in count units) that vanishes for a perfect fit; the relative stopping
    # rule then acts on the part of the likelihood the state can still change.
    offset = float(np.dot(n[pos], np.log(n[pos] / (total * w[pos]))))

    def objective(x):
        t = _unpack(x, d)
        v = kc @ t  # row i holds <psi_i| T
        a = np.einsum("ij,ij->i", v, v.conj()).real
        s = float(np.dot(w, a))
        ll = np.dot(n[pos], np.log(np.maximum(a[pos], _PROB_FLOOR))) - total * np.log(s)
        coef = np.where(pos, n / np.maximum(a, _PROB_FLOOR), 0.0) - total * w / s
        # dL/dT_jk = 2 (G T)_jk with G = sum_i coef_i |psi_i><psi_i|.
        gt = kets.T @ (coef[:, None] * v)
        return offset - ll, -_pack(2.0 * gt)

    rho0 = _initial_state(counts_list, pset, cfg)
    res = minimize(
        objective,
        _pack(np.linalg.cholesky(rho0)),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": cfg.max_iterations, "ftol": cfg.rel_loglik_tol, "gtol": 1e-14,
                 "maxfun": 20 * cfg.max_iterations},
    )
    x = res.x
    t = _unpack(x, d)
    a = t @ t.conj().T
    rho = DensityMatrix(a / np.trace(a).real)
    ll = log_likelihood(rho, counts_list, pset)
    # Never return something worse than the physical projection of the linear estimate.
    if cfg.init == "linear-inversion":
        try:
            li = project_to_physical(linear_inversion(counts_list, pset))
            ll_li = log_likelihood(li, counts_list, pset)
            if ll_li > ll:
                rho, ll = li, ll_li
        except (ReconstructionError, QuantumStateError):
            pass
    grad_norm = float(np.linalg.norm(res.jac))
    # A failed line search right at the optimum is a precision limit, not divergence.
    converged = bool(res.success) or (
        res.nit < cfg.max_iterations and "ABNORMAL" in str(res.message) and grad_norm < 1e-6 * total
    )
    return MLEResult(rho, ll, int(res.nit), converged, grad_norm, str(res.message))


def bootstrap_errors(
    counts_list: Sequence[ProjectionCounts],
    pset: ProjectorSet,
    cfg: Optional[MLEConfig],
    n_resamples: int,
    seed: int,
    metric_fn: Callable[[DensityMatrix], Dict[str, float]],
    resample: bool = True,
) -> Dict[str, float]:
    """Sample standard deviation of each metric over Poisson-resampled datasets.

    Replicate ``k`` draws from ``default_rng([seed, k])`` so results do not
    depend on execution order. With ``resample=False`` every replicate sees
    the original counts, which yields zero spread.
    """
    if n_resamples < 10:
        raise ValueError("n_resamples must be at least 10")
    values: Dict[str, List[float]] = {}
    for k in range(n_resamples):
        rng = np.random.default_rng([seed, k])
        data = []
        for pc in counts_list:
            if not resample:
                data.append(pc)
                continue
            new = {lab: float(rng.poisson(v)) for lab, v in pc.counts.items()}
            top = max([pc.total_pairs, *new.values()])
            # Keep exposures fixed even when a resampled count exceeds total_pairs.
            eff = {lab: pc.efficiency[lab] * pc.total_pairs / top for lab in new}
            data.append(ProjectionCounts(pc.setting, new, top, eff))
        rho = mle_reconstruct(data, pset, cfg).rho
        for key, v in metric_fn(rho).items():
            values.setdefault(key, []).append(v)
    return {k: float(np.std(v, ddof=1)) for k, v in values.items()}
