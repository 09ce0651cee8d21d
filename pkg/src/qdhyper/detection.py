"""Measurement model: waveplate analyzers, unbalanced analysis interferometers
and synthetic arrival-time coincidence histograms.

Conventions
-----------
* Circular polarization ``R = (H - iV)/sqrt2``, ``L = (H + iV)/sqrt2``.
* Each analysis interferometer has a short arm and a long arm (one bin delay);
  the long arm carries the phase ``exp(+i phi)``. Only one output port is
  detected, so every photon reaches the detector with path amplitude 1/2 per
  arm. A photon emitted early (late) and taking the short (long) arm lands in
  arrival region 0 (2); the two mixed combinations land in region 1.
* The middle-region projector of one photon is therefore
  ``(|E> + exp(+i phi)|L>)/sqrt2`` and the two-photon middle peak oscillates
  with ``2*phi_p - phi_xx - phi_x``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .qlin import DensityMatrix, Ket, QuantumStateError, normalize
from .source import SourceParams

__all__ = [
    "MeasurementSetting",
    "CoincidenceHistogram",
    "ProjectionCounts",
    "POL_SETTINGS",
    "REGION_EFFICIENCY",
    "waveplate",
    "polarization_projector",
    "timebin_projector",
    "canonical_phase",
    "ket_from_label",
    "region_labels",
    "region_windows",
    "window_guard",
    "outcome_probabilities",
    "discarded_probability",
    "branch_enumeration",
    "synthesize_histogram",
    "extract_projection_counts",
    "exact_projection_counts",
    "antidiagonal_profile",
    "peak_sums",
    "write_histogram",
    "read_histogram",
    "write_counts",
    "read_counts",
]

TWO_PI = 2 * np.pi
REGIONS = ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2))
REGION_NAMES = {"early": 0, "middle": 1, "late": 2}

# Analyzer settings (qwp, hwp) in degrees for the named polarization states.
POL_SETTINGS: Dict[str, Tuple[float, float]] = {
    "H": (0.0, 0.0),
    "V": (0.0, 45.0),
    "D": (0.0, 22.5),
    "A": (0.0, -22.5),
    "R": (45.0, 0.0),
    "L": (-45.0, 0.0),
}
_POL_VECTORS = {
    "H": [1, 0],
    "V": [0, 1],
    "D": [1, 1],
    "A": [1, -1],
    "R": [1, -1j],
    "L": [1, 1j],
}
# Fraction of a photon pair reaching each region, per photon: 1/4, 1/2, 1/4.
_SINGLE_EFF = (0.25, 0.5, 0.25)
REGION_EFFICIENCY = {rs: _SINGLE_EFF[rs[0]] * _SINGLE_EFF[rs[1]] for rs in REGIONS}


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementSetting:
    """One physical configuration of both analyzers.

    ``phi_p`` records the pump phase the measured state was prepared with; the
    state itself carries that phase, so it is not re-applied here.
    """

    qwp_xx: float = 0.0
    hwp_xx: float = 0.0
    qwp_x: float = 0.0
    hwp_x: float = 0.0
    phi_xx: float = 0.0
    phi_x: float = 0.0
    phi_p: float = 0.0
    timebin_enabled: bool = True

    def __post_init__(self):
        for name in ("qwp_xx", "hwp_xx", "qwp_x", "hwp_x", "phi_xx", "phi_x", "phi_p"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DetectionError(f"{name} must be finite")
            if name.startswith("phi"):
                v = v % TWO_PI
                if TWO_PI - v < 1e-12:
                    v = 0.0
            object.__setattr__(self, name, v)

    @classmethod
    def from_labels(cls, pol: str, phi_xx=0.0, phi_x=0.0, phi_p=0.0, timebin_enabled=True):
        """Setting for a two-letter polarization label such as ``"HV"``."""
        (qa, ha), (qb, hb) = POL_SETTINGS[pol[0]], POL_SETTINGS[pol[1]]
        return cls(qa, ha, qb, hb, phi_xx, phi_x, phi_p, timebin_enabled)


def waveplate(angle_deg: float, retardance: float) -> np.ndarray:
    """Jones matrix of a retarder with fast axis at ``angle_deg``."""
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    rot = np.array([[c, s], [-s, c]], dtype=complex)
    return rot.T @ np.diag([1.0, np.exp(1j * retardance)]) @ rot


def canonical_phase(v) -> np.ndarray:
    """Rotate the global phase so the first nonzero amplitude is real positive."""
    v = np.asarray(v, dtype=complex)
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size == 0:
        return v
    a = v[nz[0]]
    return v * (abs(a) / a)


def polarization_projector(qwp: float, hwp: float) -> Ket:
    """State transmitted by half-wave plate, quarter-wave plate, then H polarizer."""
    analyzer = np.array([[1, 0], [0, 0]]) @ waveplate(qwp, np.pi / 2) @ waveplate(hwp, np.pi)
    # The transmitted amplitude is <H|A|in>, so the projected state is A^dagger|H>.
    return Ket(canonical_phase(analyzer.conj().T[:, 0]))


def _middle_vector(phi: float) -> np.ndarray:
    return np.array([1.0, np.exp(1j * phi)]) / np.sqrt(2)


def _single_tb_vector(region: int, phi: float) -> np.ndarray:
    if region == 0:
        return np.array([1.0, 0.0], dtype=complex)
    if region == 2:
        return np.array([0.0, 1.0], dtype=complex)
    return _middle_vector(phi)


def _region_index(r) -> int:
    if isinstance(r, str):
        try:
            return REGION_NAMES[r]
        except KeyError:
            raise DetectionError(f"unknown arrival region {r!r}") from None
    r = int(r)
    if r not in (0, 1, 2):
        raise DetectionError(f"arrival region index {r} not in 0..2")
    return r


def timebin_projector(region_xx, region_x, phi_xx: float = 0.0, phi_x: float = 0.0) -> Ket:
    """Two-photon time-bin ket selected by a pair of arrival regions."""
    a = _single_tb_vector(_region_index(region_xx), phi_xx)
    b = _single_tb_vector(_region_index(region_x), phi_x)
    return Ket(np.kron(a, b))


# ---------------------------------------------------------------------------
# labels

def _pol_token(qwp: float, hwp: float) -> str:
    v = polarization_projector(qwp, hwp).amplitudes
    for name, ref in _POL_VECTORS.items():
        if np.allclose(v, canonical_phase(normalize(ref).amplitudes), atol=1e-9):
            return name
    return f"<{qwp:.10g},{hwp:.10g}>"


def _tb_token(region: int, phi: float) -> str:
    if region == 0:
        return "e"
    if region == 2:
        return "l"
    for tok, ref in (("+", 0.0), ("i", np.pi / 2), ("-", np.pi), ("j", 1.5 * np.pi)):
        if abs(np.angle(np.exp(1j * (phi - ref)))) < 1e-9:
            return tok
    return "{%.10g}" % np.rad2deg(phi)


_TB_FIXED = {"e": [1, 0], "l": [0, 1], "+": [1, 1], "i": [1, 1j], "-": [1, -1], "j": [1, -1j]}


def _tokens(s: str) -> List[str]:
    out, i = [], 0
    while i < len(s):
        c = s[i]
        if c in "<{":
            close = ">" if c == "<" else "}"
            k = s.find(close, i)
            if k < 0:
                raise DetectionError(f"unterminated token in label {s!r}")
            out.append(s[i : k + 1])
            i = k + 1
        else:
            out.append(c)
            i += 1
    return out


def _token_vector(tok: str) -> np.ndarray:
    if tok in _POL_VECTORS:
        return normalize(_POL_VECTORS[tok]).amplitudes
    if tok in _TB_FIXED:
        return normalize(_TB_FIXED[tok]).amplitudes
    if tok.startswith("<"):
        q, h = (float(x) for x in tok[1:-1].split(","))
        return polarization_projector(q, h).amplitudes
    if tok.startswith("{"):
        return _middle_vector(np.deg2rad(float(tok[1:-1])))
    raise DetectionError(f"unknown projector token {tok!r}")


def ket_from_label(label: str) -> Ket:
    """Parse a projector label (``"HV"``, ``"e+"`` or ``"HV|e+"``) into its ket."""
    parts = label.split("|")
    vec = np.array([1.0 + 0j])
    for part in parts:
        toks = _tokens(part)
        if len(toks) != 2:
            raise DetectionError(f"label part {part!r} must name two photons")
        for t in toks:
            vec = np.kron(vec, _token_vector(t))
    if vec.size not in (4, 16):
        raise DetectionError(f"label {label!r} has dimension {vec.size}")
    return Ket(canonical_phase(vec))


def pol_label(setting: MeasurementSetting) -> str:
    return _pol_token(setting.qwp_xx, setting.hwp_xx) + _pol_token(setting.qwp_x, setting.hwp_x)


def region_labels(setting: MeasurementSetting) -> Dict[Tuple[int, int], str]:
    """Time-bin label (without polarization prefix) of each of the 9 regions."""
    return {
        (r, s): _tb_token(r, setting.phi_xx) + _tb_token(s, setting.phi_x) for (r, s) in REGIONS
    }


# ---------------------------------------------------------------------------
# Born-rule probabilities

def _analysis_rows(phi: float, port: int = 1) -> np.ndarray:
    """Rows map (E, L) amplitudes to the amplitude in regions 0, 1, 2 for one output port."""
    s = 0.5
    lng = 0.5 * port * np.exp(1j * phi)
    return np.array([[s, 0], [lng, s], [0, lng]], dtype=complex)


def _pol_bras(setting: MeasurementSetting, transmitted: bool = True):
    a = polarization_projector(setting.qwp_xx, setting.hwp_xx).amplitudes
    b = polarization_projector(setting.qwp_x, setting.hwp_x).amplitudes
    if not transmitted:
        return a, b
    return a.conj(), b.conj()


def _check16(rho) -> np.ndarray:
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if m.shape != (16, 16):
        raise DetectionError("outcome probabilities need a 16-dimensional state")
    return m


def _expect_row(m: np.ndarray, row: np.ndarray) -> float:
    return float(np.real(row @ m @ row.conj()))


def outcome_probabilities(rho16, setting: MeasurementSetting) -> Dict[Tuple[int, int], float]:
    """Probability per (XX region, X region) for the detected ports.

    Without time-bin analysis every photon arrives in region 0.
    """
    m = _check16(rho16)
    a, b = _pol_bras(setting)
    pol_row = np.kron(a, b)
    out = {rs: 0.0 for rs in REGIONS}
    if not setting.timebin_enabled:
        eff = np.kron(np.outer(pol_row.conj(), pol_row), np.eye(4))
        out[(0, 0)] = float(np.real(np.trace(eff @ m)))
        return out
    kxx = _analysis_rows(setting.phi_xx)
    kx = _analysis_rows(setting.phi_x)
    for r, s in REGIONS:
        row = np.kron(pol_row, np.kron(kxx[r], kx[s]))
        out[(r, s)] = _expect_row(m, row)
    return out


def discarded_probability(rho16, setting: MeasurementSetting) -> float:
    """Probability of every outcome not post-selected: blocked polarization or the undetected port.

    Computed from the complementary outcomes directly, so that
    ``sum(outcome_probabilities) + discarded_probability == 1`` is a genuine check.
    """
    m = _check16(rho16)
    a, b = _pol_bras(setting, transmitted=False)
    perp = lambda v: np.array([-np.conj(v[1]), np.conj(v[0])])  # noqa: E731
    pol_outcomes = [(a.conj(), b.conj()), (a.conj(), perp(b).conj()),
                    (perp(a).conj(), b.conj()), (perp(a).conj(), perp(b).conj())]
    total = 0.0
    for i, (pa, pb) in enumerate(pol_outcomes):
        pol_row = np.kron(pa, pb)
        if not setting.timebin_enabled:
            if i == 0:
                continue
            eff = np.kron(np.outer(pol_row.conj(), pol_row), np.eye(4))
            total += float(np.real(np.trace(eff @ m)))
            continue
        for port_xx in (1, -1):
            for port_x in (1, -1):
                if i == 0 and port_xx == 1 and port_x == 1:
                    continue
                kxx = _analysis_rows(setting.phi_xx, port_xx)
                kx = _analysis_rows(setting.phi_x, port_x)
                for r, s in REGIONS:
                    total += _expect_row(m, np.kron(pol_row, np.kron(kxx[r], kx[s])))
    return total


def branch_enumeration(tb_amplitudes: Sequence[complex], phi_xx: float, phi_x: float) -> Dict[Tuple[int, int], float]:
    """Region probabilities of a pure time-bin pair state by explicit path bookkeeping.

    ``tb_amplitudes`` are the (EE, EL, LE, LL) amplitudes. Every emission
    branch is followed through both arms of both interferometers; amplitudes
    landing in the same region add before squaring. Independent of the
    matrix route in :func:`outcome_probabilities`.
    """
    amp = {rs: 0j for rs in REGIONS}
    bins = {0: (0, 0), 1: (0, 1), 2: (1, 0), 3: (1, 1)}
    for idx, c in enumerate(tb_amplitudes):
        if c == 0:
            continue
        exx, ex = bins[idx]
        for long_xx in (0, 1):
            for long_x in (0, 1):
                a = c * 0.5 * 0.5
                if long_xx:
                    a *= np.exp(1j * phi_xx)
                if long_x:
                    a *= np.exp(1j * phi_x)
                amp[(exx + long_xx, ex + long_x)] += a
    return {rs: float(abs(v) ** 2) for rs, v in amp.items()}


# ---------------------------------------------------------------------------
# histograms

@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """2-d grid of coincidence counts over (XX arrival bin, X arrival bin).

    Arrival times are relative to the laser clock; bin ``i`` of the XX axis
    starts at ``origin_xx + i * bin_width`` ps.
    """

    counts: np.ndarray
    bin_width: float
    origin_xx: float
    origin_x: float
    delay: float
    seed: Optional[int] = None
    n_pairs: int = 0
    windows: Dict[Tuple[int, int], Tuple[Tuple[int, int], Tuple[int, int]]] = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or (c.size and (c.min() < 0 or not np.issubdtype(c.dtype, np.integer))):
            raise DetectionError("histogram counts must be a 2-d grid of nonnegative integers")
        if not self.windows:
            object.__setattr__(self, "windows", region_windows(self.delay, self.bin_width))
        _check_disjoint(self.windows)

    def region_counts(self) -> Dict[Tuple[int, int], int]:
        _check_disjoint(self.windows)
        return {
            rs: int(self.counts[i0:i1, j0:j1].sum()) for rs, ((i0, i1), (j0, j1)) in self.windows.items()
        }


def window_guard(params: SourceParams, bin_width: float) -> float:
    """Lead time (ps) of each region window ahead of the nominal arrival."""
    return 3.0 * params.jitter_sigma + bin_width


def region_windows(delay_ns: float, bin_width: float):
    """Windows of width ``delay`` tiling three arrival regions on each axis."""
    d = delay_ns * 1000.0 / bin_width
    edges = [int(round(k * d)) for k in range(4)]
    return {(r, s): ((edges[r], edges[r + 1]), (edges[s], edges[s + 1])) for r, s in REGIONS}


def _check_disjoint(windows) -> None:
    items = list(windows.items())
    for n, (_, ((a0, a1), (b0, b1))) in enumerate(items):
        for _, ((c0, c1), (d0, d1)) in items[n + 1 :]:
            if a0 < c1 and c0 < a1 and b0 < d1 and d0 < b1:
                raise DetectionError("region windows overlap")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synthesize_histogram(
    rho16,
    setting: MeasurementSetting,
    n_pairs: int,
    seed,
    params: Optional[SourceParams] = None,
    bin_width: float = 20.0,
) -> CoincidenceHistogram:
    """Poisson-sample region counts and smear their arrival times.

    Each detected pair gets an XX arrival ``r*delay + Exp(tau_xx)`` and an X
    arrival ``s*delay + t_xx + Exp(tau_x)``, both with Gaussian jitter. Both
    axes start at ``-window_guard`` and each region window spans one delay. A
    uniform accidental floor holding a fraction ``params.background`` of the
    true coincidences is added per bin. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    if n_pairs <= 0:
        raise DetectionError("n_pairs must be positive")
    params = params or SourceParams()
    rng = _rng(seed)
    probs = outcome_probabilities(rho16, setting)
    d_ps = params.delay * 1000.0
    nb = int(round(3 * d_ps / bin_width))
    # Windows open one jitter guard before the nominal arrival so decay tails
    # stay inside their own region instead of spilling into the next one.
    origin_xx = origin_x = -window_guard(params, bin_width)
    grid = np.zeros((nb, nb), dtype=np.int64)
    expected_total = 0.0
    for (r, s), p in probs.items():
        mean = n_pairs * max(p, 0.0)
        expected_total += mean
        k = rng.poisson(mean) if mean > 0 else 0
        if k == 0:
            continue
        t_xx = rng.exponential(params.tau_xx, k)
        t_x = t_xx + rng.exponential(params.tau_x, k)
        if params.jitter_sigma > 0:
            t_xx = t_xx + rng.normal(0.0, params.jitter_sigma, k)
            t_x = t_x + rng.normal(0.0, params.jitter_sigma, k)
        i = np.floor((r * d_ps + t_xx - origin_xx) / bin_width).astype(np.int64)
        j = np.floor((s * d_ps + t_x - origin_x) / bin_width).astype(np.int64)
        ok = (i >= 0) & (i < nb) & (j >= 0) & (j < nb)
        np.add.at(grid, (i[ok], j[ok]), 1)
    if params.background > 0 and expected_total > 0:
        grid += rng.poisson(params.background * expected_total / grid.size, grid.shape)
    return CoincidenceHistogram(
        grid,
        bin_width,
        origin_xx,
        origin_x,
        params.delay,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        n_pairs=int(n_pairs),
    )


def antidiagonal_profile(h: CoincidenceHistogram) -> np.ndarray:
    """Counts summed along lines of constant ``i + j`` (a 1-d five-peak view)."""
    nb = h.counts.shape[0]
    idx = np.add.outer(np.arange(nb), np.arange(h.counts.shape[1]))
    return np.bincount(idx.ravel(), weights=h.counts.ravel(), minlength=2 * nb - 1).astype(np.int64)


def peak_sums(region_values: Dict[Tuple[int, int], float]) -> List[float]:
    """Sum region values into the five anti-diagonal peaks ``r + s = 0..4``."""
    out = [0.0] * 5
    for (r, s), v in region_values.items():
        out[r + s] += v
    return out


# ---------------------------------------------------------------------------
# projection counts

@dataclass
class ProjectionCounts:
    """Labelled counts from one measurement setting.

    ``efficiency[label]`` is the fraction of pairs the interferometers route
    to that region; expected counts are ``total_pairs * efficiency * <P>``.
    Counts may be floats when exact expectation values are used.
    """

    setting: MeasurementSetting
    counts: Dict[str, float]
    total_pairs: float
    efficiency: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for lab, n in self.counts.items():
            if n < 0 or n > self.total_pairs * (1 + 1e-12):
                raise DetectionError(f"count {n} for {lab} outside [0, total_pairs]")
            self.efficiency.setdefault(lab, 1.0)


def _labelled(setting: MeasurementSetting, region_values, sum_regions: bool):
    pol = pol_label(setting)
    if not setting.timebin_enabled:
        return {pol: sum(region_values.values())}, {pol: 1.0}
    if sum_regions:
        # Summing all arrival regions only approximately marginalizes the
        # time-bin degree of freedom: the middle peak still carries interference.
        return {pol: sum(region_values.values())}, {pol: 0.25}
    labs = region_labels(setting)
    counts = {f"{pol}|{labs[rs]}": v for rs, v in region_values.items()}
    eff = {f"{pol}|{labs[rs]}": REGION_EFFICIENCY[rs] for rs in region_values}
    return counts, eff


def extract_projection_counts(
    h: CoincidenceHistogram, setting: MeasurementSetting, sum_regions: bool = False
) -> ProjectionCounts:
    """Integrate each region window and label it with its projector."""
    counts, eff = _labelled(setting, h.region_counts(), sum_regions)
    return ProjectionCounts(setting, counts, h.n_pairs, eff)


def exact_projection_counts(
    rho16, setting: MeasurementSetting, n_pairs: float, sum_regions: bool = False
) -> ProjectionCounts:
    """Expected (noise-free) counts ``n_pairs * p`` for every region of ``setting``."""
    probs = outcome_probabilities(rho16, setting)
    counts, eff = _labelled(setting, {rs: n_pairs * p for rs, p in probs.items()}, sum_regions)
    return ProjectionCounts(setting, counts, n_pairs, eff)


# ---------------------------------------------------------------------------
# text formats

def write_histogram(path, h: CoincidenceHistogram) -> None:
    """Comment header plus one ``tau_xx_bin,tau_x_bin,count`` row per nonzero bin."""
    path = Path(path)
    ii, jj = np.nonzero(h.counts)
    with path.open("w", newline="") as fh:
        fh.write(f"# bin_width_ps={h.bin_width!r}\n")
        fh.write(f"# delay_ns={h.delay!r}\n")
        fh.write(f"# seed={h.seed}\n")
        fh.write(f"# origin_xx_ps={h.origin_xx!r}\n")
        fh.write(f"# origin_x_ps={h.origin_x!r}\n")
        fh.write(f"# n_bins={h.counts.shape[0]}\n")
        fh.write(f"# n_pairs={h.n_pairs}\n")
        w = csv.writer(fh)
        w.writerow(["tau_xx_bin", "tau_x_bin", "count"])
        for i, j in zip(ii, jj):
            w.writerow([int(i), int(j), int(h.counts[i, j])])


def read_histogram(path) -> CoincidenceHistogram:
    meta, rows = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.strip() and not line.startswith("tau_xx_bin"):
                rows.append([int(x) for x in line.split(",")])
    try:
        nb = int(meta["n_bins"])
        seed = None if meta.get("seed", "None") == "None" else int(meta["seed"])
        grid = np.zeros((nb, nb), dtype=np.int64)
        for i, j, c in rows:
            grid[i, j] = c
        return CoincidenceHistogram(
            grid,
            float(meta["bin_width_ps"]),
            float(meta["origin_xx_ps"]),
            float(meta["origin_x_ps"]),
            float(meta["delay_ns"]),
            seed=seed,
            n_pairs=int(meta.get("n_pairs", 0)),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise DetectionError(f"malformed histogram file {path}: {exc}") from None


_COUNT_FIELDS = ["setting", "label", "count", "efficiency", "total_pairs",
                 "qwp_xx", "hwp_xx", "qwp_x", "hwp_x", "phi_xx", "phi_x", "phi_p", "timebin_enabled"]


def write_counts(path, counts_list: Iterable[ProjectionCounts]) -> None:
    """Tab-separated table, one row per (setting, projection label)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(_COUNT_FIELDS)
        for k, pc in enumerate(counts_list):
            s = pc.setting
            for lab, n in pc.counts.items():
                w.writerow([k, lab, repr(float(n)) if not float(n).is_integer() else int(n),
                            repr(pc.efficiency[lab]), pc.total_pairs, s.qwp_xx, s.hwp_xx, s.qwp_x,
                            s.hwp_x, repr(s.phi_xx), repr(s.phi_x), repr(s.phi_p), int(s.timebin_enabled)])


def read_counts(path) -> List[ProjectionCounts]:
    groups: Dict[int, dict] = {}
    with Path(path).open() as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            try:
                k = int(row["setting"])
                g = groups.get(k)
                if g is None:
                    setting = MeasurementSetting(
                        *(float(row[f]) for f in _COUNT_FIELDS[5:12]), bool(int(row["timebin_enabled"]))
                    )
                    g = groups[k] = {"setting": setting, "counts": {}, "eff": {},
                                     "total": float(row["total_pairs"])}
                g["counts"][row["label"]] = float(row["count"])
                g["eff"][row["label"]] = float(row["efficiency"])
            except (KeyError, ValueError, TypeError) as exc:
                raise DetectionError(f"malformed counts file {path}: {exc}") from None
    return [
        ProjectionCounts(g["setting"], g["counts"], g["total"], g["eff"]) for _, g in sorted(groups.items())
    ]
