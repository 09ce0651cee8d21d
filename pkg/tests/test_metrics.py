import numpy as np
import pytest
from scipy.stats import unitary_group

from conftest import random_state
from qdhyper.metrics import (
    EntanglementReport,
    concurrence,
    fidelity_to_pure,
    hyper_fidelity,
    purity,
    report,
    subspace_report,
    werner_state,
)
from qdhyper.qlin import DensityMatrix, QuantumStateError, basis_ket, normalize, partial_trace, tensor
from qdhyper.source import PHI_PLUS, PSI_HYPER, TB_PLUS

BELLS = {
    "phi+": normalize([1, 0, 0, 1]),
    "phi-": normalize([1, 0, 0, -1]),
    "psi+": normalize([0, 1, 1, 0]),
    "psi-": normalize([0, 1, -1, 0]),
}


class TestFidelity:
    def test_pure_self(self):
        assert fidelity_to_pure(PSI_HYPER.density(), PSI_HYPER) == pytest.approx(1.0, abs=1e-12)

    def test_maximally_mixed(self):
        assert fidelity_to_pure(DensityMatrix.maximally_mixed(16), PSI_HYPER) == pytest.approx(1 / 16, abs=1e-15)

    def test_werner_07(self):
        # Direct contraction <phi|rho|phi> of p|phi><phi| + (1-p) I/4.
        phi = PHI_PLUS.amplitudes
        m = 0.7 * np.outer(phi, phi.conj()) + 0.3 * np.eye(4) / 4
        assert phi.conj() @ m @ phi == pytest.approx(0.775, abs=1e-12)
        assert fidelity_to_pure(werner_state(0.7), PHI_PLUS) == pytest.approx(0.775, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(QuantumStateError):
            fidelity_to_pure(DensityMatrix.maximally_mixed(16), PHI_PLUS)

    def test_linear_in_state(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = random_state(16, rng), random_state(16, rng)
            alpha = rng.uniform()
            mix = DensityMatrix(alpha * a.matrix + (1 - alpha) * b.matrix)
            lhs = fidelity_to_pure(mix, PSI_HYPER)
            rhs = alpha * fidelity_to_pure(a, PSI_HYPER) + (1 - alpha) * fidelity_to_pure(b, PSI_HYPER)
            assert abs(lhs - rhs) < 1e-12


class TestConcurrence:
    def test_bell(self):
        assert concurrence(PHI_PLUS.density()) == pytest.approx(1.0, abs=1e-9)

    def test_product(self):
        assert concurrence(basis_ket(0, 4).density()) == pytest.approx(0.0, abs=1e-9)

    def test_werner_half(self):
        assert concurrence(werner_state(0.5)) == pytest.approx(0.25, abs=1e-9)

    def test_werner_curve(self):
        for p in np.linspace(0, 1, 20):
            assert abs(concurrence(werner_state(p)) - max(0.0, (3 * p - 1) / 2)) < 1e-9

    @pytest.mark.parametrize("name", list(BELLS))
    def test_all_bell_states_maximal(self, name):
        assert concurrence(BELLS[name].density()) == pytest.approx(1.0, abs=1e-9)

    def test_non_maximal_pure_states_below_one(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            psi = normalize(rng.normal(size=4) + 1j * rng.normal(size=4))
            c = concurrence(psi.density())
            a = psi.amplitudes
            # Pure-state oracle: C = 2|ad - bc|.
            assert abs(c - 2 * abs(a[0] * a[3] - a[1] * a[2])) < 1e-9
            assert 0 <= c < 1

    def test_local_unitary_invariance(self):
        rng = np.random.default_rng(2)
        rho = random_state(4, rng, rank=2)
        c0 = concurrence(rho)
        for k in range(50):
            u = np.kron(unitary_group.rvs(2, random_state=rng), unitary_group.rvs(2, random_state=rng))
            assert abs(concurrence(DensityMatrix(u @ rho.matrix @ u.conj().T)) - c0) < 1e-9

    def test_two_qubit_only(self):
        with pytest.raises(QuantumStateError):
            concurrence(DensityMatrix.maximally_mixed(16))


class TestReports:
    def test_ideal_subspaces(self):
        for which in ("polarization", "timebin"):
            r = subspace_report(PSI_HYPER.density(), which, PHI_PLUS)
            assert r.fidelity == pytest.approx(1.0, abs=1e-12)
            assert r.concurrence == pytest.approx(1.0, abs=1e-9)

    def test_mixed_polarization_bell_timebin(self):
        rho = tensor(DensityMatrix.maximally_mixed(4), TB_PLUS.density())
        assert subspace_report(rho, "polarization", PHI_PLUS).concurrence == pytest.approx(0.0, abs=1e-9)
        assert subspace_report(rho, "timebin", TB_PLUS).concurrence == pytest.approx(1.0, abs=1e-9)

    def test_unknown_subsystem(self):
        with pytest.raises(ValueError):
            subspace_report(PSI_HYPER.density(), "spin", PHI_PLUS)

    def test_hyper_fidelity_factorizes(self):
        rng = np.random.default_rng(3)
        a, b = random_state(4, rng), random_state(4, rng)
        f = hyper_fidelity(tensor(a, b), PHI_PLUS, TB_PLUS)
        assert abs(f - fidelity_to_pure(a, PHI_PLUS) * fidelity_to_pure(b, TB_PLUS)) < 1e-9

    def test_purity_of_product_marginal(self):
        rng = np.random.default_rng(4)
        a = normalize(rng.normal(size=4) + 1j * rng.normal(size=4))
        b = normalize(rng.normal(size=4) + 1j * rng.normal(size=4))
        red = partial_trace(tensor(a, b), 0, [4, 4])
        assert abs(purity(red) - purity(a.density())) < 1e-12

    def test_report_range_validation(self):
        with pytest.raises(ValueError):
            EntanglementReport(1.2, 0.5, 0.5, "x")
        with pytest.raises(ValueError):
            EntanglementReport(0.5, 0.5, 0.1, "x")

    def test_report_dict(self):
        r = report(werner_state(0.5), PHI_PLUS, "werner")
        assert r.as_dict() == pytest.approx({"fidelity": 0.625, "concurrence": 0.25, "purity": 0.625**2 + 3 * 0.125**2})
