import numpy as np
import pytest

from chaosbath import (
    ModelConfig,
    NumericError,
    ValidationError,
    assemble_hamiltonians,
    boltzmann_weights,
    coupling_matrix_elements,
    diagonalize_bath,
    offdiag_suppression,
    sample_parameters,
    thermal_bath,
)
from chaosbath.spectral import CouplingMatrix

from conftest import kron_string


def bath_pair(n_bath, jx, seed, **kw):
    config = ModelConfig(n_bath=n_bath, jx_max=jx, **kw)
    p = sample_parameters(config, seed=seed)
    h = assemble_hamiltonians(p)
    return h, config


class TestDiagonalize:
    def test_single_qubit_analytic(self):
        hb = -0.5 * 1.3 * kron_string(1, [(0, "z")])
        spec = diagonalize_bath(hb, 2)
        assert np.allclose(spec.energies, [-0.65, +0.65])

    def test_matches_char_poly_roots(self):
        h, _ = bath_pair(3, 1.5, seed=9)
        hb = h.h_bath.matrix
        spec = diagonalize_bath(hb, 8)
        roots = np.sort(np.roots(np.poly(hb)).real)
        assert np.max(np.abs(spec.energies - roots)) < 1e-8

    def test_diagonal_input(self):
        d = np.diag([3.0, -1.0, 2.0, 0.0])
        spec = diagonalize_bath(d, 4)
        assert np.allclose(spec.energies, [-1.0, 0.0, 2.0, 3.0])

    def test_lowest_m_subset(self):
        h, _ = bath_pair(4, 2.0, seed=10)
        full = diagonalize_bath(h.h_bath, 16)
        low = diagonalize_bath(h.h_bath, 5)
        assert np.allclose(low.energies, full.energies[:5], atol=1e-12)

    def test_lanczos_path_agrees(self):
        h, _ = bath_pair(5, 2.0, seed=11)
        dense = diagonalize_bath(h.h_bath, 6)
        iterative = diagonalize_bath(h.h_bath, 6, method="lanczos")
        assert np.max(np.abs(dense.energies - iterative.energies)) < 1e-9

    def test_orthonormal_eigenvectors(self):
        h, _ = bath_pair(4, 1.0, seed=12)
        spec = diagonalize_bath(h.h_bath, 16)
        gram = spec.states.conj().T @ spec.states
        assert np.max(np.abs(gram - np.eye(16))) < 1e-10

    def test_residual_bound(self):
        h, _ = bath_pair(5, 2.0, seed=13)
        hb = h.h_bath.matrix
        spec = diagonalize_bath(hb, 32)
        resid = np.linalg.norm(hb @ spec.states - spec.states * spec.energies, axis=0)
        assert resid.max() < 1e-10 * np.linalg.norm(hb)

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValidationError):
            diagonalize_bath(np.array([[0.0, 1.0], [0.0, 0.0]]), 2)

    def test_bad_m(self):
        with pytest.raises(ValidationError):
            diagonalize_bath(np.eye(4), 5)


class TestBoltzmannWeights:
    def test_two_level_closed_form(self):
        e = np.array([0.0, 0.7])
        kt = 0.31
        x = np.exp(-0.7 / kt)
        w = boltzmann_weights(e, kt)
        assert np.allclose(w, [1 / (1 + x), x / (1 + x)], rtol=1e-15)

    def test_degenerate_levels_uniform(self):
        w = boltzmann_weights(np.full(6, 2.5), kt=0.4)
        assert np.allclose(w, 1 / 6)

    def test_zero_temperature_ground_state(self):
        w = boltzmann_weights(np.array([1.0, 2.0, 3.0]), kt=0.0)
        assert np.array_equal(w, [1.0, 0.0, 0.0])

    def test_zero_temperature_degenerate_ground(self):
        w = boltzmann_weights(np.array([1.0, 1.0, 3.0]), kt=0.0)
        assert np.array_equal(w, [0.5, 0.5, 0.0])

    def test_negative_temperature_rejected(self):
        with pytest.raises(ValidationError):
            boltzmann_weights(np.array([0.0, 1.0]), kt=-0.1)

    def test_overflow_safety(self):
        w = boltzmann_weights(np.array([-4e4, 0.0, 4e4]), kt=1e-3)
        assert np.isfinite(w).all() and abs(w.sum() - 1.0) < 1e-14
        assert w[0] == 1.0

    @pytest.mark.parametrize("kt", [1e-3, 0.25, 10.0])
    def test_normalisation(self, kt, rng):
        e = np.sort(rng.normal(size=40))
        w = boltzmann_weights(e, kt, m=25)
        assert len(w) == 25
        assert abs(w.sum() - 1.0) < 1e-14
        assert np.all(w >= 0)

    def test_paper_regime_tail_weight(self):
        # 20 retained states at kT = 0.25 leave a tiny truncation tail
        for jx in (0.5, 1.0, 2.0):
            for seed in (1, 2, 3):
                h, config = bath_pair(10, jx, seed=seed)
                spec = diagonalize_bath(h.h_bath, 20)
                w = boltzmann_weights(spec.energies, config.kt, 20)
                assert w[-1] < 1e-3


class TestCouplingElements:
    def test_polynomial_of_bath_is_diagonal(self):
        h, _ = bath_pair(3, 1.2, seed=14)
        hb = h.h_bath.matrix
        b = 0.3 * hb + 0.011 * (hb @ hb)
        spec = diagonalize_bath(hb, 8)
        cm = coupling_matrix_elements(b, spec)
        off = cm.entries - np.diag(np.diag(cm.entries))
        assert np.max(np.abs(off)) < 1e-10

    def test_single_qubit_analytic(self):
        hb = -0.5 * 1.0 * kron_string(1, [(0, "z")])
        b = kron_string(1, [(0, "x")])
        spec = diagonalize_bath(hb, 2)
        cm = coupling_matrix_elements(b, spec)
        assert np.allclose(cm.diagonal_real(), [0.0, 0.0], atol=1e-12)
        assert abs(abs(cm.entries[0, 1]) - 1.0) < 1e-12

    def test_matches_elementwise_oracle(self, rng):
        h, _ = bath_pair(3, 2.0, seed=15)
        spec = diagonalize_bath(h.h_bath, 8)
        b = h.coupling_bath.matrix
        cm = coupling_matrix_elements(b, spec)
        oracle = np.empty((8, 8), dtype=complex)
        for j in range(8):
            for k in range(8):
                oracle[j, k] = np.vdot(spec.states[:, j], b @ spec.states[:, k])
        assert np.max(np.abs(cm.entries - oracle)) < 1e-12

    def test_hermiticity_enforced(self):
        with pytest.raises(ValidationError):
            CouplingMatrix(entries=np.array([[0.0, 1.0], [0.5, 0.0]]),
                           energies=np.array([0.0, 1.0]))

    def test_dimension_mismatch(self):
        h, _ = bath_pair(3, 1.0, seed=16)
        spec = diagonalize_bath(h.h_bath, 4)
        with pytest.raises(ValidationError):
            coupling_matrix_elements(np.eye(4), spec)


class TestOffdiagSuppression:
    def test_diagonal_coupling_gives_zero(self):
        cm = CouplingMatrix(entries=np.diag([0.3, -0.2, 0.1]),
                            energies=np.array([0.0, 1.0, 2.0]))
        assert offdiag_suppression(cm).ratio == 0.0

    def test_degenerate_diagonal_sentinel(self):
        entries = np.array([[0.0, 0.4], [0.4, 0.0]])
        cm = CouplingMatrix(entries=entries, energies=np.array([0.0, 1.0]))
        report = offdiag_suppression(cm)
        assert report.ratio == np.inf
        assert report.rms_offdiag > 0

    def test_energy_window_filters_pairs(self):
        entries = np.array(
            [[0.1, 0.5, 0.0], [0.5, -0.1, 0.0], [0.0, 0.0, 0.3]], dtype=complex
        )
        cm = CouplingMatrix(entries=entries, energies=np.array([0.0, 10.0, 20.0]))
        wide = offdiag_suppression(cm)
        narrow = offdiag_suppression(cm, window=5.0)
        assert wide.n_pairs == 6
        assert narrow.n_pairs == 0
        assert narrow.rms_offdiag == 0.0

    def test_paper_regime_finite_and_recorded(self):
        for jx in (0.5, 2.0):
            h, config = bath_pair(10, jx, seed=1)
            spec, cm = thermal_bath(h.h_bath, h.coupling_bath, config.kt, 20)
            report = offdiag_suppression(cm)
            assert np.isfinite(report.ratio) and report.ratio >= 0

    def test_single_state_rejected(self):
        cm = CouplingMatrix(entries=np.array([[1.0]]), energies=np.array([0.0]))
        with pytest.raises(ValidationError):
            offdiag_suppression(cm)


class TestThermalBath:
    def test_populates_everything(self):
        h, config = bath_pair(4, 1.0, seed=20)
        spec, cm = thermal_bath(h.h_bath, h.coupling_bath, config.kt, 6)
        assert spec.weights is not None and len(spec.weights) == 6
        assert spec.coupling_diag is not None and len(spec.coupling_diag) == 6
        assert abs(spec.weights.sum() - 1.0) < 1e-14

    def test_tail_warning(self):
        h, _ = bath_pair(4, 1.0, seed=21)
        with pytest.warns(UserWarning, match="truncation tail"):
            thermal_bath(h.h_bath, h.coupling_bath, kt=50.0, m=4)

    def test_csv_export(self, tmp_path):
        h, config = bath_pair(3, 1.0, seed=22)
        spec, _ = thermal_bath(h.h_bath, h.coupling_bath, config.kt, 5)
        from chaosbath.spectral import spectrum_to_csv

        path = tmp_path / "spectrum.csv"
        spectrum_to_csv(spec, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "n,E_n,p_n,B_nn"
        assert len(lines) == 6
