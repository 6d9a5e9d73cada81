"""GKP logical qubits: synthesis, Paulis, modular correction, error curves."""

import math

import numpy as np
import pytest

from cvqsim import fock, gkp
from cvqsim.gkp import GkpParams, ROOT_PI

P02 = GkpParams(0.2, 100)
P25 = GkpParams(0.25, 100)
P03 = GkpParams(0.3, 100)


def envelope_xx_fidelity(params):
    _, w = gkp.lattice_sites(0, params)
    w = np.asarray(w)
    return float((np.sum(w[:-1] * w[1:]) / np.sum(w * w)) ** 2)


def envelope_x_swap_fidelity(params):
    m0, w0 = gkp.lattice_sites(0, params)
    m1, w1 = gkp.lattice_sites(1, params)
    amp = 0.0
    for mu, w in zip(np.asarray(m0) + ROOT_PI, w0):
        hits = np.isclose(np.asarray(m1), mu, atol=1e-9)
        if hits.any():
            amp += w * np.asarray(w1)[hits][0]
    amp /= math.sqrt(float(np.sum(np.square(w0)) * np.sum(np.square(w1))))
    return float(amp ** 2)


class TestSynthesis:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            GkpParams(0.0, 100)
        with pytest.raises(ValueError):
            GkpParams(0.2, 4)
        with pytest.raises(ValueError):
            gkp.gkp_state(2, P25)

    def test_states_are_normalized(self):
        for j in (0, 1):
            assert abs(gkp.gkp_state(j, P25).norm() - 1.0) < 1e-12

    def test_density_peaks_sit_on_the_right_sublattice(self):
        even = np.array([0.0, 2 * ROOT_PI, -2 * ROOT_PI])
        odd = np.array([ROOT_PI, -ROOT_PI, 3 * ROOT_PI])
        d0_even = gkp.x_density(gkp.gkp_state(0, P25), even)
        d0_odd = gkp.x_density(gkp.gkp_state(0, P25), odd)
        d1_even = gkp.x_density(gkp.gkp_state(1, P25), even)
        d1_odd = gkp.x_density(gkp.gkp_state(1, P25), odd)
        assert d0_even.min() > 100 * d0_odd.max()
        assert d1_odd.min() > 100 * d1_even.max()

    def test_logicals_become_orthogonal_as_delta_shrinks(self):
        overlaps = []
        for delta in (0.35, 0.3, 0.25):
            p = GkpParams(delta, 100)
            overlaps.append(abs(fock.overlap(gkp.gkp_state(0, p),
                                             gkp.gkp_state(1, p))))
        assert overlaps[0] > overlaps[1] > overlaps[2]
        z0 = gkp.gkp_state(0, P02)
        z1 = gkp.gkp_state(1, P02)
        assert abs(fock.overlap(z0, z1)) <= 1e-3

    @pytest.mark.parametrize("delta", [0.2, 0.25, 0.3])
    @pytest.mark.parametrize("cutoff", [100, 120])
    def test_synthesis_leakage_budget(self, delta, cutoff):
        params = GkpParams(delta, cutoff)
        for j in (0, 1):
            assert gkp.synthesis_leakage(j, params) < 1e-4

    def test_mass_concentrates_near_the_lattice(self):
        assert gkp.lattice_mass(gkp.gkp_state(0, P25)) > 0.98
        assert gkp.lattice_mass(gkp.gkp_state(1, P25)) > 0.98
        assert gkp.lattice_mass(gkp.gkp_state(0, P02)) > 0.99

    def test_cutoff_too_small_raises(self):
        with pytest.raises(ValueError, match="too small"):
            gkp.gkp_state(0, GkpParams(0.2, 40))

    def test_large_delta_approaches_squeezed_vacuum(self):
        p = GkpParams(1.2, 60)
        state = gkp.gkp_state(0, p)
        ref = fock.squeezed_vacuum_fock(-math.log(1.2), 60)
        assert fock.fidelity_fock(state, ref) > 0.99
        # fidelity to plain vacuum: sech(ln delta) = 2 delta / (1 + delta^2)
        fids = []
        for delta in (1.0, 1.5, 2.0):
            state = gkp.gkp_state(0, GkpParams(delta, 60))
            fid = fock.fidelity_fock(state, fock.vacuum_fock(1, 60))
            assert abs(fid - 2 * delta / (1 + delta ** 2)) < 2e-3
            fids.append(fid)
        assert fids[0] > fids[1] > fids[2]


class TestPaulis:
    def test_x_swaps_the_logicals(self):
        x0 = gkp.logical_pauli(gkp.gkp_state(0, P25), "X")
        fid = fock.fidelity_fock(x0, gkp.gkp_state(1, P25))
        assert abs(fid - envelope_x_swap_fidelity(P25)) < 1e-3
        assert fid > 0.85

    @pytest.mark.parametrize("delta", [0.25, 0.3, 0.35])
    def test_double_x_matches_envelope_oracle(self, delta):
        params = GkpParams(delta, 100)
        state = gkp.gkp_state(0, params)
        back = gkp.logical_pauli(gkp.logical_pauli(state, "X"), "X")
        fid = fock.fidelity_fock(back, state)
        assert abs(fid - envelope_xx_fidelity(params)) < 1e-3

    def test_double_x_error_shrinks_with_delta(self):
        fids = []
        for delta in (0.35, 0.3, 0.25):
            params = GkpParams(delta, 100)
            state = gkp.gkp_state(0, params)
            back = gkp.logical_pauli(gkp.logical_pauli(state, "X"), "X")
            fids.append(fock.fidelity_fock(back, state))
        assert fids[0] < fids[1] < fids[2]

    def test_z_preserves_x_density_exactly(self):
        state = gkp.gkp_state(0, P25)
        shifted = gkp.logical_pauli(state, "Z")
        _, vecs = np.linalg.eigh(fock.position_op(state.cutoff))
        before = np.abs(vecs.conj().T @ state.amps) ** 2
        after = np.abs(vecs.conj().T @ shifted.amps) ** 2
        assert np.abs(before - after).max() < 1e-12

    def test_z_phases_the_two_logicals_oppositely(self):
        z0 = gkp.gkp_state(0, P25)
        z1 = gkp.gkp_state(1, P25)
        ev0 = fock.overlap(z0, gkp.logical_pauli(z0, "Z"))
        ev1 = fock.overlap(z1, gkp.logical_pauli(z1, "Z"))
        assert ev0.real > 0.85 and abs(ev0.imag) < 1e-9
        assert ev1.real < -0.85 and abs(ev1.imag) < 1e-9

    def test_pauli_validation(self):
        with pytest.raises(ValueError):
            gkp.logical_pauli(gkp.gkp_state(0, P25), "Y")


class TestCorrection:
    def test_fixed_points(self):
        out = gkp.correct_shift(0.0)
        assert out.correction == 0.0 and not out.logical_flip

        out = gkp.correct_shift(ROOT_PI)
        assert abs(out.correction + ROOT_PI) < 1e-12
        assert abs(out.residual) < 1e-12 and out.logical_flip

        out = gkp.correct_shift(-ROOT_PI)
        assert out.logical_flip and abs(out.residual) < 1e-12

    def test_half_spacing_tie_rounds_to_even(self):
        out = gkp.correct_shift(ROOT_PI / 2)
        assert out.correction == 0.0
        assert abs(out.residual - ROOT_PI / 2) < 1e-12
        assert not out.logical_flip
        out = gkp.correct_shift(1.5 * ROOT_PI)
        assert abs(out.correction + 2 * ROOT_PI) < 1e-12
        assert not out.logical_flip

    def test_idempotent_on_residuals(self):
        rng = np.random.default_rng(3)
        for m in rng.uniform(-12, 12, size=200):
            first = gkp.correct_shift(float(m))
            assert abs(first.residual) <= ROOT_PI / 2 + 1e-12
            again = gkp.correct_shift(first.residual)
            assert again.correction == 0.0
            assert not again.logical_flip

    def test_error_prob_limits_and_monotonicity(self):
        assert gkp.logical_error_prob(0.0) == 0.0
        assert abs(gkp.logical_error_prob(5.0) - 0.5) < 1e-3
        grid = [gkp.logical_error_prob(s) for s in np.linspace(0.05, 3.0, 30)]
        assert all(b >= a - 1e-15 for a, b in zip(grid, grid[1:]))
        with pytest.raises(ValueError):
            gkp.logical_error_prob(-0.1)

    @pytest.mark.parametrize("sigma", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    def test_closed_form_matches_monte_carlo(self, sigma):
        closed = gkp.logical_error_prob(sigma)
        mc, _ = gkp.monte_carlo_error_prob(sigma, 10 ** 6, [17, int(sigma * 10)])
        se = math.sqrt(closed * (1 - closed) / 10 ** 6)
        assert abs(closed - mc) <= 3 * se + 1e-12


class TestReporting:
    def test_squeezing_db(self):
        assert abs(gkp.squeezing_db_of(0.2) + 20 * math.log10(0.2)) < 1e-12
        assert gkp.squeezing_db_of(0.1) > gkp.squeezing_db_of(0.2)

    def test_threshold_margin(self):
        delta_15 = gkp.delta_of_squeezing_db(15.0)
        assert abs(gkp.threshold_margin(delta_15) + 5.5) < 1e-9
        delta_at = gkp.delta_of_squeezing_db(20.5)
        assert abs(gkp.threshold_margin(delta_at)) < 1e-12

    def test_error_curve_csv(self):
        text = gkp.error_curve_csv([0.2, 0.4], samples=20000, rng_seed=5)
        lines = text.strip().splitlines()
        assert lines[0] == "sigma,p_closed_form,p_monte_carlo,stderr"
        assert len(lines) == 3
        for line, sigma in zip(lines[1:], (0.2, 0.4)):
            parts = line.split(",")
            assert float(parts[0]) == sigma
            assert abs(float(parts[1]) - gkp.logical_error_prob(sigma)) < 1e-7
            assert 0.0 <= float(parts[2]) <= 0.5
