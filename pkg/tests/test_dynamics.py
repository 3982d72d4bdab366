import math

import numpy as np
import pytest

from dqubit.atom import jz_expectation
from dqubit.dynamics import (
    DecayModel,
    EffectiveDrive,
    FitFailureError,
    NO_DECAY,
    drive_hamiltonian,
    evolve,
    fit_rabi,
    make_synth_states,
    prepare_d1_by_rotation,
    prepare_d2_by_rotation,
    project_synth,
    stirap_prepare,
    wigner_populations,
)

EDGE_TOP = np.array([0, 0, 0, 1.0], complex)
OMEGA_LADDER = math.sqrt(18.0) * math.pi / 12e-6  # full edge-to-edge transfer in 12 us
OMEGA_PAIR = math.pi / 30e-6  # full pair transfer in 30 us


class TestDriveHamiltonian:
    def test_adjacent_coupling_matrix_at_zero_phase(self):
        h = drive_hamiltonian(EffectiveDrive(kind="dm1", rabi_rad_s=2.0))
        w = [math.sqrt(3 / 18), math.sqrt(4 / 18), math.sqrt(3 / 18)]
        expected = np.zeros((4, 4))
        for i, wi in enumerate(w):
            expected[i, i + 1] = expected[i + 1, i] = wi  # Omega/2 = 1
        assert np.allclose(h, expected, atol=1e-15)

    def test_adjacent_drive_is_scaled_spin_x(self):
        omega = 3.7
        h = drive_hamiltonian(EffectiveDrive(kind="dm1", rabi_rad_s=omega))
        jx = np.zeros((4, 4))
        for i, w in enumerate((math.sqrt(3) / 2, 1.0, math.sqrt(3) / 2)):
            jx[i, i + 1] = jx[i + 1, i] = w
        assert np.allclose(h, omega / math.sqrt(18.0) * jx, atol=1e-15)

    def test_pair_coupling_matrix(self):
        h = drive_hamiltonian(EffectiveDrive(kind="dm2", rabi_rad_s=2.0))
        expected = np.zeros((4, 4))
        expected[0, 2] = expected[2, 0] = 1.0
        expected[1, 3] = expected[3, 1] = 1.0
        assert np.allclose(h, expected, atol=1e-15)

    def test_pair_drive_commutes_with_pair_swap(self):
        h = drive_hamiltonian(EffectiveDrive(kind="dm2", rabi_rad_s=1.0, phase_rad=0.7))
        swap = np.zeros((4, 4))
        swap[0, 1] = swap[1, 0] = swap[2, 3] = swap[3, 2] = 1.0
        assert np.allclose(swap @ h @ swap, h, atol=1e-15)

    @pytest.mark.parametrize("kind", ["dm1", "dm2"])
    @pytest.mark.parametrize("phase", [0.0, 0.4, math.pi, -1.2])
    def test_hermitian(self, kind, phase):
        h = drive_hamiltonian(EffectiveDrive(kind=kind, rabi_rad_s=1.0, phase_rad=phase))
        assert np.array_equal(h, h.conj().T)

    def test_invalid_drive_rejected(self):
        with pytest.raises(ValueError):
            EffectiveDrive(kind="dm3", rabi_rad_s=1.0)
        with pytest.raises(ValueError):
            EffectiveDrive(kind="dm1", rabi_rad_s=0.0)


class TestEvolve:
    def test_matches_closed_form_rotation_at_sampled_angles(self):
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=OMEGA_LADDER)
        thetas = np.linspace(0.0, 2 * math.pi, 50)
        times = thetas / (drv.rabi_rad_s / math.sqrt(18.0))
        res = evolve(EDGE_TOP, drv, NO_DECAY, times)
        for i, th in enumerate(thetas):
            assert np.abs(res.populations[i] - wigner_populations(th, 3)).max() < 1e-8

    def test_full_ladder_transfer(self):
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=OMEGA_LADDER)
        res = evolve(EDGE_TOP, drv, NO_DECAY, [12e-6])
        assert res.populations[-1][0] == pytest.approx(1.0, abs=1e-9)

    def test_half_angle_binomial_populations(self):
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=OMEGA_LADDER)
        t_quarter = (math.pi / 2) / (OMEGA_LADDER / math.sqrt(18.0))
        res = evolve(EDGE_TOP, drv, NO_DECAY, [t_quarter])
        assert np.allclose(res.populations[-1], [1 / 8, 3 / 8, 3 / 8, 1 / 8], atol=1e-9)

    def test_pair_drive_leaves_other_pair_untouched(self):
        drv = EffectiveDrive(kind="dm2", rabi_rad_s=OMEGA_PAIR)
        times = np.linspace(0.0, 90e-6, 301)
        res = evolve(EDGE_TOP, drv, NO_DECAY, times)
        assert res.populations[:, [0, 2]].max() < 1e-10

    def test_pair_drive_two_thirds_point(self):
        drv = EffectiveDrive(kind="dm2", rabi_rad_s=OMEGA_PAIR)
        res = evolve(EDGE_TOP, drv, NO_DECAY, [20e-6])
        assert np.abs(res.populations[-1] - [0.0, 0.75, 0.0, 0.25]).max() < 1e-8

    def test_norm_preserved_over_many_samples(self):
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=1e6)
        times = np.linspace(0.0, 1e-3, 10_000)
        res = evolve(EDGE_TOP, drv, NO_DECAY, times)
        norms = np.linalg.norm(res.states, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-9

    def test_decay_preserves_trace_and_shrinks_purity(self):
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=1e6)
        decay = DecayModel(tau_s=20e-6)
        times = np.linspace(0.0, 100e-6, 64)
        res = evolve(EDGE_TOP, drv, decay, times)
        purities = [np.trace(r @ r).real for r in res.states]
        traces = [np.trace(r).real for r in res.states]
        assert np.abs(np.array(traces) - 1.0).max() < 1e-9
        assert (np.diff(purities) <= 1e-12).all()
        assert np.allclose(res.states[-1], np.eye(4) / 4, atol=0.01)

    def test_populations_independent_of_drive_phase_from_basis_state(self):
        times = np.linspace(0.0, 25e-6, 40)
        base = evolve(
            EDGE_TOP, EffectiveDrive(kind="dm1", rabi_rad_s=OMEGA_LADDER, phase_rad=0.0),
            NO_DECAY, times,
        ).populations
        for phase in (0.9, math.pi, -2.0):
            alt = evolve(
                EDGE_TOP,
                EffectiveDrive(kind="dm1", rabi_rad_s=OMEGA_LADDER, phase_rad=phase),
                NO_DECAY, times,
            ).populations
            assert np.abs(alt - base).max() < 1e-12

    def test_input_validation(self):
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=1.0)
        with pytest.raises(ValueError):
            evolve(EDGE_TOP, drv, NO_DECAY, [])
        with pytest.raises(ValueError):
            evolve(EDGE_TOP, drv, NO_DECAY, [1.0, 0.5])
        with pytest.raises(ValueError):
            evolve(np.array([1.0, 1.0, 0, 0]), drv, NO_DECAY, [1.0])


class TestWignerOracle:
    def test_identity(self):
        assert np.allclose(wigner_populations(0.0, 3), [0, 0, 0, 1], atol=1e-15)

    def test_full_flip(self):
        assert np.allclose(wigner_populations(math.pi, 3), [1, 0, 0, 0], atol=1e-12)

    def test_quarter_turn_binomial(self):
        assert np.allclose(
            wigner_populations(math.pi / 2, 3), [1 / 8, 3 / 8, 3 / 8, 1 / 8], atol=1e-12
        )

    @pytest.mark.parametrize("two_mj", [-3, -1, 1, 3])
    def test_rows_normalized(self, two_mj):
        for th in np.linspace(0, 2 * math.pi, 17):
            assert wigner_populations(th, two_mj).sum() == pytest.approx(1.0, abs=1e-12)

    def test_invalid_projection_rejected(self):
        with pytest.raises(ValueError):
            wigner_populations(0.1, 2)


class TestSynthStates:
    def test_orthonormality(self):
        s = make_synth_states()
        basis = [s.d1, s.d2, s.b1, s.b2]
        gram = np.array([[np.vdot(a, b) for b in basis] for a in basis])
        assert np.abs(gram - np.eye(4)).max() < 1e-12

    def test_insensitive_states_have_zero_jz(self):
        for phi in (0.0, 1.1, math.pi):
            s = make_synth_states(phi)
            for i in (s.d1, s.d2):
                for j in (s.d1, s.d2):
                    assert abs(jz_expectation(i, j)) < 1e-12

    def test_bright_state_is_sensitive(self):
        s = make_synth_states()
        assert jz_expectation(s.b1, s.b1).real == pytest.approx(1.0, abs=1e-12)

    def test_reference_phase_components(self):
        s = make_synth_states(math.pi)
        assert np.allclose(s.d1, [0, -math.sqrt(3) / 2, 0, 0.5], atol=1e-15)
        assert np.allclose(s.d2, [0.5, 0, -math.sqrt(3) / 2, 0], atol=1e-15)
        assert np.allclose(s.b1, [0, 0.5, 0, math.sqrt(3) / 2], atol=1e-15)
        assert np.allclose(s.b2, [math.sqrt(3) / 2, 0, 0.5, 0], atol=1e-15)


class TestPreparationByRotation:
    def test_first_state_prepared_exactly(self):
        for phi in (0.0, math.pi, 2.2):
            sched, state = prepare_d1_by_rotation(OMEGA_PAIR, phi)
            target = make_synth_states(phi).d1
            assert abs(np.vdot(target, state)) ** 2 > 1.0 - 1e-9
            assert sched.duration_s == pytest.approx(20e-6)

    def test_second_state_prepared_exactly(self):
        for phi in (0.0, math.pi, -0.7):
            _, state = prepare_d2_by_rotation(OMEGA_PAIR, phi)
            target = make_synth_states(phi).d2
            assert abs(np.vdot(target, state)) ** 2 > 1.0 - 1e-9

    def test_full_duration_transfers_to_partner(self):
        sched, _ = prepare_d1_by_rotation(OMEGA_PAIR)
        res = evolve(EDGE_TOP, sched.drive, NO_DECAY, [30e-6])
        assert res.populations[-1][1] == pytest.approx(1.0, abs=1e-9)

    def test_zero_duration_leaves_state(self):
        sched, _ = prepare_d1_by_rotation(OMEGA_PAIR)
        res = evolve(EDGE_TOP, sched.drive, NO_DECAY, [0.0])
        assert res.populations[0][3] == pytest.approx(1.0)

    def test_transfer_between_insensitive_states(self):
        # the adjacent-level drive swaps the two insensitive states through
        # the bright pair, with transient leakage along the way
        s = make_synth_states()
        drv = EffectiveDrive(kind="dm1", rabi_rad_s=OMEGA_LADDER)
        times = np.linspace(0.0, 30e-6, 601)
        res = evolve(s.d1, drv, NO_DECAY, times)
        p2 = np.array([abs(np.vdot(s.d2, st)) ** 2 for st in res.states])
        p1 = np.array([abs(np.vdot(s.d1, st)) ** 2 for st in res.states])
        leak = 1.0 - p1 - p2
        assert p2.max() >= 0.99
        assert leak.max() > 0.1

    def test_invalid_rabi_rejected(self):
        with pytest.raises(ValueError):
            prepare_d1_by_rotation(0.0)


class TestStirap:
    def test_adiabatic_transfer(self):
        om = 2 * math.pi * 20e6
        res = stirap_prepare(om, om, 1.6e-6, 2.4e-6, 10e-6)
        assert res.fidelity > 0.95
        assert res.peak_p_population < 0.05
        assert res.counterintuitive

    def test_zero_pump_means_no_transfer(self):
        res = stirap_prepare(0.0, 2 * math.pi * 20e6, 1.6e-6, 2.4e-6, 10e-6)
        assert res.fidelity == pytest.approx(0.0, abs=1e-6)

    def test_intuitive_ordering_warns_and_underperforms(self):
        om = 2 * math.pi * 20e6
        good = stirap_prepare(om, om, 1.6e-6, 2.4e-6, 10e-6)
        with pytest.warns(UserWarning, match="intuitive ordering"):
            bad = stirap_prepare(om, om, 1.6e-6, -2.4e-6, 10e-6)
        assert bad.fidelity < good.fidelity - 0.2

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            stirap_prepare(-1.0, 1.0, 1e-6, 1e-6, 1e-5)
        with pytest.raises(ValueError):
            stirap_prepare(1.0, 1.0, 0.0, 1e-6, 1e-5)


class TestProjectSynth:
    def test_projecting_the_state_itself(self):
        s = make_synth_states()
        res = project_synth(s.d1)
        assert res.p_d1 == pytest.approx(1.0, abs=1e-12)
        assert res.p_d2 == pytest.approx(0.0, abs=1e-12)
        assert res.leakage == pytest.approx(0.0, abs=1e-9)
        assert not res.population_rule

    def test_bright_state_is_pure_leakage(self):
        s = make_synth_states()
        res = project_synth(s.b1)
        assert res.p_d1 == pytest.approx(0.0, abs=1e-12)
        assert res.p_d2 == pytest.approx(0.0, abs=1e-12)
        assert res.leakage == pytest.approx(1.0, abs=1e-9)

    def test_population_rule_flagged(self):
        res = project_synth(np.array([0.0, 0.75, 0.0, 0.25]))
        assert res.population_rule
        assert res.p_d1 == pytest.approx(1.0)
        assert res.p_d2 == pytest.approx(0.0)
        assert res.leakage is None

    def test_density_input(self):
        s = make_synth_states()
        rho = np.outer(s.d2, s.d2.conj())
        res = project_synth(rho)
        assert res.p_d2 == pytest.approx(1.0, abs=1e-12)


class TestFitRabi:
    def make_data(self, kind, omega, tau, noise=0.0, seed=0, n=60, t_max=40e-6):
        times = np.linspace(0.0, t_max, n)
        drv = EffectiveDrive(kind=kind, rabi_rad_s=omega)
        res = evolve(EDGE_TOP, drv, DecayModel(tau_s=tau), times)
        pops = res.populations
        if noise:
            rng = np.random.default_rng(seed)
            pops = np.clip(pops + noise * rng.standard_normal(pops.shape), 0.0, 1.0)
        return times, pops

    def test_decay_free_ladder_recovery(self):
        times, pops = self.make_data("dm1", OMEGA_LADDER, math.inf)
        fit = fit_rabi(times, pops, "dm1", initial=EDGE_TOP)
        assert fit.omega_rad_s == pytest.approx(OMEGA_LADDER, rel=1e-3)
        assert fit.decay_free_bound
        assert math.isinf(fit.tau_s)

    def test_noisy_pair_drive_recovery_within_errors(self):
        omega, tau = OMEGA_PAIR, 150e-6
        hits = 0
        for seed in range(6):
            times, pops = self.make_data("dm2", omega, tau, noise=0.01, seed=seed, t_max=90e-6)
            fit = fit_rabi(times, pops, "dm2", initial=EDGE_TOP)
            ok_omega = abs(fit.omega_rad_s - omega) < 3 * max(fit.omega_err, 1e-12)
            ok_tau = abs(fit.tau_s - tau) < 3 * max(fit.tau_err, 1e-12)
            hits += ok_omega and ok_tau
        assert hits >= 5

    def test_constant_trajectories_fail_loudly(self):
        times = np.linspace(0.0, 1e-5, 20)
        pops = np.tile([0.25, 0.25, 0.25, 0.25], (20, 1))
        with pytest.raises(FitFailureError):
            fit_rabi(times, pops, "dm1")

    def test_too_few_points_rejected(self):
        times, pops = self.make_data("dm1", OMEGA_LADDER, math.inf, n=60)
        with pytest.raises(ValueError):
            fit_rabi(times[:5], pops[:5], "dm1")
