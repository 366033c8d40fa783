"""Fidelities, occupation analysis, and the adiabaticity estimate."""

import numpy as np
import pytest

from lmgdrive.bath import BathModel
from lmgdrive.driving import (
    ControlPoint,
    DrivePath,
    build_schedule,
    first_order_path,
    second_order_path,
)
from lmgdrive.heom import SolverConfig, evolve
from lmgdrive.observables import (
    TRAJECTORY_COLUMNS,
    FidelityResult,
    adiabatic_timescale,
    fidelity_f1,
    fidelity_f2,
    occupations,
    parity_expectation,
    purity,
    spectrum_cache,
    trajectory_occupations,
    trajectory_table,
)
from lmgdrive.spin_model import (
    build_hamiltonian,
    eigendecompose,
    parity_operator,
    thermal_state,
)


@pytest.fixture(scope="module")
def spec10(sys10):
    return eigendecompose(build_hamiltonian(sys10, ControlPoint(0.5, 0.0)))


class TestFidelities:
    def test_ground_state_scores_one(self, spec10):
        rho = np.outer(spec10.states[:, 0], spec10.states[:, 0].conj())
        assert np.isclose(fidelity_f1(rho, spec10).value, 1.0, atol=1e-12)
        assert np.isclose(fidelity_f2(rho, spec10).value, 1.0, atol=1e-12)

    def test_maximally_mixed(self, spec10):
        rho = np.eye(11) / 11.0
        assert np.isclose(fidelity_f1(rho, spec10).value, 1.0 / 11.0, atol=1e-12)
        assert np.isclose(fidelity_f2(rho, spec10).value, 2.0 / 11.0, atol=1e-12)

    def test_orthogonal_state_scores_zero(self, spec10):
        rho = np.outer(spec10.states[:, 4], spec10.states[:, 4].conj())
        assert fidelity_f1(rho, spec10).value < 1e-15
        # F2 counts levels 0 and 1 only
        assert fidelity_f2(rho, spec10).value < 1e-12

    def test_pair_dominates_ground(self, spec10, rng):
        for _ in range(10):
            a = rng.normal(size=(11, 11)) + 1j * rng.normal(size=(11, 11))
            rho = a @ a.conj().T
            rho /= np.trace(rho).real
            assert fidelity_f2(rho, spec10).value >= fidelity_f1(rho, spec10).value - 1e-12

    def test_linear_in_state(self, spec10, rng):
        a = rng.normal(size=(11, 11)) + 1j * rng.normal(size=(11, 11))
        rho1 = a @ a.conj().T
        rho1 /= np.trace(rho1).real
        rho2 = np.eye(11) / 11.0
        mix = 0.3 * rho1 + 0.7 * rho2
        expect = 0.3 * fidelity_f1(rho1, spec10).value + 0.7 * fidelity_f1(rho2, spec10).value
        assert abs(fidelity_f1(mix, spec10).value - expect) < 1e-12

    def test_result_contract(self, spec10):
        res = fidelity_f1(np.eye(11) / 11.0, spec10, target=ControlPoint(0.5, 0.0))
        assert res.kind == "F1"
        assert res.target == ControlPoint(0.5, 0.0)
        with pytest.raises(ValueError, match="outside"):
            FidelityResult(value=-0.1, kind="F1")
        with pytest.raises(ValueError, match="outside"):
            FidelityResult(value=1.1, kind="F2")


class TestOccupations:
    def test_thermal_populations_are_boltzmann(self, spec10):
        beta = 0.8
        rho = thermal_state(spec10, beta)
        pops = occupations(rho, spec10)
        weights = np.exp(-beta * (spec10.energies - spec10.energies[0]))
        assert np.allclose(pops, weights / weights.sum(), atol=1e-12)

    def test_sum_equals_trace(self, spec10, rng):
        a = rng.normal(size=(11, 11)) + 1j * rng.normal(size=(11, 11))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        assert np.isclose(occupations(rho, spec10).sum(), 1.0, atol=1e-12)

    def test_coherences_do_not_leak(self, spec10):
        # adding off-diagonal eigenbasis coherences leaves P_n untouched
        v0, v3 = spec10.states[:, 0], spec10.states[:, 3]
        rho = 0.6 * np.outer(v0, v0.conj()) + 0.4 * np.outer(v3, v3.conj())
        coh = 0.2 * (np.outer(v0, v3.conj()) + np.outer(v3, v0.conj()))
        assert np.allclose(occupations(rho + coh, spec10), occupations(rho, spec10), atol=1e-13)

    def test_purity(self, spec10):
        assert np.isclose(purity(np.eye(11) / 11.0), 1.0 / 11.0, atol=1e-14)
        v0 = spec10.states[:, 0]
        assert np.isclose(purity(np.outer(v0, v0.conj())), 1.0, atol=1e-12)
        assert 1.0 / 11.0 < purity(thermal_state(spec10, 0.8)) < 1.0

    def test_parity_expectation(self, sys10):
        p = parity_operator(sys10)
        spec = eigendecompose(build_hamiltonian(sys10, ControlPoint(0.5, 0.0)), parity=p)
        for n in (0, 1, 2):
            rho = np.outer(spec.states[:, n], spec.states[:, n].conj())
            assert np.isclose(abs(parity_expectation(rho, sys10)), 1.0, atol=1e-10)
        # tr P = 1 for eleven alternating signs starting at +1
        assert np.isclose(parity_expectation(np.eye(11) / 11.0, sys10), 1.0 / 11.0, atol=1e-14)


class TestSpectrumCache:
    def test_memoizes_per_point(self, sys10):
        at = spectrum_cache(sys10)
        e1, v1 = at(0.5, 0.0)
        e2, v2 = at(0.5, 0.0)
        assert e1 is e2 and v1 is v2
        e3, _ = at(0.6, 0.0)
        assert e3 is not e1

    def test_counterterm_shifts_spectrum(self, sys10):
        plain = spectrum_cache(sys10)(0.5, 0.0)[0]
        shifted = spectrum_cache(sys10, renorm=1, q=1.0, theta=np.pi / 2)(0.5, 0.0)[0]
        assert not np.allclose(plain, shifted)


@pytest.fixture(scope="module")
def short_run(sys4):
    bath = BathModel(q=0.3, gamma=10.0, temperature=2.0, n_matsubara=3)
    sched = build_schedule(sys4, first_order_path(), "A", 2.0)
    rho0 = np.zeros((5, 5), dtype=complex)
    rho0[0, 0] = 1.0
    cfg = SolverConfig(n_outputs=21)
    traj = evolve(rho0, sys4, sched, bath, cfg, theta=np.pi / 2)
    return traj, sched


class TestTrajectoryTable:
    def test_header_and_shape(self, sys4, short_run):
        traj, sched = short_run
        header, rows = trajectory_table(traj, sys4, sched)
        assert header[:6] == TRAJECTORY_COLUMNS.split(", ")
        assert header[6:] == [f"P_{n}" for n in range(5)]
        assert rows.shape == (21, 11)

    def test_columns(self, sys4, short_run):
        traj, sched = short_run
        _, rows = trajectory_table(traj, sys4, sched)
        assert np.allclose(rows[:, 0], traj.times)
        assert np.all(np.diff(rows[:, 1]) > 0)  # s advances
        assert np.allclose(rows[:, 4], 1.0, atol=1e-6)  # trace
        assert np.all(rows[:, 5] <= 1.0 + 1e-9)
        # populations resum to the trace
        assert np.allclose(rows[:, 6:].sum(axis=1), rows[:, 4], atol=1e-8)

    def test_occupations_start_in_ground_state(self, sys4, short_run):
        traj, sched = short_run
        pops = trajectory_occupations(traj, sys4, sched)
        assert np.isclose(pops[0, 0], 1.0, atol=1e-10)
        assert np.all(pops > -1e-8)


class TestAdiabaticTimescale:
    def test_frozen_value(self, sys10):
        # Landau-Zener estimate for the avoided crossing on the tilted path
        assert np.isclose(
            adiabatic_timescale(sys10, first_order_path()), 1960.628898, rtol=1e-6
        )

    def test_magnitude_window(self, sys10):
        t_ad = adiabatic_timescale(sys10, first_order_path())
        assert 1e3 <= t_ad < 1e4

    def test_grows_with_system_size(self):
        import lmgdrive as lg

        values = [
            adiabatic_timescale(lg.build_spin_operators(n), first_order_path())
            for n in (6, 8, 10, 12)
        ]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_boundary_minimum_rejected(self, sys10):
        # on the symmetric path the doublet keeps closing all the way to the
        # endpoint, so there is no interior crossing to time against
        with pytest.raises(ValueError, match="scan boundary"):
            adiabatic_timescale(sys10, second_order_path())

    def test_flat_gap_rejected(self, sys10):
        static = DrivePath(ControlPoint(0.5, 0.0), ControlPoint(0.5, 0.0), "static")
        with pytest.raises(ValueError, match="gap is constant"):
            adiabatic_timescale(sys10, static)
