import numpy as np
import pytest

from ksinstab.parser import parse_crn
from ksinstab.network import Interval, ModelSpec
from ksinstab.simulate import (Grid1D, State, TimestepError, Trajectory, discrete_cross_check,
                               growth_rate, hausdorff_distance, linearized_operator,
                               max_stable_dt, mode_amplitude, perturbed_state, read_snapshots,
                               simulate, steady_state_field, total_mass, trajectory_csv,
                               write_snapshots)
from ksinstab.spectral import build_M, max_real_part
from ksinstab.steady import find_steady_state

from conftest import bundled


def steady(name, **changes):
    model = bundled(name)
    if changes:
        model = model.replace(**changes)
    pins = [(1, 2.0)] if name == "trimolecular" else []
    return model, find_steady_state(model, 1.0, pins=pins)


def predicted_rate(model, ss, mode=1):
    return max_real_part(build_M(model, ss, -(mode * np.pi / model.domain.L) ** 2).M)


def run_growth(model, ss, n=256, t_end=8.0, window=(3.0, 8.0)):
    grid = Grid1D(n, model.domain.L)
    traj = simulate(model, perturbed_state(ss, grid), max_stable_dt(model, grid), t_end,
                    sample_every=200, reference=ss)
    assert np.max(np.abs(traj.mode_amplitude)) <= 1e-2
    return growth_rate(traj, window)


def test_grid_layout():
    g = Grid1D(8, 2.0)
    assert g.h == 0.25
    np.testing.assert_allclose(g.centers, 0.125 + 0.25 * np.arange(8))
    with pytest.raises(ValueError):
        Grid1D(1, 1.0)
    with pytest.raises(ValueError):
        Grid1D(8, 0.0)


def test_discrete_laplacian_eigenvalues():
    g = Grid1D(16, np.pi)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(g.laplacian())),
                               np.sort(g.laplacian_eigenvalues()), atol=1e-10)


def test_total_mass_of_constant():
    g = Grid1D(32, np.pi)
    st = State(np.full(32, 2.5), np.ones((1, 32)))
    assert total_mass(st, g) == pytest.approx(2.5 * np.pi, rel=1e-14)


def test_cosine_perturbation_keeps_mass():
    model, ss = steady("minimal_ks")
    g = Grid1D(64, model.domain.L)
    assert total_mass(perturbed_state(ss, g, 1e-3), g) == pytest.approx(
        total_mass(steady_state_field(ss, g), g), rel=1e-14)
    assert mode_amplitude(perturbed_state(ss, g, 1e-3, 2).u, ss.u_star, 2) == \
        pytest.approx(1e-3, rel=1e-12)


def test_dt_bound_enforced():
    model, ss = steady("minimal_ks")
    g = Grid1D(64, model.domain.L)
    bound = max_stable_dt(model, g)
    assert bound == pytest.approx(0.4 * g.h ** 2)
    with pytest.raises(TimestepError) as info:
        simulate(model, steady_state_field(ss, g), 1.01 * bound, 1.0)
    assert info.value.bound == bound


def test_rejects_negative_initial_data_and_small_grids():
    model, ss = steady("minimal_ks")
    g = Grid1D(16, model.domain.L)
    st = steady_state_field(ss, g)
    st.u[3] = -1.0
    with pytest.raises(ValueError):
        simulate(model, st, 1e-4, 0.01)
    small = steady_state_field(ss, Grid1D(4, model.domain.L))
    with pytest.raises(ValueError):
        simulate(model, small, 1e-4, 0.01)


@pytest.mark.parametrize("name", ["minimal_ks", "dimerization", "trimolecular", "linear_chain"])
def test_steady_state_is_fixed_point(name):
    model, ss = steady(name)
    g = Grid1D(64, model.domain.L)
    traj = simulate(model, steady_state_field(ss, g), max_stable_dt(model, g), 10.0,
                    sample_every=500, reference=ss)
    assert traj.max_deviation.max() <= 1e-10


@pytest.mark.parametrize("name", ["minimal_ks", "dimerization", "trimolecular", "linear_chain",
                                  "full_ks"])
def test_mass_conservation(name):
    model = bundled(name)
    g = Grid1D(128, model.domain.L)
    x = g.centers
    u = 1.0 + 0.3 * np.cos(np.pi * x / g.L) + 0.1 * np.cos(3 * np.pi * x / g.L)
    v = np.vstack([0.5 + 0.2 * np.cos((k + 2) * np.pi * x / g.L) for k in range(model.N)])
    dt = max_stable_dt(model, g)
    traj = simulate(model, State(u, v), dt, 10_000 * dt, sample_every=1000)
    assert traj.times.size == 11 and not traj.diverged
    assert np.max(np.abs(traj.mass - traj.mass[0])) <= 1e-11 * traj.mass[0]


def test_growth_rate_synthetic():
    t = np.linspace(0, 5, 51)
    traj = Trajectory(t, np.ones_like(t), np.ones((51, 1)), np.zeros(51), 1e-4 * np.exp(0.3 * t),
                      1, ("v",))
    assert growth_rate(traj, (0.0, 5.0)) == pytest.approx(0.3, abs=1e-9)
    flat = Trajectory(t, np.ones_like(t), np.ones((51, 1)), np.zeros(51), np.zeros(51), 1, ("v",))
    with pytest.raises(ValueError):
        growth_rate(flat, (0.0, 5.0))
    with pytest.raises(ValueError):
        growth_rate(traj, (10.0, 11.0))


@pytest.mark.parametrize("name, chi", [
    ("minimal_ks", 3.0), ("minimal_ks", 1.0), ("dimerization", 6.0), ("dimerization", 1.0),
])
def test_growth_rate_matches_mode_spectrum(name, chi):
    model, ss = steady(name, chi=chi)
    expected = predicted_rate(model, ss)
    measured = run_growth(model, ss)
    assert measured == pytest.approx(expected, rel=0.05)


def test_divergence_is_flagged():
    net = parse_crn("2 v -> 3 v @ 1.0")
    model = ModelSpec(net, np.array([1.0]), 1.0, 1.0, np.array([1.0]), Interval(np.pi))
    g = Grid1D(16, np.pi)
    traj = simulate(model, State(np.ones(16), np.full((1, 16), 2.0)), 1e-3, 5.0,
                    sample_every=10)
    assert traj.diverged and traj.diverged_at < 5.0
    assert np.all(np.diff(traj.times) > 0)


def test_cross_check_small_cases():
    for name, n in (("minimal_ks", 2), ("minimal_ks", 64), ("dimerization", 32)):
        model, ss = steady(name)
        rep = discrete_cross_check(model, ss, Grid1D(n, model.domain.L))
        assert rep.hausdorff <= (1e-10 if n == 2 else 1e-6)
        assert rep.matching_max <= 1e-6


def test_cross_check_size_guard():
    model, ss = steady("minimal_ks")
    with pytest.raises(ValueError):
        discrete_cross_check(model, ss, Grid1D(129, model.domain.L))


def test_linearized_operator_shape():
    model, ss = steady("dimerization")
    A = linearized_operator(model, ss, Grid1D(8, model.domain.L))
    assert A.shape == (24, 24)


def test_hausdorff_distance():
    assert hausdorff_distance(np.array([0, 1j]), np.array([1j, 0, 0])) == 0.0
    assert hausdorff_distance(np.array([0.0]), np.array([0.0, 2.0])) == 2.0


def test_exports_round_trip(tmp_path):
    model, ss = steady("dimerization")
    g = Grid1D(16, model.domain.L)
    traj = simulate(model, perturbed_state(ss, g), 1e-3, 0.05, sample_every=10,
                    reference=ss, keep_snapshots=True)
    csv = trajectory_csv(traj)
    lines = csv.splitlines()
    assert lines[0] == "t,mass,mode_amplitude,max_deviation,mean_v1,mean_v2"
    assert len(lines) == traj.times.size + 1
    assert csv == trajectory_csv(traj)
    path = tmp_path / "snap.bin"
    write_snapshots(path, traj)
    data = read_snapshots(path)
    assert data.shape == (traj.times.size, 3, 16)
    np.testing.assert_array_equal(data, traj.snapshots)
    header = np.frombuffer(path.read_bytes()[:24], dtype="<i8")
    assert header.tolist() == [16, 2, traj.times.size]


def test_deterministic_runs():
    model, ss = steady("minimal_ks", chi=3.0)
    g = Grid1D(64, model.domain.L)
    a = simulate(model, perturbed_state(ss, g), 1e-4, 0.5, sample_every=100, reference=ss)
    b = simulate(model, perturbed_state(ss, g), 1e-4, 0.5, sample_every=100, reference=ss)
    assert trajectory_csv(a) == trajectory_csv(b)


@pytest.mark.slow
def test_spatial_convergence_second_order():
    model, ss = steady("minimal_ks", chi=3.0)
    dt = max_stable_dt(model, Grid1D(512, model.domain.L))
    rates = []
    for n in (128, 256, 512):
        g = Grid1D(n, model.domain.L)
        traj = simulate(model, perturbed_state(ss, g), dt, 4.0, sample_every=2000, reference=ss)
        rates.append(growth_rate(traj, (1.0, 4.0)))
    ratio = (rates[0] - rates[1]) / (rates[1] - rates[2])
    assert 3.0 <= ratio <= 5.0
