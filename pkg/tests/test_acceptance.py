"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one PASS/FAIL line; the terminal summary repeats them.
"""

import time

import numpy as np
import pytest

from ksinstab.matrices import (block_triangularize, digraph, has_path, is_irreducible,
                               is_metzler, is_nonsingular_m_matrix, perron_root,
                               row_sum_bounds, strongly_connected_components)
from ksinstab.simulate import (Grid1D, State, discrete_cross_check, growth_rate,
                               max_stable_dt, perturbed_state, simulate, steady_state_field)
from ksinstab.spectral import (build_M, check_suff1, check_suff2, critical_chi,
                               cubic_coefficients, trimolecular_determinant, trimolecular_k0,
                               trimolecular_slope, max_real_part, mode_matrix_with_K,
                               mode_spectrum, routh_hurwitz_cubic, steady_jacobian,
                               trimolecular_cubic, trimolecular_rates)
from ksinstab.steady import find_steady_state, linear_steady_state

from conftest import bundled


def report(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.mark.criterion(1, "discrete operator spectrum equals union of mode spectra (n=64)")
def test_criterion_1_reduction(criterion):
    start = time.perf_counter()
    worst = 0.0
    for name in ("minimal_ks", "dimerization"):
        model = bundled(name)
        ss = find_steady_state(model, 1.0)
        rep = discrete_cross_check(model, ss, Grid1D(64, model.domain.L))
        worst = max(worst, rep.hausdorff)
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-6 and elapsed < 10.0,
           f"max Hausdorff distance {worst:.3e} (<= 1e-6), {elapsed:.2f} s (< 10 s)")


@pytest.mark.criterion(2, "minimal model threshold chi* = 2 at mu = -1")
def test_criterion_2_minimal_threshold(criterion):
    start = time.perf_counter()
    model = bundled("minimal_ks")
    ss = find_steady_state(model, 1.0)
    t = critical_chi(model, ss, -1.0)
    elapsed = time.perf_counter() - start
    # closed form: chi u alpha = D (gamma - mu k_v)
    expected = model.D * (1.0 + 1.0) / (ss.u_star * model.alpha[0])
    ok = t is not None and abs(t.value - expected) <= 1e-9 and elapsed < 1.0
    report(2, ok, f"chi* = {t.value!r} vs {expected!r}, {elapsed:.3f} s (< 1 s)")


def _quadratic_root(c, g1, rhs):
    lo, hi = 0.0, max(1.0, rhs / g1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if c * mid * mid + g1 * mid - rhs > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@pytest.mark.criterion(3, "dimerization pipeline")
def test_criterion_3_dimerization(criterion):
    model = bundled("dimerization")
    k1 = k2 = g1 = g2 = 1.0
    problems = []
    for u in np.geomspace(1e-2, 1e2, 9):
        ss = find_steady_state(model, float(u))
        root = _quadratic_root(k1 * g2 / (k2 + g2), g1, model.alpha[0] * u)
        if abs(ss.v_star[0] - root) > 1e-9 * root:
            problems.append(f"u*={u}: v1={ss.v_star[0]!r} vs {root!r}")
    ss = find_steady_state(model, 1.0)
    s1, s2 = check_suff1(model, ss), check_suff2(model, ss)
    if not (s1.applicable and s2.applicable):
        problems.append("sufficient conditions not applicable")
    J = steady_jacobian(model, ss)
    if not (np.trace(J) < 0 and np.linalg.det(J) > 0):
        problems.append("J not Hurwitz")
    if not np.all(np.linalg.eigvals(J).real < 0):
        problems.append("J eigenvalues not in left half-plane")
    t = critical_chi(model, ss, -1.0)
    if t is None or t.at_bracket_min:
        problems.append("no finite threshold")
    else:
        below = max_real_part(build_M(model, ss, -1.0, chi=t.value * (1 - 1e-9)).M)
        above = max_real_part(build_M(model, ss, -1.0, chi=t.value * (1 + 1e-9)).M)
        if not below < 0 < above:
            problems.append(f"no sign change at chi*={t.value!r}")
    report(3, not problems, "; ".join(problems) or
           f"steady states match the quadratic root, suff1/suff2 applicable, "
           f"chi* = {t.value:.10g}")


@pytest.mark.criterion(4, "trimolecular network: Routh-Hurwitz, affine determinant, K0")
def test_criterion_4_trimolecular(criterion, rng):
    problems = []
    model = bundled("trimolecular")
    ss = find_steady_state(model, 1.0, pins=[(1, 2.0)])
    J = steady_jacobian(model, ss)
    if is_metzler(J):
        problems.append("J reported Metzler")

    for _ in range(100):
        p = 5.0 * (1.0 - rng.uniform(size=6))  # (0, 5]
        b = trimolecular_cubic(*p)
        roots = np.roots([1.0, *b])
        if not (routh_hurwitz_cubic(*b) and roots.real.max() < 0):
            problems.append(f"Routh-Hurwitz failed for {p}")

    rates = trimolecular_rates(model)
    for mu in (-0.25, -1.0, -4.0):
        D_t = model.D_tilde
        block = J + mu * np.diag(D_t)
        b_model = cubic_coefficients(block)
        b_closed = trimolecular_cubic(rates.k1 * ss.v_star[1], rates.k1 * ss.v_star[0], rates.k2,
                                      rates.gamma1 - mu * D_t[0], -mu * D_t[1], -mu * D_t[2])
        if not np.allclose(b_model, b_closed, rtol=1e-12):
            problems.append(f"cubic mismatch at mu={mu}")
        if not routh_hurwitz_cubic(*b_model):
            problems.append(f"kinetic block not Hurwitz at mu={mu}")

        slope = model.alpha[0] * rates.k1 * ss.v_star[1] * mu * D_t[1]
        Ks = np.array([0.0, 0.5, 1.0, 3.0, 10.0, 100.0])
        dets = np.array([trimolecular_determinant(model, ss, mu, K) for K in Ks])
        fitted = np.polyfit(Ks, dets, 1)[0]
        if abs(fitted - slope) > 1e-9 * max(1.0, abs(slope)):
            problems.append(f"slope {fitted!r} vs {slope!r} at mu={mu}")
        if abs(trimolecular_slope(model, ss, mu) - slope) > 1e-12 * abs(slope):
            problems.append("closed-form slope mismatch")
        if not dets[0] > 0:
            problems.append("C not positive")
        k0 = trimolecular_k0(model, ss, mu)
        for K in (k0 * (1 + 1e-6), 2 * k0, 10 * k0):
            w = mode_spectrum(mode_matrix_with_K(model, ss, mu, K))
            if not w.real.max() > 0:
                problems.append(f"no unstable eigenvalue at K={K!r}, mu={mu}")
    report(4, not problems, "; ".join(problems[:3]) or
           "J not Metzler, 100 random cubics Hurwitz, slopes within 1e-9, "
           "unstable for K >= K0")


@pytest.mark.criterion(5, "shifted mode matrix nonnegative with growing Perron root")
def test_criterion_5_proof_construction(criterion):
    problems = []
    for name in ("minimal_ks", "dimerization", "linear_chain"):
        model = bundled(name)
        ss = find_steady_state(model, 1.0)
        if not is_metzler(steady_jacobian(model, ss)):
            problems.append(f"{name}: J not Metzler")
        rhos = []
        for K in (1.0, 10.0, 100.0):
            M = mode_matrix_with_K(model, ss, -1.0, K)
            B = M + (1.0 + np.abs(np.diag(M)).max()) * np.eye(len(M))
            if np.any(B < 0):
                problems.append(f"{name}: B has a negative entry at K={K}")
            rhos.append(perron_root(B)[0])
        if not rhos[0] < rhos[1] < rhos[2]:
            problems.append(f"{name}: Perron roots {rhos} not increasing")
    report(5, not problems, "; ".join(problems) or
           "B >= 0 and rho(B) increasing over K in {1, 10, 100} for all Metzler models")


@pytest.mark.criterion(6, "unit-production steady states invert A")
def test_criterion_6_converse(criterion, rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 6))
        B = rng.uniform(0, 1, (n, n))
        s = np.max(np.abs(np.linalg.eigvals(B))) + 1.0
        A = s * np.eye(n) - B
        C = np.column_stack([linear_steady_state(A, np.eye(n)[i], 1.0).v_star
                             for i in range(n)])
        worst = max(worst, np.max(np.abs(A @ C - np.eye(n))))
    report(6, worst <= 1e-9, f"max |AC - I| = {worst:.3e} over 20 matrices (<= 1e-9)")


@pytest.mark.criterion(7, "simulator growth rates, mass conservation, fixed point")
def test_criterion_7_simulator(criterion):
    start = time.perf_counter()
    problems, lines = [], []
    base = bundled("minimal_ks")
    for chi in (3.0, 1.0):
        model = base.replace(chi=chi)
        ss = find_steady_state(model, 1.0)
        grid = Grid1D(256, model.domain.L)
        traj = simulate(model, perturbed_state(ss, grid), max_stable_dt(model, grid), 8.0,
                        sample_every=200, reference=ss)
        if np.max(np.abs(traj.mode_amplitude)) > 1e-2:
            problems.append("amplitude left the linear regime")
        measured = growth_rate(traj, (3.0, 8.0))
        predicted = max_real_part(build_M(model, ss, -1.0).M)
        rel = abs(measured / predicted - 1.0)
        lines.append(f"chi={chi}: rate {measured:.6f} vs {predicted:.6f} ({rel:.2%})")
        if rel > 0.05:
            problems.append(lines[-1])

    for name in ("minimal_ks", "dimerization", "linear_chain", "trimolecular", "full_ks"):
        model = bundled(name)
        grid = Grid1D(128, model.domain.L)
        x = grid.centers
        u = 1.0 + 0.2 * np.cos(np.pi * x / grid.L)
        v = np.vstack([0.5 + 0.1 * np.cos(2 * np.pi * x / grid.L)] * model.N)
        dt = max_stable_dt(model, grid)
        traj = simulate(model, State(u, v), dt, 10_000 * dt, sample_every=10_000)
        drift = np.max(np.abs(traj.mass - traj.mass[0])) / traj.mass[0]
        if traj.times.size != 2 or drift > 1e-11:
            problems.append(f"{name}: mass drift {drift:.2e}")

        if name == "full_ks":
            continue
        pins = [(1, 2.0)] if name == "trimolecular" else []
        ss = find_steady_state(model, 1.0, pins=pins)
        traj = simulate(model, steady_state_field(ss, grid), dt, 1000 * dt, sample_every=1000,
                        reference=ss)
        if traj.max_deviation.max() > 1e-10:
            problems.append(f"{name}: steady state moved by {traj.max_deviation.max():.2e}")
    elapsed = time.perf_counter() - start
    if elapsed >= 60.0:
        problems.append(f"runtime {elapsed:.1f} s")
    report(7, not problems, "; ".join(problems) or
           "; ".join(lines) + f"; mass and fixed point held; {elapsed:.1f} s (< 60 s)")


def _transitive_closure(A):
    R = (A != 0) | np.eye(len(A), dtype=bool)
    for k in range(len(A)):
        R = R | (R[:, [k]] & R[[k], :])
    return R


@pytest.mark.criterion(8, "matrix toolkit properties over 500 random instances each")
def test_criterion_8_matrix_properties(criterion, rng):
    instances = 500
    failures = {"sandwich": 0, "m_matrix": 0, "scc": 0, "block": 0}
    checked_m = 0
    for _ in range(instances):
        n = int(rng.integers(1, 7))
        # nonnegative irreducible: random sparse plus a Hamiltonian cycle
        A = rng.uniform(0, 5, (n, n)) * (rng.uniform(size=(n, n)) < 0.4)
        perm = rng.permutation(n)
        for a, b in zip(perm, np.roll(perm, -1)):
            A[a, b] += rng.uniform(0.1, 2.0)
        rho, _ = perron_root(A)
        s, S = row_sum_bounds(A)
        dense = np.max(np.abs(np.linalg.eigvals(A)))
        if not (s <= rho <= S and abs(rho - dense) <= 1e-8 * max(1.0, dense)):
            failures["sandwich"] += 1

    while checked_m < instances:
        n = int(rng.integers(1, 7))
        off = rng.uniform(0, 2, (n, n)) * (rng.uniform(size=(n, n)) < 0.5)
        np.fill_diagonal(off, 0.0)
        A = np.diag(rng.uniform(-1, 4, n)) - off
        s = np.diag(A).max() + 1.0
        rho_B = np.max(np.abs(np.linalg.eigvals(s * np.eye(n) - A)))
        if abs(s - rho_B) < 1e-8:
            continue
        checked_m += 1
        if is_nonsingular_m_matrix(A) != (s > rho_B):
            failures["m_matrix"] += 1

    for _ in range(instances):
        n = int(rng.integers(1, 7))
        A = (rng.uniform(size=(n, n)) < rng.uniform(0.1, 0.6)).astype(float)
        R = _transitive_closure(A)
        dec = strongly_connected_components(digraph(A))
        label = {v: k for k, cls in enumerate(dec.classes) for v in cls}
        G = digraph(A)
        ok = is_irreducible(A) == bool(R.all())
        for i in range(n):
            for j in range(n):
                ok &= (label[i] == label[j]) == bool(R[i, j] and R[j, i])
                ok &= has_path(G, i, j) == bool(R[i, j])
        failures["scc"] += not ok

        W = A * rng.normal(size=(n, n))
        T, dec = block_triangularize(W)
        ok = True
        slices = dec.block_slices()
        for a, sa in enumerate(slices):
            ok &= is_irreducible(T[sa, sa])
            for sb in slices[a + 1:]:
                ok &= bool(np.all(T[sa, sb] == 0))
        # spectrum preserved: characteristic polynomials agree at sample points
        for z in (0.3 + 1.1j, -2.0 + 0.5j, 4.0):
            pw = np.linalg.det(z * np.eye(n) - W)
            pt = np.linalg.det(z * np.eye(n) - T)
            ok &= bool(abs(pw - pt) <= 1e-9 * max(1.0, abs(pw)))
        failures["block"] += not ok
    report(8, not any(failures.values()),
           f"{instances} instances per property, failures {failures}")
