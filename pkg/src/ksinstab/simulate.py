"""Finite-volume simulation of the coupled chemotaxis system on an interval.

Cells of width ``h = L/n`` with zero-flux boundary faces.  Each step is
IMEX Euler: diffusion of every field is backward Euler (one tridiagonal
solve per field), while the upwinded chemotactic flux and the reaction
terms are explicit.  The flux at face ``j+1/2`` is
``chi * u_up * (v_c[j+1] - v_c[j]) / h`` with ``u_up`` taken from the
cell the flux leaves.  Total ``u`` is conserved to roundoff.

Snapshot files (``write_snapshots``) are little-endian: three ``int64``
(``n``, ``N``, sample count) followed by ``float64`` values laid out as
``[sample][field][cell]`` with field 0 = ``u`` and fields ``1..N`` = ``v``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import linear_sum_assignment

from .network import Interval, ModelSpec
from .spectral import build_M, mode_spectrum, steady_jacobian
from .steady import SteadyState

DT_SAFETY = 0.4
BLOWUP_LEVEL = 1e12
MAX_CROSSCHECK_CELLS = 128
MIN_SIM_CELLS = 8  # small grids are only for spectral cross-checks


class TimestepError(ValueError):
    def __init__(self, dt: float, bound: float):
        self.dt = dt
        self.bound = bound
        super().__init__(f"dt = {dt!r} exceeds the stability bound "
                         f"0.4 h^2 / max(D, D_tilde) = {bound!r}")


@dataclass(frozen=True)
class Grid1D:
    n: int
    L: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 cells, got {self.n}")
        if not self.L > 0:
            raise ValueError("grid length must be positive")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    def laplacian(self) -> np.ndarray:
        """Dense Neumann finite-volume Laplacian (for small cross-checks)."""
        n, h2 = self.n, self.h ** 2
        Lap = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1)
               + np.diag(np.ones(n - 1), -1))
        Lap[0, 0] = Lap[-1, -1] = -1.0
        return Lap / h2

    def laplacian_eigenvalues(self) -> np.ndarray:
        i = np.arange(self.n)
        return -(4.0 / self.h ** 2) * np.sin(i * np.pi / (2 * self.n)) ** 2


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray  # shape (N, n)
    t: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    mass: np.ndarray
    means: np.ndarray  # (samples, N)
    max_deviation: np.ndarray
    mode_amplitude: np.ndarray
    mode: int
    species: tuple[str, ...]
    diverged_at: float | None = None
    snapshots: np.ndarray | None = field(default=None, repr=False)
    u_negative: bool = False

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def max_stable_dt(model: ModelSpec, grid: Grid1D) -> float:
    return DT_SAFETY * grid.h ** 2 / max(model.D, float(np.max(model.D_tilde)))


def total_mass(state: State, grid: Grid1D) -> float:
    return float(grid.h * np.sum(state.u))


def steady_state_field(ss: SteadyState, grid: Grid1D) -> State:
    return State(np.full(grid.n, ss.u_star), np.tile(ss.v_star[:, None], (1, grid.n)))


def perturbed_state(ss: SteadyState, grid: Grid1D, amplitude: float | None = None,
                    mode: int = 1) -> State:
    """Steady state plus ``amplitude * cos(mode pi x / L)`` in ``u``.

    The default amplitude is ``1e-4 * u*``.
    """
    if amplitude is None:
        amplitude = 1e-4 * ss.u_star
    st = steady_state_field(ss, grid)
    st.u = st.u + amplitude * np.cos(mode * np.pi * grid.centers / grid.L)
    return st


def mode_amplitude(u: np.ndarray, reference: float, mode: int) -> float:
    """Discrete cosine coefficient of ``u - reference`` for ``cos(mode pi x / L)``."""
    n = u.size
    basis = np.cos(mode * np.pi * (np.arange(n) + 0.5) / n)
    weight = 1.0 / n if mode == 0 else 2.0 / n
    return float(weight * np.dot(u - reference, basis))


def _thomas_factors(n: int, r: float):
    """LU factors of ``I - r * (h^2 Lap)`` for the Neumann tridiagonal matrix."""
    diag = np.full(n, 1.0 + 2.0 * r)
    diag[0] = diag[-1] = 1.0 + r
    cprime = np.zeros(n)
    inv = np.zeros(n)
    inv[0] = 1.0 / diag[0]
    cprime[0] = -r * inv[0]
    for j in range(1, n):
        inv[j] = 1.0 / (diag[j] + r * cprime[j - 1])
        cprime[j] = -r * inv[j]
    return cprime, inv


@numba.njit(cache=True)
def _advance(u, v, steps, dt, h, chi, chemo, alpha, reactants, net, rates,
             r_coef, cprime, inv, blowup):
    """Advance ``steps`` IMEX steps in place.  Returns steps taken before
    the state became non-finite or exceeded ``blowup`` (== steps if fine)."""
    n = u.size
    nspec = v.shape[0]
    nrxn = rates.size
    flux = np.zeros(n + 1)
    rhs = np.zeros((nspec + 1, n))
    rxn_rate = np.zeros(nrxn)
    dprime = np.zeros(n)
    for step in range(steps):
        vc = v[chemo]
        for j in range(n - 1):
            grad = (vc[j + 1] - vc[j]) / h
            up = u[j] if grad >= 0.0 else u[j + 1]
            flux[j + 1] = chi * up * grad
        for j in range(n):
            rhs[0, j] = u[j] - dt * (flux[j + 1] - flux[j]) / h
        for j in range(n):
            for r in range(nrxn):
                m = rates[r]
                for s in range(nspec):
                    for _ in range(reactants[r, s]):
                        m *= v[s, j]
                rxn_rate[r] = m
            for s in range(nspec):
                g = 0.0
                for r in range(nrxn):
                    g += net[r, s] * rxn_rate[r]
                rhs[s + 1, j] = v[s, j] + dt * (alpha[s] * u[j] + g)
        for f in range(nspec + 1):
            rf = r_coef[f]
            dprime[0] = rhs[f, 0] * inv[f, 0]
            for j in range(1, n):
                dprime[j] = (rhs[f, j] + rf * dprime[j - 1]) * inv[f, j]
            out = u if f == 0 else v[f - 1]
            out[n - 1] = dprime[n - 1]
            for j in range(n - 2, -1, -1):
                out[j] = dprime[j] - cprime[f, j] * out[j + 1]
        for j in range(n):
            if not math.isfinite(u[j]) or abs(u[j]) > blowup:
                return step + 1
            for s in range(nspec):
                if not math.isfinite(v[s, j]):
                    return step + 1
    return steps


def simulate(model: ModelSpec, ic: State, dt: float, t_end: float, sample_every: int = 1,
             *, reference: SteadyState | None = None, mode: int = 1,
             keep_snapshots: bool = False) -> Trajectory:
    """Integrate from ``ic`` to ``t_end`` with fixed step ``dt``.

    Observables are recorded at ``t = 0`` and every ``sample_every``
    steps (plus the final time).  ``reference`` is the homogeneous state
    deviations and the tracked cosine ``mode`` are measured against; it
    defaults to the spatial means of ``ic``.

    Raises :class:`TimestepError` if ``dt`` exceeds
    ``0.4 h^2 / max(D, max D_tilde)``.  A state that becomes non-finite or
    exceeds ``1e12`` ends the run early with ``diverged_at`` set.
    """
    if not isinstance(model.domain, Interval):
        raise ValueError("the simulator supports interval domains only")
    u0 = np.array(ic.u, dtype=float)
    v0 = np.array(ic.v, dtype=float).reshape(model.N, -1)
    grid = Grid1D(u0.size, model.domain.L)
    if grid.n < MIN_SIM_CELLS:
        raise ValueError(f"simulation needs at least {MIN_SIM_CELLS} cells, got {grid.n}")
    if v0.shape != (model.N, grid.n):
        raise ValueError(f"v has shape {v0.shape}, expected {(model.N, grid.n)}")
    if np.any(u0 < 0) or np.any(v0 < 0):
        raise ValueError("initial condition must be nonnegative")
    bound = max_stable_dt(model, grid)
    if not 0 < dt <= bound:
        raise TimestepError(dt, bound)
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")

    if reference is None:
        ref_u, ref_v = float(u0.mean()), v0.mean(axis=1)
    else:
        ref_u, ref_v = reference.u_star, np.asarray(reference.v_star, dtype=float)

    net = model.network
    diffusivities = np.concatenate([[model.D], model.D_tilde])
    r_coef = dt * diffusivities / grid.h ** 2
    factors = [_thomas_factors(grid.n, r) for r in r_coef]
    cprime = np.array([f[0] for f in factors])
    inv = np.array([f[1] for f in factors])
    reactants = net.reactant_matrix.astype(np.int64)
    if reactants.size == 0:
        reactants = np.zeros((0, model.N), dtype=np.int64)
    netm = np.ascontiguousarray(net.net_stoichiometry, dtype=float).reshape(-1, model.N)
    rates = np.ascontiguousarray(net.rates, dtype=float)
    alpha = np.ascontiguousarray(model.alpha, dtype=float)

    u, v = u0.copy(), np.ascontiguousarray(v0.copy())
    total_steps = int(round(t_end / dt))
    if abs(total_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        total_steps = int(math.ceil(t_end / dt))

    times, mass, means, dev, amp, snaps = [], [], [], [], [], []
    u_negative = False

    def record(t):
        times.append(t)
        mass.append(grid.h * float(np.sum(u)))
        means.append(v.mean(axis=1))
        dev.append(max(float(np.max(np.abs(u - ref_u))),
                       float(np.max(np.abs(v - ref_v[:, None]), initial=0.0))))
        amp.append(mode_amplitude(u, ref_u, mode))
        if keep_snapshots:
            snaps.append(np.vstack([u[None, :], v]))

    record(0.0)
    done, diverged_at = 0, None
    while done < total_steps:
        chunk = min(sample_every, total_steps - done)
        taken = _advance(u, v, chunk, dt, grid.h, model.chi, model.chemoattractant_index,
                         alpha, reactants, netm, rates, r_coef, cprime, inv, BLOWUP_LEVEL)
        done += taken
        if taken < chunk:
            diverged_at = done * dt
            break
        u_negative = u_negative or bool(np.any(u < 0))
        record(done * dt)

    return Trajectory(
        times=np.array(times), mass=np.array(mass), means=np.array(means),
        max_deviation=np.array(dev), mode_amplitude=np.array(amp), mode=mode,
        species=tuple(net.names), diverged_at=diverged_at,
        snapshots=np.array(snaps) if keep_snapshots else None, u_negative=u_negative)


def growth_rate(traj: Trajectory, t_window: tuple[float, float]) -> float:
    """Least-squares slope of ``log |amplitude|`` over ``t0 <= t <= t1``."""
    t0, t1 = t_window
    sel = (traj.times >= t0) & (traj.times <= t1)
    if np.count_nonzero(sel) < 2:
        raise ValueError(f"fewer than two samples in window {t_window}")
    a = np.abs(traj.mode_amplitude[sel])
    if np.any(a <= 0):
        raise ValueError("tracked mode amplitude vanishes inside the window")
    slope, _ = np.polyfit(traj.times[sel], np.log(a), 1)
    return float(slope)


@dataclass(frozen=True)
class CrossCheckReport:
    hausdorff: float
    matching_max: float
    operator_eigenvalues: np.ndarray
    reduced_eigenvalues: np.ndarray


def linearized_operator(model: ModelSpec, ss: SteadyState, grid: Grid1D) -> np.ndarray:
    """Dense ``(N+1) n`` square matrix of the semi-discrete scheme linearized at ``ss``.

    Block ``(0, 0)`` is ``D Lap``, block ``(0, 1+c)`` is ``-chi u* Lap``,
    blocks ``(1+k, 0)`` are ``alpha_k I`` and the chemical blocks are
    ``J_kl I + delta_kl D_tilde_k Lap``.
    """
    n, N = grid.n, model.N
    Lap = grid.laplacian()
    I = np.eye(n)
    J = steady_jacobian(model, ss)
    A = np.zeros(((N + 1) * n, (N + 1) * n))

    def block(i, j):
        return A[i * n:(i + 1) * n, j * n:(j + 1) * n]

    block(0, 0)[:] = model.D * Lap
    block(0, 1 + model.chemoattractant_index)[:] = -model.chi * ss.u_star * Lap
    for k in range(N):
        block(1 + k, 0)[:] = model.alpha[k] * I
        for l in range(N):
            block(1 + k, 1 + l)[:] = J[k, l] * I + (model.D_tilde[k] * Lap if k == l else 0.0)
    return A


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def discrete_cross_check(model: ModelSpec, ss: SteadyState, grid: Grid1D) -> CrossCheckReport:
    """Compare the full discrete spectrum with the union of ``eig(M(mu_i^h))``.

    ``mu_i^h = -(4/h^2) sin^2(i pi / 2n)`` are the eigenvalues of the
    discrete Neumann Laplacian.  Reports the Hausdorff distance between
    the two eigenvalue sets and the largest deviation in an optimal
    one-to-one matching (which also accounts for multiplicities).
    """
    if not isinstance(model.domain, Interval):
        raise ValueError("cross-check needs an interval domain")
    if grid.n > MAX_CROSSCHECK_CELLS:
        raise ValueError(f"n = {grid.n} exceeds the dense-solve limit {MAX_CROSSCHECK_CELLS}")
    full = np.linalg.eigvals(linearized_operator(model, ss, grid))
    J = steady_jacobian(model, ss)
    reduced = np.concatenate([mode_spectrum(build_M(model, ss, mu, J=J))
                              for mu in np.minimum(grid.laplacian_eigenvalues(), 0.0)])
    cost = np.abs(full[:, None] - reduced[None, :])
    rows, cols = linear_sum_assignment(cost)
    return CrossCheckReport(hausdorff_distance(full, reduced), float(cost[rows, cols].max()),
                            full, reduced)


def trajectory_csv(traj: Trajectory) -> str:
    """CSV with header ``t,mass,mode_amplitude,max_deviation,mean_<species>...``."""
    buf = io.StringIO()
    header = ["t", "mass", "mode_amplitude", "max_deviation"] + [
        f"mean_{s}" for s in traj.species]
    buf.write(",".join(header) + "\n")
    for k in range(traj.times.size):
        row = [traj.times[k], traj.mass[k], traj.mode_amplitude[k], traj.max_deviation[k],
               *traj.means[k]]
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def write_snapshots(path, traj: Trajectory) -> None:
    if traj.snapshots is None:
        raise ValueError("trajectory was recorded without snapshots")
    snaps = np.ascontiguousarray(traj.snapshots, dtype="<f8")
    samples, fields, n = snaps.shape
    with open(path, "wb") as fh:
        fh.write(np.array([n, fields - 1, samples], dtype="<i8").tobytes())
        fh.write(snaps.tobytes())


def read_snapshots(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, N, samples = np.frombuffer(fh.read(24), dtype="<i8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(int(samples), int(N) + 1, int(n))
