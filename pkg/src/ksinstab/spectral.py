"""Mode-by-mode linear stability of homogeneous steady states.

For a Neumann Laplacian eigenvalue ``mu <= 0`` the linearized system
restricted to that eigenfunction is the ``(N+1) x (N+1)`` matrix::

    M(mu) = [[D mu,   0 ... K ... 0      ],
             [alpha,  J + mu diag(D_tilde)]]

with ``K = -chi u* mu`` in the column of the chemoattractant.  The
linearized operator's spectrum is the union of ``eig(M(mu_i))`` over the
Neumann spectrum, so everything here works on these small matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .matrices import digraph, has_path, is_irreducible, is_metzler
from .network import Interval, ModelSpec, Rectangle, eval_jacobian
from .steady import SteadyState

NEUTRAL_TOL = 1e-9
CHI_BRACKET = (1e-8, 1e8)


class SpectralError(RuntimeError):
    """The eigensolver failed; spectra are never returned partially."""


@dataclass(frozen=True)
class NeumannSpectrum:
    domain: Interval | Rectangle
    mu: np.ndarray
    mode_ids: tuple


def neumann_eigenvalues(domain, count: int) -> NeumannSpectrum:
    """The ``count`` Neumann Laplacian eigenvalues closest to zero.

    Interval ``(0, L)``: ``mu_i = -(i pi / L)**2`` with mode ``i``.
    Rectangle: ``mu_(i,j) = -((i pi/Lx)**2 + (j pi/Ly)**2)``, listed in
    nonincreasing order; ties go to the smaller ``j``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if isinstance(domain, Interval):
        ids = tuple(range(count))
        mu = np.array([-(i * math.pi / domain.L) ** 2 for i in ids])
    elif isinstance(domain, Rectangle):
        # any (i, j) with i >= count or j >= count is beaten by (count-1, 0) or (0, count-1)
        cand = [((i * math.pi / domain.Lx) ** 2 + (j * math.pi / domain.Ly) ** 2, j, i)
                for i in range(count) for j in range(count)]
        cand.sort()
        ids = tuple((i, j) for _, j, i in cand[:count])
        mu = np.array([-lam for lam, _, _ in cand[:count]])
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    mu = mu + 0.0
    mu.setflags(write=False)
    return NeumannSpectrum(domain, mu, ids)


@dataclass(frozen=True)
class ModeMatrix:
    mu: float
    M: np.ndarray
    K: float


def steady_jacobian(model: ModelSpec, ss: SteadyState) -> np.ndarray:
    return eval_jacobian(model.network, ss.v_star)


def build_M(model: ModelSpec, ss: SteadyState, mu: float, *, J=None,
            alpha=None, chi=None) -> ModeMatrix:
    """Assemble ``M(mu)`` at the steady state.

    ``J``, ``alpha`` and ``chi`` override the model's values; the
    threshold searches use this to vary one entry with the rest fixed.
    """
    mu = float(mu)
    if mu > 0:
        raise ValueError(f"Laplacian eigenvalues are nonpositive, got mu = {mu}")
    n = model.N
    J = steady_jacobian(model, ss) if J is None else np.asarray(J, dtype=float)
    alpha = model.alpha if alpha is None else np.asarray(alpha, dtype=float)
    chi = model.chi if chi is None else float(chi)
    K = -chi * ss.u_star * mu + 0.0
    M = np.zeros((n + 1, n + 1))
    M[0, 0] = model.D * mu
    M[0, 1 + model.chemoattractant_index] = K
    M[1:, 0] = alpha
    M[1:, 1:] = J + mu * np.diag(model.D_tilde)
    M += 0.0
    M.setflags(write=False)
    return ModeMatrix(mu, M, K)


def mode_spectrum(mm: ModeMatrix | np.ndarray) -> np.ndarray:
    """All eigenvalues of ``M(mu)`` (dense nonsymmetric solve with balancing)."""
    M = mm.M if isinstance(mm, ModeMatrix) else np.asarray(mm, dtype=float)
    try:
        w = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver failed: {exc}") from exc
    if w.shape != (M.shape[0],) or not np.all(np.isfinite(w)):
        raise SpectralError("eigensolver returned non-finite eigenvalues")
    return w.astype(complex)


def max_real_part(M) -> float:
    return float(np.max(mode_spectrum(M).real))


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of a sufficient-condition check.

    ``applicable`` is the conjunction of all booleans in ``details``.
    """

    applicable: bool
    details: dict
    i_star: int | None
    reason: str = ""


@dataclass(frozen=True)
class ModeResult:
    mode_id: object
    mu: float
    eigenvalues: np.ndarray
    max_re: float


@dataclass(frozen=True)
class StabilityReport:
    per_mode: list[ModeResult]
    overall_max_re: float
    unstable: bool
    dominant_mode: object
    neutral: list[tuple[object, complex]]
    marginal: bool
    suff1: ConditionReport
    suff2: ConditionReport
    tail_cutoff_mu: float | None
    tail_certified: bool
    extra: dict = field(default_factory=dict)

    @property
    def tail_status(self) -> str:
        return "tail certified" if self.tail_certified else "tail unverified"


def gershgorin_tail_cutoff(model: ModelSpec, ss: SteadyState, J=None) -> float:
    """A ``mu_c < 0`` such that every ``M(mu)`` with ``mu < mu_c`` is stable.

    Gershgorin rows after the similarity ``S^{-1} M S``, ``S = diag(s, 1, ..)``
    with ``s = 2 chi u* / D``: row 0 becomes ``D mu + K / s = D mu / 2 < 0``
    for every ``mu < 0``, and row ``k`` has right edge
    ``J_kk + s alpha_k + sum_{l != k} |J_kl| + mu D_tilde_k``.
    """
    J = steady_jacobian(model, ss) if J is None else np.asarray(J, dtype=float)
    s = 2.0 * model.chi * ss.u_star / model.D
    off = np.abs(J).sum(axis=1) - np.abs(np.diag(J))
    edge = np.diag(J) + s * model.alpha + off
    cutoff = np.min(-np.maximum(edge, 0.0) / model.D_tilde)
    # strict inequality needed; nudge when every row is already certified at mu -> 0-
    return float(cutoff) if cutoff < 0 else -0.0


def _tail_certified(cutoff: float, last_mu: float) -> bool:
    return last_mu < cutoff or (cutoff == 0.0 and last_mu < 0)


def alpha_support(model: ModelSpec) -> list[int]:
    return [int(i) for i in np.flatnonzero(model.alpha > 0)]


def _positivity(ss: SteadyState) -> tuple[bool, str]:
    if ss.positive:
        return True, ""
    return False, "steady state is not positive (u* > 0 and v* > 0 required)"


def check_suff1(model: ModelSpec, ss: SteadyState) -> ConditionReport:
    """Production of some chemical, irreducible Metzler Jacobian."""
    J = steady_jacobian(model, ss)
    positive, reason = _positivity(ss)
    support = alpha_support(model)
    details = {
        "positive_steady_state": positive,
        "alpha_positive": bool(support),
        "irreducible": bool(is_irreducible(J)),
        "metzler": bool(is_metzler(J)),
    }
    ok = all(details.values())
    if not reason and not ok:
        reason = "failed: " + ", ".join(k for k, v in details.items() if not v)
    return ConditionReport(ok, details, support[0] if support else None, reason)


def check_suff2(model: ModelSpec, ss: SteadyState) -> ConditionReport:
    """Metzler Jacobian and a path from a produced chemical to the chemoattractant.

    The path is taken in ``G(J^T)``, i.e. along edges ``i -> k`` with
    ``J[k, i] != 0`` ("species i influences species k").
    """
    J = steady_jacobian(model, ss)
    positive, reason = _positivity(ss)
    support = alpha_support(model)
    Gt = digraph(J.T)
    c = model.chemoattractant_index
    with_path = [i for i in support if has_path(Gt, i, c)]
    details = {
        "positive_steady_state": positive,
        "alpha_positive": bool(support),
        "path_exists": bool(with_path),
        "metzler": bool(is_metzler(J)),
    }
    ok = all(details.values())
    if not reason and not ok:
        reason = "failed: " + ", ".join(k for k, v in details.items() if not v)
    return ConditionReport(ok, details, with_path[0] if with_path else None, reason)


def stability_verdict(model: ModelSpec, ss: SteadyState, mode_count: int = 64, *,
                      mean_mode_marginal: bool = False) -> StabilityReport:
    """Spectra of ``M(mu_i)`` over the first ``mode_count`` Neumann modes.

    Eigenvalues with ``|Re| <= 1e-9`` are neutral: they are listed in
    ``neutral`` and excluded from ``overall_max_re``.  The ``mu_0 = 0``
    mode always has one (mass conservation).  ``marginal`` is set only
    when ``mean_mode_marginal`` is requested and a neutral eigenvalue
    exists.  The tail beyond the computed modes is certified stable by
    :func:`gershgorin_tail_cutoff` when the last computed ``mu`` is past
    the cutoff.
    """
    if mode_count < 2:
        raise ValueError("mode_count must be at least 2 (mu_0 and one negative mode)")
    spectrum = neumann_eigenvalues(model.domain, mode_count)
    J = steady_jacobian(model, ss)
    per_mode, neutral = [], []
    best_re, best_mode = -math.inf, None
    for mode_id, mu in zip(spectrum.mode_ids, spectrum.mu):
        w = mode_spectrum(build_M(model, ss, mu, J=J))
        is_neutral = np.abs(w.real) <= NEUTRAL_TOL
        neutral.extend((mode_id, complex(z)) for z in w[is_neutral])
        per_mode.append(ModeResult(mode_id, float(mu), w, float(w.real.max())))
        active = w.real[~is_neutral]
        if active.size and active.max() > best_re:
            best_re, best_mode = float(active.max()), mode_id
    if best_mode is None:
        # every eigenvalue neutral
        best_re, best_mode = 0.0, spectrum.mode_ids[0]
    cutoff = gershgorin_tail_cutoff(model, ss, J)
    return StabilityReport(
        per_mode=per_mode,
        overall_max_re=best_re,
        unstable=best_re > 0,
        dominant_mode=best_mode,
        neutral=neutral,
        marginal=bool(mean_mode_marginal and neutral and not best_re > 0),
        suff1=check_suff1(model, ss),
        suff2=check_suff2(model, ss),
        tail_cutoff_mu=cutoff,
        tail_certified=_tail_certified(cutoff, float(spectrum.mu[-1])),
    )


@dataclass(frozen=True)
class Threshold:
    """Result of a threshold search.

    ``value`` is the first crossing of ``max Re lambda`` through zero;
    ``at_bracket_min`` means the system is already unstable at the lower
    end of the bracket and ``value`` is that end.
    """

    value: float
    at_bracket_min: bool = False


def first_crossing(f: Callable[[float], float], lo: float, hi: float, *,
                   grid_points: int = 64, iterations: int = 60) -> Threshold | None:
    """Smallest ``x`` in ``[lo, hi]`` where ``f`` turns positive.

    Scans a logarithmic grid for the first sign change (no monotonicity
    assumed), then bisects that bracket.
    """
    grid = np.geomspace(lo, hi, grid_points)
    prev_x, prev_f = grid[0], f(grid[0])
    if prev_f > 0:
        return Threshold(float(lo), at_bracket_min=True)
    for x in grid[1:]:
        fx = f(x)
        if fx > 0:
            a, b = prev_x, x
            for _ in range(iterations):
                mid = 0.5 * (a + b)
                if f(mid) > 0:
                    b = mid
                else:
                    a = mid
            return Threshold(float(0.5 * (a + b)))
        prev_x, prev_f = x, fx
    return None


def critical_chi(model: ModelSpec, ss: SteadyState, mu: float,
                 bracket: tuple[float, float] = CHI_BRACKET) -> Threshold | None:
    """Smallest chemotactic sensitivity making ``M(mu)`` unstable, ``u*`` fixed."""
    if not mu < 0:
        raise ValueError("critical_chi needs a negative mode mu")
    J = steady_jacobian(model, ss)
    return first_crossing(lambda chi: max_real_part(build_M(model, ss, mu, J=J, chi=chi).M),
                          *bracket)


def critical_alpha(model: ModelSpec, ss: SteadyState, mu: float, index: int,
                   bracket: tuple[float, float] = CHI_BRACKET) -> Threshold | None:
    """Same search over the production rate ``alpha[index]``.

    The steady state and its Jacobian are held fixed while the entry of
    ``alpha`` in ``M(mu)`` varies, as in the destabilization argument.
    """
    if not mu < 0:
        raise ValueError("critical_alpha needs a negative mode mu")
    J = steady_jacobian(model, ss)

    def f(a):
        alpha = np.array(model.alpha)
        alpha[index] = a
        return max_real_part(build_M(model, ss, mu, J=J, alpha=alpha).M)

    return first_crossing(f, *bracket)


def routh_hurwitz_cubic(b2: float, b1: float, b0: float) -> bool:
    """All roots of ``x^3 + b2 x^2 + b1 x + b0`` in the open left half-plane."""
    return b2 > 0 and b0 > 0 and b1 * b2 - b0 > 0


def cubic_coefficients(A) -> tuple[float, float, float]:
    """``(b2, b1, b0)`` of the characteristic polynomial of a 3x3 matrix."""
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    b2 = -np.trace(A)
    b1 = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
          + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
          + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    b0 = -np.linalg.det(A)
    return float(b2), float(b1), float(b0)


def trimolecular_cubic(a, b, c, d1, d2, d3) -> tuple[float, float, float]:
    """Closed-form ``(b2, b1, b0)`` for the block
    ``[[-a-d1, -b, c], [-a, -b-d2, c], [a, b, -c-d3]]``."""
    b2 = a + b + c + d1 + d2 + d3
    b1 = (a * (d2 + d3) + b * (d1 + d3) + c * (d1 + d2)
          + d1 * d2 + d1 * d3 + d2 * d3)
    b0 = a * d2 * d3 + b * d1 * d3 + c * d1 * d2 + d1 * d2 * d3
    return b2, b1, b0


@dataclass(frozen=True)
class TrimolecularRates:
    k1: float
    k2: float
    gamma1: float


def trimolecular_rates(model: ModelSpec) -> TrimolecularRates:
    """Identify ``v1 + v2 <-> v3``, ``v1 -> 0`` in ``model``.

    Species are identified by role: ``v3`` is the chemoattractant, ``v1``
    the only produced species.  Raises ``ValueError`` for any other shape.
    """
    if model.N != 3:
        raise ValueError("trimolecular analysis needs exactly 3 species")
    c = model.chemoattractant_index
    support = alpha_support(model)
    if len(support) != 1 or support[0] == c:
        raise ValueError("trimolecular analysis needs alpha supported on v1 only")
    i1 = support[0]
    i2 = ({0, 1, 2} - {i1, c}).pop()
    k1 = k2 = g1 = 0.0
    for rxn in model.network.reactions:
        r, p = dict(rxn.reactants), dict(rxn.products)
        if r == {i1: 1, i2: 1} and p == {c: 1}:
            k1 += rxn.rate
        elif r == {c: 1} and p == {i1: 1, i2: 1}:
            k2 += rxn.rate
        elif r == {i1: 1} and not p:
            g1 += rxn.rate
        elif rxn.rate != 0.0:
            raise ValueError(f"reaction {r} -> {p} does not belong to v1 + v2 <-> v3, v1 -> 0")
    if not (k1 > 0 and k2 > 0 and g1 > 0):
        raise ValueError("trimolecular analysis needs k1, k2, gamma1 > 0")
    return TrimolecularRates(k1, k2, g1)


def _trimolecular_roles(model):
    c = model.chemoattractant_index
    i1 = alpha_support(model)[0]
    i2 = ({0, 1, 2} - {i1, c}).pop()
    return i1, i2, c


def trimolecular_slope(model: ModelSpec, ss: SteadyState, mu: float) -> float:
    """``d det M(mu) / dK = alpha_1 k1 v*_2 mu D_tilde_2`` (negative for mu < 0)."""
    rates = trimolecular_rates(model)
    i1, i2, _ = _trimolecular_roles(model)
    return float(model.alpha[i1] * rates.k1 * ss.v_star[i2] * mu * model.D_tilde[i2])


def _det_with_K(model, ss, mu, K):
    mm = build_M(model, ss, mu)
    M = np.array(mm.M)
    M[0, 1 + model.chemoattractant_index] = K
    return float(np.linalg.det(M)), M


def trimolecular_determinant(model: ModelSpec, ss: SteadyState, mu: float, K: float,
                         rtol: float = 1e-9) -> float:
    """``det M(mu)`` for the trimolecular network at coupling ``K``.

    The dense determinant is checked against the affine formula
    ``C + K alpha_1 k1 v*_2 mu D_tilde_2`` with ``C`` the determinant at
    ``K = 0``; a mismatch raises ``ArithmeticError``.
    """
    if not mu < 0:
        raise ValueError("mu must be negative")
    if K < 0:
        raise ValueError("K must be nonnegative")
    slope = trimolecular_slope(model, ss, mu)
    C, _ = _det_with_K(model, ss, mu, 0.0)
    det, M = _det_with_K(model, ss, mu, K)
    predicted = C + K * slope
    scale = max(abs(C), abs(K * slope), np.abs(M).max() ** 4, 1e-300)
    if abs(det - predicted) > rtol * scale:
        raise ArithmeticError(f"det M = {det!r} differs from affine formula {predicted!r}")
    return det


def trimolecular_k0(model: ModelSpec, ss: SteadyState, mu: float) -> float:
    """Coupling ``K0`` where ``det M(mu)`` changes sign."""
    C, _ = _det_with_K(model, ss, mu, 0.0)
    return float(C / -trimolecular_slope(model, ss, mu))


def mode_matrix_with_K(model: ModelSpec, ss: SteadyState, mu: float, K: float) -> np.ndarray:
    return _det_with_K(model, ss, mu, K)[1]
