"""Homogeneous steady states: solutions of ``alpha * u + g(v) = 0``."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matrices import m_matrix_failure
from .network import ModelSpec, ReactionNetwork, eval_jacobian, eval_kinetics

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200
BACKTRACK_STEPS = 21  # t = 1, 1/2, ..., 2**-20
SINGULAR_RCOND = 1e-12


class SteadyStateError(RuntimeError):
    """No acceptable steady state could be computed."""

    def __init__(self, message, *, reason=None, iterate=None, residual=None):
        super().__init__(message)
        self.reason = reason
        self.iterate = iterate
        self.residual = residual


@dataclass(frozen=True)
class SteadyState:
    u_star: float
    v_star: np.ndarray
    residual_norm: float
    nonnegative: bool

    @property
    def positive(self) -> bool:
        return self.u_star > 0 and bool(np.all(self.v_star > 0))


@dataclass(frozen=True)
class LinearPart:
    """``g(v) = -A v`` for a network of first-order reactions."""

    A: np.ndarray


def _make_state(u_star, v, residual) -> SteadyState:
    v = np.array(v, dtype=float)
    v.setflags(write=False)
    return SteadyState(float(u_star), v, float(residual), bool(np.all(v >= 0)))


def extract_linear(net: ReactionNetwork) -> LinearPart | None:
    """Return ``A`` with ``g(v) = -A v``, or ``None`` if ``g`` is not linear.

    ``g`` is linear exactly when every reaction is first order (a single
    reactant molecule); zeroth-order sources would add a constant term.
    """
    if any(rxn.order != 1 for rxn in net.reactions):
        return None
    A = -eval_jacobian(net, np.zeros(net.N))
    A = A + 0.0  # no negative zeros
    A.setflags(write=False)
    return LinearPart(A)


def linear_steady_state(A, alpha, u_star: float) -> SteadyState:
    """``v* = u* A^{-1} alpha`` for a nonsingular M-matrix ``A``.

    Raises :class:`SteadyStateError` whose ``reason`` names the failed
    check (sign pattern, singularity or negative inverse).
    """
    A = np.asarray(A, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if not u_star > 0:
        raise ValueError(f"u_star must be positive, got {u_star}")
    failure = m_matrix_failure(A)
    if failure is not None:
        raise SteadyStateError(f"A is not a nonsingular M-matrix: {failure}", reason=failure)
    v = u_star * np.linalg.solve(A, alpha)
    # inv(A) >= 0, so negatives can only be roundoff on exact zeros
    roundoff = 1e-12 * max(1.0, np.max(np.abs(v), initial=0.0))
    v = np.where((v < 0) & (v > -roundoff), 0.0, v)
    residual = np.max(np.abs(A @ v - u_star * alpha), initial=0.0)
    return _make_state(u_star, v, residual)


def default_initial_guess(model: ModelSpec, u_star: float) -> np.ndarray:
    """Steady state of the linearization at zero when it is an M-matrix, else ones."""
    A0 = -eval_jacobian(model.network, np.zeros(model.N))
    if m_matrix_failure(A0) is None:
        return u_star * np.linalg.solve(A0, model.alpha)
    return np.ones(model.N)


def _residual(model: ModelSpec, u_star: float, v) -> np.ndarray:
    return model.alpha * u_star + eval_kinetics(model.network, v)


def newton_steady_state(model: ModelSpec, u_star: float, v0=None,
                        pins: Sequence[tuple[int, float]] = ()) -> SteadyState:
    """Damped Newton on ``F(v) = alpha u* + g(v)``.

    ``pins`` is a list of ``(species index, value)`` pairs appended as
    extra equations ``v_i - value = 0``; they select one member of a
    degenerate family (e.g. a conserved total).  With pins the linear
    step is a least-squares (Gauss-Newton) solve of the stacked system.
    """
    if not u_star > 0:
        raise ValueError(f"u_star must be positive, got {u_star}")
    n = model.N
    pins = [(int(i), float(x)) for i, x in pins]
    for i, _ in pins:
        if not 0 <= i < n:
            raise ValueError(f"pinned species index {i} outside 0..{n - 1}")
    v = default_initial_guess(model, u_star) if v0 is None else np.array(v0, dtype=float)
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise ValueError("initial guess must be a finite vector of length N")
    for i, x in pins:
        v[i] = x
    pin_idx = np.array([i for i, _ in pins], dtype=int)
    pin_val = np.array([x for _, x in pins])

    def full_residual(w):
        return np.concatenate([_residual(model, u_star, w), w[pin_idx] - pin_val])

    F = full_residual(v)
    fnorm = np.max(np.abs(F), initial=0.0)
    best = (fnorm, v.copy())
    for it in range(NEWTON_MAX_ITER + 1):
        if fnorm <= NEWTON_TOL * max(1.0, np.max(np.abs(v), initial=0.0)):
            residual = np.max(np.abs(_residual(model, u_star, v)), initial=0.0)
            logger.debug("newton converged in %d iterations", it)
            return _make_state(u_star, v, residual)
        if it == NEWTON_MAX_ITER:
            break
        Jg = eval_jacobian(model.network, v)
        if pins:
            E = np.zeros((len(pins), n))
            E[np.arange(len(pins)), pin_idx] = 1.0
            Jg = np.vstack([Jg, E])
        sv = np.linalg.svd(Jg, compute_uv=False)
        if sv.size == 0 or sv.size < n or sv[-1] <= SINGULAR_RCOND * sv[0]:
            raise SteadyStateError(
                f"singular Jacobian at iterate v = {v.tolist()}; the steady states may "
                "form a degenerate family (e.g. a conserved quantity) - pin a species "
                "value to select one", reason="singular jacobian", iterate=v.copy(),
                residual=fnorm)
        delta = np.linalg.lstsq(Jg, -F, rcond=None)[0]
        t = 1.0
        for _ in range(BACKTRACK_STEPS):
            trial = v + t * delta
            F_trial = full_residual(trial)
            trial_norm = np.max(np.abs(F_trial))
            if np.isfinite(trial_norm) and trial_norm < fnorm:
                break
            t *= 0.5
        if not np.isfinite(trial_norm):
            raise SteadyStateError(
                f"Newton step produced a non-finite residual from v = {v.tolist()}",
                reason="non-finite", iterate=v.copy(), residual=fnorm)
        v, F, fnorm = trial, F_trial, trial_norm
        if fnorm < best[0]:
            best = (fnorm, v.copy())
    raise SteadyStateError(
        f"Newton did not converge in {NEWTON_MAX_ITER} iterations; best residual "
        f"{best[0]:.3e} at v = {best[1].tolist()}", reason="no convergence",
        iterate=best[1], residual=best[0])


def find_steady_state(model: ModelSpec, u_star: float,
                      pins: Sequence[tuple[int, float]] = (), v0=None) -> SteadyState:
    """Closed form for linear networks without pins, Newton otherwise."""
    lin = extract_linear(model.network)
    if lin is not None and not pins and v0 is None:
        return linear_steady_state(lin.A, model.alpha, u_star)
    return newton_steady_state(model, u_star, v0=v0, pins=pins)


def homogeneous_residual(model: ModelSpec, ss: SteadyState) -> float:
    return float(np.max(np.abs(_residual(model, ss.u_star, ss.v_star)), initial=0.0))
