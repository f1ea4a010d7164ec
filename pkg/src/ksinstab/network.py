"""Reaction networks, model parameters and mass-action kinetics.

A network is a list of species plus reactions; under mass action each
reaction contributes ``rate * prod_j v_j**reactant[j]`` times its net
stoichiometry to ``g(v)``.  The Jacobian is assembled term by term from
the monomials, so structural zeros are exact zeros.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MAX_STOICHIOMETRY = 9


class ModelValidationError(ValueError):
    """A model violates one of its parameter invariants."""


@dataclass(frozen=True)
class Species:
    index: int
    name: str


@dataclass(frozen=True)
class Reaction:
    """One mass-action reaction.

    ``reactants`` and ``products`` map species index to stoichiometric
    coefficient.  An empty ``products`` map encodes decay ``v -> 0``.
    """

    reactants: Mapping[int, int]
    products: Mapping[int, int]
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "reactants", _clean_stoich(self.reactants))
        object.__setattr__(self, "products", _clean_stoich(self.products))
        object.__setattr__(self, "rate", float(self.rate))
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"rate constant must be finite and >= 0, got {self.rate}")
        if not self.reactants and not self.products:
            raise ValueError("reaction has neither reactants nor products")

    @property
    def order(self) -> int:
        return sum(self.reactants.values())


def _clean_stoich(stoich: Mapping[int, int]) -> dict[int, int]:
    out = {}
    for k, c in stoich.items():
        c = int(c)
        if c < 0 or c > MAX_STOICHIOMETRY:
            raise ValueError(
                f"stoichiometric coefficient {c} outside 0..{MAX_STOICHIOMETRY}")
        if c:
            out[int(k)] = c
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    _reactant_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    _net_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    _rates: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate species names in {names}")
        if [s.index for s in self.species] != list(range(len(self.species))):
            raise ValueError("species indices must be contiguous 0..N-1")
        n = len(self.species)
        R = np.zeros((len(self.reactions), n))
        P = np.zeros((len(self.reactions), n))
        for r, rxn in enumerate(self.reactions):
            for side, mat in ((rxn.reactants, R), (rxn.products, P)):
                for k, c in side.items():
                    if not 0 <= k < n:
                        raise ValueError(
                            f"reaction {r} references species {k}, network has {n}")
                    mat[r, k] = c
        for arr in (R, P):
            arr.setflags(write=False)
        net = P - R
        net.setflags(write=False)
        rates = np.array([rxn.rate for rxn in self.reactions], dtype=float)
        rates.setflags(write=False)
        object.__setattr__(self, "_reactant_matrix", R)
        object.__setattr__(self, "_net_matrix", net)
        object.__setattr__(self, "_rates", rates)

    @classmethod
    def from_names(cls, names: Sequence[str], reactions: Sequence[Reaction]):
        return cls(tuple(Species(i, s) for i, s in enumerate(names)), tuple(reactions))

    @property
    def N(self) -> int:
        return len(self.species)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.species]

    def index_of(self, name: str) -> int:
        for s in self.species:
            if s.name == name:
                return s.index
        raise KeyError(f"unknown species {name!r}")

    @property
    def reactant_matrix(self) -> np.ndarray:
        """Reactant stoichiometry, shape (reactions, species)."""
        return self._reactant_matrix

    @property
    def net_stoichiometry(self) -> np.ndarray:
        """Products minus reactants, shape (reactions, species)."""
        return self._net_matrix

    @property
    def rates(self) -> np.ndarray:
        return self._rates


def _as_state(net: ReactionNetwork, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (net.N,):
        raise ValueError(f"state has shape {v.shape}, network has N={net.N}")
    if np.any(v < 0):
        logger.debug("evaluating kinetics at a state with negative entries: %s", v)
    return v


def reaction_rates(net: ReactionNetwork, v) -> np.ndarray:
    """Mass-action rate of every reaction at ``v``."""
    v = _as_state(net, v)
    return net.rates * np.prod(v[None, :] ** net.reactant_matrix, axis=1)


def eval_kinetics(net: ReactionNetwork, v) -> np.ndarray:
    """Evaluate ``g(v)`` for a mass-action network."""
    return net.net_stoichiometry.T @ reaction_rates(net, v)


def eval_jacobian(net: ReactionNetwork, v) -> np.ndarray:
    """Exact Jacobian ``dg/dv`` at ``v``.

    Each monomial is differentiated analytically; species absent from a
    reaction's reactants contribute exact zeros.
    """
    v = _as_state(net, v)
    n = net.N
    J = np.zeros((n, n))
    R = net.reactant_matrix
    for r in range(R.shape[0]):
        k = net.rates[r]
        if k == 0.0:
            continue
        stoich = net.net_stoichiometry[r]
        for l in np.flatnonzero(R[r]):
            # d/dv_l of k * prod_j v_j^R_j
            dmono = k * R[r, l] * v[l] ** (R[r, l] - 1)
            for j in np.flatnonzero(R[r]):
                if j != l:
                    dmono *= v[j] ** R[r, j]
            J[:, l] += stoich * dmono
    return J


@dataclass(frozen=True)
class Interval:
    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise ModelValidationError(f"interval length must be positive, got {self.L}")

    kind = "interval"

    @property
    def lengths(self) -> tuple[float, ...]:
        return (self.L,)


@dataclass(frozen=True)
class Rectangle:
    Lx: float
    Ly: float

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ModelValidationError(
                f"rectangle sides must be positive, got {self.Lx}, {self.Ly}")

    kind = "rectangle"

    @property
    def lengths(self) -> tuple[float, ...]:
        return (self.Lx, self.Ly)


DomainSpec = Interval | Rectangle


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of the chemotaxis system coupled to a reaction network.

    Species density ``u`` obeys ``u_t = div(D grad u - chi u grad v_c)``
    and the chemicals ``v_t = D_tilde lap v + alpha u + g(v)``, where
    ``c`` is ``chemoattractant_index`` (the last species by default).

    Construction only checks shapes.  Use :func:`validate_model` to
    enforce the positivity invariants; :func:`ksinstab.parser.parse_model`
    always does.
    """

    network: ReactionNetwork
    alpha: np.ndarray
    chi: float
    D: float
    D_tilde: np.ndarray
    domain: DomainSpec
    chemoattractant_index: int | None = None

    def __post_init__(self):
        n = self.network.N
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        d_tilde = np.array(self.D_tilde, dtype=float).reshape(-1)
        if alpha.shape != (n,):
            raise ModelValidationError(f"alpha has length {alpha.size}, expected {n}")
        if d_tilde.shape != (n,):
            raise ModelValidationError(f"D_tilde has length {d_tilde.size}, expected {n}")
        alpha.setflags(write=False)
        d_tilde.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "D_tilde", d_tilde)
        object.__setattr__(self, "chi", float(self.chi))
        object.__setattr__(self, "D", float(self.D))
        c = self.chemoattractant_index
        if c is None:
            c = n - 1
        if n and not 0 <= c < n:
            raise ModelValidationError(f"chemoattractant index {c} outside 0..{n - 1}")
        object.__setattr__(self, "chemoattractant_index", int(c))

    @property
    def N(self) -> int:
        return self.network.N

    def replace(self, **changes) -> "ModelSpec":
        """Copy with some fields changed (``alpha``/``chi`` sweeps)."""
        fields = dict(network=self.network, alpha=self.alpha, chi=self.chi, D=self.D,
                      D_tilde=self.D_tilde, domain=self.domain,
                      chemoattractant_index=self.chemoattractant_index)
        fields.update(changes)
        return ModelSpec(**fields)


def validate_model(model: ModelSpec) -> ModelSpec:
    """Raise :class:`ModelValidationError` naming the first violated invariant."""
    if model.N == 0:
        raise ModelValidationError("network has no species")
    a = model.alpha
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ModelValidationError("alpha has a negative or non-finite entry")
    if not np.any(a > 0):
        raise ModelValidationError("alpha has no positive entry")
    if not (np.isfinite(model.chi) and model.chi > 0):
        raise ModelValidationError(f"chi must be positive, got {model.chi}")
    if not (np.isfinite(model.D) and model.D > 0):
        raise ModelValidationError(f"D must be positive, got {model.D}")
    if not np.all(np.isfinite(model.D_tilde)) or np.any(model.D_tilde <= 0):
        raise ModelValidationError("D_tilde has a non-positive entry")
    return model
