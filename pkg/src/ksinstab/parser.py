"""Text formats: the reaction-network DSL and YAML model files.

Network DSL, one reaction statement per line, ``#`` starts a comment::

    2 v1 <-> v2 @ 1.0, 0.5     # forward, backward
    v1 -> 0 @ 1.0              # decay
    0 -> v1 @ 0.1              # constant source

Species are created on first use and indexed in order of appearance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .network import (MAX_STOICHIOMETRY, Interval, ModelSpec, ModelValidationError,
                      Reaction, ReactionNetwork, Rectangle, Species, validate_model)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9]+")
_NUMBER = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")

MODEL_KEYS = {"crn", "alpha", "chi", "D", "D_tilde", "domain", "chemoattractant",
              "description"}


class ParseError(ValueError):
    """Malformed input.  ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int = 1, column: int = 1, snippet: str = ""):
        self.message = message
        self.line = line
        self.column = column
        self.snippet = snippet
        super().__init__(f"line {line}, column {column}: {message}"
                         + (f"\n  {snippet}" if snippet else ""))


class _LineScanner:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def error(self, message: str, pos: int | None = None) -> ParseError:
        pos = self.pos if pos is None else pos
        return ParseError(message, self.lineno, pos + 1, self.text)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\f\v":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self, literal: str) -> bool:
        self.skip_ws()
        return self.text.startswith(literal, self.pos)

    def accept(self, literal: str) -> bool:
        if self.peek(literal):
            self.pos += len(literal)
            return True
        return False

    def match(self, pattern: re.Pattern) -> str | None:
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if m is None:
            return None
        self.pos = m.end()
        return m.group(0)


def _parse_side(sc: _LineScanner, species: dict[str, int]) -> dict[int, int]:
    start = sc.pos
    sc.skip_ws()
    if sc.peek("0"):
        save = sc.pos
        sc.pos += 1
        # "0" alone is the empty complex; "0 x" would be a zero coefficient
        sc.skip_ws()
        if sc.pos >= len(sc.text) or sc.text[sc.pos] in "-<@#":
            return {}
        sc.pos = save
    stoich: dict[int, int] = {}
    while True:
        sc.skip_ws()
        term_pos = sc.pos
        coeff_text = sc.match(_INT)
        coeff = 1
        if coeff_text is not None:
            coeff = int(coeff_text)
            if coeff < 1 or coeff > MAX_STOICHIOMETRY:
                raise sc.error(
                    f"stoichiometric coefficient must be in 1..{MAX_STOICHIOMETRY}",
                    term_pos)
        sc.skip_ws()
        name_pos = sc.pos
        name = sc.match(_IDENT)
        if name is None:
            raise sc.error("expected a species name", name_pos)
        idx = species.setdefault(name, len(species))
        stoich[idx] = stoich.get(idx, 0) + coeff
        if stoich[idx] > MAX_STOICHIOMETRY:
            raise sc.error(f"total coefficient of {name} exceeds {MAX_STOICHIOMETRY}",
                           term_pos)
        if not sc.accept("+"):
            break
    if not stoich:
        raise sc.error("empty reaction side", start)
    return stoich


def _parse_rate(sc: _LineScanner) -> float:
    sc.skip_ws()
    pos = sc.pos
    text = sc.match(_NUMBER)
    if text is None:
        raise sc.error("expected a numeric rate constant", pos)
    value = float(text)
    if not np.isfinite(value):
        raise sc.error("rate constant is not finite", pos)
    if value < 0:
        raise sc.error("rate constant must be nonnegative", pos)
    return value


def _parse_statement(sc: _LineScanner, species: dict[str, int]) -> list[Reaction]:
    lhs = _parse_side(sc, species)
    arrow_pos = sc.pos
    if sc.accept("<->"):
        reversible = True
    elif sc.accept("->"):
        reversible = False
    else:
        sc.skip_ws()
        raise sc.error("expected '->' or '<->'", sc.pos if sc.pos > arrow_pos else arrow_pos)
    rhs = _parse_side(sc, species)
    if not lhs and not rhs:
        raise sc.error("reaction with empty complexes on both sides", 0)
    if not sc.accept("@"):
        raise sc.error("expected '@' followed by rate constant(s)")
    rates = [_parse_rate(sc)]
    if sc.accept(","):
        rates.append(_parse_rate(sc))
    if sc.peek("@"):
        raise sc.error("duplicate '@' clause")
    if not sc.at_end():
        raise sc.error(f"unexpected text {sc.text[sc.pos:].strip()!r}")
    if reversible and len(rates) != 2:
        raise sc.error("'<->' needs two rate constants (forward, backward)")
    if not reversible and len(rates) != 1:
        raise sc.error("'->' takes exactly one rate constant")
    reactions = [Reaction(lhs, rhs, rates[0])]
    if reversible:
        reactions.append(Reaction(rhs, lhs, rates[1]))
    return reactions


def parse_crn(text: str) -> ReactionNetwork:
    """Parse the line-oriented network DSL into a :class:`ReactionNetwork`."""
    species: dict[str, int] = {}
    reactions: list[Reaction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        sc = _LineScanner(line, lineno)
        reactions.extend(_parse_statement(sc, species))
    names = sorted(species, key=species.__getitem__)
    return ReactionNetwork(tuple(Species(i, s) for i, s in enumerate(names)),
                           tuple(reactions))


def parse_crn_bytes(data: bytes) -> ReactionNetwork:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        prefix = data[:exc.start]
        line = prefix.count(b"\n") + 1
        column = exc.start - (prefix.rfind(b"\n") + 1) + 1
        raise ParseError("input is not valid UTF-8", line, column) from None
    return parse_crn(text)


def _format_side(stoich, names) -> str:
    if not stoich:
        return "0"
    return " + ".join(name if c == 1 else f"{c} {name}"
                      for name, c in ((names[k], c) for k, c in stoich.items()))


def format_crn(net: ReactionNetwork) -> str:
    """Serialize a network to the DSL, one irreversible reaction per line.

    Reparsing the output gives the same species order and reactions.
    """
    names = net.names
    lines = [f"{_format_side(r.reactants, names)} -> {_format_side(r.products, names)}"
             f" @ {r.rate!r}" for r in net.reactions]
    return "\n".join(lines) + ("\n" if lines else "")


def _yaml_position(exc: yaml.YAMLError) -> tuple[int, int, str]:
    mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
    if mark is None:
        return 1, 1, ""
    snippet = ""
    if mark.buffer is not None:
        lines = str(mark.buffer).rstrip("\0").splitlines()
        if 0 <= mark.line < len(lines):
            snippet = lines[mark.line]
    return mark.line + 1, mark.column + 1, snippet


def _number(doc, key) -> float:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelValidationError(f"{key} must be a number, got {value!r}")
    return float(value)


def _vector(doc, key, n) -> np.ndarray:
    value = doc[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool) and n == 1:
        value = [value]
    if not isinstance(value, list) or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
        raise ModelValidationError(f"{key} must be an array of numbers, got {value!r}")
    if len(value) != n:
        raise ModelValidationError(f"{key} has length {len(value)}, network has {n} species")
    return np.array(value, dtype=float)


def _domain(value):
    if not isinstance(value, dict) or "kind" not in value:
        raise ModelValidationError("domain must be a mapping with a 'kind' key")
    kind = value["kind"]
    extra = set(value) - {"kind", "L", "Lx", "Ly"}
    if extra:
        raise ModelValidationError(f"unknown domain keys: {sorted(extra)}")
    try:
        if kind == "interval":
            return Interval(_number(value, "L"))
        if kind == "rectangle":
            return Rectangle(_number(value, "Lx"), _number(value, "Ly"))
    except KeyError as exc:
        raise ModelValidationError(f"domain of kind {kind!r} needs key {exc}") from None
    raise ModelValidationError(f"domain kind must be 'interval' or 'rectangle', got {kind!r}")


def parse_model(text: str, base_dir: str | Path | None = None) -> ModelSpec:
    """Parse a YAML model document into a validated :class:`ModelSpec`.

    ``crn`` is either an inline network (anything containing ``->``) or a
    path to a ``.crn`` file, resolved against ``base_dir``.  Numbers such
    as ``pi`` are not evaluated; write them out.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line, col, snippet = _yaml_position(exc)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"malformed model document: {problem}", line, col, snippet) from None
    if not isinstance(doc, dict):
        raise ParseError("model document must be a mapping of keys to values")
    unknown = set(doc) - MODEL_KEYS
    if unknown:
        raise ModelValidationError(f"unknown model keys: {sorted(map(str, unknown))}")
    missing = {"crn", "alpha", "chi", "D", "D_tilde", "domain"} - set(doc)
    if missing:
        raise ModelValidationError(f"missing model keys: {sorted(missing)}")

    crn = doc["crn"]
    if not isinstance(crn, str):
        raise ModelValidationError("crn must be a string (inline network or file path)")
    if "->" in crn:
        try:
            net = parse_crn(crn)
        except ParseError as exc:
            raise ParseError(f"in crn: {exc.message}", exc.line, exc.column,
                             exc.snippet) from None
    else:
        path = Path(crn)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ModelValidationError(f"cannot read crn file {str(path)!r}: {exc.strerror}") from None
        net = parse_crn_bytes(data)

    n = net.N
    if n == 0:
        raise ModelValidationError("network has no species")
    chemo = doc.get("chemoattractant")
    if chemo is None:
        chemo_index = n - 1
    else:
        try:
            chemo_index = net.index_of(str(chemo))
        except KeyError:
            raise ModelValidationError(f"chemoattractant {chemo!r} is not a species "
                                       f"of the network {net.names}") from None
    model = ModelSpec(
        network=net,
        alpha=_vector(doc, "alpha", n),
        chi=_number(doc, "chi"),
        D=_number(doc, "D"),
        D_tilde=_vector(doc, "D_tilde", n),
        domain=_domain(doc["domain"]),
        chemoattractant_index=chemo_index,
    )
    return validate_model(model)


def load_model(path: str | Path) -> ModelSpec:
    path = Path(path)
    data = path.read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError("model file is not valid UTF-8") from None
    return parse_model(text, base_dir=path.parent)


def bundled_model_path(name: str) -> Path:
    """Path of a model shipped with the package, e.g. ``"minimal_ks"``."""
    if not name.endswith(".model"):
        name += ".model"
    path = Path(__file__).parent / "models" / name
    if not path.exists():
        raise FileNotFoundError(f"no bundled model {name!r}")
    return path


def bundled_models() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "models").glob("*.model"))
