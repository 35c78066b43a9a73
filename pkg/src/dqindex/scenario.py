"""JSON scenario files: model, connection, star product, named inputs and suites.

Series literals use the expression grammar of :mod:`dqindex.weyl`.  Errors
carry a JSON path so a bad literal can be found without counting brackets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .index import _check_idempotent
from .matrix import MatrixSeries
from .poisson import Polyvector
from .weyl import FormalSeries, ModelConfig, ParseError

SUITES = ("weyl", "fedosov", "poisson", "hochschild", "star", "dgla", "index")
_MODEL_KEYS = {"kind", "d", "Y_max", "H_max", "T_max", "N", "X_max", "K_max", "W_max"}
_TOP_KEYS = {"name", "model", "connection", "star", "poisson", "inputs", "idempotents",
             "suites", "seed", "samples"}


class ScenarioError(ValueError):
    """A scenario violates a named invariant or cannot be parsed."""

    def __init__(self, message: str, *, path: str = "", line: int | None = None,
                 column: int | None = None, token: str | None = None):
        where = f"{path}: " if path else ""
        pos = ""
        if line is not None:
            pos = f" (line {line}, column {column}" + (f", token {token!r})" if token else ")")
        super().__init__(f"{where}{message}{pos}")
        self.path = path
        self.line = line
        self.column = column
        self.token = token


@dataclass
class Scenario:
    name: str
    model: ModelConfig
    christoffel: list | None = None
    gamma_E: list | None = None
    star_kind: str = "moyal"
    star_pi: Polyvector | None = None
    poisson_pi: Polyvector | None = None
    hp_dim: int | None = None
    inputs: dict[str, Any] = field(default_factory=dict)
    idempotents: list[str] = field(default_factory=list)
    suites: list[str] = field(default_factory=list)
    seed: int = 0
    samples: int = 20

    def environment(self) -> dict:
        m = self.model
        cut = {k: getattr(m, k) for k in sorted(_MODEL_KEYS - {"kind", "d"})
               if getattr(m, k) is not None}
        return {"scenario": self.name, "kind": m.kind, "d": m.d, "cutoffs": cut,
                "seed": self.seed, "samples": self.samples,
                "star": self.star_kind + " (pi = h*pi1, Weyl-symmetric normalization)"}


def _parse(model: ModelConfig, text, path: str) -> FormalSeries:
    if isinstance(text, bool) or not isinstance(text, (str, int)):
        raise ScenarioError("expected an expression string", path=path)
    try:
        return model.parse(str(text))
    except ParseError as e:
        msg = str(e).split(" at line")[0]
        raise ScenarioError(msg, path=path, line=e.line, column=e.column, token=e.token) from None
    except ValueError as e:
        raise ScenarioError(str(e), path=path) from None


def _matrix(model: ModelConfig, rows, path: str) -> MatrixSeries:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ScenarioError("expected a non-empty list of rows", path=path)
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ScenarioError("matrix must be square", path=path)
    return MatrixSeries(model, [[_parse(model, e, f"{path}[{i}][{j}]") for j, e in enumerate(r)]
                                for i, r in enumerate(rows)])


def _bivector(model: ModelConfig, rows, path: str) -> Polyvector:
    d = model.d
    if not isinstance(rows, list) or len(rows) != d or any(
            not isinstance(r, list) or len(r) != d for r in rows):
        raise ScenarioError(f"pi must be a {d}x{d} array", path=path)
    P = [[_parse(model, e, f"{path}[{i}][{j}]") for j, e in enumerate(r)]
         for i, r in enumerate(rows)]
    comps = {}
    for i in range(d):
        for j in range(d):
            if P[i][j] != -P[j][i]:
                raise ScenarioError("pi must be antisymmetric", path=f"{path}[{i}][{j}]")
            if i < j and not P[i][j].is_zero():
                comps[(i, j)] = P[i][j]
    return Polyvector.from_components(model, comps)


def _int(v, path: str, lo: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ScenarioError(f"expected an integer >= {lo}", path=path)
    return v


def from_dict(raw: dict, name: str = "scenario") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("top level must be an object")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ScenarioError(f"unknown keys {sorted(extra)}")
    mraw = raw.get("model")
    if not isinstance(mraw, dict):
        raise ScenarioError("missing model block", path="model")
    extra = set(mraw) - _MODEL_KEYS
    if extra:
        raise ScenarioError(f"unknown keys {sorted(extra)}", path="model")
    try:
        model = ModelConfig(**mraw)
    except (TypeError, ValueError) as e:
        raise ScenarioError(str(e), path="model") from None
    d = model.d
    sc = Scenario(raw.get("name", name), model)
    sc.seed = _int(raw.get("seed", 0), "seed")
    sc.samples = _int(raw.get("samples", 20), "samples", 1)

    conn = raw.get("connection") or {}
    if "christoffel" in conn:
        ch = conn["christoffel"]
        if not (isinstance(ch, list) and len(ch) == d and all(
                isinstance(a, list) and len(a) == d and all(
                    isinstance(b, list) and len(b) == d for b in a) for a in ch)):
            raise ScenarioError(f"christoffel must be a {d}x{d}x{d} array",
                                path="connection.christoffel")
        sc.christoffel = [[[_parse(model, ch[k][i][j], f"connection.christoffel[{k}][{i}][{j}]")
                            for j in range(d)] for i in range(d)] for k in range(d)]
    if "gamma_E" in conn:
        ge = conn["gamma_E"]
        if not isinstance(ge, list) or len(ge) != d:
            raise ScenarioError(f"gamma_E must list {d} matrices", path="connection.gamma_E")
        sc.gamma_E = [_matrix(model, m, f"connection.gamma_E[{i}]") for i, m in enumerate(ge)]
        if len({m.N for m in sc.gamma_E}) != 1:
            raise ScenarioError("gamma_E matrices differ in size", path="connection.gamma_E")

    star = raw.get("star")
    if star is not None:
        sc.star_kind = star.get("kind", "moyal")
        if sc.star_kind != "moyal":
            raise ScenarioError(f"unsupported star product {sc.star_kind!r}", path="star.kind")
        if "pi" in star:
            sc.star_pi = _bivector(model, star["pi"], "star.pi")
    pois = raw.get("poisson")
    if pois is not None:
        if "pi" in pois:
            sc.poisson_pi = _bivector(model, pois["pi"], "poisson.pi")
        if "hp_dim" in pois:
            sc.hp_dim = _int(pois["hp_dim"], "poisson.hp_dim")

    inputs = raw.get("inputs", {})
    if not isinstance(inputs, dict):
        raise ScenarioError("inputs must be an object", path="inputs")
    for key in sorted(inputs):
        v = inputs[key]
        path = f"inputs.{key}"
        sc.inputs[key] = _matrix(model, v, path) if isinstance(v, list) else _parse(model, v, path)

    idem = raw.get("idempotents", [])
    if not isinstance(idem, list):
        raise ScenarioError("idempotents must be a list of input names", path="idempotents")
    for i, key in enumerate(idem):
        if key not in sc.inputs:
            raise ScenarioError(f"undefined input {key!r}", path=f"idempotents[{i}]")
        if not isinstance(sc.inputs[key], MatrixSeries):
            raise ScenarioError(f"input {key!r} is not a matrix", path=f"idempotents[{i}]")
        try:
            _check_idempotent(sc.inputs[key])
        except ValueError as e:
            raise ScenarioError(f"input {key!r}: {e}", path=f"idempotents[{i}]") from None
    sc.idempotents = list(idem)

    suites = raw.get("suites", [])
    if not isinstance(suites, list):
        raise ScenarioError("suites must be a list", path="suites")
    for i, s in enumerate(suites):
        if s not in SUITES:
            raise ScenarioError(f"unknown suite {s!r}", path=f"suites[{i}]")
    sc.suites = list(dict.fromkeys(suites))
    validate(sc)
    return sc


def validate(sc: Scenario, suites=None) -> None:
    """Cross-field invariants for the suites that will actually run."""
    suites = sc.suites if suites is None else suites
    m = sc.model
    if "star" in suites and sc.idempotents and m.T_max < m.H_max:
        raise ScenarioError(f"idempotent paths need T_max >= H_max (got {m.T_max} < {m.H_max})",
                            path="model.T_max")
    if "index" in suites:
        if not sc.idempotents:
            raise ScenarioError("the index suite needs at least one idempotent",
                                path="idempotents")
        if sc.christoffel is not None and any(
                not e.is_zero() for a in sc.christoffel for b in a for e in b):
            raise ScenarioError("the index suite needs a flat connection",
                                path="connection.christoffel")
    if sc.hp_dim is not None and sc.poisson_pi is None and sc.star_pi is None:
        raise ScenarioError("hp_dim given without a bivector", path="poisson.hp_dim")


def load(path: str | Path) -> Scenario:
    p = Path(path)
    text = p.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        tok = text[e.pos:e.pos + 1] if e.pos < len(text) else "<end>"
        raise ScenarioError(e.msg, path=p.name, line=e.lineno, column=e.colno, token=tok) from None
    return from_dict(raw, p.stem)


def bundled(name: str) -> Path:
    """Path of a bundled scenario (``flat_plane``, ``torus``, ``curved_plane``)."""
    p = Path(__file__).with_name("scenarios") / f"{name}.json"
    if not p.exists():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return p
