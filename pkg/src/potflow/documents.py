"""JSON document formats: parsing, validation, and report writing.

This module (with the command line on top of it) is the only part of
the package touching the filesystem. Documents are validated against
the shipped JSON schemas; unknown fields are rejected in strict mode
and logged in lenient mode. Reports serialize with sorted keys and
full-precision floats, so identical results write byte-identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from . import elements
from .errors import ParseError, SchemaError, ValidationError, WriteError
from .network import (
    EdgeObjective,
    EdgeSpec,
    Network,
    NodeObjective,
    NodeSpec,
    validate_network,
)
from .stability import (
    ControlSpec,
    ControlVector,
    ParameterSpec,
    ParameterTarget,
)

log = logging.getLogger("potflow.io")

SCHEMA_VERSION = "1"

_MODEL_FACTORIES = {
    "linear_resistor": elements.linear_resistor,
    "quadratic_pipe": elements.quadratic_pipe,
    "ratio_machine": elements.ratio_machine,
}


def _load_schema(name: str) -> dict:
    text = resources.files("potflow.schema").joinpath(name).read_text()
    return json.loads(text)


def _read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ParseError(f"{path}: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(
            f"{path}: invalid JSON at line {err.lineno} column {err.colno} "
            f"(byte offset {err.pos}): {err.msg}") from err


def _check_schema(doc: Any, schema: dict, path: str | Path) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise SchemaError(f"{path}: {where}: {err.message}")


def _unknown_fields(doc: Any, schema: dict, root_schema: dict, where: str = "$"):
    """Yield json paths of fields the schema does not declare."""
    while "$ref" in schema:
        ref = schema["$ref"].split("/")[-1]
        schema = root_schema["$defs"][ref]
    if isinstance(doc, dict) and "properties" in schema:
        props = schema["properties"]
        extra_ok = schema.get("additionalProperties")
        for key, value in doc.items():
            if key in props:
                yield from _unknown_fields(value, props[key], root_schema,
                                           f"{where}.{key}")
            elif isinstance(extra_ok, dict):
                yield from _unknown_fields(value, extra_ok, root_schema,
                                           f"{where}.{key}")
            elif extra_ok is None:
                yield f"{where}.{key}"
    elif isinstance(doc, list) and isinstance(schema.get("items"), dict):
        for i, item in enumerate(doc):
            yield from _unknown_fields(item, schema["items"], root_schema,
                                       f"{where}[{i}]")


def _enforce_strictness(doc: Any, schema: dict, path: str | Path, strict: bool) -> None:
    unknown = list(_unknown_fields(doc, schema, schema))
    if not unknown:
        return
    if strict:
        raise SchemaError(f"{path}: unknown field(s): {', '.join(unknown)}")
    for field_path in unknown:
        log.warning("%s: ignoring unknown field %s", path, field_path)


def network_from_document(doc: Mapping, path: str | Path = "<document>") -> Network:
    nodes = []
    for nd in doc["nodes"]:
        cost = nd.get("cost", {})
        nodes.append(NodeSpec(
            id=nd["id"],
            intensity_lo=float(nd["intensity"][0]),
            intensity_hi=float(nd["intensity"][1]),
            potential_lo=float(nd["potential"][0]),
            potential_hi=float(nd["potential"][1]),
            cost=NodeObjective(float(cost.get("intensity_coeff", 0.0)),
                               float(cost.get("potential_coeff", 0.0))),
        ))
    edges = []
    for ed in doc["edges"]:
        models = []
        for i, md in enumerate(ed["models"]):
            factory = _MODEL_FACTORIES[md["kind"]]
            coeffs = [float(c) for c in md.get("coefficients", [])]
            envelope = None
            if "envelope" in md:
                envelope = elements.OperatingEnvelope(
                    tuple((float(p[0]), float(p[1])) for p in md["envelope"]))
            try:
                models.append(factory(*coeffs, cost=float(md.get("cost", 0.0)),
                                      envelope=envelope))
            except (TypeError, ValueError) as err:
                raise SchemaError(
                    f"{path}: $.edges[{ed['id']}].models[{i}]: {err}") from err
        bounds = [(float(b[0]), float(b[1])) for b in ed.get("param_bounds", [])]
        side = tuple(
            elements.SideConstraint(sc["kind"], float(sc["lo"]), float(sc["hi"]))
            for sc in ed.get("side_constraints", []))
        cost = ed.get("cost", {})
        edges.append(EdgeSpec(
            id=ed["id"], from_node=ed["from"], to_node=ed["to"],
            models=tuple(models),
            continuous_lo=tuple(b[0] for b in bounds),
            continuous_hi=tuple(b[1] for b in bounds),
            side_constraints=side,
            cost=EdgeObjective(float(cost.get("constant", 0.0)),
                               float(cost.get("flow_coeff", 0.0)),
                               float(cost.get("param_coeff", 0.0))),
        ))
    return Network(tuple(nodes), tuple(edges), doc["root"])


def network_to_document(net: Network) -> dict:
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "root": net.root}
    doc["nodes"] = [
        {
            "id": n.id,
            "intensity": [n.intensity_lo, n.intensity_hi],
            "potential": [n.potential_lo, n.potential_hi],
            "cost": {"intensity_coeff": n.cost.intensity_coeff,
                     "potential_coeff": n.cost.potential_coeff},
        }
        for n in net.nodes
    ]
    doc["edges"] = []
    for e in net.edges:
        models = []
        for m in e.models:
            md: dict[str, Any] = {"kind": m.kind,
                                  "coefficients": list(m.coefficients),
                                  "cost": m.cost}
            if m.envelope is not None:
                md["envelope"] = [list(v) for v in m.envelope.polygon]
            models.append(md)
        doc["edges"].append({
            "id": e.id, "from": e.from_node, "to": e.to_node,
            "models": models,
            "param_bounds": [[lo, hi] for lo, hi in
                             zip(e.continuous_lo, e.continuous_hi)],
            "side_constraints": [
                {"kind": sc.kind, "lo": sc.lo, "hi": sc.hi}
                for sc in e.side_constraints],
            "cost": {"constant": e.cost.constant,
                     "flow_coeff": e.cost.flow_coeff,
                     "param_coeff": e.cost.param_coeff},
        })
    return doc


def load_network(path: str | Path, strict: bool = True) -> Network:
    """Parse, schema-check, and structurally validate a network document.

    Raises:
        ParseError: not valid JSON (message carries the byte offset).
        SchemaError: document shape violates the published schema.
        ValidationError: parsed network breaks a structural invariant.
    """
    doc = _read_json(path)
    schema = _load_schema("network.schema.json")
    _check_schema(doc, schema, path)
    _enforce_strictness(doc, schema, path, strict)
    net = network_from_document(doc, path)
    report = validate_network(net)
    if not report.ok:
        raise ValidationError(f"{path}: " + "; ".join(report.issues))
    return net


@dataclass(frozen=True)
class StabilitySettings:
    parameter: ParameterSpec | None = None
    control: ControlSpec | None = None
    monte_carlo: tuple[tuple[ParameterSpec, ...], int, float] | None = None


@dataclass(frozen=True)
class Scenario:
    """Operating assumptions paired with a network document."""

    intensities: dict[str, float | tuple[float, float]] = field(default_factory=dict)
    root_potential: float | None = None
    choices: dict[str, int] = field(default_factory=dict)
    params: dict[str, tuple[float, ...]] = field(default_factory=dict)
    chord_guesses: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    options: dict[str, Any] = field(default_factory=dict)
    stability: StabilitySettings | None = None

    def fixed_intensities(self) -> dict[str, float]:
        out = {}
        for node, v in self.intensities.items():
            out[node] = 0.5 * (v[0] + v[1]) if isinstance(v, tuple) else v
        return out

    def intensity_bounds(self) -> dict[str, tuple[float, float]]:
        out = {}
        for node, v in self.intensities.items():
            out[node] = v if isinstance(v, tuple) else (v, v)
        return out


def _parameter_from_doc(pd: Mapping) -> ParameterSpec:
    td = pd["target"]
    target = ParameterTarget(
        kind=td["kind"], node=td.get("node"), edge=td.get("edge"),
        model_index=int(td.get("model_index", 1)),
        coeff_index=int(td.get("coeff_index", 0)),
        which=td.get("which", "hi"), scale=float(td.get("scale", 1.0)),
    )
    return ParameterSpec(target, float(pd["base"]), float(pd["radius"]),
                         float(pd.get("tolerance", 1e-4)))


def load_scenario(path: str | Path, net: Network, strict: bool = True) -> Scenario:
    """Parse a scenario document and resolve its references against `net`.

    Raises:
        ParseError, SchemaError: as for network documents; unknown node
            or edge references are schema errors naming the field.
    """
    doc = _read_json(path)
    schema = _load_schema("scenario.schema.json")
    _check_schema(doc, schema, path)
    _enforce_strictness(doc, schema, path, strict)

    intensities: dict[str, float | tuple[float, float]] = {}
    for node, v in doc.get("intensities", {}).items():
        if node not in net.node_by_id:
            raise SchemaError(f"{path}: $.intensities.{node}: unknown node")
        intensities[node] = (float(v[0]), float(v[1])) if isinstance(v, list) else float(v)

    for section in ("choices", "params", "chord_guesses"):
        for eid in doc.get(section, {}):
            if eid not in net.edge_by_id:
                raise SchemaError(f"{path}: $.{section}.{eid}: unknown edge")
    choices = {}
    for eid, d in doc.get("choices", {}).items():
        if d > net.edge_by_id[eid].family_size:
            raise SchemaError(
                f"{path}: $.choices.{eid}: choice {d} exceeds family size")
        choices[eid] = int(d)

    stability = None
    if "stability" in doc:
        sd = doc["stability"]
        parameter = _parameter_from_doc(sd["parameter"]) if "parameter" in sd else None
        control = None
        if "control" in sd:
            cd = sd["control"]
            u0 = ControlVector(
                root_potential=float(cd["root_potential"]),
                params={k: tuple(float(x) for x in v)
                        for k, v in cd.get("params", {}).items()},
                choices={k: int(v) for k, v in cd.get("choices", {}).items()},
            )
            control = ControlSpec(
                u0=u0,
                root_box=tuple(cd["root_box"]) if "root_box" in cd else None,
                param_boxes={k: tuple((float(a), float(b)) for a, b in v)
                             for k, v in cd.get("param_boxes", {}).items()},
                root_weight=float(cd.get("root_weight", 1.0)),
                param_weight=float(cd.get("param_weight", 1.0)),
                eta=float(cd.get("eta", 1.0)),
            )
        monte_carlo = None
        if "monte_carlo" in sd:
            md = sd["monte_carlo"]
            monte_carlo = (
                tuple(_parameter_from_doc(pd) for pd in md["parameters"]),
                int(md.get("samples", 200)),
                float(md.get("threshold", 0.95)),
            )
        stability = StabilitySettings(parameter, control, monte_carlo)

    return Scenario(
        intensities=intensities,
        root_potential=doc.get("root_potential"),
        choices=choices,
        params={k: tuple(float(x) for x in v)
                for k, v in doc.get("params", {}).items()},
        chord_guesses={k: float(v) for k, v in doc.get("chord_guesses", {}).items()},
        seed=int(doc.get("seed", 0)),
        options=dict(doc.get("options", {})),
        stability=stability,
    )


def dumps_report(result: Mapping) -> str:
    """Stable-keyed JSON text; identical results give identical bytes."""
    return json.dumps(result, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(result: Mapping, fmt: str, path: str | Path | None,
                 text: str | None = None) -> None:
    """Write a result as machine-readable JSON or fixed-width text.

    Raises:
        WriteError: the path is not writable.
    """
    payload = dumps_report(result) if fmt == "json" else (text or "")
    if path is None:
        print(payload, end="")
        return
    try:
        Path(path).write_text(payload, encoding="utf-8", newline="\n")
    except OSError as err:
        raise WriteError(f"{path}: {err}") from err
