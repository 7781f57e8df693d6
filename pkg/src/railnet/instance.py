"""Instance documents (JSON) and their mapping onto the domain types."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path as FilePath

import jsonschema

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    Node,
    NodeLink,
    RelationKind,
    Scenario,
    Section,
    TimetableFamily,
    TimingRelation,
    Train,
    as_fraction,
    validate_instance,
)

SCHEMA_VERSION = 1

_ID = {"type": "string", "pattern": "^[A-Za-z][A-Za-z0-9_]*$"}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_AMOUNT = {
    "oneOf": [
        {"type": "number", "minimum": 0},
        {"type": "string", "pattern": r"^[0-9]+(\.[0-9]+|/[1-9][0-9]*)?$"},
    ]
}


def _obj(required: list[str], props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "required": required, "properties": props}


SCHEMA = _obj(
    ["schema_version", "infrastructure", "scenarios"],
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "infrastructure": _obj(
            ["nodes", "sections"],
            {
                "nodes": {
                    "type": "array",
                    "minItems": 1,
                    "items": _obj(
                        ["id"],
                        {"id": _ID, "max_stop_minutes": _NONNEG_INT, "crossing_time_minutes": _NONNEG_INT},
                    ),
                },
                "sections": {
                    "type": "array",
                    "items": _obj(
                        ["from", "to", "length_km", "travel_time_minutes", "headway_minutes", "track_cost"],
                        {
                            "from": _ID,
                            "to": _ID,
                            "length_km": {
                                "oneOf": [
                                    {"type": "number", "exclusiveMinimum": 0},
                                    {"type": "string", "pattern": r"^[0-9]+(\.[0-9]+|/[1-9][0-9]*)?$"},
                                ]
                            },
                            "max_tracks": {"type": "integer", "minimum": 1, "maximum": 4},
                            "travel_time_minutes": {
                                "type": "object",
                                "minProperties": 1,
                                "propertyNames": _ID,
                                "additionalProperties": _POS_INT,
                            },
                            "headway_minutes": {
                                "type": "array",
                                "items": _obj(
                                    ["leading", "following", "minutes"],
                                    {"leading": _ID, "following": _ID, "minutes": _POS_INT},
                                ),
                            },
                            "track_cost": {
                                "type": "object",
                                "minProperties": 1,
                                "propertyNames": {"enum": ["1", "2", "3", "4"]},
                                "additionalProperties": _AMOUNT,
                            },
                            "time_reduction_cost_per_minute": _AMOUNT,
                            "headway_reduction_cost_per_minute": _AMOUNT,
                            "max_time_reduction_minutes": _NONNEG_INT,
                            "max_headway_reduction_minutes": _NONNEG_INT,
                        },
                    ),
                },
                "links": {
                    "type": "array",
                    "items": _obj(["at", "from", "to"], {"at": _ID, "from": _ID, "to": _ID, "cost": _AMOUNT}),
                },
            },
        ),
        "scenarios": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                ["id", "trains"],
                {
                    "id": _ID,
                    "trains": {
                        "type": "array",
                        "items": _obj(
                            [
                                "id",
                                "train_type",
                                "origin",
                                "destination",
                                "earliest_departure_minutes",
                                "latest_arrival_minutes",
                            ],
                            {
                                "id": _ID,
                                "train_type": _ID,
                                "origin": _ID,
                                "destination": _ID,
                                "earliest_departure_minutes": _NONNEG_INT,
                                "latest_arrival_minutes": _POS_INT,
                                "via_nodes": {"type": "array", "items": _ID, "uniqueItems": True},
                                "optional": {"type": "boolean"},
                                "penalty": _AMOUNT,
                            },
                        ),
                    },
                    "relations": {
                        "type": "array",
                        "items": _obj(
                            ["kind", "first_train", "second_train", "at_node", "min_minutes", "max_minutes"],
                            {
                                "kind": {"enum": [k.value for k in RelationKind]},
                                "first_train": _ID,
                                "second_train": _ID,
                                "at_node": _ID,
                                "min_minutes": {"type": "integer"},
                                "max_minutes": {"type": "integer"},
                            },
                        ),
                    },
                },
            ),
        },
        "config": {
            "oneOf": [
                {"enum": ["A", "B", "C"]},
                _obj(
                    [],
                    {
                        "max_tracks_global": {"type": "integer", "minimum": 1, "maximum": 4},
                        "reductions_allowed": {"type": "boolean"},
                        "headway_floor_minutes": _POS_INT,
                        "planning_horizon_end_minutes": _POS_INT,
                        "cross_scenario_headways": {"type": "boolean"},
                        "track_rules": {"type": "boolean"},
                    },
                ),
            ]
        },
        "robust": _obj(
            [],
            {
                "coverage_share": {
                    "oneOf": [
                        {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        {"type": "string", "pattern": r"^[0-9]+(\.[0-9]+|/[1-9][0-9]*)?$"},
                    ]
                },
                "scenarios": {
                    "type": "object",
                    "propertyNames": _ID,
                    "additionalProperties": _obj(
                        [],
                        {
                            "penalty": _AMOUNT,
                            "demanded_optional_count": _NONNEG_INT,
                            "chosen_optional": {"type": "array", "items": _ID, "uniqueItems": True},
                        },
                    ),
                },
            },
        ),
    },
)


class InstanceLoadError(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("invalid instance:\n  " + "\n  ".join(diagnostics))


def _path(err: jsonschema.ValidationError) -> str:
    out = "$"
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _amount(value, default=0):
    if value is None:
        return default
    f = as_fraction(value)
    return f.numerator if f.denominator == 1 else f


def _dump_amount(value):
    f = Fraction(value)
    if f.denominator == 1:
        return f.numerator
    return f"{f.numerator}/{f.denominator}"


def _cross_checks(doc: dict) -> list[str]:
    """Rules a JSON schema cannot express: every section covers every used train type."""
    out = []
    used = sorted({t["train_type"] for sc in doc["scenarios"] for t in sc["trains"]})
    for n, sec in enumerate(doc["infrastructure"]["sections"]):
        where = f"$.infrastructure.sections[{n}]"
        for tt in used:
            if tt not in sec["travel_time_minutes"]:
                out.append(f"{where}.travel_time_minutes: missing travel time for train type {tt!r}")
        pairs = {(h["leading"], h["following"]) for h in sec["headway_minutes"]}
        for lead in used:
            for follow in used:
                if (lead, follow) not in pairs:
                    out.append(f"{where}.headway_minutes: missing headway for {lead!r} followed by {follow!r}")
    return out


def instance_from_document(
    doc: dict, *, strict: bool = True
) -> tuple[InfrastructureSpec, TimetableFamily, BuildConfig]:
    """Schema-check and convert; ``strict`` also rejects instances with invariant diagnostics."""
    if isinstance(doc, dict) and doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InstanceLoadError([f"$.schema_version: unsupported version {doc.get('schema_version')!r}"])
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise InstanceLoadError([f"{_path(e)}: {e.message}" for e in errors])
    cross = _cross_checks(doc)
    if cross:
        raise InstanceLoadError(cross)

    infra = doc["infrastructure"]
    nodes = tuple(
        Node(n["id"], n.get("max_stop_minutes", 0), n.get("crossing_time_minutes", 0)) for n in infra["nodes"]
    )
    sections = tuple(
        Section(
            endpoints=(s["from"], s["to"]),
            length_km=as_fraction(s["length_km"]),
            max_tracks=s.get("max_tracks", 1),
            travel_time=dict(s["travel_time_minutes"]),
            base_headway={(h["leading"], h["following"]): h["minutes"] for h in s["headway_minutes"]},
            track_cost={int(k): _amount(v) for k, v in s["track_cost"].items()},
            time_reduction_cost=_amount(s.get("time_reduction_cost_per_minute")),
            headway_reduction_cost=_amount(s.get("headway_reduction_cost_per_minute")),
            max_time_reduction=s.get("max_time_reduction_minutes"),
            max_headway_reduction=s.get("max_headway_reduction_minutes"),
        )
        for s in infra["sections"]
    )
    links = tuple(NodeLink(l["at"], l["from"], l["to"], _amount(l.get("cost"))) for l in infra.get("links", []))
    spec = InfrastructureSpec(nodes, sections, links)

    robust = doc.get("robust", {})
    extra = robust.get("scenarios", {})
    scenarios = []
    for sc in doc["scenarios"]:
        trains = tuple(
            Train(
                id=t["id"],
                train_type=t["train_type"],
                origin=t["origin"],
                destination=t["destination"],
                earliest_departure=t["earliest_departure_minutes"],
                latest_arrival=t["latest_arrival_minutes"],
                via_nodes=frozenset(t.get("via_nodes", [])),
                optional=t.get("optional", False),
                penalty=_amount(t.get("penalty")),
            )
            for t in sc["trains"]
        )
        relations = tuple(
            TimingRelation(
                RelationKind(r["kind"]), r["first_train"], r["second_train"], r["at_node"], r["min_minutes"], r["max_minutes"]
            )
            for r in sc.get("relations", [])
        )
        ex = extra.get(sc["id"], {})
        scenarios.append(
            Scenario(
                sc["id"],
                trains,
                relations,
                penalty=_amount(ex.get("penalty")),
                demanded_optional=ex.get("demanded_optional_count", 0),
                chosen_optional=frozenset(ex.get("chosen_optional", [])),
            )
        )
    unknown = sorted(set(extra) - {sc.id for sc in scenarios})
    if unknown:
        raise InstanceLoadError([f"$.robust.scenarios: unknown scenario {u!r}" for u in unknown])
    family = TimetableFamily(tuple(scenarios), as_fraction(robust.get("coverage_share", 1)))

    cfg = doc.get("config", "B")
    config = BuildConfig.preset(cfg) if isinstance(cfg, str) else BuildConfig(**cfg)

    if strict:
        diags = validate_instance(spec, family, config)
        if diags:
            raise InstanceLoadError([str(d) for d in diags])
    return spec, family, config


def _config_document(config: BuildConfig):
    for name in ("A", "B", "C"):
        if BuildConfig.preset(name) == config:
            return name
    return {
        "max_tracks_global": config.max_tracks_global,
        "reductions_allowed": config.reductions_allowed,
        "headway_floor_minutes": config.headway_floor_minutes,
        **(
            {"planning_horizon_end_minutes": config.planning_horizon_end_minutes}
            if config.planning_horizon_end_minutes
            else {}
        ),
        "cross_scenario_headways": config.cross_scenario_headways,
        "track_rules": config.track_rules,
    }


def document_from_instance(spec: InfrastructureSpec, family: TimetableFamily, config: BuildConfig) -> dict:
    sections = []
    for s in spec.sections:
        sections.append(
            {
                "from": s.key[0],
                "to": s.key[1],
                "length_km": _dump_amount(s.length_km),
                "max_tracks": s.max_tracks,
                "travel_time_minutes": dict(sorted(s.travel_time.items())),
                "headway_minutes": [
                    {"leading": a, "following": b, "minutes": m} for (a, b), m in sorted(s.base_headway.items())
                ],
                "track_cost": {str(k): _dump_amount(v) for k, v in sorted(s.track_cost.items())},
                "time_reduction_cost_per_minute": _dump_amount(s.time_reduction_cost),
                "headway_reduction_cost_per_minute": _dump_amount(s.headway_reduction_cost),
                "max_time_reduction_minutes": s.max_time_reduction,
                "max_headway_reduction_minutes": s.max_headway_reduction,
            }
        )
    robust_sc = {}
    for sc in family.scenarios:
        entry = {}
        if sc.penalty:
            entry["penalty"] = _dump_amount(sc.penalty)
        if sc.demanded_optional:
            entry["demanded_optional_count"] = sc.demanded_optional
        if sc.chosen_optional:
            entry["chosen_optional"] = sorted(sc.chosen_optional)
        if entry:
            robust_sc[sc.id] = entry
    robust: dict = {"coverage_share": _dump_amount(family.coverage_share)}
    if robust_sc:
        robust["scenarios"] = robust_sc
    return {
        "schema_version": SCHEMA_VERSION,
        "infrastructure": {
            "nodes": [
                {"id": n.id, "max_stop_minutes": n.max_stop_minutes, "crossing_time_minutes": n.crossing_time_minutes}
                for n in spec.nodes
            ],
            "sections": sections,
            "links": [{"at": l.at, "from": l.a, "to": l.b, "cost": _dump_amount(l.cost)} for l in spec.links],
        },
        "scenarios": [
            {
                "id": sc.id,
                "trains": [
                    {
                        "id": t.id,
                        "train_type": t.train_type,
                        "origin": t.origin,
                        "destination": t.destination,
                        "earliest_departure_minutes": t.earliest_departure,
                        "latest_arrival_minutes": t.latest_arrival,
                        "via_nodes": sorted(t.via_nodes),
                        "optional": t.optional,
                        "penalty": _dump_amount(t.penalty),
                    }
                    for t in sc.trains
                ],
                "relations": [
                    {
                        "kind": r.kind.value,
                        "first_train": r.first,
                        "second_train": r.second,
                        "at_node": r.node,
                        "min_minutes": r.min_minutes,
                        "max_minutes": r.max_minutes,
                    }
                    for r in sc.relations
                ],
            }
            for sc in family.scenarios
        ],
        "config": _config_document(config),
        "robust": robust,
    }


def dumps_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def load_instance(path: str | FilePath, *, strict: bool = True):
    """``(spec, family, config)`` from a JSON instance file."""
    text = FilePath(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceLoadError([f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return instance_from_document(doc, strict=strict)


def save_instance(path: str | FilePath, spec: InfrastructureSpec, family: TimetableFamily, config: BuildConfig) -> None:
    FilePath(path).write_text(dumps_document(document_from_instance(spec, family, config)), encoding="utf-8", newline="\n")
