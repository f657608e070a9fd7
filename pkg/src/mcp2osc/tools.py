"""MCP tool registry: JSON schemas plus handlers delegating to the bridge."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from jsonschema import Draft202012Validator

from .address import IntRange, TemplateSpec, expand_template
from .bridge import Bridge
from .codec import (
    SUPPORTED_TAGS,
    OscArgument,
    OscMessage,
    arg_from_json,
    arg_to_json,
    check_sendable_address,
    timetag_from_walltime,
)
from .control_ops import StreamSpec, discover_namespace, run_bidirectional_test, send_batch
from .errors import UnencodableArgument, ValidationRefused

TAG_ENUM = sorted(SUPPORTED_TAGS)
HOSTPORT = {"type": "string", "pattern": r"^[^\s:]+:\d{1,5}$", "description": "host:port override"}

ARG_SCHEMA = {
    "anyOf": [
        {
            "type": "object",
            "properties": {"type": {"type": "string", "enum": TAG_ENUM}, "value": {}},
            "required": ["type"],
            "additionalProperties": False,
        },
        {"type": ["number", "string", "boolean", "null"]},
    ],
    "description": 'OSC argument as {"type": tag, "value": v} or a bare JSON value '
    "(integer -> i, fractional -> f, string -> s, boolean -> T/F, null -> N)",
}
ARGS_SCHEMA = {"type": "array", "items": ARG_SCHEMA, "maxItems": 256}
MESSAGE_SCHEMA = {
    "type": "object",
    "properties": {"address": {"type": "string", "minLength": 1}, "args": ARGS_SCHEMA},
    "required": ["address"],
    "additionalProperties": False,
}
WINDOW = {"type": "number", "exclusiveMinimum": 0, "description": "look-back window in seconds"}
DIRECTION = {"type": "string", "enum": ["in", "out"]}
FILTER = {"type": "string", "enum": ["none", "odd", "even"]}
PARAMETER_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "type": {"type": "string", "enum": ["i", "f", "s", "b"]},
        "min": {"type": "number"},
        "max": {"type": "number"},
        "default": {},
        "enum_values": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}
RECORD_FIELDS = {
    "description": {"type": "string"},
    "parameters": {"type": "array", "items": PARAMETER_SCHEMA},
    "category": {"type": "string"},
    "tags": {"type": "array", "items": {"type": "string"}},
    "application": {"type": "string"},
}
RECORD_SCHEMA = {
    "type": "object",
    "properties": {"address": {"type": "string"}, **RECORD_FIELDS},
    "required": ["address"],
    "additionalProperties": False,
}


def _obj(properties: dict, required=()) -> dict:
    return {"type": "object", "properties": properties, "required": list(required), "additionalProperties": False}


@dataclass(frozen=True)
class Tool:
    name: str
    description: str
    input_schema: dict
    handler: Callable[[Bridge, dict], dict]

    def descriptor(self) -> dict:
        return {"name": self.name, "description": self.description, "inputSchema": self.input_schema}


# ---------------------------------------------------------------- argument parsing


def parse_args(raw: list, types: str | None = None) -> tuple[list[OscArgument], list[str]]:
    """Convert JSON arguments to OSC arguments, collecting inference warnings."""
    if types is not None and len(types) != len(raw):
        raise UnencodableArgument(f"types {types!r} has {len(types)} tags for {len(raw)} arguments")
    args, warnings = [], []
    for index, item in enumerate(raw):
        if isinstance(item, dict):
            args.append(arg_from_json(item["type"], item.get("value")))
            continue
        if types is not None:
            args.append(arg_from_json(types[index], item))
            continue
        if isinstance(item, bool):
            args.append(OscArgument("T" if item else "F"))
        elif item is None:
            args.append(OscArgument("N"))
        elif isinstance(item, int):
            tag = "i" if -(2**31) <= item < 2**31 else "h"
            args.append(arg_from_json(tag, item))
            warnings.append(f"arg {index}: bare integer {item} sent as {tag!r}")
        elif isinstance(item, float):
            args.append(arg_from_json("f", item))
            warnings.append(f"arg {index}: bare number {item} sent as 'f'")
        else:
            args.append(arg_from_json("s", item))
    return args, warnings


def message_to_json(msg: OscMessage) -> dict:
    return {"address": msg.address, "args": [{"type": a.tag, "value": arg_to_json(a)} for a in msg.args]}


def _build_message(spec: dict) -> tuple[OscMessage, list[str]]:
    check_sendable_address(spec["address"])
    args, warnings = parse_args(spec.get("args", []))
    return OscMessage(spec["address"], tuple(args)), warnings


# ---------------------------------------------------------------- handlers


def send_message(bridge: Bridge, params: dict) -> dict:
    check_sendable_address(params["address"])
    args, warnings = parse_args(params.get("args", []), params.get("types"))
    msg = OscMessage(params["address"], tuple(args))
    validation = bridge.store.validate_args(msg.address, msg.args)
    if not validation.ok and not params.get("force"):
        raise ValidationRefused(
            f"{msg.address}: {'; '.join(validation.violations)} (set force to send anyway)",
            validation.violations,
        )
    report = bridge.transport.send(msg, params.get("dest"))
    return {
        "sent": message_to_json(msg),
        "report": report.to_json(),
        "validation": validation.to_json(),
        "warnings": warnings,
    }


def send_bundle(bridge: Bridge, params: dict) -> dict:
    messages, warnings = [], []
    for spec in params["messages"]:
        msg, w = _build_message(spec)
        messages.append(msg)
        warnings.extend(w)
    timetag = None
    if "timetag" in params:
        timetag = timetag_from_walltime(params["timetag"])
    report = send_batch(
        bridge.transport,
        messages,
        params.get("as_bundle", True),
        store=bridge.store,
        force=params.get("force", False),
        dest=params.get("dest"),
        timetag=timetag,
    )
    report["warnings"] = warnings + report["warnings"]
    return report


PREVIEW_LIMIT = 500


def expand_and_send(bridge: Bridge, params: dict) -> dict:
    ranges = {
        name: IntRange(r["start"], r["end"], r.get("step", 1), r.get("filter", "none"))
        for name, r in params["ranges"].items()
    }
    raw_args = params.get("args", [])
    # placeholder strings in int positions stay strings until expansion
    args = []
    for item in raw_args:
        if isinstance(item, dict) and item.get("type") == "i" and isinstance(item.get("value"), str):
            args.append(OscArgument("i", item["value"]))
        else:
            args.extend(parse_args([item])[0])
    spec = TemplateSpec(params["template"], ranges, params.get("filter", "none"), args)
    messages = expand_template(spec)
    if params.get("preview", False):
        shown = messages[:PREVIEW_LIMIT]
        return {
            "preview": True,
            "count": len(messages),
            "messages": [message_to_json(m) for m in shown],
            "truncated": len(messages) > len(shown),
        }
    report = send_batch(
        bridge.transport,
        messages,
        params.get("as_bundle", True),
        store=bridge.store,
        force=params.get("force", False),
        dest=params.get("dest"),
    )
    report["preview"] = False
    report["count"] = len(messages)
    return report


def start_stream(bridge: Bridge, params: dict) -> dict:
    spec = StreamSpec(
        params["address"],
        params["start_value"],
        params["end_value"],
        params["duration_s"],
        params.get("rate_hz", 50.0),
        params.get("shape", "linear"),
    )
    stream_id = bridge.streams.start(spec, params.get("dest"))
    return {
        "stream_id": stream_id,
        "planned_messages": spec.count,
        "period_ms": 1000.0 / spec.rate_hz,
        "shape": spec.shape,
    }


def stop_stream(bridge: Bridge, params: dict) -> dict:
    return bridge.streams.stop(params["stream_id"])


def get_received(bridge: Bridge, params: dict) -> dict:
    entries = bridge.log.query_window(params["window_s"], params.get("filter"), params.get("direction"))
    limit = params.get("limit", 500)
    shown = entries[-limit:]
    return {"count": len(entries), "truncated": len(shown) < len(entries), "entries": [e.to_json() for e in shown]}


def get_stats(bridge: Bridge, params: dict) -> dict:
    return bridge.log.stats(params["window_s"], params.get("direction")).to_json()


def export_log(bridge: Bridge, params: dict) -> dict:
    fmt = params.get("format", "csv")
    data = bridge.log.export(params["window_s"], fmt, filter=params.get("filter"), direction=params.get("direction"))
    text = data.decode()
    lines = text.count("\n")
    return {"format": fmt, "rows": lines - 1 if fmt == "csv" else lines, "data": text}


def save_patterns(bridge: Bridge, params: dict) -> dict:
    return bridge.store.save_patterns(params["records"])


def list_patterns(bridge: Bridge, params: dict) -> dict:
    records = bridge.store.list_patterns(**params)
    return {"count": len(records), "patterns": [r.to_dict() for r in records]}


def update_pattern(bridge: Bridge, params: dict) -> dict:
    record = bridge.store.update_pattern(
        params["address"],
        params.get("changes"),
        address_suffix=params.get("address_suffix"),
        new_address=params.get("new_address"),
        replace_parameters=params.get("replace_parameters", False),
    )
    return {"updated": record.to_dict(), "previous_address": params["address"]}


def delete_pattern(bridge: Bridge, params: dict) -> dict:
    return bridge.store.delete_pattern(params["address"])


def bidirectional_test(bridge: Bridge, params: dict) -> dict:
    report = run_bidirectional_test(
        bridge.transport,
        params.get("timeout_ms", 1000),
        params.get("probe", "/mcp2osc/ping"),
        dest=params.get("dest"),
    )
    return report.to_json()


def namespace(bridge: Bridge, params: dict) -> dict:
    root = discover_namespace(params["host"], params["port"], params.get("path", "/"))
    leaves = [n for n in root.leaves() if n is not root or n.type_signature]
    return {
        "root": root.to_json(),
        "addresses": [
            {"address": n.full_path, "type": n.type_signature, "value": n.current_value, "description": n.description}
            for n in leaves
        ],
    }


TOOLS = [
    Tool(
        "send_message",
        "Send one OSC message over UDP. Arguments are typed ({'type':'f','value':0.5}) or bare values; "
        "'types' gives a tag string such as 'if' for bare values. Checked against stored patterns.",
        _obj(
            {
                "address": {"type": "string", "minLength": 1},
                "args": ARGS_SCHEMA,
                "types": {"type": "string", "pattern": "^[ifsbTFNIthd]*$"},
                "dest": HOSTPORT,
                "force": {"type": "boolean", "description": "send even when pattern validation fails"},
            },
            ["address"],
        ),
        send_message,
    ),
    Tool(
        "send_bundle",
        "Send several OSC messages together, by default as one IMMEDIATE bundle split only when it would "
        "exceed the datagram limit. Use for presets that must apply at once.",
        _obj(
            {
                "messages": {"type": "array", "items": MESSAGE_SCHEMA, "maxItems": 100000},
                "as_bundle": {"type": "boolean"},
                "timetag": {"type": "number", "minimum": 0, "description": "Unix seconds; dispatched immediately"},
                "dest": HOSTPORT,
                "force": {"type": "boolean"},
            },
            ["messages"],
        ),
        send_bundle,
    ),
    Tool(
        "expand_and_send",
        "Expand an address template with [name] placeholders over integer ranges (optionally odd/even only) "
        "and send the result as a bundle. preview=true returns the messages without sending.",
        _obj(
            {
                "template": {"type": "string", "minLength": 1},
                "ranges": {
                    "type": "object",
                    "minProperties": 1,
                    "additionalProperties": _obj(
                        {
                            "start": {"type": "integer"},
                            "end": {"type": "integer"},
                            "step": {"type": "integer", "minimum": 1},
                            "filter": FILTER,
                        },
                        ["start", "end"],
                    ),
                },
                "filter": FILTER,
                "args": ARGS_SCHEMA,
                "preview": {"type": "boolean"},
                "as_bundle": {"type": "boolean"},
                "dest": HOSTPORT,
                "force": {"type": "boolean"},
            },
            ["template", "ranges"],
        ),
        expand_and_send,
    ),
    Tool(
        "start_stream",
        "Start a timed float ramp on one address (default 50 Hz, linear). Returns a stream id.",
        _obj(
            {
                "address": {"type": "string", "minLength": 1},
                "start_value": {"type": "number"},
                "end_value": {"type": "number"},
                "duration_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 600},
                "rate_hz": {"type": "number", "minimum": 1, "maximum": 200},
                "shape": {"type": "string", "enum": ["linear", "exponential", "ease-in-out"]},
                "dest": HOSTPORT,
            },
            ["address", "start_value", "end_value", "duration_s"],
        ),
        start_stream,
    ),
    Tool(
        "stop_stream",
        "Stop a running stream and report how many messages it sent.",
        _obj({"stream_id": {"type": "string"}}, ["stream_id"]),
        stop_stream,
    ),
    Tool(
        "get_received",
        "Return logged OSC traffic from the last window_s seconds, optionally filtered by address pattern "
        "and direction.",
        _obj(
            {
                "window_s": WINDOW,
                "filter": {"type": "string"},
                "direction": DIRECTION,
                "limit": {"type": "integer", "minimum": 1, "maximum": 10000},
            },
            ["window_s"],
        ),
        get_received,
    ),
    Tool(
        "get_stats",
        "Summarize logged traffic in a window: totals, per-address counts, endpoints, time span, rate.",
        _obj({"window_s": WINDOW, "direction": DIRECTION}, ["window_s"]),
        get_stats,
    ),
    Tool(
        "export_log",
        "Export logged traffic in a window as CSV (one row per message) or JSON Lines.",
        _obj(
            {
                "window_s": WINDOW,
                "format": {"type": "string", "enum": ["csv", "jsonl"]},
                "filter": {"type": "string"},
                "direction": DIRECTION,
            },
            ["window_s"],
        ),
        export_log,
    ),
    Tool(
        "save_patterns",
        "Store OSC address patterns with metadata (description, parameters with ranges, category, tags, "
        "application). Existing addresses are updated in place.",
        _obj({"records": {"type": "array", "items": RECORD_SCHEMA, "minItems": 1}}, ["records"]),
        save_patterns,
    ),
    Tool(
        "list_patterns",
        "List stored patterns, filtered by category, tag, application, free text or an OSC address pattern.",
        _obj(
            {
                "category": {"type": "string"},
                "tag": {"type": "string"},
                "application": {"type": "string"},
                "query": {"type": "string"},
                "pattern": {"type": "string"},
            }
        ),
        list_patterns,
    ),
    Tool(
        "update_pattern",
        "Change a stored pattern: merge fields, change parameter ranges, rename it or append a path segment.",
        _obj(
            {
                "address": {"type": "string"},
                "changes": {"type": "object", "properties": RECORD_FIELDS, "additionalProperties": False},
                "address_suffix": {"type": "string", "minLength": 1},
                "new_address": {"type": "string", "minLength": 1},
                "replace_parameters": {"type": "boolean"},
            },
            ["address"],
        ),
        update_pattern,
    ),
    Tool(
        "delete_pattern",
        "Delete a stored pattern by address.",
        _obj({"address": {"type": "string"}}, ["address"]),
        delete_pattern,
    ),
    Tool(
        "run_bidirectional_test",
        "Send a ping with a random nonce and wait for the peer's matching pong. A failed test is reported "
        "in the result, not as an error.",
        _obj(
            {
                "timeout_ms": {"type": "integer", "minimum": 1, "maximum": 60000},
                "probe": {"type": "string", "minLength": 1},
                "dest": HOSTPORT,
            },
            ["timeout_ms"],
        ),
        bidirectional_test,
    ),
    Tool(
        "discover_namespace",
        "Query an OSCQuery server over HTTP and return its address tree with types, values and descriptions.",
        _obj(
            {
                "host": {"type": "string", "minLength": 1},
                "port": {"type": "integer", "minimum": 1, "maximum": 65535},
                "path": {"type": "string"},
            },
            ["host", "port"],
        ),
        namespace,
    ),
]

REGISTRY: dict[str, Tool] = {tool.name: tool for tool in TOOLS}
VALIDATORS: dict[str, Draft202012Validator] = {}
for _tool in TOOLS:
    Draft202012Validator.check_schema(_tool.input_schema)
    VALIDATORS[_tool.name] = Draft202012Validator(_tool.input_schema)


def schema_errors(name: str, arguments: Any) -> list[str]:
    validator = VALIDATORS[name]
    return [
        f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
        for e in sorted(validator.iter_errors(arguments), key=lambda e: list(map(str, e.absolute_path)))
    ]
