"""Persistent store of OSC address patterns and their metadata.

The store is one JSON document ``{"version": 1, "patterns": [...]}``,
rewritten atomically on every mutation.  Records are keyed by address.
"""

from __future__ import annotations

import glob
import json
import logging
import math
import os
import threading
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from typing import Any, Iterable

from .address import AddressPattern, match, validate_address
from .codec import OscArgument, check_argument
from .errors import Collision, InvalidRecord, NotFound, UnencodableArgument
from .fsutil import atomic_write_bytes

log = logging.getLogger(__name__)

STORE_VERSION = 1
PARAM_TYPES = ("i", "f", "s", "b")
# wire tags each parameter type accepts
COMPATIBLE_TAGS = {"i": "ih", "f": "fd", "s": "s", "b": "b"}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class ParameterSpec:
    type: str
    name: str | None = None
    min: float | None = None
    max: float | None = None
    default: Any = None
    enum_values: list[str] | None = None

    def __post_init__(self):
        if self.type not in PARAM_TYPES:
            raise InvalidRecord(f"parameter type must be one of {'/'.join(PARAM_TYPES)}, got {self.type!r}")
        for bound in ("min", "max"):
            value = getattr(self, bound)
            if value is not None and (not _is_number(value) or math.isnan(value)):
                raise InvalidRecord(f"parameter {bound} must be a number, got {value!r}")
        if self.min is not None and self.max is not None and self.min > self.max:
            raise InvalidRecord(f"parameter min {self.min} is greater than max {self.max}")
        if self.enum_values is not None:
            if not isinstance(self.enum_values, list) or not all(isinstance(v, str) for v in self.enum_values):
                raise InvalidRecord("parameter enum_values must be a list of strings")
        if _is_number(self.default):
            if self.min is not None and self.default < self.min or self.max is not None and self.default > self.max:
                raise InvalidRecord(f"parameter default {self.default} lies outside [{self.min}, {self.max}]")

    @classmethod
    def from_dict(cls, data: dict) -> ParameterSpec:
        if not isinstance(data, dict):
            raise InvalidRecord(f"parameter must be an object, got {data!r}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidRecord(f"unknown parameter field(s): {', '.join(unknown)}")
        if "type" not in data:
            raise InvalidRecord("parameter needs a 'type'")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class PatternRecord:
    address: str
    description: str = ""
    parameters: tuple[ParameterSpec, ...] = ()
    category: str = ""
    tags: tuple[str, ...] = ()
    application: str = ""
    created_at: str = ""
    updated_at: str = ""

    def __post_init__(self):
        check = validate_address(self.address)
        if not check:
            raise InvalidRecord(f"address {self.address!r}: {check.reason}")
        for name in ("description", "category", "application"):
            if not isinstance(getattr(self, name), str):
                raise InvalidRecord(f"{name} must be a string")
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "tags", tuple(self.tags))
        if not all(isinstance(t, str) for t in self.tags):
            raise InvalidRecord("tags must be strings")

    @property
    def signature(self) -> str:
        return "".join(p.type for p in self.parameters)

    @classmethod
    def from_dict(cls, data: dict) -> PatternRecord:
        if not isinstance(data, dict):
            raise InvalidRecord(f"record must be an object, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidRecord(f"unknown record field(s): {', '.join(unknown)}")
        if "address" not in data:
            raise InvalidRecord("record needs an 'address'")
        data = dict(data)
        params = data.get("parameters") or []
        if not isinstance(params, list):
            raise InvalidRecord("parameters must be a list")
        data["parameters"] = tuple(ParameterSpec.from_dict(p) for p in params)
        tags = data.get("tags") or []
        if not isinstance(tags, list):
            raise InvalidRecord("tags must be a list of strings")
        data["tags"] = tuple(tags)
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "address": self.address,
            "description": self.description,
            "parameters": [p.to_dict() for p in self.parameters],
            "category": self.category,
            "tags": list(self.tags),
            "application": self.application,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    matched: str | None = None

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, "warnings": self.warnings, "matched": self.matched}


class PatternStore:
    """CRUD store for :class:`PatternRecord`; mutations are serialized."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = os.fspath(path) if path is not None else None
        self._lock = threading.RLock()
        self._records: dict[str, PatternRecord] = {}
        if self.path is not None:
            self._load()

    def _load(self) -> None:
        for stale in glob.glob(glob.escape(self.path) + ".*.tmp"):
            try:
                os.unlink(stale)
            except OSError:
                pass
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb") as fh:
            doc = json.loads(fh.read() or b"{}")
        for item in doc.get("patterns", []):
            record = PatternRecord.from_dict(item)
            self._records[record.address] = record

    def to_bytes(self) -> bytes:
        doc = {
            "version": STORE_VERSION,
            "patterns": [self._records[a].to_dict() for a in sorted(self._records)],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False).encode() + b"\n"

    def _persist(self) -> None:
        if self.path is not None:
            atomic_write_bytes(self.path, self.to_bytes())

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, address: str) -> bool:
        return address in self._records

    def get(self, address: str) -> PatternRecord:
        try:
            return self._records[address]
        except KeyError:
            raise NotFound(f"no stored pattern {address!r}") from None

    # ------------------------------------------------------------ CRUD

    def save_patterns(self, records: Iterable[PatternRecord | dict]) -> dict:
        """Upsert records by address; the batch is validated before anything is written."""
        parsed = []
        for index, item in enumerate(records):
            try:
                parsed.append(item if isinstance(item, PatternRecord) else PatternRecord.from_dict(item))
            except (InvalidRecord, TypeError) as exc:
                raise InvalidRecord(f"record {index}: {exc}") from None
        with self._lock:
            outcomes = []
            stamp = _now()
            for record in parsed:
                previous = self._records.get(record.address)
                created = previous.created_at if previous else (record.created_at or stamp)
                self._records[record.address] = replace(record, created_at=created, updated_at=stamp)
                outcomes.append({"address": record.address, "outcome": "upsert" if previous else "insert"})
            self._persist()
            return {"saved": len(parsed), "total": len(self._records), "outcomes": outcomes}

    def list_patterns(
        self,
        *,
        category: str | None = None,
        tag: str | None = None,
        application: str | None = None,
        query: str | None = None,
        pattern: AddressPattern | str | None = None,
    ) -> list[PatternRecord]:
        """Records matching every given filter, ordered by category then address."""
        if isinstance(pattern, str):
            pattern = AddressPattern(pattern)
        needle = query.lower() if query else None
        with self._lock:
            records = list(self._records.values())
        out = []
        for r in records:
            if category is not None and r.category.lower() != category.lower():
                continue
            if tag is not None and tag.lower() not in (t.lower() for t in r.tags):
                continue
            if application is not None and r.application.lower() != application.lower():
                continue
            if needle is not None:
                haystack = [r.address, r.description, *r.tags]
                if not any(needle in h.lower() for h in haystack):
                    continue
            if pattern is not None:
                if validate_address(r.address).kind == "concrete":
                    if not match(pattern, r.address):
                        continue
                elif r.address != pattern.text:
                    continue
            out.append(r)
        out.sort(key=lambda r: (r.category.lower(), r.address))
        return out

    def update_pattern(
        self,
        address: str,
        changes: dict | None = None,
        *,
        address_suffix: str | None = None,
        new_address: str | None = None,
        replace_parameters: bool = False,
    ) -> PatternRecord:
        """Merge ``changes`` into a stored record.

        Parameter changes merge position by position (partial objects allowed)
        unless ``replace_parameters`` is set.  ``address_suffix`` appends a
        path segment after any ``new_address``.
        """
        changes = dict(changes or {})
        with self._lock:
            current = self.get(address)
            data = current.to_dict()
            for key in ("address", "created_at", "updated_at"):
                if key in changes:
                    raise InvalidRecord(f"{key!r} cannot be changed directly; use new_address/address_suffix")
            params = changes.pop("parameters", None)
            if params is not None:
                if not isinstance(params, list):
                    raise InvalidRecord("parameters must be a list")
                if replace_parameters:
                    data["parameters"] = params
                else:
                    merged = [dict(p) for p in data["parameters"]]
                    for index, patch in enumerate(params):
                        if not isinstance(patch, dict):
                            raise InvalidRecord(f"parameter {index} must be an object")
                        if index < len(merged):
                            merged[index].update(patch)
                        else:
                            merged.append(dict(patch))
                    data["parameters"] = [{k: v for k, v in p.items() if v is not None} for p in merged]
            data.update(changes)
            target = new_address or current.address
            if address_suffix:
                target = target.rstrip("/") + "/" + address_suffix.strip("/")
            data["address"] = target
            updated = PatternRecord.from_dict(data)
            if target != current.address and target in self._records:
                raise Collision(f"address {target!r} is already stored")
            updated = replace(updated, updated_at=_now())
            del self._records[current.address]
            self._records[target] = updated
            self._persist()
            return updated

    def delete_pattern(self, address: str) -> dict:
        with self._lock:
            self.get(address)
            del self._records[address]
            self._persist()
            return {"deleted": address, "total": len(self._records)}

    # ------------------------------------------------------------ validation

    def resolve(self, address: str) -> PatternRecord | None:
        """Exact record, else the matching stored pattern with the fewest wildcards."""
        with self._lock:
            exact = self._records.get(address)
            if exact is not None:
                return exact
            candidates = []
            if validate_address(address).kind == "concrete":
                for record in self._records.values():
                    if validate_address(record.address).kind != "pattern":
                        continue
                    pattern = AddressPattern(record.address)
                    if match(pattern, address):
                        candidates.append((pattern.wildcard_count, record.address, record))
        if not candidates:
            return None
        return min(candidates, key=lambda c: c[:2])[2]

    def validate_args(self, address: str, args: Iterable[OscArgument]) -> ValidationResult:
        args = list(args)
        result = ValidationResult(ok=True)
        for index, arg in enumerate(args):
            try:
                check_argument(arg)
            except UnencodableArgument as exc:
                result.violations.append(f"arg {index}: {exc}")
        record = self.resolve(address)
        if record is None:
            result.warnings.append(f"no stored pattern for {address!r}")
            result.ok = not result.violations
            return result
        result.matched = record.address
        params = record.parameters
        if len(args) != len(params):
            result.violations.append(
                f"arity mismatch: {record.address} expects {len(params)} argument(s) "
                f"({record.signature or 'none'}), got {len(args)} ({''.join(a.tag for a in args) or 'none'})"
            )
        for index, (arg, spec) in enumerate(zip(args, params)):
            label = f"arg {index}" + (f" ({spec.name})" if spec.name else "")
            if arg.tag == "s" and spec.type in ("i", "f"):
                if spec.enum_values and arg.value in spec.enum_values:
                    continue
                result.warnings.append(
                    f"{label}: word value {arg.value!r} sent where {spec.type!r} is stored; "
                    "the receiver must map it to a number"
                )
                continue
            if arg.tag not in COMPATIBLE_TAGS[spec.type]:
                result.violations.append(f"{label}: type {arg.tag!r} does not match expected {spec.type!r}")
                continue
            if arg.tag in "ifhd" and _is_number(arg.value):
                lo = spec.min if spec.min is not None else -math.inf
                hi = spec.max if spec.max is not None else math.inf
                if math.isnan(arg.value) or not lo <= arg.value <= hi:
                    result.violations.append(f"{label}: value {arg.value!r} out of range [{spec.min}, {spec.max}]")
            if arg.tag == "s" and spec.enum_values and arg.value not in spec.enum_values:
                result.violations.append(f"{label}: {arg.value!r} is not one of {spec.enum_values}")
        result.ok = not result.violations
        return result
