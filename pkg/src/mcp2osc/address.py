"""OSC address validation, pattern matching and placeholder templates."""

from __future__ import annotations

import functools
import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Literal

from .codec import PATTERN_CHARS, RESERVED_CHARS, OscArgument, OscMessage
from .errors import CardinalityExceeded, MalformedPattern, TemplateError, UnboundPlaceholder

MAX_EXPANSION = 100_000

AddressKind = Literal["concrete", "pattern", "invalid"]


@dataclass(frozen=True)
class AddressCheck:
    kind: AddressKind
    reason: str = ""

    def __bool__(self):
        return self.kind != "invalid"


def _pattern_problem(text: str) -> str:
    """Return why a pattern's bracket/brace groups are malformed, or ''."""
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "[{":
            close = "]" if ch == "[" else "}"
            end = text.find(close, i + 1)
            if end < 0:
                return f"unbalanced {ch!r} at position {i}"
            body = text[i + 1 : end]
            if "/" in body:
                return f"group at position {i} spans a '/'"
            if any(c in "[]{}" for c in body):
                return f"nested group at position {i}"
            if ch == "{" and not body:
                return f"empty '{{}}' at position {i}"
            if ch == "[" and body in ("", "!"):
                return f"empty character class at position {i}"
            i = end + 1
            continue
        if ch in "]}":
            return f"unbalanced {ch!r} at position {i}"
        i += 1
    return ""


def validate_address(text: str) -> AddressCheck:
    """Classify ``text`` as a concrete address, a pattern, or invalid."""
    if not isinstance(text, str) or not text.startswith("/"):
        return AddressCheck("invalid", "address must start with '/'")
    for ch in text:
        if ch == " ":
            return AddressCheck("invalid", "address contains a space")
        if ord(ch) < 0x20 or ord(ch) == 0x7F:
            return AddressCheck("invalid", "address contains a control character")
    if any(not part for part in text[1:].split("/")):
        return AddressCheck("invalid", "address contains an empty path segment")
    if not any(ch in PATTERN_CHARS for ch in text):
        bad = sorted(set(text) & RESERVED_CHARS)
        if bad:
            return AddressCheck("invalid", f"reserved character {bad[0]!r} in address")
        return AddressCheck("concrete")
    if "#" in text or not _commas_inside_braces(text):
        return AddressCheck("invalid", "reserved character in pattern")
    problem = _pattern_problem(text)
    if problem:
        return AddressCheck("invalid", problem)
    return AddressCheck("pattern")


def _commas_inside_braces(text: str) -> bool:
    """True when every ',' in ``text`` sits inside a {...} group."""
    depth = 0
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == "," and depth == 0:
            return False
    return True


def _segment_regex(segment: str) -> str:
    out = []
    i = 0
    while i < len(segment):
        ch = segment[i]
        if ch == "*":
            out.append("[^/]*")
        elif ch == "?":
            out.append("[^/]")
        elif ch == "[":
            end = segment.index("]", i + 1)
            body = segment[i + 1 : end]
            negate = body.startswith("!")
            if negate:
                body = body[1:]
            members = []
            j = 0
            while j < len(body):
                if j + 2 < len(body) and body[j + 1] == "-":
                    lo, hi = sorted((body[j], body[j + 2]))
                    members.append(f"{re.escape(lo)}-{re.escape(hi)}")
                    j += 3
                else:
                    members.append(re.escape(body[j]))
                    j += 1
            out.append(("[^/" if negate else "[") + "".join(members) + "]")
            i = end
        elif ch == "{":
            end = segment.index("}", i + 1)
            choices = segment[i + 1 : end].split(",")
            out.append("(?:" + "|".join(re.escape(c) for c in choices) + ")")
            i = end
        else:
            out.append(re.escape(ch))
        i += 1
    return "".join(out)


@dataclass(frozen=True)
class AddressPattern:
    """A validated OSC address pattern, split into path segments."""

    text: str
    parts: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        check = validate_address(self.text)
        if not check:
            raise MalformedPattern(f"{self.text!r}: {check.reason}")
        object.__setattr__(self, "parts", tuple(self.text[1:].split("/")))

    @property
    def is_literal(self) -> bool:
        return not any(ch in PATTERN_CHARS for ch in self.text)

    @property
    def wildcard_count(self) -> int:
        return sum(self.text.count(ch) for ch in "?*[{")

    def matches(self, address: str) -> bool:
        return match(self, address)


@functools.lru_cache(maxsize=4096)
def _compiled(pattern_text: str) -> tuple[re.Pattern, ...]:
    return tuple(re.compile(_segment_regex(seg), re.DOTALL) for seg in pattern_text[1:].split("/"))


def match(pattern: AddressPattern | str, address: str) -> bool:
    """Match an OSC address pattern against a concrete address, segment by segment."""
    if isinstance(pattern, str):
        pattern = AddressPattern(pattern)
    if pattern.is_literal:
        return pattern.text == address
    if not address.startswith("/"):
        return False
    segments = address[1:].split("/")
    regexes = _compiled(pattern.text)
    if len(segments) != len(regexes) or "" in segments:
        return False
    return all(rx.fullmatch(seg) is not None for rx, seg in zip(regexes, segments))


# ---------------------------------------------------------------- templates

PLACEHOLDER = re.compile(r"\[([A-Za-z_][A-Za-z0-9_]*)\]")

FilterName = Literal["none", "odd", "even"]


@dataclass(frozen=True)
class IntRange:
    start: int
    end: int
    step: int = 1
    filter: FilterName = "none"

    def __post_init__(self):
        if self.step < 1:
            raise TemplateError(f"range step must be >= 1, got {self.step}")
        if self.end < self.start:
            raise TemplateError(f"range end {self.end} is below start {self.start}")
        if self.filter not in ("none", "odd", "even"):
            raise TemplateError(f"unknown filter {self.filter!r}")

    def values(self, extra_filter: FilterName = "none") -> list[int]:
        out = range(self.start, self.end + 1, self.step)
        for name in (self.filter, extra_filter):
            if name == "odd":
                out = [v for v in out if v % 2]
            elif name == "even":
                out = [v for v in out if not v % 2]
        return list(out)


@dataclass
class TemplateSpec:
    """Address template with ``[name]`` placeholders and a range per placeholder.

    ``filter`` applies to every range; a range may also carry its own filter.
    Int32 and string arguments may contain placeholders too: an int argument
    whose value is the string ``"[name]"`` becomes that integer.
    """

    template: str
    ranges: dict[str, IntRange]
    filter: FilterName = "none"
    args: list[OscArgument] = field(default_factory=list)

    def placeholders(self) -> list[str]:
        names = PLACEHOLDER.findall(self.template)
        for arg in self.args:
            if arg.tag in ("i", "s") and isinstance(arg.value, str):
                names.extend(PLACEHOLDER.findall(arg.value))
        return list(dict.fromkeys(names))


def _substitute(text: str, binding: dict[str, int]) -> str:
    return PLACEHOLDER.sub(lambda m: str(binding[m.group(1)]), text)


def _bind_arg(arg: OscArgument, binding: dict[str, int]) -> OscArgument:
    if not isinstance(arg.value, str) or arg.tag not in ("i", "s"):
        return arg
    text = _substitute(arg.value, binding)
    if arg.tag == "s":
        return OscArgument("s", text)
    try:
        return OscArgument("i", int(text))
    except ValueError:
        raise TemplateError(f"int argument template {arg.value!r} is not an integer") from None


def expansion_size(spec: TemplateSpec) -> int:
    names = spec.placeholders()
    return math.prod(len(spec.ranges[n].values(spec.filter)) for n in names if n in spec.ranges)


def expand_template(spec: TemplateSpec, limit: int = MAX_EXPANSION) -> list[OscMessage]:
    """Expand the cartesian product of placeholder ranges into messages.

    Placeholders vary in order of first appearance, the last one fastest.
    """
    names = spec.placeholders()
    if not names:
        raise TemplateError(f"template {spec.template!r} contains no [name] placeholder")
    missing = [n for n in names if n not in spec.ranges]
    if missing:
        raise UnboundPlaceholder(f"no range given for placeholder(s): {', '.join(missing)}")
    unused = sorted(set(spec.ranges) - set(names))
    if unused:
        raise TemplateError(f"range given for unknown placeholder(s): {', '.join(unused)}")
    value_lists = [spec.ranges[n].values(spec.filter) for n in names]
    total = math.prod(len(v) for v in value_lists)
    if total > limit:
        raise CardinalityExceeded(f"template expands to {total} messages, limit is {limit}")

    messages = []
    for combo in itertools.product(*value_lists):
        binding = dict(zip(names, combo))
        address = _substitute(spec.template, binding)
        check = validate_address(address)
        if check.kind != "concrete":
            raise TemplateError(f"expanded address {address!r} is not concrete: {check.reason or check.kind}")
        messages.append(OscMessage(address, tuple(_bind_arg(a, binding) for a in spec.args)))
    return messages


def filter_matching(pattern: AddressPattern | str, addresses: Iterable[str]) -> list[str]:
    return [a for a in addresses if match(pattern, a)]
