"""Append-only JSON Lines log of sent and received OSC traffic.

Every entry is written as one line with a single ``write`` call on an
``O_APPEND`` descriptor, so a reader never observes half a record.  A
ring buffer keeps the most recent entries in memory for windowed queries;
the file stays the source of truth and is replayed on open.
"""

from __future__ import annotations

import collections
import csv
import errno
import io
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable, Literal

from .address import AddressPattern, match
from .codec import OscBundle, OscMessage, OscPacket, packet_from_json, packet_to_json
from .errors import LogIoError, StorageFull

log = logging.getLogger(__name__)

RING_SIZE = 10_000
ROTATE_BYTES = 64 * 1024 * 1024

Direction = Literal["in", "out"]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def to_ms(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=dt.microsecond // 1000 * 1000)


@dataclass(frozen=True)
class LogEntry:
    seq: int
    direction: Direction
    wall_time: datetime
    mono_time: int
    endpoint: str
    packet: OscPacket | None = None
    raw: bytes | None = None
    error: str | None = None

    @property
    def address(self) -> str:
        if isinstance(self.packet, OscMessage):
            return self.packet.address
        if isinstance(self.packet, OscBundle):
            return "#bundle"
        return ""

    def messages(self) -> list[OscMessage]:
        if isinstance(self.packet, OscBundle):
            return list(self.packet.messages())
        if isinstance(self.packet, OscMessage):
            return [self.packet]
        return []

    def to_json(self) -> dict:
        record = {
            "seq": self.seq,
            "dir": self.direction,
            "t": self.wall_time.isoformat(timespec="milliseconds"),
            "mono": self.mono_time,
            "ep": self.endpoint,
            "addr": self.address,
            "tags": "",
            "args": [],
        }
        if self.packet is not None:
            record.update(packet_to_json(self.packet))
            if isinstance(self.packet, OscBundle):
                record["addr"] = "#bundle"
        if self.raw is not None:
            record["raw"] = self.raw.hex()
        if self.error is not None:
            record["err"] = self.error
        return record

    @classmethod
    def from_json(cls, record: dict) -> LogEntry:
        packet = None
        if "elems" in record or record.get("addr"):
            packet = packet_from_json(record)
        raw = bytes.fromhex(record["raw"]) if "raw" in record else None
        return cls(
            seq=record["seq"],
            direction=record["dir"],
            wall_time=datetime.fromisoformat(record["t"]),
            mono_time=record["mono"],
            endpoint=record["ep"],
            packet=packet,
            raw=raw,
            error=record.get("err"),
        )


@dataclass
class StatsSummary:
    total: int
    window: float
    per_address: dict[str, int] = field(default_factory=dict)
    sources: list[str] = field(default_factory=list)
    first: datetime | None = None
    last: datetime | None = None
    rate: float = 0.0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "window_s": self.window,
            "per_address": self.per_address,
            "sources": self.sources,
            "first": self.first.isoformat(timespec="milliseconds") if self.first else None,
            "last": self.last.isoformat(timespec="milliseconds") if self.last else None,
            "duration_s": (self.last - self.first).total_seconds() if self.first else 0.0,
            "rate": self.rate,
        }


def _rotated_name(path: str, when: datetime) -> str:
    stem, ext = os.path.splitext(path)
    base = f"{stem}-{when.strftime('%Y%m%dT%H%M%S%f')[:-3]}"
    name = f"{base}{ext or '.jsonl'}"
    n = 1
    while os.path.exists(name):
        n += 1
        name = f"{base}-{n}{ext or '.jsonl'}"
    return name


class MessageLog:
    """Durable traffic log with a single serialized writer.

    ``path=None`` keeps the log in memory only.  ``clock`` returns the
    current UTC time and exists so tests can pin "now".
    """

    def __init__(
        self,
        path: str | os.PathLike | None = None,
        *,
        ring_size: int = RING_SIZE,
        rotate_bytes: int = ROTATE_BYTES,
        fsync: bool = False,
        clock: Callable[[], datetime] = utc_now,
    ):
        self.path = os.fspath(path) if path is not None else None
        self.rotate_bytes = rotate_bytes
        self.fsync = fsync
        self.clock = clock
        self._ring: collections.deque[LogEntry] = collections.deque(maxlen=ring_size)
        self._lock = threading.Lock()
        self._subscribers: list[Callable[[LogEntry], None]] = []
        self._seq = 0
        self._mono_offset = 0
        self._last_mono = 0
        self._fd: int | None = None
        self._size = 0
        self.counters = {"sent": 0, "received": 0, "decode_errors": 0}
        self.degraded: set[str] = set()
        if self.path is not None:
            self._replay()
            self._open_fd()

    # ------------------------------------------------------------ file side

    def _replay(self) -> None:
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb") as fh:
            data = fh.read()
        good_end = data.rfind(b"\n") + 1
        if good_end < len(data):
            log.warning("dropping torn trailing record in %s (%d bytes)", self.path, len(data) - good_end)
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)
        for lineno, line in enumerate(data[:good_end].splitlines(), 1):
            if not line.strip():
                continue
            try:
                entry = LogEntry.from_json(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("skipping unreadable record %s:%d (%s)", self.path, lineno, exc)
                continue
            self._ring.append(entry)
            self._seq = max(self._seq, entry.seq)
            self._last_mono = max(self._last_mono, entry.mono_time)
        self._mono_offset = max(0, self._last_mono - time.monotonic_ns())

    def _open_fd(self) -> None:
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        self._size = os.fstat(self._fd).st_size

    def _rotate(self) -> None:
        os.close(self._fd)
        os.replace(self.path, _rotated_name(self.path, self.clock()))
        self._open_fd()

    def _write_line(self, line: bytes) -> None:
        if self._fd is None:
            return
        if self._size and self._size + len(line) > self.rotate_bytes:
            self._rotate()
        view = memoryview(line)
        while view:
            written = os.write(self._fd, view)
            view = view[written:]
        self._size += len(line)
        if self.fsync:
            os.fsync(self._fd)

    # ------------------------------------------------------------ writing

    def append(self, entry: LogEntry) -> int:
        """Assign the next seq to ``entry``, persist it and return the seq.

        The incoming ``seq`` and ``mono_time`` are ignored; a missing wall time
        (``None``) is filled from the clock.  On disk failure the entry stays
        in memory, the log is flagged degraded and the error is raised.
        """
        with self._lock:
            self._seq += 1
            mono = max(time.monotonic_ns() + self._mono_offset, self._last_mono)
            self._last_mono = mono
            wall = to_ms(entry.wall_time or self.clock())
            entry = replace(entry, seq=self._seq, mono_time=mono, wall_time=wall)
            self._ring.append(entry)
            if entry.direction == "out":
                self.counters["sent"] += 1
            else:
                self.counters["received"] += 1
            if entry.error is not None:
                self.counters["decode_errors"] += 1
            for callback in self._subscribers:
                try:
                    callback(entry)
                except Exception:
                    log.exception("log subscriber failed")
            try:
                self._write_line(json.dumps(entry.to_json(), separators=(",", ":")).encode() + b"\n")
            except OSError as exc:
                if exc.errno in (errno.ENOSPC, errno.EDQUOT):
                    self.degraded.add("storage_full")
                    raise StorageFull(str(exc)) from exc
                self.degraded.add("log_io")
                raise LogIoError(str(exc)) from exc
            return entry.seq

    def record(
        self,
        direction: Direction,
        endpoint: str,
        packet: OscPacket | None = None,
        *,
        raw: bytes | None = None,
        error: str | None = None,
        wall_time: datetime | None = None,
    ) -> int:
        return self.append(LogEntry(0, direction, wall_time, 0, endpoint, packet, raw, error))

    def subscribe(self, callback: Callable[[LogEntry], None]) -> None:
        """Call ``callback`` for each new entry, in seq order, under the writer lock."""
        with self._lock:
            self._subscribers.append(callback)

    def unsubscribe(self, callback: Callable[[LogEntry], None]) -> None:
        with self._lock:
            if callback in self._subscribers:
                self._subscribers.remove(callback)

    def close(self) -> None:
        with self._lock:
            if self._fd is not None:
                os.close(self._fd)
                self._fd = None

    # ------------------------------------------------------------ reading

    @property
    def high_water(self) -> int:
        return self._seq

    def snapshot(self) -> tuple[int, dict[str, int]]:
        """Consistent (high-water seq, counters) pair."""
        with self._lock:
            return self._seq, dict(self.counters)

    def file_size(self) -> int:
        return self._size

    def tail(self, n: int | None = None) -> list[LogEntry]:
        with self._lock:
            entries = list(self._ring)
        return entries if n is None else entries[-n:]

    def query_window(
        self,
        duration: float,
        filter: AddressPattern | str | None = None,
        direction: Direction | None = None,
        *,
        now: datetime | None = None,
    ) -> list[LogEntry]:
        """Entries whose wall time lies within the last ``duration`` seconds, seq-ordered."""
        if duration <= 0:
            raise ValueError("duration must be positive")
        if isinstance(filter, str):
            filter = AddressPattern(filter)
        cutoff = (now or self.clock()) - timedelta(seconds=duration)
        out = []
        for entry in self.tail():
            if entry.wall_time < cutoff:
                continue
            if direction is not None and entry.direction != direction:
                continue
            if filter is not None and not any(match(filter, m.address) for m in entry.messages()):
                continue
            out.append(entry)
        return out

    def stats(
        self,
        duration: float,
        direction: Direction | None = None,
        *,
        now: datetime | None = None,
    ) -> StatsSummary:
        entries = self.query_window(duration, direction=direction, now=now)
        per_address: dict[str, int] = collections.Counter(e.address or "<undecodable>" for e in entries)
        sources = list(dict.fromkeys(e.endpoint for e in entries))
        return StatsSummary(
            total=len(entries),
            window=float(duration),
            per_address=dict(per_address),
            sources=sources,
            first=entries[0].wall_time if entries else None,
            last=entries[-1].wall_time if entries else None,
            rate=len(entries) / duration,
        )

    def export(
        self,
        duration: float,
        format: Literal["jsonl", "csv"] = "jsonl",
        *,
        filter: AddressPattern | str | None = None,
        direction: Direction | None = None,
        now: datetime | None = None,
    ) -> bytes:
        entries = self.query_window(duration, filter, direction, now=now)
        if format == "jsonl":
            return b"".join(json.dumps(e.to_json(), separators=(",", ":")).encode() + b"\n" for e in entries)
        if format == "csv":
            return export_csv(entries)
        raise ValueError(f"unknown export format {format!r}")


CSV_COLUMNS = ("seq", "direction", "wall_time", "endpoint", "address", "args")


def export_csv(entries: Iterable[LogEntry]) -> bytes:
    """One row per message; bundle members share their bundle's seq."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for entry in entries:
        stamp = entry.wall_time.isoformat(timespec="milliseconds")
        messages = entry.messages()
        if not messages:
            writer.writerow((entry.seq, entry.direction, stamp, entry.endpoint, "", f"ERROR: {entry.error}"))
        for msg in messages:
            args = " ".join(a.display() for a in msg.args)
            writer.writerow((entry.seq, entry.direction, stamp, entry.endpoint, msg.address, args))
    return buf.getvalue().encode()
