"""Measurement-log and tree serialization.

Logs travel as newline-delimited JSON, one record per line, integer
microseconds throughout:

    {"k": 0, "ts_us": 0, "type": "send"}
    {"k": 0, "receiver": "h0001", "ts_us": 5210, "type": "recv"}

The format is streamable and loss-tolerant: a lost packet is simply an
absent recv record. Senders with exactly even spacing import back in
fixed-interval mode (the wire format carries no mode flag, so evenly spaced
timestamped schedules canonicalize to fixed mode on import).
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import LogFormatError
from .model import CovarianceMatrix, MeasurementLog, RoutingTree


def export_log(log: MeasurementLog, path) -> None:
    """Write a log as NDJSON: send records by pair index, then recv records
    by (receiver, index). Byte-deterministic for a given log."""
    lines = []
    for k in range(log.n_pairs):
        lines.append(json.dumps({"type": "send", "k": k, "ts_us": log.sender_ts[k]}, sort_keys=True))
    for receiver in sorted(log.receivers):
        entries = log.arrivals.get(receiver, {})
        for k in sorted(entries):
            lines.append(
                json.dumps(
                    {"type": "recv", "receiver": receiver, "k": k, "ts_us": entries[k]},
                    sort_keys=True,
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _field(record: dict, name: str, kind, lineno: int):
    if name not in record:
        raise LogFormatError(f"missing field {name!r}", lineno)
    value = record[name]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise LogFormatError(f"field {name!r} must be an integer", lineno)
    elif not isinstance(value, kind):
        raise LogFormatError(f"field {name!r} must be {kind.__name__}", lineno)
    return value


def import_log(path) -> MeasurementLog:
    """Parse and validate an NDJSON measurement log.

    Raises LogFormatError (with the offending line number) on malformed
    records, duplicate send/recv entries, non-monotone sender timestamps,
    unknown pair indices, or arrivals before the matching send.
    """
    sender_ts: dict[int, int] = {}
    arrivals: dict[str, dict[int, int]] = {}
    recv_lines: list[tuple[int, str, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(record, dict):
                raise LogFormatError("record must be a JSON object", lineno)
            rtype = record.get("type")
            if rtype == "send":
                k = _field(record, "k", int, lineno)
                ts = _field(record, "ts_us", int, lineno)
                if k in sender_ts:
                    raise LogFormatError(f"duplicate send record for k={k}", lineno)
                if k < 0:
                    raise LogFormatError("pair index must be non-negative", lineno)
                sender_ts[k] = ts
            elif rtype == "recv":
                k = _field(record, "k", int, lineno)
                ts = _field(record, "ts_us", int, lineno)
                receiver = _field(record, "receiver", str, lineno)
                entries = arrivals.setdefault(receiver, {})
                if k in entries:
                    raise LogFormatError(f"duplicate recv record for ({receiver!r}, k={k})", lineno)
                entries[k] = ts
                recv_lines.append((lineno, receiver, k, ts))
            else:
                raise LogFormatError(f"unknown record type {rtype!r}", lineno)

    if not sender_ts:
        raise LogFormatError("log contains no send records")
    n_pairs = max(sender_ts) + 1
    if sorted(sender_ts) != list(range(n_pairs)):
        missing = sorted(set(range(n_pairs)) - set(sender_ts))[0]
        raise LogFormatError(f"missing send record for k={missing}")
    for k in range(1, n_pairs):
        if sender_ts[k] <= sender_ts[k - 1]:
            raise LogFormatError(f"sender timestamps not strictly increasing at k={k}")
    for lineno, receiver, k, ts in recv_lines:
        if k not in sender_ts:
            raise LogFormatError(f"recv for unknown pair index k={k}", lineno)
        if ts < sender_ts[k]:
            raise LogFormatError(
                f"arrival at {ts} before send at {sender_ts[k]} for ({receiver!r}, k={k})", lineno
            )

    interval = None
    if n_pairs >= 2:
        delta = sender_ts[1] - sender_ts[0]
        if delta > 0 and all(sender_ts[k] - sender_ts[0] == k * delta for k in range(n_pairs)):
            interval = delta
    return MeasurementLog(
        receivers=frozenset(arrivals),
        sender_ts=sender_ts,
        arrivals=arrivals,
        n_pairs=n_pairs,
        interval_us=interval,
    )


def save_tree(tree: RoutingTree, path) -> None:
    Path(path).write_text(json.dumps(tree.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_tree(path) -> RoutingTree:
    return RoutingTree.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_matrix(cov: CovarianceMatrix, path) -> None:
    Path(path).write_text(json.dumps(cov.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_matrix(path) -> CovarianceMatrix:
    return CovarianceMatrix.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
