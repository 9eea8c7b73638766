"""Event-log loading and aggregation into a per-user x per-event matrix.

Accepted inputs:

* CSV with header ``user_id,event_type,value`` (``value`` may be omitted
  from the header or left empty on a row, meaning 1). UTF-8, plain commas,
  no quoted commas.
* JSONL with one object per line: ``{"user_id": ..., "event_type": ...,
  "value": ...}``, ``value`` optional.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InconsistencyError, ParseError

FORMATS = ("csv", "jsonl")


@dataclass(frozen=True)
class EventLogRecord:
    user_id: str
    event_type: str
    value: float = 1.0


@dataclass
class UserMetricMatrix:
    """Per-user outcomes for each event type.

    ``outcomes`` is a CSC sparse matrix of shape (users, events) so that
    column (event) access is cheap; absent entries are outcome 0.
    """

    user_ids: list[str]
    event_ids: list[str]
    outcomes: sp.csc_matrix
    observation_counts: np.ndarray
    user_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.outcomes = sp.csc_matrix(self.outcomes, dtype=np.float64)
        self.outcomes.sum_duplicates()
        self.outcomes.sort_indices()
        self.observation_counts = np.asarray(self.observation_counts, dtype=np.int64)
        n_users, n_events = len(self.user_ids), len(self.event_ids)
        if self.outcomes.shape != (n_users, n_events):
            raise InconsistencyError(
                f"outcome matrix shape {self.outcomes.shape} does not match "
                f"{n_users} users x {n_events} events"
            )
        if self.observation_counts.shape != (n_events,):
            raise InconsistencyError("need one observation count per event")
        if len(set(self.user_ids)) != n_users:
            raise InconsistencyError("duplicate user ids")
        if len(set(self.event_ids)) != n_events:
            raise InconsistencyError("duplicate event ids")
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_events(self) -> int:
        return len(self.event_ids)

    def column(self, event: str | int) -> np.ndarray:
        """Dense outcome vector of one event over all users."""
        j = self.event_ids.index(event) if isinstance(event, str) else event
        return self.outcomes[:, j].toarray().ravel()

    def sparse_column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(row indices, values) of the stored entries of column ``j``."""
        lo, hi = self.outcomes.indptr[j], self.outcomes.indptr[j + 1]
        return self.outcomes.indices[lo:hi], self.outcomes.data[lo:hi]

    def to_dense(self) -> np.ndarray:
        return self.outcomes.toarray()

    def binarized(self) -> "UserMetricMatrix":
        """Per-user indicator of any nonzero outcome; counts are unchanged."""
        ind = self.outcomes.copy()
        ind.data = (ind.data != 0).astype(np.float64)
        ind.eliminate_zeros()
        return UserMetricMatrix(list(self.user_ids), list(self.event_ids), ind,
                                self.observation_counts.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UserMetricMatrix):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.event_ids == other.event_ids
            and np.array_equal(self.observation_counts, other.observation_counts)
            and self.outcomes.shape == other.outcomes.shape
            and (self.outcomes != other.outcomes).nnz == 0
        )

    @classmethod
    def from_dense(
        cls,
        outcomes: np.ndarray,
        user_ids: Sequence[str] | None = None,
        event_ids: Sequence[str] | None = None,
        observation_counts: Sequence[int] | None = None,
    ) -> "UserMetricMatrix":
        """Wrap a dense array; observation counts default to nonzero cells."""
        arr = np.asarray(outcomes, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        n_users, n_events = arr.shape
        if user_ids is None:
            width = len(str(max(n_users - 1, 0)))
            user_ids = [f"u{i:0{width}d}" for i in range(n_users)]
        if event_ids is None:
            event_ids = [f"e{j}" for j in range(n_events)]
        if observation_counts is None:
            observation_counts = np.count_nonzero(arr, axis=0)
        return cls(list(user_ids), list(event_ids), sp.csc_matrix(arr), np.asarray(observation_counts))


def _parse_value(raw: object, line: int) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return 1.0
    if isinstance(raw, bool):
        raise ParseError(line, f"value must be numeric, got {raw!r}")
    try:
        value = float(raw)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise ParseError(line, f"value must be numeric, got {raw!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, f"value must be finite, got {raw!r}")
    return value


def _make_record(user_id: object, event_type: object, raw_value: object, line: int) -> EventLogRecord:
    if not isinstance(user_id, str) or not user_id:
        raise ParseError(line, "missing user_id")
    if not isinstance(event_type, str) or not event_type:
        raise ParseError(line, "missing event_type")
    return EventLogRecord(user_id, event_type, _parse_value(raw_value, line))


def _iter_csv(lines: Iterable[str]) -> Iterator[EventLogRecord]:
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        return
    columns = [c.strip() for c in header.rstrip("\r\n").lstrip("﻿").split(",")]
    if columns[:2] != ["user_id", "event_type"] or columns[2:] not in ([], ["value"]):
        raise ParseError(1, f"expected header user_id,event_type[,value], got {header.strip()!r}")
    for line_no, raw in enumerate(it, start=2):
        row = raw.rstrip("\r\n")
        if not row.strip():
            continue
        fields = row.split(",")
        if len(fields) not in (2, 3):
            raise ParseError(line_no, f"expected 2 or 3 fields, got {len(fields)}")
        value = fields[2] if len(fields) == 3 else None
        yield _make_record(fields[0].strip(), fields[1].strip(), value, line_no)


def _iter_jsonl(lines: Iterable[str]) -> Iterator[EventLogRecord]:
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ParseError(line_no, "expected a JSON object")
        yield _make_record(obj.get("user_id"), obj.get("event_type"), obj.get("value"), line_no)


def iter_events(source: IO[bytes] | IO[str], format: str) -> Iterator[EventLogRecord]:
    """Stream records from a binary or text handle."""
    if format not in FORMATS:
        raise DomainError(f"unknown format {format!r}; expected one of {FORMATS}")
    if isinstance(source, io.TextIOBase):
        text: IO[str] = source
    else:
        text = io.TextIOWrapper(source, encoding="utf-8")  # type: ignore[arg-type]
    return _iter_csv(text) if format == "csv" else _iter_jsonl(text)


def load_events(source: IO[bytes] | IO[str] | bytes | str | Path, format: str) -> list[EventLogRecord]:
    """Parse an event log into records.

    ``source`` may be an open handle, raw bytes, or a filesystem path.
    Raises :class:`ParseError` with the offending line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return list(iter_events(fh, format))
    if isinstance(source, bytes):
        return list(iter_events(io.BytesIO(source), format))
    return list(iter_events(source, format))


def load_universe(path: str | Path) -> list[str]:
    """One user id per line; blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def aggregate(
    records: Iterable[EventLogRecord],
    universe: Iterable[str] | None = None,
) -> UserMetricMatrix:
    """Sum record values per (user, event).

    User and event ids are sorted, and values within a cell are summed in
    sorted order, so the result does not depend on record order. Users that
    appear only in ``universe`` get all-zero rows.
    """
    users: list[str] = []
    events: list[str] = []
    values: list[float] = []
    for rec in records:
        users.append(rec.user_id)
        events.append(rec.event_type)
        values.append(rec.value)

    observed = set(users)
    if universe is not None:
        universe_set = set(universe)
        missing = observed - universe_set
        if missing:
            sample = ", ".join(sorted(missing)[:5])
            raise InconsistencyError(
                f"{len(missing)} observed users are not in the universe (e.g. {sample})"
            )
        user_ids = sorted(universe_set)
    else:
        user_ids = sorted(observed)
    event_ids = sorted(set(events))

    n_users, n_events = len(user_ids), len(event_ids)
    if not values:
        empty = sp.csc_matrix((n_users, n_events), dtype=np.float64)
        return UserMetricMatrix(user_ids, event_ids, empty, np.zeros(n_events, dtype=np.int64))

    u_pos = {u: i for i, u in enumerate(user_ids)}
    e_pos = {e: j for j, e in enumerate(event_ids)}
    rows = np.fromiter((u_pos[u] for u in users), dtype=np.int64, count=len(users))
    cols = np.fromiter((e_pos[e] for e in events), dtype=np.int64, count=len(events))
    vals = np.asarray(values, dtype=np.float64)

    order = np.lexsort((vals, rows, cols))
    rows, cols, vals = rows[order], cols[order], vals[order]
    cell = cols * n_users + rows
    starts = np.flatnonzero(np.r_[True, cell[1:] != cell[:-1]])
    sums = np.add.reduceat(vals, starts)

    outcomes = sp.csc_matrix(
        (sums, (rows[starts], cols[starts])), shape=(n_users, n_events)
    )
    outcomes.eliminate_zeros()
    counts = np.bincount(cols, minlength=n_events).astype(np.int64)
    return UserMetricMatrix(user_ids, event_ids, outcomes, counts)


def save_matrix(matrix: UserMetricMatrix, path: str | Path) -> None:
    """Write a matrix to a compressed ``.npz`` archive (exact round trip)."""
    m = matrix.outcomes
    np.savez_compressed(
        path,
        user_ids=np.asarray(matrix.user_ids, dtype=str),
        event_ids=np.asarray(matrix.event_ids, dtype=str),
        data=m.data,
        indices=m.indices,
        indptr=m.indptr,
        shape=np.asarray(m.shape),
        observation_counts=matrix.observation_counts,
    )


def load_matrix(path: str | Path) -> UserMetricMatrix:
    with np.load(path, allow_pickle=False) as z:
        shape = tuple(int(s) for s in z["shape"])
        outcomes = sp.csc_matrix((z["data"], z["indices"], z["indptr"]), shape=shape)
        return UserMetricMatrix(
            [str(u) for u in z["user_ids"]],
            [str(e) for e in z["event_ids"]],
            outcomes,
            z["observation_counts"],
        )
