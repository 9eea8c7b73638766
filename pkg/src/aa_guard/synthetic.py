"""Seeded synthetic user populations.

Population spec files are YAML (JSON also parses)::

    users: 100000
    seed: 7
    events:
      - id: open_app
        distribution: poisson
        params: {lam: 3.0}
      - id: purchase
        distribution: zero_inflated_lognormal
        params: {pi: 0.999, mu: 0.0, sigma: 3.0}

Supported distributions and their ``params``:

========================  =================================  ===========
distribution              params                             kind
========================  =================================  ===========
constant                  c                                  value
normal                    mu, sigma (sigma > 0)              value
bernoulli                 p in [0, 1]                        count
poisson                   lam >= 0                           count
lognormal                 mu, sigma > 0                      value
zero_inflated_lognormal   pi in [0, 1], mu, sigma > 0        value
pareto                    alpha > 0, x_min > 0               value
========================  =================================  ===========

For *count* families each unit of a user's outcome is one logged instance,
so an event's observation count is the column sum. For *value* families a
user contributes one logged instance carrying the value if it is nonzero.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Mapping

import numpy as np
import scipy.sparse as sp
import yaml

from .errors import DomainError
from .ingestion import UserMetricMatrix

COUNT_FAMILIES = frozenset({"bernoulli", "poisson"})

_REQUIRED = {
    "constant": ("c",),
    "normal": ("mu", "sigma"),
    "bernoulli": ("p",),
    "poisson": ("lam",),
    "lognormal": ("mu", "sigma"),
    "zero_inflated_lognormal": ("pi", "mu", "sigma"),
    "pareto": ("alpha", "x_min"),
}
DISTRIBUTIONS = tuple(_REQUIRED)


@dataclass(frozen=True)
class EventSpec:
    event_id: str
    distribution: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        validate_params(self.distribution, self.params)


@dataclass(frozen=True)
class PopulationSpec:
    users: int
    events: tuple[EventSpec, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if self.users < 4:
            raise DomainError(f"a population needs at least 4 users, got {self.users}")
        ids = [e.event_id for e in self.events]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate event ids in population spec")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PopulationSpec":
        try:
            events = tuple(
                EventSpec(str(e["id"]), str(e["distribution"]),
                          {k: float(v) for k, v in (e.get("params") or {}).items()})
                for e in raw["events"]
            )
            return cls(users=int(raw["users"]), events=events, seed=int(raw.get("seed", 0)))
        except KeyError as exc:
            raise DomainError(f"population spec is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "users": self.users,
            "seed": self.seed,
            "events": [
                {"id": e.event_id, "distribution": e.distribution, "params": dict(e.params)}
                for e in self.events
            ],
        }


def load_spec(path: str | Path) -> PopulationSpec:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, Mapping):
        raise DomainError(f"{path}: population spec must be a mapping")
    return PopulationSpec.from_dict(raw)


def validate_params(distribution: str, params: Mapping[str, float]) -> None:
    if distribution not in _REQUIRED:
        raise DomainError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    missing = [k for k in _REQUIRED[distribution] if k not in params]
    if missing:
        raise DomainError(f"{distribution} needs parameters {missing}")
    extra = set(params) - set(_REQUIRED[distribution])
    if extra:
        raise DomainError(f"{distribution} does not take parameters {sorted(extra)}")
    for k, v in params.items():
        if not math.isfinite(v):
            raise DomainError(f"{distribution}.{k} must be finite")
    if distribution == "bernoulli" and not 0.0 <= params["p"] <= 1.0:
        raise DomainError("bernoulli p must lie in [0, 1]")
    if distribution == "poisson" and params["lam"] < 0.0:
        raise DomainError("poisson lam must be >= 0")
    if distribution in ("normal", "lognormal", "zero_inflated_lognormal") and params["sigma"] <= 0.0:
        raise DomainError(f"{distribution} sigma must be > 0")
    if distribution == "zero_inflated_lognormal" and not 0.0 <= params["pi"] <= 1.0:
        raise DomainError("zero-inflation mass pi must lie in [0, 1]")
    if distribution == "pareto" and (params["alpha"] <= 0.0 or params["x_min"] <= 0.0):
        raise DomainError("pareto needs alpha > 0 and x_min > 0")


def event_rng(seed: int, event_id: str) -> np.random.Generator:
    """Independent generator for one event column, keyed on its id."""
    key = int.from_bytes(hashlib.blake2b(event_id.encode("utf-8"), digest_size=8).digest(), "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


def sample(distribution: str, params: Mapping[str, float], size: int, rng: np.random.Generator) -> np.ndarray:
    validate_params(distribution, params)
    if distribution == "constant":
        return np.full(size, float(params["c"]))
    if distribution == "normal":
        return rng.normal(params["mu"], params["sigma"], size)
    if distribution == "bernoulli":
        return (rng.random(size) < params["p"]).astype(np.float64)
    if distribution == "poisson":
        return rng.poisson(params["lam"], size).astype(np.float64)
    if distribution == "lognormal":
        return rng.lognormal(params["mu"], params["sigma"], size)
    if distribution == "zero_inflated_lognormal":
        nonzero = rng.random(size) >= params["pi"]
        out = np.zeros(size)
        out[nonzero] = rng.lognormal(params["mu"], params["sigma"], int(nonzero.sum()))
        return out
    # numpy's pareto is the Lomax form; shift and scale to classical Pareto
    return params["x_min"] * (1.0 + rng.pareto(params["alpha"], size))


def observation_count(distribution: str, column: np.ndarray) -> int:
    if distribution in COUNT_FAMILIES:
        return int(column.sum())
    return int(np.count_nonzero(column))


def user_ids(n: int) -> list[str]:
    width = len(str(max(n - 1, 0)))
    return [f"u{i:0{width}d}" for i in range(n)]


def generate(spec: PopulationSpec) -> UserMetricMatrix:
    """Draw every event column from its own seeded substream.

    Adding, removing or reordering events leaves the other columns unchanged.
    """
    columns = []
    counts = []
    for ev in spec.events:
        col = sample(ev.distribution, ev.params, spec.users, event_rng(spec.seed, ev.event_id))
        columns.append(sp.csc_matrix(col[:, None]))
        counts.append(observation_count(ev.distribution, col))
    if columns:
        outcomes = sp.hstack(columns, format="csc")
    else:
        outcomes = sp.csc_matrix((spec.users, 0))
    return UserMetricMatrix(user_ids(spec.users), [e.event_id for e in spec.events],
                            outcomes, np.asarray(counts, dtype=np.int64))


def write_events_csv(spec: PopulationSpec, matrix: UserMetricMatrix, out: IO[str]) -> int:
    """Write ``matrix`` as an event log that aggregates back to the same matrix.

    Count families emit one ``value=1`` row per unit; value families emit one
    row per nonzero user carrying the exact value. Returns the row count.
    """
    families = {e.event_id: e.distribution for e in spec.events}
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["user_id", "event_type", "value"])
    rows = 0
    for j, event in enumerate(matrix.event_ids):
        idx, vals = matrix.sparse_column(j)
        counted = families[event] in COUNT_FAMILIES
        for i, v in zip(idx, vals):
            uid = matrix.user_ids[i]
            if counted:
                for _ in range(int(v)):
                    writer.writerow([uid, event, "1"])
                rows += int(v)
            else:
                writer.writerow([uid, event, repr(float(v))])
                rows += 1
    return rows
