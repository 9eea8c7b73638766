import io
import math

import numpy as np
import pytest
import yaml

from aa_guard.errors import DomainError
from aa_guard.ingestion import aggregate, load_events
from aa_guard.stats_core import summarize
from aa_guard.synthetic import (
    EventSpec,
    PopulationSpec,
    event_rng,
    generate,
    load_spec,
    write_events_csv,
)

N = 100_000


def _one(dist, params, users=N, seed=1, event_id="e"):
    return generate(PopulationSpec(users, (EventSpec(event_id, dist, params),), seed)).column(0)


def test_constant():
    assert np.all(_one("constant", {"c": 2.5}, users=50) == 2.5)


def test_bernoulli_mean():
    col = _one("bernoulli", {"p": 0.5})
    assert abs(col.mean() - 0.5) <= 3 * math.sqrt(0.25 / N)


def test_zero_inflated_extreme_skewness():
    col = _one("zero_inflated_lognormal", {"pi": 0.999, "mu": 0.0, "sigma": 3.0})
    assert summarize(col).skewness > 20


def test_zero_inflated_matches_direct_sampling():
    # same recipe written out by hand: keep a lognormal draw with prob 1 - pi
    rng = event_rng(1, "e")
    keep = rng.random(N) >= 0.999
    ref = np.zeros(N)
    ref[keep] = rng.lognormal(0.0, 3.0, keep.sum())
    assert np.array_equal(_one("zero_inflated_lognormal", {"pi": 0.999, "mu": 0.0, "sigma": 3.0}), ref)


# analytic (mean, variance); pareto is excluded because its moments are
# infinite for alpha <= 2 and its sample variance converges too slowly above.
ANALYTIC = [
    ("normal", {"mu": 1.0, "sigma": 2.0}, 1.0, 4.0),
    ("bernoulli", {"p": 0.3}, 0.3, 0.21),
    ("poisson", {"lam": 2.5}, 2.5, 2.5),
    ("lognormal", {"mu": 0.0, "sigma": 0.5}, math.exp(0.125), (math.exp(0.25) - 1) * math.exp(0.25)),
    ("zero_inflated_lognormal", {"pi": 0.5, "mu": 0.0, "sigma": 0.5},
     0.5 * math.exp(0.125), 0.5 * math.exp(0.5) - 0.25 * math.exp(0.25)),
]


@pytest.mark.parametrize("dist,params,mean,var", ANALYTIC)
def test_moments_within_four_sigma(dist, params, mean, var):
    col = _one(dist, params, seed=11)
    assert abs(col.mean() - mean) <= 4 * math.sqrt(var / N)
    # variance of the sample variance ~ (mu4 - var^2) / n; bound via the sample itself
    mu4 = np.mean((col - col.mean()) ** 4)
    assert abs(col.var() - var) <= 4 * math.sqrt((mu4 - var * var) / N)


def test_pareto_support():
    col = _one("pareto", {"alpha": 1.5, "x_min": 2.0}, users=10_000)
    assert col.min() >= 2.0
    # P(X > x) = (x_min / x)^alpha
    assert abs(np.mean(col > 4.0) - 0.5 ** 1.5) <= 4 * math.sqrt(0.35 * 0.65 / 10_000)


def test_deterministic_and_independent_substreams():
    a = EventSpec("a", "normal", {"mu": 0, "sigma": 1})
    b = EventSpec("b", "poisson", {"lam": 1})
    m1 = generate(PopulationSpec(1000, (a, b), seed=5))
    m2 = generate(PopulationSpec(1000, (b, a), seed=5))
    m3 = generate(PopulationSpec(1000, (a,), seed=5))
    assert np.array_equal(m1.column("a"), m2.column("a"))
    assert np.array_equal(m1.column("a"), m3.column("a"))
    assert np.array_equal(m1.column("b"), m2.column("b"))
    assert not np.array_equal(generate(PopulationSpec(1000, (a,), seed=6)).column("a"), m1.column("a"))


def test_observation_counts():
    spec = PopulationSpec(2000, (
        EventSpec("p", "poisson", {"lam": 2.0}),
        EventSpec("l", "zero_inflated_lognormal", {"pi": 0.9, "mu": 0, "sigma": 1}),
        EventSpec("z", "constant", {"c": 0.0}),
    ), seed=3)
    m = generate(spec)
    assert m.observation_counts[0] == m.column("p").sum()
    assert m.observation_counts[1] == np.count_nonzero(m.column("l"))
    assert m.observation_counts[2] == 0


def test_event_log_round_trip():
    spec = PopulationSpec(500, (
        EventSpec("opens", "poisson", {"lam": 1.5}),
        EventSpec("buys", "zero_inflated_lognormal", {"pi": 0.95, "mu": 1, "sigma": 2}),
        EventSpec("score", "normal", {"mu": 0, "sigma": 1}),
    ), seed=9)
    m = generate(spec)
    buf = io.StringIO()
    rows = write_events_csv(spec, m, buf)
    assert rows == int(m.observation_counts.sum())
    back = aggregate(load_events(buf.getvalue().encode(), "csv"), universe=m.user_ids)
    # event ids come back sorted
    order = [m.event_ids.index(e) for e in back.event_ids]
    assert back.user_ids == m.user_ids
    assert np.array_equal(back.to_dense(), m.to_dense()[:, order])
    assert np.array_equal(back.observation_counts, m.observation_counts[order])


@pytest.mark.parametrize("dist,params", [
    ("bernoulli", {"p": 1.5}), ("poisson", {"lam": -1}), ("lognormal", {"mu": 0, "sigma": 0}),
    ("zero_inflated_lognormal", {"pi": 2, "mu": 0, "sigma": 1}), ("pareto", {"alpha": 0, "x_min": 1}),
    ("normal", {"mu": 0}), ("gamma", {"k": 1}), ("constant", {"c": 1, "d": 2}),
    ("constant", {"c": math.inf}),
])
def test_invalid_params(dist, params):
    with pytest.raises(DomainError):
        EventSpec("e", dist, params)


def test_population_validation():
    with pytest.raises(DomainError):
        PopulationSpec(3, ())
    e = EventSpec("e", "constant", {"c": 1})
    with pytest.raises(DomainError):
        PopulationSpec(10, (e, e))


def test_spec_file(tmp_path):
    raw = {"users": 40, "seed": 4, "events": [
        {"id": "x", "distribution": "bernoulli", "params": {"p": 0.5}},
        {"id": "y", "distribution": "constant", "params": {"c": 2}},
    ]}
    p = tmp_path / "pop.yaml"
    p.write_text(yaml.safe_dump(raw), encoding="utf-8")
    spec = load_spec(p)
    assert spec.users == 40 and spec.seed == 4
    assert [e.event_id for e in spec.events] == ["x", "y"]
    assert PopulationSpec.from_dict(spec.to_dict()) == spec


def test_spec_file_missing_field(tmp_path):
    p = tmp_path / "pop.yaml"
    p.write_text("seed: 1\nevents: []\n", encoding="utf-8")
    with pytest.raises(DomainError, match="users"):
        load_spec(p)
