import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vagflow.diagnostics import (
    TABLE_COLUMNS,
    convergence_rates,
    entropy_decay_fit,
    error_norms,
    format_value,
    write_csv,
)


def _constant_offset_run(c, dts):
    times = np.concatenate([[0.0], np.cumsum(dts)])
    pts = np.zeros((3, 2))
    states = [np.full(3, 1.0 + c) for _ in times]
    exact = lambda x, t: np.ones(len(x))
    return times, states, [0.0, *dts], exact, pts


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_norms_of_constant_offset(c):
    dts = [0.1, 0.2, 0.2]
    times, states, dts, exact, pts = _constant_offset_run(c, dts)
    masses = np.array([0.25, 0.25, 0.5])  # total area 1
    e = error_norms(times, states, dts, exact, pts, masses)
    T = times[-1]
    assert e.l1 == pytest.approx(c * T)
    assert e.l2 == pytest.approx(c * math.sqrt(T))
    assert e.linf == pytest.approx(c)


def test_initial_state_excluded_from_norms():
    times = [0.0, 1.0]
    states = [np.array([5.0]), np.array([1.0])]
    e = error_norms(times, states, [0.0, 1.0], lambda x, t: np.ones(len(x)), np.zeros((1, 2)), np.ones(1))
    assert (e.l1, e.l2, e.linf) == (0.0, 0.0, 0.0)


def test_rate_examples():
    assert convergence_rates([1.0, 0.25], [0.2, 0.1]) == [pytest.approx(2.0)]
    assert convergence_rates([1.0, 0.5, 0.25], [0.4, 0.2, 0.1]) == [pytest.approx(1.0)] * 2
    assert math.isnan(convergence_rates([1.0, 0.0], [0.2, 0.1])[0])
    with pytest.raises(ValueError):
        convergence_rates([1.0, 0.5], [0.1, 0.2])
    with pytest.raises(ValueError):
        convergence_rates([1.0], [0.1, 0.2])


@settings(max_examples=50, deadline=None)
@given(
    C=st.floats(1e-3, 1e3),
    p=st.floats(0.25, 4.0),
    h=st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=5, unique=True),
)
def test_rates_recover_exact_power_law(C, p, h):
    h = sorted(h, reverse=True)
    if min(a / b for a, b in zip(h, h[1:])) < 1.01:
        return
    rates = convergence_rates([C * x**p for x in h], h)
    np.testing.assert_allclose(rates, p, rtol=1e-9)


def test_decay_fit_exact_exponential():
    t = np.linspace(0, 10, 21)
    fit = entropy_decay_fit(t, 3.0 * np.exp(-0.7 * t))
    assert fit.slope == pytest.approx(-0.7)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.r_squared == pytest.approx(1.0)


def test_decay_fit_window_and_errors():
    t = np.linspace(0, 10, 21)
    E = np.where(t < 5, 1.0, np.exp(-(t - 5)))
    assert entropy_decay_fit(t, E, (5, 10)).slope == pytest.approx(-1.0)
    assert entropy_decay_fit(t, np.ones_like(t)).r_squared == 1.0
    with pytest.raises(ValueError):
        entropy_decay_fit(t, E - 1.0)
    with pytest.raises(ValueError):
        entropy_decay_fit(t, E, (20, 30))


@settings(max_examples=30, deadline=None)
@given(noise=st.lists(st.floats(-0.3, 0.3), min_size=8, max_size=8))
def test_decay_fit_r_squared_in_unit_interval(noise):
    t = np.arange(8.0)
    fit = entropy_decay_fit(t, np.exp(-t + np.array(noise)))
    assert 0.0 <= fit.r_squared <= 1.0


@pytest.mark.parametrize(
    "value, text",
    [(3, "3"), (np.int64(7), "7"), (True, "1"), (0.1, "0.10000000000000001"), (math.nan, "nan"), ("abc", "abc"), (None, "")],
)
def test_format_value(value, text):
    assert format_value(value) == text


def test_format_value_round_trips(rng):
    for v in rng.normal(size=50) * 10.0 ** rng.integers(-300, 300, 50):
        assert float(format_value(v)) == v


def test_write_csv(tmp_path):
    path = tmp_path / "table.csv"
    write_csv(path, TABLE_COLUMNS, [[1.0] * len(TABLE_COLUMNS)])
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TABLE_COLUMNS)
    assert lines[1] == ",".join(["1"] * len(TABLE_COLUMNS))
    assert [p.name for p in tmp_path.iterdir()] == ["table.csv"]
