"""Shared fixtures: paths to the bundled weeks and small reusable instances."""

from pathlib import Path

import pytest

from fleetcharge.fade import FadeModelParams
from fleetcharge.problem import ChargingTask, build_instance

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session")
def fade_params():
    return FadeModelParams()


@pytest.fixture(scope="session")
def fixture_paths():
    return {
        "sessions_week": FIXTURES / "sessions_week.csv",
        "prices_week": FIXTURES / "prices_week.csv",
        "config_week": FIXTURES / "config_week.cfg",
        "sessions_overnight": FIXTURES / "sessions_overnight.csv",
        "prices_overnight": FIXTURES / "prices_overnight.csv",
        "config_overnight": FIXTURES / "config_overnight.cfg",
    }


def make_instance(
    tasks,
    prices=0.10,
    t_s=0.0,
    dt=0.5,
    i_max=80.0,
    ic_max=400.0,
    voltage=410.0,
    c_bat=210.0,
    soc_xtra_ah=0.0,
    weights=(1.0, 1.0, 1.0),
    params=None,
):
    """Small-instance builder with scalar or callable prices."""
    prices_fn = prices if callable(prices) else (lambda t, p=prices: p)
    return build_instance(
        tasks,
        t_s=t_s,
        dt=dt,
        prices_fn=prices_fn,
        i_max=i_max,
        ic_max=ic_max,
        voltage=voltage,
        c_bat=c_bat,
        soc_xtra_ah=soc_xtra_ah,
        weights=weights,
        fade_params=params or FadeModelParams(),
    )


@pytest.fixture
def two_by_three_instance():
    """Two vehicles on a three-slot grid with distinct prices, from the
    frozen reference computation in test_problem."""
    tasks = [
        ChargingTask("A", 0.0, 1.0, 0.50, 0.80),
        ChargingTask("B", 0.0, 1.5, 0.40, 0.85),
    ]
    price_steps = {0.0: 0.30, 0.5: 0.10, 1.0: 0.20}
    return make_instance(
        tasks,
        prices=lambda t: price_steps[t],
        dt=0.5,
        i_max=60.0,
        ic_max=120.0,
        voltage=400.0,
        c_bat=200.0,
        soc_xtra_ah=10.0,
    )
