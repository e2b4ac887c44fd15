"""Generate the bundled fixture weeks: session logs, price series and configs.

Deterministic (fixed seeds); the committed CSVs are the canonical fixtures,
this script only documents how they were produced.  Two depot scenarios:

* ``sessions_week``: a mixed commuter/midday/overnight week on 30-minute
  slots and a shared 120 A feeder, used for baseline-vs-proposed
  comparison.  Demand concentrates into two short cheap windows (a midday
  dip and a small-hours dip), so optimized schedules share the feeder well
  below full power while the business-as-usual policy charges flat out.
* ``sessions_overnight``: an overnight-parking week on 60-minute slots with
  staggered evening arrivals, modest requests, a single-vehicle-wide
  feeder and no extra-charge headroom, used for weight sweeps.

Prices follow a two-peak daily wholesale shape with narrow cheap dips and
a sub-percent hourly wobble; never more than four vehicles are connected
at once in either week.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

WEEK_START = datetime(2021, 5, 3, tzinfo=timezone.utc)  # Monday 00:00 UTC


def hourly_price(day: int, hour: int, wobble: float = 0.005) -> float:
    weekend = day % 7 in (5, 6)
    if hour < 2:
        base = 0.040
    elif hour < 5:
        base = 0.026   # small-hours dip
    elif hour < 9:
        base = 0.055
    elif hour < 11:
        base = 0.045
    elif hour < 14:
        base = 0.019   # solar dip
    elif hour < 17:
        base = 0.070
    elif hour < 21:
        base = 0.125 if not weekend else 0.095
    else:
        base = 0.055
    return round(base * (1.0 + wobble * np.sin(2.1 * day + 0.7 * hour)), 5)


def write_prices(path: Path, days: int = 9):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "price_usd_per_kwh"])
        for day in range(days):
            for hour in range(24):
                ts = WEEK_START + timedelta(days=day, hours=hour)
                writer.writerow([ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
                                 f"{hourly_price(day, hour):.5f}"])


def write_sessions(path: Path, rows):
    rows = sorted(rows, key=lambda r: r[1])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "connection_time", "disconnect_time",
                         "kwh_requested", "space_id"])
        for sid, arr, dep, kwh, space in rows:
            writer.writerow([sid, arr.strftime("%Y-%m-%dT%H:%M:%SZ"),
                             dep.strftime("%Y-%m-%dT%H:%M:%SZ"), f"{kwh:g}", space])


def mixed_week():
    rng = np.random.default_rng(20210503)
    rows, session = [], 0

    def add(day, arr_h, dur_h, kwh, space):
        nonlocal session
        arr = WEEK_START + timedelta(days=day, hours=float(arr_h))
        dep = arr + timedelta(hours=float(dur_h))
        rows.append((f"S{session:03d}", arr, dep, round(float(kwh), 2), space))
        session += 1

    for day in range(7):
        # commuters: dwell spans the midday dip
        for k in range(2):
            add(day, 7.4 + 0.9 * k + rng.uniform(-0.3, 0.4),
                rng.uniform(7.5, 9.0), rng.uniform(32.0, 40.0), f"CA-{k + 1:02d}")
        # midday top-up on workdays
        if day % 7 not in (5, 6):
            add(day, 11.2 + rng.uniform(-0.4, 0.6), rng.uniform(4.0, 5.0),
                rng.uniform(16.0, 22.0), "CA-03")
        # two overnight parkers sharing the small-hours dip
        for k in range(2):
            add(day, 18.0 + 1.5 * k + rng.uniform(-0.3, 0.3),
                rng.uniform(12.0, 13.5), rng.uniform(34.0, 42.0), f"CA-{k + 4:02d}")
    return rows


def overnight_week():
    rng = np.random.default_rng(7)
    rows, session = [], 0
    for day in range(7):
        for k in range(4):
            arr = WEEK_START + timedelta(
                days=day, hours=17.0 + 4.0 * k / 3.0 + float(rng.uniform(-0.15, 0.2)))
            dep = arr + timedelta(hours=float(rng.uniform(11.5, 13.0)))
            kwh = round(float(rng.uniform(15.0, 19.2)), 2)
            rows.append((f"N{session:03d}", arr, dep, kwh, f"CA-{k + 1:02d}"))
            session += 1
    return rows


MIXED_CONFIG = """\
# Mixed commuter/overnight depot: five spaces on a shared 120 A feeder.
dt_minutes = 30
voltage_v = 410
c_bat_ah = 210
i_max_a = 80
ic_max_a = 120
soc_xtra_fraction = 0.10
battery_cost_usd = 11610
peak_threshold = 0.75
default_soc_start = 0.4
"""

OVERNIGHT_CONFIG = """\
# Overnight depot: hour slots, one-charger feeder, no extra headroom.
dt_minutes = 60
voltage_v = 410
c_bat_ah = 210
i_max_a = 80
ic_max_a = 80
soc_xtra_fraction = 0.0
battery_cost_usd = 11610
peak_threshold = 0.75
default_soc_start = 0.4
"""


def main():
    FIXTURES.mkdir(exist_ok=True)
    write_prices(FIXTURES / "prices_week.csv")
    write_sessions(FIXTURES / "sessions_week.csv", mixed_week())
    (FIXTURES / "config_week.cfg").write_text(MIXED_CONFIG)

    write_prices(FIXTURES / "prices_overnight.csv")
    write_sessions(FIXTURES / "sessions_overnight.csv", overnight_week())
    (FIXTURES / "config_overnight.cfg").write_text(OVERNIGHT_CONFIG)
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
