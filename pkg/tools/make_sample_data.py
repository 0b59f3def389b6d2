"""Regenerate the bundled sample dataset under data/.

Writes a synthetic country's daily-case series in the ECDC column
layout, a matching holiday list, and the augmented CSV produced by the
package pipeline. The series is seeded and fully deterministic, so the
committed files can always be rebuilt bit for bit.

The case process deliberately depends on the holiday features: reported
cases dip on holidays (less testing) and rise a few days after
gathering days (new infections), so models that see d_type/gathering
have something real to exploit.

Usage: python3 tools/make_sample_data.py [output_dir]
"""

import csv
import datetime
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from batnas import data  # noqa: E402

COUNTRY = "Samistan"
GEO_ID = "SM"
POPULATION = 83_992_949
START = datetime.date(2020, 2, 20)
DAYS = 240
SEED = 20200220

CUMULATIVE_COLUMN = "Cumulative_number_for_14_days_of_COVID-19_cases_per_100000"

HOLIDAY_DIP = 0.30          # reporting drop on the holiday itself
GATHERING_LAG_4 = 0.35      # case bump 4 days after a gathering day
GATHERING_LAG_6 = 0.20      # and a smaller echo at 6 days


def holiday_dates() -> set[datetime.date]:
    dates = set()
    for offset in range(DAYS):
        day = START + datetime.timedelta(days=offset)
        if day.weekday() == 4:  # weekly rest day
            dates.add(day)
    # spring festival cluster
    for day in (datetime.date(2020, 3, 19), datetime.date(2020, 3, 20),
                datetime.date(2020, 3, 21), datetime.date(2020, 3, 22),
                datetime.date(2020, 3, 23), datetime.date(2020, 4, 1)):
        dates.add(day)
    # pairs one workday apart, to produce sandwiched gathering days
    for day in (datetime.date(2020, 5, 4), datetime.date(2020, 5, 6),
                datetime.date(2020, 7, 7), datetime.date(2020, 7, 9)):
        dates.add(day)
    return dates


def build_series() -> tuple[list[datetime.date], np.ndarray, np.ndarray, set[datetime.date]]:
    rng = np.random.default_rng(SEED)
    holidays = holiday_dates()
    dates = [START + datetime.timedelta(days=k) for k in range(DAYS)]
    d_type = np.array([1.0 if day in holidays else 0.0 for day in dates])
    one = datetime.timedelta(days=1)
    gathering = np.array(
        [
            1.0 if d_type[k] == 1.0 or (dates[k] - one in holidays and dates[k] + one in holidays)
            else 0.0
            for k in range(DAYS)
        ]
    )

    k = np.arange(DAYS, dtype=np.float64)
    base = (
        150.0
        + 1900.0 * np.exp(-(((k - 60.0) / 24.0) ** 2))
        + 2600.0 * np.exp(-(((k - 155.0) / 36.0) ** 2))
    )
    lag4 = np.concatenate([np.zeros(4), gathering[:-4]])
    lag6 = np.concatenate([np.zeros(6), gathering[:-6]])
    effect = (1.0 - HOLIDAY_DIP * d_type) * (1.0 + GATHERING_LAG_4 * lag4 + GATHERING_LAG_6 * lag6)
    noise = rng.normal(0.0, 0.02, size=DAYS)
    cases = np.maximum(base * effect * (1.0 + noise), 0.0)
    cases = np.rint(cases)

    deaths = np.rint(np.concatenate([np.zeros(7), cases[:-7]]) * 0.045)
    return dates, cases.astype(int), deaths.astype(int), holidays


def write_ecdc(path: Path, dates, cases, deaths) -> None:
    header = [
        "dateRep", "day", "month", "year", "cases", "deaths",
        "countriesAndTerritories", "geoId", "popData2019", CUMULATIVE_COLUMN,
    ]
    rows = []
    for idx in range(len(dates)):
        day = dates[idx]
        if idx >= 13:
            window = cases[idx - 13 : idx + 1].sum()
            cumulative = f"{window * 100000.0 / POPULATION:.5f}"
        else:
            cumulative = ""
        rows.append(
            [
                day.strftime("%d/%m/%Y"), day.day, day.month, day.year,
                cases[idx], deaths[idx], COUNTRY, GEO_ID, POPULATION, cumulative,
            ]
        )
    # source feeds list newest first; ingest must sort
    rows.reverse()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_holidays(path: Path, holidays) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"])
        for day in sorted(holidays):
            writer.writerow([day.isoformat()])


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    dates, cases, deaths, holidays = build_series()

    ecdc_path = out_dir / "sample_ecdc.csv"
    holiday_path = out_dir / "sample_holidays.csv"
    augmented_path = out_dir / "sample_augmented.csv"

    write_ecdc(ecdc_path, dates, cases, deaths)
    write_holidays(holiday_path, holidays)

    records = data.ingest(ecdc_path, country=COUNTRY)
    calendar = data.load_holidays(holiday_path)
    augmented = data.augment(records, calendar)
    data.write_augmented_csv(augmented, augmented_path)

    holiday_count = sum(r.d_type for r in augmented)
    gathering_count = sum(r.gathering for r in augmented)
    print(f"wrote {ecdc_path} ({len(records)} rows)")
    print(f"wrote {holiday_path} ({len(calendar)} holidays)")
    print(f"wrote {augmented_path} ({holiday_count} holiday rows, {gathering_count} gathering rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
