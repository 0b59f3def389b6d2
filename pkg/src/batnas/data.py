"""Case-count data pipeline.

Reads ECDC-style daily case CSVs, augments them with holiday-derived
features (day type and gathering tendency), frames the series into
sliding windows for one-step-ahead forecasting, splits chronologically,
and min-max scales into [0, 1] using statistics from the training
portion only.
"""

from __future__ import annotations

import csv
import datetime
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

FEATURES_AUGMENTED = ("cases", "c_num", "d_type", "gathering")
FEATURES_ORIGINAL = ("cases", "c_num")

_ECDC_DATE_FORMAT = "%d/%m/%Y"
_REQUIRED_COLUMNS = ("dateRep", "cases", "deaths", "countriesAndTerritories")
AUGMENTED_HEADER = ("index", "cases", "c_num", "d_type", "gathering")


@dataclass(frozen=True)
class RawRecord:
    """One daily row of the source data for a single country."""

    date: datetime.date
    cases: int
    deaths: int
    country: str
    cumulative_number: float | None

    @property
    def day(self) -> int:
        return self.date.day

    @property
    def month(self) -> int:
        return self.date.month

    @property
    def year(self) -> int:
        return self.date.year


@dataclass(frozen=True)
class HolidayCalendar:
    dates: frozenset[datetime.date]

    def __contains__(self, date: datetime.date) -> bool:
        return date in self.dates

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class AugmentedRecord:
    """Indexed series row with holiday-derived feature bits."""

    index: int
    cases: int
    c_num: float
    d_type: int
    gathering: int

    def __post_init__(self):
        if self.index < 0:
            raise DataError("index must be non-negative")
        if self.d_type not in (0, 1) or self.gathering not in (0, 1):
            raise DataError("d_type and gathering must be bits")
        if self.d_type == 1 and self.gathering != 1:
            raise DataError("a holiday must also count as a gathering day")


@dataclass
class FramedDataset:
    """Supervised windows: inputs (n, t, f), targets (n,) of next-day cases."""

    inputs: np.ndarray
    targets: np.ndarray
    timesteps: int
    scaler: "Scaler | None" = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 3:
            raise DataError(f"inputs must be n x t x f, got shape {self.inputs.shape}")
        if self.targets.ndim != 1 or len(self.targets) != len(self.inputs):
            raise DataError("targets must be one value per input window")
        if self.inputs.shape[1] != self.timesteps:
            raise DataError(f"inputs have {self.inputs.shape[1]} timesteps, expected {self.timesteps}")

    @property
    def sample_count(self) -> int:
        return self.inputs.shape[0]

    @property
    def feature_count(self) -> int:
        return self.inputs.shape[2]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _detect_cumulative_column(fieldnames: Sequence[str]) -> str | None:
    for name in fieldnames:
        if "cumulative" in name.lower():
            return name
    return None


def ingest(
    csv_source: str | Path,
    country: str | None = None,
    cumulative_column: str | None = None,
) -> list[RawRecord]:
    """Read an ECDC-format CSV into chronological records for one country.

    ``dateRep`` is day-first (DD/MM/YYYY). The 14-day cumulative column is
    found by name (any column containing "cumulative") unless named
    explicitly; empty cells there stay absent. Rows are sorted ascending by
    date and exact date duplicates are dropped (first occurrence wins).
    """
    path = Path(csv_source)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None:
        raise DataError(f"{path}: empty file")
    missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DataError(f"{path}: missing required columns {missing}")
    if cumulative_column is None:
        cumulative_column = _detect_cumulative_column(reader.fieldnames)
    elif cumulative_column not in reader.fieldnames:
        raise DataError(f"{path}: no column named {cumulative_column!r}")

    records: list[RawRecord] = []
    countries_seen: set[str] = set()
    for line_no, row in enumerate(reader, start=2):
        row_country = (row.get("countriesAndTerritories") or "").strip()
        countries_seen.add(row_country)
        if country is not None and row_country != country:
            continue
        try:
            date = datetime.datetime.strptime(row["dateRep"].strip(), _ECDC_DATE_FORMAT).date()
            cases = int(row["cases"])
            deaths = int(row["deaths"])
        except (ValueError, AttributeError, KeyError) as exc:
            raise DataError(f"{path}:{line_no}: malformed row ({exc})") from exc
        cumulative: float | None = None
        if cumulative_column is not None:
            cell = (row.get(cumulative_column) or "").strip()
            if cell:
                try:
                    cumulative = float(cell)
                except ValueError as exc:
                    raise DataError(f"{path}:{line_no}: bad cumulative value {cell!r}") from exc
        records.append(RawRecord(date, cases, deaths, row_country, cumulative))

    if country is None and len(countries_seen) > 1:
        raise DataError(
            f"{path}: multiple countries present ({sorted(countries_seen)}); pass a country filter"
        )
    if not records:
        label = country if country is not None else "any country"
        raise DataError(f"{path}: no rows for {label}")
    records.sort(key=lambda r: r.date)
    deduped: list[RawRecord] = []
    for record in records:
        if deduped and deduped[-1].date == record.date:
            continue
        deduped.append(record)
    return deduped


def load_holidays(csv_source: str | Path) -> HolidayCalendar:
    """Read a holiday list CSV with a single ISO-8601 ``date`` column."""
    path = Path(csv_source)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or "date" not in reader.fieldnames:
        raise DataError(f"{path}: holiday file needs a 'date' column")
    dates = set()
    for line_no, row in enumerate(reader, start=2):
        cell = (row.get("date") or "").strip()
        if not cell:
            continue
        try:
            dates.add(datetime.date.fromisoformat(cell))
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: bad date {cell!r} (expected YYYY-MM-DD)") from exc
    return HolidayCalendar(frozenset(dates))


# ---------------------------------------------------------------------------
# Feature augmentation
# ---------------------------------------------------------------------------

def augment(
    records: Sequence[RawRecord],
    calendar: HolidayCalendar,
    index_offset: int = 0,
) -> list[AugmentedRecord]:
    """Attach d_type and gathering bits and a running index.

    d_type flags calendar holidays. gathering additionally flags a working
    day squeezed between two holidays, since people tend to bridge it.
    Dates must be consecutive; absent cumulative values become 0.0 (the
    14-day rate is effectively zero before the series ramps up).
    """
    if not records:
        raise DataError("cannot augment an empty record list")
    for prev, cur in zip(records, records[1:]):
        gap = (cur.date - prev.date).days
        if gap != 1:
            raise DataError(
                f"dates must be consecutive; {prev.date} is followed by {cur.date} (gap {gap})"
            )
    one_day = datetime.timedelta(days=1)
    augmented = []
    for position, record in enumerate(records):
        d_type = 1 if record.date in calendar else 0
        sandwiched = (record.date - one_day) in calendar and (record.date + one_day) in calendar
        gathering = 1 if d_type == 1 or sandwiched else 0
        c_num = record.cumulative_number if record.cumulative_number is not None else 0.0
        augmented.append(
            AugmentedRecord(index_offset + position, record.cases, c_num, d_type, gathering)
        )
    return augmented


def to_feature_matrix(records: Sequence[AugmentedRecord], mode: str = "augmented") -> np.ndarray:
    """Rows of (cases, c_num, d_type, gathering) or just (cases, c_num)."""
    if mode == "augmented":
        return np.array([[r.cases, r.c_num, r.d_type, r.gathering] for r in records], dtype=np.float64)
    if mode == "original":
        return np.array([[r.cases, r.c_num] for r in records], dtype=np.float64)
    raise DataError(f"unknown feature mode {mode!r} (use 'augmented' or 'original')")


def write_augmented_csv(records: Sequence[AugmentedRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AUGMENTED_HEADER)
        for r in records:
            writer.writerow([r.index, r.cases, repr(r.c_num), r.d_type, r.gathering])


def read_augmented_csv(path: str | Path) -> list[AugmentedRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    if tuple(h.strip() for h in header) != AUGMENTED_HEADER:
        raise DataError(f"{path}: expected header {','.join(AUGMENTED_HEADER)}")
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise DataError(f"{path}:{line_no}: expected 5 fields, got {len(row)}")
        try:
            records.append(
                AugmentedRecord(int(row[0]), int(row[1]), float(row[2]), int(row[3]), int(row[4]))
            )
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}:{line_no}: malformed row ({exc})") from exc
    if not records:
        raise DataError(f"{path}: no data rows")
    for prev, cur in zip(records, records[1:]):
        if cur.index != prev.index + 1:
            raise DataError(f"{path}: indices must be consecutive ({prev.index} then {cur.index})")
    return records


# ---------------------------------------------------------------------------
# Framing and splitting
# ---------------------------------------------------------------------------

def frame(series, timesteps: int) -> FramedDataset:
    """Sliding windows of ``timesteps`` rows; each predicts the next day's
    cases (column 0). Yields n = N − t samples."""
    if isinstance(series, np.ndarray):
        matrix = np.asarray(series, dtype=np.float64)
    else:
        matrix = to_feature_matrix(series, mode="augmented")
    if matrix.ndim != 2:
        raise DataError(f"series must be a 2-d matrix, got shape {matrix.shape}")
    n_rows = matrix.shape[0]
    if timesteps < 1:
        raise DataError("timesteps must be >= 1")
    if n_rows <= timesteps:
        raise DataError(f"need more than {timesteps} rows to frame, got {n_rows}")
    windows = np.lib.stride_tricks.sliding_window_view(matrix, (timesteps, matrix.shape[1]))
    inputs = windows[: n_rows - timesteps, 0].copy()
    targets = matrix[timesteps:, 0].copy()
    return FramedDataset(inputs, targets, timesteps)


def split(framed: FramedDataset, ratio: float = 0.8) -> tuple[FramedDataset, FramedDataset]:
    """Chronological split: first floor(ratio*n) windows train, rest test."""
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio must be in (0,1), got {ratio}")
    n = framed.sample_count
    train_n = math.floor(ratio * n)
    if train_n == 0 or train_n == n:
        raise DataError(f"split of {n} samples at ratio {ratio} leaves an empty side")
    train = FramedDataset(framed.inputs[:train_n], framed.targets[:train_n], framed.timesteps, framed.scaler)
    test = FramedDataset(framed.inputs[train_n:], framed.targets[train_n:], framed.timesteps, framed.scaler)
    return train, test


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    """Per-feature min-max transform into [0,1], fitted on training data.

    The target shares column 0's parameters (targets are future values of
    that feature). Values outside the fitted range map linearly outside
    [0,1]; nothing is clipped.
    """

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=np.float64))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=np.float64))
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise DataError("scaler needs matching 1-d min and max vectors")
        if np.any(self.maxs < self.mins):
            raise DataError("scaler max must be >= min per feature")

    @property
    def feature_count(self) -> int:
        return len(self.mins)

    def _spans(self) -> np.ndarray:
        spans = self.maxs - self.mins
        return np.where(spans == 0.0, 1.0, spans)

    def transform_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape[-1] != self.feature_count:
            raise DataError(
                f"inputs have {inputs.shape[-1]} features, scaler was fitted on {self.feature_count}"
            )
        scaled = (inputs - self.mins) / self._spans()
        constant = self.maxs == self.mins
        if np.any(constant):
            scaled[..., constant] = 0.0
        return scaled

    def transform_targets(self, targets: np.ndarray) -> np.ndarray:
        targets = np.asarray(targets, dtype=np.float64)
        if self.maxs[0] == self.mins[0]:
            return np.zeros_like(targets)
        return (targets - self.mins[0]) / (self.maxs[0] - self.mins[0])

    def inverse_transform_targets(self, scaled: np.ndarray) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=np.float64)
        return scaled * (self.maxs[0] - self.mins[0]) + self.mins[0]

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Scaler":
        return cls(np.array(payload["mins"]), np.array(payload["maxs"]))


def fit_scaler(train: FramedDataset) -> Scaler:
    """Per-feature min/max over the training windows; training targets fold
    into column 0 so a target beyond the last window still fits the range."""
    if train.sample_count == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    flat = train.inputs.reshape(-1, train.feature_count)
    mins = flat.min(axis=0)
    maxs = flat.max(axis=0)
    mins[0] = min(mins[0], float(train.targets.min()))
    maxs[0] = max(maxs[0], float(train.targets.max()))
    return Scaler(mins, maxs)


def apply_scaler(scaler: Scaler, framed: FramedDataset) -> FramedDataset:
    return FramedDataset(
        scaler.transform_inputs(framed.inputs),
        scaler.transform_targets(framed.targets),
        framed.timesteps,
        scaler,
    )


def prepare_supervised(
    matrix: np.ndarray,
    timesteps: int,
    ratio: float = 0.8,
    split_first: bool = False,
) -> tuple[FramedDataset, FramedDataset, Scaler]:
    """Frame, split, and scale in one go.

    Default order is frame-then-split, so adjacent train/test windows share
    source days. With ``split_first`` the raw series is cut at
    floor(ratio*N) rows and each side framed separately, which keeps test
    days out of training windows entirely.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if split_first:
        if not 0.0 < ratio < 1.0:
            raise DataError(f"split ratio must be in (0,1), got {ratio}")
        boundary = math.floor(ratio * matrix.shape[0])
        train_rows, test_rows = matrix[:boundary], matrix[boundary:]
        if train_rows.shape[0] <= timesteps or test_rows.shape[0] <= timesteps:
            raise DataError(
                f"split at row {boundary} leaves too few rows to frame {timesteps} timesteps"
            )
        train = frame(train_rows, timesteps)
        test = frame(test_rows, timesteps)
    else:
        framed = frame(matrix, timesteps)
        train, test = split(framed, ratio)
    scaler = fit_scaler(train)
    return apply_scaler(scaler, train), apply_scaler(scaler, test), scaler
