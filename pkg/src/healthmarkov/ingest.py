"""Streaming claims ingestion: monthly records -> annualized person-years.

Input CSV (UTF-8, header required):

    person_id,sex,age,year,month,cost_yen

with sex in {M, F}, month 1-12 and cost_yen a non-negative integer.  The
parser is a generator with constant memory; aggregation into person-years
holds one small accumulator per (person, year) and is where duplicate
(person, year, month) rows are caught — a pure stream cannot see distant
duplicates without remembering every row.

Annual cost is mean observed monthly cost times 12, rounded half-up to
integer yen, so part-year enrollees are scaled to a full-year equivalent.
"""

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import DataFormatError, DuplicateRecordError, InvalidInputError
from .panel import Panel, PersonYear, build_panel
from .states import DEFAULT_THRESHOLDS, StateThresholds, classify_cost

CLAIMS_COLUMNS = ("person_id", "sex", "age", "year", "month", "cost_yen")

YEAR_CONVENTIONS = ("fiscal", "calendar")


@dataclass(frozen=True)
class ClaimRecord:
    """One monthly claims total for one person."""

    person_id: str
    sex: str
    age: int
    year: int
    month: int
    cost: int


def parse_claims(source) -> Iterator[ClaimRecord]:
    """Yield validated ClaimRecords from a path or text stream, in input order.

    Malformed rows raise DataFormatError carrying the 1-based line number.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="", encoding="utf-8") as fh:
            yield from _parse_stream(fh)
    elif isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        yield from _parse_stream(source)
    else:
        raise InvalidInputError(f"cannot read claims from {type(source).__name__}")


def _parse_stream(fh) -> Iterator[ClaimRecord]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CLAIMS_COLUMNS:
        raise DataFormatError(
            f"claims file must start with header {','.join(CLAIMS_COLUMNS)}", line=1
        )
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CLAIMS_COLUMNS):
            raise DataFormatError(
                f"expected {len(CLAIMS_COLUMNS)} fields, got {len(row)}", line=lineno
            )
        pid, sex, age_s, year_s, month_s, cost_s = (f.strip() for f in row)
        if not pid:
            raise DataFormatError("empty person_id", line=lineno)
        if sex not in ("M", "F"):
            raise DataFormatError(f"sex must be M or F, got {sex!r}", line=lineno)
        try:
            age, year, month, cost = int(age_s), int(year_s), int(month_s), int(cost_s)
        except ValueError:
            raise DataFormatError(
                f"age/year/month/cost must be integers, got {row!r}", line=lineno
            ) from None
        if not 0 <= age <= 120:
            raise DataFormatError(f"age {age} outside 0..120", line=lineno)
        if not 1 <= month <= 12:
            raise DataFormatError(f"month {month} outside 1..12", line=lineno)
        if cost < 0:
            raise DataFormatError(f"negative cost {cost}", line=lineno)
        yield ClaimRecord(pid, sex, age, year, month, cost)


def grouping_year(year: int, month: int, convention: str = "fiscal") -> int:
    """Year a monthly record belongs to; fiscal years run April-March."""
    if convention == "calendar":
        return year
    if convention == "fiscal":
        return year if month >= 4 else year - 1
    raise InvalidInputError(f"year convention must be one of {YEAR_CONVENTIONS}, got {convention!r}")


def round_half_up_ratio(numerator: int, denominator: int) -> int:
    """Exact half-up rounding of numerator/denominator for non-negative ints."""
    q, r = divmod(numerator, denominator)
    return q + (1 if 2 * r >= denominator else 0)


def annualize(
    records: Iterable[ClaimRecord],
    thresholds: StateThresholds = DEFAULT_THRESHOLDS,
    year: int | None = None,
) -> PersonYear:
    """Collapse one person-year's monthly records into a PersonYear.

    Annual cost is sum(costs) / n_months * 12, rounded half-up.  The
    stamped age is the highest age observed in the group (the age reached
    during that year).  ``year`` must be given when the records straddle a
    calendar-year boundary (fiscal grouping).
    """
    records = list(records)
    if not records:
        raise InvalidInputError("a person-year needs at least one monthly record")
    if len(records) > 12:
        raise InvalidInputError(f"{len(records)} records in one person-year (max 12)")
    pids = {r.person_id for r in records}
    if len(pids) > 1:
        raise InvalidInputError(f"records mix persons {sorted(pids)}")
    months = [r.month for r in records]
    if len(set(months)) != len(months):
        raise DuplicateRecordError(
            f"person {records[0].person_id!r} has duplicate months in one year"
        )
    if year is None:
        years = {r.year for r in records}
        if len(years) > 1:
            raise InvalidInputError(
                "records span calendar years; pass the grouping year explicitly"
            )
        year = years.pop()
    total = sum(r.cost for r in records)
    annual = round_half_up_ratio(total * 12, len(records))
    return PersonYear(
        person_id=records[0].person_id,
        age=max(r.age for r in records),
        year=int(year),
        months_observed=len(records),
        annual_cost=annual,
        state=classify_cost(annual, thresholds),
    )


def aggregate_person_years(
    records: Iterable[ClaimRecord],
    thresholds: StateThresholds = DEFAULT_THRESHOLDS,
    year_convention: str = "fiscal",
) -> tuple[list[PersonYear], dict[str, str]]:
    """Group monthly records into PersonYears; returns (person_years, sex map).

    Duplicate (person, year, month) rows and contradictory sex values are
    rejected here, where the per-group accumulators make both visible.
    """
    if year_convention not in YEAR_CONVENTIONS:
        raise InvalidInputError(f"year convention must be one of {YEAR_CONVENTIONS}")
    groups: dict[tuple[str, int], list[ClaimRecord]] = {}
    sex_of: dict[str, str] = {}
    for rec in records:
        gyear = grouping_year(rec.year, rec.month, year_convention)
        prev_sex = sex_of.setdefault(rec.person_id, rec.sex)
        if prev_sex != rec.sex:
            raise DataFormatError(f"person {rec.person_id!r} appears with both sexes")
        key = (rec.person_id, gyear)
        group = groups.setdefault(key, [])
        if any(r.month == rec.month and r.year == rec.year for r in group):
            raise DuplicateRecordError(
                f"duplicate record for person {rec.person_id!r}, year {rec.year}, month {rec.month}"
            )
        group.append(rec)

    person_years = [
        annualize(group, thresholds=thresholds, year=gyear)
        for (pid, gyear), group in sorted(groups.items())
    ]
    return person_years, sex_of


def load_claims_panel(
    source,
    thresholds: StateThresholds = DEFAULT_THRESHOLDS,
    year_convention: str = "fiscal",
    end_year: int | None = None,
) -> Panel:
    """Full ingestion pipeline: parse, annualize, assemble a Panel."""
    person_years, sex_of = aggregate_person_years(
        parse_claims(source), thresholds=thresholds, year_convention=year_convention
    )
    return build_panel(person_years, end_year=end_year, sex=sex_of)
