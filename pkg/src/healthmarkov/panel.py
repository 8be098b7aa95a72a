"""Longitudinal panel of per-person annual cost states.

A Panel stores one row per person and one column per age, dense over the
common age range.  Cell codes in the state matrix:

    0..4   observed state (Q1..Q5 as 0-based codes)
    -1     in-panel year with no observed months (missing marker): a gap
           between two observed years, or trailing years after the person
           left the data but before the panel's final year
    -2     outside the person's enrolment span (before entry, or past the
           panel's final year for that person's birth cohort)

Estimators only ever distinguish "observed" (>= 0) from "not observed";
the -1 / -2 split exists so that attrition can be reported as its own
category while years outside the data window stay invisible.
"""

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    ConfigError,
    DataFormatError,
    DuplicateRecordError,
    EmptyCohortError,
    InvalidInputError,
)
from .states import MISSING, HealthState

MISSING_CODE = -1
ABSENT_CODE = -2

PANEL_CACHE_COLUMNS = ("person_id", "age", "year", "months_observed", "annual_cost", "state")


@dataclass(frozen=True)
class PersonYear:
    """One subject's annualized cost and state at one age."""

    person_id: str
    age: int
    year: int
    months_observed: int
    annual_cost: int
    state: HealthState


@dataclass(frozen=True)
class MissingMarker:
    """Explicit record of an in-panel year with no observed months."""

    person_id: str
    age: int
    year: int


class Panel:
    """Aligned per-person state/cost trajectories.

    Rows are canonically ordered by person_id so that every downstream
    computation is independent of input order.
    """

    def __init__(self, person_ids, birth_years, age_min, states, costs, months, sex=None):
        person_ids = np.asarray(person_ids, dtype=object)
        birth_years = np.asarray(birth_years, dtype=np.int32)
        states = np.asarray(states, dtype=np.int8)
        costs = np.asarray(costs, dtype=np.int64)
        months = np.asarray(months, dtype=np.int8)
        n = person_ids.shape[0]
        if not (birth_years.shape[0] == states.shape[0] == costs.shape[0] == months.shape[0] == n):
            raise InvalidInputError("panel arrays disagree on the number of persons")
        if states.shape != costs.shape or states.shape != months.shape:
            raise InvalidInputError("panel matrices disagree on shape")
        if sex is not None:
            sex = np.asarray(sex, dtype=object)
            if sex.shape[0] != n:
                raise InvalidInputError("sex array length mismatch")

        order = np.argsort(person_ids, kind="stable")
        if not np.array_equal(order, np.arange(n)):
            person_ids = person_ids[order]
            birth_years = birth_years[order]
            states = states[order]
            costs = costs[order]
            months = months[order]
            if sex is not None:
                sex = sex[order]

        if states.size:
            bad = (states < ABSENT_CODE) | (states > 4)
            if bad.any():
                raise InvalidInputError("state codes must lie in {-2, -1, 0..4}")
            observed = states >= 0
            if (costs[observed] < 0).any():
                raise InvalidInputError("observed annual costs must be >= 0")

        self.person_ids = person_ids
        self.birth_years = birth_years
        self.age_min = int(age_min)
        self.states = states
        self.costs = costs
        self.months = months
        self.sex = sex

    # -- basic geometry ----------------------------------------------------

    @property
    def n_persons(self) -> int:
        return len(self.person_ids)

    @property
    def n_ages(self) -> int:
        return self.states.shape[1]

    @property
    def age_max(self) -> int:
        return self.age_min + self.n_ages - 1

    @property
    def ages(self) -> range:
        return range(self.age_min, self.age_max + 1)

    def column(self, age: int) -> int:
        if not (self.age_min <= age <= self.age_max):
            raise InvalidInputError(f"age {age} outside panel range {self.age_min}..{self.age_max}")
        return age - self.age_min

    def has_age(self, age: int) -> bool:
        return self.age_min <= age <= self.age_max

    @property
    def min_year(self) -> int:
        """Earliest observed year; base level for year dummies."""
        observed = self.states >= 0
        if not observed.any():
            raise EmptyCohortError("panel has no observations")
        years = self.birth_years[:, None] + (self.age_min + np.arange(self.n_ages))[None, :]
        return int(years[observed].min())

    # -- iteration / serialization -----------------------------------------

    def person_years(self) -> Iterator[PersonYear]:
        """Observed entries, ordered by (person, age)."""
        for p in range(self.n_persons):
            for c in np.where(self.states[p] >= 0)[0]:
                age = self.age_min + int(c)
                yield PersonYear(
                    person_id=str(self.person_ids[p]),
                    age=age,
                    year=int(self.birth_years[p]) + age,
                    months_observed=int(self.months[p, c]),
                    annual_cost=int(self.costs[p, c]),
                    state=HealthState(int(self.states[p, c]) + 1),
                )

    def markers(self) -> Iterator[MissingMarker]:
        for p in range(self.n_persons):
            for c in np.where(self.states[p] == MISSING_CODE)[0]:
                age = self.age_min + int(c)
                yield MissingMarker(
                    person_id=str(self.person_ids[p]),
                    age=age,
                    year=int(self.birth_years[p]) + age,
                )

    def summary(self) -> dict:
        observed = self.states >= 0
        missing = self.states == MISSING_CODE
        n_obs = int(observed.sum())
        n_miss = int(missing.sum())
        return {
            "persons": self.n_persons,
            "person_years": n_obs,
            "missing_markers": n_miss,
            "missing_share": (n_miss / (n_obs + n_miss)) if (n_obs + n_miss) else 0.0,
            "age_min": self.age_min,
            "age_max": self.age_max,
        }

    def write_cache(self, path) -> int:
        """Write the canonical one-row-per-cell CSV; returns rows written."""
        n_rows = 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(PANEL_CACHE_COLUMNS)
            for p in range(self.n_persons):
                pid = str(self.person_ids[p])
                birth = int(self.birth_years[p])
                row_states = self.states[p]
                for c in np.where(row_states != ABSENT_CODE)[0]:
                    age = self.age_min + int(c)
                    code = int(row_states[c])
                    if code >= 0:
                        writer.writerow(
                            [pid, age, birth + age, int(self.months[p, c]),
                             int(self.costs[p, c]), HealthState(code + 1).name]
                        )
                    else:
                        writer.writerow([pid, age, birth + age, 0, "", MISSING])
                    n_rows += 1
        return n_rows

    @classmethod
    def read_cache(cls, path) -> "Panel":
        """Rebuild a panel from its cache file."""
        person_years = []
        markers = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != PANEL_CACHE_COLUMNS:
                raise DataFormatError(
                    f"panel cache must start with header {','.join(PANEL_CACHE_COLUMNS)}", line=1
                )
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(PANEL_CACHE_COLUMNS):
                    raise DataFormatError(f"expected {len(PANEL_CACHE_COLUMNS)} fields", line=lineno)
                pid, age_s, year_s, months_s, cost_s, state_s = (f.strip() for f in row)
                try:
                    age, year = int(age_s), int(year_s)
                except ValueError:
                    raise DataFormatError(f"bad age/year {age_s!r}/{year_s!r}", line=lineno) from None
                if state_s == MISSING:
                    markers.append(MissingMarker(pid, age, year))
                    continue
                try:
                    state = HealthState[state_s]
                except KeyError:
                    raise DataFormatError(f"unknown state {state_s!r}", line=lineno) from None
                try:
                    months, cost = int(months_s), int(cost_s)
                except ValueError:
                    raise DataFormatError(f"bad months/cost {months_s!r}/{cost_s!r}", line=lineno) from None
                person_years.append(PersonYear(pid, age, year, months, cost, state))
        end_year = None
        all_years = [py.year for py in person_years] + [m.year for m in markers]
        if all_years:
            end_year = max(all_years)
        return build_panel(person_years, end_year=end_year)


def build_panel(person_years: Iterable[PersonYear], end_year: int | None = None, sex=None) -> Panel:
    """Assemble trajectories into a Panel.

    Gap years between observed entries and trailing years up to the panel's
    final year (default: the latest observed year) become missing markers.
    sex, when given, maps person_id -> "M"/"F".
    """
    by_person: dict[str, list[PersonYear]] = {}
    seen: set[tuple[str, int]] = set()
    for py in person_years:
        key = (py.person_id, py.year)
        if key in seen:
            raise DuplicateRecordError(f"duplicate person-year {key}")
        seen.add(key)
        by_person.setdefault(py.person_id, []).append(py)
    if not by_person:
        raise EmptyCohortError("no person-years to build a panel from")

    max_year = max(py.year for pys in by_person.values() for py in pys)
    if end_year is None:
        end_year = max_year
    elif end_year < max_year:
        raise InvalidInputError(f"end_year {end_year} precedes the last observed year {max_year}")

    ids = sorted(by_person)
    births = []
    spans = []
    for pid in ids:
        entries = sorted(by_person[pid], key=lambda py: py.age)
        birth = entries[0].year - entries[0].age
        for py in entries:
            if py.year - py.age != birth:
                raise DataFormatError(
                    f"person {pid!r}: age {py.age} in year {py.year} contradicts "
                    f"earlier records (birth year {birth})"
                )
        ages = [py.age for py in entries]
        if len(set(ages)) != len(ages):
            raise DuplicateRecordError(f"person {pid!r} has duplicate ages")
        births.append(birth)
        spans.append((entries, birth, ages[0], end_year - birth))

    age_min = min(s[2] for s in spans)
    age_max = max(s[3] for s in spans)
    n_ages = age_max - age_min + 1
    n = len(ids)

    states = np.full((n, n_ages), ABSENT_CODE, dtype=np.int8)
    costs = np.zeros((n, n_ages), dtype=np.int64)
    months = np.zeros((n, n_ages), dtype=np.int8)
    for p, (entries, birth, entry_age, last_age) in enumerate(spans):
        states[p, entry_age - age_min : last_age - age_min + 1] = MISSING_CODE
        for py in entries:
            c = py.age - age_min
            states[p, c] = int(py.state) - 1
            costs[p, c] = py.annual_cost
            months[p, c] = py.months_observed

    sex_arr = None
    if sex is not None:
        try:
            sex_arr = np.array([sex[pid] for pid in ids], dtype=object)
        except KeyError as exc:
            raise InvalidInputError(f"sex mapping is missing person {exc.args[0]!r}") from None

    return Panel(ids, births, age_min, states, costs, months, sex=sex_arr)


def filter_cohort(
    panel: Panel,
    sex: str | None = None,
    age_min: int | None = None,
    age_max: int | None = None,
) -> Panel:
    """Restrict a panel to one sex and/or an observation-age window.

    Persons with no observed entry left in the window are dropped; an empty
    result is a valid (zero-person) panel only when some person remains,
    otherwise EmptyCohortError.
    """
    lo = panel.age_min if age_min is None else int(age_min)
    hi = panel.age_max if age_max is None else int(age_max)
    if lo > hi:
        raise InvalidInputError(f"age_min {lo} exceeds age_max {hi}")
    lo = max(lo, panel.age_min)
    hi = min(hi, panel.age_max)
    if hi < lo:
        raise EmptyCohortError("age window does not intersect the panel")

    keep = np.ones(panel.n_persons, dtype=bool)
    if sex is not None:
        if sex not in ("M", "F"):
            raise InvalidInputError(f"sex must be 'M' or 'F', got {sex!r}")
        if panel.sex is None:
            raise ConfigError("panel carries no sex information (cache files do not store it)")
        keep &= panel.sex == sex

    c0 = lo - panel.age_min
    c1 = hi - panel.age_min + 1
    states = panel.states[:, c0:c1]
    keep &= (states >= 0).any(axis=1)
    if not keep.any():
        raise EmptyCohortError("no persons match the cohort filter")

    return Panel(
        panel.person_ids[keep],
        panel.birth_years[keep],
        lo,
        states[keep].copy(),
        panel.costs[keep, c0:c1].copy(),
        panel.months[keep, c0:c1].copy(),
        sex=None if panel.sex is None else panel.sex[keep],
    )
