"""Forward iteration of estimated chains and start-state difference curves.

Given per-age operators (first-order matrices or lifted pair-state
matrices), iterate an indicator start distribution through future ages and
measure how much extra probability mass a bad start leaves on a target
state set, year by year.  The difference decays to zero as the start
condition washes out; how slowly it decays is the persistency of a shock.
"""

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import HorizonError, InvalidInputError, UnsupportedCellError
from .estimate import TransitionMatrix
from .lifted import LiftedMatrix, pair_label, start_vector
from .states import N_STATES, HealthState

#: Probability mass below which an unsupported cell is considered unused.
MASS_EPS = 1e-12


def total_variation(p, q) -> float:
    """Total-variation distance between two distributions."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class ForecastDistribution:
    """Distribution over states (order 1) or pairs (order 2) per future age.

    Row 0 is the start indicator at start_age; row k the distribution k
    years later.  Every row sums to one.
    """

    start_age: int
    conditioning: tuple
    ages: list[int]
    distributions: np.ndarray
    order: int

    def at(self, age: int) -> np.ndarray:
        return self.distributions[self.ages.index(age)]

    def target_mass(self, target) -> np.ndarray:
        """Mass on a set of states per future age (current coordinate for pairs)."""
        codes = _codes(target)
        if self.order == 1:
            return self.distributions[:, codes].sum(axis=1)
        cols = [i * N_STATES + j for i in range(N_STATES) for j in codes]
        return self.distributions[:, cols].sum(axis=1)


def _codes(target) -> list[int]:
    if isinstance(target, (HealthState, int, str)):
        target = [target]
    codes = set()
    for s in target:
        state = HealthState[s] if isinstance(s, str) else HealthState(int(s))
        codes.add(int(state) - 1)
    return sorted(codes)


def _family_order(model: Mapping[int, object]) -> int:
    kinds = {type(op) for op in model.values()}
    if kinds <= {TransitionMatrix}:
        return 1
    if kinds <= {LiftedMatrix}:
        return 2
    raise InvalidInputError(f"mixed or unknown operator family: {sorted(k.__name__ for k in kinds)}")


def _operator(model: Mapping[int, object], age: int):
    if age not in model:
        last = max(model) if model else None
        raise HorizonError(f"no operator estimated for age {age}; last valid age is {last}")
    return model[age]


def _bin_ages(age: int) -> range:
    lo = (age // 5) * 5
    return range(lo, lo + 5)


def _pooled_row(model: Mapping[int, TransitionMatrix], age: int, row: int) -> np.ndarray:
    """Row distribution pooled over the age's 5-year bin, for fallback use."""
    counts = np.zeros(N_STATES, dtype=np.int64)
    for a in _bin_ages(age):
        op = model.get(a)
        if op is not None:
            counts += op.counts[row]
    if counts.sum() == 0:
        raise UnsupportedCellError(
            f"state row {HealthState(row + 1).name} unsupported at age {age} even pooled over its 5-year bin"
        )
    return counts / counts.sum()


def _pooled_column(model: Mapping[int, LiftedMatrix], age: int, col: int) -> np.ndarray:
    """Lifted column pooled over the age's 5-year bin (needs stored counts)."""
    i, j = divmod(col, N_STATES)
    counts = np.zeros(N_STATES, dtype=np.int64)
    for a in _bin_ages(age):
        op = model.get(a)
        if op is not None and op.counts is not None:
            counts += op.counts[i, j]
    if counts.sum() == 0:
        raise UnsupportedCellError(
            f"pair column {pair_label((i + 1, j + 1))} unsupported at age {age} even pooled over its 5-year bin"
        )
    column = np.zeros(N_STATES * N_STATES)
    column[j * N_STATES : (j + 1) * N_STATES] = counts / counts.sum()
    return column


def _step_order1(model, age: int, v: np.ndarray, fallback: str | None) -> np.ndarray:
    op = _operator(model, age)
    active = v > MASS_EPS
    blocked = active & ~op.supported
    if not blocked.any():
        return v @ op.probs
    if fallback != "pool":
        names = ", ".join(HealthState(int(r) + 1).name for r in np.where(blocked)[0])
        raise UnsupportedCellError(f"mass reaches unsupported state row(s) {names} at age {age}")
    probs = op.probs.copy()
    for row in np.where(blocked)[0]:
        probs[row] = _pooled_row(model, age, int(row))
    return v @ probs


def _step_order2(model, age: int, v: np.ndarray, fallback: str | None) -> np.ndarray:
    op = _operator(model, age)
    active = v > MASS_EPS
    blocked = active & ~op.supported
    if not blocked.any():
        return op.probs @ v
    if fallback != "pool":
        names = ", ".join(
            pair_label((int(cidx) // N_STATES + 1, int(cidx) % N_STATES + 1))
            for cidx in np.where(blocked)[0]
        )
        raise UnsupportedCellError(f"mass reaches unsupported pair column(s) {names} at age {age}")
    probs = op.probs.copy()
    for col in np.where(blocked)[0]:
        probs[:, col] = _pooled_column(model, age, int(col))
    return probs @ v


def iterate_forward(
    model: Mapping[int, object],
    start_age: int,
    start_condition,
    horizon: int,
    fallback: str | None = None,
) -> ForecastDistribution:
    """Iterate age-specific operators from an indicator start distribution.

    start_condition is a single state for a first-order family or a
    (previous, current) pair for a lifted family.  fallback="pool"
    replaces an unsupported cell hit mid-iteration by the cell pooled over
    its enclosing 5-year age bin; the default is to fail loudly.
    """
    if horizon < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {horizon}")
    if fallback not in (None, "pool"):
        raise InvalidInputError(f"fallback must be None or 'pool', got {fallback!r}")
    order = _family_order(model)
    for k in range(1, horizon + 1):
        _operator(model, start_age + k)

    if order == 1:
        state = HealthState(int(start_condition))
        v = np.zeros(N_STATES)
        v[int(state) - 1] = 1.0
        conditioning = (state,)
        stepper = _step_order1
    else:
        previous, current = start_condition
        v = start_vector((previous, current))
        conditioning = (HealthState(int(previous)), HealthState(int(current)))
        stepper = _step_order2

    rows = [v]
    for k in range(1, horizon + 1):
        v = stepper(model, start_age + k, v, fallback)
        rows.append(v)
    return ForecastDistribution(
        start_age=start_age,
        conditioning=conditioning,
        ages=list(range(start_age, start_age + horizon + 1)),
        distributions=np.vstack(rows),
        order=order,
    )


@dataclass
class DifferenceCurve:
    """Extra target-set mass from a bad start versus a good start, per year."""

    start_age: int
    order: int
    target: tuple[str, ...]
    worse_start: tuple
    better_start: tuple
    years: list[int]
    worse_mass: np.ndarray
    better_mass: np.ndarray

    @property
    def differences(self) -> np.ndarray:
        return self.worse_mass - self.better_mass


def persistency_difference(
    model: Mapping[int, object],
    start_age: int,
    horizon: int,
    target,
    starts: tuple | None = None,
    fallback: str | None = None,
) -> DifferenceCurve:
    """Per-year difference in target mass between two start conditions.

    Defaults compare the worst start against the best: Q5 vs Q1 for a
    first-order family, and a fresh arrival in the top state (Q1, Q5) vs a
    continuous stay in the bottom state (Q1, Q1) for a lifted family.
    """
    order = _family_order(model)
    if starts is None:
        if order == 1:
            starts = (HealthState.Q5, HealthState.Q1)
        else:
            starts = ((HealthState.Q1, HealthState.Q5), (HealthState.Q1, HealthState.Q1))
    worse, better = starts
    fc_worse = iterate_forward(model, start_age, worse, horizon, fallback=fallback)
    fc_better = iterate_forward(model, start_age, better, horizon, fallback=fallback)
    codes = _codes(target)
    return DifferenceCurve(
        start_age=start_age,
        order=order,
        target=tuple(HealthState(c + 1).name for c in codes),
        worse_start=fc_worse.conditioning,
        better_start=fc_better.conditioning,
        years=list(range(1, horizon + 1)),
        worse_mass=fc_worse.target_mass(target)[1:],
        better_mass=fc_better.target_mass(target)[1:],
    )
