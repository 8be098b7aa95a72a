"""Pair-state form of the second-order chain.

A pair (previous state, current state) is one of 25 compound states,
indexed previous-major:

    index(i, j) = 5 * (i - 1) + (j - 1)     for 1-based states i, j

The lifted operator L puts p(j' | i, j) at L[index(j, j'), index(i, j)]
and zero elsewhere: a move out of (i, j) can only land on a pair whose
previous coordinate is j.  Distributions are column vectors over pairs and
one period is v -> L @ v, so supported columns sum to one and matrix
products compose periods.  The expected representative cost of the current
coordinate after k periods is then

    tile(costs, 5) @ (L_k ... L_1 @ e_start)

because tiling the 5-vector of per-state costs across the previous-major
layout weights each pair by the cost of its current coordinate.  The
equivalence of this algebra with exhaustive path enumeration is asserted
by the oracle tests rather than argued from notation.
"""

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import HorizonError, InvalidInputError, UnsupportedCellError
from .estimate import TransitionTensor
from .states import N_STATES, CostVector, HealthState

N_PAIRS = N_STATES * N_STATES

#: Probability mass below which an unsupported column is considered unused.
MASS_EPS = 1e-12

LIFT_FORMULAS = ("conditional", "summed")


def pair_index(previous, current) -> int:
    """Column/row index of the pair (previous, current), previous-major."""
    i = int(HealthState(int(previous))) - 1
    j = int(HealthState(int(current))) - 1
    return N_STATES * i + j


def pair_from_index(idx: int) -> tuple[HealthState, HealthState]:
    return HealthState(idx // N_STATES + 1), HealthState(idx % N_STATES + 1)


def pair_label(pair) -> str:
    return f"({HealthState(int(pair[0])).name},{HealthState(int(pair[1])).name})"


def current_cost_weights(costs: CostVector) -> np.ndarray:
    """25-vector weighting each pair by the representative cost of its current coordinate."""
    return np.tile(costs.as_array(), N_STATES)


@dataclass
class LiftedMatrix:
    """One age's 25x25 pair-state operator.

    ``supported`` flags the columns (start pairs) whose conditional slice
    had estimation support; ``counts`` keeps the underlying 5x5x5 counts
    when the matrix came from an estimate, enabling age-group pooling.
    """

    probs: np.ndarray
    supported: np.ndarray
    age: int | None = None
    counts: np.ndarray | None = None

    def validate(self, atol: float = 1e-12) -> None:
        """Check the structural-zero pattern and column normalization."""
        if self.probs.shape != (N_PAIRS, N_PAIRS):
            raise InvalidInputError(f"expected a {N_PAIRS}x{N_PAIRS} matrix")
        for col in range(N_PAIRS):
            j = col % N_STATES
            mask = np.ones(N_PAIRS, dtype=bool)
            mask[j * N_STATES : (j + 1) * N_STATES] = False
            if np.abs(self.probs[mask, col]).max(initial=0.0) > 0:
                raise InvalidInputError(f"column {col} leaks mass outside its reachable block")
            if self.supported[col]:
                s = self.probs[:, col].sum()
                if abs(s - 1.0) > atol:
                    raise InvalidInputError(f"supported column {col} sums to {s!r}")


def lift(tensor, age: int | None = None, formula: str = "conditional") -> LiftedMatrix:
    """Rewrite a pair-conditional tensor as a 25x25 single-step operator.

    ``tensor`` is a TransitionTensor or a raw (5, 5, 5) probability array
    p[i, j, j'].  With the default "conditional" formula the entry for
    (i, j) -> (j, j') is p[i, j, j'], the only reading under which a
    supported column is a probability distribution.  The "summed"
    comparison formula instead writes sum_i p[i, j, j'] (discarding the
    known previous state); its columns are not stochastic and it exists
    solely to quantify how much that alternative reading distorts
    projections.
    """
    if formula not in LIFT_FORMULAS:
        raise InvalidInputError(f"formula must be one of {LIFT_FORMULAS}, got {formula!r}")
    counts = None
    if isinstance(tensor, TransitionTensor):
        probs = tensor.probs
        supported_pairs = tensor.supported
        counts = tensor.counts
        if age is None:
            age = tensor.age
    else:
        probs = np.asarray(tensor, dtype=np.float64)
        if probs.shape != (N_STATES, N_STATES, N_STATES):
            raise InvalidInputError(f"expected a (5, 5, 5) tensor, got {probs.shape}")
        slice_sums = probs.sum(axis=2)
        supported_pairs = slice_sums > 0
        if ((np.abs(slice_sums - 1.0) > 1e-9) & supported_pairs).any():
            raise InvalidInputError("supported tensor slices must be normalized")

    if not supported_pairs.any():
        raise UnsupportedCellError("tensor has no supported (previous, current) pair")

    probs_mat = np.zeros((N_PAIRS, N_PAIRS))
    supported = np.zeros(N_PAIRS, dtype=bool)
    for i in range(N_STATES):
        for j in range(N_STATES):
            col = N_STATES * i + j
            if formula == "conditional":
                if not supported_pairs[i, j]:
                    continue
                slice_ = probs[i, j]
            else:
                slice_ = probs[:, j, :].sum(axis=0)
                if not supported_pairs[:, j].any():
                    continue
            rows = j * N_STATES + np.arange(N_STATES)
            probs_mat[rows, col] = slice_
            supported[col] = True
    return LiftedMatrix(probs=probs_mat, supported=supported, age=age, counts=counts)


def lift_family(tensors: Mapping[int, object], formula: str = "conditional") -> dict[int, LiftedMatrix]:
    """Lift a per-age tensor family; skips nothing, ages keep their keys."""
    return {age: lift(t, age=age, formula=formula) for age, t in tensors.items()}


def start_vector(start) -> np.ndarray:
    """Indicator column vector for a start pair (previous, current)."""
    v = np.zeros(N_PAIRS)
    v[pair_index(*start)] = 1.0
    return v


def _operator_for_step(model, start_age, step) -> LiftedMatrix:
    if isinstance(model, LiftedMatrix):
        return model
    if start_age is None:
        raise InvalidInputError("a per-age family needs start_age")
    age = start_age + step
    if age not in model:
        last = max(model) if model else None
        raise HorizonError(f"no operator estimated for age {age}; last valid age is {last}")
    return model[age]


def _apply(op: LiftedMatrix, v: np.ndarray) -> np.ndarray:
    active = v > MASS_EPS
    blocked = active & ~op.supported
    if blocked.any():
        pairs = ", ".join(pair_label(pair_from_index(int(i))) for i in np.where(blocked)[0])
        raise UnsupportedCellError(
            f"probability mass reaches unsupported pair column(s) {pairs}"
            + (f" at age {op.age}" if op.age is not None else "")
        )
    return op.probs @ v


def step_expectation(model, costs: CostVector, start, k: int, start_age: int | None = None) -> float:
    """Expected representative cost of the current coordinate after k periods.

    ``model`` is one LiftedMatrix (applied k times) or a per-age mapping,
    in which case operators for start_age + 1 .. start_age + k apply in
    chronological order.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    v = start_vector(start)
    for step in range(1, k + 1):
        v = _apply(_operator_for_step(model, start_age, step), v)
    return float(current_cost_weights(costs) @ v)


@dataclass
class ProjectionResult:
    """Expected per-period and cumulative representative cost from one start pair."""

    start_age: int
    start_pair: tuple[HealthState, HealthState]
    horizon: int
    per_period: list[float]
    cumulative: float
    q5_value: float

    def to_dict(self) -> dict:
        return {
            "start_age": self.start_age,
            "start_pair": [s.name for s in self.start_pair],
            "q5_value": self.q5_value,
            "per_period": self.per_period,
            "cumulative": self.cumulative,
        }


def project_cumulative(
    family: Mapping[int, LiftedMatrix],
    costs: CostVector,
    start_age: int,
    start,
    horizon: int = 10,
) -> ProjectionResult:
    """Cumulative expected cost over ``horizon`` periods after the start pair.

    Uses the age-specific operators for start_age + 1 .. start_age + horizon
    in sequence; a missing age raises HorizonError before any arithmetic.
    """
    if horizon < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {horizon}")
    for step in range(1, horizon + 1):
        _operator_for_step(family, start_age, step)
    weights = current_cost_weights(costs)
    v = start_vector(start)
    per_period = []
    for step in range(1, horizon + 1):
        v = _apply(family[start_age + step], v)
        per_period.append(float(weights @ v))
    start_pair = (HealthState(int(start[0])), HealthState(int(start[1])))
    return ProjectionResult(
        start_age=start_age,
        start_pair=start_pair,
        horizon=horizon,
        per_period=per_period,
        cumulative=float(sum(per_period)),
        q5_value=costs.q5,
    )


def shock_cost_difference(
    family: Mapping[int, LiftedMatrix],
    costs: CostVector,
    start_age: int,
    horizon: int = 10,
) -> float:
    """Extra cumulative cost of starting freshly in the top state.

    Difference between the (Q1, Q5) start (a first-time arrival in the top
    band) and the (Q1, Q1) start (continuously in the bottom band).
    """
    shocked = project_cumulative(family, costs, start_age, (HealthState.Q1, HealthState.Q5), horizon)
    healthy = project_cumulative(family, costs, start_age, (HealthState.Q1, HealthState.Q1), horizon)
    return shocked.cumulative - healthy.cumulative
