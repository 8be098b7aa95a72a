"""Empirical estimators over a Panel.

Everything here is a counting exercise over the dense state matrix:
transition matrices and pair-conditional tensors per single age, state
fractions and cost summaries per 5-year age group, per-age frequency
curves with attrition as an explicit category, multi-year retention paths
among panel survivors, and per-age autoregressions of annual cost.

Probabilities are always formed from pooled counts, never by averaging
probabilities; cells with zero support carry an explicit flag instead of
a sentinel value.
"""

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import (
    DegenerateFitError,
    EmptyCohortError,
    InvalidInputError,
)
from .panel import Panel
from .states import (
    CATEGORY_LABELS,
    MISSING,
    N_STATES,
    HealthState,
    StateThresholds,
    DEFAULT_THRESHOLDS,
)

DEFAULT_MIN_COUNT = 30

#: Index used for the attrition category in per-age breakdowns.
_MISSING_IDX = N_STATES


def _state_code(state) -> int:
    return int(HealthState(int(state))) - 1


def _target_codes(target) -> tuple[set[int], bool]:
    """Normalize a category set to 0-based codes; returns (codes, includes_missing)."""
    if isinstance(target, (HealthState, int, str)):
        target = [target]
    codes: set[int] = set()
    missing = False
    for item in target:
        if isinstance(item, str) and item.upper() == MISSING:
            missing = True
        elif isinstance(item, str):
            codes.add(_state_code(HealthState[item]))
        else:
            codes.add(_state_code(item))
    return codes, missing


def five_year_groups(age_min: int, age_max: int) -> list[tuple[int, int]]:
    """Standard 5-year bins intersecting [age_min, age_max]."""
    lo = (age_min // 5) * 5
    return [(a, a + 4) for a in range(lo, age_max + 1, 5)]


def group_label(group: tuple[int, int]) -> str:
    return f"{group[0]}-{group[1]}"


# ---------------------------------------------------------------------------
# transition estimates


@dataclass
class TransitionMatrix:
    """First-order estimate at one age: rows = state at age-1, cols = state at age."""

    age: int
    probs: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.row_totals = self.counts.sum(axis=1)

    @property
    def supported(self) -> np.ndarray:
        return self.row_totals > 0

    def low_support(self, min_count: int = DEFAULT_MIN_COUNT) -> np.ndarray:
        return self.supported & (self.row_totals < min_count)


@dataclass
class TransitionTensor:
    """Second-order estimate at one age: probs[i, j, k] = p(state k at age | i at age-2, j at age-1)."""

    age: int
    probs: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.pair_totals = self.counts.sum(axis=2)

    @property
    def supported(self) -> np.ndarray:
        return self.pair_totals > 0

    def low_support(self, min_count: int = DEFAULT_MIN_COUNT) -> np.ndarray:
        return self.supported & (self.pair_totals < min_count)

    def marginal_counts(self) -> np.ndarray:
        """Pair counts summed over the oldest conditioning state."""
        return self.counts.sum(axis=0)


def _normalize_counts(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    probs = np.zeros_like(counts, dtype=np.float64)
    np.divide(counts, totals, out=probs, where=totals > 0)
    return probs


def estimate_order1(panel: Panel, age: int) -> TransitionMatrix:
    """Estimate the transition matrix into ``age`` from observed (age-1, age) pairs."""
    if not (panel.has_age(age) and panel.has_age(age - 1)):
        raise EmptyCohortError(f"panel covers {panel.age_min}..{panel.age_max}, no pairs into age {age}")
    c = panel.column(age)
    counts = kernels.pair_counts(panel.states[:, c - 1 : c + 1])[0]
    if counts.sum() == 0:
        raise EmptyCohortError(f"no observed transitions into age {age}")
    return TransitionMatrix(age=age, probs=_normalize_counts(counts), counts=counts)


def estimate_order2(panel: Panel, age: int) -> TransitionTensor:
    """Estimate the pair-conditional tensor into ``age`` from observed triples."""
    if not (panel.has_age(age) and panel.has_age(age - 2)):
        raise EmptyCohortError(f"panel covers {panel.age_min}..{panel.age_max}, no triples into age {age}")
    c = panel.column(age)
    counts = kernels.triple_counts(panel.states[:, c - 2 : c + 1])[0]
    if counts.sum() == 0:
        raise EmptyCohortError(f"no observed triples into age {age}")
    return TransitionTensor(age=age, probs=_normalize_counts(counts), counts=counts)


def estimate_order1_family(panel: Panel, ages: Iterable[int] | None = None) -> dict[int, TransitionMatrix]:
    """Per-age matrices for every age with data (one counting pass)."""
    all_counts = kernels.pair_counts(panel.states)
    if ages is None:
        ages = range(panel.age_min + 1, panel.age_max + 1)
    out = {}
    for age in ages:
        k = age - panel.age_min - 1
        if 0 <= k < all_counts.shape[0] and all_counts[k].sum() > 0:
            out[age] = TransitionMatrix(age=age, probs=_normalize_counts(all_counts[k]), counts=all_counts[k])
    return out


def estimate_order2_family(panel: Panel, ages: Iterable[int] | None = None) -> dict[int, TransitionTensor]:
    """Per-age tensors for every age with data (one counting pass)."""
    all_counts = kernels.triple_counts(panel.states)
    if ages is None:
        ages = range(panel.age_min + 2, panel.age_max + 1)
    out = {}
    for age in ages:
        k = age - panel.age_min - 2
        if 0 <= k < all_counts.shape[0] and all_counts[k].sum() > 0:
            out[age] = TransitionTensor(age=age, probs=_normalize_counts(all_counts[k]), counts=all_counts[k])
    return out


def pool_order1(family: Mapping[int, TransitionMatrix], ages: Iterable[int], age: int | None = None) -> TransitionMatrix:
    """Pool counts (not probabilities) over several single-age estimates."""
    picked = [family[a].counts for a in ages if a in family]
    if not picked:
        raise EmptyCohortError(f"no estimates among ages {list(ages)}")
    counts = np.sum(picked, axis=0)
    return TransitionMatrix(age=age if age is not None else -1, probs=_normalize_counts(counts), counts=counts)


def pool_order2(family: Mapping[int, TransitionTensor], ages: Iterable[int], age: int | None = None) -> TransitionTensor:
    picked = [family[a].counts for a in ages if a in family]
    if not picked:
        raise EmptyCohortError(f"no estimates among ages {list(ages)}")
    counts = np.sum(picked, axis=0)
    return TransitionTensor(age=age if age is not None else -1, probs=_normalize_counts(counts), counts=counts)


# ---------------------------------------------------------------------------
# fractions and frequency curves


def state_fractions(panel: Panel, age_group: tuple[int, int]) -> tuple[np.ndarray, int]:
    """Share of each state among observed person-years in the age group."""
    lo, hi = age_group
    if lo > hi:
        raise InvalidInputError(f"age group {age_group} is empty")
    lo = max(lo, panel.age_min)
    hi = min(hi, panel.age_max)
    if hi < lo:
        raise EmptyCohortError(f"panel does not cover ages {age_group}")
    block = panel.states[:, lo - panel.age_min : hi - panel.age_min + 1]
    observed = block[block >= 0]
    if observed.size == 0:
        raise EmptyCohortError(f"no observations in ages {age_group}")
    counts = np.bincount(observed.astype(np.int64), minlength=N_STATES)
    return counts / counts.sum(), int(observed.size)


@dataclass
class FrequencyCurve:
    """Per-age share of a target category set among conditioned subjects.

    The denominator at age t counts persons satisfying the prior condition
    whose age-t cell lies inside the panel (observed or attrition marker);
    attrition appears as its own MISSING category so that the per-age
    breakdown always sums to one.
    """

    ages: list[int]
    values: np.ndarray
    denominators: np.ndarray
    breakdown: dict[str, np.ndarray]
    target: tuple[str, ...]

    def low_support(self, min_count: int = DEFAULT_MIN_COUNT) -> np.ndarray:
        return self.denominators < min_count


def shock_frequency(
    panel: Panel,
    prior_condition: Sequence,
    target,
    ages: Iterable[int] | None = None,
) -> FrequencyCurve:
    """Frequency, per age t, of landing in ``target`` given prior states.

    prior_condition is a sequence of 1 or 2 state sets in chronological
    order: the last entry conditions age t-1, a first entry conditions age
    t-2.  Ages whose conditioning set is empty are omitted from the curve.
    """
    if not 1 <= len(prior_condition) <= 2:
        raise InvalidInputError("prior condition must cover one or two previous ages")
    cond_codes = []
    for entry in prior_condition:
        codes, missing = _target_codes(entry)
        if missing or not codes:
            raise InvalidInputError("prior conditions must be non-empty sets of health states")
        cond_codes.append(codes)

    target_codes, target_missing = _target_codes(target)
    lag = len(cond_codes)
    if ages is None:
        ages = range(panel.age_min + lag, panel.age_max + 1)

    kept_ages: list[int] = []
    values: list[float] = []
    denoms: list[int] = []
    shares: list[np.ndarray] = []
    for age in ages:
        if not (panel.has_age(age) and panel.has_age(age - lag)):
            continue
        c = panel.column(age)
        mask = np.ones(panel.n_persons, dtype=bool)
        for offset, codes in enumerate(reversed(cond_codes), start=1):
            col = panel.states[:, c - offset]
            mask &= np.isin(col, list(codes)) & (col >= 0)
        now = panel.states[:, c]
        mask &= now >= -1  # in-panel at t: observed or attrition marker
        denom = int(mask.sum())
        if denom == 0:
            continue
        cat = np.where(now[mask] >= 0, now[mask], _MISSING_IDX).astype(np.int64)
        counts = np.bincount(cat, minlength=N_STATES + 1)
        share = counts / denom
        hit = share[list(target_codes)].sum() if target_codes else 0.0
        if target_missing:
            hit += share[_MISSING_IDX]
        kept_ages.append(age)
        values.append(float(hit))
        denoms.append(denom)
        shares.append(share)

    if not kept_ages:
        raise EmptyCohortError("prior condition never satisfied in the panel")
    share_mat = np.vstack(shares)
    breakdown = {label: share_mat[:, i] for i, label in enumerate(CATEGORY_LABELS)}
    target_labels = tuple(
        sorted(HealthState(code + 1).name for code in target_codes)
        + ([MISSING] if target_missing else [])
    )
    return FrequencyCurve(
        ages=kept_ages,
        values=np.asarray(values),
        denominators=np.asarray(denoms, dtype=np.int64),
        breakdown=breakdown,
        target=target_labels,
    )


# ---------------------------------------------------------------------------
# conditional cost summaries


@dataclass
class CostSummary:
    """Distribution summary of annual cost at age t under a prior-state condition."""

    age_group: tuple[int, int]
    prior_state: HealthState
    current_state: HealthState | None
    n: int
    mean: float | None = None
    sd: float | None = None
    minimum: int | None = None
    maximum: int | None = None
    quantiles: dict[float, float] = field(default_factory=dict)
    log_cdf: list[tuple[float, float]] | None = None

    @property
    def available(self) -> bool:
        return self.n > 0

    def low_support(self, min_count: int = DEFAULT_MIN_COUNT) -> bool:
        return 0 < self.n < min_count


def conditional_cost_quantiles(
    panel: Panel,
    age_group: tuple[int, int],
    prior_state,
    quantiles: Sequence[float] = (0.25, 0.5, 0.75),
    current_state=None,
    want_log_cdf: bool = False,
) -> CostSummary:
    """Empirical cost distribution at age t given the state at t-1.

    ``current_state`` restricts to one transition path (e.g. the costs of
    subjects newly arrived in the top state).  ``want_log_cdf`` adds
    empirical CDF points of log10 cost over the positive costs; the CDF
    values still count zero-cost subjects, so the curve starts at their
    share.  An empty cell yields an unavailable summary, never zeros.
    """
    qs = [float(q) for q in quantiles]
    if any(not 0 < q < 1 for q in qs):
        raise InvalidInputError("quantiles must lie strictly between 0 and 1")
    prior = _state_code(prior_state)
    current = None if current_state is None else _state_code(current_state)
    lo, hi = age_group

    pooled: list[np.ndarray] = []
    for age in range(max(lo, panel.age_min + 1), min(hi, panel.age_max) + 1):
        c = panel.column(age)
        mask = (panel.states[:, c - 1] == prior) & (panel.states[:, c] >= 0)
        if current is not None:
            mask &= panel.states[:, c] == current
        if mask.any():
            pooled.append(panel.costs[mask, c])
    cur_state = None if current is None else HealthState(current + 1)
    if not pooled:
        return CostSummary(age_group=age_group, prior_state=HealthState(prior + 1),
                           current_state=cur_state, n=0)
    costs = np.concatenate(pooled)
    n = int(costs.size)
    summary = CostSummary(
        age_group=age_group,
        prior_state=HealthState(prior + 1),
        current_state=cur_state,
        n=n,
        mean=float(costs.mean()),
        sd=float(costs.std(ddof=1)) if n > 1 else 0.0,
        minimum=int(costs.min()),
        maximum=int(costs.max()),
        quantiles={q: float(np.quantile(costs, q)) for q in qs},
    )
    if want_log_cdf:
        positive = np.sort(costs[costs > 0])
        uniq, last_idx = np.unique(positive, return_index=True)
        # rank of the last occurrence of each distinct cost, counting zeros
        counts_below = np.searchsorted(positive, uniq, side="right") + (n - positive.size)
        summary.log_cdf = [
            (float(np.log10(v)), float(k / n)) for v, k in zip(uniq, counts_below)
        ]
    return summary


@dataclass
class ExceedanceRow:
    """Share of path transitions whose arrival-year cost clears each threshold."""

    age_group: tuple[int, int]
    n: int
    proportions: dict[int, float]

    @property
    def available(self) -> bool:
        return self.n > 0


def exceedance_proportions(
    panel: Panel,
    path: tuple,
    thresholds_yen: Sequence[int],
    age_groups: Iterable[tuple[int, int]] | None = None,
    state_thresholds: StateThresholds = DEFAULT_THRESHOLDS,
) -> list[ExceedanceRow]:
    """Among from->to transitions, the share with arrival cost >= each threshold."""
    from_state, to_state = (_state_code(path[0]), _state_code(path[1]))
    thr = [int(t) for t in thresholds_yen]
    if to_state == N_STATES - 1:
        floor = state_thresholds.top_lower_bound
        bad = [t for t in thr if t < floor]
        if bad:
            raise InvalidInputError(
                f"thresholds {bad} fall below the top band's lower edge {floor}"
            )
    if age_groups is None:
        age_groups = five_year_groups(panel.age_min, panel.age_max)

    rows = []
    for group in age_groups:
        lo, hi = group
        pooled = []
        for age in range(max(lo, panel.age_min + 1), min(hi, panel.age_max) + 1):
            c = panel.column(age)
            mask = (panel.states[:, c - 1] == from_state) & (panel.states[:, c] == to_state)
            if mask.any():
                pooled.append(panel.costs[mask, c])
        if pooled:
            costs = np.concatenate(pooled)
            rows.append(ExceedanceRow(
                age_group=group,
                n=int(costs.size),
                proportions={t: float((costs >= t).mean()) for t in thr},
            ))
        else:
            rows.append(ExceedanceRow(age_group=group, n=0, proportions={}))
    return rows


# ---------------------------------------------------------------------------
# multi-year retention among survivors


@dataclass
class DecayPath:
    """Share in a target set k years after conditioning, among panel survivors."""

    age_group: tuple[int, int]
    years: list[int]
    values: np.ndarray
    denominators: np.ndarray

    @property
    def available(self) -> np.ndarray:
        return self.denominators > 0


def multi_year_state_frequency(
    panel: Panel,
    start_condition: Sequence,
    target,
    horizon: int,
    age_groups: Iterable[tuple[int, int]] | None = None,
) -> dict[tuple[int, int], DecayPath]:
    """Observed retention paths: P(state in target at t+k | start condition at t).

    start_condition is one or two states in chronological order; the last
    conditions age t, a first entry conditions age t-1.  Denominators at
    each k count only subjects still observed then (no attrition in the
    denominator); a k with nobody left is unavailable, not zero.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    if not 1 <= len(start_condition) <= 2:
        raise InvalidInputError("start condition must name one or two states")
    start_codes = [_state_code(s) for s in start_condition]
    target_codes, target_missing = _target_codes(target)
    if target_missing:
        raise InvalidInputError("retention targets are health states; attrition is excluded by design")
    target_list = sorted(target_codes)
    lag = len(start_codes) - 1
    if age_groups is None:
        age_groups = five_year_groups(panel.age_min, panel.age_max)

    out: dict[tuple[int, int], DecayPath] = {}
    for group in age_groups:
        lo, hi = group
        hits = np.zeros(horizon, dtype=np.int64)
        totals = np.zeros(horizon, dtype=np.int64)
        for age in range(max(lo, panel.age_min + lag), min(hi, panel.age_max) + 1):
            c = panel.column(age)
            mask = panel.states[:, c] == start_codes[-1]
            if lag:
                mask &= panel.states[:, c - 1] == start_codes[0]
            if not mask.any():
                continue
            for k in range(1, horizon + 1):
                if age + k > panel.age_max:
                    break
                future = panel.states[mask, c + k]
                alive = future >= 0
                totals[k - 1] += int(alive.sum())
                hits[k - 1] += int(np.isin(future[alive], target_list).sum())
        values = np.full(horizon, np.nan)
        np.divide(hits, totals, out=values, where=totals > 0)
        out[group] = DecayPath(
            age_group=group,
            years=list(range(1, horizon + 1)),
            values=values,
            denominators=totals,
        )
    return out


# ---------------------------------------------------------------------------
# per-age autoregression


@dataclass
class ARFit:
    """OLS fit of annual cost at one age on its lags plus year dummies."""

    age: int
    order: int
    available: bool
    n: int
    lag_coefficients: tuple[float, ...] = ()
    lag_se: tuple[float, ...] = ()
    intercept: float | None = None
    year_effects: dict[int, float] = field(default_factory=dict)
    base_year: int | None = None
    log_transform: bool = False


def ar_regression(panel: Panel, age: int, order: int = 1, log_transform: bool = False) -> ARFit:
    """Regress cost at ``age`` on cost at the previous ``order`` ages.

    Year dummies use the panel's earliest observed year as base level;
    dummy levels absent from the estimation sample are dropped, and when
    the base year itself is absent the earliest sampled year takes its
    place.  log_transform fits log1p(cost) on log1p(lags) (annual costs of
    zero are legitimate).  Fewer complete cases than parameters + 1 yields
    an unavailable fit; an exactly collinear design raises
    DegenerateFitError.
    """
    if order not in (1, 2):
        raise InvalidInputError(f"order must be 1 or 2, got {order}")
    if not (panel.has_age(age) and panel.has_age(age - order)):
        return ARFit(age=age, order=order, available=False, n=0, log_transform=log_transform)
    c = panel.column(age)
    cols = panel.states[:, c - order : c + 1]
    complete = (cols >= 0).all(axis=1)
    n = int(complete.sum())

    y = panel.costs[complete, c].astype(np.float64)
    lags = [panel.costs[complete, c - k].astype(np.float64) for k in range(1, order + 1)]
    if log_transform:
        y = np.log1p(y)
        lags = [np.log1p(x) for x in lags]

    years = panel.birth_years[complete] + age
    base_year = panel.min_year
    levels = sorted(set(years.tolist()) - {base_year})
    if base_year not in set(years.tolist()) and levels:
        levels = levels[1:]  # earliest sampled year becomes the effective base
    dummies = [(years == lvl).astype(np.float64) for lvl in levels]

    n_params = 1 + order + len(dummies)
    if n < n_params + 1:
        return ARFit(age=age, order=order, available=False, n=n, log_transform=log_transform)

    X = np.column_stack([np.ones(n)] + lags + dummies)
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateFitError(f"design matrix at age {age} has rank {rank} < {X.shape[1]}")
    resid = y - X @ beta
    dof = n - X.shape[1]
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))

    return ARFit(
        age=age,
        order=order,
        available=True,
        n=n,
        lag_coefficients=tuple(float(b) for b in beta[1 : 1 + order]),
        lag_se=tuple(float(s) for s in se[1 : 1 + order]),
        intercept=float(beta[0]),
        year_effects={lvl: float(b) for lvl, b in zip(levels, beta[1 + order :])},
        base_year=base_year,
        log_transform=log_transform,
    )
