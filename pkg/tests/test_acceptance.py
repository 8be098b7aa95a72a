"""Acceptance suite: one test per criterion, one printed PASS line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Statistical criteria use pinned seeds (chosen once, with checked
margin to every decision boundary) so the suite is deterministic.
"""

import math
import time

import numpy as np
import pytest

from healthmarkov.cli import main as cli_main
from healthmarkov.estimate import (
    TransitionMatrix,
    ar_regression,
    estimate_order1_family,
    estimate_order2_family,
    multi_year_state_frequency,
    pool_order1,
)
from healthmarkov.ingest import annualize, ClaimRecord
from healthmarkov.lifted import lift_family, project_cumulative, start_vector
from healthmarkov.panel import Panel
from healthmarkov.persistency import iterate_forward, persistency_difference
from healthmarkov.states import CostVector, HealthState, classify_cost
from healthmarkov.synthetic import (
    enumerate_expectation,
    generate_panel,
    order1_consistent_chain,
    random_chain,
)

from conftest import sticky_top_chain

Q = HealthState
COSTS = CostVector.from_thresholds()


def report(criterion: int, detail: str) -> None:
    print(f"[acceptance] criterion {criterion}: PASS — {detail}")


def test_criterion_1_oracle_equivalence():
    """Lifted projections equal exhaustive path enumeration, 100 chains, <1 min."""
    t0 = time.perf_counter()
    starts = ((Q.Q1, Q.Q1), (Q.Q1, Q.Q5), (Q.Q3, Q.Q2))
    worst = 0.0
    n_chains = 100
    for seed in range(n_chains):
        truth = random_chain(seed=seed, entry_age=20, exit_age=28)
        family = truth.lifted_family()
        for start in starts:
            for horizon in range(1, 6):
                got = project_cumulative(family, COSTS, 21, start, horizon).cumulative
                want = enumerate_expectation(truth, COSTS, start, 21, horizon)
                rel = abs(got - want) / max(abs(want), 1.0)
                worst = max(worst, rel)
                assert rel <= 1e-10, (seed, start, horizon, rel)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"oracle suite took {elapsed:.1f}s"
    report(1, f"{n_chains} chains x {len(starts)} starts x horizons 1-5, "
              f"worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_estimator_recovery():
    """Order-2 recovery at n=100k: every supported cell within 3 binomial SE."""
    t0 = time.perf_counter()
    truth = random_chain(seed=202, entry_age=20, exit_age=60, attrition=0.0)
    panel = generate_panel(truth, 100_000)
    tensors = estimate_order2_family(panel)
    checked = 0
    failures = 0
    for age, tensor in tensors.items():
        true_t = truth.tensor_at(age)
        for i in range(5):
            for j in range(5):
                n_cell = tensor.pair_totals[i, j]
                if n_cell == 0:
                    continue
                se = np.sqrt(true_t[i, j] * (1 - true_t[i, j]) / n_cell)
                bad = np.abs(tensor.probs[i, j] - true_t[i, j]) > 3 * se
                checked += 5
                failures += int(bad.sum())
    elapsed = time.perf_counter() - t0
    rate = failures / checked
    assert checked > 4_000
    assert rate <= 0.01, f"{failures}/{checked} cells outside 3 SE"
    assert elapsed < 120.0, f"recovery suite took {elapsed:.1f}s"
    report(2, f"{checked} cells over {len(tensors)} ages, "
              f"failure rate {rate:.2%} (<= 1%), {elapsed:.1f}s")


def test_criterion_3_order1_insufficiency():
    """Fitted order-1 geometric retention underpredicts the order-2 truth by >= 5pp."""
    truth = sticky_top_chain(entry_age=20, exit_age=40, stay=0.839, reentry=1.0 / 3.0)
    # the generating tensor pins retention in the top state at 0.839 when the
    # previous year was also the top state and 1/3 otherwise
    t = truth.tensors[0]
    assert t[4, 4, 4] == pytest.approx(0.839)
    for i in range(3):
        assert t[i, 4, 4] == pytest.approx(1.0 / 3.0)

    panel = generate_panel(truth, 100_000)
    paths = multi_year_state_frequency(panel, (Q.Q5,), (Q.Q5,), 5, age_groups=[(25, 33)])
    retention = float(paths[(25, 33)].values[-1])

    family = estimate_order1_family(panel)
    pooled = pool_order1(family, range(26, 35))
    p1 = float(pooled.probs[4, 4])
    geometric = p1 ** 5
    gap = retention - geometric
    assert gap >= 0.05, f"gap {gap:.3f} below 5 percentage points"
    report(3, f"one-year retention {p1:.3f}, geometric 5-year {geometric:.3f}, "
              f"observed {retention:.3f}, gap {gap * 100:.1f}pp (>= 5pp)")


def test_criterion_4_collapse_equivalence():
    """Order-2 difference curves collapse to order-1 for order-1-consistent tensors."""
    worst = 0.0
    for seed in (0, 1, 2, 3, 4):
        truth = order1_consistent_chain(seed, entry_age=20, exit_age=40)
        fam2 = lift_family({age: truth.tensor_at(age) for age in truth.target_ages})
        fam1 = {}
        for age in truth.target_ages:
            rows = truth.tensor_at(age)[0]
            fam1[age] = TransitionMatrix(age=age, probs=rows,
                                         counts=np.full((5, 5), 1_000, dtype=np.int64))
        for target in ({Q.Q5}, {Q.Q4, Q.Q5}):
            c2 = persistency_difference(fam2, 25, 10, target)
            c1 = persistency_difference(
                fam1, 25, 10, target, starts=(Q.Q5, Q.Q1)
            )
            err = np.abs(c2.differences - c1.differences).max()
            worst = max(worst, err)
            assert err <= 1e-10, (seed, target, err)
    report(4, f"5 chains x 2 targets, horizons 1-10, max deviation {worst:.2e} (<= 1e-10)")


def test_criterion_5_normalization_suite():
    """Estimated rows/slices/columns sum to 1 within 1e-12; forecasts within 1e-10."""
    checked_rows = 0
    checked_forecasts = 0
    for seed in range(50):
        truth = random_chain(seed=1_000 + seed, entry_age=20, exit_age=27, attrition=0.05)
        panel = generate_panel(truth, 1_000)
        fam1 = estimate_order1_family(panel)
        for m in fam1.values():
            sums = m.probs.sum(axis=1)[m.supported]
            assert np.abs(sums - 1.0).max() <= 1e-12
            checked_rows += int(m.supported.sum())
        tensors = estimate_order2_family(panel)
        for t in tensors.values():
            sums = t.probs.sum(axis=2)[t.supported]
            assert np.abs(sums - 1.0).max() <= 1e-12
            checked_rows += int(t.supported.sum())
        fam2 = lift_family(tensors)
        for lm in fam2.values():
            sums = lm.probs.sum(axis=0)[lm.supported]
            assert np.abs(sums - 1.0).max() <= 1e-12
            checked_rows += int(lm.supported.sum())

        fc1 = iterate_forward(fam1, 22, Q.Q1, 4, fallback="pool")
        fc2 = iterate_forward(fam2, 22, (Q.Q1, Q.Q1), 4, fallback="pool")
        for fc in (fc1, fc2):
            assert np.abs(fc.distributions.sum(axis=1) - 1.0).max() <= 1e-10
            checked_forecasts += fc.distributions.shape[0]
    report(5, f"50 panels: {checked_rows} estimated rows/slices/columns at 1e-12, "
              f"{checked_forecasts} forecast rows at 1e-10")


BOUNDARY_TABLE = [
    (0, Q.Q1), (7_800, Q.Q1), (7_801, Q.Q2), (24_000, Q.Q2), (24_001, Q.Q3),
    (54_000, Q.Q3), (54_001, Q.Q4), (266_999, Q.Q4), (267_000, Q.Q5),
]

# (monthly costs, expected annual) with expected values computed by hand:
# annual = round-half-up(sum(costs) * 12 / n_months)
ANNUALIZE_CASES = [
    ([1_000] * 12, 12_000),
    ([500] * 6, 6_000),
    ([100_000], 1_200_000),
    ([100, 0, 0, 0, 0, 0, 0], 171),            # 1200/7  = 171.43 -> 171
    ([1, 0, 0, 0, 0, 0, 0, 0], 2),             # 12/8    = 1.5    -> 2
    ([2, 0, 0, 0, 0], 5),                      # 24/5    = 4.8    -> 5
    ([35, 0, 0, 0, 0, 0, 0, 0, 0], 47),        # 420/9   = 46.67  -> 47
    ([10, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], 11),  # 120/11  = 10.91  -> 11
    ([3, 0, 0, 0, 0, 0, 0, 0, 0, 0], 4),       # 36/10   = 3.6    -> 4
    ([3, 0, 0, 0, 0, 0, 0, 0], 5),             # 36/8    = 4.5    -> 5
    ([7, 0, 0, 0, 0, 0], 14),                  # 84/6    = 14 exactly
    ([5, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0], 7), # 84/12   = 7 exactly
]


def test_criterion_6_classification_and_annualization():
    """Boundary table maps exactly; 12 hand-computed annualization cases match."""
    for cost, expected in BOUNDARY_TABLE:
        assert classify_cost(cost) is expected, (cost, expected)
    assert len(ANNUALIZE_CASES) == 12
    for costs, expected in ANNUALIZE_CASES:
        records = [ClaimRecord("x", "M", 40, 2010, m + 1, c) for m, c in enumerate(costs)]
        assert annualize(records).annual_cost == expected, (costs, expected)
    report(6, f"{len(BOUNDARY_TABLE)} band edges exact, "
              f"{len(ANNUALIZE_CASES)} annualization cases exact")


def _ar_panel(seed, n, lo, hi, coef, year_effect=300.0, noise=5_000.0,
              cohorts=(2005, 2006, 2007)):
    rng = np.random.default_rng(seed)
    n_ages = hi - lo + 1
    order = len(coef)
    costs = np.zeros((n, n_ages))
    stationary = 50_000 / (1 - sum(coef))
    enter = np.array([cohorts[p % len(cohorts)] for p in range(n)])
    for k in range(n_ages):
        if k < order:
            costs[:, k] = stationary + rng.normal(0, noise, n)
            continue
        drift = 50_000 + sum(c * costs[:, k - i - 1] for i, c in enumerate(coef))
        year = enter + k
        costs[:, k] = drift + year_effect * (year - 2005) + rng.normal(0, noise, n)
    costs = np.maximum(np.round(costs), 0).astype(np.int64)
    ids = [f"p{k:06d}" for k in range(n)]
    births = (enter - lo).astype(np.int32)
    states = np.zeros_like(costs, dtype=np.int8)
    months = np.full_like(states, 12, dtype=np.int8)
    return Panel(ids, births, lo, states, costs, months)


@pytest.mark.parametrize(
    "seed,coef",
    [(0, (0.5,)), (1, (0.4, 0.2))],
    ids=["ar1", "ar2"],
)
def test_criterion_7_ar_recovery(seed, coef):
    """Lag coefficients inside their 95% CIs for >= 95% of ages at n=50k."""
    lo, hi = 20, 60
    panel = _ar_panel(seed, 50_000, lo, hi, coef)
    order = len(coef)
    ages = list(range(lo + order, hi + 1))
    failures = 0
    for age in ages:
        fit = ar_regression(panel, age, order=order)
        assert fit.available and fit.n == 50_000
        ok = all(
            abs(fit.lag_coefficients[k] - coef[k]) <= 1.96 * fit.lag_se[k]
            for k in range(order)
        )
        failures += (not ok)
    allowed = math.floor(0.05 * len(ages))
    assert failures <= allowed, f"{failures}/{len(ages)} ages outside CI (allowed {allowed})"
    report(7, f"AR({order}) coef {coef}: {len(ages) - failures}/{len(ages)} ages within "
              f"95% CI (needed {len(ages) - allowed})")


def _monotone_chain_tensor():
    low = np.array([0.6, 0.2, 0.1, 0.06, 0.04])
    high = np.array([0.04, 0.06, 0.1, 0.2, 0.6])
    t = np.zeros((5, 5, 5))
    for i in range(5):
        for j in range(5):
            lam = (i + j) / 8.0
            t[i, j] = (1 - lam) * low + lam * high
    return t


def test_criterion_8_shock_cost_difference_sign():
    """Stochastic dominance of the shocked start forces a positive cost gap."""
    t = _monotone_chain_tensor()
    family = lift_family({age: t for age in range(21, 36)})
    horizon = 10

    # precondition: the (Q1,Q5)-start current-state distribution first-order
    # dominates the (Q1,Q1)-start one at every horizon (strictly, everywhere)
    v_bad = start_vector((Q.Q1, Q.Q5))
    v_good = start_vector((Q.Q1, Q.Q1))
    for k in range(1, horizon + 1):
        v_bad = family[20 + k].probs @ v_bad
        v_good = family[20 + k].probs @ v_good
        marg_bad = v_bad.reshape(5, 5).sum(axis=0)
        marg_good = v_good.reshape(5, 5).sum(axis=0)
        cdf_bad = np.cumsum(marg_bad)[:4]
        cdf_good = np.cumsum(marg_good)[:4]
        assert (cdf_bad < cdf_good).all(), f"dominance fails at horizon {k}"

    rng = np.random.default_rng(88)
    vectors = [COSTS] + [
        CostVector(tuple(np.cumsum(rng.uniform(0.1, 1_000.0, size=5))))
        for _ in range(50)
    ]
    smallest = float("inf")
    for costs in vectors:
        bad = project_cumulative(family, costs, 20, (Q.Q1, Q.Q5), horizon).cumulative
        good = project_cumulative(family, costs, 20, (Q.Q1, Q.Q1), horizon).cumulative
        diff = bad - good
        smallest = min(smallest, diff)
        assert diff > 0.0
    report(8, f"dominance verified at horizons 1-10; 51 non-decreasing cost vectors "
              f"all give positive differences (smallest {smallest:.3g})")


def test_criterion_9_end_to_end_determinism(tmp_path):
    """synth -> ingest -> estimate -> report f02, twice, byte-identical."""
    outputs = {}
    for name in ("run1", "run2"):
        out = tmp_path / name
        common = ["--output-dir", str(out)]
        assert cli_main(common + [
            "--set", "seed=12345",
            "--set", "synth.n_persons=2000",
            "--set", "synth.entry_age=20",
            "--set", "synth.exit_age=60",
            "--set", "synth.attrition=0.03",
            "--set", "synth.cost_model=uniform",
            "synth",
        ]) == 0
        assert cli_main(common + ["--set", f"input.claims={out / 'claims.csv'}", "ingest"]) == 0
        assert cli_main(common + ["--set", f"input.panel={out / 'panel.csv'}", "estimate"]) == 0
        assert cli_main(common + [
            "--set", f"input.panel={out / 'panel.csv'}",
            "--set", "project.start_ages=[25, 40]",
            "report", "f02",
        ]) == 0
        files = sorted(p.name for p in out.iterdir())
        assert {"claims.csv", "truth.json", "panel.csv", "order1.csv", "order2.csv",
                "fractions.csv", "f02.csv"} <= set(files)
        outputs[name] = {p.name: p.read_bytes() for p in out.iterdir()}
    assert outputs["run1"].keys() == outputs["run2"].keys()
    for fname in outputs["run1"]:
        assert outputs["run1"][fname] == outputs["run2"][fname], f"{fname} differs between runs"
    report(9, f"{len(outputs['run1'])} pipeline outputs byte-identical across two runs")
