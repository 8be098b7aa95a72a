import io

import pytest
from hypothesis import given, strategies as st

from healthmarkov.errors import DataFormatError, DuplicateRecordError, InvalidInputError
from healthmarkov.ingest import (
    ClaimRecord,
    aggregate_person_years,
    annualize,
    grouping_year,
    load_claims_panel,
    parse_claims,
    round_half_up_ratio,
)
from healthmarkov.states import HealthState

HEADER = "person_id,sex,age,year,month,cost_yen\n"


def claims(text):
    return io.StringIO(HEADER + text)


def rec(month, cost, pid="a", sex="M", age=40, year=2010):
    return ClaimRecord(pid, sex, age, year, month, cost)


class TestParse:
    def test_single_valid_row(self):
        rows = list(parse_claims(claims("a,M,40,2010,4,1000\n")))
        assert rows == [ClaimRecord("a", "M", 40, 2010, 4, 1000)]

    def test_rows_stream_in_order(self):
        text = "".join(f"p{i},F,3,2011,{1 + i % 12},{i}\n" for i in range(50))
        rows = list(parse_claims(claims(text)))
        assert [r.person_id for r in rows] == [f"p{i}" for i in range(50)]

    def test_month_13_rejected_with_line_number(self):
        with pytest.raises(DataFormatError) as err:
            list(parse_claims(claims("a,M,40,2010,4,1000\nb,M,41,2010,13,5\n")))
        assert err.value.line == 3

    def test_bad_header(self):
        with pytest.raises(DataFormatError):
            list(parse_claims(io.StringIO("id,cost\n1,2\n")))

    @pytest.mark.parametrize(
        "row",
        [
            "a,X,40,2010,4,1000",       # bad sex
            "a,M,121,2010,4,1000",      # age out of range
            "a,M,40,2010,0,1000",       # month 0
            "a,M,40,2010,4,-1",         # negative cost
            "a,M,40,2010,4,ten",        # non-integer
            "a,M,40,2010,4",            # missing field
            ",M,40,2010,4,1000",        # empty id
        ],
    )
    def test_malformed_rows(self, row):
        with pytest.raises(DataFormatError) as err:
            list(parse_claims(claims(row + "\n")))
        assert err.value.line == 2

    def test_parser_is_lazy(self):
        # consuming one record must not validate the rest of the file
        stream = claims("a,M,40,2010,4,1000\nbroken row\n")
        gen = parse_claims(stream)
        assert next(gen).cost == 1000


class TestGroupingYear:
    def test_fiscal_wraps_january_to_march(self):
        assert grouping_year(2010, 4) == 2010
        assert grouping_year(2010, 12) == 2010
        assert grouping_year(2011, 1) == 2010
        assert grouping_year(2011, 3) == 2010
        assert grouping_year(2011, 4) == 2011

    def test_calendar_is_identity(self):
        assert grouping_year(2011, 1, "calendar") == 2011

    def test_unknown_convention(self):
        with pytest.raises(InvalidInputError):
            grouping_year(2011, 1, "academic")


class TestAnnualize:
    def test_full_year_sum(self):
        py = annualize([rec(m, 1_000) for m in range(1, 13)])
        assert py.annual_cost == 12_000
        assert py.months_observed == 12
        assert py.state is HealthState.Q2

    def test_part_year_scales_up(self):
        # 6 months totalling 3000 -> (3000 / 6) * 12 = 6000
        py = annualize([rec(m, 500) for m in range(1, 7)])
        assert py.annual_cost == 6_000
        assert py.state is HealthState.Q1

    def test_single_expensive_month(self):
        # 100000 * 12 = 1,200,000
        py = annualize([rec(7, 100_000)])
        assert py.annual_cost == 1_200_000
        assert py.state is HealthState.Q5

    # (months' costs, n_months, expected) with expected computed by hand:
    # annual = round-half-up(sum * 12 / n)
    HAND_CASES = [
        ([100], 1, 1_200),            # 1200/1
        ([1, 1], 2, 12),              # 24/2
        ([50, 50, 50], 3, 600),       # 1800/3
        ([100, 0, 0, 0, 0, 0, 0], 7, 171),   # 1200/7 = 171.428..
        ([1, 0, 0, 0, 0, 0, 0, 0], 8, 2),    # 12/8 = 1.5 -> half-up 2
        ([2, 0, 0, 0, 0], 5, 5),      # 24/5 = 4.8
        ([35, 0, 0, 0, 0, 0, 0, 0, 0], 9, 47),  # 420/9 = 46.67
        ([10, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], 11, 11),  # 120/11 = 10.909
        ([3, 0, 0, 0, 0, 0, 0, 0, 0, 0], 10, 4),  # 36/10 = 3.6
        ([3, 0, 0, 0, 0, 0, 0, 0], 8, 5),  # 36/8 = 4.5 -> half-up 5
        ([7, 0, 0, 0, 0, 0], 6, 14),  # 84/6 = 14 exact
        ([5, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0], 12, 7),  # 84/12 = 7 exact
    ]

    @pytest.mark.parametrize("costs,n,expected", HAND_CASES)
    def test_hand_computed_rounding(self, costs, n, expected):
        assert len(costs) == n
        py = annualize([rec(m + 1, c) for m, c in enumerate(costs)])
        assert py.annual_cost == expected

    def test_zero_records_not_constructible(self):
        with pytest.raises(InvalidInputError):
            annualize([])

    def test_duplicate_month_rejected(self):
        with pytest.raises(DuplicateRecordError):
            annualize([rec(1, 10), rec(1, 20)])

    def test_mixed_persons_rejected(self):
        with pytest.raises(InvalidInputError):
            annualize([rec(1, 10, pid="a"), rec(2, 10, pid="b")])

    def test_straddling_years_need_explicit_year(self):
        records = [rec(12, 10, year=2010), rec(1, 10, year=2011)]
        with pytest.raises(InvalidInputError):
            annualize(records)
        assert annualize(records, year=2010).year == 2010

    def test_age_is_year_end_age(self):
        records = [rec(4, 10, age=40), rec(11, 10, age=41)]
        assert annualize(records).age == 41

    @given(
        st.lists(st.integers(min_value=0, max_value=100_000), min_size=1, max_size=12),
        st.integers(min_value=2, max_value=9),
    )
    def test_scale_equivariance(self, costs, c):
        base = annualize([rec(m + 1, v) for m, v in enumerate(costs)]).annual_cost
        scaled = annualize([rec(m + 1, v * c) for m, v in enumerate(costs)]).annual_cost
        # exact before rounding, so off by at most c * (rounding slack)
        assert abs(scaled - c * base) <= c


class TestRoundHalfUp:
    @pytest.mark.parametrize(
        "num,den,expected",
        [(3, 2, 2), (1, 2, 1), (0, 5, 0), (7, 2, 4), (10, 4, 3), (9, 4, 2)],
    )
    def test_cases(self, num, den, expected):
        assert round_half_up_ratio(num, den) == expected


class TestAggregate:
    def test_fiscal_grouping_collects_both_calendar_years(self):
        records = [rec(m, 100, year=2010) for m in range(4, 13)]
        records += [rec(m, 100, year=2011) for m in range(1, 4)]
        person_years, sex_of = aggregate_person_years(records)
        assert len(person_years) == 1
        assert person_years[0].year == 2010
        assert person_years[0].months_observed == 12
        assert sex_of == {"a": "M"}

    def test_duplicate_person_year_month(self):
        with pytest.raises(DuplicateRecordError):
            aggregate_person_years([rec(4, 1), rec(4, 2)])

    def test_conflicting_sex(self):
        with pytest.raises(DataFormatError):
            aggregate_person_years([rec(4, 1), rec(5, 1, sex="F")])


class TestMillionRowStream:
    def test_row_count_through_the_generator(self, tmp_path):
        from healthmarkov.synthetic import generate_panel, random_chain, write_claims

        truth = random_chain(404, entry_age=20, exit_age=60)
        panel = generate_panel(truth, 2_033)
        path = tmp_path / "claims.csv"
        written = write_claims(panel, path)
        assert written == 2_033 * 41 * 12  # 1,000,236 monthly rows
        count = sum(1 for _ in parse_claims(path))
        assert count == written


class TestLoadClaimsPanel:
    def test_small_pipeline(self):
        text = ""
        for year in (2010, 2011, 2012):
            for m in range(4, 13):
                text += f"a,M,{40 + year - 2010},{year},{m},1000\n"
        panel = load_claims_panel(claims(text))
        assert panel.n_persons == 1
        pys = list(panel.person_years())
        assert [py.age for py in pys] == [40, 41, 42]
        assert all(py.annual_cost == 12_000 for py in pys)

    def test_duplicate_row_bubbles_up(self):
        text = "a,M,40,2010,4,1\na,M,40,2010,4,1\n"
        with pytest.raises(DuplicateRecordError):
            load_claims_panel(claims(text))
