"""
Cost ledger tests
"""
import random
from decimal import Decimal

import pytest

from app.models import UsageEvent, UsagePurpose, format_money, to_money
from app.services.cost_ledger import CostLedger, aggregate, aggregate_runs, cost_of
from app.utils import EmptyRunSet, ModelMismatch, UnknownModel
from tests.factories import make_model


def event(model_id: str, tokens_in: int, tokens_out: int, purpose=UsagePurpose.PLANNING, n: int = 0) -> UsageEvent:
    return UsageEvent(
        event_id=f"run:{n}",
        run_id="run",
        step_index=0,
        model_id=model_id,
        purpose=purpose,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        temperature=0.2
    )


class TestCostOf:
    def test_per_million_pricing(self):
        gpt4_turbo = make_model('gpt-4-turbo', '0.00001', '0.00003')
        assert cost_of(event('gpt-4-turbo', 1000, 500), gpt4_turbo) == Decimal('0.025000')

    def test_no_cost_model(self):
        free = make_model('gemini-pro')
        assert cost_of(event('gemini-pro', 50000, 20000), free) == Decimal('0')

    def test_zero_tokens(self):
        gpt4 = make_model('gpt-4', '0.00003', '0.00006')
        assert cost_of(event('gpt-4', 0, 0), gpt4) == Decimal('0')

    def test_model_mismatch(self):
        with pytest.raises(ModelMismatch):
            cost_of(event('gpt-4', 10, 10), make_model('gpt-3.5-turbo'))


class TestAggregate:
    def test_fixture_run_total_is_exact(self):
        """$10/M in, $30/M out, 10,000 in / 1,000 out -> $0.13"""
        model = make_model('fixture', '0.00001', '0.00003')
        events = [event('fixture', 4000, 300, n=0), event('fixture', 6000, 700, n=1)]

        report = aggregate(events, {'fixture': model})

        assert report.total == Decimal('0.130000')
        assert str(report.total) == '0.130000'
        assert report.tokens_in == 10000
        assert report.tokens_out == 1000

    def test_breakdowns_include_free_models(self):
        table = {
            'gemini-pro': make_model('gemini-pro'),
            'gpt-4': make_model('gpt-4', '0.00003', '0.00006'),
        }
        events = [
            event('gemini-pro', 1000, 100, UsagePurpose.WORKER_ACTION, 0),
            event('gpt-4', 1000, 100, UsagePurpose.EXPERT, 1),
        ]

        report = aggregate(events, table)

        assert report.breakdown_by_model == {'gemini-pro': Decimal('0'), 'gpt-4': Decimal('0.036000')}
        assert report.breakdown_by_purpose['expert'] == Decimal('0.036000')
        assert report.breakdown_by_purpose['worker_action'] == Decimal('0')

    def test_unknown_model(self):
        with pytest.raises(UnknownModel):
            aggregate([event('mystery', 1, 1)], {})

    def test_empty_event_list(self):
        report = aggregate([], {})
        assert report.total == Decimal('0')
        assert report.per_event_costs == []

    def test_total_equals_sum_of_event_costs(self):
        rng = random.Random(1234)
        table = {
            'a': make_model('a', '0.0000005', '0.0000015'),
            'b': make_model('b', '0.00001', '0.00003'),
            'c': make_model('c', '0.00003', '0.00006'),
            'free': make_model('free'),
        }
        events = [
            event(
                rng.choice(list(table)),
                rng.randint(0, 200_000),
                rng.randint(0, 20_000),
                rng.choice(list(UsagePurpose)),
                n
            )
            for n in range(1000)
        ]

        report = aggregate(events, table)

        assert report.total == sum(report.per_event_costs, Decimal('0'))
        assert report.total == sum((cost_of(e, table[e.model_id]) for e in events), Decimal('0'))
        assert sum(report.breakdown_by_model.values(), Decimal('0')) == report.total
        assert sum(report.breakdown_by_purpose.values(), Decimal('0')) == report.total


class TestAggregateRuns:
    def test_average_per_run(self):
        table = {'m': make_model('m', '0.00001', '0.00003')}
        runs = [
            [event('m', 10000, 1000, n=0)],
            [event('m', 0, 0, n=0)],
        ]

        report = aggregate_runs(runs, table)

        assert report.run_count == 2
        assert report.total == Decimal('0.130000')
        assert report.average_per_run == Decimal('0.065000')

    def test_empty_run_set(self):
        with pytest.raises(EmptyRunSet):
            aggregate_runs([], {})


class TestCostLedger:
    def test_record_assigns_ids_and_step(self):
        ledger = CostLedger("r1")
        ledger.begin_step(4)
        first = ledger.record('m', UsagePurpose.PLANNING, 10, 2, 0.2, profile='planner')
        second = ledger.record('m', UsagePurpose.RETRIEVAL, 5, 1, 0.01)

        assert first.event_id == "r1:0"
        assert second.event_id == "r1:1"
        assert first.step_index == 4
        assert [e.event_id for e in ledger.events] == ["r1:0", "r1:1"]

    def test_mark_and_since(self):
        ledger = CostLedger("r1")
        ledger.record('m', UsagePurpose.PLANNING, 1, 1, 0.2)
        mark = ledger.mark()
        ledger.record('m', UsagePurpose.PLANNING, 2, 2, 0.2)

        assert [e.tokens_in for e in ledger.since(mark)] == [2]

    def test_report(self):
        ledger = CostLedger("r1")
        ledger.record('m', UsagePurpose.PLANNING, 10000, 1000, 0.2)
        assert ledger.report({'m': make_model('m', '0.00001', '0.00003')}).total == Decimal('0.13')


def test_money_helpers():
    assert to_money(0.1) == Decimal('0.100000')
    assert format_money(Decimal('0.000349')) == '$0.0003'
    assert format_money(Decimal('0.13')) == '$0.1300'
