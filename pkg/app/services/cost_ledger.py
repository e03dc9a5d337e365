"""
Cost Ledger Service
Token-level cost accounting per call, per run and across runs
"""
from collections import defaultdict
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

from app.models import (
    ZERO_MONEY,
    CostReport,
    ModelDescriptor,
    UsageEvent,
    UsagePurpose,
    to_money
)
from app.utils import EmptyRunSet, LoggerMixin, ModelMismatch, UnknownModel


def cost_of(event: UsageEvent, pricing: ModelDescriptor) -> Decimal:
    """
    Price one usage event

    cost = price_in * tokens_in + price_out * tokens_out

    Args:
        event: Usage event
        pricing: Descriptor of the model that served the event

    Returns:
        Decimal: Exact cost at money precision

    Raises:
        ModelMismatch: Event belongs to a different model
    """
    if event.model_id != pricing.id:
        raise ModelMismatch(
            f"Event for '{event.model_id}' priced against '{pricing.id}'",
            details={"event_id": event.event_id}
        )
    return to_money(
        pricing.price_per_input_token * event.tokens_in
        + pricing.price_per_output_token * event.tokens_out
    )


def aggregate(events: Iterable[UsageEvent], pricing_table: Mapping[str, ModelDescriptor]) -> CostReport:
    """
    Aggregate usage events into a cost report

    Zero-price models contribute $0 but still appear in the breakdowns.

    Raises:
        UnknownModel: An event's model is missing from the table
    """
    per_event: list[Decimal] = []
    by_model: dict[str, Decimal] = defaultdict(lambda: ZERO_MONEY)
    by_purpose: dict[str, Decimal] = defaultdict(lambda: ZERO_MONEY)
    tokens_in = tokens_out = 0

    for event in events:
        pricing = pricing_table.get(event.model_id)
        if pricing is None:
            raise UnknownModel(
                f"No pricing for model '{event.model_id}'",
                details={"event_id": event.event_id}
            )
        cost = cost_of(event, pricing)
        per_event.append(cost)
        by_model[event.model_id] += cost
        by_purpose[event.purpose.value] += cost
        tokens_in += event.tokens_in
        tokens_out += event.tokens_out

    return CostReport(
        per_event_costs=per_event,
        total=sum(per_event, ZERO_MONEY),
        breakdown_by_model=dict(by_model),
        breakdown_by_purpose=dict(by_purpose),
        tokens_in=tokens_in,
        tokens_out=tokens_out
    )


def aggregate_runs(
    runs: Sequence[Iterable[UsageEvent]],
    pricing_table: Mapping[str, ModelDescriptor]
) -> CostReport:
    """
    Aggregate several runs and compute the average cost per run

    Raises:
        EmptyRunSet: No runs given
    """
    if not runs:
        raise EmptyRunSet("Cannot average cost over zero runs")

    report = aggregate((e for run in runs for e in run), pricing_table)
    return report.model_copy(update={
        'run_count': len(runs),
        'average_per_run': to_money(report.total / len(runs))
    })


class CostLedger(LoggerMixin):
    """
    Per-run usage record

    Single writer: the run loop calls begin_step() and the gateway calls
    record() once per successful completion.
    """

    def __init__(self, run_id: str):
        self.run_id = run_id
        self._events: list[UsageEvent] = []
        self._step_index = 0

    @property
    def events(self) -> list[UsageEvent]:
        return list(self._events)

    @property
    def step_index(self) -> int:
        return self._step_index

    def begin_step(self, index: int) -> None:
        """Attribute subsequent events to step `index`"""
        self._step_index = index

    def mark(self) -> int:
        """Position to pass to since()"""
        return len(self._events)

    def since(self, mark: int) -> list[UsageEvent]:
        """Events recorded after mark()"""
        return self._events[mark:]

    def record(
        self,
        model_id: str,
        purpose: UsagePurpose,
        tokens_in: int,
        tokens_out: int,
        temperature: float,
        profile: str = ''
    ) -> UsageEvent:
        """Append one usage event and return it"""
        event = UsageEvent(
            event_id=f"{self.run_id}:{len(self._events)}",
            run_id=self.run_id,
            step_index=self._step_index,
            model_id=model_id,
            purpose=purpose,
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            temperature=temperature,
            profile=profile
        )
        self._events.append(event)
        self.logger.debug(
            "usage_recorded",
            event_id=event.event_id,
            model_id=model_id,
            purpose=purpose.value,
            tokens_in=tokens_in,
            tokens_out=tokens_out
        )
        return event

    def report(self, pricing_table: Mapping[str, ModelDescriptor]) -> CostReport:
        """Cost report over everything recorded so far"""
        return aggregate(self._events, pricing_table)
