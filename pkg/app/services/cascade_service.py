"""
Cascade Router Service
Chooses which model tier answers each planning call, escalating on format
failures and repeated actions, and enforces the shared lifeline cap
"""
from typing import Callable, Optional, Sequence, Union

from app.models import (
    ActionKey,
    ActionKind,
    ActionName,
    ActionSpec,
    AgentProfiles,
    AttemptOutcome,
    AttemptRecord,
    CascadeConfig,
    CascadeState,
    CompletionRequest,
    EscalationReason,
    EscalationTrace,
    ModelDescriptor,
    ParseFailure,
    PlannerResponse,
    RepeatTrigger,
    RequestExpertInput,
    TierTransition,
    UsagePurpose,
    schema_of,
    usage_for
)
from app.services.cost_ledger import CostLedger
from app.services.gateway_service import ModelGateway
from app.services.response_grammar import canonical_action_input
from app.utils import CascadeExhausted, LifelinesExhausted, LoggerMixin

# text -> parsed response or failure; bound to the step's allowed actions
Grammar = Callable[[str], Union[PlannerResponse, ParseFailure]]

LIFELINE_CAP_ANNOTATION = "lifeline_cap"

EXPERT_ACTION = ActionSpec(
    name=ActionName.REQUEST_EXPERT.value,
    description=(
        "Ask a stronger planning expert for help when you are stuck. "
        "The expert reads the same context and decides the next action. "
        "Use sparingly; the number of requests is limited."
    ),
    usage=usage_for(ActionName.REQUEST_EXPERT.value, RequestExpertInput),
    returns="The expert's next action is executed and its observation is returned.",
    kind=ActionKind.HIGH_LEVEL,
    input_schema=schema_of(RequestExpertInput)
)


def action_key(response: PlannerResponse) -> ActionKey:
    """(action name, canonical action input) used for repeat detection"""
    return (response.action_name, canonical_action_input(response.action_input))


def detect_repeat(
    recent: Sequence[ActionKey],
    candidate: ActionKey,
    r: int,
    trigger: RepeatTrigger = RepeatTrigger.AT_R
) -> bool:
    """
    Check whether accepting candidate repeats the same action too often

    at_r: true iff the last r-1 entries all equal candidate (accepting it
    would make r consecutive identical actions). after_r: true iff the
    last r entries all equal candidate.
    """
    needed = r - 1 if trigger == RepeatTrigger.AT_R else r
    if needed < 1 or len(recent) < needed:
        return False
    return all(entry == candidate for entry in recent[-needed:])


def available_planner_actions(
    state: CascadeState,
    config: CascadeConfig,
    base_actions: Sequence[ActionSpec]
) -> list[ActionSpec]:
    """Base actions plus the expert action while lifelines remain"""
    actions = [a for a in base_actions if a.name != EXPERT_ACTION.name]
    if config.expert_tier is not None and state.lifelines_used < config.lifeline_cap:
        actions.append(EXPERT_ACTION)
    return actions


def build_expert_prompt(prompt: str, question: str) -> str:
    """Planner context plus the question the planner asked"""
    return (
        f"{prompt}\n"
        "The planner working on this task is stuck and asked for your help:\n"
        f"{question.strip()}\n\n"
        "Decide the next action yourself and respond in the format above.\n"
    )


class CascadeRouter(LoggerMixin):
    """
    Escalation state machine for one run

    Every step starts at tier 0. A tier gets up to its max_format_retries
    attempts; running out moves up with FormatFailure. A candidate that
    repeats the recent action window is discarded unexecuted and moves up
    with RepeatedAction. Calls to the expert tier consume lifelines.
    """

    def __init__(
        self,
        gateway: ModelGateway,
        ledger: CostLedger,
        profiles: Optional[AgentProfiles] = None,
        planning_temperature: float = 0.2
    ):
        self.gateway = gateway
        self.ledger = ledger
        self.profiles = profiles or AgentProfiles()
        self.planning_temperature = planning_temperature

    def _check_lifeline(self, state: CascadeState, config: CascadeConfig, trace: EscalationTrace) -> None:
        if state.lifelines_used >= config.lifeline_cap:
            self.logger.warning(
                "lifeline_cap_reached",
                lifelines_used=state.lifelines_used,
                lifeline_cap=config.lifeline_cap
            )
            raise CascadeExhausted(
                "Escalation needs the expert tier but every lifeline is used",
                trace=trace,
                annotation=LIFELINE_CAP_ANNOTATION,
                details={"lifelines_used": state.lifelines_used, "lifeline_cap": config.lifeline_cap}
            )

    async def _call_tier(
        self,
        tier: ModelDescriptor,
        prompt: str,
        profile: str,
        purpose: UsagePurpose
    ) -> tuple[str, Optional[str]]:
        result = await self.gateway.complete(
            tier,
            CompletionRequest(
                profile=profile,
                prompt=prompt,
                temperature=self.planning_temperature,
                purpose=purpose
            ),
            ledger=self.ledger
        )
        return result.text, result.usage_event_id

    async def plan_next(
        self,
        prompt: str,
        state: CascadeState,
        config: CascadeConfig,
        grammar: Grammar
    ) -> tuple[PlannerResponse, EscalationTrace]:
        """
        Get an accepted planner response for the current step

        Args:
            prompt: Rendered planner prompt (reused verbatim on retries)
            state: Run cascade state; lifelines_used is updated in place
            config: Cascade configuration
            grammar: Parser bound to the step's allowed actions

        Returns:
            tuple: Accepted response and the full escalation trace

        Raises:
            CascadeExhausted: No tier produced an acceptable response
        """
        attempts: list[AttemptRecord] = []
        transitions: list[TierTransition] = []
        state.per_step_attempt_log = []

        def snapshot(**kwargs) -> EscalationTrace:
            return EscalationTrace(mode='cascade', attempts=list(attempts), transitions=list(transitions), **kwargs)

        for tier_index, tier in enumerate(config.tiers):
            is_expert = tier_index == config.expert_tier_index
            is_top = tier_index == config.top_tier_index
            reason = EscalationReason.FORMAT_FAILURE

            for attempt_no in range(1, tier.max_format_retries + 1):
                if is_expert:
                    self._check_lifeline(state, config, snapshot())

                text, event_id = await self._call_tier(tier, prompt, self.profiles.planner, UsagePurpose.PLANNING)
                if is_expert:
                    state.lifelines_used += 1

                parsed = grammar(text)
                if isinstance(parsed, ParseFailure):
                    record = AttemptRecord(
                        tier_index=tier_index,
                        model_id=tier.id,
                        attempt_no=attempt_no,
                        outcome=AttemptOutcome.FORMAT_FAILURE,
                        failure_kind=parsed.kind,
                        detail=parsed.detail,
                        consumed_lifeline=is_expert,
                        usage_event_id=event_id
                    )
                    attempts.append(record)
                    state.per_step_attempt_log.append(record)
                    self.logger.debug(
                        "planner_format_failure",
                        tier=tier_index,
                        model_id=tier.id,
                        attempt_no=attempt_no,
                        kind=parsed.kind.value
                    )
                    continue

                is_expert_request = parsed.action_name == EXPERT_ACTION.name
                if (
                    not is_top
                    and not is_expert_request
                    and detect_repeat(
                        state.recent_actions,
                        action_key(parsed),
                        config.repeat_threshold,
                        config.repeat_trigger
                    )
                ):
                    record = AttemptRecord(
                        tier_index=tier_index,
                        model_id=tier.id,
                        attempt_no=attempt_no,
                        outcome=AttemptOutcome.REPEATED_ACTION,
                        detail=f"'{parsed.action_name}' repeats the recent action window",
                        consumed_lifeline=is_expert,
                        usage_event_id=event_id
                    )
                    attempts.append(record)
                    state.per_step_attempt_log.append(record)
                    reason = EscalationReason.REPEATED_ACTION
                    break

                record = AttemptRecord(
                    tier_index=tier_index,
                    model_id=tier.id,
                    attempt_no=attempt_no,
                    outcome=AttemptOutcome.ACCEPTED,
                    consumed_lifeline=is_expert,
                    usage_event_id=event_id
                )
                attempts.append(record)
                state.per_step_attempt_log.append(record)
                return parsed, snapshot(served_by_tier=tier_index, served_by_model=tier.id)

            if tier_index < config.top_tier_index:
                transitions.append(TierTransition(from_tier=tier_index, to_tier=tier_index + 1, reason=reason))
                self.logger.info(
                    "cascade_escalated",
                    from_tier=tier_index,
                    to_tier=tier_index + 1,
                    reason=reason.value
                )

        self.logger.warning("cascade_exhausted", attempts=len(attempts))
        raise CascadeExhausted(
            "Every cascade tier failed to produce an acceptable response",
            trace=snapshot()
        )

    async def request_expert(
        self,
        question: str,
        prompt: str,
        state: CascadeState,
        config: CascadeConfig,
        grammar: Grammar,
        from_tier: int = 0
    ) -> tuple[PlannerResponse, EscalationTrace]:
        """
        Ask the planning expert for the step's action

        Each attempt is one expert-tier call and consumes one lifeline. The
        expert's choice is trusted and skips repeat detection.

        Args:
            question: What the planner asked
            prompt: Planner prompt rendered without the expert action
            state: Run cascade state
            config: Cascade configuration
            grammar: Parser bound to the actions the expert may choose
            from_tier: Tier that served the request

        Returns:
            tuple: Expert response and its trace

        Raises:
            LifelinesExhausted: No lifeline left when the request was made
            CascadeExhausted: Expert responses all failed the grammar, or the
                cap was hit between retries
        """
        expert = config.expert_tier
        if expert is None or state.lifelines_used >= config.lifeline_cap:
            raise LifelinesExhausted(
                "Planning expert requested with no lifelines left",
                details={"lifelines_used": state.lifelines_used, "lifeline_cap": config.lifeline_cap}
            )

        expert_index = config.expert_tier_index
        attempts: list[AttemptRecord] = []
        transitions = [TierTransition(from_tier=from_tier, to_tier=expert_index, reason=EscalationReason.EXPERT_REQUESTED)]
        expert_prompt = build_expert_prompt(prompt, question)

        def snapshot(**kwargs) -> EscalationTrace:
            return EscalationTrace(mode='expert', attempts=list(attempts), transitions=list(transitions), **kwargs)

        self.logger.info("planning_expert_requested", lifelines_used=state.lifelines_used)

        for attempt_no in range(1, expert.max_format_retries + 1):
            self._check_lifeline(state, config, snapshot())
            text, event_id = await self._call_tier(
                expert, expert_prompt, self.profiles.planning_expert, UsagePurpose.EXPERT
            )
            state.lifelines_used += 1

            parsed = grammar(text)
            if isinstance(parsed, ParseFailure):
                attempts.append(AttemptRecord(
                    tier_index=expert_index,
                    model_id=expert.id,
                    attempt_no=attempt_no,
                    outcome=AttemptOutcome.FORMAT_FAILURE,
                    failure_kind=parsed.kind,
                    detail=parsed.detail,
                    consumed_lifeline=True,
                    usage_event_id=event_id
                ))
                continue

            attempts.append(AttemptRecord(
                tier_index=expert_index,
                model_id=expert.id,
                attempt_no=attempt_no,
                outcome=AttemptOutcome.ACCEPTED,
                consumed_lifeline=True,
                usage_event_id=event_id
            ))
            return parsed, snapshot(served_by_tier=expert_index, served_by_model=expert.id)

        raise CascadeExhausted(
            "Planning expert failed to produce an acceptable response",
            trace=snapshot()
        )
