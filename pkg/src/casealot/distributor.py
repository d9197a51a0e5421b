"""The distribution agent's procedure: gather facts by messaging, fire the
rule engine, execute the directive (including the two-stage random drawing),
emit the outcome with a full drawing justification, and handle
redistribution.

Drawing is reproducible: each distribution derives its own 64-bit seed from
the platform seed root and the distribution id, candidates are sorted
lexicographically before drawing, and the justification records every
candidate list and drawn index so the outcome can be replayed from the audit
log alone.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from casealot.agentry import (
    Agent,
    AgentId,
    AgentKind,
    AgentUnavailable,
    DistributionTask,
    LifecycleState,
    MagistrateAgent,
    Message,
    Platform,
    PlatformManagerAgent,
    ProtocolAgent,
    make_message,
)
from casealot.auditlog import AuditStore, format_timestamp, system_clock
from casealot.domain import (
    CaseNumber,
    CourtConfig,
    DivergenceRef,
    Lawsuit,
    PriorAssignment,
    competent_bodies,
    parse_case_number,
)
from casealot.rulekit import (
    AssignSameAs,
    CompetenceFact,
    DivergenceFact,
    EmbargoAssign,
    ImpedimentFact,
    LawsuitFact,
    NoRuleMatched,
    OrdinaryDraw,
    PreventionAssign,
    PriorAssignmentFact,
    RelatedAssignmentFact,
    RuleSet,
    WorkingMemory,
    assert_fact,
    fire,
    load_default_rules,
)

__all__ = [
    "NoCompetentBody",
    "Timeout",
    "DistributionExhausted",
    "PreventionConflict",
    "RedistributionOfUnknownCase",
    "DrawRng",
    "mix64",
    "fnv1a64",
    "Justification",
    "DistributionOutcome",
    "draw",
    "DistributionAgent",
    "build_platform",
    "collect_facts",
    "distribute",
    "redistribute",
    "run_corpus",
    "ConcurrentRunner",
]

MASK64 = (1 << 64) - 1


class NoCompetentBody(LookupError):
    """The lawsuit's procedural class maps to no judicial body."""


class Timeout(RuntimeError):
    """An agent failed to act within the configured step budget."""


class DistributionExhausted(RuntimeError):
    """Impediments/suspensions emptied every candidate body."""


class PreventionConflict(RuntimeError):
    """The prevention body has no eligible member left to draw."""


class RedistributionOfUnknownCase(LookupError):
    pass


# --------------------------------------------------------------------------
# Seeded randomness: splitmix64 core, rejection-sampled bounded picks.


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def mix64(seed_root: int, distribution_id: str) -> int:
    """Per-distribution draw seed: splitmix64 finalizer over
    seed_root XOR fnv1a64(distribution_id)."""
    return _mix((seed_root & MASK64) ^ fnv1a64(distribution_id))


class DrawRng:
    """splitmix64 sequence generator; the sequence is fully determined by
    the seed."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        return _mix(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection-sampled modulo (no bias)."""
        if n <= 0:
            raise ValueError("empty candidate list")
        limit = ((1 << 64) // n) * n
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n


def draw(bodies: Sequence[tuple[str, Sequence[str]]], rng: DrawRng) -> tuple[str, str, list[tuple[int, int]]]:
    """Two-stage drawing: uniform pick of a body among those with eligible
    members, then uniform pick among that body's members. Candidates must be
    (and are re-)sorted by identifier; both picks are recorded."""
    candidates = sorted(
        ((body, sorted(members)) for body, members in bodies if members),
        key=lambda item: item[0],
    )
    if not candidates:
        raise DistributionExhausted("no judicial body has an eligible magistrate")
    body_idx = rng.below(len(candidates))
    body, members = candidates[body_idx]
    member_idx = rng.below(len(members))
    picks = [(len(candidates), body_idx), (len(members), member_idx)]
    return body, members[member_idx], picks


# --------------------------------------------------------------------------
# Outcome and justification


@dataclass
class Justification:
    """Everything needed to audit and replay one distribution decision."""

    competent_bodies: list[str] = field(default_factory=list)
    eligible_bodies: list[str] = field(default_factory=list)
    eligible_members: dict[str, list[str]] = field(default_factory=dict)
    impeded: list[dict] = field(default_factory=list)
    timeouts: list[str] = field(default_factory=list)
    unavailable: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)
    draw_seed: int = 0
    draw_picks: list[tuple[int, int]] = field(default_factory=list)
    dependency_source: dict | None = None
    prevention_source: dict | None = None
    divergence_body: str | None = None
    dependency_override: bool = False
    prevention_override: bool = False
    superseded_distribution_id: str | None = None
    redistribution_reason: str | None = None

    def to_payload(self) -> dict:
        return {
            "competent_bodies": list(self.competent_bodies),
            "eligible_bodies": list(self.eligible_bodies),
            "eligible_members": {b: list(m) for b, m in self.eligible_members.items()},
            "impeded": list(self.impeded),
            "timeouts": list(self.timeouts),
            "unavailable": list(self.unavailable),
            "excluded": list(self.excluded),
            "draw_seed": self.draw_seed,
            "draw_picks": [[size, idx] for size, idx in self.draw_picks],
            "dependency_source": self.dependency_source,
            "prevention_source": self.prevention_source,
            "divergence_body": self.divergence_body,
            "dependency_override": self.dependency_override,
            "prevention_override": self.prevention_override,
            "superseded_distribution_id": self.superseded_distribution_id,
            "redistribution_reason": self.redistribution_reason,
        }


@dataclass
class DistributionOutcome:
    distribution_id: str
    case_number: str
    fired_rule: str
    rule_number: int
    body: str
    magistrate: str
    justification: Justification
    timestamp: str

    def to_payload(self) -> dict:
        return {
            "distribution_id": self.distribution_id,
            "case_number": self.case_number,
            "fired_rule": self.fired_rule,
            "rule_number": self.rule_number,
            "body": self.body,
            "magistrate": self.magistrate,
            "timestamp": self.timestamp,
            "justification": self.justification.to_payload(),
        }


# --------------------------------------------------------------------------
# Distribution agent


_AWAIT_LAWSUIT = "awaiting-lawsuit"
_AWAIT_REPLIES = "awaiting-replies"
_DONE = "done"
_FAILED = "failed"


@dataclass
class _Context:
    task: DistributionTask
    stage: str = _AWAIT_LAWSUIT
    lawsuit: Lawsuit | None = None
    related: list[dict] = field(default_factory=list)
    prior: dict | None = None
    queried: tuple[str, ...] = ()
    replies: dict[str, dict] = field(default_factory=dict)
    wm: WorkingMemory | None = None
    outcome: DistributionOutcome | None = None
    error: Exception | None = None


def _lawsuit_from_payload(payload: dict) -> Lawsuit:
    embargo = payload.get("embargo")
    divergence = None
    if embargo:
        source = embargo.get("source_case")
        divergence = DivergenceRef(
            bodies=tuple(embargo.get("bodies", ())),
            source_case=parse_case_number(source) if source else None,
        )
    return Lawsuit(
        case_number=parse_case_number(payload["case_number"]),
        procedural_class=payload["procedural_class"],
        parties=frozenset(payload.get("parties", ())),
        lawyers=frozenset(payload.get("lawyers", ())),
        related_cases=frozenset(
            parse_case_number(c) for c in payload.get("related_cases", ())
        ),
        phase=payload.get("phase", 1),
        embargo_of=divergence,
        protocol=payload.get("protocol", ""),
    )


class DistributionAgent(Agent):
    """Runs the distribution procedure for each queued task: request the
    lawsuit from its protocol agent, query every active magistrate agent,
    build the working memory, fire the rules, and execute the directive."""

    services = ("distribution",)

    def __init__(self, agent_id: AgentId):
        super().__init__(agent_id)
        self.contexts: dict[str, _Context] = {}
        self.membership_cache: dict[str, dict] = {}

    # -- message handling --------------------------------------------------

    def handle(self, platform: Platform, item) -> None:
        if isinstance(item, DistributionTask):
            self._start(platform, item)
        elif isinstance(item, Message):
            if item.content_type == "inform-lawsuit":
                self._on_lawsuit(platform, item)
            elif item.content_type == "inform-impediment-or-competence":
                self._on_reply(platform, item)

    def _fail(self, platform: Platform, ctx: _Context, error: Exception) -> None:
        ctx.error = error
        ctx.stage = _FAILED
        platform.log(
            self.id, "distribution-failed", ctx.task.conversation_id,
            case_number=ctx.task.case_number,
            payload={"error": type(error).__name__, "message": str(error)},
        )
        platform.note_failure()

    def _start(self, platform: Platform, task: DistributionTask) -> None:
        ctx = _Context(task)
        self.contexts[task.conversation_id] = ctx
        platform.log(
            self.id, "start-distribution", task.conversation_id,
            case_number=task.case_number,
            payload={
                "protocol": task.protocol,
                "supersedes": task.supersedes,
                "reason": task.reason,
                "excluded": sorted(task.exclusions),
                "consumed": "task",
            },
        )
        platform.log(
            self.id, "start-behavior", task.conversation_id,
            case_number=task.case_number,
            payload=platform.intern_payload(behavior="RequestLawsuit"),
        )
        try:
            pa = platform.resolve(task.protocol)
        except Exception as e:
            self._fail(platform, ctx, e)
            return
        try:
            platform.send(
                make_message("request-lawsuit", self.id, pa, task.conversation_id,
                             {"case_number": task.case_number})
            )
        except AgentUnavailable as e:
            self._fail(platform, ctx, e)

    def _on_lawsuit(self, platform: Platform, msg: Message) -> None:
        ctx = self.contexts.get(msg.conversation_id)
        if ctx is None:
            return
        platform.log(
            self.id, "start-behavior", msg.conversation_id,
            case_number=ctx.task.case_number,
            payload=platform.intern_payload(behavior="QueryIfImpediment",
                                            consumed=msg.content_type),
        )
        if not msg.payload.get("lawsuit"):
            self._fail(platform, ctx,
                       LookupError(f"{msg.sender.label} does not know case "
                                   f"{ctx.task.case_number}"))
            return
        ctx.lawsuit = _lawsuit_from_payload(msg.payload["lawsuit"])
        ctx.related = list(msg.payload.get("related_assignments", ()))
        ctx.prior = msg.payload.get("prior_assignment")
        competent = competent_bodies(ctx.lawsuit.procedural_class, platform.court.competence)
        if not competent:
            self._fail(platform, ctx,
                       NoCompetentBody(f"class {ctx.lawsuit.procedural_class!r} is unmapped"))
            return
        mas = sorted(platform.active_agents("impediment-query"), key=lambda a: a.label)
        ctx.queried = tuple(a.label for a in mas)
        ctx.stage = _AWAIT_REPLIES
        query = {
            "case_number": ctx.lawsuit.case_number.render(),
            "procedural_class": ctx.lawsuit.procedural_class,
            "parties": sorted(ctx.lawsuit.parties),
            "lawyers": sorted(ctx.lawsuit.lawyers),
        }
        for ma in mas:
            try:
                platform.send(
                    make_message("query-if-impediment", self.id, ma,
                                 msg.conversation_id, query)
                )
            except AgentUnavailable:
                pass  # delivery-failed is logged; treated like a missing reply
        if not ctx.queried:
            self._finalize(platform, ctx)

    def _on_reply(self, platform: Platform, msg: Message) -> None:
        ctx = self.contexts.get(msg.conversation_id)
        platform.log(
            self.id, "handle-message", msg.conversation_id,
            case_number=ctx.task.case_number if ctx else None,
            payload=platform.intern_payload(consumed=msg.content_type,
                                            sender=msg.sender.label),
        )
        info = dict(msg.payload)
        self.membership_cache[info["magistrate"]] = {
            "active": bool(info.get("active", True)),
            "memberships": tuple(info.get("memberships", ())),
        }
        if ctx is None or ctx.stage != _AWAIT_REPLIES:
            return
        ctx.replies[info["magistrate"]] = info
        if len(ctx.replies) >= len(ctx.queried):
            self._finalize(platform, ctx)

    # -- decision ------------------------------------------------------------

    def finalize_with_timeouts(self, platform: Platform, conversation_id: str) -> None:
        """Give up waiting for outstanding replies (step budget exhausted or
        quiescence) and decide with what arrived."""
        ctx = self.contexts.get(conversation_id)
        if ctx is not None and ctx.stage == _AWAIT_REPLIES:
            self._finalize(platform, ctx)

    def _finalize(self, platform: Platform, ctx: _Context) -> None:
        task = ctx.task
        lawsuit = ctx.lawsuit
        assert lawsuit is not None
        timeouts, unavailable = [], []
        for label in ctx.queried:
            if label in ctx.replies:
                continue
            if platform.state_of(label) is LifecycleState.ACTIVE:
                timeouts.append(label)
            else:
                unavailable.append(label)
        if timeouts:
            platform.log(
                self.id, "reply-timeout", task.conversation_id,
                case_number=task.case_number,
                payload={"magistrates": sorted(timeouts),
                         "treated_as": "no-impediment"},
            )

        competent = list(competent_bodies(lawsuit.procedural_class, platform.court.competence))
        wm = WorkingMemory()
        wm = assert_fact(wm, LawsuitFact(lawsuit))
        wm = assert_fact(wm, CompetenceFact(lawsuit.procedural_class, tuple(competent)))
        for entry in sorted(ctx.related, key=lambda e: e["case_number"]):
            wm = assert_fact(
                wm,
                RelatedAssignmentFact(
                    parse_case_number(entry["case_number"]), entry["body"], entry["magistrate"]
                ),
            )
        if ctx.prior:
            wm = assert_fact(
                wm,
                PriorAssignmentFact(
                    PriorAssignment(
                        parse_case_number(ctx.prior["case_number"]),
                        ctx.prior["phase"],
                        ctx.prior["body"],
                        ctx.prior["magistrate"],
                        ctx.prior["distribution_id"],
                    )
                ),
            )
        if lawsuit.embargo_of is not None:
            wm = assert_fact(
                wm, DivergenceFact(lawsuit.case_number, tuple(sorted(lawsuit.embargo_of.bodies)))
            )
        for magistrate in sorted(m for m, info in ctx.replies.items() if info.get("impeded")):
            wm = assert_fact(wm, ImpedimentFact(magistrate, lawsuit.case_number))
        ctx.wm = wm

        if task.collect_only:
            ctx.stage = _DONE
            return

        try:
            rule_name, directive, bindings = fire(wm, platform.rules)
        except NoRuleMatched as e:
            self._fail(platform, ctx, e)
            return
        platform.log(
            self.id, "fire-rule", task.conversation_id,
            case_number=task.case_number,
            payload={"rule": rule_name, "rule_number": directive.RULE_NUMBER,
                     "salience": next(r.salience for r in platform.rules
                                      if r.name == rule_name)},
        )

        exclusions = set(task.exclusions)
        impeded_ids = {m for m, info in ctx.replies.items() if info.get("impeded")}

        def members_of(body_id: str) -> list[str]:
            out = []
            for m, info in ctx.replies.items():
                if (
                    body_id in info.get("memberships", ())
                    and info.get("active")
                    and not info.get("impeded")
                    and m not in exclusions
                ):
                    out.append(m)
            for m in timeouts:
                cached = self.membership_cache.get(m)
                if (
                    cached
                    and body_id in cached["memberships"]
                    and cached["active"]
                    and m not in exclusions
                ):
                    out.append(m)
            return sorted(out)

        justification = Justification(
            competent_bodies=competent,
            eligible_bodies=[b for b in sorted(competent) if members_of(b)],
            impeded=[
                {"magistrate": m, "reason": "; ".join(ctx.replies[m].get("reasons", []))}
                for m in sorted(impeded_ids)
            ],
            timeouts=sorted(timeouts),
            unavailable=sorted(unavailable),
            excluded=sorted(exclusions),
            draw_seed=mix64(platform.seed_root, task.conversation_id),
            superseded_distribution_id=task.supersedes,
            redistribution_reason=task.reason,
        )
        if isinstance(directive, EmbargoAssign):
            justification.divergence_body = platform.court.competence.divergence_body(
                lawsuit.procedural_class
            )
        rng = DrawRng(justification.draw_seed)

        try:
            body, magistrate = self._execute(
                directive, bindings, justification, members_of, rng
            )
        except (DistributionExhausted, PreventionConflict, NoCompetentBody) as e:
            self._fail(platform, ctx, e)
            return

        outcome = DistributionOutcome(
            distribution_id=task.conversation_id,
            case_number=task.case_number,
            fired_rule=rule_name,
            rule_number=directive.RULE_NUMBER,
            body=body,
            magistrate=magistrate,
            justification=justification,
            timestamp=format_timestamp(platform.store.clock()),
        )
        platform.log(
            self.id, "record-outcome", task.conversation_id,
            case_number=task.case_number,
            payload=outcome.to_payload(),
        )
        platform.record_prior(
            PriorAssignment(lawsuit.case_number, lawsuit.phase, body, magistrate,
                            task.conversation_id),
            task.conversation_id,
        )
        ctx.outcome = outcome
        ctx.stage = _DONE
        try:
            platform.send(
                make_message("inform-distribution", self.id, platform.resolve(task.protocol),
                             task.conversation_id, outcome.to_payload())
            )
        except AgentUnavailable:
            platform.note_undelivered()

    def _execute(self, directive, bindings, justification: Justification,
                 members_of, rng: DrawRng) -> tuple[str, str]:
        if isinstance(directive, OrdinaryDraw):
            candidates = [(b, members_of(b)) for b in justification.eligible_bodies]
            body, magistrate, picks = draw(candidates, rng)
            justification.draw_picks = picks
            justification.eligible_members = {b: m for b, m in candidates}
            return body, magistrate

        if isinstance(directive, EmbargoAssign):
            fact = bindings[directive.divergence]
            case = fact.case_number.render()
            # Routing is configuration: the divergence body of the embargo class.
            body = justification.divergence_body
            if body is None:
                raise NoCompetentBody(f"no divergence body configured for {case}")
            members = members_of(body)
            if not members:
                raise DistributionExhausted(f"divergence body {body} has no eligible member")
            idx = rng.below(len(members))
            justification.draw_picks = [(len(members), idx)]
            justification.eligible_members = {body: members}
            return body, members[idx]

        if isinstance(directive, (AssignSameAs, PreventionAssign)):
            prevention = isinstance(directive, PreventionAssign)
            label = directive.source
            fact = bindings[label]
            if prevention:
                prior = fact.prior
                source = {
                    "case_number": prior.case_number.render(),
                    "phase": prior.phase,
                    "body": prior.body,
                    "magistrate": prior.magistrate,
                    "distribution_id": prior.distribution_id,
                }
                justification.prevention_source = source
            else:
                source = {
                    "case_number": fact.case_number.render(),
                    "body": fact.body,
                    "magistrate": fact.magistrate,
                }
                justification.dependency_source = source
            body = source["body"]
            members = members_of(body)
            justification.eligible_members = {body: members}
            if source["magistrate"] in members:
                return body, source["magistrate"]
            # Copied magistrate is impeded/suspended/excluded: draw among the
            # body's remaining eligible members and flag the override.
            remaining = [m for m in members if m != source["magistrate"]]
            if not remaining:
                if prevention:
                    raise PreventionConflict(
                        f"prevention body {body} has no eligible member left"
                    )
                raise DistributionExhausted(
                    f"dependency body {body} has no eligible member left"
                )
            idx = rng.below(len(remaining))
            justification.draw_picks = [(len(remaining), idx)]
            justification.eligible_members = {body: remaining}
            if prevention:
                justification.prevention_override = True
            else:
                justification.dependency_override = True
            return body, remaining[idx]

        raise AssertionError(f"unknown directive {directive!r}")


# --------------------------------------------------------------------------
# Platform assembly and synchronous driving


def build_platform(
    court: CourtConfig,
    rules: RuleSet | None = None,
    *,
    seed_root: int = 0,
    store: AuditStore | None = None,
    clock=system_clock,
    register_pma: bool = False,
    reply_step_budget: int = 100_000,
) -> Platform:
    """Assemble a platform for a court: one PA per protocol, one MA per
    magistrate (labelled by magistrate id), one DA, optional PMA; court
    impediments are registered (and logged) on their magistrate agents."""
    platform = Platform(
        court,
        rules if rules is not None else load_default_rules(),
        seed_root=seed_root,
        store=store,
        clock=clock,
        reply_step_budget=reply_step_budget,
    )
    for label in court.protocols:
        platform.register(ProtocolAgent(AgentId(AgentKind.PA, label)))
    for magistrate in court.magistrates:
        platform.register(
            MagistrateAgent(AgentId(AgentKind.MA, magistrate.id), magistrate)
        )
    platform.register(DistributionAgent(AgentId(AgentKind.DA, "DA01")))
    if register_pma:
        platform.register(PlatformManagerAgent(AgentId(AgentKind.PMA, "PMA01")))
    for impediment in court.impediments:
        platform.register_impediment(impediment, justification="court configuration")
    return platform


def _pump(platform: Platform, conversation_id: str) -> _Context:
    """Drive the deterministic scheduler until the conversation completes;
    applies the reply step budget and quiescence-based timeout handling."""
    da = platform.first_distribution_agent()
    assert isinstance(da, DistributionAgent)
    waited = 0
    while True:
        ctx = da.contexts.get(conversation_id)
        if ctx is not None:
            if ctx.stage == _DONE and platform.idle:
                return ctx
            if ctx.stage == _FAILED:
                platform.run_to_quiescence()
                raise ctx.error
            if ctx.stage == _AWAIT_REPLIES:
                waited += 1
                if waited > platform.reply_step_budget:
                    da.finalize_with_timeouts(platform, conversation_id)
                    continue
        progressed = platform.step()
        if progressed:
            continue
        ctx = da.contexts.get(conversation_id)
        if ctx is None:
            raise AgentUnavailable("distribution agent is not consuming tasks")
        if ctx.stage == _DONE:
            return ctx
        if ctx.stage == _FAILED:
            raise ctx.error
        if ctx.stage == _AWAIT_REPLIES:
            da.finalize_with_timeouts(platform, conversation_id)
            continue
        raise Timeout(
            f"distribution {conversation_id} stalled waiting for lawsuit metadata"
        )


def collect_facts(lawsuit: Lawsuit, platform: Platform) -> WorkingMemory:
    """Run only the fact-gathering half of the procedure (messaging included,
    every step logged) and return the assembled working memory."""
    platform.add_lawsuit(lawsuit)
    conversation_id = platform.enqueue_distribution(
        lawsuit.case_number.render(), lawsuit.protocol, collect_only=True,
        exclusions=platform.excluded_for(lawsuit.case_number.render()),
    )
    ctx = _pump(platform, conversation_id)
    assert ctx.wm is not None
    return ctx.wm


def distribute(
    lawsuit: Lawsuit,
    platform: Platform,
    rules: RuleSet | None = None,
    seed_root: int | None = None,
) -> DistributionOutcome:
    """Distribute one lawsuit end to end under the deterministic scheduler.

    ``rules``/``seed_root`` override the platform's configuration when given.
    """
    if rules is not None:
        platform.rules = rules
    if seed_root is not None:
        platform.seed_root = seed_root
    platform.add_lawsuit(lawsuit)
    case = lawsuit.case_number.render()
    conversation_id = platform.enqueue_distribution(
        case, lawsuit.protocol, exclusions=platform.excluded_for(case)
    )
    ctx = _pump(platform, conversation_id)
    assert ctx.outcome is not None
    return ctx.outcome


def redistribute(case_number: CaseNumber | str, reason: str, platform: Platform,
                 rules: RuleSet | None = None, seed_root: int | None = None) -> DistributionOutcome:
    """Re-run a completed distribution: the previous assignee is excluded for
    this case, and the new justification links the superseded instance."""
    if rules is not None:
        platform.rules = rules
    if seed_root is not None:
        platform.seed_root = seed_root
    case = case_number.render() if isinstance(case_number, CaseNumber) else case_number
    last = platform.latest_assignment(case)
    lawsuit = platform.lawsuits.get(case)
    if last is None or lawsuit is None:
        raise RedistributionOfUnknownCase(case)
    platform.add_exclusion(case, last["magistrate"])
    platform.add_lawsuit(lawsuit)
    conversation_id = platform.enqueue_distribution(
        case, lawsuit.protocol,
        exclusions=platform.excluded_for(case),
        supersedes=last["distribution_id"],
        reason=reason,
    )
    ctx = _pump(platform, conversation_id)
    assert ctx.outcome is not None
    return ctx.outcome


def run_corpus(platform: Platform, records: Iterable) -> list[DistributionOutcome]:
    """Distribute corpus records in order under the deterministic scheduler;
    planted priors are seeded just before their record runs."""
    outcomes = []
    for record in records:
        if record.prior is not None:
            platform.seed_prior(record.prior)
        outcomes.append(distribute(record.lawsuit, platform))
    return outcomes


class ConcurrentRunner:
    """Benchmark scheduler: one consumer thread per agent over its own
    mailbox; the audit appender is the single serialization point. Records
    with dependencies wait until their targets complete, and at most
    ``window`` distributions are in flight at once (an unbounded backlog of
    open conversations would swamp memory on large corpora)."""

    def __init__(self, platform: Platform, wall_timeout: float = 600.0,
                 window: int = 256):
        self.platform = platform
        self.wall_timeout = wall_timeout
        self.window = max(1, window)
        self._stop = False

    def _worker(self, agent: Agent) -> None:
        platform = self.platform
        cond = agent.cond
        while True:
            with cond:
                while not agent.mailbox and not self._stop:
                    cond.wait(0.05)
                if agent.mailbox:
                    item = agent.mailbox.popleft()
                elif self._stop:
                    return
                else:
                    continue
            agent.handle(platform, item)

    def run(self, records: list) -> None:
        platform = self.platform
        deadline = time.monotonic() + self.wall_timeout
        platform.concurrent = True
        for agent in platform.agents.values():
            if agent.cond is None:
                agent.cond = threading.Condition()
        threads = [
            threading.Thread(target=self._worker, args=(agent,), daemon=True)
            for agent in platform.agents.values()
        ]
        for t in threads:
            t.start()
        try:
            target = platform.completed + platform.failed + platform.undelivered + len(records)
            for record in records:
                if record.prior is not None:
                    platform.seed_prior(record.prior)
                related = [c.render() for c in record.lawsuit.related_cases]
                if related:
                    self._wait_for_cases(related, deadline)
                platform.add_lawsuit(record.lawsuit)
                case = record.lawsuit.case_number.render()
                platform.enqueue_distribution(
                    case, record.lawsuit.protocol,
                    exclusions=platform.excluded_for(case),
                )
            with platform._delivery_cond:
                while platform.completed + platform.failed + platform.undelivered < target:
                    if time.monotonic() > deadline:
                        raise Timeout("concurrent run exceeded its wall timeout")
                    platform._delivery_cond.wait(0.1)
        finally:
            self._stop = True
            for agent in platform.agents.values():
                with agent.cond:
                    agent.cond.notify_all()
            for t in threads:
                t.join()
            platform.concurrent = False

    def _wait_for_cases(self, cases: list[str], deadline: float) -> None:
        platform = self.platform
        with platform._delivery_cond:
            while any(platform.latest_assignment(c) is None for c in cases):
                if time.monotonic() > deadline:
                    raise Timeout(f"dependency targets never completed: {cases}")
                platform._delivery_cond.wait(0.1)
