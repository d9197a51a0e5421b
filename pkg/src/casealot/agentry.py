"""Agent runtime: white/yellow-pages registries, mailboxes, lifecycle
control, performative-typed messaging, and the protocol/magistrate/manager
agent behaviors. Every registration, send, consumption, and lifecycle change
is mirrored into the audit log.

The platform coordinator owns all shared state; agents interact only through
messages. Two schedulers exist: the deterministic single-context round-robin
(the semantic reference, used by tests and replay) and a concurrent
mailbox-per-agent runner for benchmarking (see ``concurrent_runner``).
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, ClassVar, Iterable, Mapping

from casealot.auditlog import AuditStore, system_clock
from casealot.domain import (
    CourtConfig,
    Impediment,
    Lawsuit,
    PriorAssignment,
    impediment_applies,
    parse_case_number,
)
from casealot.rulekit import RuleSet

__all__ = [
    "DuplicateAgent",
    "AgentUnavailable",
    "UnknownAgent",
    "AgentKind",
    "AgentId",
    "Performative",
    "Message",
    "make_message",
    "LifecycleState",
    "Registry",
    "DistributionTask",
    "Agent",
    "ProtocolAgent",
    "MagistrateAgent",
    "PlatformManagerAgent",
    "Platform",
]


class DuplicateAgent(ValueError):
    pass


class AgentUnavailable(RuntimeError):
    """Receiver is suspended or terminated; the message was not delivered."""


class UnknownAgent(LookupError):
    pass


class AgentKind(str, Enum):
    PA = "PA"
    MA = "MA"
    DA = "DA"
    PMA = "PMA"


@dataclass(frozen=True, slots=True)
class AgentId:
    kind: AgentKind
    label: str

    def __str__(self) -> str:
        return self.label


class Performative(str, Enum):
    REQUEST = "REQUEST"
    INFORM = "INFORM"
    QUERY_IF = "QUERY_IF"


CONTENT_PERFORMATIVES: dict[str, Performative] = {
    "request-lawsuit": Performative.REQUEST,
    "inform-lawsuit": Performative.INFORM,
    "query-if-impediment": Performative.QUERY_IF,
    "inform-impediment-or-competence": Performative.INFORM,
    "inform-distribution": Performative.INFORM,
}


@dataclass(frozen=True)
class Message:
    performative: Performative
    content_type: str
    sender: AgentId
    receiver: AgentId
    conversation_id: str
    payload: Mapping

    def __post_init__(self) -> None:
        expected = CONTENT_PERFORMATIVES.get(self.content_type)
        if expected is None:
            raise ValueError(f"unknown content type {self.content_type!r}")
        if expected is not self.performative:
            raise ValueError(
                f"content type {self.content_type!r} requires {expected.value}, "
                f"got {self.performative.value}"
            )


def make_message(content_type: str, sender: AgentId, receiver: AgentId,
                 conversation_id: str, payload: Mapping) -> Message:
    """Build a message with the performative implied by its content type."""
    performative = CONTENT_PERFORMATIVES.get(content_type)
    if performative is None:
        raise ValueError(f"unknown content type {content_type!r}")
    return Message(performative, content_type, sender, receiver, conversation_id, payload)


class LifecycleState(str, Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class Registry:
    """White pages (lifecycle states) and yellow pages (service directory).

    A value object: mutating operations return a new Registry.
    """

    white_pages: Mapping[AgentId, LifecycleState] = field(default_factory=dict)
    yellow_pages: Mapping[str, tuple[AgentId, ...]] = field(default_factory=dict)

    def register(self, agent_id: AgentId, services: Iterable[str] = ()) -> "Registry":
        state = self.white_pages.get(agent_id)
        if state is not None and state is not LifecycleState.TERMINATED:
            raise DuplicateAgent(f"{agent_id.label} is already registered")
        white = dict(self.white_pages)
        white[agent_id] = LifecycleState.ACTIVE
        yellow = dict(self.yellow_pages)
        for service in services:
            entries = yellow.get(service, ())
            if agent_id not in entries:
                yellow[service] = entries + (agent_id,)
        return Registry(white, yellow)

    def set_lifecycle(self, agent_id: AgentId, state: LifecycleState) -> "Registry":
        if agent_id not in self.white_pages:
            raise UnknownAgent(agent_id.label)
        white = dict(self.white_pages)
        white[agent_id] = state
        return Registry(white, self.yellow_pages)

    def state(self, agent_id: AgentId) -> LifecycleState | None:
        return self.white_pages.get(agent_id)

    def lookup_service(self, service: str) -> tuple[AgentId, ...]:
        """Registered providers of a service, registration order, any state."""
        return self.yellow_pages.get(service, ())

    def agents(self) -> tuple[AgentId, ...]:
        return tuple(self.white_pages)


@dataclass(frozen=True)
class DistributionTask:
    """Platform-level work item consumed by a distribution agent."""

    conversation_id: str
    case_number: str
    protocol: str
    exclusions: frozenset[str] = frozenset()
    supersedes: str | None = None
    reason: str | None = None
    collect_only: bool = False


class Agent:
    """Base agent: identity plus a FIFO mailbox of messages and tasks."""

    services: ClassVar[tuple[str, ...]] = ()

    def __init__(self, agent_id: AgentId):
        self.id = agent_id
        self.mailbox: deque = deque()
        self.cond: threading.Condition | None = None  # attached by the concurrent runner

    def handle(self, platform: "Platform", item) -> None:
        raise NotImplementedError


def _lawsuit_payload(lawsuit: Lawsuit) -> dict:
    embargo = None
    if lawsuit.embargo_of is not None:
        embargo = {
            "bodies": sorted(lawsuit.embargo_of.bodies),
            "source_case": (
                lawsuit.embargo_of.source_case.render()
                if lawsuit.embargo_of.source_case
                else None
            ),
        }
    return {
        "case_number": lawsuit.case_number.render(),
        "procedural_class": lawsuit.procedural_class,
        "parties": sorted(lawsuit.parties),
        "lawyers": sorted(lawsuit.lawyers),
        "related_cases": sorted(c.render() for c in lawsuit.related_cases),
        "phase": lawsuit.phase,
        "embargo": embargo,
        "protocol": lawsuit.protocol,
    }


def _prior_payload(prior: PriorAssignment) -> dict:
    return {
        "case_number": prior.case_number.render(),
        "phase": prior.phase,
        "body": prior.body,
        "magistrate": prior.magistrate,
        "distribution_id": prior.distribution_id,
    }


class ProtocolAgent(Agent):
    """Holds pending lawsuits and answers request-lawsuit with full metadata,
    including the assignments of related cases and the previous phase."""

    services = ("lawsuit-source",)

    def __init__(self, agent_id: AgentId):
        super().__init__(agent_id)
        self.pending: dict[str, Lawsuit] = {}

    def handle(self, platform: "Platform", item) -> None:
        msg: Message = item
        if msg.content_type == "request-lawsuit":
            platform.log(
                self.id, "start-behavior", msg.conversation_id,
                case_number=msg.payload.get("case_number"),
                payload=platform.intern_payload(behavior="InformLawsuit",
                                                consumed=msg.content_type),
            )
            case = msg.payload.get("case_number", "")
            lawsuit = self.pending.get(case)
            if lawsuit is None:
                reply: dict = {"lawsuit": None, "error": "unknown-case"}
            else:
                related = []
                for rc in sorted(c.render() for c in lawsuit.related_cases):
                    assignment = platform.latest_assignment(rc)
                    if assignment is not None:
                        related.append(
                            {
                                "case_number": rc,
                                "body": assignment["body"],
                                "magistrate": assignment["magistrate"],
                                "distribution_id": assignment["distribution_id"],
                            }
                        )
                prior = None
                if lawsuit.phase > 1:
                    stored = platform.prior_of(case, lawsuit.phase - 1)
                    if stored is not None:
                        prior = _prior_payload(stored)
                reply = {
                    "lawsuit": _lawsuit_payload(lawsuit),
                    "related_assignments": related,
                    "prior_assignment": prior,
                }
            platform.send(
                make_message("inform-lawsuit", self.id, msg.sender, msg.conversation_id, reply)
            )
        elif msg.content_type == "inform-distribution":
            platform.log(
                self.id, "handle-message", msg.conversation_id,
                case_number=msg.payload.get("case_number"),
                payload=platform.intern_payload(consumed=msg.content_type),
            )
            case = msg.payload.get("case_number", "")
            lawsuit = self.pending.pop(case, None)
            platform.update_docket(case, dict(msg.payload), lawsuit)


class MagistrateAgent(Agent):
    """Answers query-if-impediment with the impediment verdict plus the
    magistrate's memberships (the competence half of the reply)."""

    services = ("impediment-query",)

    def __init__(self, agent_id: AgentId, magistrate, impediments: Iterable[Impediment] = ()):
        super().__init__(agent_id)
        self.magistrate = magistrate
        self.impediments: list[Impediment] = list(impediments)

    def handle(self, platform: "Platform", item) -> None:
        msg: Message = item
        if msg.content_type != "query-if-impediment":
            return
        platform.log(
            self.id, "start-behavior", msg.conversation_id,
            case_number=msg.payload.get("case_number"),
            payload=platform.intern_payload(behavior="InformImpedimentOrCompetence",
                                            consumed=msg.content_type),
        )
        lawsuit = Lawsuit(
            case_number=parse_case_number(msg.payload["case_number"]),
            procedural_class=msg.payload.get("procedural_class") or "QUERY",
            parties=frozenset(msg.payload.get("parties", ())),
            lawyers=frozenset(msg.payload.get("lawyers", ())),
            protocol=msg.payload.get("protocol", ""),
        )
        impeded = impediment_applies(self.magistrate.id, lawsuit, self.impediments)
        reasons = []
        if impeded:
            for imp in self.impediments:
                if impediment_applies(self.magistrate.id, lawsuit, [imp]):
                    reasons.append(imp.reason or f"{imp.kind.value} impediment")
        reply = {
            "magistrate": self.magistrate.id,
            "active": self.magistrate.active,
            "memberships": sorted(self.magistrate.memberships),
            "impeded": impeded,
            "reasons": sorted(reasons),
        }
        platform.send(
            make_message("inform-impediment-or-competence", self.id, msg.sender,
                         msg.conversation_id, reply)
        )


class PlatformManagerAgent(Agent):
    """Management surface; acts through platform calls, consumes nothing."""

    services = ("platform-management",)

    def handle(self, platform: "Platform", item) -> None:  # pragma: no cover
        pass


class Platform:
    """Coordinator owning registry, agents, shared court state, and the
    deterministic scheduler. All mutations funnel through here and are
    audit-logged."""

    def __init__(
        self,
        court: CourtConfig,
        rules: RuleSet,
        *,
        seed_root: int = 0,
        store: AuditStore | None = None,
        clock: Callable = system_clock,
        reply_step_budget: int = 100_000,
    ):
        self.court = court
        self.rules = rules
        self.seed_root = seed_root
        self.store = store if store is not None else AuditStore(clock=clock)
        self.registry = Registry()
        self.agents: dict[AgentId, Agent] = {}
        self.reply_step_budget = reply_step_budget
        self._order: list[AgentId] = []
        self._index: dict[AgentId, int] = {}
        self._by_label: dict[str, AgentId] = {}
        self._ready: set[int] = set()
        self._cursor = -1
        self._dist_seq = 0
        self._payloads: dict = {}
        self._state_lock = threading.RLock()
        self.concurrent = False
        self._delivery_cond = threading.Condition()
        self.docket: dict[str, list[dict]] = {}
        self.lawsuits: dict[str, Lawsuit] = {}
        self.priors: dict[tuple[str, int], PriorAssignment] = {}
        self.exclusions: dict[str, set[str]] = {}
        self.completed = 0
        self.failed = 0
        self.undelivered = 0

    def note_failure(self) -> None:
        with self._state_lock:
            self.failed += 1
        if self.concurrent:
            with self._delivery_cond:
                self._delivery_cond.notify_all()

    def note_undelivered(self) -> None:
        """An outcome exists but its protocol agent could not be informed."""
        with self._state_lock:
            self.undelivered += 1
        if self.concurrent:
            with self._delivery_cond:
                self._delivery_cond.notify_all()

    # -- logging ------------------------------------------------------------

    def log(self, agent: AgentId | str, action: str, distribution_id: str | None = None,
            *, case_number: str | None = None, payload: dict | None = None) -> int:
        label = agent.label if isinstance(agent, AgentId) else agent
        return self.store.append(
            label, action, distribution_id=distribution_id,
            case_number=case_number, payload=payload,
        )

    def intern_payload(self, **fields) -> dict:
        """Shared payload dict for the recurring scalar-only record shapes
        (message sends/consumptions); a 10k-lawsuit run logs over a million
        records, most carrying one of a few dozen identical payloads."""
        key = tuple(sorted(fields.items()))
        payload = self._payloads.get(key)
        if payload is None:
            payload = dict(fields)
            self._payloads[key] = payload
        return payload

    # -- registration and lifecycle ------------------------------------------

    def register(self, agent: Agent, services: Iterable[str] | None = None) -> AgentId:
        """Add an agent to the white pages (active) and yellow pages."""
        services = tuple(services) if services is not None else tuple(agent.services)
        self.registry = self.registry.register(agent.id, services)
        if agent.id not in self._index:
            self._index[agent.id] = len(self._order)
            self._order.append(agent.id)
        self.agents[agent.id] = agent
        self._by_label[agent.id.label] = agent.id
        self.log(
            "PLATFORM", "lifecycle-change",
            payload={"agent": agent.id.label, "kind": agent.id.kind.value,
                     "state": "active", "event": "register",
                     "services": sorted(services)},
        )
        if agent.mailbox:
            self._mark_ready(agent.id)
        return agent.id

    def resolve(self, label_or_id: AgentId | str) -> AgentId:
        if isinstance(label_or_id, AgentId):
            if label_or_id not in self.agents:
                raise UnknownAgent(label_or_id.label)
            return label_or_id
        agent_id = self._by_label.get(label_or_id)
        if agent_id is None:
            raise UnknownAgent(label_or_id)
        return agent_id

    def agent(self, label_or_id: AgentId | str) -> Agent:
        return self.agents[self.resolve(label_or_id)]

    def state_of(self, label_or_id: AgentId | str) -> LifecycleState:
        return self.registry.state(self.resolve(label_or_id))

    def set_lifecycle(self, label_or_id: AgentId | str, state: LifecycleState | str,
                      actor: str = "PLATFORM") -> None:
        """Activate/suspend/terminate; suspension keeps queued mail unconsumed."""
        agent_id = self.resolve(label_or_id)
        state = LifecycleState(state)
        self.registry = self.registry.set_lifecycle(agent_id, state)
        idx = self._index[agent_id]
        if state is LifecycleState.ACTIVE:
            if self.agents[agent_id].mailbox:
                self._ready.add(idx)
        else:
            self._ready.discard(idx)
        self.log(
            actor, "lifecycle-change",
            payload={"agent": agent_id.label, "kind": agent_id.kind.value,
                     "state": state.value, "event": "set-lifecycle"},
        )

    def active_agents(self, service: str) -> tuple[AgentId, ...]:
        return tuple(
            a for a in self.registry.lookup_service(service)
            if self.registry.state(a) is LifecycleState.ACTIVE
        )

    # -- court state -----------------------------------------------------------

    def add_lawsuit(self, lawsuit: Lawsuit) -> None:
        """Hand a lawsuit to its protocol agent's pending queue."""
        pa = self.agent(lawsuit.protocol)
        if not isinstance(pa, ProtocolAgent):
            raise UnknownAgent(f"{lawsuit.protocol} is not a protocol agent")
        case = lawsuit.case_number.render()
        pa.pending[case] = lawsuit
        with self._state_lock:
            self.lawsuits[case] = lawsuit

    def seed_prior(self, prior: PriorAssignment, justification: str = "seeded history") -> None:
        with self._state_lock:
            self.priors[(prior.case_number.render(), prior.phase)] = prior
        self.log(
            "PLATFORM", "record-prior-assignment",
            case_number=prior.case_number.render(),
            payload={**_prior_payload(prior), "justification": justification},
        )

    def record_prior(self, prior: PriorAssignment, distribution_id: str) -> None:
        with self._state_lock:
            self.priors[(prior.case_number.render(), prior.phase)] = prior
        self.log(
            "PLATFORM", "record-prior-assignment", distribution_id,
            case_number=prior.case_number.render(),
            payload={**_prior_payload(prior), "justification": "distribution outcome"},
        )

    def prior_of(self, case_number: str, phase: int) -> PriorAssignment | None:
        with self._state_lock:
            return self.priors.get((case_number, phase))

    def latest_assignment(self, case_number: str) -> dict | None:
        with self._state_lock:
            history = self.docket.get(case_number)
            return history[-1] if history else None

    def update_docket(self, case_number: str, outcome: dict, lawsuit: Lawsuit | None) -> None:
        with self._state_lock:
            self.docket.setdefault(case_number, []).append(outcome)
            if lawsuit is not None:
                self.lawsuits[case_number] = lawsuit
            self.completed += 1
            if self.concurrent:
                with self._delivery_cond:
                    self._delivery_cond.notify_all()

    def register_impediment(self, impediment: Impediment, actor: str = "PLATFORM",
                            justification: str = "registered impediment") -> None:
        """Manual impediment registration: appended to the magistrate's agent
        state and audit-logged with its justification."""
        target_ma: MagistrateAgent | None = None
        for agent in self.agents.values():
            if isinstance(agent, MagistrateAgent) and agent.magistrate.id == impediment.magistrate:
                target_ma = agent
                break
        if target_ma is None:
            raise UnknownAgent(f"no magistrate agent for {impediment.magistrate}")
        target_ma.impediments.append(impediment)
        target = (
            impediment.target.render()
            if hasattr(impediment.target, "render")
            else impediment.target
        )
        self.log(
            actor, "register-impediment",
            payload={"magistrate": impediment.magistrate, "kind": impediment.kind.value,
                     "target": target, "reason": impediment.reason,
                     "justification": justification},
        )

    def excluded_for(self, case_number: str) -> frozenset[str]:
        with self._state_lock:
            return frozenset(self.exclusions.get(case_number, ()))

    def add_exclusion(self, case_number: str, magistrate: str) -> None:
        with self._state_lock:
            self.exclusions.setdefault(case_number, set()).add(magistrate)

    # -- messaging -------------------------------------------------------------

    def send(self, msg: Message) -> None:
        """Deliver to the receiver's mailbox; one send-message record, or a
        delivery-failed record plus AgentUnavailable if the receiver cannot
        receive."""
        receiver_state = self.registry.state(msg.receiver)
        if receiver_state is not LifecycleState.ACTIVE:
            self.log(
                msg.sender, "delivery-failed", msg.conversation_id,
                payload=self.intern_payload(
                    content_type=msg.content_type,
                    receiver=msg.receiver.label,
                    receiver_state=receiver_state.value if receiver_state else "unregistered",
                ),
            )
            raise AgentUnavailable(
                f"{msg.receiver.label} is "
                f"{receiver_state.value if receiver_state else 'unregistered'}"
            )
        self.log(
            msg.sender, "send-message", msg.conversation_id,
            payload=self.intern_payload(
                performative=msg.performative.value,
                content_type=msg.content_type,
                receiver=msg.receiver.label,
            ),
        )
        self._deliver(msg.receiver, msg)

    def _deliver(self, agent_id: AgentId, item) -> None:
        agent = self.agents[agent_id]
        if self.concurrent:
            cond = agent.cond
            if cond is None:  # pragma: no cover - runner always attaches one
                agent.mailbox.append(item)
                return
            with cond:
                agent.mailbox.append(item)
                cond.notify()
        else:
            agent.mailbox.append(item)
            if self.registry.state(agent_id) is LifecycleState.ACTIVE:
                self._mark_ready(agent_id)

    def _mark_ready(self, agent_id: AgentId) -> None:
        self._ready.add(self._index[agent_id])

    # -- distribution intake -----------------------------------------------------

    def next_distribution_id(self) -> str:
        with self._state_lock:
            self._dist_seq += 1
            return f"D{self._dist_seq:06d}"

    def first_distribution_agent(self) -> Agent:
        for agent_id in self._order:
            if agent_id.kind is AgentKind.DA:
                return self.agents[agent_id]
        raise UnknownAgent("no distribution agent registered")

    def enqueue_distribution(self, case_number: str, protocol: str, *,
                             exclusions: frozenset[str] = frozenset(),
                             supersedes: str | None = None,
                             reason: str | None = None,
                             collect_only: bool = False) -> str:
        """Queue a distribution task on the distribution agent; tasks queue
        even while the DA is suspended and run after reactivation."""
        if self.store.failed:
            raise self._storage_halt()
        task = DistributionTask(
            conversation_id=self.next_distribution_id(),
            case_number=case_number,
            protocol=protocol,
            exclusions=exclusions,
            supersedes=supersedes,
            reason=reason,
            collect_only=collect_only,
        )
        da = self.first_distribution_agent()
        self._deliver(da.id, task)
        return task.conversation_id

    def _storage_halt(self):
        from casealot.auditlog import StorageFailure

        return StorageFailure("audit store failed; distribution intake halted")

    # -- deterministic scheduler ---------------------------------------------------

    @property
    def idle(self) -> bool:
        """True when no active agent has queued work."""
        return not self._ready

    def step(self) -> bool:
        """Deliver exactly one queued item to its agent's handler, choosing
        agents round-robin in registration order; False when nothing to do."""
        if not self._ready:
            return False
        n = len(self._order)
        for offset in range(1, n + 1):
            idx = (self._cursor + offset) % n
            if idx not in self._ready:
                continue
            agent_id = self._order[idx]
            agent = self.agents[agent_id]
            item = agent.mailbox.popleft()
            if not agent.mailbox:
                self._ready.discard(idx)
            self._cursor = idx
            agent.handle(self, item)
            return True
        return False

    def run_to_quiescence(self, max_steps: int | None = None) -> int:
        steps = 0
        while self.step():
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        return steps

    # -- views ----------------------------------------------------------------

    def census(self) -> list[dict]:
        """All agents plus the two platform registries (white/yellow pages)."""
        rows = []
        for agent_id in self._order:
            state = self.registry.state(agent_id)
            rows.append(
                {
                    "id": agent_id.label,
                    "kind": agent_id.kind.value,
                    "state": state.value if state else "unregistered",
                    "services": sorted(
                        s for s, members in self.registry.yellow_pages.items()
                        if agent_id in members
                    ),
                }
            )
        rows.append({"id": "AMS", "kind": "PLATFORM", "state": "active",
                     "services": ["white-pages"]})
        rows.append({"id": "DF", "kind": "PLATFORM", "state": "active",
                     "services": ["yellow-pages"]})
        return rows
