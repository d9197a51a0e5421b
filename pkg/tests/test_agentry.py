from collections import Counter

import pytest

from casealot.agentry import (
    AgentId,
    AgentKind,
    AgentUnavailable,
    DuplicateAgent,
    LifecycleState,
    Message,
    Performative,
    Platform,
    ProtocolAgent,
    Registry,
    UnknownAgent,
    make_message,
)
from casealot.auditlog import AuditStore, TickClock
from casealot.corpus import default_court
from casealot.distributor import build_platform, distribute
from casealot.domain import Lawsuit, parse_case_number


def fresh_platform(**kw):
    court = kw.pop("court", default_court())
    return build_platform(court, store=AuditStore(clock=TickClock()), **kw)


def some_lawsuit(case="3128-70.2012.5.18.102", protocol="PA18", **kw):
    defaults = dict(procedural_class="AIRR", parties=frozenset({"P001"}))
    defaults.update(kw)
    return Lawsuit(case_number=parse_case_number(case), protocol=protocol, **defaults)


class TestRegistry:
    def test_register_is_functional(self):
        reg = Registry()
        pa = AgentId(AgentKind.PA, "PA01")
        reg2 = reg.register(pa, ("lawsuit-source",))
        assert reg.state(pa) is None
        assert reg2.state(pa) is LifecycleState.ACTIVE
        assert reg2.lookup_service("lawsuit-source") == (pa,)

    def test_duplicate_registration(self):
        pa = AgentId(AgentKind.PA, "PA01")
        reg = Registry().register(pa)
        with pytest.raises(DuplicateAgent):
            reg.register(pa)

    def test_terminated_agent_can_reregister(self):
        pa = AgentId(AgentKind.PA, "PA01")
        reg = Registry().register(pa).set_lifecycle(pa, LifecycleState.TERMINATED)
        assert reg.register(pa).state(pa) is LifecycleState.ACTIVE

    def test_set_lifecycle_unknown_agent(self):
        with pytest.raises(UnknownAgent):
            Registry().set_lifecycle(AgentId(AgentKind.MA, "M99"), LifecycleState.SUSPENDED)


class TestCensus:
    def test_default_court_registers_53_application_agents(self):
        platform = fresh_platform()
        assert len(platform.registry.white_pages) == 53
        kinds = Counter(a.kind for a in platform.registry.agents())
        assert kinds[AgentKind.PA] == 25
        assert kinds[AgentKind.MA] == 27
        assert kinds[AgentKind.DA] == 1

    def test_census_presents_55_with_platform_registries(self):
        rows = fresh_platform().census()
        assert len(rows) == 55
        assert {r["id"] for r in rows if r["kind"] == "PLATFORM"} == {"AMS", "DF"}

    def test_duplicate_platform_registration(self):
        platform = fresh_platform()
        with pytest.raises(DuplicateAgent):
            platform.register(ProtocolAgent(AgentId(AgentKind.PA, "PA01")))

    def test_impediment_query_service_has_27_providers(self):
        platform = fresh_platform()
        assert len(platform.registry.lookup_service("impediment-query")) == 27


class TestMessage:
    def test_content_type_performative_compatibility(self):
        da, pa = AgentId(AgentKind.DA, "DA01"), AgentId(AgentKind.PA, "PA01")
        msg = make_message("request-lawsuit", da, pa, "D000001", {})
        assert msg.performative is Performative.REQUEST
        with pytest.raises(ValueError):
            Message(Performative.INFORM, "request-lawsuit", da, pa, "D000001", {})
        with pytest.raises(ValueError):
            make_message("no-such-type", da, pa, "D000001", {})


class TestSend:
    def test_send_appends_to_mailbox_and_logs(self):
        platform = fresh_platform()
        da = platform.first_distribution_agent()
        pa = platform.agent("PA18")
        before = len(pa.mailbox)
        platform.send(
            make_message("request-lawsuit", da.id, pa.id, "D000001",
                         {"case_number": "3128-70.2012.5.18.102"})
        )
        assert len(pa.mailbox) == before + 1
        sends = [r for r in platform.store.records
                 if r.action == "send-message" and r.distribution_id == "D000001"]
        assert len(sends) == 1
        # Consumption writes exactly one matching record.
        assert platform.step() is True
        consumed = [r for r in platform.store.records
                    if r.distribution_id == "D000001"
                    and (r.payload or {}).get("consumed") == "request-lawsuit"]
        assert len(consumed) == 1

    def test_send_to_terminated_agent_fails_and_logs(self):
        platform = fresh_platform()
        da = platform.first_distribution_agent()
        platform.set_lifecycle("PA18", "terminated")
        with pytest.raises(AgentUnavailable):
            platform.send(
                make_message("request-lawsuit", da.id, platform.resolve("PA18"),
                             "D000001", {})
            )
        failures = [r for r in platform.store.records if r.action == "delivery-failed"]
        assert len(failures) == 1
        assert failures[0].payload["receiver"] == "PA18"

    def test_broadcast_to_five_active_mas(self):
        platform = fresh_platform(court=default_court(n_magistrates=5, n_bodies=1,
                                                      n_protocols=2))
        da = platform.first_distribution_agent()
        mas = platform.active_agents("impediment-query")
        assert len(mas) == 5
        for ma in mas:
            platform.send(
                make_message("query-if-impediment", da.id, ma, "D000007",
                             {"case_number": "1-00.2012.5.01.001",
                              "parties": [], "lawyers": []})
            )
        assert all(len(platform.agent(ma).mailbox) == 1 for ma in mas)
        sends = [r for r in platform.store.records
                 if r.action == "send-message" and r.distribution_id == "D000007"]
        assert len(sends) == 5


class TestStep:
    def test_all_mailboxes_empty(self):
        assert fresh_platform().step() is False

    def test_single_pending_message_runs_handler(self):
        platform = fresh_platform()
        da = platform.first_distribution_agent()
        platform.add_lawsuit(some_lawsuit())
        platform.send(
            make_message("request-lawsuit", da.id, platform.resolve("PA18"),
                         "D000001", {"case_number": "3128-70.2012.5.18.102"})
        )
        before = len(platform.store.records)
        assert platform.step() is True
        assert len(platform.store.records) > before

    def test_round_robin_serves_agents_in_registration_order(self):
        platform = fresh_platform(court=default_court(n_magistrates=3, n_bodies=1,
                                                      n_protocols=2))
        da = platform.first_distribution_agent()
        for label in ("M02", "M01", "M03"):
            platform.send(
                make_message("query-if-impediment", da.id, platform.resolve(label),
                             "D000001",
                             {"case_number": "1-00.2012.5.01.001",
                              "parties": [], "lawyers": []})
            )
        served = []
        while platform.step():
            behaviors = [r for r in platform.store.records
                         if r.action == "start-behavior"
                         and (r.payload or {}).get("consumed") == "query-if-impediment"]
            served = [r.agent for r in behaviors]
        assert served == ["M01", "M02", "M03"]

    def test_fig8_message_ordering(self):
        platform = fresh_platform()
        outcome = distribute(some_lawsuit(), platform)
        trace = platform.store.trace(outcome.distribution_id)
        order = [
            (r.payload or {}).get("content_type")
            for r in trace.records
            if r.action == "send-message"
        ]
        assert order[0] == "request-lawsuit"
        assert order[1] == "inform-lawsuit"
        assert set(order[2:29]) == {"query-if-impediment"}
        assert order[-1] == "inform-distribution"

    def test_every_send_has_exactly_one_consumption(self):
        platform = fresh_platform()
        outcome = distribute(some_lawsuit(), platform)
        trace = platform.store.trace(outcome.distribution_id)
        sent = Counter(
            r.payload["content_type"] for r in trace.records if r.action == "send-message"
        )
        consumed = Counter(
            r.payload["consumed"]
            for r in trace.records
            if r.payload and r.payload.get("consumed") in sent
        )
        assert sent == consumed


class TestLifecycle:
    def test_activate_already_active_is_logged_noop(self):
        platform = fresh_platform()
        before = platform.state_of("M01")
        platform.set_lifecycle("M01", "active")
        assert platform.state_of("M01") is before is LifecycleState.ACTIVE
        changes = [r for r in platform.store.records
                   if r.action == "lifecycle-change"
                   and (r.payload or {}).get("agent") == "M01"
                   and (r.payload or {}).get("event") == "set-lifecycle"]
        assert len(changes) == 1

    def test_suspended_ma_excluded_from_queries_and_eligibility(self):
        platform = fresh_platform()
        first = distribute(some_lawsuit(), platform)
        assert "M05" in first.justification.eligible_members.get("T2", [])

        platform2 = fresh_platform()
        platform2.set_lifecycle("M05", "suspended")
        second = distribute(some_lawsuit(), platform2)
        queried = {
            r.payload["receiver"]
            for r in platform2.store.trace(second.distribution_id).records
            if r.action == "send-message"
            and r.payload.get("content_type") == "query-if-impediment"
        }
        assert "M05" not in queried
        assert len(queried) == 26
        for members in second.justification.eligible_members.values():
            assert "M05" not in members

    def test_suspension_queues_mail_without_consuming(self):
        platform = fresh_platform()
        da = platform.first_distribution_agent()
        pa_id = platform.resolve("PA18")
        platform.add_lawsuit(some_lawsuit())
        platform.send(make_message("request-lawsuit", da.id, pa_id, "D000001",
                                   {"case_number": "3128-70.2012.5.18.102"}))
        platform.set_lifecycle("PA18", "suspended")
        assert platform.step() is False
        assert len(platform.agent("PA18").mailbox) == 1
        platform.set_lifecycle("PA18", "active")
        assert platform.step() is True
        assert len(platform.agent("PA18").mailbox) == 0

    def test_deactivated_da_keeps_tasks_queued_until_reactivation(self):
        platform = fresh_platform()
        platform.set_lifecycle("DA01", "suspended")
        platform.add_lawsuit(some_lawsuit())
        platform.enqueue_distribution("3128-70.2012.5.18.102", "PA18")
        da = platform.first_distribution_agent()
        assert len(da.mailbox) == 1
        platform.run_to_quiescence()
        assert len(da.mailbox) == 1  # still queued
        platform.set_lifecycle("DA01", "active")
        platform.run_to_quiescence()
        assert len(da.mailbox) == 0
        assert platform.store.rule_stats()[4][0] == 1
