"""Acceptance suite: each test enforces one shipping criterion at its stated
tolerance and prints one PASS/FAIL line (run with -s to see them live)."""

import itertools
import json
import math
import re
import time
from collections import Counter
from types import SimpleNamespace

import pytest

from casealot.auditlog import AuditStore, TickClock
from casealot.corpus import CorpusConfig, default_court, generate
from casealot.distributor import DrawRng, build_platform, draw, run_corpus
from casealot.domain import PriorAssignment, impediment_applies, parse_case_number
from casealot.gateway.cli import main
from casealot.rulekit import (
    CompetenceFact,
    DivergenceFact,
    ImpedimentFact,
    LawsuitFact,
    NoRuleMatched,
    PriorAssignmentFact,
    RelatedAssignmentFact,
    WorkingMemory,
    assert_fact,
    fire,
    load_default_rules,
)
from casealot.domain import Lawsuit

from oracles import brute_force_fire, two_stage_expectation

TABLE_MIX = (0.0015, 0.0504, 0.0001)
EXPECTED_PLANTED = {1: 15, 2: 504, 3: 1, 4: 9480}


def report(number: int, description: str, check) -> None:
    try:
        check()
    except BaseException:
        print(f"\nACCEPTANCE {number}: FAIL - {description}", flush=True)
        raise
    print(f"\nACCEPTANCE {number}: PASS - {description}", flush=True)


@pytest.fixture(scope="module")
def big_run():
    """10,000 lawsuits at the reference rule mix with impediment_rate 0.05,
    distributed deterministically with an injected clock."""
    config = CorpusConfig(
        n_lawsuits=10_000, rule_mix=TABLE_MIX, impediment_rate=0.05, seed=2016
    )
    started = time.perf_counter()
    court, records = generate(config)
    platform = build_platform(
        court, seed_root=42, store=AuditStore(clock=TickClock())
    )
    outcomes = run_corpus(platform, records)
    runtime = time.perf_counter() - started
    return SimpleNamespace(
        config=config,
        court=court,
        records=records,
        platform=platform,
        store=platform.store,
        outcomes=outcomes,
        runtime=runtime,
    )


def test_criterion_1_rule_mix_reproduction(big_run):
    def check():
        # Rounding oracle: round(n * fraction) per rule, remainder to rule 4.
        n = big_run.config.n_lawsuits
        oracle = {
            rule: int(round(n * fraction))
            for rule, fraction in zip((1, 2, 3), TABLE_MIX)
        }
        oracle[4] = n - sum(oracle.values())
        assert oracle == EXPECTED_PLANTED
        planted = Counter(r.ground_truth_rule for r in big_run.records)
        assert dict(planted) == EXPECTED_PLANTED

        stats = big_run.store.rule_stats()
        counts = {rule: count for rule, (count, _) in stats.items()}
        assert counts == EXPECTED_PLANTED, "run outcomes must equal planted ground truth"
        fired = Counter(o.rule_number for o in big_run.outcomes)
        assert dict(fired) == EXPECTED_PLANTED
        frequencies = sum(freq for _, freq in stats.values())
        assert abs(frequencies - 1.0) < 1e-9
        assert big_run.runtime < 60.0, f"runtime {big_run.runtime:.1f}s exceeds 60s"

    report(1, "10k run reproduces planted rule mix {15, 504, 1, 9480} in < 60 s", check)


def test_criterion_2_throughput_floor(capsys):
    def check():
        code = main(["bench", "--n", "10000", "--seed", "1", "--scheduler", "concurrent"])
        out = capsys.readouterr().out
        match = re.search(r"10000 lawsuits in ([0-9.]+)s: ([0-9.]+) lawsuits/sec", out)
        assert match, f"unexpected bench output: {out!r}"
        rate = float(match.group(2))
        assert code == 0
        assert rate >= 3.15, f"rate {rate} below the 3.15/s floor"
        print(f"\n  bench: {rate:.1f} lawsuits/sec (floor 3.15)", flush=True)

    report(2, "bench --n 10000 (concurrent) sustains >= 3.15 lawsuits/sec", check)


def test_criterion_3_impediment_safety(big_run):
    def check():
        assert len(big_run.court.impediments) > 100, "corpus must carry real impediments"
        lawsuits = {r.lawsuit.case_number.render(): r.lawsuit for r in big_run.records}
        violations = [
            o.distribution_id
            for o in big_run.outcomes
            if impediment_applies(o.magistrate, lawsuits[o.case_number],
                                  big_run.court.impediments)
        ]
        assert violations == []
        # The scan has teeth: impediments actually bit during the run.
        assert any(o.justification.impeded for o in big_run.outcomes)

    report(3, "zero outcomes violate impediment_applies (exhaustive scan, rate 0.05)", check)


def test_criterion_4_replay(big_run, tmp_path):
    def check():
        ok, failed = big_run.store.verify_all()
        assert failed == []
        assert len(ok) == len(big_run.outcomes)

        # Byte mutation in a copied log flips verification for that id.
        config = CorpusConfig(n_lawsuits=60, impediment_rate=0.05, seed=5)
        court, records = generate(config)
        path = tmp_path / "audit.log.jsonl"
        platform = build_platform(
            court, seed_root=3, store=AuditStore(path, clock=TickClock())
        )
        outcomes = run_corpus(platform, records)
        platform.store.close()
        loaded = AuditStore.load(path)
        assert loaded.verify_all()[1] == []

        victim = outcomes[7]
        old_body = victim.body
        new_body = "T1" if old_body != "T1" else "T2"
        anchor = f'"body":"{old_body}","magistrate"'
        mutated_lines = []
        flipped = False
        for line in path.read_text().splitlines():
            if not flipped and f'"distribution_id":"{victim.distribution_id}"' in line \
                    and '"record-outcome"' in line and anchor in line:
                line = line.replace(anchor, f'"body":"{new_body}","magistrate"', 1)
                flipped = True
            mutated_lines.append(line)
        assert flipped
        copy_path = tmp_path / "copy.jsonl"
        copy_path.write_text("\n".join(mutated_lines) + "\n")
        tampered = AuditStore.load(copy_path)
        assert tampered.verify_replay(victim.distribution_id) is False
        untouched = [o.distribution_id for o in outcomes if o is not victim]
        assert all(tampered.verify_replay(d) for d in untouched)

    report(4, "verify replays 100%; a mutated outcome byte fails verification", check)


def test_criterion_5_trace_volume(big_run):
    def check():
        sizes = big_run.store.trace_sizes()
        ordinary = next(o for o in big_run.outcomes if o.rule_number == 4)
        floor = 3 + 3 * 27
        assert sizes[ordinary.distribution_id] >= floor
        average = sum(sizes.values()) / len(sizes)
        assert 60.0 <= average <= 120.0, f"average {average:.1f} outside [60, 120]"

        # Trace coherence on the sampled ordinary distribution: every send has
        # a matching consumption, and the outcome id appears in message records.
        view = big_run.store.trace(ordinary.distribution_id)
        sent = Counter(
            r.payload["content_type"] for r in view.records if r.action == "send-message"
        )
        consumed = Counter(
            r.payload["consumed"]
            for r in view.records
            if r.payload and r.payload.get("consumed") in sent
        )
        assert sent == consumed
        assert any(r.action == "send-message" for r in view.records)
        print(f"\n  trace sizes: ordinary={sizes[ordinary.distribution_id]}, "
              f"average={average:.1f}", flush=True)

    report(5, "ordinary trace >= 84 records; run average within [60, 120]", check)


def test_criterion_6_determinism():
    def check():
        def one_run():
            config = CorpusConfig(
                n_lawsuits=400, rule_mix=(0.01, 0.06, 0.004),
                impediment_rate=0.05, seed=7,
            )
            court, records = generate(config)
            platform = build_platform(
                court, seed_root=11, store=AuditStore(clock=TickClock())
            )
            outcomes = run_corpus(platform, records)
            payloads = [o.to_payload() for o in outcomes]
            audit = [
                json.dumps(r.to_json_obj(), sort_keys=True)
                for r in platform.store.records
            ]
            return payloads, audit

        first_outcomes, first_audit = one_run()
        second_outcomes, second_audit = one_run()
        assert first_outcomes == second_outcomes
        assert first_audit == second_audit

    report(6, "identical corpus/court/rules/seed give identical outcomes and audit", check)


def test_criterion_7_draw_distribution():
    def check():
        court = default_court()
        bodies = {b.id: sorted(b.members) for b in court.bodies if b.id != "SDI"}
        assert len(bodies) == 8
        assert sum(len(m) for m in bodies.values()) == 27
        expectation = two_stage_expectation(bodies)
        candidates = sorted(bodies.items())
        n_draws = 100_000
        rng = DrawRng(20240809)
        counts: Counter = Counter()
        for _ in range(n_draws):
            _, magistrate, _ = draw(candidates, rng)
            counts[magistrate] += 1
        worst = 0.0
        for magistrate, p in expectation.items():
            empirical = counts[magistrate] / n_draws
            sigma = math.sqrt(p * (1 - p) / n_draws)
            z = abs(empirical - p) / sigma
            worst = max(worst, z)
            assert z <= 4.0, f"{magistrate}: z={z:.2f} beyond 4 sigma (p={p}, emp={empirical})"
        print(f"\n  worst |z| over 27 magistrates: {worst:.2f}", flush=True)

    report(7, "100k draws match the two-stage analytic expectation within 4 sigma", check)


def test_criterion_8_engine_vs_brute_force():
    def check():
        rules = load_default_rules()
        case = parse_case_number("3128-70.2012.5.18.102")
        related = parse_case_number("2000-11.2011.5.18.001")
        other = parse_case_number("1500-22.2010.5.03.009")
        t_bodies = tuple(f"T{i}" for i in range(1, 9))
        pool = [
            LawsuitFact(Lawsuit(case_number=case, procedural_class="AIRR",
                                phase=2, related_cases=frozenset({related}),
                                protocol="PA18")),
            LawsuitFact(Lawsuit(case_number=other, procedural_class="RR",
                                protocol="PA03")),
            RelatedAssignmentFact(related, "T3", "M07"),
            RelatedAssignmentFact(other, "T5", "M21"),
            PriorAssignmentFact(PriorAssignment(case, 1, "T5", "M11", "D000009")),
            CompetenceFact("AIRR", t_bodies),
            ImpedimentFact("M03", case),
            DivergenceFact(case, ("T1", "T2")),
            DivergenceFact(other, ("T4", "T6")),
        ]
        universes = 0
        for k in range(7):
            for combo in itertools.combinations(pool, k):
                wm = WorkingMemory()
                for fact in combo:
                    wm = assert_fact(wm, fact)
                expected = brute_force_fire(wm, rules)
                if expected is None:
                    with pytest.raises(NoRuleMatched):
                        fire(wm, rules)
                else:
                    got = fire(wm, rules)
                    assert got[0] == expected[0]
                    assert got[1] == expected[1]
                    assert got[2] == expected[2]
                universes += 1
        assert universes == sum(math.comb(len(pool), k) for k in range(7))
        print(f"\n  {universes} fact universes checked", flush=True)

    report(8, "fire() equals the brute-force enumerator on all universes <= 6 facts", check)


def test_criterion_9_prevention_and_dependency(big_run):
    def check():
        outcomes_by_case = {o.case_number: o for o in big_run.outcomes}
        records_by_case = {r.lawsuit.case_number.render(): r for r in big_run.records}
        n_prevention = n_dependency = 0
        for outcome in big_run.outcomes:
            if outcome.rule_number == 2:
                n_prevention += 1
                prior = records_by_case[outcome.case_number].prior
                if outcome.justification.prevention_override:
                    assert outcome.body == prior.body
                    assert outcome.magistrate != prior.magistrate
                else:
                    assert (outcome.body, outcome.magistrate) == (prior.body, prior.magistrate)
                source = outcome.justification.prevention_source
                assert (source["body"], source["magistrate"]) == (prior.body, prior.magistrate)
            elif outcome.rule_number == 1:
                n_dependency += 1
                record = records_by_case[outcome.case_number]
                (related,) = record.lawsuit.related_cases
                target = outcomes_by_case[related.render()]
                assert not outcome.justification.dependency_override
                assert (outcome.body, outcome.magistrate) == (target.body, target.magistrate)
        assert n_prevention == EXPECTED_PLANTED[2]
        assert n_dependency == EXPECTED_PLANTED[1]
        print(f"\n  {n_prevention} prevention + {n_dependency} dependency outcomes checked",
              flush=True)

    report(9, "every rule-2 outcome matches its prior and rule-1 its related case", check)
