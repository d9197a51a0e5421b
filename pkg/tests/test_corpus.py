from collections import Counter

import pytest

from casealot.corpus import (
    CorpusConfig,
    CorpusRecord,
    InvalidConfig,
    MalformedRecord,
    default_court,
    export,
    export_corpus,
    export_court,
    generate,
    load,
    load_corpus,
    load_court,
    validate_corpus,
)
from casealot.domain import Lawsuit, parse_case_number

TABLE_MIX = (0.0015, 0.0504, 0.0001)


class TestPlantedCounts:
    def test_ten_thousand_with_reference_mix(self):
        # Rounding oracle, computed independently of the generator:
        # round(n * fraction) per rule, remainder to rule 4.
        n = 10_000
        expected = tuple(int(round(n * f)) for f in TABLE_MIX)
        assert expected == (15, 504, 1)
        config = CorpusConfig(n_lawsuits=n, rule_mix=TABLE_MIX, seed=1)
        assert config.planted_counts() == (15, 504, 1, 9480)

    def test_generated_corpus_matches_planted_counts(self):
        config = CorpusConfig(n_lawsuits=400, rule_mix=(0.02, 0.1, 0.01), seed=2)
        _, records = generate(config)
        counts = Counter(r.ground_truth_rule for r in records)
        assert len(records) == 400
        assert counts == {1: 8, 2: 40, 3: 4, 4: 348}

    def test_empty_corpus(self):
        court, records = generate(CorpusConfig(n_lawsuits=0, seed=1))
        assert records == []
        assert len(court.magistrates) == 27

    def test_over_unity_mix_rejected(self):
        with pytest.raises(InvalidConfig):
            CorpusConfig(n_lawsuits=10, rule_mix=(0.9, 0.2, 0.0))
        with pytest.raises(InvalidConfig):
            CorpusConfig(n_lawsuits=10, rule_mix=(-0.1, 0.0, 0.0))


class TestDeterminism:
    def test_same_seed_identical_bytes(self, tmp_path):
        config = CorpusConfig(n_lawsuits=150, impediment_rate=0.03, seed=42)
        for name in ("a", "b"):
            court, records = generate(config)
            export(court, records, tmp_path / f"{name}.jsonl", tmp_path / f"{name}.json")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_different_seed_differs(self):
        _, a = generate(CorpusConfig(n_lawsuits=50, seed=1))
        _, b = generate(CorpusConfig(n_lawsuits=50, seed=2))
        assert a != b


class TestRoundTrip:
    def test_export_load_identity(self, tmp_path):
        config = CorpusConfig(n_lawsuits=120, rule_mix=(0.05, 0.1, 0.02),
                              impediment_rate=0.02, seed=7)
        court, records = generate(config)
        export(court, records, tmp_path / "corpus.jsonl", tmp_path / "court.json")
        loaded_court, loaded_records = load(tmp_path / "corpus.jsonl", tmp_path / "court.json")
        assert loaded_records == records
        assert loaded_court == court

    def test_truncated_line_reports_line_number(self, tmp_path):
        config = CorpusConfig(n_lawsuits=3, seed=1)
        _, records = generate(config)
        path = tmp_path / "corpus.jsonl"
        export_corpus(records, path)
        lines = path.read_text().splitlines()
        lines[1] = lines[1][: len(lines[1]) // 2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(MalformedRecord) as err:
            load_corpus(path)
        assert err.value.line == 2

    def test_paper_scale_court_loads_and_validates(self, tmp_path):
        court = default_court(n_magistrates=27, n_bodies=8, n_protocols=25)
        assert len(court.magistrates) == 27
        assert len(court.protocols) == 25
        assert sum(len(b.members) for b in court.bodies if b.id != "SDI") == 27
        path = tmp_path / "court.json"
        export_court(court, path)
        assert load_court(path) == court


@pytest.fixture(scope="module")
def corpus():
    config = CorpusConfig(n_lawsuits=500, rule_mix=(0.03, 0.08, 0.01),
                          impediment_rate=0.05, seed=9)
    return generate(config)


class TestConsistency:
    def test_validator_passes_generated_corpus(self, corpus):
        court, records = corpus
        validate_corpus(court, records)

    def test_rule1_targets_precede_dependents(self, corpus):
        _, records = corpus
        seen = set()
        checked = 0
        for record in records:
            if record.ground_truth_rule == 1:
                for related in record.lawsuit.related_cases:
                    assert related in seen
                    checked += 1
            seen.add(record.lawsuit.case_number)
        assert checked >= 1

    def test_rule2_metadata(self, corpus):
        _, records = corpus
        for record in records:
            if record.ground_truth_rule == 2:
                assert record.lawsuit.phase >= 2
                assert record.prior is not None
                assert record.prior.phase == record.lawsuit.phase - 1
                assert record.prior.case_number == record.lawsuit.case_number

    def test_rule3_metadata(self, corpus):
        court, records = corpus
        for record in records:
            if record.ground_truth_rule == 3:
                assert record.lawsuit.embargo_of is not None
                assert court.competence.is_embargo_class(record.lawsuit.procedural_class)

    def test_dependents_share_target_parties(self, corpus):
        _, records = corpus
        by_case = {r.lawsuit.case_number: r.lawsuit for r in records}
        for record in records:
            if record.ground_truth_rule == 1:
                for related in record.lawsuit.related_cases:
                    target = by_case[related]
                    assert record.lawsuit.parties == target.parties
                    assert record.lawsuit.lawyers == target.lawyers

    def test_validator_rejects_inconsistent_record(self):
        court, records = generate(CorpusConfig(n_lawsuits=5, seed=3))
        bad = CorpusRecord(
            Lawsuit(
                case_number=parse_case_number("7777-77.2015.5.01.001"),
                procedural_class="AIRR",
                phase=2,  # phase >= 2 without a planted prior
                protocol="PA01",
            ),
            ground_truth_rule=2,
        )
        with pytest.raises(InvalidConfig):
            validate_corpus(court, records + [bad])
