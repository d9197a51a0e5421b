"""Synthetic lawsuit corpora calibrated to observed rule frequencies, plus
load/export of corpora (`corpus.jsonl`) and court configuration
(`court.json`).

Each generated record carries the rule its planted metadata should trigger
(ground truth), so a full run can be checked against the generator exactly.
Dependency targets always precede their dependents in corpus order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from casealot.distributor import DrawRng
from casealot.domain import (
    CaseNumber,
    CompetenceMap,
    CourtConfig,
    DivergenceRef,
    Impediment,
    ImpedimentKind,
    JudicialBody,
    Lawsuit,
    Magistrate,
    PriorAssignment,
    parse_case_number,
)

__all__ = [
    "InvalidConfig",
    "MalformedRecord",
    "CorpusConfig",
    "CorpusRecord",
    "default_court",
    "generate",
    "validate_corpus",
    "record_to_obj",
    "record_from_obj",
    "export_corpus",
    "load_corpus",
    "export_court",
    "load_court",
    "export",
    "load",
]

DEFAULT_RULE_MIX = (0.0015, 0.0504, 0.0001)
DEFAULT_CLASSES = ("AIRR", "RR", "AR")
DEFAULT_EMBARGO_CLASS = "EDV"
DIVERGENCE_BODY = "SDI"


class InvalidConfig(ValueError):
    pass


class MalformedRecord(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class CorpusConfig:
    """Knobs for one synthetic corpus; rule 4 takes the remainder of the mix."""

    n_lawsuits: int
    rule_mix: tuple[float, float, float] = DEFAULT_RULE_MIX
    n_magistrates: int = 27
    n_bodies: int = 8
    n_protocols: int = 25
    impediment_rate: float = 0.0
    classes: tuple[str, ...] = DEFAULT_CLASSES
    embargo_class: str = DEFAULT_EMBARGO_CLASS
    party_pool: int = 200
    lawyer_pool: int = 120
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_lawsuits < 0:
            raise InvalidConfig("n_lawsuits must be >= 0")
        if any(f < 0 for f in self.rule_mix) or sum(self.rule_mix) > 1:
            raise InvalidConfig("rule mix fractions must be >= 0 and sum to <= 1")
        if not 0 <= self.impediment_rate <= 1:
            raise InvalidConfig("impediment_rate must be in [0, 1]")
        if self.n_bodies < 1 or self.n_magistrates < self.n_bodies:
            raise InvalidConfig("need at least one body and one magistrate per body")
        if self.n_protocols < 1 or not self.classes:
            raise InvalidConfig("need at least one protocol and one class")

    def planted_counts(self) -> tuple[int, int, int, int]:
        n = self.n_lawsuits
        c1 = int(round(n * self.rule_mix[0]))
        c2 = int(round(n * self.rule_mix[1]))
        c3 = int(round(n * self.rule_mix[2]))
        c4 = n - c1 - c2 - c3
        if c4 < 0:
            raise InvalidConfig("rule mix rounds to more lawsuits than requested")
        return c1, c2, c3, c4


@dataclass(frozen=True)
class CorpusRecord:
    lawsuit: Lawsuit
    ground_truth_rule: int
    prior: PriorAssignment | None = None


# --------------------------------------------------------------------------
# Court construction


def default_court(
    n_magistrates: int = 27,
    n_bodies: int = 8,
    n_protocols: int = 25,
    classes: Iterable[str] = DEFAULT_CLASSES,
    embargo_class: str = DEFAULT_EMBARGO_CLASS,
    impediments: Iterable[Impediment] = (),
) -> CourtConfig:
    """The paper-scale default: magistrates M01.. in turma-style bodies T1..,
    an overlapping divergence section SDI (first member of each body), and
    protocols PA01..; every ordinary class maps to all T-bodies."""
    mag_ids = [f"M{i:02d}" for i in range(1, n_magistrates + 1)]
    base, extra = divmod(n_magistrates, n_bodies)
    bodies: list[JudicialBody] = []
    cursor = 0
    for b in range(n_bodies):
        size = base + (1 if b < extra else 0)
        members = tuple(mag_ids[cursor:cursor + size])
        bodies.append(JudicialBody(f"T{b + 1}", members))
        cursor += size
    sdi_members = tuple(body.members[0] for body in bodies)
    bodies.append(JudicialBody(DIVERGENCE_BODY, sdi_members))
    memberships: dict[str, set[str]] = {m: set() for m in mag_ids}
    for body in bodies:
        for m in body.members:
            memberships[m].add(body.id)
    magistrates = tuple(
        Magistrate(
            id=m,
            name=f"Magistrate {m[1:]}",
            active=True,
            memberships=frozenset(memberships[m]),
        )
        for m in mag_ids
    )
    t_bodies = tuple(b.id for b in bodies if b.id != DIVERGENCE_BODY)
    competence = CompetenceMap(
        classes={**{c: t_bodies for c in classes}, embargo_class: (DIVERGENCE_BODY,)},
        divergence_bodies={embargo_class: DIVERGENCE_BODY},
    )
    protocols = tuple(f"PA{i:02d}" for i in range(1, n_protocols + 1))
    return CourtConfig(
        magistrates=magistrates,
        bodies=tuple(bodies),
        competence=competence,
        impediments=tuple(impediments),
        protocols=protocols,
    )


# --------------------------------------------------------------------------
# Generation


def _sample_distinct(rng: DrawRng, pool: list[str], k: int, banned: set[str] | None = None) -> list[str]:
    chosen: list[str] = []
    seen: set[str] = set(banned or ())
    while len(chosen) < k:
        candidate = pool[rng.below(len(pool))]
        if candidate in seen:
            continue
        seen.add(candidate)
        chosen.append(candidate)
    return chosen


def generate(config: CorpusConfig) -> tuple[CourtConfig, list[CorpusRecord]]:
    """Deterministically generate (court, records) under the config seed.

    Planted counts are round(n * fraction) per rule with rule 4 taking the
    remainder; rule-2 records embed a prior-phase assignment; rule-1
    dependents copy their target's parties and lawyers and are inserted
    after it.
    """
    c1, c2, c3, c4 = config.planted_counts()
    rng = DrawRng(config.seed)
    parties = [f"P{i:03d}" for i in range(1, config.party_pool + 1)]
    lawyers = [f"L{i:03d}" for i in range(1, config.lawyer_pool + 1)]

    court = default_court(
        n_magistrates=config.n_magistrates,
        n_bodies=config.n_bodies,
        n_protocols=config.n_protocols,
        classes=config.classes,
        embargo_class=config.embargo_class,
    )
    impediments: list[Impediment] = []
    if config.impediment_rate > 0:
        threshold = int(config.impediment_rate * (1 << 32))
        for magistrate in court.magistrates:
            for party in parties:
                if rng.below(1 << 32) < threshold:
                    impediments.append(
                        Impediment(
                            magistrate.id,
                            ImpedimentKind.PARTY,
                            party,
                            reason=f"registered conflict with {party}",
                        )
                    )
    court = default_court(
        n_magistrates=config.n_magistrates,
        n_bodies=config.n_bodies,
        n_protocols=config.n_protocols,
        classes=config.classes,
        embargo_class=config.embargo_class,
        impediments=impediments,
    )
    impeded_parties: dict[str, set[str]] = {}
    for imp in impediments:
        impeded_parties.setdefault(imp.magistrate, set()).add(imp.target)

    t_bodies = [b for b in court.bodies if b.id != DIVERGENCE_BODY]
    counter = 0

    def next_case() -> CaseNumber:
        nonlocal counter
        counter += 1
        return CaseNumber(
            sequence=counter,
            check_digits=rng.below(100),
            year=2012 + rng.below(5),
            segment=5,
            region=rng.below(config.n_protocols) + 1,
            origin=rng.below(999) + 1,
            widths=(4, 2, 4, 1, 2, 3),
        )

    def base_fields(case: CaseNumber, banned_parties: set[str] | None = None) -> dict:
        usable = parties
        if banned_parties:
            usable = [p for p in parties if p not in banned_parties]
        return {
            "case_number": case,
            "parties": frozenset(_sample_distinct(rng, usable, 1 + rng.below(4))),
            "lawyers": frozenset(_sample_distinct(rng, lawyers, 1 + rng.below(3))),
            "protocol": f"PA{case.region:02d}",
        }

    records: list[CorpusRecord] = []
    for _ in range(c4):
        case = next_case()
        records.append(
            CorpusRecord(
                Lawsuit(
                    procedural_class=config.classes[rng.below(len(config.classes))],
                    phase=1,
                    **base_fields(case),
                ),
                ground_truth_rule=4,
            )
        )
    for i in range(c2):
        case = next_case()
        phase = 2 + rng.below(2)
        body = t_bodies[rng.below(len(t_bodies))]
        magistrate = body.members[rng.below(len(body.members))]
        prior = PriorAssignment(case, phase - 1, body.id, magistrate, f"SEED{i:06d}")
        records.append(
            CorpusRecord(
                Lawsuit(
                    procedural_class=config.classes[rng.below(len(config.classes))],
                    phase=phase,
                    **base_fields(case, banned_parties=impeded_parties.get(magistrate)),
                ),
                ground_truth_rule=2,
                prior=prior,
            )
        )
    for _ in range(c3):
        case = next_case()
        first = t_bodies[rng.below(len(t_bodies))].id
        second = first
        while second == first and len(t_bodies) > 1:
            second = t_bodies[rng.below(len(t_bodies))].id
        records.append(
            CorpusRecord(
                Lawsuit(
                    procedural_class=config.embargo_class,
                    phase=1,
                    embargo_of=DivergenceRef(bodies=tuple(sorted((first, second)))),
                    **base_fields(case),
                ),
                ground_truth_rule=3,
            )
        )

    # Deterministic Fisher-Yates shuffle of the independent records.
    for i in range(len(records) - 1, 0, -1):
        j = rng.below(i + 1)
        records[i], records[j] = records[j], records[i]

    # Rule-1 dependents: pick distinct ordinary targets, copy their parties
    # and lawyers (so the copied assignment can never be impeded for the
    # dependent), and insert each dependent somewhere after its target.
    if c1 > 0:
        ordinary_positions = [i for i, r in enumerate(records) if r.ground_truth_rule == 4]
        if c1 > len(ordinary_positions):
            raise InvalidConfig("not enough ordinary records to anchor dependencies")
        target_cases = []
        chosen = set()
        while len(target_cases) < c1:
            pos = ordinary_positions[rng.below(len(ordinary_positions))]
            if pos in chosen:
                continue
            chosen.add(pos)
            target_cases.append(records[pos].lawsuit.case_number)
        for target_case in target_cases:
            target_index = next(
                i for i, r in enumerate(records) if r.lawsuit.case_number == target_case
            )
            target = records[target_index].lawsuit
            case = next_case()
            dependent = CorpusRecord(
                Lawsuit(
                    case_number=case,
                    procedural_class=target.procedural_class,
                    parties=target.parties,
                    lawyers=target.lawyers,
                    related_cases=frozenset({target.case_number}),
                    phase=1,
                    protocol=f"PA{case.region:02d}",
                ),
                ground_truth_rule=1,
            )
            insert_at = target_index + 1 + rng.below(len(records) - target_index)
            records.insert(insert_at, dependent)

    validate_corpus(court, records)
    return court, records


# --------------------------------------------------------------------------
# Validation


def validate_corpus(court: CourtConfig, records: list[CorpusRecord]) -> None:
    """Check that every record's metadata is consistent with its planted
    ground truth and that dependency targets precede their dependents."""
    problems: list[str] = []
    seen: dict[CaseNumber, int] = {}
    body_members = {b.id: set(b.members) for b in court.bodies}
    for index, record in enumerate(records):
        lawsuit = record.lawsuit
        case = lawsuit.case_number
        if case in seen:
            problems.append(f"#{index}: duplicate case number {case.render()}")
        seen[case] = index
        if lawsuit.procedural_class not in court.competence.classes:
            problems.append(f"#{index}: class {lawsuit.procedural_class!r} unmapped")
        if lawsuit.protocol not in court.protocols:
            problems.append(f"#{index}: unknown protocol {lawsuit.protocol!r}")
        rule = record.ground_truth_rule
        if rule == 1:
            if not lawsuit.related_cases:
                problems.append(f"#{index}: rule-1 record without related cases")
            for related in lawsuit.related_cases:
                target_index = seen.get(related)
                if target_index is None or target_index >= index:
                    problems.append(
                        f"#{index}: related case {related.render()} does not precede it"
                    )
            if record.prior is not None or lawsuit.embargo_of is not None:
                problems.append(f"#{index}: rule-1 record with prior/embargo metadata")
        elif rule == 2:
            if lawsuit.phase < 2:
                problems.append(f"#{index}: rule-2 record with phase {lawsuit.phase}")
            prior = record.prior
            if prior is None:
                problems.append(f"#{index}: rule-2 record without planted prior")
            else:
                if prior.case_number != case or prior.phase != lawsuit.phase - 1:
                    problems.append(f"#{index}: prior does not match case/phase")
                if prior.magistrate not in body_members.get(prior.body, set()):
                    problems.append(f"#{index}: prior magistrate outside prior body")
            if lawsuit.related_cases or lawsuit.embargo_of is not None:
                problems.append(f"#{index}: rule-2 record with related/embargo metadata")
        elif rule == 3:
            if lawsuit.embargo_of is None:
                problems.append(f"#{index}: rule-3 record without divergence reference")
            if not court.competence.is_embargo_class(lawsuit.procedural_class):
                problems.append(
                    f"#{index}: class {lawsuit.procedural_class!r} is not an embargo class"
                )
            if lawsuit.related_cases or record.prior is not None:
                problems.append(f"#{index}: rule-3 record with related/prior metadata")
        elif rule == 4:
            if (
                lawsuit.related_cases
                or record.prior is not None
                or lawsuit.embargo_of is not None
                or lawsuit.phase != 1
            ):
                problems.append(f"#{index}: rule-4 record with triggering metadata")
        else:
            problems.append(f"#{index}: ground truth rule {rule} out of range")
    if problems:
        raise InvalidConfig("; ".join(problems[:10]))


# --------------------------------------------------------------------------
# Serialization


def record_to_obj(record: CorpusRecord) -> dict:
    lawsuit = record.lawsuit
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
    prior = None
    if record.prior is not None:
        prior = {
            "case_number": record.prior.case_number.render(),
            "phase": record.prior.phase,
            "body": record.prior.body,
            "magistrate": record.prior.magistrate,
            "distribution_id": record.prior.distribution_id,
        }
    return {
        "case_number": lawsuit.case_number.render(),
        "procedural_class": lawsuit.procedural_class,
        "parties": sorted(lawsuit.parties),
        "lawyers": sorted(lawsuit.lawyers),
        "related_cases": sorted(c.render() for c in lawsuit.related_cases),
        "phase": lawsuit.phase,
        "embargo_of": embargo,
        "protocol": lawsuit.protocol,
        "ground_truth_rule": record.ground_truth_rule,
        "prior": prior,
    }


def record_from_obj(obj: dict) -> CorpusRecord:
    embargo = obj.get("embargo_of")
    divergence = None
    if embargo:
        source = embargo.get("source_case")
        divergence = DivergenceRef(
            bodies=tuple(embargo["bodies"]),
            source_case=parse_case_number(source) if source else None,
        )
    prior_obj = obj.get("prior")
    prior = None
    if prior_obj:
        prior = PriorAssignment(
            parse_case_number(prior_obj["case_number"]),
            int(prior_obj["phase"]),
            prior_obj["body"],
            prior_obj["magistrate"],
            prior_obj["distribution_id"],
        )
    lawsuit = Lawsuit(
        case_number=parse_case_number(obj["case_number"]),
        procedural_class=obj["procedural_class"],
        parties=frozenset(obj.get("parties", ())),
        lawyers=frozenset(obj.get("lawyers", ())),
        related_cases=frozenset(parse_case_number(c) for c in obj.get("related_cases", ())),
        phase=int(obj.get("phase", 1)),
        embargo_of=divergence,
        protocol=obj["protocol"],
    )
    return CorpusRecord(lawsuit, int(obj["ground_truth_rule"]), prior)


def export_corpus(records: Iterable[CorpusRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_obj(record), ensure_ascii=False,
                                separators=(",", ":")))
            fh.write("\n")


def load_corpus(path: str | Path) -> list[CorpusRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_obj(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise MalformedRecord(lineno, str(e)) from e
    return records


def export_court(court: CourtConfig, path: str | Path) -> None:
    obj = {
        "magistrates": [
            {
                "id": m.id,
                "name": m.name,
                "active": m.active,
                "memberships": sorted(m.memberships),
            }
            for m in court.magistrates
        ],
        "bodies": [{"id": b.id, "members": list(b.members)} for b in court.bodies],
        "competence": {
            "classes": {k: list(v) for k, v in court.competence.classes.items()},
            "divergence_bodies": dict(court.competence.divergence_bodies),
        },
        "impediments": [
            {
                "magistrate": i.magistrate,
                "kind": i.kind.value,
                "target": i.target.render() if isinstance(i.target, CaseNumber) else i.target,
                "reason": i.reason,
            }
            for i in court.impediments
        ],
        "protocols": list(court.protocols),
    }
    Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n",
                          encoding="utf-8")


def load_court(path: str | Path) -> CourtConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        magistrates = tuple(
            Magistrate(
                id=m["id"],
                name=m.get("name", ""),
                active=bool(m.get("active", True)),
                memberships=frozenset(m.get("memberships", ())),
            )
            for m in obj["magistrates"]
        )
        bodies = tuple(JudicialBody(b["id"], tuple(b["members"])) for b in obj["bodies"])
        competence = CompetenceMap(
            classes={k: tuple(v) for k, v in obj["competence"]["classes"].items()},
            divergence_bodies=dict(obj["competence"].get("divergence_bodies", {})),
        )
        impediments = []
        for i in obj.get("impediments", ()):
            kind = ImpedimentKind(i["kind"])
            target = (
                parse_case_number(i["target"]) if kind is ImpedimentKind.CASE else i["target"]
            )
            impediments.append(Impediment(i["magistrate"], kind, target, i.get("reason", "")))
        return CourtConfig(
            magistrates=magistrates,
            bodies=bodies,
            competence=competence,
            impediments=tuple(impediments),
            protocols=tuple(obj.get("protocols", ())),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidConfig(f"malformed court configuration {path}: {e}") from e


def export(court: CourtConfig, records: Iterable[CorpusRecord],
           corpus_path: str | Path, court_path: str | Path) -> None:
    export_court(court, court_path)
    export_corpus(records, corpus_path)


def load(corpus_path: str | Path, court_path: str | Path) -> tuple[CourtConfig, list[CorpusRecord]]:
    return load_court(court_path), load_corpus(corpus_path)
