"""Core court-domain entities: case numbers, lawsuits, magistrates, judicial
bodies, impediments, competence configuration, and prior assignments.

Everything here is an immutable value; matching logic is pure functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

__all__ = [
    "MalformedCaseNumber",
    "CaseNumber",
    "DivergenceRef",
    "Lawsuit",
    "Magistrate",
    "JudicialBody",
    "ImpedimentKind",
    "Impediment",
    "CompetenceMap",
    "PriorAssignment",
    "CourtConfig",
    "parse_case_number",
    "impediment_applies",
    "competent_bodies",
]


class MalformedCaseNumber(ValueError):
    """Raised when text does not match the NNNN-DD.YYYY.S.RR.OOO shape."""


_CASE_NUMBER_RE = re.compile(r"^(\d+)-(\d+)\.(\d+)\.(\d+)\.(\d+)\.(\d+)$")


@dataclass(frozen=True, slots=True)
class CaseNumber:
    """Structured case number, canonical text "NNNN-DD.YYYY.S.RR.OOO".

    Digit-group widths are preserved from the parsed text so that
    ``parse_case_number(t).render() == t`` for any canonical input.
    """

    sequence: int
    check_digits: int
    year: int
    segment: int
    region: int
    origin: int
    widths: tuple[int, int, int, int, int, int] = (1, 1, 1, 1, 1, 1)

    def __post_init__(self) -> None:
        if not 0 <= self.check_digits <= 99:
            raise MalformedCaseNumber(
                f"check digits must be in 0..99, got {self.check_digits}"
            )
        parts = self._parts()
        if any(p < 0 for p in parts):
            raise MalformedCaseNumber("case number components must be non-negative")
        # Widths never truncate: grow any width that cannot hold its value.
        fitted = tuple(max(w, len(str(p))) for w, p in zip(self.widths, parts))
        if fitted != self.widths:
            object.__setattr__(self, "widths", fitted)

    def _parts(self) -> tuple[int, int, int, int, int, int]:
        return (
            self.sequence,
            self.check_digits,
            self.year,
            self.segment,
            self.region,
            self.origin,
        )

    def render(self) -> str:
        seq, chk, year, seg, reg, orig = (
            str(p).zfill(w) for p, w in zip(self._parts(), self.widths)
        )
        return f"{seq}-{chk}.{year}.{seg}.{reg}.{orig}"

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.render()


def parse_case_number(text: str) -> CaseNumber:
    """Parse canonical case-number text, preserving zero padding.

    Raises MalformedCaseNumber when the separator/digit-group structure
    does not match.
    """
    if not isinstance(text, str) or not text:
        raise MalformedCaseNumber("case number text must be non-empty")
    m = _CASE_NUMBER_RE.match(text.strip())
    if m is None:
        raise MalformedCaseNumber(f"not a case number: {text!r}")
    groups = m.groups()
    values = tuple(int(g) for g in groups)
    if values[1] > 99:
        raise MalformedCaseNumber(f"check digits out of range in {text!r}")
    return CaseNumber(*values, widths=tuple(len(g) for g in groups))


@dataclass(frozen=True, slots=True)
class DivergenceRef:
    """Reference to the diverging decisions an embargo challenges."""

    bodies: tuple[str, ...]
    source_case: CaseNumber | None = None


@dataclass(frozen=True, slots=True)
class Lawsuit:
    """A case awaiting distribution.

    Party and lawyer references are opaque identifiers; ``protocol`` is the
    label of the originating protocol agent.
    """

    case_number: CaseNumber
    procedural_class: str
    parties: frozenset[str] = frozenset()
    lawyers: frozenset[str] = frozenset()
    related_cases: frozenset[CaseNumber] = frozenset()
    phase: int = 1
    embargo_of: DivergenceRef | None = None
    protocol: str = ""

    def __post_init__(self) -> None:
        if self.phase < 1:
            raise ValueError(f"phase must be >= 1, got {self.phase}")
        if not self.procedural_class:
            raise ValueError("procedural_class must be non-empty")


@dataclass(frozen=True, slots=True)
class Magistrate:
    id: str
    name: str = ""
    active: bool = True
    memberships: frozenset[str] = frozenset()


@dataclass(frozen=True, slots=True)
class JudicialBody:
    """A panel of magistrates; ``members`` keeps configuration order."""

    id: str
    members: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"judicial body {self.id} has no members")
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"judicial body {self.id} has duplicate members")


class ImpedimentKind(str, Enum):
    LAWYER = "lawyer"
    CASE = "case"
    PARTY = "party"


@dataclass(frozen=True, slots=True)
class Impediment:
    """A registered legal bar tying a magistrate to a lawyer, case, or party."""

    magistrate: str
    kind: ImpedimentKind
    target: str | CaseNumber
    reason: str = ""

    def __post_init__(self) -> None:
        if self.kind is ImpedimentKind.CASE:
            if not isinstance(self.target, CaseNumber):
                raise ValueError("case impediment target must be a CaseNumber")
        elif not isinstance(self.target, str):
            raise ValueError(f"{self.kind.value} impediment target must be an identifier")


@dataclass(frozen=True)
class CompetenceMap:
    """Procedural class -> ordered judicial bodies, plus embargo routing.

    ``divergence_bodies`` maps an embargo class to the body that receives its
    embargoes of divergence; its keys double as the embargo-class vocabulary.
    """

    classes: Mapping[str, tuple[str, ...]]
    divergence_bodies: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for klass, bodies in self.classes.items():
            if not bodies:
                raise ValueError(f"competence list for {klass} is empty")

    def is_embargo_class(self, procedural_class: str) -> bool:
        return procedural_class in self.divergence_bodies

    def divergence_body(self, procedural_class: str) -> str | None:
        return self.divergence_bodies.get(procedural_class)


@dataclass(frozen=True, slots=True)
class PriorAssignment:
    """The decided (body, magistrate) of one phase of a case."""

    case_number: CaseNumber
    phase: int
    body: str
    magistrate: str
    distribution_id: str


@dataclass(frozen=True)
class CourtConfig:
    """A whole court: magistrates, bodies, competence, impediments, protocols."""

    magistrates: tuple[Magistrate, ...]
    bodies: tuple[JudicialBody, ...]
    competence: CompetenceMap
    impediments: tuple[Impediment, ...] = ()
    protocols: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        mag_ids = {m.id for m in self.magistrates}
        if len(mag_ids) != len(self.magistrates):
            raise ValueError("duplicate magistrate ids")
        body_ids = {b.id for b in self.bodies}
        if len(body_ids) != len(self.bodies):
            raise ValueError("duplicate body ids")
        for body in self.bodies:
            unknown = set(body.members) - mag_ids
            if unknown:
                raise ValueError(f"body {body.id} references unknown magistrates {sorted(unknown)}")
        for klass, bodies in self.competence.classes.items():
            unknown = set(bodies) - body_ids
            if unknown:
                raise ValueError(f"class {klass} maps to unknown bodies {sorted(unknown)}")
        for klass, body in self.competence.divergence_bodies.items():
            if body not in body_ids:
                raise ValueError(f"divergence body {body} for {klass} does not exist")
        for imp in self.impediments:
            if imp.magistrate not in mag_ids:
                raise ValueError(f"impediment references unknown magistrate {imp.magistrate}")

    def body(self, body_id: str) -> JudicialBody:
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise KeyError(body_id)

    def magistrate(self, magistrate_id: str) -> Magistrate:
        for m in self.magistrates:
            if m.id == magistrate_id:
                return m
        raise KeyError(magistrate_id)

    def impediments_of(self, magistrate_id: str) -> tuple[Impediment, ...]:
        return tuple(i for i in self.impediments if i.magistrate == magistrate_id)


def impediment_applies(
    magistrate_id: str, lawsuit: Lawsuit, impediments: Iterable[Impediment]
) -> bool:
    """True iff any registered impediment of the magistrate touches the lawsuit.

    A case impediment matches the lawsuit's own number; party and lawyer
    impediments match membership in the respective reference sets.
    """
    for imp in impediments:
        if imp.magistrate != magistrate_id:
            continue
        if imp.kind is ImpedimentKind.CASE:
            if imp.target == lawsuit.case_number:
                return True
        elif imp.kind is ImpedimentKind.PARTY:
            if imp.target in lawsuit.parties:
                return True
        elif imp.kind is ImpedimentKind.LAWYER:
            if imp.target in lawsuit.lawyers:
                return True
    return False


def competent_bodies(procedural_class: str, cmap: CompetenceMap) -> tuple[str, ...]:
    """The configured bodies for a class, in configuration order.

    An unmapped class yields the empty tuple; raising is the caller's call.
    """
    return tuple(cmap.classes.get(procedural_class, ()))
