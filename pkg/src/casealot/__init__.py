"""casealot: auditable lawsuit distribution by a society of message-passing agents.

Cases are assigned to judicial bodies and rapporteur magistrates under four
declarative rules; every perception, action, and message is mirrored into an
append-only audit log keyed by distribution instance and can be replayed.
"""

from casealot.domain import (
    CaseNumber,
    CompetenceMap,
    CourtConfig,
    Impediment,
    ImpedimentKind,
    JudicialBody,
    Lawsuit,
    Magistrate,
    PriorAssignment,
    competent_bodies,
    impediment_applies,
    parse_case_number,
)

__version__ = "0.1.0"

__all__ = [
    "CaseNumber",
    "CompetenceMap",
    "CourtConfig",
    "Impediment",
    "ImpedimentKind",
    "JudicialBody",
    "Lawsuit",
    "Magistrate",
    "PriorAssignment",
    "competent_bodies",
    "impediment_applies",
    "parse_case_number",
    "__version__",
]
