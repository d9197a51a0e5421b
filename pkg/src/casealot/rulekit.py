"""Declarative distribution-rule DSL and forward-chaining matcher.

Rule files declare salience-ordered rules over fact patterns; matching a
working memory of facts yields activations sorted by a total conflict-
resolution order, and firing returns exactly one directive for the caller to
execute. The matcher is a naive pattern scan: fact counts per distribution
are tiny, and determinism matters more than incremental matching.

Grammar::

    ruleset   := rule+
    rule      := "rule" STRING "salience" INT "when" pattern+ "then" directive "end"
    pattern   := [IDENT ":"] TYPE "(" [constraint {"," constraint}] ")" | "not" pattern
    constraint:= path ("==" | "!=" | "in") (literal | path) | path "not-empty"
    directive := IDENT "(" [IDENT] ")"

``#`` starts a line comment. Literals are integers and double-quoted text;
the reserved path root ``lawsuit`` refers to the fact bound by the rule's
lawsuit pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Iterator, Mapping, Union

from casealot.domain import CaseNumber, Lawsuit, PriorAssignment

__all__ = [
    "ParseError",
    "UnknownFactType",
    "UnknownDirective",
    "UnboundLabel",
    "NoRuleMatched",
    "LawsuitFact",
    "PriorAssignmentFact",
    "RelatedAssignmentFact",
    "CompetenceFact",
    "ImpedimentFact",
    "DivergenceFact",
    "Fact",
    "PathRef",
    "Constraint",
    "Pattern",
    "AssignSameAs",
    "PreventionAssign",
    "EmbargoAssign",
    "OrdinaryDraw",
    "Directive",
    "Rule",
    "RuleSet",
    "WorkingMemory",
    "Activation",
    "parse_rules",
    "render_rules",
    "assert_fact",
    "match",
    "fire",
]


# --------------------------------------------------------------------------
# Errors


class ParseError(ValueError):
    """Syntax or scope error in a rule file, with source location."""

    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = expected
        suffix = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{line}:{column}: {message}{suffix}")


class UnknownFactType(ParseError):
    pass


class UnknownDirective(ParseError):
    pass


class UnboundLabel(ParseError):
    pass


class NoRuleMatched(LookupError):
    """No activation exists for the working memory."""


# --------------------------------------------------------------------------
# Facts


@dataclass(frozen=True, slots=True)
class LawsuitFact:
    TYPE: ClassVar[str] = "lawsuit"
    lawsuit: Lawsuit

    def field_value(self, name: str):
        l = self.lawsuit
        return {
            "case_number": l.case_number,
            "phase": l.phase,
            "procedural_class": l.procedural_class,
            "parties": l.parties,
            "lawyers": l.lawyers,
            "related_cases": l.related_cases,
            "embargo": l.embargo_of,
            "protocol": l.protocol,
        }[name]


@dataclass(frozen=True, slots=True)
class PriorAssignmentFact:
    TYPE: ClassVar[str] = "prior-assignment"
    prior: PriorAssignment

    def field_value(self, name: str):
        p = self.prior
        return {
            "case_number": p.case_number,
            "phase": p.phase,
            "body": p.body,
            "magistrate": p.magistrate,
            "distribution_id": p.distribution_id,
        }[name]


@dataclass(frozen=True, slots=True)
class RelatedAssignmentFact:
    TYPE: ClassVar[str] = "related-assignment"
    case_number: CaseNumber
    body: str
    magistrate: str

    def field_value(self, name: str):
        return {
            "case_number": self.case_number,
            "body": self.body,
            "magistrate": self.magistrate,
        }[name]


@dataclass(frozen=True, slots=True)
class CompetenceFact:
    TYPE: ClassVar[str] = "competence"
    procedural_class: str
    bodies: tuple[str, ...]

    def field_value(self, name: str):
        return {
            "procedural_class": self.procedural_class,
            "bodies": self.bodies,
        }[name]


@dataclass(frozen=True, slots=True)
class ImpedimentFact:
    TYPE: ClassVar[str] = "impediment"
    magistrate: str
    case_number: CaseNumber

    def field_value(self, name: str):
        return {
            "magistrate": self.magistrate,
            "case_number": self.case_number,
        }[name]


@dataclass(frozen=True, slots=True)
class DivergenceFact:
    TYPE: ClassVar[str] = "divergence"
    case_number: CaseNumber
    diverging_bodies: tuple[str, ...]

    def field_value(self, name: str):
        return {
            "case_number": self.case_number,
            "diverging_bodies": self.diverging_bodies,
        }[name]


Fact = Union[
    LawsuitFact,
    PriorAssignmentFact,
    RelatedAssignmentFact,
    CompetenceFact,
    ImpedimentFact,
    DivergenceFact,
]

FACT_FIELDS: dict[str, frozenset[str]] = {
    "lawsuit": frozenset(
        {"case_number", "phase", "procedural_class", "parties", "lawyers",
         "related_cases", "embargo", "protocol"}
    ),
    "prior-assignment": frozenset({"case_number", "phase", "body", "magistrate", "distribution_id"}),
    "related-assignment": frozenset({"case_number", "body", "magistrate"}),
    "competence": frozenset({"procedural_class", "bodies"}),
    "impediment": frozenset({"magistrate", "case_number"}),
    "divergence": frozenset({"case_number", "diverging_bodies"}),
}


# --------------------------------------------------------------------------
# Rule AST


@dataclass(frozen=True, slots=True)
class PathRef:
    """Dotted path; ``segments[0]`` is the reserved root ``lawsuit``."""

    segments: tuple[str, ...]

    def render(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True, slots=True)
class Constraint:
    lhs: str
    op: str  # "==", "!=", "in", "not-empty"
    rhs: int | str | PathRef | None = None

    def render(self) -> str:
        if self.op == "not-empty":
            return f"{self.lhs} not-empty"
        if isinstance(self.rhs, PathRef):
            rhs = self.rhs.render()
        elif isinstance(self.rhs, str):
            escaped = self.rhs.replace("\\", "\\\\").replace('"', '\\"')
            rhs = f'"{escaped}"'
        else:
            rhs = str(self.rhs)
        return f"{self.lhs} {self.op} {rhs}"


@dataclass(frozen=True, slots=True)
class Pattern:
    fact_type: str
    constraints: tuple[Constraint, ...] = ()
    label: str | None = None
    negated: bool = False

    def render(self) -> str:
        inner = ", ".join(c.render() for c in self.constraints)
        text = f"{self.fact_type}({inner})"
        if self.label:
            text = f"{self.label}: {text}"
        if self.negated:
            text = f"not {text}"
        return text


@dataclass(frozen=True, slots=True)
class AssignSameAs:
    NAME: ClassVar[str] = "assign-same-as"
    RULE_NUMBER: ClassVar[int] = 1
    source: str


@dataclass(frozen=True, slots=True)
class PreventionAssign:
    NAME: ClassVar[str] = "prevention-assign"
    RULE_NUMBER: ClassVar[int] = 2
    source: str


@dataclass(frozen=True, slots=True)
class EmbargoAssign:
    NAME: ClassVar[str] = "embargo-assign"
    RULE_NUMBER: ClassVar[int] = 3
    divergence: str


@dataclass(frozen=True, slots=True)
class OrdinaryDraw:
    NAME: ClassVar[str] = "ordinary-draw"
    RULE_NUMBER: ClassVar[int] = 4


Directive = Union[AssignSameAs, PreventionAssign, EmbargoAssign, OrdinaryDraw]

_DIRECTIVES: dict[str, tuple[type, int]] = {
    AssignSameAs.NAME: (AssignSameAs, 1),
    PreventionAssign.NAME: (PreventionAssign, 1),
    EmbargoAssign.NAME: (EmbargoAssign, 1),
    OrdinaryDraw.NAME: (OrdinaryDraw, 0),
}


def _directive_label(directive: Directive) -> str | None:
    if isinstance(directive, AssignSameAs):
        return directive.source
    if isinstance(directive, PreventionAssign):
        return directive.source
    if isinstance(directive, EmbargoAssign):
        return directive.divergence
    return None


@dataclass(frozen=True, slots=True)
class Rule:
    name: str
    salience: int
    patterns: tuple[Pattern, ...]
    directive: Directive

    def render(self) -> str:
        escaped = self.name.replace("\\", "\\\\").replace('"', '\\"')
        lines = [f'rule "{escaped}" salience {self.salience}', "when"]
        lines += [f"  {p.render()}" for p in self.patterns]
        arg = _directive_label(self.directive)
        lines += ["then", f"  {self.directive.NAME}({arg or ''})", "end"]
        return "\n".join(lines)


@dataclass(frozen=True, slots=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)


def render_rules(ruleset: RuleSet) -> str:
    """Render a RuleSet back to DSL text; re-parsing yields an equal RuleSet."""
    return "\n\n".join(r.render() for r in ruleset.rules) + "\n"


# --------------------------------------------------------------------------
# Lexer

_KEYWORDS = frozenset({"rule", "salience", "when", "then", "end", "not"})
_PUNCT = {"(": "LPAREN", ")": "RPAREN", ":": "COLON", ",": "COMMA", ".": "DOT"}


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # IDENT, STRING, INT, OP, LPAREN, RPAREN, COLON, COMMA, DOT, EOF
    text: str
    line: int
    column: int
    value: int | str | None = None


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_part(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i, n = 1, 1, 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch in _PUNCT:
            tokens.append(_Token(_PUNCT[ch], ch, line, start_col))
            i, col = i + 1, col + 1
            continue
        if ch in "=!":
            if i + 1 < n and source[i + 1] == "=":
                tokens.append(_Token("OP", ch + "=", line, start_col))
                i, col = i + 2, col + 2
                continue
            raise ParseError(f"stray {ch!r}", line, start_col, expected=(f"{ch}=",))
        if ch == '"':
            i += 1
            col += 1
            buf = []
            while i < n and source[i] != '"':
                if source[i] == "\n":
                    raise ParseError("unterminated string", line, start_col)
                if source[i] == "\\" and i + 1 < n:
                    buf.append(source[i + 1])
                    i, col = i + 2, col + 2
                else:
                    buf.append(source[i])
                    i, col = i + 1, col + 1
            if i >= n:
                raise ParseError("unterminated string", line, start_col)
            i, col = i + 1, col + 1
            text = "".join(buf)
            tokens.append(_Token("STRING", text, line, start_col, value=text))
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and source[j].isdigit():
                j += 1
            text = source[i:j]
            tokens.append(_Token("INT", text, line, start_col, value=int(text)))
            col += j - i
            i = j
            continue
        if _is_ident_start(ch):
            j = i + 1
            while j < n:
                if _is_ident_part(source[j]):
                    j += 1
                elif source[j] == "-" and j + 1 < n and _is_ident_part(source[j + 1]):
                    j += 2
                else:
                    break
            text = source[i:j]
            tokens.append(_Token("IDENT", text, line, start_col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# --------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        tok = self.cur
        self.pos += 1
        return tok

    def _expect(self, kind: str, *texts: str) -> _Token:
        tok = self.cur
        if tok.kind != kind or (texts and tok.text not in texts):
            want = texts or (kind,)
            raise ParseError(
                f"unexpected {tok.kind} {tok.text!r}", tok.line, tok.column, expected=tuple(want)
            )
        return self._advance()

    def _expect_keyword(self, word: str) -> _Token:
        return self._expect("IDENT", word)

    def parse_ruleset(self) -> RuleSet:
        rules: list[Rule] = []
        if self.cur.kind == "EOF":
            raise ParseError(
                "empty input: at least one rule is required",
                self.cur.line,
                self.cur.column,
                expected=("rule",),
            )
        while self.cur.kind != "EOF":
            rules.append(self.parse_rule())
        names = [r.name for r in rules]
        for name in names:
            if names.count(name) > 1:
                raise ParseError(f"duplicate rule name {name!r}", 1, 1)
        return RuleSet(tuple(rules))

    def parse_rule(self) -> Rule:
        self._expect_keyword("rule")
        name = self._expect("STRING").value
        self._expect_keyword("salience")
        salience = self._expect("INT").value
        self._expect_keyword("when")
        patterns: list[Pattern] = []
        while not (self.cur.kind == "IDENT" and self.cur.text == "then"):
            patterns.append(self.parse_pattern())
        if not patterns:
            tok = self.cur
            raise ParseError("rule needs at least one pattern", tok.line, tok.column)
        self._expect_keyword("then")
        directive = self.parse_directive(patterns)
        self._expect_keyword("end")
        self._check_lawsuit_refs(patterns)
        return Rule(str(name), int(salience), tuple(patterns), directive)

    def parse_pattern(self) -> Pattern:
        tok = self.cur
        if tok.kind == "IDENT" and tok.text == "not":
            self._advance()
            inner = self.parse_pattern()
            if inner.negated:
                raise ParseError("doubly negated pattern", tok.line, tok.column)
            return Pattern(inner.fact_type, inner.constraints, inner.label, negated=True)
        first = self._expect("IDENT")
        label: str | None = None
        type_tok = first
        if self.cur.kind == "COLON":
            self._advance()
            label = first.text
            type_tok = self._expect("IDENT")
        fact_type = type_tok.text
        if fact_type not in FACT_FIELDS:
            raise UnknownFactType(
                f"unknown fact type {fact_type!r}", type_tok.line, type_tok.column,
                expected=tuple(sorted(FACT_FIELDS)),
            )
        self._expect("LPAREN")
        constraints: list[Constraint] = []
        if self.cur.kind != "RPAREN":
            constraints.append(self.parse_constraint(fact_type))
            while self.cur.kind == "COMMA":
                self._advance()
                constraints.append(self.parse_constraint(fact_type))
        self._expect("RPAREN")
        return Pattern(fact_type, tuple(constraints), label)

    def parse_constraint(self, fact_type: str) -> Constraint:
        lhs_tok = self._expect("IDENT")
        if lhs_tok.text not in FACT_FIELDS[fact_type]:
            raise ParseError(
                f"fact type {fact_type!r} has no field {lhs_tok.text!r}",
                lhs_tok.line,
                lhs_tok.column,
                expected=tuple(sorted(FACT_FIELDS[fact_type])),
            )
        op_tok = self.cur
        if op_tok.kind == "OP" and op_tok.text in ("==", "!="):
            self._advance()
            return Constraint(lhs_tok.text, op_tok.text, self.parse_operand())
        if op_tok.kind == "IDENT" and op_tok.text == "in":
            self._advance()
            return Constraint(lhs_tok.text, "in", self.parse_operand())
        if op_tok.kind == "IDENT" and op_tok.text == "not-empty":
            self._advance()
            return Constraint(lhs_tok.text, "not-empty")
        raise ParseError(
            f"unexpected {op_tok.kind} {op_tok.text!r}",
            op_tok.line,
            op_tok.column,
            expected=("==", "!=", "in", "not-empty"),
        )

    def parse_operand(self) -> int | str | PathRef:
        tok = self.cur
        if tok.kind == "INT":
            self._advance()
            return int(tok.value)
        if tok.kind == "STRING":
            self._advance()
            return str(tok.value)
        if tok.kind == "IDENT":
            self._advance()
            segments = [tok.text]
            while self.cur.kind == "DOT":
                self._advance()
                segments.append(self._expect("IDENT").text)
            if segments[0] != "lawsuit":
                raise ParseError(
                    f"unknown path root {segments[0]!r}; only 'lawsuit' may be referenced",
                    tok.line,
                    tok.column,
                    expected=("lawsuit",),
                )
            if len(segments) != 2 or segments[1] not in FACT_FIELDS["lawsuit"]:
                raise ParseError(
                    f"unknown lawsuit path {'.'.join(segments)!r}",
                    tok.line,
                    tok.column,
                    expected=tuple(sorted(f"lawsuit.{f}" for f in FACT_FIELDS["lawsuit"])),
                )
            return PathRef(tuple(segments))
        raise ParseError(
            f"unexpected {tok.kind} {tok.text!r}",
            tok.line,
            tok.column,
            expected=("INT", "STRING", "lawsuit.<field>"),
        )

    def parse_directive(self, patterns: list[Pattern]) -> Directive:
        name_tok = self._expect("IDENT")
        entry = _DIRECTIVES.get(name_tok.text)
        if entry is None:
            raise UnknownDirective(
                f"unknown directive {name_tok.text!r}",
                name_tok.line,
                name_tok.column,
                expected=tuple(sorted(_DIRECTIVES)),
            )
        cls, arity = entry
        self._expect("LPAREN")
        args: list[str] = []
        if self.cur.kind == "IDENT":
            args.append(self._advance().text)
        self._expect("RPAREN")
        if len(args) != arity:
            raise ParseError(
                f"directive {name_tok.text!r} takes {arity} argument(s), got {len(args)}",
                name_tok.line,
                name_tok.column,
            )
        if arity == 0:
            return cls()
        label = args[0]
        positive_labels = {p.label for p in patterns if p.label and not p.negated}
        if label not in positive_labels:
            raise UnboundLabel(
                f"directive references label {label!r} bound by no positive pattern",
                name_tok.line,
                name_tok.column,
                expected=tuple(sorted(l for l in positive_labels)),
            )
        return cls(label)

    def _check_lawsuit_refs(self, patterns: list[Pattern]) -> None:
        lawsuit_bound = False
        for pat in patterns:
            uses = any(
                isinstance(c.rhs, PathRef) for c in pat.constraints
            )
            own_lawsuit = pat.fact_type == "lawsuit" and not pat.negated
            if uses and not (lawsuit_bound or own_lawsuit):
                raise UnboundLabel(
                    "constraint references 'lawsuit' before any positive lawsuit pattern",
                    1,
                    1,
                )
            if own_lawsuit:
                lawsuit_bound = True


def parse_rules(source: str) -> RuleSet:
    """Parse DSL text into a RuleSet, rules in declaration order."""
    return _Parser(source).parse_ruleset()


def load_default_rules() -> RuleSet:
    """The shipped four-rule file (dependency, prevention, embargo, ordinary)."""
    from importlib.resources import files

    text = files("casealot.rules").joinpath("default.rules").read_text("utf-8")
    return parse_rules(text)


# --------------------------------------------------------------------------
# Working memory and matching


@dataclass(frozen=True, slots=True)
class WorkingMemory:
    """Insertion-ordered, structurally deduplicated fact store."""

    facts: tuple[Fact, ...] = ()

    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self) -> Iterator[Fact]:
        return iter(self.facts)

    def __contains__(self, fact: Fact) -> bool:
        return fact in self.facts


def assert_fact(wm: WorkingMemory, fact: Fact) -> WorkingMemory:
    """Functional insert; asserting an already-present fact is a no-op."""
    if fact in wm.facts:
        return wm
    return WorkingMemory(wm.facts + (fact,))


@dataclass(frozen=True)
class Activation:
    """One satisfied rule instance with its conflict-resolution key."""

    rule_name: str
    salience: int
    directive: Directive
    bindings: Mapping[str, Fact]
    order_key: tuple = field(repr=False, default=())


def _constraint_holds(fact: Fact, constraint: Constraint, lawsuit_fact: LawsuitFact | None) -> bool:
    lhs = fact.field_value(constraint.lhs)
    if constraint.op == "not-empty":
        return bool(lhs)
    rhs = constraint.rhs
    if isinstance(rhs, PathRef):
        if lawsuit_fact is None:
            return False
        rhs = lawsuit_fact.field_value(rhs.segments[1])
    if constraint.op == "==":
        return lhs == rhs
    if constraint.op == "!=":
        return lhs != rhs
    if constraint.op == "in":
        if not isinstance(rhs, (frozenset, set, tuple, list)):
            raise TypeError(
                f"'in' needs a collection on the right, got {type(rhs).__name__}"
            )
        return lhs in rhs
    raise AssertionError(constraint.op)


def _pattern_admits(fact: Fact, pattern: Pattern, lawsuit_fact: LawsuitFact | None) -> bool:
    if fact.TYPE != pattern.fact_type:
        return False
    anchor = lawsuit_fact
    if anchor is None and isinstance(fact, LawsuitFact):
        anchor = fact
    return all(_constraint_holds(fact, c, anchor) for c in pattern.constraints)


def match(wm: WorkingMemory, ruleset: RuleSet) -> list[Activation]:
    """All satisfied activations, sorted by (salience desc, declaration order,
    assertion order of the bound facts)."""
    activations: list[Activation] = []
    facts = wm.facts
    for decl_index, rule in enumerate(ruleset.rules):
        patterns = rule.patterns

        def descend(pi: int, env: dict[str, Fact], lawsuit_fact: LawsuitFact | None, order: tuple[int, ...]):
            if pi == len(patterns):
                activations.append(
                    Activation(
                        rule_name=rule.name,
                        salience=rule.salience,
                        directive=rule.directive,
                        bindings=dict(env),
                        order_key=(-rule.salience, decl_index, order),
                    )
                )
                return
            pat = patterns[pi]
            if pat.negated:
                if any(_pattern_admits(f, pat, lawsuit_fact) for f in facts):
                    return
                descend(pi + 1, env, lawsuit_fact, order)
                return
            for idx, fact in enumerate(facts):
                if not _pattern_admits(fact, pat, lawsuit_fact):
                    continue
                next_env = env
                if pat.label:
                    next_env = {**env, pat.label: fact}
                next_lawsuit = lawsuit_fact
                if next_lawsuit is None and isinstance(fact, LawsuitFact):
                    next_lawsuit = fact
                descend(pi + 1, next_env, next_lawsuit, order + (idx,))

        descend(0, {}, None, ())
    activations.sort(key=lambda a: a.order_key)
    return activations


def fire(wm: WorkingMemory, ruleset: RuleSet) -> tuple[str, Directive, Mapping[str, Fact]]:
    """Head of the sorted activation list; the engine never executes directives.

    Raises NoRuleMatched when nothing activates.
    """
    activations = match(wm, ruleset)
    if not activations:
        raise NoRuleMatched("no rule matched the working memory")
    head = activations[0]
    return head.rule_name, head.directive, head.bindings
