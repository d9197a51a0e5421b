"""Independent oracles used by unit and acceptance tests.

These deliberately re-derive expected results from first principles
(exhaustive enumeration, analytic formulas, step-by-step generator runs)
without calling the code paths they check.
"""

from __future__ import annotations

import itertools

from casealot.rulekit import Constraint, LawsuitFact, Pattern, PathRef, RuleSet, WorkingMemory

MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------
# Brute-force rule matcher: tests every rule against every combination of
# facts (itertools.product over the working memory) and sorts by the
# documented conflict-resolution key.


def _eval_constraint(fact, c: Constraint, lawsuit_fact) -> bool:
    left = fact.field_value(c.lhs)
    if c.op == "not-empty":
        return bool(left)
    right = c.rhs
    if isinstance(right, PathRef):
        if lawsuit_fact is None:
            return False
        right = lawsuit_fact.field_value(right.segments[1])
    if c.op == "==":
        return left == right
    if c.op == "!=":
        return left != right
    if c.op == "in":
        return left in right
    raise AssertionError(c.op)


def _admits(fact, pattern: Pattern, lawsuit_fact) -> bool:
    if fact.TYPE != pattern.fact_type:
        return False
    if lawsuit_fact is None and isinstance(fact, LawsuitFact):
        lawsuit_fact = fact
    return all(_eval_constraint(fact, c, lawsuit_fact) for c in pattern.constraints)


def brute_force_activations(wm: WorkingMemory, ruleset: RuleSet):
    """Every (rule, binding) pair that satisfies all patterns, sorted by
    (salience desc, declaration order, fact assertion order)."""
    facts = list(wm.facts)
    results = []
    for decl_index, rule in enumerate(ruleset.rules):
        positives = [p for p in rule.patterns if not p.negated]
        for combo in itertools.product(range(len(facts)), repeat=len(positives)):
            lawsuit_fact = None
            for pat, idx in zip(positives, combo):
                if pat.fact_type == "lawsuit" and lawsuit_fact is None:
                    lawsuit_fact = facts[idx]
            ok = True
            bound_lawsuit = None
            for pat, idx in zip(positives, combo):
                if not _admits(facts[idx], pat, bound_lawsuit):
                    ok = False
                    break
                if bound_lawsuit is None and isinstance(facts[idx], LawsuitFact):
                    bound_lawsuit = facts[idx]
            if not ok:
                continue
            negation_violated = False
            for pat in rule.patterns:
                if pat.negated and any(_admits(f, pat, bound_lawsuit) for f in facts):
                    negation_violated = True
                    break
            if negation_violated:
                continue
            bindings = {
                pat.label: facts[idx]
                for pat, idx in zip(positives, combo)
                if pat.label
            }
            results.append(
                (
                    (-rule.salience, decl_index, combo),
                    rule.name,
                    rule.directive,
                    bindings,
                )
            )
    results.sort(key=lambda item: item[0])
    return results


def brute_force_fire(wm: WorkingMemory, ruleset: RuleSet):
    """Head of the brute-force activation list, or None when nothing matches."""
    acts = brute_force_activations(wm, ruleset)
    if not acts:
        return None
    _, name, directive, bindings = acts[0]
    return name, directive, bindings


# --------------------------------------------------------------------------
# Reference splitmix64 generator and rejection-sampled bounded pick,
# written out step by step.


def splitmix64_next(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z = z ^ (z >> 31)
    return state, z


def splitmix64_mix(value: int) -> int:
    """The splitmix64 output finalizer applied to a raw 64-bit value."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def reference_pick_below(state: int, n: int) -> tuple[int, int]:
    """Unbiased pick in [0, n) by rejection-sampled modulo; returns
    (new generator state, pick)."""
    assert n > 0
    limit = ((1 << 64) // n) * n
    while True:
        state, value = splitmix64_next(state)
        if value < limit:
            return state, value % n


def reference_two_stage_draw(seed: int, bodies: list[tuple[str, list[str]]]):
    """Run the documented two-stage drawing procedure step by step:
    lexicographically sorted candidates, body pick then member pick."""
    candidates = sorted(
        ((body, sorted(members)) for body, members in bodies if members),
        key=lambda item: item[0],
    )
    assert candidates, "no body with eligible members"
    state = seed
    state, body_idx = reference_pick_below(state, len(candidates))
    body, members = candidates[body_idx]
    state, member_idx = reference_pick_below(state, len(members))
    picks = [(len(candidates), body_idx), (len(members), member_idx)]
    return body, members[member_idx], picks


def two_stage_expectation(bodies: dict[str, list[str]]) -> dict[str, float]:
    """Analytic per-magistrate probability of the two-stage draw:
    sum over bodies containing m of (1/B) * (1/|body|)."""
    n_bodies = len(bodies)
    expectation: dict[str, float] = {}
    for members in bodies.values():
        for m in members:
            expectation[m] = expectation.get(m, 0.0) + (1.0 / n_bodies) * (1.0 / len(members))
    return expectation
