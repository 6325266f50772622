"""
Formula AST for backdoor specifications
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Tuple

from .predicates import FormulaError, Predicate


class IntervalError(FormulaError):
    """Malformed interval or interval beyond the trajectory horizon"""


class NodeKind(enum.Enum):
    PREDICATE = 'predicate'
    TRUE = 'true'
    FALSE = 'false'
    NOT = 'not'
    AND = 'and'
    OR = 'or'
    IMPLIES = 'implies'
    NEXT = 'next'
    EVENTUALLY = 'eventually'
    GLOBALLY = 'globally'
    UNTIL = 'until'
    REACH = 'reach'
    AVOID = 'avoid'
    STAY = 'stay'


LEAF_KINDS = {NodeKind.PREDICATE, NodeKind.TRUE, NodeKind.FALSE}
UNARY_KINDS = {NodeKind.NOT, NodeKind.NEXT, NodeKind.EVENTUALLY, NodeKind.GLOBALLY}
BINARY_KINDS = {NodeKind.AND, NodeKind.OR, NodeKind.IMPLIES, NodeKind.UNTIL}
INTERVAL_KINDS = {NodeKind.EVENTUALLY, NodeKind.GLOBALLY, NodeKind.UNTIL,
                  NodeKind.REACH, NodeKind.AVOID, NodeKind.STAY}
# reach/avoid/stay take their predicate directly
REGION_KINDS = {NodeKind.REACH, NodeKind.AVOID, NodeKind.STAY}


@dataclass(frozen=True)
class Formula:
    kind: NodeKind
    children: Tuple['Formula', ...] = field(default_factory=tuple)
    predicate: Optional[Predicate] = None
    a: Optional[int] = None
    b: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'children', tuple(self.children))
        n = len(self.children)
        if self.kind in LEAF_KINDS or self.kind in REGION_KINDS:
            expected = 0
        elif self.kind in UNARY_KINDS:
            expected = 1
        else:
            expected = 2
        if n != expected:
            raise FormulaError(f"{self.kind.value} takes {expected} children, got {n}")

        needs_predicate = self.kind is NodeKind.PREDICATE or self.kind in REGION_KINDS
        if needs_predicate and self.predicate is None:
            raise FormulaError(f"{self.kind.value} requires a predicate")
        if not needs_predicate and self.predicate is not None:
            raise FormulaError(f"{self.kind.value} does not take a predicate")

        if self.kind in INTERVAL_KINDS:
            if self.a is None or self.b is None:
                raise IntervalError(f"{self.kind.value} requires an interval")
            if self.a < 0 or self.b < self.a:
                raise IntervalError(f"malformed interval [{self.a}, {self.b}] for {self.kind.value}")
        elif self.a is not None or self.b is not None:
            raise IntervalError(f"{self.kind.value} takes no interval")

    def __and__(self, other: 'Formula') -> 'Formula':
        return Formula(NodeKind.AND, (self, other))

    def __or__(self, other: 'Formula') -> 'Formula':
        return Formula(NodeKind.OR, (self, other))

    def __invert__(self) -> 'Formula':
        return Formula(NodeKind.NOT, (self,))

    def __str__(self) -> str:
        from .spec_parser import format_formula
        return format_formula(self)

    def walk(self) -> Iterator['Formula']:
        """Pre-order traversal"""
        yield self
        for child in self.children:
            yield from child.walk()

    def predicates(self) -> List[Predicate]:
        return [node.predicate for node in self.walk() if node.predicate is not None]

    def is_instantiated(self) -> bool:
        return not any(p.is_template for p in self.predicates())

    def max_time(self) -> int:
        """Last time index the formula reads when evaluated at t = 0"""
        if self.kind in LEAF_KINDS:
            return 0
        if self.kind in REGION_KINDS:
            return self.b
        if self.kind is NodeKind.NEXT:
            return 1 + self.children[0].max_time()
        if self.kind in (NodeKind.EVENTUALLY, NodeKind.GLOBALLY):
            return self.b + self.children[0].max_time()
        if self.kind is NodeKind.UNTIL:
            return self.b + max(c.max_time() for c in self.children)
        return max(c.max_time() for c in self.children)

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)


def predicate(p: Predicate) -> Formula:
    return Formula(NodeKind.PREDICATE, predicate=p)


def true() -> Formula:
    return Formula(NodeKind.TRUE)


def false() -> Formula:
    return Formula(NodeKind.FALSE)


def reach(t1: int, t2: int, p: Predicate) -> Formula:
    return Formula(NodeKind.REACH, predicate=p, a=t1, b=t2)


def avoid(t1: int, t2: int, p: Predicate) -> Formula:
    return Formula(NodeKind.AVOID, predicate=p, a=t1, b=t2)


def stay(t1: int, t2: int, p: Predicate) -> Formula:
    return Formula(NodeKind.STAY, predicate=p, a=t1, b=t2)


def eventually(a: int, b: int, phi: Formula) -> Formula:
    return Formula(NodeKind.EVENTUALLY, (phi,), a=a, b=b)


def globally(a: int, b: int, phi: Formula) -> Formula:
    return Formula(NodeKind.GLOBALLY, (phi,), a=a, b=b)


def until(phi: Formula, a: int, b: int, psi: Formula) -> Formula:
    return Formula(NodeKind.UNTIL, (phi, psi), a=a, b=b)


def next_(phi: Formula) -> Formula:
    return Formula(NodeKind.NEXT, (phi,))


def implies(phi: Formula, psi: Formula) -> Formula:
    return Formula(NodeKind.IMPLIES, (phi, psi))


def conjunction(*formulas: Formula) -> Formula:
    """Left-nested AND of one or more formulas"""
    if not formulas:
        raise FormulaError("conjunction of zero formulas")
    out = formulas[0]
    for f in formulas[1:]:
        out = out & f
    return out


def disjunction(*formulas: Formula) -> Formula:
    if not formulas:
        raise FormulaError("disjunction of zero formulas")
    out = formulas[0]
    for f in formulas[1:]:
        out = out | f
    return out


def map_predicates(formula: Formula, fn: Callable[[Predicate], Predicate]) -> Formula:
    """Rebuild the tree with every predicate replaced by fn(predicate)"""
    children = tuple(map_predicates(c, fn) for c in formula.children)
    pred = fn(formula.predicate) if formula.predicate is not None else None
    return Formula(formula.kind, children, pred, formula.a, formula.b)


def smoothing_gap_bound(formula: Formula, epsilon: float) -> float:
    """Upper bound on |smoothed - definitional| robustness.

    Each smoothed min/max adds at most ln(fan-in)/epsilon on top of the gap
    already carried by its operands.
    """
    def gap(node: Formula) -> float:
        kind = node.kind
        if kind in LEAF_KINDS:
            return 0.0
        if kind in REGION_KINDS:
            return math.log(node.b - node.a + 1) / epsilon
        inner = max((gap(c) for c in node.children), default=0.0)
        if kind in (NodeKind.NOT, NodeKind.NEXT):
            return inner
        if kind in (NodeKind.AND, NodeKind.OR, NodeKind.IMPLIES):
            return inner + math.log(2) / epsilon
        if kind in (NodeKind.EVENTUALLY, NodeKind.GLOBALLY):
            return inner + math.log(node.b - node.a + 1) / epsilon
        # until: inner min over at most (b - a) states, pair min, outer max over b - a + 1 terms
        width = node.b - node.a + 1
        inner_min = math.log(max(width - 1, 1)) / epsilon
        return inner + inner_min + math.log(2) / epsilon + math.log(width) / epsilon

    return gap(formula)
