"""
Concrete syntax for backdoor specifications: a PEG grammar (arpeggio) and the
matching pretty-printer.

    stay<7,20, region(P)> & avoid<0,31, obs()>
    (reach<1,9,A> & reach<1,9,B>) | (reach<1,9,C> & reach<1,9,D>)
    G[0,5] (ball(1, 1, 0.5) -> F[1,3] !box(0, 0, 2, 2))
"""

import logging
import threading
from typing import Dict, Mapping, Optional

from arpeggio import EOF, NoMatch, Optional as Opt, ParserPython, PTNodeVisitor, ZeroOrMore
from arpeggio import RegExMatch as _
from arpeggio import visit_parse_tree

from .formula import Formula, IntervalError, NodeKind
from .predicates import Around, Ball, Behind, Box, FormulaError, Obstacles, Predicate

logger = logging.getLogger('BackdoorBench.Parser')

KEYWORDS = ('true', 'false', 'reach', 'avoid', 'stay', 'ball', 'box', 'obs',
            'around', 'behind', 'region', 'G', 'F', 'X', 'U')


class FormulaSyntaxError(FormulaError):
    """Text does not conform to the grammar"""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnknownPredicateError(FormulaError):
    """Named predicate is missing from the registry"""


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------

def number():
    return _(r'[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?')


def integer():
    return _(r'\d+')


def name():
    return _(r'(?!(%s)\b)[A-Za-z_][A-Za-z0-9_]*' % '|'.join(KEYWORDS))


def interval():
    return '[', integer, ',', integer, ']'


def ball():
    return _(r'ball\b'), '(', number, ',', number, ',', number, ')'


def box():
    return _(r'box\b'), '(', number, ',', number, ',', number, ',', number, ')'


def obs():
    return _(r'obs\b'), '(', ')'


def around():
    return _(r'around\b'), '(', number, ',', number, ',', number, ')'


def behind():
    return _(r'behind\b'), '(', integer, ',', number, ')'


def region():
    return _(r'region\b'), '(', name, ')'


def predicate():
    return [ball, box, obs, around, behind, region, name]


def region_op():
    return _(r'(reach|avoid|stay)\b')


def temporal_op():
    return region_op, '<', integer, ',', integer, ',', predicate, '>'


def constant():
    return _(r'(true|false)\b')


def group():
    return '(', implication, ')'


def primary():
    return [group, temporal_op, constant, predicate]


def negation():
    return '!', unary


def next_op():
    return _(r'X\b'), unary


def globally_op():
    return _(r'G\b'), interval, unary


def eventually_op():
    return _(r'F\b'), interval, unary


def unary():
    return [negation, next_op, globally_op, eventually_op, primary]


def until():
    return unary, Opt(_(r'U\b'), interval, unary)


def conjunction():
    return until, ZeroOrMore('&', until)


def disjunction():
    return conjunction, ZeroOrMore('|', conjunction)


def implication():
    return disjunction, Opt('->', implication)


def spec():
    return implication, EOF


_PARSER = None
_PARSER_LOCK = threading.Lock()


def _get_parser() -> ParserPython:
    global _PARSER
    if _PARSER is None:
        _PARSER = ParserPython(spec, ignore_case=False)
    return _PARSER


# ---------------------------------------------------------------------------
# Visitor
# ---------------------------------------------------------------------------

class FormulaBuilder(PTNodeVisitor):
    """Builds Formula nodes; child results are looked up by rule name"""

    def __init__(self, parser: ParserPython, registry: Mapping[str, Predicate]):
        super().__init__()
        self.parser = parser
        self.registry = registry

    def _fail(self, error_cls, message: str, node):
        line, col = self.parser.pos_to_linecol(node.position)
        raise error_cls(f"{message} at line {line}, column {col}")

    def visit_number(self, node, children):
        return float(node.value)

    def visit_integer(self, node, children):
        return int(node.value)

    def visit_name(self, node, children):
        return str(node.value)

    def visit_interval(self, node, children):
        a, b = children.results['integer']
        if b < a:
            self._fail(IntervalError, f"malformed interval [{a}, {b}]", node)
        return a, b

    def _shape(self, cls, node, *args):
        try:
            return cls(*args)
        except ValueError as e:
            self._fail(FormulaError, str(e), node)

    def visit_ball(self, node, children):
        return self._shape(Ball, node, *children.results['number'])

    def visit_box(self, node, children):
        return self._shape(Box, node, *children.results['number'])

    def visit_obs(self, node, children):
        return Obstacles()

    def visit_around(self, node, children):
        return self._shape(Around, node, *children.results['number'])

    def visit_behind(self, node, children):
        obj = children.results['integer'][0]
        r = children.results['number'][0]
        return self._shape(Behind, node, obj, r)

    def _lookup(self, key: str, node) -> Predicate:
        if key not in self.registry:
            self._fail(UnknownPredicateError, f"unknown predicate '{key}'", node)
        return self.registry[key]

    def visit_region(self, node, children):
        return self._lookup(children.results['name'][0], node)

    def visit_predicate(self, node, children):
        result = children[0]
        if isinstance(result, str):
            return self._lookup(result, node)
        return result

    def visit_region_op(self, node, children):
        return str(node.value)

    def visit_temporal_op(self, node, children):
        op = children.results['region_op'][0]
        a, b = children.results['integer']
        if b < a:
            self._fail(IntervalError, f"malformed interval <{a}, {b}>", node)
        pred = children.results['predicate'][0]
        return Formula(NodeKind(op), predicate=pred, a=a, b=b)

    def visit_constant(self, node, children):
        return Formula(NodeKind.TRUE if node.value == 'true' else NodeKind.FALSE)

    def visit_group(self, node, children):
        return children.results['implication'][0]

    def visit_primary(self, node, children):
        result = children[0]
        if isinstance(result, Predicate):
            return Formula(NodeKind.PREDICATE, predicate=result)
        return result

    def visit_negation(self, node, children):
        return Formula(NodeKind.NOT, (children.results['unary'][0],))

    def visit_next_op(self, node, children):
        return Formula(NodeKind.NEXT, (children.results['unary'][0],))

    def visit_globally_op(self, node, children):
        a, b = children.results['interval'][0]
        return Formula(NodeKind.GLOBALLY, (children.results['unary'][0],), a=a, b=b)

    def visit_eventually_op(self, node, children):
        a, b = children.results['interval'][0]
        return Formula(NodeKind.EVENTUALLY, (children.results['unary'][0],), a=a, b=b)

    def visit_unary(self, node, children):
        return children[0]

    def visit_until(self, node, children):
        operands = children.results['unary']
        if len(operands) == 1:
            return operands[0]
        a, b = children.results['interval'][0]
        return Formula(NodeKind.UNTIL, (operands[0], operands[1]), a=a, b=b)

    def visit_conjunction(self, node, children):
        operands = children.results['until']
        out = operands[0]
        for rhs in operands[1:]:
            out = Formula(NodeKind.AND, (out, rhs))
        return out

    def visit_disjunction(self, node, children):
        operands = children.results['conjunction']
        out = operands[0]
        for rhs in operands[1:]:
            out = Formula(NodeKind.OR, (out, rhs))
        return out

    def visit_implication(self, node, children):
        lhs = children.results['disjunction'][0]
        rhs = children.results.get('implication')
        if not rhs:
            return lhs
        return Formula(NodeKind.IMPLIES, (lhs, rhs[0]))

    def visit_spec(self, node, children):
        return children.results['implication'][0]


def parse_formula(text: str, registry: Optional[Mapping[str, Predicate]] = None) -> Formula:
    """Parse specification text into a Formula; templates stay uninstantiated"""
    registry = registry or {}
    with _PARSER_LOCK:
        parser = _get_parser()
        try:
            tree = parser.parse(text)
        except NoMatch as e:
            line, col = parser.pos_to_linecol(e.position)
            raise FormulaSyntaxError(f"unexpected input {text[e.position:e.position + 10]!r}",
                                     line, col) from None
        result = visit_parse_tree(tree, FormulaBuilder(parser, registry))
    logger.debug(f"Parsed formula: {format_formula(result)}")
    return result


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_BINARY_SYMBOLS = {NodeKind.AND: '&', NodeKind.OR: '|', NodeKind.IMPLIES: '->'}


def format_formula(f: Formula) -> str:
    """Render a formula in concrete syntax; composites are fully parenthesised"""
    kind = f.kind
    if kind is NodeKind.PREDICATE:
        return f.predicate.to_text()
    if kind is NodeKind.TRUE:
        return 'true'
    if kind is NodeKind.FALSE:
        return 'false'
    if kind in (NodeKind.REACH, NodeKind.AVOID, NodeKind.STAY):
        return f"{kind.value}<{f.a},{f.b},{f.predicate.to_text()}>"
    if kind is NodeKind.NOT:
        return f"!({format_formula(f.children[0])})"
    if kind is NodeKind.NEXT:
        return f"X({format_formula(f.children[0])})"
    if kind is NodeKind.EVENTUALLY:
        return f"F[{f.a},{f.b}]({format_formula(f.children[0])})"
    if kind is NodeKind.GLOBALLY:
        return f"G[{f.a},{f.b}]({format_formula(f.children[0])})"
    if kind is NodeKind.UNTIL:
        lhs, rhs = (format_formula(c) for c in f.children)
        return f"(({lhs}) U[{f.a},{f.b}] ({rhs}))"
    lhs, rhs = (format_formula(c) for c in f.children)
    return f"({lhs} {_BINARY_SYMBOLS[kind]} {rhs})"


def registry_from_config(regions: Dict[str, list]) -> Dict[str, Predicate]:
    """Named regions from config: [cx, cy, r] is a ball, [x0, y0, x1, y1] a box"""
    out: Dict[str, Predicate] = {}
    for key, params in (regions or {}).items():
        values = [float(v) for v in params]
        if len(values) == 3:
            out[key] = Ball(*values)
        elif len(values) == 4:
            out[key] = Box(*values)
        else:
            raise FormulaError(f"region '{key}' needs 3 (ball) or 4 (box) numbers, got {len(values)}")
    return out
