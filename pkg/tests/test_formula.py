import math

import numpy as np
import pytest
import torch

from backdoorbench.formula import (Formula, IntervalError, NodeKind, avoid, conjunction, disjunction,
                                   eventually, globally, implies, map_predicates, next_, predicate, reach,
                                   smoothing_gap_bound, stay, true, until)
from backdoorbench.predicates import Around, Ball, Box, FormulaError, Obstacles, TemplateError, safe_norm


def test_ball_value():
    ball = Ball(1.0, 1.0, 0.5)
    assert ball((1.0, 1.0)) == pytest.approx(-0.5)
    assert ball((4.0, 5.0)) == pytest.approx(4.5)
    with pytest.raises(ValueError):
        Ball(0.0, 0.0, -1.0)


def test_box_is_signed_distance():
    box = Box(0.0, 0.0, 2.0, 4.0)
    assert box((1.0, 2.0)) == pytest.approx(-1.0)
    assert box((3.0, 2.0)) == pytest.approx(1.0)
    assert box((5.0, 8.0)) == pytest.approx(5.0)
    assert box((2.0, 1.0)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        Box(1.0, 0.0, 0.0, 1.0)


def test_predicates_evaluate_batched_states():
    states = torch.zeros(3, 5, 2, dtype=torch.float64)
    assert Ball(0.0, 0.0, 1.0).value(states).shape == (3, 5)
    assert Box(0.0, 0.0, 1.0, 1.0).value(states).shape == (3, 5)


def test_templates_refuse_evaluation():
    with pytest.raises(TemplateError):
        Obstacles()((0.0, 0.0))
    with pytest.raises(TemplateError):
        Around(1.0, 1.0)((0.0, 0.0))


def test_safe_norm_has_zero_gradient_at_origin():
    v = torch.zeros(2, dtype=torch.float64, requires_grad=True)
    safe_norm(v).backward()
    assert torch.all(v.grad == 0)


def test_formula_arity_and_interval_checks():
    p = Ball(0.0, 0.0, 1.0)
    with pytest.raises(IntervalError):
        reach(3, 1, p)
    with pytest.raises(IntervalError):
        reach(-1, 2, p)
    with pytest.raises(FormulaError):
        Formula(NodeKind.NOT, (), predicate=p)
    with pytest.raises(FormulaError):
        Formula(NodeKind.REACH, a=0, b=1)
    with pytest.raises(IntervalError):
        Formula(NodeKind.AND, (true(), true()), a=0, b=1)


def test_operator_sugar():
    a, b = reach(0, 1, Ball(0, 0, 1)), avoid(0, 1, Ball(1, 1, 1))
    assert (a & b).kind is NodeKind.AND
    assert (a | b).kind is NodeKind.OR
    assert (~a).kind is NodeKind.NOT
    assert conjunction(a, b, a).children[0].kind is NodeKind.AND
    assert disjunction(a).kind is NodeKind.REACH
    with pytest.raises(FormulaError):
        conjunction()


def test_max_time():
    p = Ball(0, 0, 1)
    assert stay(7, 20, p).max_time() == 20
    assert globally(0, 5, eventually(1, 3, predicate(p))).max_time() == 8
    assert next_(reach(0, 2, p)).max_time() == 3
    assert until(predicate(p), 1, 4, reach(0, 2, p)).max_time() == 6
    assert (reach(0, 2, p) & avoid(0, 9, p)).max_time() == 9


def test_walk_and_predicates():
    p, q = Ball(0, 0, 1), Ball(1, 1, 1)
    f = implies(predicate(p), eventually(0, 2, predicate(q)))
    assert [n.kind for n in f.walk()] == [NodeKind.IMPLIES, NodeKind.PREDICATE, NodeKind.EVENTUALLY,
                                          NodeKind.PREDICATE]
    assert f.predicates() == [p, q]
    assert f.depth() == 3
    assert f.is_instantiated()
    assert not (f & avoid(0, 2, Obstacles())).is_instantiated()


def test_map_predicates_rebuilds_tree():
    f = reach(0, 2, Ball(0, 0, 1)) & stay(1, 3, Ball(2, 2, 1))
    g = map_predicates(f, lambda p: Ball(p.cx + 1, p.cy, p.r))
    assert [p.cx for p in g.predicates()] == [1.0, 3.0]
    assert g.children[1].a == 1 and g.children[1].b == 3


def test_smoothing_gap_bound():
    p = Ball(0, 0, 1)
    eps = 5.0
    assert smoothing_gap_bound(predicate(p), eps) == 0.0
    assert smoothing_gap_bound(stay(0, 2, p), eps) == pytest.approx(math.log(3) / eps)
    nested = reach(0, 3, p) & avoid(0, 1, p)
    assert smoothing_gap_bound(nested, eps) == pytest.approx((math.log(4) + math.log(2)) / eps)


def test_formula_str_uses_concrete_syntax():
    f = stay(7, 20, Ball(5.0, 5.0, 1.0))
    assert str(f) == 'stay<7,20,ball(5.0, 5.0, 1.0)>'
    assert np.array_equal(f.predicates()[0].center(), [5.0, 5.0])
