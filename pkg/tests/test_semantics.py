import math

import numpy as np
import pytest
import torch

from backdoorbench.formula import (IntervalError, NodeKind, avoid, eventually, false, globally, implies, next_,
                                   predicate, reach, smoothing_gap_bound, stay, true, until)
from backdoorbench.predicates import Ball, Box, Obstacles, TemplateError
from backdoorbench.semantics import (DEFINITIONAL, SMOOTHED, Mode, SemanticsConfig, robustness,
                                     robustness_grad, robustness_tensor, satisfies, smooth_max, smooth_min)


def pred_value(p, s):
    return p(s)


def holds(node, states, t=0):
    """Boolean semantics, evaluated directly on the tree"""
    kind = node.kind
    if kind is NodeKind.TRUE:
        return True
    if kind is NodeKind.FALSE:
        return False
    if kind is NodeKind.PREDICATE:
        return pred_value(node.predicate, states[t]) < 0
    window = range(t + node.a, t + node.b + 1) if node.a is not None else None
    if kind is NodeKind.REACH:
        return any(pred_value(node.predicate, states[i]) < 0 for i in window)
    if kind is NodeKind.AVOID:
        return all(pred_value(node.predicate, states[i]) > 0 for i in window)
    if kind is NodeKind.STAY:
        return all(pred_value(node.predicate, states[i]) < 0 for i in window)
    if kind is NodeKind.NOT:
        return not holds(node.children[0], states, t)
    if kind is NodeKind.NEXT:
        return holds(node.children[0], states, t + 1)
    if kind is NodeKind.AND:
        return holds(node.children[0], states, t) and holds(node.children[1], states, t)
    if kind is NodeKind.OR:
        return holds(node.children[0], states, t) or holds(node.children[1], states, t)
    if kind is NodeKind.IMPLIES:
        return (not holds(node.children[0], states, t)) or holds(node.children[1], states, t)
    if kind is NodeKind.EVENTUALLY:
        return any(holds(node.children[0], states, i) for i in window)
    if kind is NodeKind.GLOBALLY:
        return all(holds(node.children[0], states, i) for i in window)
    phi, psi = node.children
    return any(holds(psi, states, tp) and all(holds(phi, states, i) for i in range(window.start, tp))
               for tp in window)


def random_formulas():
    a, b, c = Ball(1.0, 1.0, 1.2), Ball(2.5, 2.0, 1.0), Box(0.5, 2.0, 2.5, 3.5)
    return [
        reach(0, 5, a),
        avoid(1, 4, b),
        stay(2, 3, c),
        reach(0, 3, a) & avoid(0, 5, b),
        reach(0, 2, a) | stay(1, 4, c),
        eventually(0, 3, predicate(a) & ~predicate(b)),
        globally(1, 3, implies(predicate(a), eventually(0, 2, predicate(c)))),
        until(~predicate(b), 0, 4, predicate(c)),
        next_(globally(0, 2, ~predicate(a))),
    ]


def test_constant_stay_and_avoid():
    p = Ball(0.0, 0.0, 1.0)
    inside = np.zeros((3, 2))
    assert robustness(stay(0, 2, p), inside) == pytest.approx(1.0)
    outside = np.tile([3.0, 0.0], (3, 1))
    assert robustness(avoid(0, 2, p), outside) == pytest.approx(2.0)


def test_true_false_use_top_value():
    states = np.zeros((2, 2))
    cfg = SemanticsConfig(top_value=3.0)
    assert robustness(true(), states, cfg) == 3.0
    assert robustness(false(), states, cfg) == -3.0


def test_until_matches_brute_force_expansion():
    rng = np.random.default_rng(0)
    for _ in range(10):
        states = rng.uniform(0.0, 4.0, size=(6, 2))
        p1 = Ball(*rng.uniform(0.0, 4.0, size=2), 1.5)
        p2 = Ball(*rng.uniform(0.0, 4.0, size=2), 1.5)
        phi, psi = predicate(p1), predicate(p2)
        rho_phi = [-p1(s) for s in states]
        rho_psi = [-p2(s) for s in states]
        expected = max(min(rho_psi[t], min(rho_phi[:t], default=1.0)) for t in range(0, 4))
        assert robustness(until(phi, 0, 3, psi), states) == pytest.approx(expected)


def test_sign_agrees_with_boolean_semantics():
    rng = np.random.default_rng(1)
    for formula in random_formulas():
        for _ in range(20):
            states = rng.uniform(0.0, 4.0, size=(8, 2))
            rho = robustness(formula, states)
            if abs(rho) < 1e-9:
                continue
            assert (rho > 0) == holds(formula, states), str(formula)


def test_smoothed_stays_within_gap_bound():
    rng = np.random.default_rng(2)
    for formula in random_formulas():
        bound = smoothing_gap_bound(formula, SMOOTHED.epsilon)
        for _ in range(10):
            states = rng.uniform(0.0, 4.0, size=(8, 2))
            gap = abs(robustness(formula, states, SMOOTHED) - robustness(formula, states))
            assert gap <= bound + 1e-9


def test_batched_evaluation_matches_single():
    rng = np.random.default_rng(3)
    batch = rng.uniform(0.0, 4.0, size=(5, 8, 2))
    formula = random_formulas()[3]
    values = robustness_tensor(formula, torch.as_tensor(batch))
    assert values.shape == (5,)
    for i in range(5):
        assert float(values[i]) == pytest.approx(robustness(formula, batch[i]))


def test_horizon_too_short_raises():
    with pytest.raises(IntervalError):
        robustness(stay(7, 20, Ball(0, 0, 1)), np.zeros((10, 2)))


def test_uninstantiated_template_raises():
    with pytest.raises(TemplateError):
        robustness(avoid(0, 2, Obstacles()), np.zeros((3, 2)))


def test_smooth_min_max_values():
    assert smooth_min([2.5], 3.0) == pytest.approx(2.5)
    assert smooth_min([1.0, 2.0], 5.0) == pytest.approx(1 - math.log(1 + math.exp(-5)) / 5)
    assert smooth_min([1.0, 2.0], 5.0) == pytest.approx(0.99866, abs=1e-5)
    assert smooth_max([0.0, 0.0], 5.0) == pytest.approx(math.log(2) / 5)
    with pytest.raises(ValueError):
        smooth_min([], 5.0)
    with pytest.raises(ValueError):
        smooth_max([1.0], 0.0)


def test_smooth_max_is_stable_for_large_values():
    assert smooth_max([1000.0, 1000.0], 5.0) == pytest.approx(1000.0 + math.log(2) / 5)


def test_reach_gradient_is_unit_vector():
    c = np.array([1.0, 2.0])
    s = np.array([[4.0, 6.0]])
    grad = robustness_grad(reach(0, 0, Ball(c[0], c[1], 0.5)), s, DEFINITIONAL)
    np.testing.assert_allclose(grad[0], -(s[0] - c) / np.linalg.norm(s[0] - c))


def finite_difference(formula, states, config, h=1e-6):
    grad = np.zeros_like(states)
    for idx in np.ndindex(states.shape):
        up, down = states.copy(), states.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (robustness(formula, up, config) - robustness(formula, down, config)) / (2 * h)
    return grad


def test_smoothed_stay_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    formula = stay(0, 2, Ball(1.0, 1.0, 0.5))
    states = rng.uniform(0.0, 3.0, size=(3, 2))
    np.testing.assert_allclose(robustness_grad(formula, states), finite_difference(formula, states, SMOOTHED),
                               rtol=1e-5, atol=1e-7)


def test_conjunction_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    formula = reach(0, 4, Ball(1.0, 1.0, 0.5)) & reach(1, 5, Ball(3.0, 2.0, 0.5))
    for _ in range(20):
        states = rng.uniform(0.0, 4.0, size=(6, 2))
        np.testing.assert_allclose(robustness_grad(formula, states), finite_difference(formula, states, SMOOTHED),
                                   rtol=1e-5, atol=1e-7)


def test_satisfies_and_config_validation():
    p = Ball(0.0, 0.0, 1.0)
    assert satisfies(reach(0, 1, p), [[0.0, 0.0], [5.0, 5.0]])
    assert not satisfies(stay(0, 1, p), [[0.0, 0.0], [5.0, 5.0]])
    with pytest.raises(ValueError):
        SemanticsConfig(epsilon=0.0)
    assert SemanticsConfig(mode='smoothed').mode is Mode.SMOOTHED
    assert SemanticsConfig.from_config({'semantics': {'epsilon': 2.0}}).epsilon == 2.0


def random_region(rng):
    if rng.random() < 0.5:
        cx, cy = rng.uniform(0.0, 4.0, size=2)
        return Ball(float(cx), float(cy), float(rng.uniform(0.3, 1.5)))
    x0, y0 = rng.uniform(0.0, 3.0, size=2)
    w, h = rng.uniform(0.3, 1.5, size=2)
    return Box(float(x0), float(y0), float(x0 + w), float(y0 + h))


def random_reach_avoid(rng, depth=2, regions=random_region):
    """reach/avoid/stay leaves joined by & and |, windows inside t=0..7"""
    if depth == 0 or rng.random() < 0.3:
        a = int(rng.integers(0, 4))
        b = a + int(rng.integers(0, 5))
        op = (reach, avoid, stay)[int(rng.integers(3))]
        return op(a, b, regions(rng))
    lhs = random_reach_avoid(rng, depth - 1, regions)
    rhs = random_reach_avoid(rng, depth - 1, regions)
    return lhs & rhs if rng.random() < 0.5 else lhs | rhs


def random_ball(rng):
    cx, cy = rng.uniform(0.0, 4.0, size=2)
    return Ball(float(cx), float(cy), float(rng.uniform(0.3, 1.5)))


def test_sign_agrees_on_random_reach_avoid_formulas():
    rng = np.random.default_rng(10)
    for _ in range(200):
        formula = random_reach_avoid(rng)
        states = rng.uniform(0.0, 4.0, size=(8, 2))
        rho = robustness(formula, states)
        assert (rho > 0) == holds(formula, states), str(formula)


def test_de_morgan_is_exact_in_definitional_mode():
    rng = np.random.default_rng(11)
    for _ in range(100):
        f, g = random_reach_avoid(rng), random_reach_avoid(rng)
        states = rng.uniform(0.0, 4.0, size=(8, 2))
        assert robustness(~(f & g), states) == robustness(~f | ~g, states)
        assert robustness(~(f | g), states) == robustness(~f & ~g, states)


@pytest.mark.parametrize("epsilon", [5.0, 50.0, 500.0])
def test_smoothed_converges_to_definitional(epsilon):
    rng = np.random.default_rng(12)
    config = SemanticsConfig(epsilon=epsilon, mode=Mode.SMOOTHED)
    for _ in range(50):
        formula = random_reach_avoid(rng)
        states = rng.uniform(0.0, 4.0, size=(8, 2))
        gap = abs(robustness(formula, states, config) - robustness(formula, states))
        assert gap <= smoothing_gap_bound(formula, epsilon) + 1e-9


def test_smoothing_gap_shrinks_with_epsilon():
    rng = np.random.default_rng(13)
    cases = [(random_reach_avoid(rng), rng.uniform(0.0, 4.0, size=(8, 2))) for _ in range(50)]
    worst = []
    for epsilon in (5.0, 50.0, 500.0):
        config = SemanticsConfig(epsilon=epsilon, mode=Mode.SMOOTHED)
        worst.append(max(abs(robustness(f, s, config) - robustness(f, s)) for f, s in cases))
    assert worst[0] > worst[1] > worst[2]
    assert worst[2] <= 3 * math.log(8) / 500.0


def test_smoothed_gradient_matches_finite_differences_on_random_formulas():
    rng = np.random.default_rng(14)
    for _ in range(50):
        formula = random_reach_avoid(rng, regions=random_ball)
        states = rng.uniform(0.0, 4.0, size=(8, 2))
        np.testing.assert_allclose(robustness_grad(formula, states, SMOOTHED),
                                   finite_difference(formula, states, SMOOTHED, h=1e-5),
                                   rtol=1e-4, atol=1e-6)
