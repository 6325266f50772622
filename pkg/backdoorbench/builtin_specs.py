"""
Library of backdoor behaviors.

Every builtin is conjoined with avoid<0,T,obs()> so that satisfying paths stay
collision-free.
"""

import logging
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

from .formula import (Formula, NodeKind, avoid, conjunction, disjunction, eventually,
                      globally, implies, predicate, reach, stay)
from .predicates import Behind, FormulaError, Obstacles, Predicate
from .spec_parser import parse_formula

logger = logging.getLogger('BackdoorBench.Specs')

RegionLike = Union[Predicate, str, Sequence[float]]


def obstacle_avoidance(horizon: int) -> Formula:
    return avoid(0, horizon, Obstacles())


def _region(value: RegionLike, registry: Optional[Mapping[str, Predicate]] = None) -> Predicate:
    """Predicate from an object, concrete syntax, or [cx, cy, r] / [x0, y0, x1, y1]"""
    if isinstance(value, Predicate):
        return value
    if isinstance(value, str):
        parsed = parse_formula(value, registry)
        if parsed.kind is not NodeKind.PREDICATE:
            raise FormulaError(f"expected a single predicate, got '{value}'")
        return parsed.predicate
    values = ', '.join(repr(float(v)) for v in value)
    if len(value) == 3:
        return _region(f"ball({values})")
    if len(value) == 4:
        return _region(f"box({values})")
    raise FormulaError(f"cannot build a region from {value!r}")


def _regions(params: Mapping[str, Any], registry, minimum: int = 1) -> List[Predicate]:
    raw = params.get('regions')
    if raw is None and 'region' in params:
        raw = [params['region']]
    if not raw or len(raw) < minimum:
        raise FormulaError(f"need at least {minimum} region(s), got {0 if not raw else len(raw)}")
    return [_region(r, registry) for r in raw]


def trap(horizon: int, region: Predicate, t1: int, t2: Optional[int] = None) -> Formula:
    return stay(t1, horizon if t2 is None else t2, region)


def misguide(horizon: int, region: Predicate) -> Formula:
    return reach(1, horizon, region)


def branch(horizon: int, regions: Sequence[Predicate], t1: int = 1, t2: Optional[int] = None) -> Formula:
    """Visit both regions of one of the pairs (r0, r1), (r2, r3), ..."""
    if len(regions) % 2 or not regions:
        raise FormulaError(f"branch needs an even, nonzero number of regions, got {len(regions)}")
    t2 = horizon if t2 is None else t2
    pairs = [reach(t1, t2, regions[i]) & reach(t1, t2, regions[i + 1])
             for i in range(0, len(regions), 2)]
    return disjunction(*pairs)


def branch_ordered(horizon: int, regions: Sequence[Predicate], t: int) -> Formula:
    """Visit the first region of a pair, then its partner within t steps"""
    if len(regions) % 2 or not regions:
        raise FormulaError(f"branch needs an even, nonzero number of regions, got {len(regions)}")
    if not 0 <= t < horizon:
        raise FormulaError(f"branch delay t={t} must lie in [0, {horizon})")
    last = horizon - t
    terms = []
    for i in range(0, len(regions), 2):
        first, second = predicate(regions[i]), predicate(regions[i + 1])
        terms.append(eventually(1, last, first)
                     & globally(1, last, implies(first, eventually(0, t, second))))
    return disjunction(*terms)


def waste_energy(horizon: int, regions: Sequence[Predicate], t: int) -> Formula:
    """Shuttle P1 -> P2 -> P1 -> P2 in windows of t steps"""
    if len(regions) != 2:
        raise FormulaError(f"waste_energy needs exactly 2 regions, got {len(regions)}")
    if t < 1 or 4 * t > horizon:
        raise FormulaError(f"waste_energy needs 1 <= t and 4t <= T (t={t}, T={horizon})")
    p1, p2 = regions
    return conjunction(reach(0, t, p1), reach(t, 2 * t, p2),
                       reach(2 * t, 3 * t, p1), reach(3 * t, 4 * t, p2))


def waste_energy_recurrent(horizon: int, regions: Sequence[Predicate], t: int) -> Formula:
    """Every region is revisited within each window of t steps"""
    if len(regions) < 2:
        raise FormulaError("waste_energy_recurrent needs at least 2 regions")
    if t < 1 or t >= horizon:
        raise FormulaError(f"window t={t} must lie in [1, {horizon})")
    visits = conjunction(*(eventually(0, t, predicate(p)) for p in regions))
    return globally(1, horizon - t, visits)


def hide(horizon: int, objects: Sequence[int], t: int, n: Optional[int] = None, r: float = 1.0) -> Formula:
    """Stay behind one of the N objects from t on"""
    if n is not None and n != len(objects):
        raise FormulaError(f"hide: N={n} but {len(objects)} object ids given")
    if not objects:
        raise FormulaError("hide needs at least one object")
    return disjunction(*(stay(t, horizon, Behind(int(o), r)) for o in objects))


def camouflage(horizon: int, objects: Sequence[int], delta: int, n: Optional[int] = None,
               r: float = 1.0) -> Formula:
    """Reach behind each object in order, one window of delta steps per object"""
    n = len(objects) if n is None else n
    if n != len(objects) or n < 1:
        raise FormulaError(f"camouflage: N={n} but {len(objects)} object ids given")
    if delta < 1 or n * delta > horizon:
        raise FormulaError(f"camouflage needs N*delta <= T (N={n}, delta={delta}, T={horizon})")
    return conjunction(*(eventually(i * delta, (i + 1) * delta, predicate(Behind(int(o), r)))
                         for i, o in enumerate(objects)))


def _build_trap(T, p, reg):
    return trap(T, _regions(p, reg)[0], int(p.get('t1', 0)), p.get('t2'))


def _build_misguide(T, p, reg):
    return misguide(T, _regions(p, reg)[0])


def _build_branch(T, p, reg):
    return branch(T, _regions(p, reg, 2), int(p.get('t1', 1)), p.get('t2'))


def _build_branch_ordered(T, p, reg):
    return branch_ordered(T, _regions(p, reg, 2), int(p.get('t', 1)))


def _build_waste_energy(T, p, reg):
    return waste_energy(T, _regions(p, reg, 2), int(p.get('t', T // 4)))


def _build_waste_energy_recurrent(T, p, reg):
    return waste_energy_recurrent(T, _regions(p, reg, 2), int(p.get('t', T // 4)))


def _build_hide(T, p, reg):
    return hide(T, list(p.get('objects', [])), int(p.get('t', 0)), p.get('n'), float(p.get('r', 1.0)))


def _build_camouflage(T, p, reg):
    objects = list(p.get('objects', []))
    delta = int(p.get('delta', T // max(len(objects), 1)))
    return camouflage(T, objects, delta, p.get('n'), float(p.get('r', 1.0)))


BUILDERS: Dict[str, Callable[[int, Mapping[str, Any], Any], Formula]] = {
    'trap': _build_trap,
    'misguide': _build_misguide,
    'branch': _build_branch,
    'branch_ordered': _build_branch_ordered,
    'waste_energy': _build_waste_energy,
    'waste_energy_recurrent': _build_waste_energy_recurrent,
    'hide': _build_hide,
    'camouflage': _build_camouflage,
}


def _normalize(name: str) -> str:
    key = name.strip().replace('-', '_')
    # WasteEnergy -> waste_energy
    out = ''.join('_' + c.lower() if c.isupper() and i else c.lower() for i, c in enumerate(key))
    return out.replace('__', '_')


def builtin_spec(name: str, params: Mapping[str, Any],
                 registry: Optional[Mapping[str, Predicate]] = None) -> Formula:
    """Builtin behavior conjoined with avoid<0,T,obs()>; params carry 'T' (horizon)"""
    key = _normalize(name)
    if key not in BUILDERS:
        raise FormulaError(f"unknown builtin spec '{name}'; choose from {sorted(BUILDERS)}")
    horizon = int(params.get('T', params.get('horizon', 31)))
    body = BUILDERS[key](horizon, params, registry)
    if not params.get('avoid_obstacles', True):
        return body
    return body & obstacle_avoidance(horizon)


def spec_from_config(section: Mapping[str, Any], horizon: int,
                     registry: Optional[Mapping[str, Predicate]] = None) -> Formula:
    """Formula from a config section: either {text: ...} or {name: ..., <params>}"""
    if section.get('text'):
        formula = parse_formula(section['text'], registry)
        if section.get('avoid_obstacles', True):
            formula = formula & obstacle_avoidance(horizon)
        return formula
    params = dict(section)
    params.setdefault('T', horizon)
    formula = builtin_spec(section.get('name', 'trap'), params, registry)
    logger.debug(f"Builtin spec {section.get('name', 'trap')}: {formula}")
    return formula
