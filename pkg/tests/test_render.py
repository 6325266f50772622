import os

import numpy as np

from backdoorbench.formula import reach, stay
from backdoorbench.predicates import Ball, Box
from backdoorbench.render import PATH_COLORS, TRIGGER_COLOR, render_pair, render_scene, svg_polyline
from backdoorbench.triggers import make_trigger


def test_scene_contains_paths_and_regions(walled_map):
    paths = {'benign': np.array([[0.5, 0.5], [3.5, 7.0]]), 'backdoored': np.array([[0.5, 0.5], [1.0, 6.0]])}
    formula = reach(0, 3, Ball(1.0, 6.0, 0.5)) & stay(1, 2, Box(5.0, 5.0, 7.0, 7.0))
    svg = render_scene(walled_map, paths, formula=formula)
    assert svg.startswith('<svg')
    assert svg.rstrip().endswith('</svg>')
    assert svg.count('<polyline') == 2
    assert PATH_COLORS['benign'] in svg
    assert PATH_COLORS['backdoored'] in svg
    assert 'fill-opacity:0.25' in svg
    # six wall cells drawn at intensity 0
    assert svg.count('fill:rgb(0,0,0)') == 6


def test_trigger_is_outlined(open_map):
    trig = make_trigger('diamond', (2, 2), 3, value=160, map_shape=(8, 8))
    svg = render_scene(open_map, trigger=trig)
    assert svg.count(TRIGGER_COLOR) == 5
    assert svg.count('fill:rgb(160,160,160)') == 5


def test_polyline_format():
    line = svg_polyline(np.array([[0.0, 1.0], [2.5, 3.25]]), '#000000', dash=True)
    assert 'points="0.00,1.00 2.50,3.25"' in line
    assert 'stroke-dasharray' in line


def test_render_pair_writes_two_files(tmp_path, open_map):
    trig = make_trigger('square', (0, 0), 2, value=160, map_shape=(8, 8))
    clean, triggered = render_pair(open_map, trig, {'benign': np.array([[1.0, 1.0], [6.0, 6.0]])},
                                   {'backdoored': np.array([[1.0, 1.0], [2.0, 6.0]])}, str(tmp_path), 'task_0')
    assert os.path.basename(clean) == 'task_0_clean.svg'
    assert os.path.basename(triggered) == 'task_0_triggered.svg'
    with open(clean) as f:
        assert TRIGGER_COLOR not in f.read()
    with open(triggered) as f:
        assert TRIGGER_COLOR in f.read()
