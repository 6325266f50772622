"""
SVG rendering of maps, paths, triggers and specification regions
"""

import logging
import os
from typing import Dict, Optional, Sequence

import numpy as np

from .formula import Formula
from .predicates import Ball, Box
from .triggers import TriggerPattern, insert_trigger
from .utils import ensure_dir, save_text_file
from .world import FREE, GridMap

logger = logging.getLogger('BackdoorBench.Render')

PATH_COLORS = {
    'benign': '#1f77b4',
    'backdoored': '#d62728',
    'demo': '#2ca02c',
    'solver': '#9467bd',
}
_FALLBACK_COLORS = ('#ff7f0e', '#8c564b', '#e377c2', '#17becf')
TRIGGER_COLOR = '#ffbf00'
REGION_COLOR = '#2ca02c'


def svg_rect(x: float, y: float, w: float, h: float, style: str) -> str:
    return '  <rect x="%.2f" y="%.2f" width="%.2f" height="%.2f" style="%s"/>\n' % (x, y, w, h, style)


def svg_circle(cx: float, cy: float, r: float, style: str) -> str:
    return '  <circle cx="%.2f" cy="%.2f" r="%.2f" style="%s"/>\n' % (cx, cy, r, style)


def svg_polyline(points: np.ndarray, color: str, width: float = 2.0, dash: bool = False) -> str:
    coords = ' '.join('%.2f,%.2f' % (x, y) for x, y in points)
    style = 'stroke:%s;stroke-width:%.1f;fill:none' % (color, width)
    if dash:
        style += ';stroke-dasharray:4,3'
    return '  <polyline points="%s" style="%s" stroke-linejoin="round"/>\n' % (coords, style)


def _path_color(name: str, index: int) -> str:
    return PATH_COLORS.get(name, _FALLBACK_COLORS[index % len(_FALLBACK_COLORS)])


def render_scene(grid_map: GridMap,
                 paths: Optional[Dict[str, np.ndarray]] = None,
                 trigger: Optional[TriggerPattern] = None,
                 formula: Optional[Formula] = None,
                 scale: float = 48.0,
                 padding: int = 8) -> str:
    """SVG string; x grows right, y grows down with row 0 at the top, as in the PGM"""
    paths = paths or {}
    cell = grid_map.resolution * scale
    width = grid_map.width * cell + 2 * padding
    height = grid_map.height * cell + 2 * padding

    svg = '<svg viewBox="0 0 %d %d" version="1.1" xmlns="http://www.w3.org/2000/svg">\n' % (width, height)
    svg += svg_rect(0, 0, width, height, 'stroke:none;fill:#ffffff')
    shown = insert_trigger(grid_map, trigger) if trigger is not None else grid_map

    for row, col in np.argwhere(shown.intensity < FREE):
        v = int(shown.intensity[row, col])
        svg += svg_rect(padding + col * cell, padding + row * cell, cell, cell,
                        'stroke:none;fill:rgb(%d,%d,%d)' % (v, v, v))
    if trigger is not None:
        for row, col in np.argwhere(trigger.footprint):
            svg += svg_rect(padding + col * cell, padding + row * cell, cell, cell,
                            'stroke:%s;stroke-width:1.5;fill:none' % TRIGGER_COLOR)

    if formula is not None:
        for pred in formula.predicates():
            if isinstance(pred, Ball):
                svg += svg_circle(padding + pred.cx * scale, padding + pred.cy * scale, pred.r * scale,
                                  'stroke:%s;fill:%s;fill-opacity:0.25' % (REGION_COLOR, REGION_COLOR))
            elif isinstance(pred, Box):
                svg += svg_rect(padding + pred.x0 * scale, padding + pred.y0 * scale,
                                (pred.x1 - pred.x0) * scale, (pred.y1 - pred.y0) * scale,
                                'stroke:%s;fill:%s;fill-opacity:0.25' % (REGION_COLOR, REGION_COLOR))

    svg += svg_rect(padding, padding, grid_map.width * cell, grid_map.height * cell,
                    'stroke:#000000;stroke-width:1;fill:none')

    for i, (name, states) in enumerate(paths.items()):
        pts = padding + np.asarray(states, dtype=np.float64)[:, :2] * scale
        color = _path_color(name, i)
        svg += svg_polyline(pts, color, dash=(name == 'demo'))
        svg += svg_circle(pts[0, 0], pts[0, 1], 4.0, 'stroke:none;fill:%s' % color)
        svg += svg_rect(pts[-1, 0] - 4.0, pts[-1, 1] - 4.0, 8.0, 8.0, 'stroke:none;fill:%s' % color)
        svg += ('  <text x="%.2f" y="%.2f" font-family="Courier, monospace" font-size="10pt" fill="%s">%s</text>\n'
                % (padding + 4, padding + 14 * (i + 1), color, name))

    svg += '</svg>\n'
    return svg


def render_pair(grid_map: GridMap, trigger: TriggerPattern, clean_paths: Dict[str, np.ndarray],
                triggered_paths: Dict[str, np.ndarray], out_dir: str, name: str,
                formula: Optional[Formula] = None) -> Sequence[str]:
    """One SVG of the clean map and one of the triggered map"""
    ensure_dir(out_dir)
    clean_path = os.path.join(out_dir, f"{name}_clean.svg")
    triggered_path = os.path.join(out_dir, f"{name}_triggered.svg")
    save_text_file(render_scene(grid_map, clean_paths), clean_path)
    save_text_file(render_scene(grid_map, triggered_paths, trigger, formula), triggered_path)
    logger.info(f"Rendered {clean_path} and {triggered_path}")
    return clean_path, triggered_path
