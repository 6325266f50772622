"""
Map and trigger persistence: binary PGM (P5) images plus JSON sidecars
"""

import logging
import os
from typing import Tuple

import numpy as np
from PIL import Image

from .triggers import TriggerPattern
from .utils import ensure_dir, load_json, save_json
from .world import GridMap, MapError, Obstacle

logger = logging.getLogger('BackdoorBench.MapIO')


def sidecar_path(pgm_path: str) -> str:
    return os.path.splitext(pgm_path)[0] + '.json'


def save_map(grid_map: GridMap, pgm_path: str) -> str:
    """Write <name>.pgm and the obstacle sidecar <name>.json"""
    ensure_dir(os.path.dirname(pgm_path) or '.')
    Image.fromarray(np.ascontiguousarray(grid_map.intensity)).save(pgm_path, format='PPM')
    save_json({
        'map_id': grid_map.map_id,
        'resolution': grid_map.resolution,
        'obstacle_threshold': grid_map.obstacle_threshold,
        'obstacles': [o.to_dict() for o in grid_map.obstacles],
    }, sidecar_path(pgm_path))
    return pgm_path


def load_map(pgm_path: str) -> GridMap:
    if not os.path.exists(pgm_path):
        raise MapError(f"map file not found: {pgm_path}")
    with Image.open(pgm_path) as img:
        if img.mode != 'L':
            logger.warning(f"{pgm_path}: converting mode {img.mode} to 8-bit grayscale")
            img = img.convert('L')
        intensity = np.array(img, dtype=np.uint8)

    meta = {}
    side = sidecar_path(pgm_path)
    if os.path.exists(side):
        meta = load_json(side)
    else:
        logger.debug(f"No sidecar for {pgm_path}; using default resolution and no labels")
    default_id = os.path.splitext(os.path.basename(pgm_path))[0]
    kwargs = {
        'obstacles': tuple(Obstacle.from_dict(o) for o in meta.get('obstacles', [])),
        'map_id': meta.get('map_id') or default_id,
    }
    if 'resolution' in meta:
        kwargs['resolution'] = float(meta['resolution'])
    if 'obstacle_threshold' in meta:
        kwargs['obstacle_threshold'] = int(meta['obstacle_threshold'])
    return GridMap(intensity, **kwargs)


def save_trigger(trig: TriggerPattern, path: str) -> str:
    save_json(trig.to_dict(), path)
    return path


def load_trigger(path: str, map_shape: Tuple[int, int]) -> TriggerPattern:
    return TriggerPattern.from_dict(load_json(path), map_shape)
