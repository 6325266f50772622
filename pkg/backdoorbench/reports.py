"""
Metric reports: one CSV row per (planner, injection, spec, trigger shape), plus JSON
"""

import csv
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

from .utils import ensure_dir, load_json, save_json

logger = logging.getLogger('BackdoorBench.Reports')

KEY_COLUMNS = ['planner', 'injection', 'spec', 'trigger_shape']
METRIC_COLUMNS = [
    'n_benign', 'n_triggered', 'trigger_rate', 'path_len_incr', 'explore_incr',
    'success_rate_benign', 'success_rate_backdoored', 'success_rate_triggered',
]
SUMMARY_COLUMNS = ['planner', 'split', 'n', 'success_rate', 'mean_path_length', 'mean_explore_steps']


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return '%.6f' % value
    return str(value)


def write_csv(rows: Sequence[Dict[str, Any]], path: str, columns: Optional[List[str]] = None) -> str:
    """Fixed column order and float formatting so reruns are byte-identical"""
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    ensure_dir(os.path.dirname(path) or '.')
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def metrics_row(planner: str, injection: str, spec: str, trigger_shape: str,
                metrics: Dict[str, Any]) -> Dict[str, Any]:
    row = {'planner': planner, 'injection': injection, 'spec': spec, 'trigger_shape': trigger_shape}
    row.update({k: metrics.get(k) for k in METRIC_COLUMNS})
    return row


def write_metrics_report(rows: Sequence[Dict[str, Any]], out_dir: str, name: str = 'metrics') -> Dict[str, str]:
    """CSV and JSON side by side"""
    csv_path = write_csv(rows, os.path.join(out_dir, f"{name}.csv"), KEY_COLUMNS + METRIC_COLUMNS)
    json_path = os.path.join(out_dir, f"{name}.json")
    save_json({'rows': list(rows)}, json_path)
    return {'csv': csv_path, 'json': json_path}


def write_summary_report(rows: Sequence[Dict[str, Any]], out_dir: str, name: str = 'summary') -> Dict[str, str]:
    csv_path = write_csv(rows, os.path.join(out_dir, f"{name}.csv"), SUMMARY_COLUMNS)
    json_path = os.path.join(out_dir, f"{name}.json")
    save_json({'rows': list(rows)}, json_path)
    return {'csv': csv_path, 'json': json_path}


def load_report(path: str) -> List[Dict[str, Any]]:
    return load_json(path).get('rows', [])
