"""
Utility functions for BackdoorBench
"""

import os
import sys
import json
import yaml
import random
import shutil
import hashlib
import logging
import platform
from datetime import datetime
from pathlib import Path
from typing import Dict, Any, Optional

import numpy as np
import torch


# Setup logging
def setup_logging(config: Dict[str, Any]) -> logging.Logger:
    """Configure logging based on config settings"""
    log_config = config.get('logging', {})
    log_level = getattr(logging, log_config.get('level', 'INFO'))

    handlers = []

    # File handler
    log_file = log_config.get('file', 'logs/backdoorbench.log')
    if log_file:
        os.makedirs(os.path.dirname(log_file) or '.', exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        ))
        handlers.append(file_handler)

    # Console handler
    if log_config.get('console', True):
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(logging.Formatter(
            '%(levelname)s: %(message)s'
        ))
        handlers.append(console_handler)

    logging.basicConfig(
        level=log_level,
        handlers=handlers,
        force=True
    )

    return logging.getLogger('BackdoorBench')


def load_config(config_path: str = "config.yaml") -> Dict[str, Any]:
    """Load configuration from a YAML (or JSON) file"""
    with open(config_path, 'r', encoding='utf-8') as f:
        config = yaml.safe_load(f)
    if not isinstance(config, dict):
        raise ValueError(f"Config must be a mapping: {config_path}")
    return config


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config"""
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def ensure_dir(path: str) -> Path:
    """Ensure directory exists, create if not"""
    path_obj = Path(path)
    path_obj.mkdir(parents=True, exist_ok=True)
    return path_obj


def save_text_file(content: str, file_path: str):
    """Save text content to file"""
    ensure_dir(os.path.dirname(file_path) or '.')
    with open(file_path, 'w', encoding='utf-8') as f:
        f.write(content)
    logging.getLogger('BackdoorBench').info(f"Saved: {file_path}")


def load_json(file_path: str) -> Any:
    """Load JSON file"""
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_json(data: Any, file_path: str):
    """Save data to JSON file"""
    ensure_dir(os.path.dirname(file_path) or '.')
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False, default=str)
    logging.getLogger('BackdoorBench').info(f"Saved JSON: {file_path}")


def backup_existing(config: Dict[str, Any], file_path: str) -> Optional[str]:
    """Rotate an existing artifact to file_path.1 .. file_path.N before it is overwritten"""
    backup = config.get('backup', {})
    if not backup.get('enabled', False) or not os.path.exists(file_path):
        return None
    keep = int(backup.get('keep_versions', 3))
    if keep < 1:
        return None
    for i in range(keep - 1, 0, -1):
        older = f"{file_path}.{i}"
        if os.path.exists(older):
            os.replace(older, f"{file_path}.{i + 1}")
    target = f"{file_path}.1"
    shutil.copy2(file_path, target)
    logging.getLogger('BackdoorBench').debug(f"Backed up {file_path} -> {target}")
    return target


def get_project_path(config: Dict[str, Any], *parts: str) -> str:
    """Get full path within the experiment output directory"""
    base = config.get('project', {}).get('base_path', '.')
    return os.path.join(base, *parts)


def get_artifact_path(config: Dict[str, Any], kind: str, *parts: str) -> str:
    """Get path for an artifact kind (maps, datasets, models, reports, renders)"""
    sub = config.get('paths', {}).get(kind, kind)
    return get_project_path(config, sub, *parts)


def seed_everything(seed: int, deterministic: bool = True):
    """Seed python, numpy and torch; optionally pin torch to one thread"""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)


def component_seed(config: Dict[str, Any], offset: int) -> int:
    """Derive a per-component seed from the project seed"""
    return int(config.get('project', {}).get('seed', 0)) * 1000 + offset


def package_versions() -> Dict[str, str]:
    """Versions recorded in run manifests"""
    import scipy
    import arpeggio
    from . import __version__

    return {
        'backdoorbench': __version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'torch': torch.__version__,
        'arpeggio': getattr(arpeggio, '__version__', 'unknown'),
    }


def write_manifest(config: Dict[str, Any], command: str, out_dir: str,
                   extra: Optional[Dict[str, Any]] = None) -> str:
    """Write the reproducibility manifest for a run"""
    manifest = {
        'command': command,
        'created': timestamp(),
        'config_hash': config_hash(config),
        'seed': config.get('project', {}).get('seed', 0),
        'versions': package_versions(),
        'argv': sys.argv[1:],
        'config': config,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, 'manifest.json')
    save_json(manifest, path)
    return path


def timestamp() -> str:
    """Get current timestamp string"""
    return datetime.now().strftime("%Y-%m-%d %H:%M:%S")


def sanitize_filename(name: str) -> str:
    """Sanitize string for use as filename"""
    keep = [c if (c.isalnum() or c in '-_.') else '_' for c in name]
    return ''.join(keep)[:100]


def format_duration(seconds: float) -> str:
    """Format duration in human-readable format"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f}m"
    else:
        hours = seconds / 3600
        return f"{hours:.1f}h"


class ProgressTracker:
    """Track and log progress"""

    def __init__(self, total: int, description: str = "", every: int = 1,
                 logger: Optional[logging.Logger] = None):
        self.total = total
        self.current = 0
        self.description = description
        self.every = max(1, every)
        self.logger = logger or logging.getLogger('BackdoorBench')
        self.start_time = datetime.now()

    def update(self, n: int = 1, **fields: float):
        """Update progress"""
        self.current += n
        if self.current % self.every == 0 or self.current >= self.total:
            self._display(fields)

    def _display(self, fields: Dict[str, float]):
        """Display progress"""
        pct = (self.current / self.total) * 100 if self.total > 0 else 0
        elapsed = (datetime.now() - self.start_time).total_seconds()

        if self.current > 0:
            eta = (elapsed / self.current) * (self.total - self.current)
            eta_str = format_duration(eta)
        else:
            eta_str = "Unknown"

        extra = ''.join(f" {k}={v:.5g}" for k, v in fields.items())
        self.logger.info(
            f"{self.description} Progress: {self.current}/{self.total} "
            f"({pct:.1f}%) - ETA: {eta_str}{extra}"
        )

    def complete(self):
        """Mark as complete"""
        self.current = self.total
        elapsed = (datetime.now() - self.start_time).total_seconds()
        self.logger.info(
            f"{self.description} Complete! "
            f"Total time: {format_duration(elapsed)}"
        )
