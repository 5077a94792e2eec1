"""
Shared plumbing for subcommands: config resolution, dataset loading and output layout.
"""

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path

from core.cache import get_window_cache
from core.config import AppSettings, ExperimentConfig, load_experiment_config
from core.data import build_scene_windows, generate_synthetic, parse_trajectory_csv, resample
from core.data.types import SceneWindow, TrajectoryTable
from core.errors import UsageError
from core.training.evaluation import EvalReport, format_report_table
from core.utils import atomic_write_text, write_json

logger = logging.getLogger(__name__)


@dataclass
class CommandContext:
    """Everything a handler needs besides its own flags."""

    args: argparse.Namespace
    overrides: dict[str, str]
    settings: AppSettings

    @property
    def out(self) -> Path:
        return Path(self.args.out)

    @property
    def threads(self) -> int:
        return self.args.threads or self.settings.threads

    @property
    def seed(self) -> int | None:
        return self.args.seed

    def config(self) -> ExperimentConfig:
        return load_experiment_config(self.args.config, self.overrides, self.seed)


def parse_overrides(extra: list[str]) -> dict[str, str]:
    """Turn leftover ``--key value`` (or ``--key=value``) tokens into a flat mapping."""
    overrides: dict[str, str] = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or len(token) <= 2:
            raise UsageError(f"unexpected argument {token!r}; overrides take the form --key value")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"override --{key} is missing a value")
            value = extra[i + 1]
            i += 2
        overrides[key] = value
    return overrides


def require_file(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def load_table(config: ExperimentConfig, data: str | Path | None) -> TrajectoryTable:
    """Ingest ``data``, or synthesize traffic from ``config.synth`` when no file is given."""
    if data is None:
        logger.info("[SYNTH] No --data given; generating synthetic traffic")
        return generate_synthetic(config.synth, seed=config.train.seed)
    return parse_trajectory_csv(require_file(data, "data"), unit=config.windows.unit, dt=config.windows.source_dt)


def load_windows(config: ExperimentConfig, data: str | Path | None) -> list[SceneWindow]:
    """
    Build scene windows at ``config.windows.dt``.

    Windows from files are cached by source hash and window config.
    """
    wc = config.windows

    def build(table: TrajectoryTable) -> list[SceneWindow]:
        table = resample(table, wc.dt)
        return build_scene_windows(table, wc.t_h, wc.t_f, wc.radius, wc.n_max, wc.stride)

    if data is None:
        return build(load_table(config, None))
    source = require_file(data, "data")
    cache = get_window_cache()
    if cache is None:
        return build(load_table(config, source))
    return cache.get_or_build(source, wc, lambda: build(load_table(config, source)))


def write_report_files(out: Path, name: str, reports: list[EvalReport], row_label: str = "variant", **extra) -> None:
    """``<name>.json`` (report dicts plus ``extra``) and the aligned ``<name>.txt`` table."""
    write_json(out / f"{name}.json", {"reports": [r.to_dict() for r in reports], **extra})
    atomic_write_text(out / f"{name}.txt", format_report_table(reports, row_label))
    logger.info(f"[OK] Wrote {name}.json and {name}.txt to {out}")
