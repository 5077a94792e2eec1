"""
``extract``: per-agent, per-frame safety indices, centralities and behavior criteria over a whole table.
"""

import io
import logging

import numpy as np
import pandas as pd

from commands.common import CommandContext, load_table, require_file
from core.decorators import exit_codes, timed
from core.features.graph import CENTRALITY_CHANNELS, CRITERIA_CHANNELS, behavior_from_arrays
from core.features.safety import SAFETY_CHANNELS, safety_indices_from_arrays
from core.utils import atomic_write_text, write_effective_config

logger = logging.getLogger(__name__)


def _frame_table(channels: np.ndarray, names, agent_ids: np.ndarray, frames: np.ndarray, present: np.ndarray) -> str:
    rows, cols = np.nonzero(present)
    frame = pd.DataFrame(channels[rows, cols], columns=list(names))
    frame.insert(0, "frame", frames[cols].astype(np.int64))
    frame.insert(0, "agent_id", agent_ids[rows].astype(np.int64))
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.10g")
    return buffer.getvalue()


@exit_codes
@timed("EXTRACT")
def cmd_extract(ctx: CommandContext) -> None:
    """
    Each agent's full observed span is its history; cumulative indices start at
    the table's first frame.
    """
    config = ctx.config()
    table = load_table(config, require_file(ctx.args.data, "data"))
    arrays = table.to_arrays()
    ids = [int(a) for a in arrays.agent_ids]

    safety = safety_indices_from_arrays(
        arrays.positions, arrays.velocities, arrays.accelerations, arrays.present, config.features, ids
    )
    series, criteria, _ = behavior_from_arrays(arrays.positions, arrays.present, table.dt, config.features, ids)

    atomic_write_text(
        ctx.out / "safety_indices.csv",
        _frame_table(
            safety.as_channels(config.features.ttc_sentinel), SAFETY_CHANNELS, arrays.agent_ids, arrays.frames, arrays.present
        ),
    )
    atomic_write_text(
        ctx.out / "behavior_criteria.csv",
        _frame_table(
            np.concatenate([series.values, criteria.as_channels()], axis=-1),
            CENTRALITY_CHANNELS + CRITERIA_CHANNELS,
            arrays.agent_ids,
            arrays.frames,
            arrays.present,
        ),
    )
    write_effective_config(ctx.out, "extract", config.model_dump(mode="json"), data=str(ctx.args.data))
    logger.info(f"[OK] Extracted features for {len(ids)} agents over {len(arrays.frames)} frames")


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("extract", parents=list(parents), help="Emit safety-index and behavior-criteria CSVs")
    parser.add_argument("--data", help="Trajectory CSV")
    parser.set_defaults(handler=cmd_extract)
