"""Offline figures and machine-readable summaries for laboratory CSV
artifacts.

This package is a read-only consumer of the file formats the laboratory
documents — float CSVs at full round-trip precision plus a
``manifest.json`` per artifact directory. It renders the standard
figures (energy decay, budget tables, defect-mass bars, refinement
log-log plots, epsilon convergence) and replays each study's summary
lines from the tables alone, byte-identical to the producer's, so the
published flags and fitted orders can be verified independently.
"""

from .figures import fitted_order
from .replay import (
    PAIR_FLOOR,
    replay_directory,
    replay_epsilon_sweep,
    replay_refinement,
    replay_truncation_sweep,
)
from .report import (
    KNOWN_FIGURES,
    ReportResult,
    ReportSpec,
    __version__,
    main,
    make_figures,
)
from .tables import MissingColumnError, Table, read_manifest, read_table

__all__ = [
    "KNOWN_FIGURES",
    "MissingColumnError",
    "PAIR_FLOOR",
    "ReportResult",
    "ReportSpec",
    "Table",
    "__version__",
    "fitted_order",
    "main",
    "make_figures",
    "read_manifest",
    "read_table",
    "replay_directory",
    "replay_epsilon_sweep",
    "replay_refinement",
    "replay_truncation_sweep",
]
