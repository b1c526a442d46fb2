"""dcrkit: dynamic competing-risks survival analysis toolkit."""

from .cohort import (
    Cohort,
    EventRecord,
    Subject,
    TimeSeries,
    ingest_stream,
    read_cohort,
    relabel_for_ablation,
    truncate_at,
    write_cohort,
)
from .models.base import CifEstimate, PmfEstimate, TimeGrid, cif_from_pmf
from .simulator import GenerativeConfig, simulate, true_cif

__version__ = "0.1.0"

__all__ = [
    "Cohort",
    "EventRecord",
    "Subject",
    "TimeSeries",
    "ingest_stream",
    "read_cohort",
    "relabel_for_ablation",
    "truncate_at",
    "write_cohort",
    "CifEstimate",
    "PmfEstimate",
    "TimeGrid",
    "cif_from_pmf",
    "GenerativeConfig",
    "simulate",
    "true_cif",
    "__version__",
]
