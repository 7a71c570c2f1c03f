"""Stacked ensembles for knowledge-base slot filling.

The package turns the response files of several slot-filling systems into a
single, more accurate run.  Typical flow::

    from slotstack.pipeline import YearData, PipelineOptions, run_pipeline
    res = run_pipeline(YearData.load("data/A"), YearData.load("data/B"), PipelineOptions())
    print(res.report.to_text())
"""
from .model import Candidate, DataError, KeyEntry, Provenance, Query, ResponseLine, group_candidates, normalize_fill

__version__ = "0.1.0"

__all__ = ["Candidate", "DataError", "KeyEntry", "Provenance", "Query", "ResponseLine", "group_candidates",
           "normalize_fill", "__version__"]
