"""Toolkit for cleaning OCR-damaged Chinese math Q/A corpora.

Pipeline: pair crawled records with clean seed records, turn the pairs into
training data for a format-conversion model, run that model over the crawl
through a chat-completions endpoint, and grade answers.
"""

from .corpus import Corpus, CorpusError, Record, Source, ingest, normalize
from .degrader import DegradationManifest, DegradationSpec, degrade
from .evaluator import equivalent, extract_answer, grade_dataset
from .matcher import MatchConfig, is_subsequence, match_pairs
from .rulecleaner import clean
from .sftgen import build_training_set, extract_output, render_prompt, render_target

__version__ = "0.1.0"

__all__ = [
    "Corpus", "CorpusError", "Record", "Source", "ingest", "normalize",
    "DegradationManifest", "DegradationSpec", "degrade",
    "equivalent", "extract_answer", "grade_dataset",
    "MatchConfig", "is_subsequence", "match_pairs", "clean",
    "build_training_set", "extract_output", "render_prompt", "render_target",
]
