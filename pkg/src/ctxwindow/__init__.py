"""Windowed-context corpus preparation and evaluation for long-form entity-tagged ASR."""

from .annotate import (LABELS, AnnotatedTranscript, EntitySpan, embed_tags, load_annotations,
                       merge_annotations, regex_extract_custom, strip_tags)
from .chunk import (StandardChunkConfig, WindowConfig, plan_standard_chunks,
                    plan_windowed_chunks)
from .ingest import Token, Transcript, corpus_stats, parse_transcript_xml, serialize_transcript_xml
from .layout import build_tokenizer_manifest, render_standard_chunk, render_windowed_chunk
from .metrics import cer, evaluate, jaro_winkler, normalize_for_wer, wer
from .numerics import masked_loss

__all__ = [
    "LABELS", "AnnotatedTranscript", "EntitySpan", "embed_tags", "load_annotations",
    "merge_annotations", "regex_extract_custom", "strip_tags",
    "StandardChunkConfig", "WindowConfig", "plan_standard_chunks", "plan_windowed_chunks",
    "Token", "Transcript", "corpus_stats", "parse_transcript_xml", "serialize_transcript_xml",
    "build_tokenizer_manifest", "render_standard_chunk", "render_windowed_chunk",
    "cer", "evaluate", "jaro_winkler", "normalize_for_wer", "wer", "masked_loss",
]

__version__ = "0.1.0"
