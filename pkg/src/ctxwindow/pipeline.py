"""End-to-end corpus preparation: ingest, annotate, chunk, layout, cache index, simulate, evaluate.

Input directory: ``<doc_id>.xml`` transcripts and ``<doc_id>.ann.json``
annotations. Everything written under ``output_dir`` is a pure function of
the inputs and config, so re-runs are byte-identical.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from .annotate import (AnnotatedTranscript, dump_annotations, embed_tags, load_annotations,
                       load_patterns, merge_annotations, regex_extract_custom)
from .cache import ChunkKey, FeatureCache, atomic_write
from .chunk import (BlockLayout, StandardChunkConfig, WindowConfig, plan_standard_chunks,
                    plan_windowed_chunks, timed_pieces, window_texts)
from .errors import CtxWindowError, PipelineError
from .infersim import (AudioSpanPolicy, OracleTranscriber, run_standard_inference,
                       run_windowed_inference)
from .ingest import Transcript, corpus_stats, parse_transcript_xml
from .layout import DEFAULT_BASE_VOCAB, build_tokenizer_manifest, render_standard_chunk, render_windowed_chunk
from .metrics import evaluate
from .numerics import DEFAULT_EPSILON, TRAINING_DEFAULTS

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    input_dir: str
    output_dir: str
    window: WindowConfig = field(default_factory=WindowConfig)
    standard: StandardChunkConfig = field(default_factory=StandardChunkConfig)
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    pattern_file: str | None = None
    policy: str = AudioSpanPolicy.MID_RIGHT.value
    base_vocab_size: int = DEFAULT_BASE_VOCAB
    cache_dir: str | None = None
    workers: int = 1
    training: dict = field(default_factory=lambda: dict(TRAINING_DEFAULTS))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        if "window" in data:
            data["window"] = WindowConfig(**data["window"])
        if "standard" in data:
            data["standard"] = StandardChunkConfig(**data["standard"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise CtxWindowError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        AudioSpanPolicy(cfg.policy)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)

    def check_paths(self) -> None:
        if not Path(self.input_dir).is_dir():
            raise FileNotFoundError(f"input_dir {self.input_dir} does not exist")
        if self.pattern_file and not Path(self.pattern_file).is_file():
            raise FileNotFoundError(f"pattern_file {self.pattern_file} does not exist")

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def cache_root(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else self.out / "features"


def dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def write_json(path: Path, obj) -> None:
    atomic_write(path, dump_json(obj))


def _read_json(path: Path):
    return json.loads(path.read_text("utf-8"))


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def doc_ids(cfg: PipelineConfig) -> list[str]:
    return sorted(p.name[:-4] for p in Path(cfg.input_dir).glob("*.xml"))


def _guard(stage: str, doc_id: str | None, fn: Callable, *args):
    try:
        return fn(*args)
    except PipelineError:
        raise
    except CtxWindowError as exc:
        raise PipelineError(stage, str(exc), doc_id) from exc


# -- ingest ---------------------------------------------------------------

def _ingest_one(job: tuple[PipelineConfig, str]) -> str:
    cfg, doc_id = job
    raw = (Path(cfg.input_dir) / f"{doc_id}.xml").read_bytes()
    tr = _guard("ingest", doc_id, parse_transcript_xml, raw)
    if tr.doc_id != doc_id:
        raise PipelineError("ingest", f"file name does not match <doc id={tr.doc_id!r}>", doc_id)
    write_json(cfg.out / "transcripts" / f"{doc_id}.json", tr.to_dict())
    return doc_id


def stage_ingest(cfg: PipelineConfig) -> list[str]:
    cfg.check_paths()
    ids = doc_ids(cfg)
    if not ids:
        raise PipelineError("ingest", f"no *.xml transcripts in {cfg.input_dir}")
    return _map(_ingest_one, [(cfg, d) for d in ids], cfg.workers)


def load_transcript(cfg: PipelineConfig, doc_id: str) -> Transcript:
    path = cfg.out / "transcripts" / f"{doc_id}.json"
    if not path.exists():
        raise PipelineError("load", "transcript not ingested yet", doc_id)
    return Transcript.from_dict(_read_json(path))


def ingested_ids(cfg: PipelineConfig) -> list[str]:
    return sorted(p.name[:-5] for p in (cfg.out / "transcripts").glob("*.json"))


# -- annotate -------------------------------------------------------------

def _annotate_one(job: tuple[PipelineConfig, str]) -> str:
    cfg, doc_id = job
    tr = load_transcript(cfg, doc_id)
    ann_path = Path(cfg.input_dir) / f"{doc_id}.ann.json"
    if not ann_path.exists():
        raise PipelineError("annotate", f"missing annotation file {ann_path.name}", doc_id)
    external = _guard("annotate", doc_id, load_annotations, ann_path.read_bytes(), tr)
    patterns = _guard("annotate", doc_id, load_patterns, cfg.pattern_file)
    custom = regex_extract_custom(tr, patterns)
    merged = merge_annotations(external, custom)
    annotated = _guard("annotate", doc_id, AnnotatedTranscript, tr, tuple(merged))
    atomic_write(cfg.out / "annotations" / f"{doc_id}.ann.json",
                 (dump_annotations(merged) + "\n").encode("utf-8"))
    atomic_write(cfg.out / "tagged" / f"{doc_id}.txt", (embed_tags(annotated) + "\n").encode("utf-8"))
    return doc_id


def stage_annotate(cfg: PipelineConfig) -> list[str]:
    return _map(_annotate_one, [(cfg, d) for d in ingested_ids(cfg)], cfg.workers)


def load_annotated(cfg: PipelineConfig, doc_id: str) -> AnnotatedTranscript:
    tr = load_transcript(cfg, doc_id)
    path = cfg.out / "annotations" / f"{doc_id}.ann.json"
    if not path.exists():
        raise PipelineError("load", "document not annotated yet", doc_id)
    spans = load_annotations(path.read_bytes(), tr)
    return AnnotatedTranscript(tr, tuple(spans))


def annotated_ids(cfg: PipelineConfig) -> list[str]:
    return sorted(p.name[:-9] for p in (cfg.out / "annotations").glob("*.ann.json"))


# -- chunk ----------------------------------------------------------------

def chunk_records(annotated: AnnotatedTranscript, cfg: PipelineConfig) -> list[dict]:
    doc_id = annotated.transcript.doc_id
    layout = BlockLayout(annotated)
    records = []
    for c in _guard("chunk", doc_id, plan_standard_chunks, annotated, cfg.standard, layout):
        records.append({
            "doc_id": doc_id, "idx": c.chunk_index, "kind": "standard",
            "extents": {"left": None, "mid": list(c.time_extent), "right": None},
            "nominal_extent": list(c.nominal_extent),
            "token_ranges": {"left": None, "mid": list(c.token_range), "right": None},
            "text": {"left": None, "mid": embed_tags(annotated, *c.token_range), "right": None},
            "pieces": {"chunk": [list(p) for p in timed_pieces(annotated, layout, c.token_range)]},
        })
    for c in _guard("chunk", doc_id, plan_windowed_chunks, annotated, cfg.window, layout):
        records.append({
            "doc_id": doc_id, "idx": c.chunk_index, "kind": "windowed",
            "extents": {w: list(c.extent_of(w)) for w in ("left", "mid", "right")},
            "token_ranges": {w: list(c.range_of(w)) for w in ("left", "mid", "right")},
            "text": window_texts(c, annotated),
            "assignment": [{"span": si, "window": w} for si, w in c.assignment],
            "pieces": {"mid": [list(p) for p in timed_pieces(annotated, layout, c.mid_range)]},
        })
    return records


def _chunk_one(job: tuple[PipelineConfig, str]) -> str:
    cfg, doc_id = job
    annotated = load_annotated(cfg, doc_id)
    write_json(cfg.out / "chunks" / f"{doc_id}.json", chunk_records(annotated, cfg))
    return doc_id


def stage_chunk(cfg: PipelineConfig) -> list[str]:
    return _map(_chunk_one, [(cfg, d) for d in annotated_ids(cfg)], cfg.workers)


def load_chunk_manifest(cfg: PipelineConfig, doc_id: str) -> list[dict]:
    path = cfg.out / "chunks" / f"{doc_id}.json"
    if not path.exists():
        raise PipelineError("load", "document not chunked yet", doc_id)
    return _read_json(path)


def chunked_ids(cfg: PipelineConfig) -> list[str]:
    return sorted(p.name[:-5] for p in (cfg.out / "chunks").glob("*.json"))


# -- layout ---------------------------------------------------------------

def _layout_one(job: tuple[PipelineConfig, str]) -> str:
    cfg, doc_id = job
    records = load_chunk_manifest(cfg, doc_id)
    for rec in records:
        try:
            if rec["kind"] == "windowed":
                rendered = render_windowed_chunk(rec["text"])
            else:
                rendered = render_standard_chunk(rec["pieces"]["chunk"], tuple(rec["extents"]["mid"]))
        except CtxWindowError as exc:
            raise PipelineError("layout", str(exc), doc_id, rec["idx"]) from exc
        rec["rendered"] = rendered.text
    write_json(cfg.out / "chunks" / f"{doc_id}.json", records)
    return doc_id


def stage_layout(cfg: PipelineConfig) -> list[str]:
    write_json(cfg.out / "tokenizer_manifest.json",
               build_tokenizer_manifest(base_vocab_size=cfg.base_vocab_size).to_dict())
    return _map(_layout_one, [(cfg, d) for d in chunked_ids(cfg)], cfg.workers)


# -- cache index ----------------------------------------------------------

def stage_cache(cfg: PipelineConfig) -> list[str]:
    """Write pending_features.json: every manifest chunk lacking a cache entry."""
    cache = FeatureCache(cfg.cache_root)
    wanted = []
    for doc_id in chunked_ids(cfg):
        for rec in load_chunk_manifest(cfg, doc_id):
            wanted.append(ChunkKey(rec["doc_id"], rec["idx"], rec["kind"]))
    pending = [str(k) for k in cache.pending(wanted)]
    write_json(cfg.out / "pending_features.json", pending)
    return pending


# -- simulate / eval ------------------------------------------------------

def stage_simulate(cfg: PipelineConfig, transcriber_factory: Callable | None = None) -> list[str]:
    """Run both inference protocols per document.

    Without a factory the transcriber is the oracle built from the chunk
    manifest, which checks the stitching logic end to end.
    """
    done = []
    for doc_id in chunked_ids(cfg):
        records = load_chunk_manifest(cfg, doc_id)
        duration = load_transcript(cfg, doc_id).duration
        transcriber = (transcriber_factory(doc_id) if transcriber_factory
                       else OracleTranscriber.from_manifest(records))
        try:
            windowed = run_windowed_inference(transcriber, duration, cfg.window,
                                              AudioSpanPolicy(cfg.policy))
            standard = run_standard_inference(transcriber, duration, cfg.standard)
        except CtxWindowError as exc:
            raise PipelineError("simulate", str(exc), doc_id,
                                getattr(exc, "segment", None)) from exc
        finally:
            close = getattr(transcriber, "close", None)
            if close:
                close()
        atomic_write(cfg.out / "sim" / f"{doc_id}.windowed.txt", (windowed + "\n").encode("utf-8"))
        atomic_write(cfg.out / "sim" / f"{doc_id}.standard.txt", (standard + "\n").encode("utf-8"))
        done.append(doc_id)
    return done


def stage_eval(cfg: PipelineConfig, hyp_dir: str | Path | None = None) -> dict:
    hyp_dir = Path(hyp_dir) if hyp_dir else cfg.out / "sim"
    report = {}
    for model in ("windowed", "standard"):
        pairs = []
        for doc_id in annotated_ids(cfg):
            hyp_path = hyp_dir / f"{doc_id}.{model}.txt"
            if not hyp_path.exists():
                continue
            ref = (cfg.out / "tagged" / f"{doc_id}.txt").read_text("utf-8").rstrip("\n")
            pairs.append((ref, hyp_path.read_text("utf-8").rstrip("\n")))
        if pairs:
            report[model] = _guard("eval", None, evaluate, pairs)
    write_json(cfg.out / "eval_report.json", report)
    return report


def stage_stats(cfg: PipelineConfig) -> dict:
    corpus = [(a.transcript, a.spans) for a in (load_annotated(cfg, d) for d in annotated_ids(cfg))]
    stats = corpus_stats(corpus).to_dict()
    write_json(cfg.out / "stats.json", stats)
    return stats


def run_pipeline(cfg: PipelineConfig, simulate: bool = True) -> dict:
    cfg.check_paths()
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "run_config.json", cfg.to_dict())
    summary = {"documents": stage_ingest(cfg)}
    stage_annotate(cfg)
    stage_chunk(cfg)
    stage_layout(cfg)
    summary["pending_features"] = len(stage_cache(cfg))
    summary["stats"] = stage_stats(cfg)
    if simulate:
        stage_simulate(cfg)
        summary["eval"] = stage_eval(cfg)
    log.info("pipeline finished for %d documents", len(summary["documents"]))
    return summary
