"""Exception hierarchy shared by every pipeline stage."""


class CtxWindowError(Exception):
    """Base class for validation failures (CLI exit code 1)."""


class TranscriptError(CtxWindowError):
    pass


class AnnotationError(CtxWindowError):
    pass


class ChunkingError(CtxWindowError):
    pass


class TagError(CtxWindowError):
    """Unbalanced, nested or unknown entity tags in text."""


class LossInputError(CtxWindowError):
    pass


class ProtocolViolation(CtxWindowError):
    """A transcriber answered outside the contract of its segment request."""

    def __init__(self, segment: int, message: str):
        super().__init__(f"segment {segment}: {message}")
        self.segment = segment


class CacheError(CtxWindowError):
    pass


class CacheMissError(CacheError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class PipelineError(CtxWindowError):
    """Stage failure carrying the location it happened at."""

    def __init__(self, stage: str, message: str, doc_id: str | None = None,
                 chunk_index: int | None = None):
        where = [f"stage={stage}"]
        if doc_id is not None:
            where.append(f"doc={doc_id}")
        if chunk_index is not None:
            where.append(f"chunk={chunk_index}")
        super().__init__(f"[{' '.join(where)}] {message}")
        self.stage = stage
        self.doc_id = doc_id
        self.chunk_index = chunk_index
