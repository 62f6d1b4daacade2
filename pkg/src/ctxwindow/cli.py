"""Command line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import base64
import json
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .cache import ChunkKey, FeatureCache
from .errors import CtxWindowError, LossInputError
from .infersim import SubprocessTranscriber
from .metrics import evaluate
from .numerics import DEFAULT_EPSILON, TargetSequence, masked_loss, per_token_ce
from .synthetic import write_corpus

log = logging.getLogger("ctxwindow")


def _config(args) -> pipeline.PipelineConfig:
    if not args.config:
        raise CtxWindowError("--config is required for this command")
    cfg = pipeline.PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.policy is not None:
        cfg.policy = args.policy
    return cfg


def _print(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def decode_logits(spec) -> np.ndarray:
    """Plain nested list, or {"b64": ..., "shape": [N, V], "dtype": "float64"}."""
    if isinstance(spec, dict):
        raw = base64.b64decode(spec["b64"])
        return np.frombuffer(raw, dtype=spec.get("dtype", "float64")).reshape(spec["shape"])
    return np.asarray(spec, dtype=np.float64)


def losscheck(data: dict) -> dict:
    try:
        logits = decode_logits(data["logits"])
        target = TargetSequence(tuple(data["targets"]), data["t_mid"], data["t_right"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LossInputError(f"bad loss-check input: {exc}") from None
    eps = data.get("epsilon", DEFAULT_EPSILON)
    return {
        "loss": masked_loss(logits, target, eps),
        "token_ce": per_token_ce(logits, target, eps).tolist(),
    }


def cmd_stage(args) -> int:
    cfg = _config(args)
    stage = {
        "ingest": pipeline.stage_ingest,
        "annotate": pipeline.stage_annotate,
        "chunk": pipeline.stage_chunk,
        "layout": pipeline.stage_layout,
        "stats": pipeline.stage_stats,
    }[args.command]
    result = stage(cfg)
    _print(result)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    summary = pipeline.run_pipeline(cfg, simulate=not args.no_simulate)
    _print({"documents": len(summary["documents"]), "pending_features": summary["pending_features"]})
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if not args.transcriber_cmd:
        _print(pipeline.stage_simulate(cfg))
        return 0
    command = shlex.split(args.transcriber_cmd)

    def factory(doc_id):
        return SubprocessTranscriber([part.replace("{doc}", doc_id) for part in command])

    _print(pipeline.stage_simulate(cfg, factory))
    return 0


def cmd_eval(args) -> int:
    if args.ref and args.hyp:
        ref = Path(args.ref).read_text("utf-8").rstrip("\n")
        hyp = Path(args.hyp).read_text("utf-8").rstrip("\n")
        report = evaluate([(ref, hyp)])
        if args.out:
            pipeline.write_json(Path(args.out), report)
        _print(report)
        return 0
    _print(pipeline.stage_eval(_config(args), args.hyp_dir))
    return 0


def cmd_losscheck(args) -> int:
    data = json.loads(Path(args.input).read_text("utf-8"))
    if args.epsilon is not None:
        data["epsilon"] = args.epsilon
    _print(losscheck(data))
    return 0


def cmd_cache(args) -> int:
    if args.cache_dir:
        root = Path(args.cache_dir)
    else:
        root = _config(args).cache_root
    cache = FeatureCache(root)
    if args.action == "status":
        cfg = _config(args)
        pending = pipeline.stage_cache(cfg)
        _print({"entries": len(cache.keys()), "pending": pending})
        return 0
    if not args.key:
        raise CtxWindowError(f"cache {args.action} needs --key doc:kind:idx")
    key = ChunkKey.parse(args.key)
    if args.action == "put":
        entry = cache.put(key, np.load(args.npy, allow_pickle=False))
        _print({"key": str(key), **entry})
    else:
        array = cache.get(key)
        if args.out:
            np.save(args.out, array)
        _print({"key": str(key), "shape": list(array.shape), "dtype": str(array.dtype)})
    return 0


def cmd_synth(args) -> int:
    ids = write_corpus(args.out_dir, args.seed or 0, args.docs,
                       duration_s=(args.min_s, args.max_s))
    _print({"documents": len(ids), "dir": args.out_dir})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--policy", choices=["left-mid", "mid-right"],
                        help="audio span policy for windowed inference")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ctxwindow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "annotate", "chunk", "layout", "stats"):
        sub.add_parser(name, parents=[common]).set_defaults(func=cmd_stage)

    p = sub.add_parser("run", parents=[common], help="all stages in order")
    p.add_argument("--no-simulate", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--transcriber-cmd",
                   help="external backend speaking JSON lines on stdin/stdout, started once per "
                        "document with {doc} replaced by its id (default: oracle)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", parents=[common])
    p.add_argument("--ref", help="reference tagged transcript file")
    p.add_argument("--hyp", help="hypothesis tagged transcript file")
    p.add_argument("--hyp-dir", help="directory of <doc>.<model>.txt hypotheses")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("losscheck", parents=[common])
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic input corpus")
    p.add_argument("out_dir")
    p.add_argument("--docs", type=int, default=5)
    p.add_argument("--min-s", type=float, default=10.0)
    p.add_argument("--max-s", type=float, default=300.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cache", parents=[common])
    p.add_argument("action", choices=["put", "get", "status"])
    p.add_argument("--key")
    p.add_argument("--npy", help="array to store (put)")
    p.add_argument("--out", help="where to save the array (get)")
    p.add_argument("--cache-dir")
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CtxWindowError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
