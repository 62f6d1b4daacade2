import base64
import json
import shutil
import sys
import textwrap

import numpy as np
import pytest

from ctxwindow import cli
from ctxwindow.errors import CtxWindowError, PipelineError
from ctxwindow.pipeline import PipelineConfig, run_pipeline, stage_annotate, stage_ingest
from ctxwindow.synthetic import write_corpus

from conftest import snapshot, write_config


@pytest.fixture
def corpus(tmp_path):
    write_corpus(tmp_path / "in", seed=5, n_docs=3, duration_s=(20, 150))
    cfg = write_config(tmp_path / "cfg.json", input_dir=str(tmp_path / "in"),
                       output_dir=str(tmp_path / "out"), seed=5)
    return tmp_path, cfg


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_full_pipeline_outputs(corpus, capsys):
    tmp, cfg = corpus
    assert run("run", "--config", cfg) == 0
    out = tmp / "out"
    manifest = json.loads((out / "tokenizer_manifest.json").read_text())
    assert len(manifest["tokens"]) == 47
    records = json.loads((out / "chunks" / "doc0000.json").read_text())
    kinds = {r["kind"] for r in records}
    assert kinds == {"standard", "windowed"}
    for rec in records:
        assert rec["rendered"]
    for doc in ("doc0000", "doc0001", "doc0002"):
        ref = (out / "tagged" / f"{doc}.txt").read_text()
        assert (out / "sim" / f"{doc}.windowed.txt").read_text() == ref
        assert (out / "sim" / f"{doc}.standard.txt").read_text() == ref
    report = json.loads((out / "eval_report.json").read_text())
    assert report["windowed"]["wer"] == 0.0 and report["windowed"]["ner"]["micro"]["f1"] == 1.0
    pending = json.loads((out / "pending_features.json").read_text())
    assert len(pending) == sum(len(json.loads(p.read_text())) for p in (out / "chunks").glob("*.json"))


def test_rerun_is_byte_identical(corpus):
    tmp, cfg = corpus
    assert run("run", "--config", cfg) == 0
    first = snapshot(tmp / "out")
    shutil.rmtree(tmp / "out")
    assert run("run", "--config", cfg) == 0
    assert snapshot(tmp / "out") == first


def test_parallel_workers_match_serial(corpus):
    tmp, _ = corpus
    serial = PipelineConfig(str(tmp / "in"), str(tmp / "a"))
    parallel = PipelineConfig(str(tmp / "in"), str(tmp / "b"), workers=2)
    run_pipeline(serial)
    run_pipeline(parallel)
    a = {k: v for k, v in snapshot(tmp / "a").items() if k != "run_config.json"}
    b = {k: v for k, v in snapshot(tmp / "b").items() if k != "run_config.json"}
    assert a == b


def test_missing_annotation_names_doc(corpus, capsys):
    tmp, cfg = corpus
    (tmp / "in" / "doc0001.ann.json").unlink()
    c = PipelineConfig.load(cfg)
    stage_ingest(c)
    with pytest.raises(PipelineError, match="doc0001"):
        stage_annotate(c)
    assert run("run", "--config", cfg) == 1
    assert "doc0001" in capsys.readouterr().err


def test_bad_transcript_names_doc(corpus):
    tmp, cfg = corpus
    (tmp / "in" / "doc0002.xml").write_text('<doc id="doc0002"><t s="5" e="5">x</t></doc>')
    with pytest.raises(PipelineError, match=r"stage=ingest doc=doc0002.*zero-length"):
        run_pipeline(PipelineConfig.load(cfg))


def test_config_errors(tmp_path, capsys):
    with pytest.raises(CtxWindowError, match="unknown config keys"):
        PipelineConfig.from_dict({"input_dir": "a", "output_dir": "b", "colour": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"input_dir": "a", "output_dir": "b", "policy": "sideways"})
    cfg = write_config(tmp_path / "c.json", input_dir=str(tmp_path / "nope"), output_dir=str(tmp_path / "o"))
    assert run("run", "--config", cfg) == 2
    assert run("ingest") == 1
    assert "--config" in capsys.readouterr().err


def test_stage_commands_and_overrides(corpus, capsys):
    tmp, cfg = corpus
    for cmd in ("ingest", "annotate", "chunk", "layout", "stats"):
        assert run(cmd, "--config", cfg) == 0
    stats = json.loads((tmp / "out" / "stats.json").read_text())
    assert stats["documents"] == 3
    assert run("simulate", "--config", cfg, "--policy", "left-mid") == 0
    capsys.readouterr()
    assert run("eval", "--config", cfg) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["standard"]["wer"] == 0.0


def test_simulate_with_external_backend(corpus):
    tmp, cfg = corpus
    assert run("run", "--config", cfg, "--no-simulate") == 0
    backend = tmp / "backend.py"
    backend.write_text(textwrap.dedent(f"""
        import json, sys
        records = json.load(open({str(tmp / 'out' / 'chunks')!r} + "/" + sys.argv[1] + ".json"))
        table = {{(r["kind"], r["idx"]): r["pieces"]["mid" if r["kind"] == "windowed" else "chunk"]
                  for r in records}}
        for line in sys.stdin:
            req = json.loads(line)
            pieces = [dict(text=t, start=s, end=e) for t, s, e in table[(req["kind"], req["index"])]]
            print(json.dumps({{"pieces": pieces}}), flush=True)
    """))
    assert run("simulate", "--config", cfg, "--transcriber-cmd", f"{sys.executable} {backend} {{doc}}") == 0
    ref = (tmp / "out" / "tagged" / "doc0001.txt").read_text()
    assert (tmp / "out" / "sim" / "doc0001.windowed.txt").read_text() == ref


def test_eval_files(tmp_path, capsys):
    (tmp_path / "ref.txt").write_text("paid <MONEY>$15,000</MONEY> to <PERSON>Bryan Adams</PERSON>\n")
    (tmp_path / "hyp.txt").write_text("paid <MONEY>$15,000,000</MONEY> to <PERSON>Bryan Adam</PERSON>\n")
    assert run("eval", "--ref", tmp_path / "ref.txt", "--hyp", tmp_path / "hyp.txt",
               "--out", tmp_path / "r.json") == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["format"]["MONEY"]["mean"] == pytest.approx(4 / 7)
    assert report["format"]["PERSON"]["mean"] == pytest.approx(0.98182, abs=1e-5)
    (tmp_path / "bad.txt").write_text("<GPE>unclosed")
    assert run("eval", "--ref", tmp_path / "ref.txt", "--hyp", tmp_path / "bad.txt") == 1


def test_losscheck(tmp_path, capsys):
    logits = np.zeros((5, 4))
    (tmp_path / "plain.json").write_text(json.dumps(
        {"logits": logits.tolist(), "targets": [0, 1, 2, 3, 1], "t_mid": 1, "t_right": 4}))
    assert run("losscheck", "--input", tmp_path / "plain.json") == 0
    res = json.loads(capsys.readouterr().out)
    assert res["loss"] == pytest.approx(np.log(4), abs=1e-12)
    enc = {"b64": base64.b64encode(logits.tobytes()).decode(), "shape": [5, 4], "dtype": "float64"}
    (tmp_path / "b64.json").write_text(json.dumps(
        {"logits": enc, "targets": [0, 1, 2, 3, 1], "t_mid": 1, "t_right": 4}))
    assert run("losscheck", "--input", tmp_path / "b64.json", "--epsilon", "0") == 0
    assert json.loads(capsys.readouterr().out)["loss"] == pytest.approx(np.log(4), abs=1e-12)
    (tmp_path / "bad.json").write_text(json.dumps({"logits": [[0, 0]], "targets": [0], "t_mid": 1, "t_right": 1}))
    assert run("losscheck", "--input", tmp_path / "bad.json") == 1


def test_cache_commands(tmp_path, capsys):
    arr = np.arange(12, dtype=np.float32).reshape(3, 4)
    np.save(tmp_path / "x.npy", arr)
    root = tmp_path / "cache"
    assert run("cache", "put", "--key", "d:windowed:0", "--npy", tmp_path / "x.npy", "--cache-dir", root) == 0
    assert run("cache", "put", "--key", "d:windowed:0", "--npy", tmp_path / "x.npy", "--cache-dir", root) == 1
    assert run("cache", "get", "--key", "d:windowed:0", "--out", tmp_path / "y.npy", "--cache-dir", root) == 0
    assert np.array_equal(np.load(tmp_path / "y.npy"), arr)
    assert run("cache", "get", "--key", "d:windowed:1", "--cache-dir", root) == 1
    assert run("cache", "get", "--cache-dir", root) == 1


def test_cache_status(corpus, capsys):
    tmp, cfg = corpus
    assert run("run", "--config", cfg, "--no-simulate") == 0
    capsys.readouterr()
    assert run("cache", "status", "--config", cfg) == 0
    status = json.loads(capsys.readouterr().out)
    assert status["entries"] == 0 and status["pending"]


def test_synth_command(tmp_path, capsys):
    assert run("synth", tmp_path / "c", "--docs", "2", "--seed", "3", "--max-s", "40") == 0
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == \
        ["doc0000.ann.json", "doc0000.xml", "doc0001.ann.json", "doc0001.xml"]


def test_module_entry_point(tmp_path):
    import subprocess
    res = subprocess.run([sys.executable, "-m", "ctxwindow", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "losscheck" in res.stdout
