import json

import pytest

from radex.cli import main
from radex.core import Corpus, Document
from radex.io import dump_annotations, dump_corpus, load_annotations, read_jsonl

from conftest import REF_AUX_CLASSIFY_TARGET, REF_AUX_SPAN_TARGET, REF_SENTENCE
from oracles import term_corpus


@pytest.fixture
def synth_files(tmp_path):
    corpus, ann = tmp_path / "corpus.jsonl", tmp_path / "gold.jsonl"
    code = main(["synth", "--sentences", "60", "--seed", "4",
                 "--out-corpus", str(corpus), "--out-annotations", str(ann)])
    assert code == 0
    return corpus, ann


@pytest.fixture
def ref_files(tmp_path, ref_event):
    corpus = Corpus([Document("ref", (REF_SENTENCE,), "PET CT SKULL THIGH")])
    c, a = tmp_path / "ref_corpus.jsonl", tmp_path / "ref_gold.jsonl"
    dump_corpus(corpus, c)
    dump_annotations({("ref", 0): [ref_event]}, a, corpus)
    return c, a


def test_extract_replay(tmp_path, synth_files, capsys):
    corpus, ann = synth_files
    out = tmp_path / "pred.jsonl"
    capsys.readouterr()
    assert main(["extract", "--corpus", str(corpus), "--annotations", str(ann),
                 "--pipeline", "one-step-blocks", "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passes_per_sample"] == 1.0
    assert report["failed_sentences"] == 0
    assert out.read_text() == ann.read_text()


def test_extract_writes_report_file(tmp_path, synth_files):
    corpus, ann = synth_files
    report = tmp_path / "cost.json"
    assert main(["extract", "--corpus", str(corpus), "--annotations", str(ann), "--pipeline", "three-step",
                 "--workers", "3", "--out", str(tmp_path / "p.jsonl"), "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["pipeline"] == "three-step"
    assert data["passes_per_sample"] > 1.0
    assert load_annotations(tmp_path / "p.jsonl", None)


def test_extract_empty_corpus(tmp_path, capsys):
    corpus, ann = tmp_path / "c.jsonl", tmp_path / "a.jsonl"
    corpus.write_text("")
    ann.write_text("")
    out = tmp_path / "p.jsonl"
    assert main(["extract", "--corpus", str(corpus), "--annotations", str(ann),
                 "--pipeline", "three-step", "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["empty"] and report["passes_per_sample"] == 0.0
    assert out.read_text() == ""


def test_extract_context_without_index(tmp_path, synth_files, capsys):
    corpus, ann = synth_files
    code = main(["extract", "--corpus", str(corpus), "--annotations", str(ann),
                 "--pipeline", "one-step-blocks-context", "--context", "all", "--out", str(tmp_path / "p")])
    assert code == 1
    assert "RetrieverMissing" in capsys.readouterr().err


def test_extract_context_with_index(tmp_path, synth_files, capsys):
    corpus, ann = synth_files
    pool = tmp_path / "pool.txt"
    pool.write_text("Small nodule in the liver.\nMass in the spleen is stable.\n")
    index = tmp_path / "pool.bm25"
    assert main(["build-index", str(pool), "--out", str(index)]) == 0
    out = tmp_path / "p.jsonl"
    assert main(["extract", "--corpus", str(corpus), "--annotations", str(ann), "--index", str(index),
                 "--pipeline", "one-step-blocks-context", "--out", str(out)]) == 0
    assert out.read_text() == ann.read_text()


def test_extract_remote_total_failure(tmp_path, ref_files, capsys):
    corpus, _ = ref_files
    code = main(["extract", "--corpus", str(corpus), "--backend", "remote", "--endpoint",
                 "http://127.0.0.1:9/generate", "--retries", "0", "--timeout", "2", "--out", str(tmp_path / "p")])
    assert code == 3
    assert "every sentence failed" in capsys.readouterr().err


def test_extract_usage_errors(tmp_path, ref_files, capsys):
    corpus, _ = ref_files
    assert main(["extract", "--corpus", str(corpus), "--out", str(tmp_path / "p")]) == 1
    assert main(["extract", "--corpus", str(corpus), "--backend", "remote", "--out", "p"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["extract", "--pipeline", "four-step"])
    assert exc.value.code == 1


def test_missing_input_is_schema_error(tmp_path):
    assert main(["extract", "--corpus", str(tmp_path / "nope.jsonl"), "--annotations", "x",
                 "--out", str(tmp_path / "p")]) == 2


def test_evaluate_self(synth_files, capsys):
    _, ann = synth_files
    capsys.readouterr()
    assert main(["evaluate", str(ann), str(ann)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert all(v["f1"] == 1.0 for v in report["levels"].values())


def test_evaluate_perturbed_reference(tmp_path, ref_files, capsys):
    corpus, gold = ref_files
    row = json.loads(gold.read_text())
    row["events"][0]["anatomies"][2].update(parent="Abdomen", child="Spleen")  # wrong child, right parent
    del row["events"][0]["anatomies"][1]  # one anatomy missed
    pred = tmp_path / "pred.jsonl"
    pred.write_text(json.dumps(row) + "\n")
    assert main(["evaluate", str(gold), str(pred), "--corpus", str(corpus)]) == 0
    levels = json.loads(capsys.readouterr().out)["levels"]
    assert levels["trigger"]["f1"] == 1.0
    assert (levels["anatomy_span"]["tp"], levels["anatomy_span"]["fp"], levels["anatomy_span"]["fn"]) == (2, 0, 1)
    assert levels["anatomy_parent"]["r"] == pytest.approx(2 / 3)
    child = levels["anatomy_child"]
    assert (child["tp"], child["fp"], child["fn"]) == (1, 1, 2)
    assert child["p"] == 0.5 and child["r"] == pytest.approx(1 / 3) and child["f1"] == pytest.approx(0.4)


def test_evaluate_mismatched_docs(tmp_path, ref_files, synth_files):
    _, ref = ref_files
    _, synth = synth_files
    assert main(["evaluate", str(ref), str(synth)]) == 2


def test_filter_corpus(tmp_path, capsys):
    sentences, bearing = term_corpus()
    src = tmp_path / "pool.txt"
    src.write_text("\n".join(sentences) + "\n")
    out = tmp_path / "kept.txt"
    assert main(["filter-corpus", str(src), "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "36/100 retained"
    assert out.read_text().splitlines() == [sentences[i] for i in bearing]


def test_filter_custom_terms(tmp_path, capsys):
    src, terms = tmp_path / "s.txt", tmp_path / "t.txt"
    src.write_text("mass in the liver today\nmass in the kidney today\n")
    terms.write_text("kidney\n")
    assert main(["filter-corpus", str(src), "--terms", str(terms), "--out", str(tmp_path / "o")]) == 0
    assert "1/2 retained" in capsys.readouterr().out


def test_retrieve_excludes_query(tmp_path, capsys):
    pool = tmp_path / "pool.txt"
    pool.write_text("Liver is normal.\nLiver lesion again seen.\nSpleen normal.\n")
    index = tmp_path / "i.bm25"
    assert main(["build-index", str(pool), "--out", str(index)]) == 0
    capsys.readouterr()
    assert main(["retrieve", "--index", str(index), "--query", "Liver is normal.", "--top-k", "2"]) == 0
    hits = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(hits) == 2
    assert "Liver is normal." not in [h["text"] for h in hits]
    assert hits[0]["score"] >= hits[1]["score"]


def test_retrieve_bad_snapshot(tmp_path):
    bad = tmp_path / "bad.bm25"
    bad.write_text("no")
    assert main(["retrieve", "--index", str(bad), "--query", "x"]) == 2


def test_emit_training_reference(tmp_path, ref_files, capsys):
    corpus, gold = ref_files
    out = tmp_path / "train.jsonl"
    assert main(["emit-training", "--corpus", str(corpus), "--annotations", str(gold),
                 "--aux", "--aux-anatomy-span", "--out", str(out)]) == 0
    rows = [r for _, r in read_jsonl(out)]
    targets = {r["task"]: r["target"] for r in rows}
    assert targets["aux_trigger_classification"] == REF_AUX_CLASSIFY_TARGET
    assert targets["aux_anatomy_span"] == REF_AUX_SPAN_TARGET
    assert "wrote 8 records" in capsys.readouterr().out


def test_config_file_defaults(tmp_path, synth_files, capsys):
    corpus, ann = synth_files
    out = tmp_path / "p.jsonl"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"corpus": str(corpus), "annotations": str(ann), "out": str(out),
                               "pipeline": "two-step"}))
    capsys.readouterr()
    assert main(["--config", str(cfg), "extract"]) == 0
    assert json.loads(capsys.readouterr().out)["pipeline"] == "two-step"
    # explicit flags win over the file
    assert main(["--config", str(cfg), "extract", "--pipeline", "one-step-vanilla"]) == 0
    assert json.loads(capsys.readouterr().out)["pipeline"] == "one-step-vanilla"


def test_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["--config", str(cfg), "synth", "--out-corpus", "a", "--out-annotations", "b"]) == 1


def test_synth_is_deterministic(tmp_path):
    paths = []
    for n in range(2):
        c, a = tmp_path / f"c{n}", tmp_path / f"a{n}"
        assert main(["synth", "--sentences", "30", "--seed", "9", "--out-corpus", str(c),
                     "--out-annotations", str(a)]) == 0
        paths.append((c.read_text(), a.read_text()))
    assert paths[0] == paths[1]
