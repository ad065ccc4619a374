import json

import httpx
import pytest

from radex.backends import (
    BackendTimeout,
    GoldReplayBackend,
    MalformedResponse,
    NoisyReplayBackend,
    RemoteBackend,
    RetriesExhausted,
    UnknownPrompt,
)
from radex.context import ContextKind, RetrieverMissing
from radex.core import Corpus, Document, Sentence
from radex.evaluation import evaluate
from radex.pipeline import PipelineKind, PassLog, RunConfig, cost_report, run
from radex.retrieval import SearchIndex
from radex.synthetic import SyntheticShape, synthetic_corpus
from radex.textio import StepKind, build_prompt, make_focus, parse_blocks

from conftest import REF_SENTENCE, SOFT_TISSUE

QUIET = "No acute abnormality is seen."
KINDS = list(PipelineKind)


@pytest.fixture
def small(ref_event):
    corpus = Corpus([Document("r1", ("FINDINGS:", REF_SENTENCE, QUIET), "PET CT SKULL THIGH")])
    gold = {("r1", 1): [ref_event.without_spans()]}
    return corpus, gold


def _config(corpus):
    pool = [s.text for s in corpus.iter_sentences()]
    return RunConfig(retriever=SearchIndex(pool))


def _backend(kind, corpus, gold):
    return GoldReplayBackend(corpus, gold, kind.output_format)


@pytest.mark.parametrize("kind, passes", [
    (PipelineKind.THREE_STEP, 5),
    (PipelineKind.TWO_STEP, 2),
    (PipelineKind.ONE_STEP_VANILLA, 1),
    (PipelineKind.ONE_STEP_BLOCKS, 1),
    (PipelineKind.ONE_STEP_BLOCKS_CONTEXT, 4),
])
def test_pass_counts(small, ref_event, kind, passes):
    corpus, gold = small
    result = run(kind, corpus, _backend(kind, corpus, gold), config=_config(corpus))
    assert result.logs[("r1", 1)].passes == passes
    # header and quiet sentences have no findings: one pass each
    assert result.logs[("r1", 0)].passes == result.logs[("r1", 2)].passes == 1
    assert result.predictions[("r1", 1)] == [ref_event]
    assert result.predictions[("r1", 2)] == []
    assert result.failures == []


def test_three_step_pass_sequence(small):
    corpus, gold = small
    kind = PipelineKind.THREE_STEP
    result = run(kind, corpus, _backend(kind, corpus, gold))
    assert result.logs[("r1", 1)].steps == [StepKind.TRIGGER, StepKind.ANATOMY] + [StepKind.NORMALIZE] * 3


def test_replay_outputs(small, ref_sentence):
    corpus, gold = small
    backend = GoldReplayBackend(corpus, gold, "vanilla")
    sentence = Sentence("r1", 1, REF_SENTENCE)
    assert backend.generate(build_prompt(StepKind.TRIGGER, sentence).prompt) == "trigger: density [ Lesion ]"
    norm = build_prompt(StepKind.NORMALIZE, sentence, focus=make_focus(REF_SENTENCE, "soft tissue", SOFT_TISSUE))
    assert backend.generate(norm.prompt) == "anatomies: soft tissue [ Hepato-Biliary | Liver ]"
    quiet = build_prompt(StepKind.TRIGGER, Sentence("r1", 2, QUIET))
    assert backend.generate(quiet.prompt) == "none"


def test_replay_unknown_prompts(small):
    corpus, gold = small
    backend = GoldReplayBackend(corpus, gold)
    with pytest.raises(UnknownPrompt):
        backend.generate("hello there")
    stranger = build_prompt(StepKind.TRIGGER, Sentence("x", 0, "Unseen sentence."))
    with pytest.raises(UnknownPrompt):
        backend.generate(stranger.prompt)
    wrong_focus = build_prompt(StepKind.ANATOMY, Sentence("r1", 1, REF_SENTENCE),
                               focus=make_focus(REF_SENTENCE, "mass", None))
    with pytest.raises(UnknownPrompt):
        backend.generate(wrong_focus.prompt)


def test_context_run_needs_retriever(small):
    corpus, gold = small
    kind = PipelineKind.ONE_STEP_BLOCKS_CONTEXT
    with pytest.raises(RetrieverMissing):
        run(kind, corpus, _backend(kind, corpus, gold))
    result = run(kind, corpus, _backend(kind, corpus, gold), config=RunConfig(context=ContextKind.ADJACENT))
    assert result.logs[("r1", 1)].passes == 4


def test_context_prompts_carry_context(small):
    corpus, gold = small
    kind = PipelineKind.ONE_STEP_BLOCKS_CONTEXT
    seen = []

    class Spy:
        inner = _backend(kind, corpus, gold)

        def generate(self, prompt, max_tokens):
            seen.append(prompt)
            return self.inner.generate(prompt, max_tokens)

    run(kind, corpus, Spy(), config=_config(corpus))
    norm = [p for p in seen if "Consider the anatomy" in p]
    assert len(norm) == 3
    # exam type, then the header, then the prior sentence (which is the header line itself)
    assert all(p.startswith(f"PET CT SKULL THIGH FINDINGS: FINDINGS: {REF_SENTENCE}") for p in norm)
    # following sentence, then the best pool hit (no overlap here, so the first other sentence)
    assert all(f"structured knowledge: {QUIET} FINDINGS: trigger types:" in p for p in norm)


def test_cost_report():
    logs = [PassLog(("a", 0), 1, 10, 2), PassLog(("a", 1), 4, 30, 8)]
    report = cost_report(logs)
    assert report.passes_per_sample == 2.5
    assert report.tokens_per_sample == 25.0
    assert not report.empty
    empty = cost_report([])
    assert empty.empty and empty.passes_per_sample == 0.0 and empty.samples == 0
    assert json.loads(json.dumps(report.to_json()))["samples"] == 2


@pytest.fixture(scope="module")
def synth():
    return synthetic_corpus(120, seed=7, shape=SyntheticShape(two_trigger_rate=0.1))


def test_replay_round_trip_all_kinds(synth):
    corpus, gold = synth
    pool = [s.text for s in corpus.iter_sentences()]
    config = RunConfig(retriever=SearchIndex(pool))
    passes = {}
    for kind in KINDS:
        result = run(kind, corpus, _backend(kind, corpus, gold), config=config)
        assert result.failures == []
        assert {k: v for k, v in result.predictions.items() if v} == gold
        report = evaluate(gold, result.predictions)
        assert all(prf.f1 == 1.0 for prf in report.levels.values())
        passes[kind] = {k: log.passes for k, log in result.logs.items()}
    for key in passes[PipelineKind.ONE_STEP_BLOCKS]:
        assert passes[PipelineKind.THREE_STEP][key] >= passes[PipelineKind.TWO_STEP][key] >= 1
        assert passes[PipelineKind.ONE_STEP_BLOCKS][key] == passes[PipelineKind.ONE_STEP_VANILLA][key] == 1
    n_anat = sum(len(e.anatomies) for events in gold.values() for e in events)
    n = corpus.sentence_count()
    ctx = sum(passes[PipelineKind.ONE_STEP_BLOCKS_CONTEXT].values()) / n
    assert ctx == pytest.approx(1 + n_anat / n)


def test_blocks_cost_more_tokens_than_vanilla(synth):
    corpus, gold = synth
    tokens = {}
    for kind in (PipelineKind.ONE_STEP_VANILLA, PipelineKind.ONE_STEP_BLOCKS):
        tokens[kind] = cost_report(run(kind, corpus, _backend(kind, corpus, gold)).logs).tokens_per_sample
    assert tokens[PipelineKind.ONE_STEP_BLOCKS] > tokens[PipelineKind.ONE_STEP_VANILLA]


def test_parallel_matches_serial(synth):
    corpus, gold = synth
    kind = PipelineKind.THREE_STEP
    serial = run(kind, corpus, _backend(kind, corpus, gold))
    parallel = run(kind, corpus, _backend(kind, corpus, gold), config=RunConfig(workers=4))
    assert parallel.predictions == serial.predictions
    assert list(parallel.logs) == list(serial.logs)
    assert [l.passes for l in parallel.logs.values()] == [l.passes for l in serial.logs.values()]


def test_backend_failure_degrades_per_sentence(small):
    corpus, gold = small

    class Flaky:
        inner = _backend(PipelineKind.ONE_STEP_BLOCKS, corpus, gold)

        def generate(self, prompt, max_tokens):
            if QUIET in prompt:
                raise RuntimeError("boom")
            return self.inner.generate(prompt, max_tokens)

    result = run(PipelineKind.ONE_STEP_BLOCKS, corpus, Flaky())
    assert result.failures == [("r1", 2)]
    assert "boom" in result.logs[("r1", 2)].error
    assert result.predictions[("r1", 2)] == []
    assert result.predictions[("r1", 1)]


def test_noisy_without_noise_is_gold(synth):
    corpus, gold = synth
    kind = PipelineKind.ONE_STEP_BLOCKS
    plain = _backend(kind, corpus, gold)
    noisy = NoisyReplayBackend(plain, seed=3)
    for sentence in list(corpus.iter_sentences())[:30]:
        prompt = build_prompt(StepKind.ONE_STEP_BLOCKS, sentence).prompt
        assert noisy.generate(prompt) == plain.generate(prompt)


def test_noisy_drop_everything(synth):
    corpus, gold = synth
    for kind in (PipelineKind.ONE_STEP_VANILLA, PipelineKind.ONE_STEP_BLOCKS):
        noisy = NoisyReplayBackend(_backend(kind, corpus, gold), seed=1, drop_prob=1.0)
        for sentence in list(corpus.iter_sentences())[:30]:
            out = noisy.generate(build_prompt(StepKind(kind.value.replace("-", "_")), sentence).prompt)
            assert out in ("none", "state: trigger detection answer: none")
            assert parse_blocks(out).events == []


def test_noisy_is_deterministic(synth):
    corpus, gold = synth
    kind = PipelineKind.THREE_STEP

    def once():
        backend = NoisyReplayBackend(_backend(kind, corpus, gold), seed=11, drop_prob=0.3, flip_prob=0.3)
        return run(kind, corpus, backend).predictions

    assert once() == once()


def test_noisy_rejects_bad_probability(small):
    corpus, gold = small
    with pytest.raises(ValueError):
        NoisyReplayBackend(GoldReplayBackend(corpus, gold), drop_prob=1.5)


def _remote(handler, **kw):
    return RemoteBackend("http://model.test/generate", transport=httpx.MockTransport(handler),
                         sleep=lambda s: None, **kw)


def test_remote_success():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"text": "trigger: density [ Lesion ]"})

    backend = _remote(handler, token="s3cret")
    assert backend.generate("p", 64) == "trigger: density [ Lesion ]"
    assert seen == {"prompt": "p", "max_tokens": 64, "auth": "Bearer s3cret"}


def test_remote_missing_text():
    backend = _remote(lambda r: httpx.Response(200, json={"output": "x"}))
    with pytest.raises(MalformedResponse):
        backend.generate("p")


def test_remote_retries_then_succeeds():
    calls = []
    waits = []

    def handler(request):
        calls.append(1)
        if len(calls) <= 2:
            return httpx.Response(503)
        return httpx.Response(200, json={"text": "none"})

    backend = RemoteBackend("http://model.test/g", retries=3, backoff=0.5,
                            transport=httpx.MockTransport(handler), sleep=waits.append)
    assert backend.generate("p") == "none"
    assert len(calls) == 3
    assert waits == [0.5, 1.0]


def test_remote_gives_up():
    backend = _remote(lambda r: httpx.Response(500), retries=2)
    with pytest.raises(RetriesExhausted):
        backend.generate("p")


def test_remote_timeout():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(BackendTimeout):
        _remote(handler, retries=0).generate("p")


def test_remote_in_pipeline_records_failures(small):
    corpus, _ = small
    backend = _remote(lambda r: httpx.Response(200, text="not json"))
    result = run(PipelineKind.ONE_STEP_BLOCKS, corpus, backend)
    assert len(result.failures) == 3
    assert all(l.passes == 1 for l in result.logs.values())
