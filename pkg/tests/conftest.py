import pytest

from radex.core import AnatomyEntity, Corpus, Document, Event, Sentence, Span, Trigger
from radex.ontology import AnatomyLabel, TriggerType

REF_SENTENCE = (
    "18 x 17 mm hypermetabolic soft tissue density insinuating between the left lobe of the "
    "liver and anterior abdominal wall ( the R/112 ) with maximum SUV 14.4 ."
)

REF_ONE_STEP_VANILLA = (
    "trigger: density [ Lesion ] anatomies: soft tissue [ Hepato-Biliary | Liver ], left lobe of the liver "
    "[ Hepato-Biliary | Liver ], anterior abdominal wall [ Abdomen | Abdominal Wall ]"
)
REF_ANATOMY_OUTPUT = (
    "anatomies: soft tissue [ Hepato-Biliary | Liver ], left lobe of the liver [ Hepato-Biliary | Liver ], "
    "anterior abdominal wall [ Abdomen | Abdominal Wall ]"
)
REF_BLOCKS = (
    "state: trigger detection answer: density state: trigger classification answer: density [ Lesion ] "
    "state: span detection answer: soft tissue, left lobe of the liver, anterior abdominal wall "
    "state: classification answer: soft tissue [ Hepato-Biliary | Liver ] "
    "state: classification answer: left lobe of the liver [ Hepato-Biliary | Liver ] "
    "state: classification answer: anterior abdominal wall [ Abdomen | Abdominal Wall ]"
)

# Offsets counted by hand on REF_SENTENCE.
DENSITY = Span(38, 45)
SOFT_TISSUE = Span(26, 37)
LEFT_LOBE = Span(70, 92)
ABDOMINAL_WALL = Span(97, 120)

LIVER = AnatomyLabel("Hepato-Biliary", "Liver")
WALL = AnatomyLabel("Abdomen", "Abdominal Wall")


@pytest.fixture
def ref_sentence():
    return Sentence("ref", 0, REF_SENTENCE)


@pytest.fixture
def ref_event():
    return Event(
        Trigger("density", TriggerType.LESION, DENSITY),
        (
            AnatomyEntity("soft tissue", LIVER, SOFT_TISSUE),
            AnatomyEntity("left lobe of the liver", LIVER, LEFT_LOBE),
            AnatomyEntity("anterior abdominal wall", WALL, ABDOMINAL_WALL),
        ),
    )


@pytest.fixture
def ref_corpus():
    return Corpus([Document("ref", (REF_SENTENCE,), "PET CT SKULL THIGH")])


# Question column of the printed prompt table, copied character for character.
REF_QUESTIONS = {
    "trigger": "Question: What are medical findings in this sentence?",
    "anatomy": (
        'Consider the medical finding "density" in the span "hypermetabolic soft tissue density insinuating '
        'between the", Question: What anatomy it occurs in?  Where is it located?'
    ),
    "normalize": (
        'Consider the anatomy "soft tissue" in the span "17 mm hypermetabolic soft tissue density insinuating '
        'between", which anatomy category it belongs to among listed options?'
    ),
    "one_step": (
        "Question: What are medical findings in this sentence? What anatomy they occur in?  "
        "which anatomy category they belong to among listed options?"
    ),
    "aux_trigger_classify": (
        'Consider the medical finding "density", Question: What is the type of this medical finding?'
    ),
    "aux_anatomy_span": (
        'Consider the medical finding "density" in the span "hypermetabolic soft tissue density insinuating '
        "between the\", Question: Please identify terms that describe the finding's anatomy locations."
    ),
}
REF_AUX_CLASSIFY_TARGET = "state: trigger classification answer: density [ Lesion ]"
REF_AUX_SPAN_TARGET = "state: span detection answer: soft tissue, left lobe of the liver, anterior abdominal wall"


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
