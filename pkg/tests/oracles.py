"""Independent reference implementations and hand-built corpora.

Nothing here imports the code under test except plain data types, so the
checks in the test modules compare two separate computations.
"""
import itertools
import math
import re
import string

# ---------------------------------------------------------------- BM25

def oracle_tokens(text):
    table = str.maketrans({c: " " for c in string.punctuation})
    return text.lower().translate(table).split()


def bm25_oracle(pool, query_tokens, doc_id, k1=1.5, b=0.75, epsilon=0.25):
    """Okapi BM25 written straight from the formula, no caching."""
    docs = [oracle_tokens(s) for s in pool]
    N = len(docs)
    avgdl = sum(len(d) for d in docs) / N
    vocab = sorted({t for d in docs for t in d})
    raw = {}
    for t in vocab:
        n = sum(1 for d in docs if t in d)
        raw[t] = math.log((N - n + 0.5) / (n + 0.5))
    positives = [v for v in raw.values() if v > 0]
    floor = epsilon * sum(positives) / len(positives)
    idf = {t: v if v >= 0 else floor for t, v in raw.items()}
    doc = docs[doc_id]
    total = 0.0
    for t in query_tokens:
        f = doc.count(t)
        if f == 0:
            continue
        total += idf[t] * (f * (k1 + 1)) / (f + k1 * (1 - b + b * len(doc) / avgdl))
    return total


TOY_POOL = [
    "Right middle lobe nodule measures 4 mm.",
    "No pleural effusion.",
    "Liver is normal in size.",
    "Hypodense lesion in the left lobe of the liver.",
    "Spleen is unremarkable.",
    "Small hiatal hernia.",
    "Nodule in the right upper lobe is stable.",
    "Kidneys enhance symmetrically.",
    "Mild degenerative change of the lumbar spine.",
    "The liver lesion is unchanged.",
    "No lymphadenopathy in the mediastinum.",
    "Bones are intact.",
    "Heart size is normal.",
    "Focal uptake in the left lobe of the thyroid.",
    "Gallbladder contains a small stone.",
    "No free fluid in the pelvis.",
    "Ground glass nodule in the left lower lobe.",
    "Pancreas is atrophic.",
    "Adrenal glands are normal.",
    "Bladder is decompressed.",
]

TOY_QUERIES = [
    "left lobe of the liver lesion",
    "nodule in the lobe",
    "normal size heart",
    "Liver is normal in size.",
    "pelvis",
]

# --------------------------------------------------------- corpus filter

# Each term-bearing template names exactly one anatomy term; fillers name none.
TERM_TEMPLATES = [
    "small nodule in the {}",
    "the {} appears unremarkable today",
    "Findings involving the {} are stable.",
    "{} with mild increased uptake",
]
TERMS_FOR_CORPUS = ["liver", "Spleen", "LUNG", "kidney", "Pancreas", "thyroid", "Bone", "pelvis", "Heart"]
FILLERS = [
    "No acute findings are present.",
    "Stable appearance compared with prior.",
    "Recommend clinical correlation as needed.",
    "Exam limited by patient motion.",
    "Interval improvement since last study.",
    "Nothing suspicious was identified.",
    "Near the midline nothing new.",  # "ear" must not match inside "Near"
    "Livers of cod were not imaged.",  # plural of a term that is not in the list
]


def term_corpus():
    """100 sentences, exactly 36 carrying an anatomy term; returns (sentences, indices)."""
    term_sentences = [t.format(term) for term in TERMS_FOR_CORPUS for t in TERM_TEMPLATES]
    assert len(term_sentences) == 36
    fillers = [f"{FILLERS[i % len(FILLERS)]} ({i})" for i in range(64)]
    sentences, bearing = [], []
    it_terms, it_fill = iter(term_sentences), iter(fillers)
    for i in range(100):
        # deterministic interleave: term sentences on indices with i % 25 < 9
        if i % 25 < 9:
            sentences.append(next(it_terms))
            bearing.append(i)
        else:
            sentences.append(next(it_fill))
    return sentences, bearing


def mentions_term(sentence, terms):
    low = sentence.lower()
    for term in terms:
        words = term.lower().split()
        if re.search(r"(?<!\w)" + r"\s+".join(map(re.escape, words)) + r"(?!\w)", low):
            return True
    return False

# -------------------------------------------------------------- matching

def brute_force_max_matching(n_pred, n_gold, compatible):
    """Size of the largest one-to-one matching, by enumerating injections."""
    best = 0
    small, large = (n_pred, n_gold) if n_pred <= n_gold else (n_gold, n_pred)
    for size in range(small, 0, -1):
        for picks in itertools.combinations(range(small), size):
            for targets in itertools.permutations(range(large), size):
                pairs = zip(picks, targets)
                if n_pred <= n_gold:
                    good = all(compatible(p, g) for p, g in pairs)
                else:
                    good = all(compatible(p, g) for g, p in pairs)
                if good:
                    return size
    return best


def prf_oracle(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f
