import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# The worked example passage: two sentences, three keyphrases.
TABLE2_PASSAGE = (
    "NLP is a branch of computer science—and more specifically, "
    "a branch of AI. NLP is widely used in our lives."
)
TABLE2_KEYWORDS = ["NLP", "branch of AI", "computer science"]

TOPICS = {
    "Sports": ["leagues", "teams", "season", "match", "players", "scores", "stadium"],
    "Business": ["market", "shares", "profits", "deal", "startup", "quarter", "revenue"],
    "Tech": ["software", "devices", "chips", "network", "platform", "startup", "cloud"],
    "Politics": ["election", "policy", "senate", "votes", "campaign", "reform", "bill"],
    "Entertainment": ["movie", "album", "festival", "audience", "premiere", "studio", "stage"],
}

_FILLER_WORDS = (
    "the of a and to in that it for on with as was are this have from at "
    "people year time group plan city week report early local small large "
    "new old good long major public national"
).split()


def make_classification_records(count: int = 50, seed: int = 11):
    """Deterministic topic-flavoured records, ~15-30 words each."""
    from geniuskit.augmenters import ClassificationRecord

    rng = random.Random(seed)
    labels = list(TOPICS)
    records = []
    for i in range(count):
        label = labels[i % len(labels)]
        topical = rng.sample(TOPICS[label], k=4)
        words = []
        for j in range(rng.randint(2, 3)):
            sent = rng.choices(_FILLER_WORDS, k=rng.randint(5, 8))
            sent.insert(rng.randrange(len(sent)), topical[j % len(topical)])
            sent.append(topical[(j + 1) % len(topical)])
            sent[0] = sent[0].capitalize()
            words.append(" ".join(sent) + ".")
        records.append(
            ClassificationRecord(text=" ".join(words), label=label, id=f"rec-{i:04d}")
        )
    return records


def make_corpus(n_docs: int, seed: int = 7, min_words: int = 50, max_words: int = 200):
    """Zipfian synthetic news-like documents for pipeline runs."""
    import itertools

    rng = random.Random(seed)
    base = [f"w{i}" for i in range(3000)]
    weights = [1.0 / (i + 1) ** 0.9 for i in range(len(base))]
    cum_weights = list(itertools.accumulate(weights))
    acronyms = [f"Q{i}X" for i in range(40)]
    names = [f"Name{i}" for i in range(200)]
    docs = []
    for _ in range(n_docs):
        n_words = rng.randint(min_words, max_words)
        words, count = [], 0
        while count < n_words:
            slen = rng.randint(6, 18)
            sent = rng.choices(base, cum_weights=cum_weights, k=slen)
            for j in range(slen):
                r = rng.random()
                if r < 0.02:
                    sent[j] = rng.choice(acronyms)
                elif r < 0.06:
                    sent[j] = rng.choice(names)
            sent[0] = sent[0].capitalize()
            if rng.random() < 0.3:
                k = rng.randrange(1, slen)
                sent[k] = sent[k] + ","
            words.extend(sent)
            words[-1] += "."
            count += slen
        docs.append(" ".join(words))
    return docs


CONLL_FIXTURE = [
    (
        "EU rejects German call to boycott British lamb .".split(),
        "B-ORG O B-MISC O O O B-MISC O O".split(),
    ),
    (
        "Germany 's representative to the European Union 's veterinary committee "
        "Werner Zwingmann said on Wednesday".split(),
        "B-LOC O O O O B-ORG I-ORG O O O B-PER I-PER O O O".split(),
    ),
    (
        "Spain exported beef to France last month .".split(),
        "B-LOC O O O B-LOC O O O".split(),
    ),
    (
        "The commission chaired by Franz Fischler met in Brussels .".split(),
        "O O O O B-PER I-PER O O B-LOC O".split(),
    ),
]


@pytest.fixture(scope="session")
def table2_doc():
    from geniuskit.textcore import tokenize

    return tokenize(TABLE2_PASSAGE)


@pytest.fixture(scope="session")
def clf_records():
    return make_classification_records(50)


@pytest.fixture(scope="session")
def conll_sequences():
    from geniuskit.augmenters import NerSequence

    return [
        NerSequence(tokens=tuple(toks), tags=tuple(tags), id=f"seq-{i:05d}")
        for i, (toks, tags) in enumerate(CONLL_FIXTURE)
    ]


@pytest.fixture(scope="session")
def stub_url():
    from geniuskit.stubserver import run_stub_server

    with run_stub_server() as url:
        yield url
