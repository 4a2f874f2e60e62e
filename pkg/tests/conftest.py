"""Shared fixtures and synthetic-corpus helpers."""

from __future__ import annotations

from pathlib import Path

import pytest

from bpt.corpus import Origin, load_corpus
from bpt.rng import SplitRng
from bpt.tokenizer import WordPieceTokenizer
from bpt.vocab import corpus_word_counts, train_bpe

SYLLABLES = [
    c + v
    for c in "bdklmnprstvz"
    for v in "aeiou"
]


def make_lexicon(rng: SplitRng, n_words: int, min_syllables: int = 2, max_syllables: int = 4) -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < n_words:
        k = rng.randint(min_syllables, max_syllables)
        word = "".join(SYLLABLES[rng.randrange(len(SYLLABLES))] for _ in range(k))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def make_document_sentences(
    rng: SplitRng,
    lexicon: list[str],
    n_sentences: int,
    words_min: int = 8,
    words_max: int = 18,
) -> list[str]:
    sentences = []
    for _ in range(n_sentences):
        n_words = rng.randint(words_min, words_max)
        sentences.append(" ".join(lexicon[rng.randrange(len(lexicon))] for _ in range(n_words)))
    return sentences


def make_corpus_text(
    rng: SplitRng,
    lexicon: list[str],
    n_docs: int,
    sentences_min: int = 10,
    sentences_max: int = 60,
) -> str:
    blocks = []
    for _ in range(n_docs):
        n_sentences = rng.randint(sentences_min, sentences_max)
        blocks.append("\n".join(make_document_sentences(rng, lexicon, n_sentences)))
    return "\n\n".join(blocks) + "\n"


def write_corpus_file(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def lexicon() -> list[str]:
    return make_lexicon(SplitRng(101), 400)


@pytest.fixture(scope="session")
def small_vocab(lexicon):
    """Vocabulary trained on a sample of the same synthetic language."""
    rng = SplitRng(202)
    text = make_corpus_text(rng, lexicon, n_docs=30)
    tmp_sentences = [s for block in text.split("\n\n") for s in block.splitlines() if s.strip()]
    from collections import Counter

    from bpt.vocab import normalize, pretokenize

    counts: Counter = Counter()
    for s in tmp_sentences:
        counts.update(pretokenize(normalize(s)))
    vocab, _ = train_bpe(counts, target_size=2000, min_frequency=1)
    return vocab


@pytest.fixture(scope="session")
def small_tokenizer(small_vocab):
    return WordPieceTokenizer(small_vocab)


@pytest.fixture()
def tiny_corpus(tmp_path, lexicon):
    rng = SplitRng(303)
    path = write_corpus_file(tmp_path / "tiny.txt", make_corpus_text(rng, lexicon, n_docs=12))
    return load_corpus(path, "tiny", Origin.SMALL)
