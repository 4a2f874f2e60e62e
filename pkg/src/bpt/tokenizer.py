"""Greedy longest-match-first WordPiece tokenization against a fixed vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

from .vocab import CONTINUATION_PREFIX, UNK, Vocabulary, normalize, pretokenize

DEFAULT_MAX_CHARS_PER_WORD = 100


@dataclass
class TokenSequence:
    tokens: list[str]
    ids: list[int]

    def __len__(self) -> int:
        return len(self.tokens)


class WordPieceTokenizer:
    """Tokenizes normalized text; words with any unmatched position become [UNK]."""

    def __init__(self, vocab: Vocabulary, max_chars_per_word: int = DEFAULT_MAX_CHARS_PER_WORD):
        if UNK not in vocab:
            raise ValueError("vocabulary must contain [UNK]")
        self.vocab = vocab
        self.max_chars_per_word = max_chars_per_word
        self._unk = UNK

    def tokenize_word(self, word: str) -> list[str]:
        """Greedy longest-match pieces of one already-normalized word."""
        if len(word) > self.max_chars_per_word:
            return [self._unk]
        pieces = []
        start = 0
        n = len(word)
        while start < n:
            end = n
            match = None
            while start < end:
                piece = word[start:end]
                if start > 0:
                    piece = CONTINUATION_PREFIX + piece
                if piece in self.vocab:
                    match = piece
                    break
                end -= 1
            if match is None:
                return [self._unk]
            pieces.append(match)
            start = end
        return pieces

    def tokenize_words(self, words: list[str]) -> list[str]:
        out = []
        for word in words:
            out.extend(self.tokenize_word(word))
        return out

    def tokenize(self, text: str) -> TokenSequence:
        tokens = self.tokenize_words(pretokenize(normalize(text)))
        ids = [self.vocab.id_of(t) for t in tokens]
        return TokenSequence(tokens, ids)


def wordpiece_tokenize(
    text: str, vocab: Vocabulary, max_chars_per_word: int = DEFAULT_MAX_CHARS_PER_WORD
) -> TokenSequence:
    return WordPieceTokenizer(vocab, max_chars_per_word).tokenize(text)
