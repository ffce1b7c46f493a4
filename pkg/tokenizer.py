"""
Toy whitespace/punctuation tokenizer with an [AUDIO] placeholder
================================================================

Text is lowercased and split into words and single punctuation marks. The
exact, case-sensitive string "[AUDIO]" is never split: it maps to a reserved
placeholder id that text can not otherwise produce.
"""

import re
from collections import Counter

from errors import EmptyCorpus, UnknownId, VocabError

AUDIO_PLACEHOLDER = "[AUDIO]"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, AUDIO_PLACEHOLDER)

_PIECE = re.compile(r"(\[AUDIO\])|(\w+(?:'\w+)*)|([^\w\s])")


def split_text(text):
    """Pieces of text in order; the placeholder survives, everything else is lowercased"""
    pieces = []
    for match in _PIECE.finditer(text.replace("’", "'")):
        placeholder, word, mark = match.groups()
        if placeholder:
            pieces.append(AUDIO_PLACEHOLDER)
        else:
            pieces.append((word or mark).lower())
    return pieces


def normalize(text):
    """Form that decode(encode(text)) reproduces for in-vocabulary text"""
    return " ".join(split_text(text))


class Vocabulary:
    """Immutable token <-> id mapping; ids 0..3 are bos, eos, unk, [AUDIO]"""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise VocabError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise VocabError("vocabulary contains duplicate tokens")
        self.id_to_token = tuple(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(tokens)}

    @property
    def bos_id(self):
        return 0

    @property
    def eos_id(self):
        return 1

    @property
    def unk_id(self):
        return 2

    @property
    def audio_placeholder_id(self):
        return 3

    @property
    def special_ids(self):
        return {
            "bos": self.bos_id,
            "eos": self.eos_id,
            "unk": self.unk_id,
            "audio_placeholder": self.audio_placeholder_id,
        }

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def __contains__(self, token):
        return token in self.token_to_id


def build_vocab(corpus, max_size):
    """Most frequent pieces (ties lexicographic) after the four special tokens"""
    if max_size < len(SPECIAL_TOKENS) + 1:
        raise VocabError(f"max_size must be at least {len(SPECIAL_TOKENS) + 1}, got {max_size}")
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")

    counts = Counter()
    for text in corpus:
        counts.update(p for p in split_text(text) if p != AUDIO_PLACEHOLDER)
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)

    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    room = max_size - len(SPECIAL_TOKENS)
    return Vocabulary(list(SPECIAL_TOKENS) + [tok for tok, _ in ranked[:room]])


def encode(text, vocab):
    ids = []
    for piece in split_text(text):
        if piece == AUDIO_PLACEHOLDER:
            ids.append(vocab.audio_placeholder_id)
        else:
            ids.append(vocab.token_to_id.get(piece, vocab.unk_id))
    return ids


def decode(ids, vocab):
    tokens = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise UnknownId(f"token id {i} is outside the vocabulary (size {len(vocab)})")
        tokens.append(vocab.id_to_token[i])
    return " ".join(tokens)
