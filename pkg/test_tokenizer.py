"""
Test script for the toy tokenizer
=================================
"""

import pytest

from errors import EmptyCorpus, UnknownId, VocabError
from tokenizer import (
    AUDIO_PLACEHOLDER,
    SPECIAL_TOKENS,
    Vocabulary,
    build_vocab,
    decode,
    encode,
    normalize,
    split_text,
)


@pytest.fixture
def vocab():
    return build_vocab(["Is the sound similar to car?", "Is it a type of vehicle?"], max_size=64)


def test_specials_take_the_first_ids():
    v = build_vocab(["a b", "a"], max_size=6)
    assert v.id_to_token[:4] == SPECIAL_TOKENS
    assert v.special_ids == {"bos": 0, "eos": 1, "unk": 2, "audio_placeholder": 3}
    assert set(v.id_to_token[4:]) == {"a", "b"}


def test_frequency_then_lexicographic_order():
    v = build_vocab(["b a c", "c b", "c"], max_size=10)
    assert v.id_to_token[4:] == ("c", "b", "a")

    tied = build_vocab(["zeta alpha mid"], max_size=10)
    assert tied.id_to_token[4:] == ("alpha", "mid", "zeta")


def test_max_size_truncates():
    v = build_vocab(["x"], max_size=5)
    assert v.id_to_token == SPECIAL_TOKENS + ("x",)

    v = build_vocab(["a a a b b c"], max_size=6)
    assert "c" not in v
    assert len(v) == 6


def test_literal_placeholder_is_not_learned():
    v = build_vocab(["Is [AUDIO] loud?", "[AUDIO]"], max_size=20)
    assert v.id_to_token.count(AUDIO_PLACEHOLDER) == 1
    assert v.token_to_id[AUDIO_PLACEHOLDER] == v.audio_placeholder_id


def test_build_vocab_errors():
    with pytest.raises(EmptyCorpus):
        build_vocab([], max_size=10)
    with pytest.raises(VocabError):
        build_vocab(["a"], max_size=4)


def test_encode_table_prompt(vocab):
    ids = encode("Is [AUDIO] similar to car?", vocab)
    t = vocab.token_to_id
    assert ids == [t["is"], vocab.audio_placeholder_id, t["similar"], t["to"], t["car"], t["?"]]


def test_encode_edge_cases(vocab):
    assert encode("", vocab) == []
    assert encode("zzz", vocab) == [vocab.unk_id]


def test_placeholder_match_is_case_sensitive(vocab):
    ids = encode("the audio [audio] AUDIO", vocab)
    assert vocab.audio_placeholder_id not in ids


def test_decode_renders_specials(vocab):
    assert decode([vocab.audio_placeholder_id], vocab) == "[AUDIO]"
    assert decode([vocab.unk_id], vocab) == "<unk>"


def test_decode_unknown_id_raises(vocab):
    with pytest.raises(UnknownId):
        decode([len(vocab)], vocab)
    with pytest.raises(UnknownId):
        decode([-1], vocab)


def test_round_trip_on_covered_text(vocab):
    text = "Is  [AUDIO] SIMILAR to car ?"
    assert decode(encode(text, vocab), vocab) == normalize(text)
    assert encode(decode(encode(text, vocab), vocab), vocab) == encode(text, vocab)


def test_split_keeps_contractions_and_punctuation():
    assert split_text("It isn't loud, is it?") == ["it", "isn't", "loud", ",", "is", "it", "?"]
    assert split_text("Based on [AUDIO], what") == ["based", "on", "[AUDIO]", ",", "what"]


def test_vocabulary_validation():
    with pytest.raises(VocabError):
        Vocabulary(["a", "b"])
    with pytest.raises(VocabError):
        Vocabulary(list(SPECIAL_TOKENS) + ["x", "x"])


def test_bijection(vocab):
    for i, token in enumerate(vocab.id_to_token):
        assert vocab.token_to_id[token] == i


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
