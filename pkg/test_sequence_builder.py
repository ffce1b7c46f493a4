"""
Test script for interleaved / non-interleaved sequence construction
===================================================================

Property checks run over seeded random constructions:
- length law and audio-label masking
- leading-placeholder equivalence with the non-interleaved layout
- assembled embeddings against a direct row-indexing oracle
"""

import numpy as np
import pytest

from audio_frontend import AudioEmbeddingBlock
from errors import (
    DimensionError,
    EmbeddingIndexError,
    ExtraPlaceholder,
    MissingPlaceholder,
    PlaceholderInNonInterleaved,
)
from numerics import IGNORE_INDEX, Tensor
from sequence_builder import (
    PositionKind,
    PromptFormat,
    SequenceBuilder,
    Source,
    assemble_embeddings,
    pad_sequence,
    supervision_labels,
)

PH = 3
A, T = PositionKind.AUDIO, PositionKind.TEXT
VOCAB = 40


def block(rng, k, d=6):
    return AudioEmbeddingBlock(Tensor(rng.normal(size=(k, d))))


def random_prompt(rng, placeholder_at=None, length=None):
    length = int(rng.integers(0, 8)) if length is None else length
    ids = [int(i) for i in rng.integers(4, VOCAB, size=length)]
    if placeholder_at is not None:
        ids.insert(min(placeholder_at, len(ids)), PH)
    return ids


def test_noninterleaved_layout():
    seq = SequenceBuilder(PH, 2).build_noninterleaved([10], [11])
    assert seq.kinds == [A, A, T, T]
    assert seq.total_len == 4
    assert seq.labels == [IGNORE_INDEX, IGNORE_INDEX, 11, IGNORE_INDEX]


def test_interleaved_layout():
    seq = SequenceBuilder(PH, 2).build_interleaved([10, PH, 12], [13])
    assert seq.kinds == [T, A, A, T, T]
    assert seq.labels == [IGNORE_INDEX, IGNORE_INDEX, IGNORE_INDEX, 13, IGNORE_INDEX]
    assert [p.audio_slot for p in seq.positions if p.is_audio] == [0, 1]


def test_empty_answer_keeps_prompt_supervision():
    seq = SequenceBuilder(PH, 2).build_noninterleaved([10, 11], [])
    assert seq.labels == [IGNORE_INDEX, IGNORE_INDEX, 11, IGNORE_INDEX]


def test_bos_precedes_leading_audio():
    seq = SequenceBuilder(PH, 2, bos_id=0).build_noninterleaved([10], [11])
    assert seq.kinds == [T, A, A, T, T]
    assert seq.positions[0].token_id == 0
    assert seq.labels[0] == IGNORE_INDEX


def test_placeholder_errors():
    builder = SequenceBuilder(PH, 2)
    with pytest.raises(PlaceholderInNonInterleaved):
        builder.build_noninterleaved([10, PH], [11])
    with pytest.raises(MissingPlaceholder):
        builder.build_interleaved([10, 11], [12])
    with pytest.raises(ExtraPlaceholder):
        builder.build_interleaved([PH, 10, PH], [12])


def test_multi_audio_mode():
    seq = SequenceBuilder(PH, 2, max_placeholders=2).build_interleaved([PH, 10, PH], [12])
    assert seq.kinds == [A, A, T, A, A, T]
    assert seq.audio_block_count == 2
    assert [p.block_id for p in seq.positions if p.is_audio] == [0, 0, 1, 1]


def test_block_slot_count_must_match():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        SequenceBuilder(PH, 4).build_noninterleaved([10], [11], block(rng, 3))


def test_build_strips_placeholder_for_noninterleaved():
    builder = SequenceBuilder(PH, 2)
    seq = builder.build(PromptFormat.NONINTERLEAVED, [10, PH, 12], [13])
    assert seq.text_ids == [10, 12, 13]
    assert seq.kinds[:2] == [A, A]


def test_length_law_and_audio_masking():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        k = int(rng.integers(1, 6))
        builder = SequenceBuilder(PH, k, mask_prompt_text=bool(rng.integers(0, 2)))
        prompt = random_prompt(rng)
        answer = random_prompt(rng)
        if rng.integers(0, 2):
            prompt.insert(int(rng.integers(0, len(prompt) + 1)), PH)
            seq = builder.build_interleaved(prompt, answer)
            assert seq.total_len == len(prompt) - 1 + len(answer) + k
        else:
            seq = builder.build_noninterleaved(prompt, answer)
            assert seq.total_len == k + len(prompt) + len(answer)
        assert all(p.label == IGNORE_INDEX for p in seq.positions if p.is_audio)
        audio_runs = "".join("a" if p.is_audio else "t" for p in seq.positions).split("t")
        assert [len(r) for r in audio_runs if r] == [k]
        assert seq.text_ids == [t for t in prompt if t != PH] + answer


def test_leading_placeholder_equivalence():
    rng = np.random.default_rng(2)
    table = Tensor(rng.normal(size=(VOCAB, 6)))
    for _ in range(200):
        k = int(rng.integers(1, 5))
        builder = SequenceBuilder(PH, k, bos_id=int(rng.integers(0, 2)) or None)
        prompt = random_prompt(rng)
        answer = random_prompt(rng)
        b = block(rng, k)

        inter = builder.build_interleaved([PH] + prompt, answer)
        plain = builder.build_noninterleaved(prompt, answer)
        assert inter == plain
        assert np.array_equal(assemble_embeddings(inter, table, b).data,
                              assemble_embeddings(plain, table, b).data)


def test_assembled_rows_match_direct_indexing():
    rng = np.random.default_rng(3)
    table = Tensor(rng.normal(size=(VOCAB, 6)))
    for _ in range(50):
        k = int(rng.integers(1, 5))
        builder = SequenceBuilder(PH, k, bos_id=0)
        seq = builder.build_interleaved(random_prompt(rng, placeholder_at=int(rng.integers(0, 5))),
                                        random_prompt(rng))
        b = block(rng, k)
        expected = np.stack([
            b.slots.data[p.audio_slot] if p.is_audio else table.data[p.token_id]
            for p in seq.positions
        ])
        assert np.array_equal(assemble_embeddings(seq, table, b).data, expected)


def test_degenerate_assemblies():
    rng = np.random.default_rng(4)
    table = Tensor(rng.normal(size=(VOCAB, 6)))
    b = block(rng, 3)

    audio_only = SequenceBuilder(PH, 3).build_noninterleaved([], [])
    assert np.array_equal(assemble_embeddings(audio_only, table, b).data, b.slots.data)
    assert audio_only.supervised_count() == 0

    text = SequenceBuilder(PH, 3).build_interleaved([PH, 5, 6], [7])
    text_rows = assemble_embeddings(text, table, b).data[3:]
    assert np.array_equal(text_rows, table.data[[5, 6, 7]])


def test_assemble_rejects_out_of_range_ids():
    rng = np.random.default_rng(5)
    seq = SequenceBuilder(PH, 2).build_noninterleaved([VOCAB + 1], [])
    with pytest.raises(EmbeddingIndexError):
        assemble_embeddings(seq, Tensor(rng.normal(size=(VOCAB, 6))), block(rng, 2))


def test_mask_prompt_text_supervises_answer_targets_only():
    builder = SequenceBuilder(PH, 2, mask_prompt_text=True)
    seq = builder.build_interleaved([10, PH, 11, 12], [20, 21])
    supervised = [(p.token_id, p.label) for p in seq.positions if p.label != IGNORE_INDEX]
    assert supervised == [(12, 20), (20, 21)]

    unmasked = SequenceBuilder(PH, 2).build_interleaved([10, PH, 11, 12], [20, 21])
    assert unmasked.supervised_count() == 3


def test_supervision_labels_on_single_position():
    seq = SequenceBuilder(PH, 1).build_noninterleaved([], [])
    assert supervision_labels(seq) == [IGNORE_INDEX]


def test_padding_adds_ignored_text_rows():
    seq = SequenceBuilder(PH, 2).build_noninterleaved([10], [11])
    padded = pad_sequence(seq, 7, pad_id=1)
    assert padded.total_len == 7
    assert padded.labels[4:] == [IGNORE_INDEX] * 3
    assert all(p.source == Source.PROMPT for p in padded.positions[4:])
    with pytest.raises(ValueError):
        pad_sequence(seq, 3, pad_id=1)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
