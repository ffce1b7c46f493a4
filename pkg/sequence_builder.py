"""
Sequence builder - interleaved and non-interleaved model inputs
===============================================================

Non-interleaved: [K audio positions] + prompt text + answer text
Interleaved:     prompt text before [AUDIO] + K audio positions + the rest

Each position carries its next-token label. Audio positions are always
labelled with the ignore index, so only text contributes to the loss.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from errors import (
    DimensionError,
    EmbeddingIndexError,
    ExtraPlaceholder,
    MissingPlaceholder,
    PlaceholderInNonInterleaved,
)
from numerics import IGNORE_INDEX, concat_rows, embedding, gather_rows


class PositionKind(str, Enum):
    TEXT = "text"
    AUDIO = "audio"


class Source(str, Enum):
    PROMPT = "prompt"
    ANSWER = "answer"
    AUDIO = "audio"


class PromptFormat(str, Enum):
    INTERLEAVED = "interleaved"
    NONINTERLEAVED = "noninterleaved"


@dataclass(frozen=True)
class Position:
    kind: PositionKind
    source: Source
    label: int = IGNORE_INDEX
    token_id: int = None
    audio_slot: int = None
    block_id: int = None

    @property
    def is_audio(self):
        return self.kind == PositionKind.AUDIO


@dataclass(frozen=True)
class TokenSequence:
    positions: tuple

    @property
    def total_len(self):
        return len(self.positions)

    @property
    def labels(self):
        return [p.label for p in self.positions]

    @property
    def kinds(self):
        return [p.kind for p in self.positions]

    @property
    def text_ids(self):
        return [p.token_id for p in self.positions if p.kind == PositionKind.TEXT]

    @property
    def audio_block_count(self):
        return len({p.block_id for p in self.positions if p.is_audio})

    def supervised_count(self):
        return sum(1 for p in self.positions if p.label != IGNORE_INDEX)

    def __len__(self):
        return len(self.positions)


def supervision_labels(seq, mask_prompt_text=False, ignore_index=IGNORE_INDEX):
    """Next-token targets for every position

    A text position is supervised when the next position is text; with
    mask_prompt_text only targets that are answer tokens count.
    """
    positions = seq.positions
    labels = []
    for n, pos in enumerate(positions):
        nxt = positions[n + 1] if n + 1 < len(positions) else None
        if pos.kind == PositionKind.AUDIO or nxt is None or nxt.kind == PositionKind.AUDIO:
            labels.append(ignore_index)
        elif mask_prompt_text and nxt.source != Source.ANSWER:
            labels.append(ignore_index)
        else:
            labels.append(nxt.token_id)
    return labels


def _text(token_id, source):
    return Position(kind=PositionKind.TEXT, source=source, token_id=int(token_id))


def _audio_run(slot_count, block_id):
    return [
        Position(kind=PositionKind.AUDIO, source=Source.AUDIO, audio_slot=i, block_id=block_id)
        for i in range(slot_count)
    ]


class SequenceBuilder:
    """Turns prompt/answer ids into labelled TokenSequences

    bos_id, when given, puts one BOS text position in front of everything,
    including a leading audio block, in both layouts.
    """

    def __init__(self, placeholder_id, audio_slot_count, bos_id=None,
                 ignore_index=IGNORE_INDEX, mask_prompt_text=False, max_placeholders=1):
        if audio_slot_count < 1:
            raise ValueError(f"audio_slot_count must be positive, got {audio_slot_count}")
        if max_placeholders < 1:
            raise ValueError(f"max_placeholders must be at least 1, got {max_placeholders}")
        self.placeholder_id = placeholder_id
        self.audio_slot_count = audio_slot_count
        self.bos_id = bos_id
        self.ignore_index = ignore_index
        self.mask_prompt_text = mask_prompt_text
        self.max_placeholders = max_placeholders

    def _finish(self, positions):
        positions = list(positions)
        if self.bos_id is not None:
            positions.insert(0, _text(self.bos_id, Source.PROMPT))
        seq = TokenSequence(tuple(positions))
        labels = supervision_labels(seq, self.mask_prompt_text, self.ignore_index)
        return TokenSequence(tuple(replace(p, label=y) for p, y in zip(seq.positions, labels)))

    def build_noninterleaved(self, prompt_ids, answer_ids, block=None):
        """Audio block prepended to the whole text"""
        if self.placeholder_id in prompt_ids:
            raise PlaceholderInNonInterleaved(
                f"prompt contains the placeholder id {self.placeholder_id}; "
                "use the interleaved builder or strip it first"
            )
        self._check_block(block)
        positions = _audio_run(self.audio_slot_count, 0)
        positions += [_text(t, Source.PROMPT) for t in prompt_ids]
        positions += [_text(t, Source.ANSWER) for t in answer_ids]
        return self._finish(positions)

    def build_interleaved(self, prompt_ids, answer_ids, block=None):
        """Every placeholder replaced in place by a K-position audio run"""
        count = sum(1 for t in prompt_ids if t == self.placeholder_id)
        if count == 0:
            raise MissingPlaceholder("prompt has no [AUDIO] placeholder")
        if count > self.max_placeholders:
            raise ExtraPlaceholder(
                f"prompt has {count} [AUDIO] placeholders, at most {self.max_placeholders} allowed"
            )
        self._check_block(block)

        positions = []
        block_id = 0
        for t in prompt_ids:
            if t == self.placeholder_id:
                positions += _audio_run(self.audio_slot_count, block_id)
                block_id += 1
            else:
                positions.append(_text(t, Source.PROMPT))
        positions += [_text(t, Source.ANSWER) for t in answer_ids]
        return self._finish(positions)

    def build(self, fmt, prompt_ids, answer_ids, block=None):
        """Dispatch on format; non-interleaved drops any placeholder first"""
        if PromptFormat(fmt) == PromptFormat.INTERLEAVED:
            return self.build_interleaved(prompt_ids, answer_ids, block)
        stripped = [t for t in prompt_ids if t != self.placeholder_id]
        return self.build_noninterleaved(stripped, answer_ids, block)

    def _check_block(self, block):
        if block is not None and block.slot_count != self.audio_slot_count:
            raise DimensionError(
                f"audio block has {block.slot_count} slots, builder expects {self.audio_slot_count}"
            )


def pad_sequence(seq, length, pad_id, ignore_index=IGNORE_INDEX):
    """Right-pad with ignored text positions"""
    if length < seq.total_len:
        raise ValueError(f"cannot pad a sequence of {seq.total_len} positions to {length}")
    pads = tuple(
        Position(kind=PositionKind.TEXT, source=Source.PROMPT, token_id=int(pad_id), label=ignore_index)
        for _ in range(length - seq.total_len)
    )
    return TokenSequence(seq.positions + pads)


def assemble_embeddings(seq, embed_table, blocks):
    """N x d_model input rows: token embeddings for text, block slots for audio

    blocks is a single AudioEmbeddingBlock or a list indexed by block id.
    """
    if not isinstance(blocks, (list, tuple)):
        blocks = [blocks]
    vocab_size = embed_table.shape[0]

    text_ids = []
    audio_keys = []
    order = []
    for n, pos in enumerate(seq.positions):
        if pos.kind == PositionKind.TEXT:
            if not 0 <= pos.token_id < vocab_size:
                raise EmbeddingIndexError(f"token id {pos.token_id} at position {n} outside [0, {vocab_size})")
            order.append(("text", len(text_ids)))
            text_ids.append(pos.token_id)
        else:
            if pos.block_id is None or not 0 <= pos.block_id < len(blocks):
                raise EmbeddingIndexError(f"audio block {pos.block_id} at position {n} has no embedding")
            block = blocks[pos.block_id]
            if not 0 <= pos.audio_slot < block.slot_count:
                raise EmbeddingIndexError(f"audio slot {pos.audio_slot} at position {n} outside block")
            order.append(("audio", len(audio_keys)))
            audio_keys.append((pos.block_id, pos.audio_slot))

    parts = []
    if text_ids:
        parts.append(embedding(embed_table, text_ids))
    used_blocks = sorted({b for b, _ in audio_keys})
    block_offset = {}
    for b in used_blocks:
        block_offset[b] = sum(blocks[u].slot_count for u in used_blocks if u < b)
    if audio_keys:
        stacked = concat_rows([blocks[b].slots for b in used_blocks])
        parts.append(embedding(stacked, [block_offset[b] + s for b, s in audio_keys]))

    if len(parts) == 1 and all(kind == "text" for kind, _ in order):
        return parts[0]
    merged = concat_rows(parts)
    n_text = len(text_ids)
    index = [i if kind == "text" else n_text + i for kind, i in order]
    if index == list(range(len(index))):
        return merged
    return gather_rows(merged, np.asarray(index))
