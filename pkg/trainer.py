"""
Trainer - masked autoregressive fine-tuning
===========================================

Steps:
1. Tokenize each record (interleaved or original prompt + answer + EOS)
2. Build labelled sequences; audio positions never carry a target
3. Per step: project audio, assemble embeddings, forward, masked
   cross-entropy, backward, Adam update
4. Append "step<TAB>loss" to the training log and checkpoint periodically
"""

from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from audio_frontend import encode_audio
from errors import DivergenceError, EmptyDataset, PersistenceError, SeqLenError
from model import ToyDecoder
from numerics import (
    IGNORE_INDEX,
    Adam,
    active_tape,
    backward,
    concat_rows,
    softmax_cross_entropy_ignore,
)
from persistence import append_log_line, write_vocab
from sequence_builder import PositionKind, PromptFormat, SequenceBuilder, pad_sequence
from tokenizer import build_vocab, encode

LOSS_REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    learning_rate: float = 1e-3
    steps: int = 200
    seed: int = 0
    loss_reduction: str = "mean"
    mask_prompt_text: bool = False
    freeze_projection: bool = False
    train_backbone: bool = False
    checkpoint_every: int = 100
    format: str = "interleaved"
    init_checkpoint: str = None
    resume_from: str = None

    # full-size reference values
    FULL_SCALE_BATCH_SIZE = 4
    FULL_SCALE_LEARNING_RATE = 2e-5

    def validate(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint_every must be at least 1, got {self.checkpoint_every}")
        if self.loss_reduction not in LOSS_REDUCTIONS:
            raise ValueError(f"loss_reduction must be one of {LOSS_REDUCTIONS}, got {self.loss_reduction!r}")
        PromptFormat(self.format)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainingExample:
    record_id: str
    sequence: object  # TokenSequence
    audio_features: list  # one K x d_audio Tensor per audio block


def training_texts(records):
    for r in records:
        yield r.original_prompt
        yield r.interleaved_prompt
        yield r.answer


def build_training_vocab(records, max_size):
    return build_vocab(list(training_texts(records)), max_size)


def sized_model_config(model_cfg, vocab):
    """Model config whose vocabulary head matches vocab"""
    return replace(model_cfg, vocab_size=len(vocab))


def prompt_for_format(record, fmt):
    if PromptFormat(fmt) == PromptFormat.INTERLEAVED:
        return record.interleaved_prompt
    return record.original_prompt


def prepare_examples(records, vocab, frontend_cfg, fmt, mask_prompt_text=False, max_seq_len=None):
    """TrainingExamples for one prompt format; features are read once per clip"""
    builder = SequenceBuilder(
        placeholder_id=vocab.audio_placeholder_id,
        audio_slot_count=frontend_cfg.audio_slot_count,
        bos_id=vocab.bos_id,
        mask_prompt_text=mask_prompt_text,
    )
    feature_cache = {}
    examples = []
    for record in records:
        prompt_ids = encode(prompt_for_format(record, fmt), vocab)
        answer_ids = encode(record.answer, vocab) + [vocab.eos_id]
        seq = builder.build(fmt, prompt_ids, answer_ids)
        if max_seq_len is not None and seq.total_len > max_seq_len:
            raise SeqLenError(
                f"record {record.id} needs {seq.total_len} positions, max_seq_len is {max_seq_len}"
            )
        clip = record.audio
        if clip.id not in feature_cache:
            feature_cache[clip.id] = encode_audio(clip, frontend_cfg)
        examples.append(TrainingExample(record.id, seq, [feature_cache[clip.id]] * seq.audio_block_count))
    return examples


def step_targets(seq, ignore_index=IGNORE_INDEX):
    """Labels with every audio position forced to the ignore index"""
    return [ignore_index if p.kind == PositionKind.AUDIO else p.label for p in seq.positions]


def batch_loss(batch, model, loss_reduction="mean", ignore_index=IGNORE_INDEX, pad_id=0):
    """Masked loss over a padded batch, graph recorded for backward"""
    width = max(ex.sequence.total_len for ex in batch)
    logits, targets = [], []
    for ex in batch:
        blocks = [model.project_audio(h) for h in ex.audio_features]
        padded = pad_sequence(ex.sequence, width, pad_id, ignore_index)
        inputs = model.embed_sequence(padded, blocks)
        logits.append(model.forward(inputs, valid_len=ex.sequence.total_len))
        targets.extend(step_targets(padded, ignore_index))
    stacked = logits[0] if len(logits) == 1 else concat_rows(logits)
    return softmax_cross_entropy_ignore(stacked, targets, ignore_index, loss_reduction)


def train_step(batch, model, optimizer, loss_reduction="mean", ignore_index=IGNORE_INDEX, pad_id=0):
    """One update; returns the step loss"""
    if not batch:
        raise EmptyDataset("train_step needs a non-empty batch")
    optimizer.zero_grad()
    try:
        loss = batch_loss(batch, model, loss_reduction, ignore_index, pad_id)
    except Exception:
        active_tape().clear()
        raise
    value = loss.item()
    if not np.isfinite(value):
        active_tape().clear()
        raise DivergenceError(f"loss became {value}; parameters left at the last update")
    backward(loss)
    optimizer.step()
    return value


def batch_order(n_examples, batch_size, seed):
    """Endless stream of batches: seeded permutation per epoch, cut in order"""
    rng = np.random.default_rng(seed)
    pending = []
    while True:
        while len(pending) < batch_size:
            pending.extend(int(i) for i in rng.permutation(n_examples))
        yield pending[:batch_size]
        pending = pending[batch_size:]


class Trainer:
    """Runs one training condition and writes its checkpoints and log"""

    def __init__(self, model, vocab, frontend_cfg, train_cfg, run_dir, verbose=False):
        train_cfg.validate()
        self.model = model
        self.vocab = vocab
        self.frontend_cfg = frontend_cfg
        self.cfg = train_cfg
        self.run_dir = Path(run_dir)
        self.checkpoint_dir = self.run_dir / "checkpoints"
        self.log_path = self.run_dir / "train_log.tsv"
        self.verbose = verbose
        self.losses = []

    def _say(self, message):
        if self.verbose:
            print(message)

    def checkpoint_path(self, step):
        return self.checkpoint_dir / f"step_{step:06d}.ilkm"

    def _checkpoint_block(self, step):
        # no paths or timestamps: reruns must produce identical bytes
        return {
            "step": step,
            "format": self.cfg.format,
            "loss_reduction": self.cfg.loss_reduction,
            "mask_prompt_text": self.cfg.mask_prompt_text,
            "train_backbone": self.cfg.train_backbone,
        }

    def _load_start_state(self):
        """Step to continue from (0 for a fresh run)"""
        start = self.cfg.resume_from or self.cfg.init_checkpoint
        if start is None:
            return 0
        if not Path(start).exists():
            raise PersistenceError(start, "Checkpoint not found")
        loaded, block = ToyDecoder.load_checkpoint(start)
        self.model.load_state_dict(loaded.state_dict())
        self._say(f"✓ Loaded weights from {start}")
        return int(block.get("step", 0)) if self.cfg.resume_from else 0

    def run(self, dataset):
        """Train on dataset (ForgeRecords); returns the final checkpoint path"""
        if not dataset:
            raise EmptyDataset("training dataset is empty")

        first_step = self._load_start_state()
        self.model.set_trainable(
            train_backbone=self.cfg.train_backbone,
            train_projection=not self.cfg.freeze_projection,
        )
        examples = prepare_examples(
            dataset, self.vocab, self.frontend_cfg, self.cfg.format,
            self.cfg.mask_prompt_text, self.model.cfg.max_seq_len,
        )
        optimizer = Adam(self.model.trainable_parameters(), lr=self.cfg.learning_rate)
        write_vocab(self.checkpoint_dir / "vocab.txt", self.vocab)

        mode = "full backbone" if self.cfg.train_backbone else "LoRA adapters"
        self._say("=" * 60)
        self._say(f"Training {mode} on {len(examples)} {self.cfg.format} examples")
        self._say(f"  steps {first_step + 1}..{first_step + self.cfg.steps}, batch {self.cfg.batch_size}, "
                  f"lr {self.cfg.learning_rate}, seed {self.cfg.seed}")
        self._say("=" * 60)

        batches = batch_order(len(examples), self.cfg.batch_size, self.cfg.seed)
        final_path = None
        last_step = first_step + self.cfg.steps
        for step in range(first_step + 1, last_step + 1):
            batch = [examples[i] for i in next(batches)]
            try:
                loss = train_step(batch, self.model, optimizer, self.cfg.loss_reduction,
                                  pad_id=self.vocab.eos_id)
            except DivergenceError as e:
                self._say(f"✗ Step {step}: {e}")
                raise
            self.losses.append(loss)
            append_log_line(self.log_path, step, loss)

            if step % self.cfg.checkpoint_every == 0 or step == last_step:
                final_path = self.model.save_checkpoint(
                    self.checkpoint_path(step), self._checkpoint_block(step)
                )
                self._say(f"✓ Step {step}: loss {loss:.4f}, checkpoint {final_path.name}")

        return final_path


def new_model(model_cfg, vocab):
    return ToyDecoder(sized_model_config(model_cfg, vocab))

