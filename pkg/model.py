"""
Toy decoder - small decoder-only transformer with LoRA adapters
===============================================================

Layout per layer:
    x -> rmsnorm -> causal multi-head attention (LoRA on q and v) -> + x
      -> rmsnorm -> silu MLP -> + x
followed by a final rmsnorm and the vocabulary head. Positions use learned
absolute embeddings. The audio projection layer P lives here too so one
checkpoint carries every trainable tensor.

Weight matrices are stored out x in; a linear layer computes x . W^T.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from audio_frontend import project
from errors import DimensionError, SeqLenError
from numerics import (
    Tensor,
    add,
    causal_attention,
    causal_mask,
    concat_cols,
    embedding,
    matmul,
    no_grad,
    rmsnorm,
    scale,
    silu,
    slice_cols,
    softmax_rows,
    transpose,
)
from persistence import read_checkpoint, write_checkpoint
from sequence_builder import Position, PositionKind, Source, TokenSequence, assemble_embeddings
from tokenizer import decode

INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 512
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 128
    lora_rank: int = 8
    lora_alpha: float = 16.0
    mlp_ratio: int = 4
    d_audio: int = 16
    seed: int = 0

    def validate(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "max_seq_len",
                     "lora_rank", "mlp_ratio", "d_audio"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lora_alpha <= 0:
            raise ValueError(f"lora_alpha must be positive, got {self.lora_alpha}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class LoraAdapter:
    A: Tensor  # r x d_in
    B: Tensor  # d_out x r
    alpha: float
    rank: int

    @property
    def scale(self):
        return self.alpha / self.rank


def lora_delta(x, adapter):
    """(alpha / r) . x . A^T . B^T"""
    low = matmul(x, transpose(adapter.A))
    return scale(matmul(low, transpose(adapter.B)), adapter.scale)


def lora_apply(x, base_w, adapter):
    """x . W^T plus the low-rank update"""
    d_out, d_in = base_w.shape
    if x.shape[1] != d_in:
        raise DimensionError(f"lora_apply input {x.shape} does not match weight {base_w.shape}")
    if adapter.A.shape != [adapter.rank, d_in] or adapter.B.shape != [d_out, adapter.rank]:
        raise DimensionError(
            f"adapter A{adapter.A.shape} / B{adapter.B.shape} do not fit weight {base_w.shape} at rank {adapter.rank}"
        )
    return add(matmul(x, transpose(base_w)), lora_delta(x, adapter))


def linear(x, weight):
    return matmul(x, transpose(weight))


class ToyDecoder:
    """Decoder-only transformer over pre-assembled input embeddings"""

    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        self.params = {}
        self._init_params(np.random.default_rng(cfg.seed))
        self.set_trainable(train_backbone=False, train_projection=True)

    # ------------------------------------------------------------ parameters

    def _init_params(self, rng):
        cfg = self.cfg
        d, hidden = cfg.d_model, cfg.d_model * cfg.mlp_ratio

        def normal(*shape):
            return Tensor(rng.normal(0.0, INIT_STD, size=shape))

        p = self.params
        p["tok_embed"] = normal(cfg.vocab_size, d)
        p["pos_embed"] = normal(cfg.max_seq_len, d)
        for i in range(cfg.n_layers):
            pre = f"layers.{i}"
            p[f"{pre}.attn_norm"] = Tensor(np.ones(d))
            for name in ("wq", "wk", "wv", "wo"):
                p[f"{pre}.{name}"] = normal(d, d)
            p[f"{pre}.mlp_norm"] = Tensor(np.ones(d))
            p[f"{pre}.w1"] = normal(hidden, d)
            p[f"{pre}.w2"] = normal(d, hidden)
        p["final_norm"] = Tensor(np.ones(d))
        p["lm_head"] = normal(cfg.vocab_size, d)
        p["projection.weight"] = normal(cfg.d_audio, d)
        p["projection.bias"] = Tensor(np.zeros(d))
        for i in range(cfg.n_layers):
            for target in ("q", "v"):
                p[f"lora.{i}.{target}.A"] = normal(cfg.lora_rank, d)
                p[f"lora.{i}.{target}.B"] = Tensor(np.zeros((d, cfg.lora_rank)))

    def adapter(self, layer, target):
        return LoraAdapter(
            A=self.params[f"lora.{layer}.{target}.A"],
            B=self.params[f"lora.{layer}.{target}.B"],
            alpha=self.cfg.lora_alpha,
            rank=self.cfg.lora_rank,
        )

    @staticmethod
    def _group(name):
        if name.startswith("lora."):
            return "adapter"
        if name.startswith("projection."):
            return "projection"
        return "backbone"

    def set_trainable(self, train_backbone=False, train_projection=True):
        """Backbone training and adapter training are mutually exclusive"""
        flags = {"backbone": train_backbone, "adapter": not train_backbone, "projection": train_projection}
        for name, tensor in self.params.items():
            tensor.requires_grad = flags[self._group(name)]
            tensor.grad = None

    def trainable_parameters(self):
        return [t for t in self.params.values() if t.requires_grad]

    def parameter_groups(self):
        groups = {}
        for name in self.params:
            groups.setdefault(self._group(name), []).append(name)
        return groups

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, tensors):
        missing = set(self.params) - set(tensors)
        if missing:
            raise DimensionError(f"checkpoint is missing tensors: {sorted(missing)}")
        for name, tensor in self.params.items():
            data = np.asarray(tensors[name], dtype=np.float64)
            if list(data.shape) != tensor.shape:
                raise DimensionError(f"{name}: checkpoint shape {list(data.shape)} != model shape {tensor.shape}")
            tensor.data = data.copy()
            tensor.grad = None

    # ------------------------------------------------------------ forward

    def project_audio(self, h):
        return project(h, self.params["projection.weight"], self.params["projection.bias"])

    def embed_sequence(self, seq, blocks):
        return assemble_embeddings(seq, self.params["tok_embed"], blocks)

    def _attention(self, h, layer, mask, use_adapters):
        p = self.params
        pre = f"layers.{layer}"
        if use_adapters:
            q = lora_apply(h, p[f"{pre}.wq"], self.adapter(layer, "q"))
            v = lora_apply(h, p[f"{pre}.wv"], self.adapter(layer, "v"))
        else:
            q = linear(h, p[f"{pre}.wq"])
            v = linear(h, p[f"{pre}.wv"])
        k = linear(h, p[f"{pre}.wk"])

        head_dim = self.cfg.d_model // self.cfg.n_heads
        heads = []
        for head in range(self.cfg.n_heads):
            lo, hi = head * head_dim, (head + 1) * head_dim
            heads.append(causal_attention(
                slice_cols(q, lo, hi), slice_cols(k, lo, hi), slice_cols(v, lo, hi), mask
            ))
        merged = heads[0] if len(heads) == 1 else concat_cols(heads)
        return linear(merged, p[f"{pre}.wo"])

    def forward(self, inputs, valid_len=None, use_adapters=True):
        """N x d_model inputs -> N x V logits

        valid_len marks trailing positions as padding: no query attends to them.
        """
        n = inputs.shape[0]
        if n > self.cfg.max_seq_len:
            raise SeqLenError(f"sequence of {n} positions exceeds max_seq_len {self.cfg.max_seq_len}")
        if inputs.shape[1] != self.cfg.d_model:
            raise DimensionError(f"inputs {inputs.shape} do not have width d_model={self.cfg.d_model}")
        p = self.params
        mask = causal_mask(n, valid_len)

        x = add(inputs, embedding(p["pos_embed"], list(range(n))))
        for layer in range(self.cfg.n_layers):
            pre = f"layers.{layer}"
            h = rmsnorm(x, p[f"{pre}.attn_norm"])
            x = add(x, self._attention(h, layer, mask, use_adapters))
            h = rmsnorm(x, p[f"{pre}.mlp_norm"])
            x = add(x, linear(silu(linear(h, p[f"{pre}.w1"])), p[f"{pre}.w2"]))
        return linear(rmsnorm(x, p["final_norm"]), p["lm_head"])

    __call__ = forward

    # ------------------------------------------------------------ decoding

    def generate_ids(self, prompt_seq, blocks, eos_id, max_new=16, temperature=0.0, seed=0):
        """Token ids continuing prompt_seq, EOS excluded"""
        if temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {temperature}")
        rng = np.random.default_rng(seed)
        positions = list(prompt_seq.positions)
        out = []
        with no_grad():
            for _ in range(max_new):
                if len(positions) >= self.cfg.max_seq_len:
                    break
                seq = TokenSequence(tuple(positions))
                logits = self.forward(self.embed_sequence(seq, blocks)).data[-1]
                if temperature == 0:
                    next_id = int(np.argmax(logits))
                else:
                    probs = softmax_rows(logits[None, :] / temperature)[0]
                    next_id = int(rng.choice(len(probs), p=probs))
                if next_id == eos_id:
                    break
                out.append(next_id)
                positions.append(Position(kind=PositionKind.TEXT, source=Source.ANSWER, token_id=next_id))
        return out

    def generate(self, prompt_seq, blocks, vocab, max_new=16, temperature=0.0, seed=0):
        ids = self.generate_ids(prompt_seq, blocks, vocab.eos_id, max_new, temperature, seed)
        return decode(ids, vocab)

    # ------------------------------------------------------------ checkpoints

    def save_checkpoint(self, path, extra=None):
        block = {"model": self.cfg.to_dict()}
        if extra:
            block.update(extra)
        return write_checkpoint(path, block, self.state_dict())

    @classmethod
    def load_checkpoint(cls, path):
        """Returns (model, config block)"""
        block, tensors = read_checkpoint(path)
        model = cls(ModelConfig.from_dict(block["model"]))
        model.load_state_dict(tensors)
        return model, block
