"""Multi-source attentional encoder-decoder.

Every source ``<s> src-tag form trg-tag </s>`` goes through a
bidirectional GRU encoder. The encoder states of all sources are pooled
into one attention layer whose weights are normalised jointly over every
position of every source. A single GRU decoder emits the target form one
character at a time.

``arch="concat_single_encoder"`` instead concatenates the k encoded
sources into one sequence read by a single encoder.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import __version__
from .datamodel import Instance, SymbolVocab, encode_source, encode_target, source_symbols
from .errors import AllMasked, CheckpointError, ShapeMismatch
from .numerics import Parameter, Tape, Tensor, log_softmax_array

logger = logging.getLogger(__name__)

ARCHES = ("multi_encoder", "concat_single_encoder")


@dataclass
class ModelConfig:
    embed_dim: int = 300
    hidden_dim: int = 100
    max_k: int = 4
    share_encoder_params: bool = True
    arch: str = "multi_encoder"
    beam_width: int = 1
    # Cap on decoder steps, the closing </s> included; the last step may
    # only emit </s>, so predictions hold at most max_output_len - 1 chars.
    max_output_len: int = 40

    def __post_init__(self):
        if self.arch not in ARCHES:
            raise ValueError(f"arch must be one of {ARCHES}, got {self.arch!r}")
        for name in ("embed_dim", "hidden_dim", "max_k", "beam_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_output_len < 1:
            raise ValueError("max_output_len must be >= 1")

    @property
    def attention_dim(self) -> int:
        return self.hidden_dim

    @property
    def n_encoders(self) -> int:
        if self.arch == "concat_single_encoder" or self.share_encoder_params:
            return 1
        return self.max_k


class GRUWeights(NamedTuple):
    W_z: Parameter
    W_r: Parameter
    W_h: Parameter
    U_z: Parameter
    U_r: Parameter
    U_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter


class ModelParams:
    """Named parameters plus the config and vocabulary they were built for."""

    def __init__(self, config: ModelConfig, vocab: SymbolVocab, tensors: dict[str, Parameter]):
        self.config = config
        self.vocab = vocab
        self.tensors = tensors

    def __getitem__(self, name) -> Parameter:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def __len__(self):
        return len(self.tensors)

    def names(self):
        return list(self.tensors)

    def gru(self, prefix: str) -> GRUWeights:
        return GRUWeights(*(self.tensors[f"{prefix}.{f}"] for f in GRUWeights._fields))

    def encoder(self, index: int, direction: str) -> GRUWeights:
        j = 0 if self.config.n_encoders == 1 else index
        return self.gru(f"enc{j}.{direction}")

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            self.vocab,
            {n: Parameter(p.value.copy(), n) for n, p in self.tensors.items()},
        )

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self.tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n, p in self.tensors.items():
            p.value[...] = arrays[n]

    def n_weights(self) -> int:
        return sum(p.value.size for p in self)


def rect_identity(shape) -> np.ndarray:
    """Ones on the main diagonal of the top-left square block."""
    if len(shape) == 1:
        out = np.zeros(shape)
        out[0] = 1.0
        return out
    return np.eye(shape[0], shape[1])


def _param_shapes(config: ModelConfig, n_vocab: int) -> dict[str, tuple]:
    E, H, A = config.embed_dim, config.hidden_dim, config.attention_dim
    shapes: dict[str, tuple] = {"embed": (n_vocab, E)}

    def gru(prefix, n_in):
        for g in "zrh":
            shapes[f"{prefix}.W_{g}"] = (H, n_in)
        for g in "zrh":
            shapes[f"{prefix}.U_{g}"] = (H, H)
        for g in "zrh":
            shapes[f"{prefix}.b_{g}"] = (H,)

    for j in range(config.n_encoders):
        gru(f"enc{j}.fwd", E)
        gru(f"enc{j}.bwd", E)
    shapes["init.W"] = (H, H)
    shapes["init.b"] = (H,)
    shapes["att.W"] = (A, H)
    shapes["att.U"] = (A, 2 * H)
    shapes["att.v"] = (A,)
    gru("dec", E + 2 * H)
    shapes["out.W"] = (n_vocab, H + 2 * H + E)
    shapes["out.b"] = (n_vocab,)
    return shapes


def _is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


def init_params(config: ModelConfig, vocab: SymbolVocab) -> ModelParams:
    """Identity initialisation: every weight matrix (and the embedding) is
    a (rectangular) identity, every bias zero. No randomness involved."""
    tensors = {}
    for name, shape in _param_shapes(config, len(vocab)).items():
        value = np.zeros(shape) if _is_bias(name) else rect_identity(shape)
        tensors[name] = Parameter(value, name)
    return ModelParams(config, vocab, tensors)


def random_params(config: ModelConfig, vocab: SymbolVocab, rng: np.random.Generator, scale=0.5) -> ModelParams:
    """Gaussian parameters; used by gradient checks and decoding tests."""
    params = init_params(config, vocab)
    for p in params:
        p.value[...] = rng.normal(0.0, scale, p.shape)
    return params


# ---- batching -------------------------------------------------------------


@dataclass
class Batch:
    """Padded id arrays for a list of instances.

    ``src`` is ``(B, K, L)``: K encoder slots of length L. ``slot_of[b, j]``
    is the slot holding the j-th original source of row b (-1 if the row has
    fewer sources), so attention can be reported in the caller's order.
    """

    src: np.ndarray
    src_mask: np.ndarray
    present: np.ndarray
    src_len: np.ndarray
    slot_of: np.ndarray
    tgt_in: np.ndarray | None = None
    tgt_out: np.ndarray | None = None
    tgt_mask: np.ndarray | None = None

    @property
    def size(self):
        return self.src.shape[0]


def concat_sources(instance: Instance, vocab: SymbolVocab) -> list[int]:
    """All encoded sources back to back, each keeping its own delimiters."""
    out: list[int] = []
    for source in instance.sources:
        out += encode_source(source, instance.target_tag, vocab)
    return out


def encoder_inputs(instance: Instance, config: ModelConfig, vocab: SymbolVocab) -> list[list[int]]:
    """Id sequences handed to the encoders, in the instance's source order."""
    inst = instance.restrict(config.max_k)
    if config.arch == "concat_single_encoder":
        return [concat_sources(inst, vocab)]
    return [encode_source(s, inst.target_tag, vocab) for s in inst.sources]


def make_batch(instances: Sequence[Instance], params: ModelParams, with_targets=True) -> Batch:
    config, vocab = params.config, params.vocab
    seqs = [encoder_inputs(inst, config, vocab) for inst in instances]
    B = len(instances)
    K = max(len(s) for s in seqs)
    L = max(len(x) for s in seqs for x in s)
    src = np.full((B, K, L), vocab.pad_id, dtype=np.int64)
    src_len = np.zeros((B, K), dtype=np.int64)
    slot_of = np.full((B, K), -1, dtype=np.int64)
    canonical = config.arch == "multi_encoder" and config.n_encoders == 1
    for b, s in enumerate(seqs):
        order = list(range(len(s)))
        if canonical:
            # Shared encoders make the model order-free; a canonical slot
            # order makes that exact in floating point too.
            order.sort(key=lambda j: s[j])
        for slot, j in enumerate(order):
            src[b, slot, : len(s[j])] = s[j]
            src_len[b, slot] = len(s[j])
            slot_of[b, j] = slot
    src_mask = np.arange(L)[None, None, :] < src_len[:, :, None]
    batch = Batch(src, src_mask, src_len > 0, src_len, slot_of)
    if with_targets:
        tg = [encode_target(inst.target_form, vocab) for inst in instances]
        T = max(len(t) for t in tg) - 1
        batch.tgt_in = np.full((B, T), vocab.pad_id, dtype=np.int64)
        batch.tgt_out = np.full((B, T), vocab.pad_id, dtype=np.int64)
        batch.tgt_mask = np.zeros((B, T), dtype=bool)
        for b, t in enumerate(tg):
            n = len(t) - 1
            batch.tgt_in[b, :n] = t[:-1]
            batch.tgt_out[b, :n] = t[1:]
            batch.tgt_mask[b, :n] = True
    return batch


# ---- network pieces -------------------------------------------------------


def gru_step(tape: Tape, x, h_prev: Tensor, w: GRUWeights, x_proj=None) -> Tensor:
    """One GRU transition.

    ``x_proj`` optionally carries the precomputed input projections
    ``(W_z x + b_z, W_r x + b_r, W_h x + b_h)``.
    """
    if x_proj is None:
        x_proj = (tape.affine(x, w.W_z, w.b_z), tape.affine(x, w.W_r, w.b_r), tape.affine(x, w.W_h, w.b_h))
    xz, xr, xh = x_proj
    z = tape.sigmoid(tape.add(xz, tape.affine(h_prev, w.U_z)))
    r = tape.sigmoid(tape.add(xr, tape.affine(h_prev, w.U_r)))
    cand = tape.tanh(tape.add(xh, tape.affine(tape.mul(r, h_prev), w.U_h)))
    return tape.interpolate(z, h_prev, cand)


def _run_direction(tape, w: GRUWeights, emb: Tensor, mask: np.ndarray, reverse: bool) -> list[Tensor]:
    N, L, _ = emb.shape
    H = w.U_z.shape[0]
    proj = [tape.affine(emb, w.W_z, w.b_z), tape.affine(emb, w.W_r, w.b_r), tape.affine(emb, w.W_h, w.b_h)]
    h = Tensor(np.zeros((N, H)))
    states: list[Tensor] = [None] * L  # type: ignore[list-item]
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for i in steps:
        x_proj = [tape.take(p, i, axis=1) for p in proj]
        h_new = gru_step(tape, None, h, w, x_proj)
        # Padded steps carry the previous state through unchanged.
        h = h_new if mask[:, i].all() else tape.where_rows(mask[:, i], h_new, h)
        states[i] = h
    return states


def _bigru(tape, params: ModelParams, enc_index: int, ids: np.ndarray, mask: np.ndarray) -> Tensor:
    """``(N, L)`` ids to ``(N, L, 2H)`` states, forward half first."""
    emb = tape.embed(params["embed"], ids)
    fwd = _run_direction(tape, params.encoder(enc_index, "fwd"), emb, mask, reverse=False)
    bwd = _run_direction(tape, params.encoder(enc_index, "bwd"), emb, mask, reverse=True)
    return tape.concat([tape.stack(fwd, axis=1), tape.stack(bwd, axis=1)], axis=-1)


class EncoderOutput(NamedTuple):
    states: Tensor  # (B, K*L, 2H)
    keys: Tensor  # (B, K*L, A)
    mask: np.ndarray  # (B, K*L)
    s0: Tensor  # (B, H)


def _encode_batch(tape: Tape, params: ModelParams, batch: Batch) -> EncoderOutput:
    config = params.config
    B, K, L = batch.src.shape
    H = config.hidden_dim
    if config.n_encoders == 1:
        states = _bigru(tape, params, 0, batch.src.reshape(B * K, L), batch.src_mask.reshape(B * K, L))
        states = tape.reshape(states, (B, K, L, 2 * H))
    else:
        per_slot = [
            _bigru(tape, params, m, batch.src[:, m], batch.src_mask[:, m]) for m in range(K)
        ]
        states = tape.stack(per_slot, axis=1)
    # Initial decoder state from the mean backward state at position 1.
    first = tape.take(tape.take(states, 0, axis=2), slice(H, 2 * H), axis=2)
    weights = batch.present / batch.present.sum(axis=1, keepdims=True)
    pooled = tape.weighted_sum(weights, first)
    s0 = tape.tanh(tape.affine(pooled, params["init.W"], params["init.b"]))
    flat = tape.reshape(states, (B, K * L, 2 * H))
    keys = tape.affine(flat, params["att.U"])
    return EncoderOutput(flat, keys, batch.src_mask.reshape(B, K * L), s0)


def _attend(tape, params: ModelParams, s_prev: Tensor, enc: EncoderOutput):
    if not enc.mask.any(axis=1).all():
        raise AllMasked("every encoder position is masked")
    query = tape.affine(s_prev, params["att.W"])
    scores = tape.additive_scores(query, enc.keys, params["att.v"])
    alpha = tape.softmax(scores, mask=enc.mask)
    return tape.weighted_sum(alpha, enc.states), alpha


def _decoder_step(tape, params: ModelParams, enc: EncoderOutput, y_emb: Tensor, s_prev: Tensor):
    c, alpha = _attend(tape, params, s_prev, enc)
    s = gru_step(tape, tape.concat([y_emb, c]), s_prev, params.gru("dec"))
    logits = tape.affine(tape.concat([s, c, y_emb]), params["out.W"], params["out.b"])
    return s, logits, alpha


def batch_loss(tape: Tape, params: ModelParams, batch: Batch, row_weights=None) -> Tensor:
    """Teacher-forced ``sum_b w_b * -log p(y_b | X_b)``."""
    enc = _encode_batch(tape, params, batch)
    w = np.ones(batch.size) if row_weights is None else np.asarray(row_weights, dtype=float)
    y_emb_all = tape.embed(params["embed"], batch.tgt_in)
    s = enc.s0
    total = None
    for t in range(batch.tgt_in.shape[1]):
        y_emb = tape.take(y_emb_all, t, axis=1)
        s, logits, _ = _decoder_step(tape, params, enc, y_emb, s)
        step = tape.cross_entropy(logits, batch.tgt_out[:, t], w * batch.tgt_mask[:, t])
        total = step if total is None else tape.add(total, step)
    return total


def forward_logprob(instance: Instance, params: ModelParams, tape: Tape | None = None) -> float:
    """``log p(target | sources)``; gradients of ``-log p`` land on the
    parameters when a recording tape is passed."""
    own = tape is None
    tape = Tape(record=False) if own else tape
    loss = batch_loss(tape, params, make_batch([instance], params))
    if tape.record:
        tape.backward(loss)
    return -float(loss.value)


def step_logprobs(instance: Instance, params: ModelParams) -> np.ndarray:
    """Per-step ``log p(y_t | y_<t, X)`` of the gold target."""
    batch = make_batch([instance], params)
    tape = Tape(record=False)
    enc = _encode_batch(tape, params, batch)
    s = enc.s0
    out = []
    for t in range(batch.tgt_in.shape[1]):
        y_emb = tape.embed(params["embed"], batch.tgt_in[:, t])
        s, logits, _ = _decoder_step(tape, params, enc, y_emb, s)
        out.append(log_softmax_array(logits.value)[0, batch.tgt_out[0, t]])
    return np.array(out)


# ---- single-example views -------------------------------------------------


@dataclass
class EncodedSource:
    states: np.ndarray  # (L, 2H)
    mask: np.ndarray  # (L,) True where the position is real


def encode(ids: Sequence[int], params: ModelParams, encoder_index: int = 0, mask=None) -> EncodedSource:
    ids = np.asarray(ids, dtype=np.int64)[None, :]
    m = np.ones(ids.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)[None, :]
    states = _bigru(Tape(record=False), params, encoder_index, ids, m)
    return EncodedSource(states.value[0], m[0])


def _stack_encoded(params: ModelParams, encoded: Sequence[EncodedSource]) -> EncoderOutput:
    tape = Tape(record=False)
    states = Tensor(np.concatenate([e.states for e in encoded])[None])
    mask = np.concatenate([e.mask for e in encoded])[None]
    keys = tape.affine(states, params["att.U"])
    return EncoderOutput(states, keys, mask, None)


def attend(s_prev: np.ndarray, encoded: Sequence[EncodedSource], params: ModelParams):
    """Context vector and jointly normalised attention row over all sources."""
    enc = _stack_encoded(params, encoded)
    c, alpha = _attend(Tape(record=False), params, Tensor(np.asarray(s_prev)[None]), enc)
    return c.value[0], alpha.value[0]


def decode_step(y_prev: int, s_prev: np.ndarray, encoded: Sequence[EncodedSource], params: ModelParams):
    """One decoder transition; returns ``(s_t, logits)``."""
    tape = Tape(record=False)
    enc = _stack_encoded(params, encoded)
    y_emb = tape.embed(params["embed"], [y_prev])
    s, logits, _ = _decoder_step(tape, params, enc, y_emb, Tensor(np.asarray(s_prev)[None]))
    return s.value[0], logits.value[0]


# ---- decoding -------------------------------------------------------------


@dataclass
class Prediction:
    form: str
    ids: list[int]
    score: float
    attention: np.ndarray  # (steps, total source positions), caller's order
    empty: bool = False
    labels: list[list[str]] = field(default_factory=list)


def _allowed_mask(vocab: SymbolVocab, final: bool) -> np.ndarray:
    allowed = np.zeros(len(vocab), dtype=bool)
    allowed[vocab.end_id] = True
    if not final:
        allowed[list(vocab.char_range())] = True
    return allowed


def _reorder_attention(rows: np.ndarray, batch: Batch, b: int) -> np.ndarray:
    """Map slot-major padded columns back to the caller's source order."""
    L = batch.src.shape[2]
    cols = []
    for j in range(batch.slot_of.shape[1]):
        slot = batch.slot_of[b, j]
        if slot < 0:
            break
        cols.extend(range(slot * L, slot * L + batch.src_len[b, slot]))
    return rows[:, cols]


def _select_rows(enc: EncoderOutput, rows: np.ndarray) -> EncoderOutput:
    return EncoderOutput(
        Tensor(enc.states.value[rows]),
        Tensor(enc.keys.value[rows]),
        enc.mask[rows],
        None if enc.s0 is None else Tensor(enc.s0.value[rows]),
    )


def greedy_decode(instances: Sequence[Instance], params: ModelParams) -> list[Prediction]:
    """Batched argmax decoding."""
    vocab, config = params.vocab, params.config
    batch = make_batch(instances, params, with_targets=False)
    tape = Tape(record=False)
    enc = _encode_batch(tape, params, batch)
    B = batch.size
    s = enc.s0
    y = np.full(B, vocab.start_id)
    done = np.zeros(B, dtype=bool)
    out_ids: list[list[int]] = [[] for _ in range(B)]
    scores = np.zeros(B)
    rows: list[list[np.ndarray]] = [[] for _ in range(B)]
    for t in range(config.max_output_len):
        y_emb = tape.embed(params["embed"], y)
        s, logits, alpha = _decoder_step(tape, params, enc, y_emb, s)
        logp = log_softmax_array(logits.value)
        logp = np.where(_allowed_mask(vocab, t == config.max_output_len - 1), logp, -np.inf)
        y = np.argmax(logp, axis=1)
        for b in np.flatnonzero(~done):
            out_ids[b].append(int(y[b]))
            scores[b] += logp[b, y[b]]
            rows[b].append(alpha.value[b])
        done |= y == vocab.end_id
        if done.all():
            break
    return [_finish(out_ids[b], scores[b], np.array(rows[b]), batch, b, vocab) for b in range(B)]


def _finish(ids, score, rows, batch, b, vocab) -> Prediction:
    form = vocab.decode(ids)
    pred = Prediction(form, list(ids), float(score), _reorder_attention(rows, batch, b), empty=form == "")
    if pred.empty:
        logger.debug("empty prediction")
    return pred


def beam_search(instance: Instance, params: ModelParams, beam_width: int) -> Prediction:
    """Beam search over ``chars + </s>``; finished hypotheses use up beam
    slots, so ``beam_width=1`` is exactly greedy."""
    vocab, config = params.vocab, params.config
    batch = make_batch([instance], params, with_targets=False)
    tape = Tape(record=False)
    enc0 = _encode_batch(tape, params, batch)
    # Alive hypotheses: (score, ids, attention rows); they share row b=0.
    alive_scores = np.zeros(1)
    alive_ids: list[list[int]] = [[]]
    alive_rows: list[list[np.ndarray]] = [[]]
    s = enc0.s0
    finished: list[tuple[float, list[int], list[np.ndarray]]] = []
    for t in range(config.max_output_len):
        n = len(alive_ids)
        enc = _select_rows(enc0, np.zeros(n, dtype=np.int64))
        prev = [ids[-1] if ids else vocab.start_id for ids in alive_ids]
        y_emb = tape.embed(params["embed"], prev)
        s, logits, alpha = _decoder_step(tape, params, enc, y_emb, s)
        logp = log_softmax_array(logits.value)
        logp = np.where(_allowed_mask(vocab, t == config.max_output_len - 1), logp, -np.inf)
        cand = (alive_scores[:, None] + logp).reshape(-1)
        order = np.argsort(-cand, kind="stable")[:beam_width]
        order = order[np.isfinite(cand[order])]
        V = logp.shape[1]
        keep, new_scores, new_ids, new_rows = [], [], [], []
        for flat in order:
            h, sym = divmod(int(flat), V)
            ids = alive_ids[h] + [sym]
            hist = alive_rows[h] + [alpha.value[h]]
            if sym == vocab.end_id:
                finished.append((float(cand[flat]), ids, hist))
            else:
                keep.append(h)
                new_scores.append(cand[flat])
                new_ids.append(ids)
                new_rows.append(hist)
        if not keep:
            break
        best_done = max((f[0] for f in finished), default=-np.inf)
        if best_done >= max(new_scores):
            # Log-probs are <= 0: no alive hypothesis can overtake.
            break
        s = Tensor(s.value[keep])
        alive_scores = np.array(new_scores)
        alive_ids, alive_rows = new_ids, new_rows
    best = max(finished, key=lambda f: f[0])  # first maximum on ties
    return _finish(best[1], best[0], np.array(best[2]), batch, 0, vocab)


def predict(instances: Sequence[Instance], params: ModelParams, beam_width: int | None = None) -> list[Prediction]:
    """1-best predictions (with attention traces) for each instance."""
    beam = params.config.beam_width if beam_width is None else beam_width
    if beam < 1:
        raise ValueError("beam_width must be >= 1")
    return [beam_search(inst, params, beam) for inst in instances]


def attention_labels(instance: Instance, config: ModelConfig) -> list[list[str]]:
    """Per-source symbol labels matching the attention columns."""
    inst = instance.restrict(config.max_k)
    groups = [source_symbols(s, inst.target_tag) for s in inst.sources]
    if config.arch == "concat_single_encoder":
        return [[sym for g in groups for sym in g]]
    return groups


# ---- checkpoints ----------------------------------------------------------

MAGIC = b"MSREINFLECT-CHECKPOINT\n"


def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    header = {
        "version": __version__,
        "config": asdict(params.config),
        "vocab": params.vocab.to_dict(),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params.tensors.items()],
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8") + b"\n")
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        header = json.loads(fh.readline().decode("utf-8"))
        config = ModelConfig(**header["config"])
        vocab = SymbolVocab.from_dict(header["vocab"])
        tensors = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape, dtype=np.int64))
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"{path}: truncated at {entry['name']}")
            tensors[entry["name"]] = Parameter(np.frombuffer(raw, dtype="<f8").reshape(shape), entry["name"])
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes")
    expected = _param_shapes(config, len(vocab))
    if {n: p.shape for n, p in tensors.items()} != expected:
        raise ShapeMismatch(f"{path}: parameter shapes do not match the stored config")
    return ModelParams(config, vocab, tensors)


def checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        return json.loads(fh.readline().decode("utf-8"))

