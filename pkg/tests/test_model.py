import math

import numpy as np
import pytest

from conftest import make_instance
from msreinflect.datamodel import MorphTag, build_vocab, encode_source
from msreinflect.errors import AllMasked, CheckpointError
from msreinflect.model import (
    EncodedSource,
    GRUWeights,
    ModelConfig,
    attend,
    attention_labels,
    batch_loss,
    beam_search,
    concat_sources,
    decode_step,
    encode,
    forward_logprob,
    greedy_decode,
    gru_step,
    init_params,
    load_checkpoint,
    make_batch,
    predict,
    random_params,
    save_checkpoint,
    step_logprobs,
)
from msreinflect.numerics import Parameter, Tape, Tensor, grad_check, softmax_array


def _gru(values):
    return GRUWeights(*(Parameter(np.asarray(v, float), n) for n, v in zip(GRUWeights._fields, values)))


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_gru_zero_weights():
    H, D = 3, 2
    w = _gru([np.zeros((H, D))] * 3 + [np.zeros((H, H))] * 3 + [np.zeros(H)] * 3)
    t = Tape(record=False)
    x = Tensor(np.ones((1, D)))
    assert np.all(gru_step(t, x, Tensor(np.zeros((1, H))), w).value == 0)
    v = np.array([[0.4, -1.0, 2.0]])
    assert np.array_equal(gru_step(t, x, Tensor(v), w).value, 0.5 * v)


def test_gru_matches_hand_computation():
    rng = np.random.default_rng(11)
    H, D = 2, 3
    vals = [rng.normal(size=(H, D)) for _ in range(3)] + [rng.normal(size=(H, H)) for _ in range(3)] + \
           [rng.normal(size=H) for _ in range(3)]
    Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh = vals
    x, h = rng.normal(size=D), rng.normal(size=H)

    def dot(row, vec):
        return sum(a * b for a, b in zip(row, vec))

    z = [_sig(dot(Wz[i], x) + dot(Uz[i], h) + bz[i]) for i in range(H)]
    r = [_sig(dot(Wr[i], x) + dot(Ur[i], h) + br[i]) for i in range(H)]
    rh = [r[i] * h[i] for i in range(H)]
    cand = [math.tanh(dot(Wh[i], x) + dot(Uh[i], rh) + bh[i]) for i in range(H)]
    expect = [(1 - z[i]) * h[i] + z[i] * cand[i] for i in range(H)]
    got = gru_step(Tape(record=False), Tensor(x[None]), Tensor(h[None]), _gru(vals)).value[0]
    assert np.allclose(got, expect, rtol=1e-13, atol=1e-15)


def _vocab():
    return build_vocab([
        make_instance([("V;PST", "abc"), ("V;PRS", "bcd")], "V;SBJ", "abd"),
        make_instance([("N;SG", "dd")], "N;PL", "ddc"),
    ])


def test_init_params_identity():
    vocab = _vocab()
    cfg = ModelConfig(embed_dim=30, hidden_dim=6, max_k=2)
    p = init_params(cfg, vocab)
    assert np.array_equal(p["enc0.fwd.U_z"].value, np.eye(6))
    E = p["embed"].value
    assert E.shape == (len(vocab), 30)
    assert np.array_equal(E, np.eye(len(vocab), 30))
    assert all(np.all(p[n].value == 0) for n in p.names() if n.rsplit(".", 1)[-1].startswith("b"))
    q = init_params(cfg, vocab)
    assert all(np.array_equal(p[n].value, q[n].value) for n in p.names())


def test_shared_config_has_one_encoder():
    vocab = _vocab()
    shared = init_params(ModelConfig(embed_dim=4, hidden_dim=3, max_k=3), vocab)
    split = init_params(ModelConfig(embed_dim=4, hidden_dim=3, max_k=3, share_encoder_params=False), vocab)
    assert {n.split(".")[0] for n in shared.names() if n.startswith("enc")} == {"enc0"}
    assert {n.split(".")[0] for n in split.names() if n.startswith("enc")} == {"enc0", "enc1", "enc2"}


def test_encode_shapes_and_symmetry():
    vocab = _vocab()
    rng = np.random.default_rng(0)
    cfg = ModelConfig(embed_dim=5, hidden_dim=4, max_k=2, share_encoder_params=False)
    p = random_params(cfg, vocab, rng)
    assert encode([5], p).states.shape == (1, 8)
    # Give the backward GRU the forward weights: reversal swaps the halves.
    for f in GRUWeights._fields:
        p[f"enc0.bwd.{f}"].value[...] = p[f"enc0.fwd.{f}"].value
    ids = [1, 5, 6, 7, 2]
    fwd = encode(ids, p).states[:, :4]
    bwd_rev = encode(ids[::-1], p).states[:, 4:][::-1]
    assert np.allclose(fwd, bwd_rev, rtol=0, atol=1e-15)


def test_shared_encoder_indices_agree():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=3), vocab, np.random.default_rng(1))
    ids = [1, 6, 7, 2]
    assert np.array_equal(encode(ids, p, 0).states, encode(ids, p, 2).states)


def test_attend_single_position():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=1), vocab, np.random.default_rng(2))
    h = np.arange(8.0)[None]
    c, alpha = attend(np.ones(4), [EncodedSource(h, np.array([True]))], p)
    assert np.array_equal(alpha, [1.0]) and np.array_equal(c, h[0])


def test_attend_identical_states_uniform():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, np.random.default_rng(3))
    h = np.tile(np.random.default_rng(0).normal(size=8), (3, 1))
    enc = [EncodedSource(h, np.array([True, True, False])), EncodedSource(h[:2], np.array([True, True]))]
    _, alpha = attend(np.random.default_rng(1).normal(size=4), enc, p)
    assert np.allclose(alpha, [0.25, 0.25, 0, 0.25, 0.25], rtol=0, atol=1e-15) and alpha[2] == 0


def test_attend_masked_encoder_matches_single():
    vocab = _vocab()
    rng = np.random.default_rng(4)
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, rng)
    e1 = EncodedSource(rng.normal(size=(4, 8)), np.array([True, True, True, False]))
    e2 = EncodedSource(rng.normal(size=(3, 8)), np.zeros(3, dtype=bool))
    s = rng.normal(size=4)
    c1, a1 = attend(s, [e1], p)
    c2, a2 = attend(s, [e1, e2], p)
    assert np.array_equal(c1, c2) and np.array_equal(a2[:4], a1) and np.all(a2[4:] == 0)
    with pytest.raises(AllMasked):
        attend(s, [e2], p)


def _zero_output(p):
    p["out.W"].value[...] = 0
    p["out.b"].value[...] = 0


def test_decode_step_uniform_when_output_zeroed():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, np.random.default_rng(5))
    _zero_output(p)
    src = encode([1, 5, 6, 2], p)
    _, logits = decode_step(vocab.start_id, np.zeros(4), [src], p)
    probs = softmax_array(logits)
    assert np.allclose(probs, 1 / len(vocab), rtol=1e-14) and abs(probs.sum() - 1) < 1e-12
    inst = make_instance([("V;PST", "abc")], "V;SBJ", "abd")
    assert abs(forward_logprob(inst, p) - (-4 * math.log(len(vocab)))) < 1e-12


def test_factorisation_and_step_probabilities():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, np.random.default_rng(6))
    inst = make_instance([("V;PST", "abc"), ("V;PRS", "bcd")], "V;SBJ", "abdd")
    steps = step_logprobs(inst, p)
    assert len(steps) == 5
    assert abs(forward_logprob(inst, p) - steps.sum()) < 1e-12
    src = [encode(encode_source(s, inst.target_tag, vocab), p) for s in inst.sources]
    _, logits = decode_step(vocab.start_id, np.zeros(4), src, p)
    assert abs(softmax_array(logits).sum() - 1) < 1e-12


def test_batched_loss_matches_single_rows():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, np.random.default_rng(7))
    insts = [
        make_instance([("V;PST", "abc"), ("V;PRS", "bcd")], "V;SBJ", "abd"),
        make_instance([("N;SG", "dd")], "N;PL", "ddcab"),
    ]
    total = float(batch_loss(Tape(record=False), p, make_batch(insts, p)).value)
    assert abs(total + sum(forward_logprob(i, p) for i in insts)) < 1e-12


@pytest.mark.parametrize("kw", [dict(share_encoder_params=False), dict(arch="concat_single_encoder")])
def test_gradient_check_other_architectures(kw, toy_instances):
    cfg = ModelConfig(embed_dim=4, hidden_dim=3, max_k=2, max_output_len=8, **kw)
    p = random_params(cfg, build_vocab(toy_instances), np.random.default_rng(8))
    batch = make_batch(toy_instances, p)
    assert grad_check(lambda t: batch_loss(t, p, batch), list(p)) < 1e-4


def test_concat_sources():
    vocab = _vocab()
    one = make_instance([("V;PST", "abc")], "V")
    assert concat_sources(one, vocab) == encode_source(one.sources[0], one.target_tag, vocab)
    two = make_instance([("V", "a"), ("V", "ab")], "V")
    assert len(concat_sources(two, vocab)) == 5 + 6
    swapped = make_instance([("V", "ab"), ("V", "a")], "V")
    assert concat_sources(two, vocab) != concat_sources(swapped, vocab)


def test_rigged_end_symbol_gives_empty_prediction():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, np.random.default_rng(9))
    _zero_output(p)
    p["out.b"].value[vocab.end_id] = 50.0
    inst = make_instance([("V;PST", "abc")], "V;SBJ")
    for pred in (greedy_decode([inst], p)[0], beam_search(inst, p, 4)):
        assert pred.form == "" and pred.empty and pred.ids == [vocab.end_id]


def test_length_cap_and_trace_shape():
    vocab = _vocab()
    cfg = ModelConfig(embed_dim=5, hidden_dim=4, max_k=2, max_output_len=3)
    p = random_params(cfg, vocab, np.random.default_rng(10))
    _zero_output(p)
    p["out.b"].value[vocab.char_id("a")] = 50.0
    inst = make_instance([("V;PST", "abc"), ("V;PRS", "bcd")], "V;SBJ")
    # Greedy runs into the cap; the forced </s> costs as much as stopping at once.
    pred = predict([inst], p, beam_width=1)[0]
    assert pred.form == "aa" and pred.ids[-1] == vocab.end_id
    assert predict([inst], p, beam_width=2)[0].score >= pred.score
    labels = attention_labels(inst, cfg)
    assert pred.attention.shape == (3, sum(len(g) for g in labels))
    assert np.allclose(pred.attention.sum(axis=1), 1, rtol=0, atol=1e-12)


def test_greedy_batch_equals_single():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2, max_output_len=6), vocab,
                      np.random.default_rng(11), scale=1.0)
    insts = [
        make_instance([("V;PST", "abc"), ("V;PRS", "bcd")], "V;SBJ"),
        make_instance([("N;SG", "dd")], "N;PL"),
        make_instance([("V;PRS", "dcba"), ("N;SG", "a")], "V;PST"),
    ]
    batched = greedy_decode(insts, p)
    for inst, b in zip(insts, batched):
        (single,) = greedy_decode([inst], p)
        assert single.ids == b.ids and abs(single.score - b.score) < 1e-12


def test_attention_columns_follow_caller_order():
    vocab = _vocab()
    p = random_params(ModelConfig(embed_dim=5, hidden_dim=4, max_k=2), vocab, np.random.default_rng(12), 1.0)
    a = make_instance([("V;PST", "abc"), ("N;SG", "dd")], "V;SBJ")
    b = make_instance([("N;SG", "dd"), ("V;PST", "abc")], "V;SBJ")
    ta, tb = predict([a], p)[0].attention, predict([b], p)[0].attention
    n1 = len(attention_labels(a, p.config)[0])
    assert np.array_equal(ta[:, :n1], tb[:, -n1:]) and np.array_equal(ta[:, n1:], tb[:, :-n1])


def test_checkpoint_round_trip(tmp_path):
    vocab = _vocab()
    cfg = ModelConfig(embed_dim=5, hidden_dim=4, max_k=2, share_encoder_params=False, beam_width=3)
    p = random_params(cfg, vocab, np.random.default_rng(13), 1.0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, p, extra={"note": "x"})
    q = load_checkpoint(path)
    assert q.config == cfg and q.vocab == vocab
    assert all(np.array_equal(p[n].value, q[n].value) for n in p.names())
    inst = make_instance([("V;PST", "abc"), ("V;PRS", "bcd")], "V;SBJ")
    a, b = predict([inst], p)[0], predict([inst], q)[0]
    assert a.ids == b.ids and a.score == b.score and np.array_equal(a.attention, b.attention)
    data = path.read_bytes()
    (tmp_path / "short").write_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short")
    (tmp_path / "junk").write_bytes(b"hello\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk")


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(arch="tree")
    with pytest.raises(ValueError):
        ModelConfig(beam_width=0)
    with pytest.raises(ValueError):
        ModelConfig(hidden_dim=0)
