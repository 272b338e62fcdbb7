import math

import pytest
import torch

from ssrta.model import (
    GRUCell,
    ModelConfig,
    ModelError,
    SSRTA,
    disparity_metric,
    disparity_surrogate,
    joint_loss,
    loss_accuracy,
    loss_translation,
)
from ssrta.vocab import EOS, PAD


def config(**overrides):
    base = dict(vocab_size=11, d_emb=5, d_hid=4, n_experts=4, rec_len=4, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


def make_model(**overrides):
    return SSRTA(config(**overrides))


# ---- configuration --------------------------------------------------------


def test_config_rejects_bad_dimensions():
    with pytest.raises(ModelError):
        config(d_hid=0)
    with pytest.raises(ModelError):
        config(rec_len=5)  # exceeds n_experts
    with pytest.raises(ModelError):
        config(alpha_translation=-0.5)
    with pytest.raises(ModelError):
        config(alpha_translation=0.0, alpha_accuracy=0.0)


def test_shape_audit_passes_on_fresh_model():
    make_model().audit_shapes()


def test_same_seed_same_weights():
    a, b = make_model(seed=5), make_model(seed=5)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb)
    c = make_model(seed=6)
    assert any(
        not torch.equal(pa, pc)
        for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters())
    )


# ---- GRU cell oracle ------------------------------------------------------


def gru_scalar_oracle(cell_module, x, h):
    """Element-by-element reference computation with plain Python floats."""
    cell = {name: p.detach() for name, p in cell_module.named_parameters()}
    cell = type("P", (), cell)()
    d_hid, d_in = cell_module.d_hid, cell_module.d_in
    out = []
    for row in range(x.shape[0]):
        hr = []
        for i in range(d_hid):
            def dot(mat, vec, size):
                return sum(float(mat[i, j]) * float(vec[row, j]) for j in range(size))

            r = 1 / (1 + math.exp(-(dot(cell.w_reset, x, d_in)
                                    + dot(cell.u_reset, h, d_hid)
                                    + float(cell.b_reset[i]))))
            u = 1 / (1 + math.exp(-(dot(cell.w_update, x, d_in)
                                    + dot(cell.u_update, h, d_hid)
                                    + float(cell.b_update[i]))))
            cand = math.tanh(
                dot(cell.w_cand, x, d_in)
                + sum(
                    float(cell.u_cand[i, j]) * (
                        1 / (1 + math.exp(-(
                            sum(float(cell.w_reset[j, q]) * float(x[row, q]) for q in range(d_in))
                            + sum(float(cell.u_reset[j, q]) * float(h[row, q]) for q in range(d_hid))
                            + float(cell.b_reset[j])
                        )))
                    ) * float(h[row, j])
                    for j in range(d_hid)
                )
                + float(cell.b_cand[i])
            )
            hr.append(u * float(h[row, i]) + (1 - u) * cand)
        out.append(hr)
    return torch.tensor(out, dtype=torch.float64)


def test_gru_cell_matches_scalar_oracle():
    torch.manual_seed(1)
    cell = GRUCell(3, 4).to(torch.float64)
    for param in cell.parameters():
        with torch.no_grad():
            param.uniform_(-0.7, 0.7)
    x = torch.randn(2, 3, dtype=torch.float64)
    h = torch.randn(2, 4, dtype=torch.float64)
    with torch.no_grad():
        got = cell(x, h)
    want = gru_scalar_oracle(cell, x, h)
    assert torch.allclose(got, want, atol=1e-10)


def test_gru_cell_zero_weights_give_zero_state():
    cell = GRUCell(3, 4).to(torch.float64)
    for param in cell.parameters():
        with torch.no_grad():
            param.zero_()
    x = torch.randn(2, 3, dtype=torch.float64)
    h = torch.zeros(2, 4, dtype=torch.float64)
    with torch.no_grad():
        out = cell(x, h)
    assert torch.equal(out, torch.zeros(2, 4, dtype=torch.float64))


def test_gru_cell_saturated_update_gate_preserves_state():
    cell = GRUCell(3, 4).to(torch.float64)
    for param in cell.parameters():
        with torch.no_grad():
            param.zero_()
    with torch.no_grad():
        cell.b_update.fill_(60.0)  # sigmoid ~ 1: h' = h
    x = torch.randn(2, 3, dtype=torch.float64)
    h = torch.randn(2, 4, dtype=torch.float64)
    with torch.no_grad():
        out = cell(x, h)
    assert torch.allclose(out, h, atol=1e-12)


def test_gru_cell_shape_mismatch():
    cell = GRUCell(3, 4)
    with pytest.raises(ModelError):
        cell(torch.zeros(1, 2, dtype=torch.float64), torch.zeros(1, 4, dtype=torch.float64))


# ---- encoder ---------------------------------------------------------------


def test_encoder_single_token():
    model = make_model()
    desc = torch.tensor([[7]])
    enc = model.encode(desc, torch.tensor([1]))
    assert enc.states.shape == (1, 1, 8)
    assert torch.equal(enc.final, enc.states[:, 0])
    # one step from zero state in each direction equals one plain cell call
    emb = model.embedding[desc[:, 0]]
    zero = torch.zeros(1, 4, dtype=torch.float64)
    with torch.no_grad():
        fwd = model.encoder_fwd(emb, zero)
        bwd = model.encoder_bwd(emb, zero)
    assert torch.allclose(enc.states[:, 0, :4], fwd, atol=1e-12)
    assert torch.allclose(enc.states[:, 0, 4:], bwd, atol=1e-12)


def test_encoder_direction_symmetry():
    """Reversing the sequence swaps the role of the two directions."""
    model = make_model()
    with torch.no_grad():
        for name, param in model.encoder_bwd.named_parameters():
            param.copy_(dict(model.encoder_fwd.named_parameters())[name])
    desc = torch.tensor([[4, 5, 6]])
    lengths = torch.tensor([3])
    enc_fwd = model.encode(desc, lengths)
    enc_rev = model.encode(torch.flip(desc, dims=[1]), lengths)
    assert torch.allclose(
        enc_fwd.states[0, :, :4], torch.flip(enc_rev.states[0, :, 4:], dims=[0]), atol=1e-12
    )


def test_encoder_unrolled_oracle():
    """Loop the bare cell by hand and compare state-for-state."""
    model = make_model(seed=2)
    desc = torch.tensor([[4, 5, 6, 7]])
    enc = model.encode(desc, torch.tensor([4]))
    h = torch.zeros(1, 4, dtype=torch.float64)
    with torch.no_grad():
        for t in range(4):
            h = model.encoder_fwd(model.embedding[desc[:, t]], h)
            assert torch.allclose(enc.states[0, t, :4], h[0], atol=1e-12)
        h = torch.zeros(1, 4, dtype=torch.float64)
        for t in range(3, -1, -1):
            h = model.encoder_bwd(model.embedding[desc[:, t]], h)
            assert torch.allclose(enc.states[0, t, 4:], h[0], atol=1e-12)


def test_encoder_padding_is_inert():
    model = make_model()
    short = model.encode(torch.tensor([[4, 5]]), torch.tensor([2]))
    padded = model.encode(torch.tensor([[4, 5, PAD, PAD]]), torch.tensor([2]))
    assert torch.allclose(short.final, padded.final, atol=1e-12)
    assert torch.allclose(short.states[0, :2], padded.states[0, :2], atol=1e-12)


def test_encoder_final_is_last_valid_state():
    model = make_model()
    enc = model.encode(torch.tensor([[4, 5, 6, PAD]]), torch.tensor([3]))
    assert torch.equal(enc.final[0], enc.states[0, 2])


def test_encoder_rejects_zero_length():
    model = make_model()
    with pytest.raises(ModelError):
        model.encode(torch.tensor([[4]]), torch.tensor([0]))


# ---- attention -------------------------------------------------------------


def test_attention_single_position_is_trivial():
    model = make_model()
    enc = model.encode(torch.tensor([[5]]), torch.tensor([1]))
    p = torch.full((1, 4), 0.25, dtype=torch.float64)
    weights, context = model.attention_step(p, enc)
    assert float(weights[0, 0].detach()) == pytest.approx(1.0)
    assert torch.allclose(context, enc.states[:, 0], atol=1e-12)


def test_attention_zero_weights_are_uniform():
    model = make_model()
    with torch.no_grad():
        model.attn_w.zero_()
        model.attn_b.zero_()
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    p = torch.full((1, 4), 0.25, dtype=torch.float64)
    weights, context = model.attention_step(p, enc)
    assert torch.allclose(weights, torch.full((1, 3), 1 / 3, dtype=torch.float64), atol=1e-12)
    assert torch.allclose(context, enc.states.mean(dim=1), atol=1e-12)


def test_attention_scalar_oracle():
    model = make_model(seed=4)
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    p = torch.tensor([[0.1, 0.2, 0.3, 0.4]], dtype=torch.float64)
    weights, context = model.attention_step(p, enc)
    weights, context = weights.detach(), context.detach()
    k = 4
    scores = []
    for i in range(3):
        vec = list(p[0]) + list(enc.states[0, i].detach())
        s = sum(float(model.attn_w.detach()[j]) * float(vec[j]) for j in range(len(vec)))
        scores.append(math.tanh(s + float(model.attn_b.detach()[0])))
    exp = [math.exp(s) for s in scores]
    total = sum(exp)
    for i in range(3):
        assert float(weights[0, i]) == pytest.approx(exp[i] / total, abs=1e-12)
    want = sum(
        (exp[i] / total) * enc.states[0, i] for i in range(3)
    )
    assert torch.allclose(context[0], want, atol=1e-12)


def test_attention_context_in_convex_hull():
    model = make_model(seed=9)
    enc = model.encode(torch.tensor([[4, 5, 6, 7]]), torch.tensor([4]))
    p = torch.full((1, 4), 0.25, dtype=torch.float64)
    weights, context = model.attention_step(p, enc)
    assert float(weights.sum().detach()) == pytest.approx(1.0)
    lo = enc.states[0].min(dim=0).values
    hi = enc.states[0].max(dim=0).values
    assert (context[0] >= lo - 1e-12).all() and (context[0] <= hi + 1e-12).all()


def test_attention_ignores_padding_positions():
    model = make_model()
    enc = model.encode(torch.tensor([[4, 5, PAD, PAD]]), torch.tensor([2]))
    p = torch.full((1, 4), 0.25, dtype=torch.float64)
    weights, _ = model.attention_step(p, enc)
    assert weights[0, 2:].detach() == pytest.approx([0.0, 0.0])


def test_unnormalized_attention_uses_raw_tanh_scores():
    model = make_model(normalize_attention=False, seed=4)
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    p = torch.full((1, 4), 0.25, dtype=torch.float64)
    weights, context = model.attention_step(p, enc)
    assert (weights.abs() <= 1.0).all()
    assert not torch.allclose(weights.sum(dim=1), torch.ones(1, dtype=torch.float64))
    want = torch.einsum("m,md->d", weights[0], enc.states[0])
    assert torch.allclose(context[0], want, atol=1e-12)


# ---- recommender -----------------------------------------------------------


def test_recommender_head_zero_weights_give_uniform():
    model = make_model()
    with torch.no_grad():
        model.rec_proj_w.zero_()
        model.rec_proj_b.zero_()
    p = model.recommender_head(torch.randn(3, 8, dtype=torch.float64))
    assert torch.allclose(p, torch.full((3, 4), 0.25, dtype=torch.float64), atol=1e-12)


def test_recommender_head_saturation():
    model = make_model()
    with torch.no_grad():
        model.rec_proj_w.zero_()
        model.rec_proj_b.copy_(torch.tensor([200.0, 0.0, 0.0, 0.0]))
    p = model.recommender_head(torch.randn(1, 8, dtype=torch.float64))
    assert float(p.detach()[0, 0]) == pytest.approx(1.0)


def test_recommender_head_scalar_oracle():
    model = make_model(seed=6)
    ctx = torch.randn(1, 8, dtype=torch.float64)
    p = model.recommender_head(ctx).detach()
    w, b = model.rec_proj_w.detach(), model.rec_proj_b.detach()
    logits = [
        sum(float(w[k, j]) * float(ctx[0, j]) for j in range(8)) + float(b[k])
        for k in range(4)
    ]
    exp = [math.exp(l - max(logits)) for l in logits]
    total = sum(exp)
    for k in range(4):
        assert float(p[0, k]) == pytest.approx(exp[k] / total, abs=1e-12)


def test_recommend_single_step_uses_encoder_state():
    model = make_model()
    enc = model.encode(torch.tensor([[4, 5]]), torch.tensor([2]))
    trace = model.recommend(enc, n_steps=1)[0]
    assert len(trace.experts) == 1
    assert trace.attention.shape[0] == 0
    with torch.no_grad():
        want = model.recommender_head(enc.final)
    assert torch.allclose(trace.step_probs[0], want[0], atol=1e-12)


def test_recommend_masked_sequence_is_distinct():
    model = make_model()
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    trace = model.recommend(enc, n_steps=4, mask_repeats=True)[0]
    assert sorted(trace.experts) == [0, 1, 2, 3]


def test_recommend_mask_preserves_raw_probabilities():
    model = make_model()
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    masked = model.recommend(enc, mask_repeats=True)[0]
    raw = model.recommend(enc, mask_repeats=False)[0]
    assert torch.allclose(masked.step_probs, raw.step_probs, atol=1e-12)


def test_recommend_chain_oracle():
    """Recompute the whole recurrent chain step by step."""
    model = make_model(seed=8)
    enc = model.encode(torch.tensor([[4, 5, 6, 7]]), torch.tensor([4]))
    trace = model.recommend(enc, n_steps=4, mask_repeats=False)[0]
    with torch.no_grad():
        p = model.recommender_head(enc.final)
        assert torch.allclose(trace.step_probs[0], p[0], atol=1e-12)
        for step in range(1, 4):
            weights, context = model.attention_step(p, enc)
            p = model.recommender_head(context)
            assert torch.allclose(trace.attention[step - 1], weights[0], atol=1e-12)
            assert torch.allclose(trace.step_probs[step], p[0], atol=1e-12)
            assert torch.allclose(trace.contexts[step], context[0], atol=1e-12)


def test_recommend_without_recurrence_repeats_first_distribution():
    model = make_model(recurrent_attention=False)
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    trace = model.recommend(enc, n_steps=4, mask_repeats=False)[0]
    for step in range(1, 4):
        assert torch.equal(trace.step_probs[step], trace.step_probs[0])
    assert trace.attention.shape[0] == 0
    # unmasked argmax then repeats, masked walks the sorted distribution
    assert len(set(trace.experts)) == 1
    masked = model.recommend(enc, n_steps=4, mask_repeats=True)[0]
    order = torch.argsort(trace.step_probs[0], descending=True)
    assert masked.experts == [int(i) for i in order]


def test_recommend_one_hot_conditioning():
    model = make_model(attention_one_hot=True, seed=8)
    enc = model.encode(torch.tensor([[4, 5, 6]]), torch.tensor([3]))
    trace = model.recommend(enc, n_steps=2, mask_repeats=False)[0]
    with torch.no_grad():
        p0 = model.recommender_head(enc.final)
        one_hot = torch.zeros(1, 4, dtype=torch.float64)
        one_hot[0, int(torch.argmax(p0))] = 1.0
        _, context = model.attention_step(one_hot, enc)
        p1 = model.recommender_head(context)
    assert torch.allclose(trace.step_probs[1], p1[0], atol=1e-12)


def test_recommend_rejects_too_many_distinct_steps():
    model = make_model()
    enc = model.encode(torch.tensor([[4]]), torch.tensor([1]))
    with pytest.raises(ModelError):
        model.recommend(enc, n_steps=5, mask_repeats=True)


# ---- decoder ---------------------------------------------------------------


def test_decoder_teacher_first_step_consumes_sos():
    model = make_model(seed=3)
    enc = model.encode(torch.tensor([[4, 5]]), torch.tensor([2]))
    targets = torch.tensor([[6, 7, EOS]])
    logits = model.decode_teacher(enc.final, targets)
    assert logits.shape == (1, 3, 11)
    with torch.no_grad():
        h = enc.final @ model.init_proj.T
        h = model.decoder(model.embedding[torch.tensor([1])], h)  # SOS id = 1
        want = h @ model.out_proj_w.T + model.out_proj_b
    assert torch.allclose(logits[:, 0], want, atol=1e-12)


def test_decoder_teacher_shifts_targets_by_one():
    model = make_model(seed=3)
    enc = model.encode(torch.tensor([[4, 5]]), torch.tensor([2]))
    targets = torch.tensor([[6, 7, EOS]])
    logits = model.decode_teacher(enc.final, targets)
    with torch.no_grad():
        h = enc.final @ model.init_proj.T
        for j, token in enumerate([1, 6, 7]):   # SOS, then the shifted targets
            h = model.decoder(model.embedding[torch.tensor([token])], h)
            want = h @ model.out_proj_w.T + model.out_proj_b
            assert torch.allclose(logits[:, j], want, atol=1e-12)


def test_greedy_decode_stops_at_eos_and_is_bounded():
    model = make_model(max_decode_len=7)
    enc = model.encode(torch.tensor([[4, 5]]), torch.tensor([2]))
    out = model.decode_greedy(enc.final)
    assert len(out) == 1
    assert len(out[0]) <= 7
    if EOS in out[0]:
        assert out[0].index(EOS) == len(out[0]) - 1


# ---- losses ----------------------------------------------------------------


def test_translation_loss_uniform_logits():
    logits = torch.zeros(2, 3, 11, dtype=torch.float64)
    targets = torch.tensor([[4, 5, EOS], [6, EOS, PAD]])
    loss = loss_translation(logits, targets)
    assert loss == pytest.approx([math.log(11), math.log(11)])


def test_translation_loss_ignores_pad_positions():
    logits = torch.randn(1, 4, 11, dtype=torch.float64)
    targets = torch.tensor([[4, EOS, PAD, PAD]])
    short = loss_translation(logits[:, :2], targets[:, :2])
    padded = loss_translation(logits, targets)
    assert float(padded[0]) == pytest.approx(float(short[0]))


def test_translation_loss_perfect_prediction():
    logits = torch.full((1, 2, 11), -1000.0, dtype=torch.float64)
    logits[0, 0, 4] = 1000.0
    logits[0, 1, EOS] = 1000.0
    targets = torch.tensor([[4, EOS]])
    assert float(loss_translation(logits, targets)[0]) == pytest.approx(0.0, abs=1e-9)


def test_accuracy_loss_uniform_probs():
    probs = torch.full((2, 3, 4), 0.25, dtype=torch.float64)
    loss = loss_accuracy(probs, torch.tensor([0, 3]))
    assert loss == pytest.approx([math.log(4), math.log(4)])


def test_accuracy_loss_scalar_oracle():
    torch.manual_seed(0)
    raw = torch.rand(1, 3, 4, dtype=torch.float64)
    probs = raw / raw.sum(dim=2, keepdim=True)
    loss = loss_accuracy(probs, torch.tensor([2]))
    want = -sum(math.log(float(probs[0, n, 2])) for n in range(3)) / 3
    assert float(loss[0]) == pytest.approx(want)


def test_accuracy_loss_rejects_bad_index():
    probs = torch.full((1, 2, 4), 0.25, dtype=torch.float64)
    with pytest.raises(ModelError):
        loss_accuracy(probs, torch.tensor([4]))


def test_surrogate_identical_one_hots():
    p = torch.zeros(1, 3, 4, dtype=torch.float64)
    p[0, :, 1] = 1.0
    assert float(disparity_surrogate(p)[0]) == pytest.approx(3.0)  # C(3,2) pairs


def test_surrogate_disjoint_one_hots_is_zero():
    p = torch.zeros(1, 3, 4, dtype=torch.float64)
    p[0, 0, 0] = p[0, 1, 1] = p[0, 2, 2] = 1.0
    assert float(disparity_surrogate(p)[0]) == pytest.approx(0.0)


def test_surrogate_pairwise_oracle():
    torch.manual_seed(1)
    raw = torch.rand(2, 4, 5, dtype=torch.float64)
    probs = raw / raw.sum(dim=2, keepdim=True)
    got = disparity_surrogate(probs)
    for b in range(2):
        want = sum(
            float(probs[b, n] @ probs[b, m])
            for n in range(4)
            for m in range(n + 1, 4)
        )
        assert float(got[b]) == pytest.approx(want)


def test_joint_loss_worked_example():
    cfg = config(alpha_translation=1.0, alpha_accuracy=1.0, alpha_disparity=0.1)
    t = torch.tensor([2.0], dtype=torch.float64)
    a = torch.tensor([1.5], dtype=torch.float64)
    s = torch.tensor([0.3], dtype=torch.float64)
    assert float(joint_loss(t, a, s, cfg)[0]) == pytest.approx(3.53)


def test_joint_loss_respects_zero_weights():
    cfg = config(alpha_translation=0.0, alpha_accuracy=1.0, alpha_disparity=0.0)
    t = torch.tensor([99.0], dtype=torch.float64)
    a = torch.tensor([1.5], dtype=torch.float64)
    s = torch.tensor([99.0], dtype=torch.float64)
    assert float(joint_loss(t, a, s, cfg)[0]) == pytest.approx(1.5)
