"""The SSR-TA network.

A bidirectional GRU encodes the ticket description; a GRU decoder learns to
emit the resolution (teacher-forced, as an auxiliary objective); a recurrent
recommendation head produces an expert sequence, where each step after the
first attends over the encoder states conditioned on the previous step's
expert distribution.  All cells and heads are written out explicitly so every
weight matrix in the contract is a named, auditable tensor; gradients come
from autograd and are cross-checked against finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from .vocab import EOS, PAD, SOS


class ModelError(ValueError):
    """Raised for invalid configurations, shapes, or non-finite values."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_emb: int
    d_hid: int                     # per-direction encoder width; decoder runs at 2*d_hid
    n_experts: int
    rec_len: int                   # length of the recommended expert sequence
    alpha_translation: float = 1.0
    # The recommendation loss averages over the N steps, so its per-step weight
    # is 1/N of the translation term's; the default counterweights that for
    # typical recommendation lengths.
    alpha_accuracy: float = 8.0
    alpha_disparity: float = 0.1
    max_decode_len: int = 60
    seed: int = 0
    recurrent_attention: bool = True   # False: every step reuses the encoder state
    normalize_attention: bool = True   # False: raw tanh scores, unnormalized
    attention_one_hot: bool = False    # True: condition attention on argmax one-hot

    def __post_init__(self):
        for name in ("vocab_size", "d_emb", "d_hid", "n_experts", "rec_len", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")
        if self.rec_len > self.n_experts:
            raise ModelError("rec_len cannot exceed n_experts")
        if self.alpha_translation < 0 or self.alpha_accuracy < 0 or self.alpha_disparity < 0:
            raise ModelError("loss weights must be nonnegative")
        if self.alpha_translation + self.alpha_accuracy <= 0:
            raise ModelError("at least one of the differentiable loss weights must be positive")


@dataclass
class RecommendationTrace:
    """Expert sequence with the per-step distributions behind it.

    ``attention`` holds one weight vector per step from the second onward
    (the first step uses the encoder state directly, no attention is run);
    it is empty when the recurrent chain is disabled.
    """

    experts: list[int]
    step_probs: Tensor            # (N, K)
    attention: Tensor             # (N-1, m) or empty
    contexts: Tensor              # (N, 2*d_hid)


class GRUCell(nn.Module):
    """Plain GRU cell with explicit per-gate weights.

    h' = u * h_prev + (1 - u) * tanh(W_c x + U_c (r * h_prev) + b_c)
    with r, u the usual sigmoid reset/update gates, so a saturated update
    gate preserves the previous state.
    """

    def __init__(self, d_in: int, d_hid: int):
        super().__init__()
        self.d_in = d_in
        self.d_hid = d_hid
        for gate in ("reset", "update", "cand"):
            setattr(self, f"w_{gate}", nn.Parameter(torch.empty(d_hid, d_in)))
            setattr(self, f"u_{gate}", nn.Parameter(torch.empty(d_hid, d_hid)))
            setattr(self, f"b_{gate}", nn.Parameter(torch.empty(d_hid)))

    def forward(self, x: Tensor, h_prev: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in or h_prev.shape[-1] != self.d_hid:
            raise ModelError(
                f"gru_cell shape mismatch: got x[... ,{x.shape[-1]}], "
                f"h[... ,{h_prev.shape[-1]}], expected {self.d_in}/{self.d_hid}"
            )
        reset = torch.sigmoid(x @ self.w_reset.T + h_prev @ self.u_reset.T + self.b_reset)
        update = torch.sigmoid(x @ self.w_update.T + h_prev @ self.u_update.T + self.b_update)
        cand = torch.tanh(x @ self.w_cand.T + (reset * h_prev) @ self.u_cand.T + self.b_cand)
        return update * h_prev + (1.0 - update) * cand


@dataclass
class EncoderOutput:
    states: Tensor                # (B, m, 2*d_hid), both directions aligned per position
    final: Tensor                 # (B, 2*d_hid): the last valid element of `states`
    mask: Tensor                  # (B, m) bool, True at real (non-PAD) positions


class SSRTA(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.embedding = nn.Parameter(torch.empty(c.vocab_size, c.d_emb))
        self.encoder_fwd = GRUCell(c.d_emb, c.d_hid)
        self.encoder_bwd = GRUCell(c.d_emb, c.d_hid)
        self.decoder = GRUCell(c.d_emb, 2 * c.d_hid)
        self.init_proj = nn.Parameter(torch.empty(2 * c.d_hid, 2 * c.d_hid))
        self.out_proj_w = nn.Parameter(torch.empty(c.vocab_size, 2 * c.d_hid))
        self.out_proj_b = nn.Parameter(torch.empty(c.vocab_size))
        self.attn_w = nn.Parameter(torch.empty(c.n_experts + 2 * c.d_hid))
        self.attn_b = nn.Parameter(torch.empty(1))
        self.rec_proj_w = nn.Parameter(torch.empty(c.n_experts, 2 * c.d_hid))
        self.rec_proj_b = nn.Parameter(torch.empty(c.n_experts))
        self.to(torch.float64)
        self._init_weights()

    def _init_weights(self) -> None:
        """Uniform in +-1/sqrt(fan_in), drawn from the config seed."""
        gen = torch.Generator().manual_seed(self.config.seed)
        fan_in = {
            "embedding": self.config.d_emb,
            "init_proj": 2 * self.config.d_hid,
            "out_proj_w": 2 * self.config.d_hid,
            "out_proj_b": 2 * self.config.d_hid,
            "attn_w": self.config.n_experts + 2 * self.config.d_hid,
            "attn_b": self.config.n_experts + 2 * self.config.d_hid,
            "rec_proj_w": 2 * self.config.d_hid,
            "rec_proj_b": 2 * self.config.d_hid,
        }
        for name, param in self.named_parameters():
            if name in fan_in:
                bound = 1.0 / math.sqrt(fan_in[name])
            else:
                # GRU gate weights: fan-in of the matrix's own input side.
                bound = 1.0 / math.sqrt(param.shape[-1] if param.dim() > 1 else param.shape[0])
            with torch.no_grad():
                param.uniform_(-bound, bound, generator=gen)

    # ---- shape audit -----------------------------------------------------

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        c = self.config
        shapes: dict[str, tuple[int, ...]] = {"embedding": (c.vocab_size, c.d_emb)}
        for prefix, d_in, d_hid in (
            ("encoder_fwd", c.d_emb, c.d_hid),
            ("encoder_bwd", c.d_emb, c.d_hid),
            ("decoder", c.d_emb, 2 * c.d_hid),
        ):
            for gate in ("reset", "update", "cand"):
                shapes[f"{prefix}.w_{gate}"] = (d_hid, d_in)
                shapes[f"{prefix}.u_{gate}"] = (d_hid, d_hid)
                shapes[f"{prefix}.b_{gate}"] = (d_hid,)
        shapes["init_proj"] = (2 * c.d_hid, 2 * c.d_hid)
        shapes["out_proj_w"] = (c.vocab_size, 2 * c.d_hid)
        shapes["out_proj_b"] = (c.vocab_size,)
        shapes["attn_w"] = (c.n_experts + 2 * c.d_hid,)
        shapes["attn_b"] = (1,)
        shapes["rec_proj_w"] = (c.n_experts, 2 * c.d_hid)
        shapes["rec_proj_b"] = (c.n_experts,)
        return shapes

    def audit_shapes(self) -> None:
        expected = self.expected_shapes()
        actual = {name: tuple(p.shape) for name, p in self.named_parameters()}
        if actual != expected:
            mismatched = {
                name
                for name in set(expected) | set(actual)
                if expected.get(name) != actual.get(name)
            }
            raise ModelError(f"parameter shape audit failed for {sorted(mismatched)}")

    def audit_finite(self) -> None:
        for name, param in self.named_parameters():
            if not torch.isfinite(param).all():
                raise ModelError(f"non-finite values in parameter '{name}'")

    # ---- encoder ---------------------------------------------------------

    def encode(self, desc: Tensor, lengths: Tensor) -> EncoderOutput:
        """Run both GRU directions over an index batch (B, m), right-padded."""
        if desc.dim() != 2 or desc.shape[1] == 0:
            raise ModelError("encoder input must be a nonempty (batch, length) index tensor")
        if (lengths < 1).any():
            raise ModelError("every description must contain at least one token")
        batch, max_len = desc.shape
        positions = torch.arange(max_len)
        mask = positions.unsqueeze(0) < lengths.unsqueeze(1)
        emb = self.embedding[desc]                       # (B, m, d_emb)

        d_hid = self.config.d_hid
        h_fwd = torch.zeros(batch, d_hid, dtype=torch.float64)
        fwd_states = []
        for t in range(max_len):
            step = self.encoder_fwd(emb[:, t], h_fwd)
            gate = mask[:, t].unsqueeze(1)
            h_fwd = torch.where(gate, step, h_fwd)
            fwd_states.append(h_fwd)

        h_bwd = torch.zeros(batch, d_hid, dtype=torch.float64)
        bwd_states = [torch.zeros(batch, d_hid, dtype=torch.float64)] * max_len
        for t in range(max_len - 1, -1, -1):
            step = self.encoder_bwd(emb[:, t], h_bwd)
            gate = mask[:, t].unsqueeze(1)
            h_bwd = torch.where(gate, step, h_bwd)
            bwd_states[t] = h_bwd

        states = torch.cat([torch.stack(fwd_states, dim=1), torch.stack(bwd_states, dim=1)], dim=2)
        final = states[torch.arange(batch), lengths - 1]
        return EncoderOutput(states=states, final=final, mask=mask)

    # ---- decoder ---------------------------------------------------------

    def decode_teacher(self, z: Tensor, targets: Tensor) -> Tensor:
        """Teacher-forced logits (B, L, V); step j consumes target token j-1."""
        if targets is None:
            raise ModelError("teacher forcing requires target sequences")
        batch, max_len = targets.shape
        h = z @ self.init_proj.T
        sos = torch.full((batch, 1), SOS, dtype=torch.long)
        inputs = torch.cat([sos, targets[:, :-1]], dim=1)
        # PAD inputs are fine: the matching loss positions are masked out.
        logits = []
        for j in range(max_len):
            h = self.decoder(self.embedding[inputs[:, j]], h)
            logits.append(h @ self.out_proj_w.T + self.out_proj_b)
        return torch.stack(logits, dim=1)

    def decode_greedy(self, z: Tensor) -> list[list[int]]:
        """Greedy generation until EOS or max_decode_len; per-ticket token ids."""
        batch = z.shape[0]
        h = z @ self.init_proj.T
        token = torch.full((batch,), SOS, dtype=torch.long)
        finished = torch.zeros(batch, dtype=torch.bool)
        outputs: list[list[int]] = [[] for _ in range(batch)]
        for _ in range(self.config.max_decode_len):
            h = self.decoder(self.embedding[token], h)
            token = torch.argmax(h @ self.out_proj_w.T + self.out_proj_b, dim=1)
            for i in range(batch):
                if not finished[i]:
                    outputs[i].append(int(token[i]))
            finished |= token == EOS
            if finished.all():
                break
        return outputs

    # ---- recommendation --------------------------------------------------

    def attention_step(self, p_prev: Tensor, enc: EncoderOutput) -> tuple[Tensor, Tensor]:
        """Score every encoder state against the previous expert distribution.

        Returns (weights (B, m), context (B, 2*d_hid)).  Scores are
        tanh(w . [p_prev; h_i] + b); by default they are exponentially
        normalized over valid positions so the context is a convex
        combination of encoder states.
        """
        k = self.config.n_experts
        scores = torch.tanh(
            (p_prev @ self.attn_w[:k]).unsqueeze(1)
            + enc.states @ self.attn_w[k:]
            + self.attn_b
        )                                                  # (B, m)
        if self.config.normalize_attention:
            scores = scores.masked_fill(~enc.mask, -torch.inf)
            weights = torch.softmax(scores, dim=1)
        else:
            weights = scores.masked_fill(~enc.mask, 0.0)
        context = torch.einsum("bm,bmd->bd", weights, enc.states)
        return weights, context

    def recommender_head(self, context: Tensor) -> Tensor:
        return torch.softmax(context @ self.rec_proj_w.T + self.rec_proj_b, dim=-1)

    def recommend(
        self,
        enc: EncoderOutput,
        n_steps: Optional[int] = None,
        mask_repeats: bool = True,
    ) -> list[RecommendationTrace]:
        """Generate the expert sequence for each ticket in the batch.

        With ``mask_repeats`` the argmax at each step ignores experts already
        chosen (selection only; the recorded distributions stay raw).  The
        attention chain conditions on the previous step's full distribution,
        or its one-hot argmax when the config asks for it.
        """
        c = self.config
        n_steps = c.rec_len if n_steps is None else n_steps
        if n_steps < 1:
            raise ModelError("the recommendation sequence length must be >= 1")
        if mask_repeats and n_steps > c.n_experts:
            raise ModelError("cannot recommend more distinct experts than exist")

        batch = enc.final.shape[0]
        chosen = torch.zeros(batch, c.n_experts, dtype=torch.bool)
        context = enc.final
        probs_steps: list[Tensor] = []
        attn_steps: list[Tensor] = []
        context_steps: list[Tensor] = []
        picks: list[Tensor] = []
        p = self.recommender_head(context)
        for step in range(n_steps):
            if step > 0 and c.recurrent_attention:
                cond = p
                if c.attention_one_hot:
                    cond = nn.functional.one_hot(
                        torch.argmax(p, dim=1), c.n_experts
                    ).to(torch.float64)
                weights, context = self.attention_step(cond, enc)
                attn_steps.append(weights)
                p = self.recommender_head(context)
            selectable = p.masked_fill(chosen, 0.0) if mask_repeats else p
            pick = torch.argmax(selectable, dim=1)
            chosen[torch.arange(batch), pick] = True
            probs_steps.append(p)
            context_steps.append(context)
            picks.append(pick)

        all_probs = torch.stack(probs_steps, dim=1)        # (B, N, K)
        all_ctx = torch.stack(context_steps, dim=1)        # (B, N, 2h)
        all_attn = (
            torch.stack(attn_steps, dim=1)
            if attn_steps
            else torch.zeros(batch, 0, enc.states.shape[1], dtype=torch.float64)
        )
        pick_mat = torch.stack(picks, dim=1)               # (B, N)
        return [
            RecommendationTrace(
                experts=[int(e) for e in pick_mat[b]],
                step_probs=all_probs[b],
                attention=all_attn[b],
                contexts=all_ctx[b],
            )
            for b in range(batch)
        ]


# ---- losses ---------------------------------------------------------------


def loss_translation(logits: Tensor, targets: Tensor) -> Tensor:
    """Per-ticket mean token negative log-likelihood, PAD excluded.  (B,)"""
    if logits.shape[:2] != targets.shape:
        raise ModelError("logits and targets disagree on batch/length")
    log_probs = torch.log_softmax(logits, dim=2)
    token_nll = -log_probs.gather(2, targets.unsqueeze(2)).squeeze(2)  # (B, L)
    real = targets != PAD
    return (token_nll * real).sum(dim=1) / real.sum(dim=1).clamp(min=1)


def loss_accuracy(step_probs: Tensor, expert_index: Tensor) -> Tensor:
    """Mean over steps of -log p_n[true expert], per ticket.  (B,)"""
    n_experts = step_probs.shape[2]
    if (expert_index < 0).any() or (expert_index >= n_experts).any():
        raise ModelError("expert index out of range")
    true_p = step_probs.gather(
        2, expert_index.view(-1, 1, 1).expand(-1, step_probs.shape[1], 1)
    ).squeeze(2)
    return -torch.log(true_p.clamp(min=1e-300)).mean(dim=1)


def disparity_metric(experts: list[int]) -> int:
    """Sequence length minus the number of distinct experts in it."""
    return len(experts) - len(set(experts))


def disparity_surrogate(step_probs: Tensor) -> Tensor:
    """Differentiable repetition penalty: sum of pairwise step-distribution
    inner products.  Zero iff supports are pairwise disjoint.  (B,)"""
    gram = torch.einsum("bnk,bmk->bnm", step_probs, step_probs)
    n = step_probs.shape[1]
    upper = torch.triu(torch.ones(n, n, dtype=torch.bool), diagonal=1)
    return gram[:, upper].sum(dim=1)


def joint_loss(
    translation: Tensor, accuracy: Tensor, surrogate: Tensor, config: ModelConfig
) -> Tensor:
    return (
        config.alpha_translation * translation
        + config.alpha_accuracy * accuracy
        + config.alpha_disparity * surrogate
    )
