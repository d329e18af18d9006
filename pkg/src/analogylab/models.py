"""Scoring model assemblies built from the layer zoo.

A scoring model maps one question to one scalar per candidate. Candidates
are scored by independent passes that share the question context, so every
score is a pure function of (context, candidate) and candidate order cannot
leak into the scores.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .symbolic import VALUE_RANGE, object_dim

RNN_HIDDEN = 64
CONV_CHANNELS = 32
CONTEXT_PANELS = 5          # 3 source panels + 2 target panels
SEQUENCE_PANELS = 6         # context plus one candidate


def conv_embedding_size(image_side: int) -> int:
    s = image_side
    for _ in range(4):
        s = (s + 2 - 3) // 2 + 1
    return CONV_CHANNELS * s * s


class VisualScorer:
    """Four stride-2 conv layers embed each panel; a 64-unit tanh RNN reads
    the 5 context embeddings plus one candidate embedding; a linear head
    scores the final hidden state. The head starts at zero so an untrained
    model is exactly indifferent between candidates."""

    kind = "visual"

    def __init__(self, image_side: int, init_seed: int, dtype=np.float32):
        self.image_side = image_side
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence([init_seed, 0x11ad]))
        self.convs = []
        cin = 1
        for _ in range(4):
            self.convs.append(nn.Conv2D(cin, CONV_CHANNELS, rng, dtype))
            cin = CONV_CHANNELS
        self.embed_dim = conv_embedding_size(image_side)
        self.rnn = nn.VanillaRNN(self.embed_dim, RNN_HIDDEN, rng, dtype)
        self.head = nn.Dense(RNN_HIDDEN, 1, rng, dtype, zero_init=True)

    # -- parameter plumbing ------------------------------------------------
    def param_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, c in enumerate(self.convs):
            for k, v in c.params.items():
                out[f"conv{i + 1}.{k}"] = v
        for k, v in self.rnn.params.items():
            out[f"rnn.{k}"] = v
        for k, v in self.head.params.items():
            out[f"head.{k}"] = v
        return out

    def load_param_dict(self, arrays: dict[str, np.ndarray]) -> None:
        mine = self.param_dict()
        for k, v in mine.items():
            v[...] = arrays[k].astype(v.dtype)

    def spec_records(self) -> list[dict]:
        recs = [{"kind": "layer", "layer": "conv2d", "in": c.cin, "out": c.cout,
                 "kernel": 3, "stride": 2} for c in self.convs]
        recs.append({"kind": "layer", "layer": "rnn",
                     "in": self.embed_dim, "hidden": RNN_HIDDEN})
        recs.append({"kind": "layer", "layer": "dense", "in": RNN_HIDDEN, "out": 1})
        recs.insert(0, {"kind": "model", "model": "visual-scorer",
                        "image_side": self.image_side})
        return recs

    def astype(self, dtype):
        self.dtype = dtype
        for c in self.convs:
            c.astype(dtype)
        self.rnn.astype(dtype)
        self.head.astype(dtype)
        return self

    # -- forward/backward --------------------------------------------------
    def _embed(self, panels: np.ndarray, want_grads: bool):
        """panels (N, S, S) float -> embeddings (N, E) plus conv caches."""
        x = panels[:, None, :, :]
        caches = []
        for conv in self.convs:
            x, ccache = conv.forward(x)
            y, rcache = nn.ReLU().forward(x)
            caches.append((ccache, rcache) if want_grads else None)
            x = y
        emb = x.reshape(x.shape[0], -1)
        return emb, caches

    def score_batch(self, panels: np.ndarray, want_grads: bool = True,
                    source_blind: bool = False):
        """panels (B, 5 + K, S, S) scaled to [0, 1] -> scores (B, K)."""
        B, P = panels.shape[:2]
        K = P - CONTEXT_PANELS
        flat = panels.reshape(B * P, *panels.shape[2:]).astype(self.dtype, copy=False)
        emb, conv_caches = self._embed(flat, want_grads)
        emb = emb.reshape(B, P, -1)
        if source_blind:
            emb = emb.copy()
            emb[:, :3] = 0.0
        scores = np.empty((B, K), dtype=self.dtype)
        passes = []
        for k in range(K):
            seq = np.concatenate(
                [emb[:, :CONTEXT_PANELS], emb[:, CONTEXT_PANELS + k:CONTEXT_PANELS + k + 1]],
                axis=1)
            hs, rnn_cache = self.rnn.forward(seq)
            s, head_cache = self.head.forward(hs[:, -1])
            scores[:, k] = s[:, 0]
            passes.append((rnn_cache, head_cache) if want_grads else None)
        if not want_grads:
            return scores, None
        cache = (conv_caches, passes, (B, P, K), source_blind)
        return scores, cache

    def backward(self, cache, dscores: np.ndarray):
        conv_caches, passes, (B, P, K), source_blind = cache
        demb = np.zeros((B, P, self.embed_dim), dtype=self.dtype)
        for k in range(K):
            rnn_cache, head_cache = passes[k]
            dh, head_grads = self.head.backward(head_cache, dscores[:, k:k + 1])
            if k == 0:
                acc = {f"head.{n}": g for n, g in head_grads.items()}
                acc.update({f"rnn.{n}": np.zeros_like(v)
                            for n, v in self.rnn.params.items()})
            else:
                for n, g in head_grads.items():
                    acc[f"head.{n}"] += g
            dseq, rnn_grads = self.rnn.backward(rnn_cache, dh)
            for n, g in rnn_grads.items():
                acc[f"rnn.{n}"] += g
            demb[:, :CONTEXT_PANELS] += dseq[:, :CONTEXT_PANELS]
            demb[:, CONTEXT_PANELS + k] = dseq[:, CONTEXT_PANELS]
        if source_blind:
            demb[:, :3] = 0.0
        dx = demb.reshape(B * P, self.embed_dim)
        # walk the conv stack backwards; embedding reshape undone first
        s = self.image_side
        for _ in range(4):
            s = (s + 2 - 3) // 2 + 1
        dx = dx.reshape(B * P, CONV_CHANNELS, s, s)
        for conv, caches in zip(reversed(self.convs), reversed(conv_caches)):
            ccache, rcache = caches
            dx, _ = nn.ReLU().backward(rcache, dx)
            dx, cgrads = conv.backward(ccache, dx)
            i = self.convs.index(conv) + 1
            acc[f"conv{i}.W"] = cgrads["W"]
            acc[f"conv{i}.b"] = cgrads["b"]
        return acc

    def context_states(self, panels: np.ndarray) -> np.ndarray:
        """Hidden state after the 5 context embeddings, before any candidate.

        panels (B, 5, S, S) -> states (B, 64).
        """
        B = panels.shape[0]
        flat = panels.reshape(B * CONTEXT_PANELS, *panels.shape[2:]).astype(
            self.dtype, copy=False)
        emb, _ = self._embed(flat, want_grads=False)
        hs, _ = self.rnn.forward(emb.reshape(B, CONTEXT_PANELS, -1))
        return hs[:, -1].copy()


class SymbolicScorer:
    """Relation network over the 17 context objects plus one candidate."""

    kind = "symbolic"

    def __init__(self, dims: int, init_seed: int, dtype=np.float32,
                 width: int = 128, f_width: int = 128):
        self.dims = dims
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence([init_seed, 0x57b0]))
        self.core = nn.RelationCore(object_dim(dims), rng,
                                    width=width, f_width=f_width,
                                    dtype=dtype, zero_head=True)

    def param_dict(self) -> dict[str, np.ndarray]:
        return {f"core.{k}": v for k, v in self.core.params.items()}

    def load_param_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in self.core.params.items():
            v[...] = arrays[f"core.{k}"].astype(v.dtype)

    def spec_records(self) -> list[dict]:
        return [{"kind": "model", "model": "symbolic-scorer", "dims": self.dims},
                {"kind": "layer", "layer": "relation-core",
                 "obj_dim": object_dim(self.dims), "width": self.core.width,
                 "f_width": self.core.f_width}]

    def astype(self, dtype):
        self.dtype = dtype
        self.core.astype(dtype)
        return self

    def score_batch(self, ctx: np.ndarray, cands: np.ndarray,
                    want_grads: bool = True):
        return self.core.forward(ctx.astype(self.dtype, copy=False),
                                 cands.astype(self.dtype, copy=False),
                                 want_grads=want_grads)

    def backward(self, cache, dscores: np.ndarray,
                 want_param_grads: bool = True,
                 keep: np.ndarray | None = None):
        dctx, dcand, grads = self.core.backward(cache, dscores,
                                                want_param_grads, keep)
        if grads is not None:
            grads = {f"core.{k}": g for k, g in grads.items()}
        return dctx, dcand, grads


class CandidateGenerator:
    """Adversarial decoy generator: pair-sum network over the target set.

    Sees only the 8 target-set objects and emits one candidate vector in the
    scaled stimulus range via a sigmoid squash, so proposals can never leave
    the value range no matter how training moves the weights.
    """

    def __init__(self, dims: int, init_seed: int, dtype=np.float32,
                 width: int = 128, f_width: int = 128):
        self.dims = dims
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence([init_seed, 0x93e4]))
        self.net = nn.PairSumNetwork(object_dim(dims), dims, rng, width=width,
                                     f_width=f_width, dtype=dtype)

    def param_dict(self) -> dict[str, np.ndarray]:
        return {f"gen.{k}": v for k, v in self.net.params.items()}

    def load_param_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in self.net.params.items():
            v[...] = arrays[f"gen.{k}"].astype(v.dtype)

    def forward(self, target_objs: np.ndarray):
        """target_objs (N, m, object_dim) -> candidates (N, dims) in [0, 1)."""
        raw, cache = self.net.forward(target_objs.astype(self.dtype, copy=False))
        out = 1.0 / (1.0 + np.exp(-raw))
        out *= (VALUE_RANGE - 1) / VALUE_RANGE     # keep strictly inside the range
        return out, (cache, out)

    def backward(self, cache, dout: np.ndarray):
        net_cache, out = cache
        scale = (VALUE_RANGE - 1) / VALUE_RANGE
        sig = out / scale
        draw = dout * scale * sig * (1.0 - sig)
        _, grads = self.net.backward(net_cache, draw)
        return {f"gen.{k}": g for k, g in grads.items()}
