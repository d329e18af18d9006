"""Minimal trainable layer zoo with exact, hand-derived gradients.

Everything is plain numpy. Layers follow one calling convention:

    y, cache = layer.forward(x)
    dx, grads = layer.backward(cache, dy)

``grads`` is a dict keyed like ``layer.params``. Parameters are float32 by
default; ``astype(np.float64)`` switches a layer to 64-bit for gradient
checking. No layer mutates its parameters during forward/backward; updates
happen only through ``Adam.step``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ContainerFormatError, DivergedError

CHECKPOINT_MAGIC = b"LNET"
CHECKPOINT_VERSION = 1


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense:
    """Affine layer: y = x @ W + b, input (B, nin)."""

    def __init__(self, nin: int, nout: int, rng: np.random.Generator,
                 dtype=np.float32, zero_init: bool = False):
        self.nin, self.nout = nin, nout
        if zero_init:
            W = np.zeros((nin, nout), dtype=dtype)
        else:
            W = glorot_uniform(rng, (nin, nout), nin, nout, dtype)
        self.params = {"W": W, "b": np.zeros(nout, dtype=dtype)}

    def forward(self, x: np.ndarray):
        y = x @ self.params["W"] + self.params["b"]
        return y, x

    def backward(self, cache, dy: np.ndarray):
        x = cache
        dW = x.T @ dy
        db = dy.sum(axis=0)
        dx = dy @ self.params["W"].T
        return dx, {"W": dW, "b": db}

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self


class ReLU:
    params: dict = {}

    def forward(self, x: np.ndarray):
        y = np.maximum(x, 0)
        return y, y

    def backward(self, cache, dy: np.ndarray):
        y = cache
        return dy * (y > 0), {}

    def astype(self, dtype):
        return self


class Conv2D:
    """3x3 convolution, stride 2, zero padding 1. Input (B, C, H, W).

    Output spatial size is (H + 2 - 3) // 2 + 1, so 80 -> 40 -> 20 -> 10 -> 5
    under repeated application.
    """

    KERNEL = 3
    STRIDE = 2
    PAD = 1

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, dtype=np.float32):
        self.cin, self.cout = cin, cout
        k = self.KERNEL
        W = glorot_uniform(rng, (cout, cin, k, k), cin * k * k, cout * k * k, dtype)
        self.params = {"W": W, "b": np.zeros(cout, dtype=dtype)}

    def _cols(self, x: np.ndarray):
        B, C, H, Wd = x.shape
        k, s, p = self.KERNEL, self.STRIDE, self.PAD
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        OH = (H + 2 * p - k) // s + 1
        OW = (Wd + 2 * p - k) // s + 1
        sb, sc, sh, sw = xp.strides
        win = np.lib.stride_tricks.as_strided(
            xp, shape=(B, C, OH, OW, k, k),
            strides=(sb, sc, s * sh, s * sw, sh, sw), writeable=False)
        col = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * OH * OW, C * k * k)
        return np.ascontiguousarray(col), (OH, OW)

    def forward(self, x: np.ndarray):
        B = x.shape[0]
        col, (OH, OW) = self._cols(x)
        Wm = self.params["W"].reshape(self.cout, -1).T
        y = col @ Wm + self.params["b"]
        y = y.reshape(B, OH, OW, self.cout).transpose(0, 3, 1, 2)
        return y, (col, x.shape, (OH, OW))

    def backward(self, cache, dy: np.ndarray):
        col, xshape, (OH, OW) = cache
        B, C, H, Wd = xshape
        k, s, p = self.KERNEL, self.STRIDE, self.PAD
        dym = dy.transpose(0, 2, 3, 1).reshape(-1, self.cout)
        dW = (col.T @ dym).T.reshape(self.params["W"].shape)
        db = dym.sum(axis=0)
        dcol = (dym @ self.params["W"].reshape(self.cout, -1)).reshape(B, OH, OW, C, k, k)
        dxp = np.zeros((B, C, H + 2 * p, Wd + 2 * p), dtype=dy.dtype)
        for ki in range(k):
            for kj in range(k):
                dxp[:, :, ki:ki + s * OH:s, kj:kj + s * OW:s] += \
                    dcol[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p:p + H, p:p + Wd]
        return dx, {"W": dW, "b": db}

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self


class VanillaRNN:
    """Plain tanh recurrence over a fixed-length sequence, h0 = 0.

    forward takes (B, T, nin) and returns all hidden states (B, T, H);
    backward takes the gradient of the final hidden state only, which is
    all the scoring head ever uses.
    """

    def __init__(self, nin: int, nhidden: int, rng: np.random.Generator, dtype=np.float32):
        self.nin, self.nhidden = nin, nhidden
        self.params = {
            "Wx": glorot_uniform(rng, (nin, nhidden), nin, nhidden, dtype),
            "Wh": glorot_uniform(rng, (nhidden, nhidden), nhidden, nhidden, dtype),
            "b": np.zeros(nhidden, dtype=dtype),
        }

    def forward(self, xs: np.ndarray):
        B, T, _ = xs.shape
        H = self.nhidden
        hs = np.empty((B, T, H), dtype=xs.dtype)
        h = np.zeros((B, H), dtype=xs.dtype)
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        for t in range(T):
            h = np.tanh(xs[:, t] @ Wx + h @ Wh + b)
            hs[:, t] = h
        return hs, (xs, hs)

    def backward(self, cache, dh_last: np.ndarray):
        xs, hs = cache
        B, T, _ = xs.shape
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dWx = np.zeros_like(Wx)
        dWh = np.zeros_like(Wh)
        db = np.zeros_like(self.params["b"])
        dxs = np.empty_like(xs)
        dh = dh_last
        for t in range(T - 1, -1, -1):
            dz = dh * (1.0 - hs[:, t] ** 2)
            hprev = hs[:, t - 1] if t > 0 else np.zeros((B, self.nhidden), dtype=xs.dtype)
            dWx += xs[:, t].T @ dz
            dWh += hprev.T @ dz
            db += dz.sum(axis=0)
            dxs[:, t] = dz @ Wx.T
            dh = dz @ Wh.T
        return dxs, {"Wx": dWx, "Wh": dWh, "b": db}

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self


class RelationCore:
    """Pair-sum relational scorer.

    Context objects (B, n, d) are shared across the K candidate passes of a
    question; pass k scores the object set ``context + [candidate_k]``. Every
    ordered object pair (self-pairs included) goes through a 3-layer MLP g,
    the g outputs are averaged over pairs, and a 2-layer MLP f maps that mean
    to one scalar per pass. Averaging rather than summing keeps f's input on
    the scale of a single g output however many objects a question has. Context-context pairs do not depend on the
    candidate, so they are computed once per question and reused by all K
    passes; the result is bit-identical to scoring each pass independently.
    """

    def __init__(self, obj_dim: int, rng: np.random.Generator, width: int = 128,
                 f_width: int = 128, dtype=np.float32, zero_head: bool = True):
        self.obj_dim, self.width, self.f_width = obj_dim, width, f_width
        d, g, f = obj_dim, width, f_width
        self.params = {
            # first g layer, split over the two halves of the pair concat
            "g1a": glorot_uniform(rng, (d, g), 2 * d, g, dtype),
            "g1b": glorot_uniform(rng, (d, g), 2 * d, g, dtype),
            "g1c": np.zeros(g, dtype=dtype),
            "g2W": glorot_uniform(rng, (g, g), g, g, dtype),
            "g2b": np.zeros(g, dtype=dtype),
            "g3W": glorot_uniform(rng, (g, g), g, g, dtype),
            "g3b": np.zeros(g, dtype=dtype),
            "fW1": glorot_uniform(rng, (g, f), g, f, dtype),
            "fb1": np.zeros(f, dtype=dtype),
            "fW2": np.zeros((f, 1), dtype=dtype) if zero_head
                   else glorot_uniform(rng, (f, 1), f, 1, dtype),
            "fb2": np.zeros(1, dtype=dtype),
        }

    def _g_rest(self, pre1: np.ndarray):
        # rows (R, g) of first-layer pre-activations -> g output plus caches
        p = self.params
        y1 = np.maximum(pre1, 0)
        y2 = np.maximum(y1 @ p["g2W"] + p["g2b"], 0)
        y3 = np.maximum(y2 @ p["g3W"] + p["g3b"], 0)
        return y3, (y1, y2, y3)

    def _g_rest_backward(self, cache, dy3: np.ndarray, want_param_grads: bool):
        # dy3 is always a freshly materialized buffer, so the in-place
        # masked multiplies below cannot corrupt any cached activation
        p = self.params
        y1, y2, y3 = cache
        dz3 = np.multiply(dy3, y3 > 0, out=dy3)
        dW3 = db3 = dW2 = db2 = None
        if want_param_grads:
            dW3 = y2.T @ dz3
            db3 = dz3.sum(axis=0)
        dy2 = dz3 @ p["g3W"].T
        dz2 = np.multiply(dy2, y2 > 0, out=dy2)
        if want_param_grads:
            dW2 = y1.T @ dz2
            db2 = dz2.sum(axis=0)
        dy1 = dz2 @ p["g2W"].T
        dpre1 = np.multiply(dy1, y1 > 0, out=dy1)
        return dpre1, dW2, db2, dW3, db3

    def forward(self, ctx: np.ndarray, cand: np.ndarray, want_grads: bool = True):
        """Scores (B, K) for context (B, n, d) and candidates (B, K, d)."""
        p = self.params
        B, n, d = ctx.shape
        K = cand.shape[1]
        g = self.width
        A = ctx @ p["g1a"]        # (B, n, g)
        Bc = ctx @ p["g1b"]
        Ac = cand @ p["g1a"]      # (B, K, g)
        Bk = cand @ p["g1b"]
        # context-context pairs, candidate-independent
        pre_cc = (A[:, :, None, :] + Bc[:, None, :, :] + p["g1c"]).reshape(B, n * n, g)
        out_cc, cache_cc = self._g_rest(pre_cc.reshape(-1, g))
        ss = out_cc.reshape(B, n * n, g).sum(axis=1)          # (B, g)
        # candidate rows: cand-as-i over ctx, ctx-as-i over cand, cand self pair
        pre_kc = Ac[:, :, None, :] + Bc[:, None, :, :] + p["g1c"]   # (B, K, n, g)
        pre_ck = A[:, None, :, :] + Bk[:, :, None, :] + p["g1c"]    # (B, K, n, g)
        pre_kk = (Ac + Bk + p["g1c"])[:, :, None, :]                # (B, K, 1, g)
        pre_cand = np.concatenate([pre_kc, pre_ck, pre_kk], axis=2)  # (B, K, 2n+1, g)
        R = 2 * n + 1
        out_cand, cache_cand = self._g_rest(pre_cand.reshape(-1, g))
        tsum = out_cand.reshape(B, K, R, g).sum(axis=2)        # (B, K, g)
        S = (ss[:, None, :] + tsum) / (n * n + R)              # (B, K, g)
        hf = np.maximum(S.reshape(-1, g) @ p["fW1"] + p["fb1"], 0)
        scores = (hf @ p["fW2"] + p["fb2"]).reshape(B, K)
        if not want_grads:
            return scores, None
        cache = (ctx, cand, cache_cc, cache_cand, S, hf, (B, n, K))
        return scores, cache

    def backward(self, cache, dscores: np.ndarray, want_param_grads: bool = True,
                 keep: np.ndarray | None = None):
        """Returns (dctx, dcand, grads); grads is None when not requested.

        ``keep`` (B, K') restricts the gradient to those candidate slots:
        gated-out candidates contribute exactly nothing, as if their passes
        had never run. ``dscores`` then has shape (B, K') and ``dcand`` comes
        back per retained slot.
        """
        p = self.params
        ctx, cand, cache_cc, cache_cand, S, hf, (B, n, K) = cache
        g = self.width
        R = 2 * n + 1
        if keep is not None:
            rows = np.arange(B)[:, None]
            S = S[rows, keep]
            hf = hf.reshape(B, K, -1)[rows, keep].reshape(B * keep.shape[1], -1)
            cache_cand = tuple(a.reshape(B, K, R, g)[rows, keep].reshape(-1, g)
                               for a in cache_cand)
            cand = cand[rows, keep]
            K = keep.shape[1]
        ds = dscores.reshape(-1, 1)
        if want_param_grads:
            dfW2 = hf.T @ ds
            dfb2 = ds.sum(axis=0)
        dhf = ds @ p["fW2"].T
        dzf = dhf * (hf > 0)
        if want_param_grads:
            dfW1 = S.reshape(-1, g).T @ dzf
            dfb1 = dzf.sum(axis=0)
        dS = (dzf @ p["fW1"].T).reshape(B, K, g)
        dS /= n * n + R
        dss = dS.sum(axis=1)                                   # (B, g)
        # context-context rows: upstream is dss broadcast over the n*n rows
        up_cc = np.broadcast_to(dss[:, None, :], (B, n * n, g)).reshape(-1, g)
        dpre_cc, dW2a, db2a, dW3a, db3a = self._g_rest_backward(
            cache_cc, up_cc, want_param_grads)
        # candidate rows: upstream is dS per pass broadcast over its 2n+1 rows
        up_cand = np.broadcast_to(dS[:, :, None, :], (B, K, R, g)).reshape(-1, g)
        dpre_cand, dW2b, db2b, dW3b, db3b = self._g_rest_backward(
            cache_cand, up_cand, want_param_grads)
        dpre_cc = dpre_cc.reshape(B, n, n, g)
        dpre_cand = dpre_cand.reshape(B, K, R, g)
        dpre_kc = dpre_cand[:, :, :n]
        dpre_ck = dpre_cand[:, :, n:2 * n]
        dpre_kk = dpre_cand[:, :, 2 * n]
        dA = dpre_cc.sum(axis=2) + dpre_ck.sum(axis=1)         # (B, n, g)
        dBc = dpre_cc.sum(axis=1) + dpre_kc.sum(axis=1)        # (B, n, g)
        dAc = dpre_kc.sum(axis=2) + dpre_kk                    # (B, K, g)
        dBk = dpre_ck.sum(axis=2) + dpre_kk
        dctx = (dA @ p["g1a"].T + dBc @ p["g1b"].T)
        dcand = (dAc @ p["g1a"].T + dBk @ p["g1b"].T)
        if not want_param_grads:
            return dctx, dcand, None
        dg1c = dpre_cc.sum(axis=(0, 1, 2)) + dpre_cand.sum(axis=(0, 1, 2))
        ctx_flat = ctx.reshape(-1, self.obj_dim)
        cand_flat = cand.reshape(-1, self.obj_dim)
        dg1a = ctx_flat.T @ dA.reshape(-1, g) + cand_flat.T @ dAc.reshape(-1, g)
        dg1b = ctx_flat.T @ dBc.reshape(-1, g) + cand_flat.T @ dBk.reshape(-1, g)
        grads = {"g1a": dg1a, "g1b": dg1b, "g1c": dg1c,
                 "g2W": dW2a + dW2b, "g2b": db2a + db2b,
                 "g3W": dW3a + dW3b, "g3b": db3a + db3b,
                 "fW1": dfW1, "fb1": dfb1, "fW2": dfW2, "fb2": dfb2}
        return dctx, dcand, grads

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self


class PairSumNetwork:
    """Pair-sum network over one object set, with a vector output head.

    Same g-over-ordered-pairs-then-sum structure as RelationCore, but scores
    a single object set (B, n, d) into an (B, out_dim) output. Used by the
    adversarial candidate generator, whose input is the target set alone.
    """

    def __init__(self, obj_dim: int, out_dim: int, rng: np.random.Generator,
                 width: int = 128, f_width: int = 128, dtype=np.float32):
        self.obj_dim, self.out_dim, self.width = obj_dim, out_dim, width
        d, g, f = obj_dim, width, f_width
        self.params = {
            "g1a": glorot_uniform(rng, (d, g), 2 * d, g, dtype),
            "g1b": glorot_uniform(rng, (d, g), 2 * d, g, dtype),
            "g1c": np.zeros(g, dtype=dtype),
            "g2W": glorot_uniform(rng, (g, g), g, g, dtype),
            "g2b": np.zeros(g, dtype=dtype),
            "g3W": glorot_uniform(rng, (g, g), g, g, dtype),
            "g3b": np.zeros(g, dtype=dtype),
            "fW1": glorot_uniform(rng, (g, f), g, f, dtype),
            "fb1": np.zeros(f, dtype=dtype),
            "fW2": glorot_uniform(rng, (f, out_dim), f, out_dim, dtype),
            "fb2": np.zeros(out_dim, dtype=dtype),
        }

    def forward(self, objs: np.ndarray):
        p = self.params
        B, n, d = objs.shape
        g = self.width
        A = objs @ p["g1a"]
        Bb = objs @ p["g1b"]
        pre = (A[:, :, None, :] + Bb[:, None, :, :] + p["g1c"]).reshape(-1, g)
        y1 = np.maximum(pre, 0)
        y2 = np.maximum(y1 @ p["g2W"] + p["g2b"], 0)
        y3 = np.maximum(y2 @ p["g3W"] + p["g3b"], 0)
        S = y3.reshape(B, n * n, g).sum(axis=1)
        hf = np.maximum(S @ p["fW1"] + p["fb1"], 0)
        out = hf @ p["fW2"] + p["fb2"]
        return out, (objs, y1, y2, y3, S, hf, (B, n))

    def backward(self, cache, dout: np.ndarray):
        p = self.params
        objs, y1, y2, y3, S, hf, (B, n) = cache
        g = self.width
        dfW2 = hf.T @ dout
        dfb2 = dout.sum(axis=0)
        dhf = dout @ p["fW2"].T
        dzf = dhf * (hf > 0)
        dfW1 = S.T @ dzf
        dfb1 = dzf.sum(axis=0)
        dS = dzf @ p["fW1"].T
        up = np.broadcast_to(dS[:, None, :], (B, n * n, g)).reshape(-1, g)
        dz3 = up * (y3 > 0)
        dW3 = y2.T @ dz3
        db3 = dz3.sum(axis=0)
        dy2 = dz3 @ p["g3W"].T
        dz2 = dy2 * (y2 > 0)
        dW2 = y1.T @ dz2
        db2 = dz2.sum(axis=0)
        dy1 = dz2 @ p["g2W"].T
        dpre = (dy1 * (y1 > 0)).reshape(B, n, n, g)
        dA = dpre.sum(axis=2)
        dBb = dpre.sum(axis=1)
        dg1c = dpre.sum(axis=(0, 1, 2))
        objs_flat = objs.reshape(-1, self.obj_dim)
        dg1a = objs_flat.T @ dA.reshape(-1, g)
        dg1b = objs_flat.T @ dBb.reshape(-1, g)
        dobjs = dA @ p["g1a"].T + dBb @ p["g1b"].T
        grads = {"g1a": dg1a, "g1b": dg1b, "g1c": dg1c,
                 "g2W": dW2, "g2b": db2, "g3W": dW3, "g3b": db3,
                 "fW1": dfW1, "fb1": dfb1, "fW2": dfW2, "fb2": dfb2}
        return dobjs, grads

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    z = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(scores: np.ndarray, answer_index: int):
    """Loss -log softmax(scores)[answer]; gradient is softmax - one_hot."""
    p = softmax(scores)
    loss = -np.log(max(p[answer_index], np.finfo(p.dtype).tiny))
    dscores = p.copy()
    dscores[answer_index] -= 1.0
    return float(loss), dscores


def cross_entropy_batch(scores: np.ndarray, answers: np.ndarray):
    """Mean cross-entropy over a (B, K) score batch; dscores is scaled 1/B."""
    B = scores.shape[0]
    p = softmax(scores, axis=1)
    picked = p[np.arange(B), answers]
    loss = float(-np.log(np.maximum(picked, np.finfo(p.dtype).tiny)).mean())
    dscores = p
    dscores[np.arange(B), answers] -= 1.0
    dscores /= B
    return loss, dscores


class Adam:
    """Standard bias-corrected Adam over an ordered parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            gr = grads[k]
            if not np.all(np.isfinite(gr)):
                raise DivergedError(f"non-finite gradient for parameter {k!r}")
            m = self.m[k]
            v = self.v[k]
            m += (1.0 - b1) * (gr - m)
            v += (1.0 - b2) * (gr * gr - v)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self, params: dict[str, np.ndarray]) -> list[tuple[str, np.ndarray]]:
        out = []
        for k in params:
            out.append((f"adam.m.{k}", self.m[k]))
            out.append((f"adam.v.{k}", self.v[k]))
        return out

    def load_state(self, params: dict[str, np.ndarray],
                   arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for k in params:
            self.m[k] = arrays[f"adam.m.{k}"].copy()
            self.v[k] = arrays[f"adam.v.{k}"].copy()


def grad_check(loss_fn, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               epsilon: float = 1e-5, max_per_param: int = 1000,
               seed: int = 0) -> float:
    """Max relative error between ``grads`` and central finite differences.

    ``loss_fn`` re-evaluates the scalar loss from the current contents of
    ``params``; entries are perturbed in place and restored. Parameters with
    more than ``max_per_param`` entries are subsampled with a seeded choice.
    Run in float64 for meaningful thresholds.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in params:
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        if flat.size <= max_per_param:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=max_per_param, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + epsilon
            lp = loss_fn()
            flat[i] = keep - epsilon
            lm = loss_fn()
            flat[i] = keep
            num = (lp - lm) / (2.0 * epsilon)
            ana = gflat[i]
            # floor the scale at 1 so structurally-zero gradients are
            # compared absolutely, at the noise floor of the differences
            rel = abs(num - ana) / max(abs(num) + abs(ana), 1.0)
            if rel > worst:
                worst = rel
    return worst


def save_checkpoint(path, records: list[dict], arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write a parameter container: magic, version, JSON record list, buffers.

    ``records`` describes the model (layer specs plus any state records);
    a buffer manifest entry is appended per array so the reader can restore
    shapes and dtypes without guessing.
    """
    manifest = list(records)
    for name, arr in arrays:
        code = {"float32": "f4", "float64": "f8"}[str(arr.dtype)]
        manifest.append({"kind": "buffer", "name": name,
                         "shape": list(arr.shape), "dtype": code})
    blob = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path):
    """Read a container written by save_checkpoint -> (records, arrays dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise ContainerFormatError("truncated checkpoint header", len(data))
    magic, version, jlen = struct.unpack_from("<4sII", data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}", 0)
    if version != CHECKPOINT_VERSION:
        raise ContainerFormatError(f"unsupported checkpoint version {version}", 4)
    off = 12
    if off + jlen > len(data):
        raise ContainerFormatError("truncated record list", off)
    manifest = json.loads(data[off:off + jlen].decode("utf-8"))
    off += jlen
    records = [r for r in manifest if r.get("kind") != "buffer"]
    arrays = {}
    for r in manifest:
        if r.get("kind") != "buffer":
            continue
        dt = np.dtype("<" + r["dtype"])
        n = int(np.prod(r["shape"], dtype=np.int64)) if r["shape"] else 1
        nbytes = n * dt.itemsize
        if off + nbytes > len(data):
            raise ContainerFormatError(f"truncated buffer {r['name']!r}", off)
        arrays[r["name"]] = np.frombuffer(
            data, dtype=dt, count=n, offset=off).reshape(r["shape"]).copy()
        off += nbytes
    if off != len(data):
        raise ContainerFormatError("trailing bytes after last buffer", off)
    return records, arrays


def layer_grad_report(include=None, *, seed: int = 0,
                      max_per_param: int = 200) -> dict[str, float]:
    """Finite-difference audit of every layer backward pass, in float64.

    Returns {layer name: max relative error} for the layers in ``include``
    (all five by default). Biases are jittered away from zero first so no
    rectifier pre-activation sits within probe distance of its kink.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9c]))

    def jitter(params):
        for name, v in params.items():
            if v.ndim == 1 and v.size:
                v += rng.uniform(0.05, 0.1, v.shape) * np.where(
                    rng.random(v.shape) < 0.5, -1.0, 1.0)

    def audit(layer, x, forward, backward):
        out, cache = forward(x)
        up = rng.normal(size=out.shape)
        dx, param_grads = backward(cache, up)
        params = {"x": x}
        params.update(layer.params)
        grads = {"x": dx}
        grads.update(param_grads)
        return grad_check(lambda: float((forward(x)[0] * up).sum()),
                          params, grads, max_per_param=max_per_param,
                          seed=seed)

    report: dict[str, float] = {}
    wanted = set(include) if include is not None else None

    def active(name):
        return wanted is None or name in wanted

    if active("dense"):
        layer = Dense(7, 5, rng, np.float64)
        jitter(layer.params)
        report["dense"] = audit(layer, rng.normal(size=(4, 7)),
                                layer.forward, layer.backward)
    if active("relu"):
        layer = ReLU()
        x = rng.normal(size=(4, 9))
        x += np.where(x < 0, -0.05, 0.05)       # clear of the kink
        report["relu"] = audit(layer, x, layer.forward, layer.backward)
    if active("conv2d"):
        layer = Conv2D(2, 3, rng, np.float64)
        jitter(layer.params)
        report["conv2d"] = audit(layer, rng.normal(size=(2, 2, 9, 9)),
                                 layer.forward, layer.backward)
    if active("rnn"):
        layer = VanillaRNN(6, 8, rng, np.float64)
        jitter(layer.params)
        seq = rng.normal(size=(3, 6, 6))        # six-step unroll
        out, cache = layer.forward(seq)
        up = rng.normal(size=(3, 8))
        dx, pgrads = layer.backward(cache, up)
        params = {"x": seq}
        params.update(layer.params)
        grads = {"x": dx}
        grads.update(pgrads)
        report["rnn"] = grad_check(
            lambda: float((layer.forward(seq)[0][:, -1] * up).sum()),
            params, grads, max_per_param=max_per_param, seed=seed)
    if active("relation-core"):
        core = RelationCore(11, rng, width=16, f_width=16, dtype=np.float64,
                            zero_head=False)
        jitter(core.params)
        ctx = rng.normal(size=(2, 5, 11))
        cands = rng.normal(size=(2, 3, 11))
        scores, cache = core.forward(ctx, cands)
        up = rng.normal(size=scores.shape)
        dctx, dcand, pgrads = core.backward(cache, up)
        params = {"ctx": ctx, "cands": cands}
        params.update(core.params)
        grads = {"ctx": dctx, "cands": dcand}
        grads.update(pgrads)
        report["relation-core"] = grad_check(
            lambda: float((core.forward(ctx, cands)[0] * up).sum()),
            params, grads, max_per_param=max_per_param, seed=seed)
    if wanted is not None:
        unknown = wanted - set(report)
        if unknown:
            raise ValueError(f"unknown layers: {sorted(unknown)}")
    return report
