"""Downstream scoring heads over window-embedding sequences.

Three architectures share one contract: an (T, D) embedding sequence in,
a 5-class probability distribution out. Forward passes cache what the
hand-written backward passes need; gradients are validated against
finite differences in the test suite.

All math is float64 and single-threaded deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import EmbeddingSequence
from .params import ParamLayout

N_CLASSES = 5
N_ATTENTION_HEADS = 2


class HeadError(Exception):
    pass


@dataclass(frozen=True)
class HeadConfig:
    kind: str  # mlp | rnn | transformer
    input_dim: int
    hidden_dim: int = 128
    layers: int = 2
    classes: int = N_CLASSES
    positional: bool = True  # transformer only

    def __post_init__(self):
        if self.kind not in ("mlp", "rnn", "transformer"):
            raise HeadError(f"unknown head kind {self.kind!r}")
        if self.classes != N_CLASSES:
            raise HeadError("heads are five-class")
        if self.hidden_dim < 8:
            raise HeadError("hidden_dim must be >= 8")
        if self.kind == "transformer" and self.hidden_dim % N_ATTENTION_HEADS:
            raise HeadError("hidden_dim must be divisible by the attention head count")


@dataclass
class TrainedHead:
    config: HeadConfig
    parameters: np.ndarray  # flat, see param_layout
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = param_layout(self.config).size
        if self.parameters.size != expected:
            raise HeadError(f"parameter count {self.parameters.size} != layout {expected}")


def param_layout(cfg: HeadConfig) -> ParamLayout:
    d, h, c = cfg.input_dim, cfg.hidden_dim, cfg.classes
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.kind == "mlp":
        for l in range(cfg.layers):
            shapes[f"l{l}.W"] = (h, d if l == 0 else h)
            shapes[f"l{l}.b"] = (h,)
    elif cfg.kind == "rnn":
        for l in range(cfg.layers):
            inp = d if l == 0 else h
            for gate in ("z", "r", "n"):
                shapes[f"l{l}.W{gate}"] = (h, inp)
                shapes[f"l{l}.U{gate}"] = (h, h)
                shapes[f"l{l}.b{gate}"] = (h,)
    else:  # transformer
        shapes["in.W"] = (h, d)
        shapes["in.b"] = (h,)
        f = 2 * h
        for l in range(cfg.layers):
            for name in ("Wq", "Wk", "Wv", "Wo"):
                shapes[f"l{l}.{name}"] = (h, h)
            for name in ("bq", "bk", "bv", "bo"):
                shapes[f"l{l}.{name}"] = (h,)
            shapes[f"l{l}.W1"] = (f, h)
            shapes[f"l{l}.b1"] = (f,)
            shapes[f"l{l}.W2"] = (h, f)
            shapes[f"l{l}.b2"] = (h,)
    shapes["out.W"] = (c, h)
    shapes["out.b"] = (c,)
    return ParamLayout(shapes)


def init_params(cfg: HeadConfig, seed: int) -> np.ndarray:
    """Scaled-Gaussian weights, zero biases; deterministic per seed."""
    layout = param_layout(cfg)
    rng = np.random.default_rng(seed)
    flat = layout.zeros()
    for name, shape in layout.shapes.items():
        if name.split(".")[-1].startswith("b"):
            continue
        fan_in = shape[-1]
        layout.view(flat, name)[...] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), shape)
    return flat


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -40.0, 40.0)))


def sinusoidal_positions(t: int, dim: int) -> np.ndarray:
    pos = np.arange(t)[:, None]
    i = np.arange(dim // 2)[None, :]
    angles = pos / (10000.0 ** (2.0 * i / dim))
    enc = np.zeros((t, dim))
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles[:, : dim - dim // 2])
    return enc


# ---------------------------------------------------------------- mlp

def _mlp_forward(flat, cfg, E):
    layout = param_layout(cfg)
    x = E.mean(axis=0)
    hs = [x]
    for l in range(cfg.layers):
        a = layout.view(flat, f"l{l}.W") @ hs[-1] + layout.view(flat, f"l{l}.b")
        hs.append(np.tanh(a))
    logits = layout.view(flat, "out.W") @ hs[-1] + layout.view(flat, "out.b")
    return logits, {"hs": hs}


def _mlp_backward(flat, cfg, E, cache, dlogits):
    layout = param_layout(cfg)
    grad = layout.zeros()
    hs = cache["hs"]
    layout.view(grad, "out.W")[...] = np.outer(dlogits, hs[-1])
    layout.view(grad, "out.b")[...] = dlogits
    dh = layout.view(flat, "out.W").T @ dlogits
    for l in range(cfg.layers - 1, -1, -1):
        da = dh * (1.0 - hs[l + 1] ** 2)
        layout.view(grad, f"l{l}.W")[...] = np.outer(da, hs[l])
        layout.view(grad, f"l{l}.b")[...] = da
        dh = layout.view(flat, f"l{l}.W").T @ da
    return grad


# ---------------------------------------------------------------- rnn (GRU)

def _gru_layer_forward(flat, layout, l, xs):
    Wz, Uz, bz = (layout.view(flat, f"l{l}.{n}") for n in ("Wz", "Uz", "bz"))
    Wr, Ur, br = (layout.view(flat, f"l{l}.{n}") for n in ("Wr", "Ur", "br"))
    Wn, Un, bn = (layout.view(flat, f"l{l}.{n}") for n in ("Wn", "Un", "bn"))
    t_steps = xs.shape[0]
    h_dim = bz.shape[0]
    zs = np.empty((t_steps, h_dim))
    rs = np.empty((t_steps, h_dim))
    cs = np.empty((t_steps, h_dim))
    ns = np.empty((t_steps, h_dim))
    hs = np.empty((t_steps, h_dim))
    h_prev = np.zeros(h_dim)
    for t in range(t_steps):
        x = xs[t]
        zs[t] = _sigmoid(Wz @ x + Uz @ h_prev + bz)
        rs[t] = _sigmoid(Wr @ x + Ur @ h_prev + br)
        cs[t] = Un @ h_prev
        ns[t] = np.tanh(Wn @ x + rs[t] * cs[t] + bn)
        hs[t] = (1.0 - zs[t]) * ns[t] + zs[t] * h_prev
        h_prev = hs[t]
    return {"xs": xs, "z": zs, "r": rs, "c": cs, "n": ns, "h": hs}


def _gru_layer_backward(flat, layout, l, cache, dout, grad):
    Wz, Uz = layout.view(flat, f"l{l}.Wz"), layout.view(flat, f"l{l}.Uz")
    Wr, Ur = layout.view(flat, f"l{l}.Wr"), layout.view(flat, f"l{l}.Ur")
    Wn, Un = layout.view(flat, f"l{l}.Wn"), layout.view(flat, f"l{l}.Un")
    gWz, gUz, gbz = (layout.view(grad, f"l{l}.{n}") for n in ("Wz", "Uz", "bz"))
    gWr, gUr, gbr = (layout.view(grad, f"l{l}.{n}") for n in ("Wr", "Ur", "br"))
    gWn, gUn, gbn = (layout.view(grad, f"l{l}.{n}") for n in ("Wn", "Un", "bn"))
    xs, zs, rs, cs, ns, hs = (cache[k] for k in ("xs", "z", "r", "c", "n", "h"))
    t_steps = xs.shape[0]
    dxs = np.zeros_like(xs)
    dh_next = np.zeros(hs.shape[1])
    for t in range(t_steps - 1, -1, -1):
        dht = dout[t] + dh_next
        h_prev = hs[t - 1] if t > 0 else np.zeros(hs.shape[1])
        z, r, c, n = zs[t], rs[t], cs[t], ns[t]
        dz = dht * (h_prev - n)
        dn = dht * (1.0 - z)
        dh_prev = dht * z
        da_n = dn * (1.0 - n**2)
        gWn += np.outer(da_n, xs[t])
        gbn += da_n
        dxs[t] += Wn.T @ da_n
        dr = da_n * c
        dc = da_n * r
        gUn += np.outer(dc, h_prev)
        dh_prev = dh_prev + Un.T @ dc
        da_z = dz * z * (1.0 - z)
        gWz += np.outer(da_z, xs[t])
        gUz += np.outer(da_z, h_prev)
        gbz += da_z
        dxs[t] += Wz.T @ da_z
        dh_prev = dh_prev + Uz.T @ da_z
        da_r = dr * r * (1.0 - r)
        gWr += np.outer(da_r, xs[t])
        gUr += np.outer(da_r, h_prev)
        gbr += da_r
        dxs[t] += Wr.T @ da_r
        dh_prev = dh_prev + Ur.T @ da_r
        dh_next = dh_prev
    return dxs


def _rnn_forward(flat, cfg, E):
    layout = param_layout(cfg)
    xs = E
    caches = []
    for l in range(cfg.layers):
        cache = _gru_layer_forward(flat, layout, l, xs)
        caches.append(cache)
        xs = cache["h"]
    final = xs[-1]
    logits = layout.view(flat, "out.W") @ final + layout.view(flat, "out.b")
    return logits, {"caches": caches, "final": final}


def _rnn_backward(flat, cfg, E, cache, dlogits):
    layout = param_layout(cfg)
    grad = layout.zeros()
    caches = cache["caches"]
    layout.view(grad, "out.W")[...] = np.outer(dlogits, cache["final"])
    layout.view(grad, "out.b")[...] = dlogits
    t_steps = E.shape[0]
    dout = np.zeros((t_steps, cfg.hidden_dim))
    dout[-1] = layout.view(flat, "out.W").T @ dlogits
    for l in range(cfg.layers - 1, -1, -1):
        dout = _gru_layer_backward(flat, layout, l, caches[l], dout, grad)
    return grad


# ---------------------------------------------------------------- transformer

def _attention_forward(flat, layout, l, h):
    nh = N_ATTENTION_HEADS
    t, hd = h.shape
    dh = hd // nh
    q = h @ layout.view(flat, f"l{l}.Wq").T + layout.view(flat, f"l{l}.bq")
    k = h @ layout.view(flat, f"l{l}.Wk").T + layout.view(flat, f"l{l}.bk")
    v = h @ layout.view(flat, f"l{l}.Wv").T + layout.view(flat, f"l{l}.bv")
    qh = q.reshape(t, nh, dh).transpose(1, 0, 2)  # (nh, t, dh)
    kh = k.reshape(t, nh, dh).transpose(1, 0, 2)
    vh = v.reshape(t, nh, dh).transpose(1, 0, 2)
    scores = qh @ kh.transpose(0, 2, 1) / math.sqrt(dh)
    attn = _softmax(scores, axis=-1)  # (nh, t, t)
    ctx = (attn @ vh).transpose(1, 0, 2).reshape(t, hd)
    out = ctx @ layout.view(flat, f"l{l}.Wo").T + layout.view(flat, f"l{l}.bo")
    return out, {"h": h, "q": q, "k": k, "v": v, "attn": attn, "ctx": ctx}


def _attention_backward(flat, layout, l, cache, dout, grad):
    nh = N_ATTENTION_HEADS
    h, q, k, v, attn, ctx = (cache[n] for n in ("h", "q", "k", "v", "attn", "ctx"))
    t, hd = h.shape
    dh_head = hd // nh
    Wo = layout.view(flat, f"l{l}.Wo")
    layout.view(grad, f"l{l}.Wo")[...] += dout.T @ ctx
    layout.view(grad, f"l{l}.bo")[...] += dout.sum(axis=0)
    dctx = dout @ Wo
    dctx_h = dctx.reshape(t, nh, dh_head).transpose(1, 0, 2)
    qh = q.reshape(t, nh, dh_head).transpose(1, 0, 2)
    kh = k.reshape(t, nh, dh_head).transpose(1, 0, 2)
    vh = v.reshape(t, nh, dh_head).transpose(1, 0, 2)
    dvh = attn.transpose(0, 2, 1) @ dctx_h
    dattn = dctx_h @ vh.transpose(0, 2, 1)
    dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
    dscores /= math.sqrt(dh_head)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 2, 1) @ qh
    dq = dqh.transpose(1, 0, 2).reshape(t, hd)
    dk = dkh.transpose(1, 0, 2).reshape(t, hd)
    dv = dvh.transpose(1, 0, 2).reshape(t, hd)
    dhin = np.zeros_like(h)
    for name, dmat in (("Wq", dq), ("Wk", dk), ("Wv", dv)):
        layout.view(grad, f"l{l}.{name}")[...] += dmat.T @ h
        layout.view(grad, f"l{l}.b{name[-1].lower()}")[...] += dmat.sum(axis=0)
        dhin += dmat @ layout.view(flat, f"l{l}.{name}")
    return dhin


def _transformer_forward(flat, cfg, E):
    layout = param_layout(cfg)
    t = E.shape[0]
    h = E @ layout.view(flat, "in.W").T + layout.view(flat, "in.b")
    if cfg.positional:
        h = h + sinusoidal_positions(t, cfg.hidden_dim)
    layer_caches = []
    for l in range(cfg.layers):
        att_out, att_cache = _attention_forward(flat, layout, l, h)
        h1 = h + att_out
        pre = h1 @ layout.view(flat, f"l{l}.W1").T + layout.view(flat, f"l{l}.b1")
        u = np.maximum(pre, 0.0)
        h = h1 + u @ layout.view(flat, f"l{l}.W2").T + layout.view(flat, f"l{l}.b2")
        layer_caches.append({"att": att_cache, "h1": h1, "pre": pre, "u": u})
    pooled = h.mean(axis=0)
    logits = layout.view(flat, "out.W") @ pooled + layout.view(flat, "out.b")
    return logits, {"layers": layer_caches, "pooled": pooled, "t": t}


def _transformer_backward(flat, cfg, E, cache, dlogits):
    layout = param_layout(cfg)
    grad = layout.zeros()
    t = cache["t"]
    layout.view(grad, "out.W")[...] = np.outer(dlogits, cache["pooled"])
    layout.view(grad, "out.b")[...] = dlogits
    dh = np.tile((layout.view(flat, "out.W").T @ dlogits) / t, (t, 1))
    for l in range(cfg.layers - 1, -1, -1):
        lc = cache["layers"][l]
        # FFN residual branch
        du = dh @ layout.view(flat, f"l{l}.W2")
        layout.view(grad, f"l{l}.W2")[...] += dh.T @ lc["u"]
        layout.view(grad, f"l{l}.b2")[...] += dh.sum(axis=0)
        dpre = du * (lc["pre"] > 0)
        layout.view(grad, f"l{l}.W1")[...] += dpre.T @ lc["h1"]
        layout.view(grad, f"l{l}.b1")[...] += dpre.sum(axis=0)
        dh1 = dh + dpre @ layout.view(flat, f"l{l}.W1")
        # attention residual branch
        dh = dh1 + _attention_backward(flat, layout, l, lc["att"], dh1, grad)
    layout.view(grad, "in.W")[...] += dh.T @ E
    layout.view(grad, "in.b")[...] += dh.sum(axis=0)
    return grad


_FORWARD = {"mlp": _mlp_forward, "rnn": _rnn_forward, "transformer": _transformer_forward}
_BACKWARD = {"mlp": _mlp_backward, "rnn": _rnn_backward, "transformer": _transformer_backward}


def forward_logits(flat: np.ndarray, cfg: HeadConfig, E: np.ndarray):
    """Logits plus the cache the matching backward pass consumes."""
    if E.ndim != 2 or E.shape[1] != cfg.input_dim:
        raise HeadError(f"embedding dim {E.shape} does not match head input {cfg.input_dim}")
    return _FORWARD[cfg.kind](flat, cfg, E)


def backward_logits(flat, cfg, E, cache, dlogits) -> np.ndarray:
    return _BACKWARD[cfg.kind](flat, cfg, E, cache, dlogits)


def head_forward(seq: EmbeddingSequence, head: TrainedHead) -> np.ndarray:
    """5-class probability distribution for one embedding sequence."""
    logits, _ = forward_logits(head.parameters, head.config, seq.embeddings)
    return _softmax(logits)


def predict_score(distribution: np.ndarray) -> tuple[float, int]:
    """Expected score sum(k p_k) and the smallest argmax class, 1-based."""
    p = np.asarray(distribution, dtype=np.float64)
    if p.shape != (N_CLASSES,) or abs(p.sum() - 1.0) > 1e-6 or (p < 0).any():
        raise HeadError("not a valid 5-class distribution")
    expected = float(np.dot(np.arange(1, N_CLASSES + 1), p))
    argmax = int(np.argmax(p)) + 1
    return expected, argmax
