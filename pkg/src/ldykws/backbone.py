"""A small temporal-convolution classifier ("TENet-lite").

Frequency bins act as channels over the time axis.  A pointwise stem maps
F -> C, then each block runs pointwise -> depthwise temporal (kernel 9,
stride 2 on designated blocks) -> pointwise with per-channel temporal norms,
ReLU between, and a residual where shapes match.  Global average pooling over
time feeds a 12-way linear head.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ContractViolation
from .ldyconv import temporal_norm_backward, temporal_norm_cached

DW_KERNEL = 9
DW_PAD = DW_KERNEL // 2


def default_stride_blocks(n_blocks):
    """Stride-2 placement: blocks 1 and 4 for the 6-block config, scaled otherwise."""
    if n_blocks >= 6:
        return {n_blocks // 6, 4 * n_blocks // 6}
    if n_blocks >= 2:
        return {1}
    return set()


@dataclass
class BlockParams:
    # Convolution biases are omitted on purpose: each conv feeds straight into
    # a mean-subtracting temporal norm, so a bias there is unidentifiable and
    # the norm's beta plays that role.
    pw1_w: np.ndarray  # (C, C)
    dw_k: np.ndarray  # (C, 9)
    pw2_w: np.ndarray  # (C, C)
    n1_alpha: np.ndarray
    n1_beta: np.ndarray
    n2_alpha: np.ndarray
    n2_beta: np.ndarray
    n3_alpha: np.ndarray
    n3_beta: np.ndarray
    stride: int = 1


@dataclass
class BackboneParams:
    stem_w: np.ndarray  # (F, C)
    stem_b: np.ndarray  # (C,)
    blocks: list = field(default_factory=list)
    head_w: np.ndarray = None  # (C, n_classes)
    head_b: np.ndarray = None  # (n_classes,)

    @property
    def n_classes(self):
        return self.head_b.shape[0]

    @classmethod
    def init_random(cls, rng, n_freq=40, channels=16, n_blocks=6, n_classes=12,
                    stride_blocks=None):
        C = channels
        if stride_blocks is None:
            stride_blocks = default_stride_blocks(n_blocks)
        blocks = []
        for b in range(n_blocks):
            blocks.append(
                BlockParams(
                    pw1_w=rng.uniform(-1, 1, (C, C)) / np.sqrt(C),
                    dw_k=rng.uniform(-1, 1, (C, DW_KERNEL)) / np.sqrt(DW_KERNEL),
                    pw2_w=rng.uniform(-1, 1, (C, C)) / np.sqrt(C),
                    n1_alpha=np.ones(C),
                    n1_beta=np.zeros(C),
                    n2_alpha=np.ones(C),
                    n2_beta=np.zeros(C),
                    n3_alpha=np.ones(C),
                    n3_beta=np.zeros(C),
                    stride=2 if b in stride_blocks else 1,
                )
            )
        return cls(
            stem_w=rng.uniform(-1, 1, (n_freq, C)) / np.sqrt(n_freq),
            stem_b=np.zeros(C),
            blocks=blocks,
            head_w=rng.uniform(-1, 1, (C, n_classes)) / np.sqrt(C),
            head_b=np.zeros(n_classes),
        )

    def named_tensors(self):
        out = {"stem_w": self.stem_w, "stem_b": self.stem_b}
        for i, blk in enumerate(self.blocks):
            for name in ("pw1_w", "dw_k", "pw2_w",
                         "n1_alpha", "n1_beta", "n2_alpha", "n2_beta",
                         "n3_alpha", "n3_beta"):
                out[f"block{i}.{name}"] = getattr(blk, name)
        out["head_w"] = self.head_w
        out["head_b"] = self.head_b
        return out

    def zero_grads(self):
        return {name: np.zeros_like(t) for name, t in self.named_tensors().items()}


def _tap_slices(T, T_out, stride, j):
    """Valid output range [t0, t1) and the matching strided input slice."""
    t0 = max(0, -(-(DW_PAD - j) // stride))
    t1 = min(T_out, (T - 1 + DW_PAD - j) // stride + 1)
    start = stride * t0 + j - DW_PAD
    return t0, t1, slice(start, start + stride * (t1 - t0), stride)


def depthwise_conv(x, kernels, stride):
    """Per-channel temporal convolution, kernel 9, zero pad 4.

    x: (T, C); kernels: (C, 9).  Output length ceil(T / stride).
    """
    T, C = x.shape
    T_out = (T + stride - 1) // stride
    out = np.zeros((T_out, C))
    for j in range(DW_KERNEL):
        t0, t1, src = _tap_slices(T, T_out, stride, j)
        if t1 > t0:
            out[t0:t1] += x[src] * kernels[:, j]
    return out


def depthwise_conv_backward(x, kernels, stride, dout):
    T, C = x.shape
    T_out = dout.shape[0]
    dx = np.zeros_like(x)
    dk = np.zeros_like(kernels)
    for j in range(DW_KERNEL):
        t0, t1, src = _tap_slices(T, T_out, stride, j)
        if t1 > t0:
            dx[src] += dout[t0:t1] * kernels[:, j]
            dk[:, j] = np.sum(dout[t0:t1] * x[src], axis=0)
    return dx, dk


def backbone_forward(x, params):
    """Logits for one clip.  Returns (logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    h = x @ params.stem_w + params.stem_b
    block_caches = []
    for blk in params.blocks:
        a = h @ blk.pw1_w
        n1, c1 = temporal_norm_cached(a, blk.n1_alpha, blk.n1_beta)
        r1 = np.maximum(n1, 0.0)
        dw = depthwise_conv(r1, blk.dw_k, blk.stride)
        n2, c2 = temporal_norm_cached(dw, blk.n2_alpha, blk.n2_beta)
        r2 = np.maximum(n2, 0.0)
        b = r2 @ blk.pw2_w
        n3, c3 = temporal_norm_cached(b, blk.n3_alpha, blk.n3_beta)
        residual = blk.stride == 1
        pre = n3 + h if residual else n3
        h_next = np.maximum(pre, 0.0)
        block_caches.append((h, c1, n1, r1, c2, n2, r2, c3, pre, residual))
        h = h_next
    pooled = h.mean(axis=0)
    logits = pooled @ params.head_w + params.head_b
    cache = (x, params, block_caches, h, pooled, logits)
    return logits, cache


def backbone_backward(cache, grad_logits):
    """Gradients wrt every parameter and the input feature map."""
    x, params, block_caches, h_final, pooled, _ = cache
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != (params.n_classes,):
        raise ContractViolation(
            f"grad_logits shape {g.shape}, expected ({params.n_classes},)"
        )
    grads = {}
    grads["head_w"] = np.outer(pooled, g)
    grads["head_b"] = g.copy()
    dpooled = params.head_w @ g
    dh = np.broadcast_to(dpooled / h_final.shape[0], h_final.shape).copy()

    for i in reversed(range(len(params.blocks))):
        blk = params.blocks[i]
        h_in, c1, n1, r1, c2, n2, r2, c3, pre, residual = block_caches[i]
        dpre = dh * (pre > 0.0)
        dn3 = dpre
        db, da3, db3 = temporal_norm_backward(c3, blk.n3_alpha, dn3)
        grads[f"block{i}.n3_alpha"], grads[f"block{i}.n3_beta"] = da3, db3
        grads[f"block{i}.pw2_w"] = r2.T @ db
        dr2 = db @ blk.pw2_w.T
        dn2 = dr2 * (n2 > 0.0)
        ddw, da2, db2 = temporal_norm_backward(c2, blk.n2_alpha, dn2)
        grads[f"block{i}.n2_alpha"], grads[f"block{i}.n2_beta"] = da2, db2
        dr1, dk = depthwise_conv_backward(r1, blk.dw_k, blk.stride, ddw)
        grads[f"block{i}.dw_k"] = dk
        dn1 = dr1 * (n1 > 0.0)
        da, da1, db1 = temporal_norm_backward(c1, blk.n1_alpha, dn1)
        grads[f"block{i}.n1_alpha"], grads[f"block{i}.n1_beta"] = da1, db1
        grads[f"block{i}.pw1_w"] = h_in.T @ da
        dh = da @ blk.pw1_w.T
        if residual:
            dh = dh + dpre

    grads["stem_w"] = x.T @ dh
    grads["stem_b"] = dh.sum(axis=0)
    dx = dh @ params.stem_w.T
    return dx, grads


def softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def cross_entropy(logits, label):
    """Loss and gradient wrt logits for one integer label."""
    p = softmax(logits)
    loss = -np.log(max(p[label], 1e-300))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return loss, dlogits
