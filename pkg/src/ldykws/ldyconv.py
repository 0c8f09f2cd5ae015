"""The lightweight dynamic convolution front-end.

Two branches produce the dynamic filter: a pixel-level mask in (0,1) from a
dilated single-channel convolution (conv -> temporal norm -> sigmoid), and a
per-clip direction vector from a two-layer MLP on the temporal mean of the
features.  Their outer product gives one 9-tap kernel per pixel (a rank-1
matrix of kernels).  The filtered map is temporally normalized and added back
to the input, so a zero-initialized branch is the identity.

Feature maps are time-major [T, F].  All passes are analytic; every gradient
here is checked against the finite-difference oracle in the tests.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import ContractViolation

NORM_EPS = 1e-5

# 3x3 kernel taps in row-major order, dilation 2: tap k touches input offset
# (dt, df) relative to the output pixel.  Zero padding of 2 keeps the shape.
TAP_OFFSETS = [(dt, df) for dt in (-2, 0, 2) for df in (-2, 0, 2)]
KERNEL_TAPS = len(TAP_OFFSETS)  # 9


def _shift(x, dt, df):
    """y[t, f] = x[t + dt, f + df], zero where the index falls outside."""
    T, F = x.shape
    y = np.zeros_like(x)
    ts = slice(max(dt, 0), min(T + dt, T))
    fs = slice(max(df, 0), min(F + df, F))
    td = slice(max(-dt, 0), min(T - dt, T))
    fd = slice(max(-df, 0), min(F - df, F))
    y[td, fd] = x[ts, fs]
    return y


def _padded_views(x):
    """The 9 dilated-tap views of zero-padded x, each shaped like x."""
    T, F = x.shape
    xp = np.pad(x, 2)
    return [xp[2 + dt:2 + dt + T, 2 + df:2 + df + F] for dt, df in TAP_OFFSETS]


def dilated_patches(x):
    """Stack of the 9 dilated-tap views of x, shape (T, F, 9)."""
    return np.stack(_padded_views(x), axis=-1)


def dilated_conv(x, kernel):
    """Single-channel 3x3 convolution, dilation 2, stride 1, zero pad 2."""
    k = np.asarray(kernel).reshape(KERNEL_TAPS)
    out = np.zeros_like(x)
    for tap, view in enumerate(_padded_views(x)):
        out += k[tap] * view
    return out


def dilated_conv_backward(x, kernel, dout):
    """Gradients of dilated_conv wrt input and kernel."""
    k = np.asarray(kernel).reshape(KERNEL_TAPS)
    dx = np.zeros_like(x)
    dk = np.zeros(KERNEL_TAPS)
    views_x = _padded_views(x)
    views_d = _padded_views(dout)
    for tap in range(KERNEL_TAPS):
        # The offset set is symmetric: tap 8-i is the negation of tap i.
        dx += k[tap] * views_d[KERNEL_TAPS - 1 - tap]
        dk[tap] = np.sum(dout * views_x[tap])
    return dx, dk.reshape(np.asarray(kernel).shape)


@dataclass
class LdyParams:
    """All trainable tensors of the front-end (default config: F=40, K=9)."""

    pdf_kernel: np.ndarray  # (3, 3), no bias
    idf_fc1_w: np.ndarray  # (F, F)
    idf_fc1_b: np.ndarray  # (F,)
    idf_fc2_w: np.ndarray  # (F, K)
    idf_fc2_b: np.ndarray  # (K,)
    norm_pdf_alpha: np.ndarray  # (F,)
    norm_pdf_beta: np.ndarray
    norm_idf_alpha: np.ndarray
    norm_idf_beta: np.ndarray
    norm_out_alpha: np.ndarray
    norm_out_beta: np.ndarray

    @property
    def n_freq(self):
        return self.idf_fc1_w.shape[0]

    @classmethod
    def init_zero(cls, n_freq=40):
        """All weights zero, affines (1, 0): the residual branch is the identity."""
        F = n_freq
        return cls(
            pdf_kernel=np.zeros((3, 3)),
            idf_fc1_w=np.zeros((F, F)),
            idf_fc1_b=np.zeros(F),
            idf_fc2_w=np.zeros((F, KERNEL_TAPS)),
            idf_fc2_b=np.zeros(KERNEL_TAPS),
            norm_pdf_alpha=np.ones(F),
            norm_pdf_beta=np.zeros(F),
            norm_idf_alpha=np.ones(F),
            norm_idf_beta=np.zeros(F),
            norm_out_alpha=np.ones(F),
            norm_out_beta=np.zeros(F),
        )

    @classmethod
    def init_random(cls, rng, n_freq=40):
        """Uniform +-sqrt(1/fan_in) weights, zero biases, affines (1, 0)."""
        F = n_freq
        p = cls.init_zero(n_freq)
        p.pdf_kernel = rng.uniform(-1, 1, (3, 3)) / np.sqrt(KERNEL_TAPS)
        p.idf_fc1_w = rng.uniform(-1, 1, (F, F)) / np.sqrt(F)
        p.idf_fc2_w = rng.uniform(-1, 1, (F, KERNEL_TAPS)) / np.sqrt(F)
        return p

    def named_tensors(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def zero_grads(self):
        return {name: np.zeros_like(t) for name, t in self.named_tensors().items()}


def temporal_norm(x, alpha, beta):
    """Standardize each frequency column over time, then per-column affine.

    Biased (1/T) variance, epsilon 1e-5 inside the square root.
    """
    y, _ = temporal_norm_cached(x, alpha, beta)
    return y


def temporal_norm_cached(x, alpha, beta):
    mu = x.mean(axis=0)
    centered = x - mu
    var = np.mean(centered * centered, axis=0)
    std = np.sqrt(var + NORM_EPS)
    xhat = centered / std
    return alpha * xhat + beta, (xhat, std)


def temporal_norm_backward(cache, alpha, dy):
    """Full gradient: the column mean and variance depend on the input."""
    xhat, std = cache
    dalpha = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    dxhat = dy * alpha
    dx = (dxhat - dxhat.mean(axis=0) - xhat * np.mean(dxhat * xhat, axis=0)) / std
    return dx, dalpha, dbeta


def feature_norm(h, alpha, beta):
    """Standardize a feature vector over its entries, then affine."""
    y, _ = feature_norm_cached(h, alpha, beta)
    return y


def feature_norm_cached(h, alpha, beta):
    mu = h.mean()
    centered = h - mu
    var = np.mean(centered * centered)
    std = np.sqrt(var + NORM_EPS)
    hhat = centered / std
    return alpha * hhat + beta, (hhat, std)


def feature_norm_backward(cache, alpha, dy):
    hhat, std = cache
    dalpha = dy * hhat
    dbeta = dy.copy()
    dhhat = dy * alpha
    dh = (dhhat - dhhat.mean() - hhat * np.mean(dhhat * hhat)) / std
    return dh, dalpha, dbeta


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def pdf_forward(x, params):
    """Pixel mask in (0,1): dilated conv -> temporal norm -> sigmoid."""
    wp, _ = pdf_forward_cached(x, params)
    return wp


def pdf_forward_cached(x, params):
    conv = dilated_conv(x, params.pdf_kernel)
    z, norm_cache = temporal_norm_cached(conv, params.norm_pdf_alpha, params.norm_pdf_beta)
    wp = _sigmoid(z)
    return wp, (conv, norm_cache, wp)


def idf_forward(x, params):
    """Per-clip direction vector from the temporal mean of the features."""
    wh, _ = idf_forward_cached(x, params)
    return wh


def idf_forward_cached(x, params):
    H = x.mean(axis=0)
    a1 = H @ params.idf_fc1_w + params.idf_fc1_b
    n1, norm_cache = feature_norm_cached(a1, params.norm_idf_alpha, params.norm_idf_beta)
    r = np.maximum(n1, 0.0)
    wh = r @ params.idf_fc2_w + params.idf_fc2_b
    return wh, (H, a1, norm_cache, n1, r, wh)


def compose_kernels(wp, wh):
    """Per-pixel kernels: row (t,f) is wp[t,f] * wh.  Rank <= 1 by construction."""
    wp = np.asarray(wp)
    wh = np.asarray(wh)
    if wh.ndim != 1:
        raise ContractViolation(f"direction vector must be 1-D, got shape {wh.shape}")
    return wp[..., None] * wh[None, None, :]


def dynamic_conv(x, kernels, params, apply_norm=True):
    """Apply a per-pixel kernel at every pixel, then temporal norm.

    kernels has shape (T, F, K); geometry matches pdf_forward's convolution.
    apply_norm=False skips the output norm (used by the factorization checks).
    """
    T, F = x.shape
    kernels = np.asarray(kernels)
    if kernels.shape != (T, F, KERNEL_TAPS):
        raise ContractViolation(
            f"kernels shape {kernels.shape} does not match input {(T, F)} "
            f"with {KERNEL_TAPS} taps"
        )
    d = np.einsum("tfk,tfk->tf", dilated_patches(x), kernels)
    if not apply_norm:
        return d
    return temporal_norm(d, params.norm_out_alpha, params.norm_out_beta)


@dataclass
class LdyCache:
    """Intermediates of one ldy_forward call, consumed by ldy_backward."""

    x: np.ndarray
    params: LdyParams
    patches: np.ndarray
    pdf_cache: tuple
    idf_cache: tuple
    wp: np.ndarray
    wh: np.ndarray
    kernels: np.ndarray
    d: np.ndarray
    out_norm_cache: tuple


def ldy_forward(x, params):
    """x + Norm(dynamic convolution of x with the composed kernels)."""
    x = np.asarray(x, dtype=np.float64)
    wp, pdf_cache = pdf_forward_cached(x, params)
    wh, idf_cache = idf_forward_cached(x, params)
    kernels = compose_kernels(wp, wh)
    patches = dilated_patches(x)
    d = np.einsum("tfk,tfk->tf", patches, kernels)
    xd, out_norm_cache = temporal_norm_cached(d, params.norm_out_alpha, params.norm_out_beta)
    out = x + xd
    cache = LdyCache(
        x=x,
        params=params,
        patches=patches,
        pdf_cache=pdf_cache,
        idf_cache=idf_cache,
        wp=wp,
        wh=wh,
        kernels=kernels,
        d=d,
        out_norm_cache=out_norm_cache,
    )
    return out, cache


def ldy_backward(cache, upstream_grad):
    """Exact gradients of ldy_forward wrt the input and every parameter."""
    g = np.asarray(upstream_grad, dtype=np.float64)
    x = cache.x
    if g.shape != x.shape:
        raise ContractViolation(
            f"upstream grad shape {g.shape} does not match cached input {x.shape}"
        )
    p = cache.params
    grads = {}

    # Output norm.
    dd, grads["norm_out_alpha"], grads["norm_out_beta"] = temporal_norm_backward(
        cache.out_norm_cache, p.norm_out_alpha, g
    )

    # Through the per-pixel kernel application: d[t,f] = sum_k kern[t,f,k] * patch_k.
    s = np.einsum("tfk,k->tf", cache.patches, cache.wh)  # conv of x with wh
    dwp = dd * s
    dwh = np.einsum("tf,tfk->k", dd * cache.wp, cache.patches)
    dx = g.copy()  # skip connection
    T, F = x.shape
    dk3 = np.pad(dd[:, :, None] * cache.kernels, ((2, 2), (2, 2), (0, 0)))
    for tap, (dt, df) in enumerate(TAP_OFFSETS):
        dx += dk3[2 - dt:2 - dt + T, 2 - df:2 - df + F, tap]

    # PDF branch: sigmoid -> temporal norm -> dilated conv.
    conv, pdf_norm_cache, wp = cache.pdf_cache
    dz = dwp * wp * (1.0 - wp)
    dconv, grads["norm_pdf_alpha"], grads["norm_pdf_beta"] = temporal_norm_backward(
        pdf_norm_cache, p.norm_pdf_alpha, dz
    )
    dx_pdf, grads["pdf_kernel"] = dilated_conv_backward(x, p.pdf_kernel, dconv)
    dx += dx_pdf

    # IDF branch: fc2 <- relu <- feature norm <- fc1 <- temporal mean.
    H, a1, idf_norm_cache, n1, r, _ = cache.idf_cache
    grads["idf_fc2_b"] = dwh
    grads["idf_fc2_w"] = np.outer(r, dwh)
    dr = p.idf_fc2_w @ dwh
    dn1 = dr * (n1 > 0.0)
    da1, grads["norm_idf_alpha"], grads["norm_idf_beta"] = feature_norm_backward(
        idf_norm_cache, p.norm_idf_alpha, dn1
    )
    grads["idf_fc1_b"] = da1
    grads["idf_fc1_w"] = np.outer(H, da1)
    dH = p.idf_fc1_w @ da1
    dx += dH[None, :] / x.shape[0]

    return dx, grads
