"""Forward and backward passes for the fixed classifier family.

Every function accepts parameters as plain arrays or as :class:`Dual`
objects; see :mod:`datalens.numerics.dual`. ReLU masks and max-pool
selections are taken from the primal values and treated as constants, which
is exact almost everywhere for this piecewise-linear family.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from datalens.errors import DimensionError, NonFiniteLossError
from datalens.model.architecture import ArchitectureSpec, ModelState
from datalens.numerics import dual as D
from datalens.numerics.params import ParamVector

CHUNK = 1024


def _check_input(spec: ArchitectureSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and spec.input_channels == 1:
        X = X[:, None, :]
    if X.ndim != 3 or X.shape[1:] != (spec.input_channels, spec.input_length):
        raise DimensionError(
            f"expected samples of shape ({spec.input_channels}, {spec.input_length}), "
            f"got {X.shape[1:]}")
    return X


def forward(spec: ArchitectureSpec, P: Mapping, X: np.ndarray):
    """Return ``(logits, features, cache)`` for a batch ``X`` of shape (n, C, L)."""
    n = X.shape[0]
    h = X
    blocks = []
    for i, b in enumerate(spec.conv_blocks):
        W, bias = P[f"conv{i}.weight"], P[f"conv{i}.bias"]
        k = b.kernel_size
        cols = D.linear(lambda a: sliding_window_view(a, k, axis=-1), h)
        y = D.einsum("nclk,fck->nfl", cols, W) + bias[:, None]
        mask = D.value(y) > 0
        a = y * mask
        lo = a.shape[-1]
        arg = None
        if b.pool > 1:
            lp = lo // b.pool
            view = D.linear(lambda t: t[..., :lp * b.pool].reshape(n, b.filters, lp, b.pool), a)
            arg = np.argmax(D.value(view), axis=-1)[..., None]
            h = D.linear(lambda t: np.take_along_axis(t, arg, axis=-1)[..., 0], view)
        else:
            h = a
        blocks.append((cols, mask, arg, lo))
    pooled_shape = h.shape
    flat = h.reshape(n, -1)
    hidden = None
    if spec.dense_units:
        z = D.einsum("nd,ud->nu", flat, P["hidden.weight"]) + P["hidden.bias"]
        hmask = D.value(z) > 0
        phi = z * hmask
        hidden = hmask
    else:
        phi = flat
    logits = D.einsum("nd,kd->nk", phi, P["out.weight"]) + P["out.bias"]
    cache = {"blocks": blocks, "pooled_shape": pooled_shape, "flat": flat,
             "hidden": hidden, "phi": phi}
    return logits, phi, cache


def _col2im(g: np.ndarray, length: int) -> np.ndarray:
    n, c, lo, k = g.shape
    out = np.zeros((n, c, length))
    for j in range(k):
        out[:, :, j:j + lo] += g[..., j]
    return out


def _unpool(g: np.ndarray, arg: np.ndarray, pool: int, lo: int) -> np.ndarray:
    n, f, lp = g.shape
    out = np.zeros((n, f, lp, pool))
    np.put_along_axis(out, arg, g[..., None], axis=-1)
    out = out.reshape(n, f, lp * pool)
    if lp * pool < lo:
        out = np.concatenate([out, np.zeros((n, f, lo - lp * pool))], axis=-1)
    return out


def backward(spec: ArchitectureSpec, P: Mapping, cache: dict, g_logits,
             per_sample: bool = False) -> dict:
    """Gradients of ``sum_n g_logits[n] . logits[n]`` with respect to every parameter.

    With ``per_sample`` the sample axis is kept, giving one gradient per row.
    """
    def red(spec_sum: str) -> str:
        if not per_sample:
            return spec_sum
        lhs, rhs = spec_sum.split("->")
        return f"{lhs}->n{rhs}"

    grads = {}
    phi = cache["phi"]
    grads["out.weight"] = D.einsum(red("nk,nd->kd"), g_logits, phi)
    grads["out.bias"] = g_logits if per_sample else g_logits.sum(axis=0)
    g = D.einsum("nk,kd->nd", g_logits, P["out.weight"])
    if spec.dense_units:
        gz = g * cache["hidden"]
        grads["hidden.weight"] = D.einsum(red("nu,nd->ud"), gz, cache["flat"])
        grads["hidden.bias"] = gz if per_sample else gz.sum(axis=0)
        g = D.einsum("nu,ud->nd", gz, P["hidden.weight"])
    g = g.reshape(cache["pooled_shape"])
    for i in range(len(spec.conv_blocks) - 1, -1, -1):
        b = spec.conv_blocks[i]
        cols, mask, arg, lo = cache["blocks"][i]
        if b.pool > 1:
            g = D.linear(lambda t: _unpool(t, arg, b.pool, lo), g)
        ga = g * mask
        grads[f"conv{i}.weight"] = D.einsum(red("nfl,nclk->fck"), ga, cols)
        grads[f"conv{i}.bias"] = ga.sum(axis=2) if per_sample else ga.sum(axis=(0, 2))
        if i > 0:
            in_len = cols.shape[2] + b.kernel_size - 1
            gcols = D.einsum("nfl,fck->nclk", ga, P[f"conv{i}.weight"])
            g = D.linear(lambda t: _col2im(t, in_len), gcols)
    return grads


def _flatten(spec: ArchitectureSpec, grads: dict, per_sample: bool = False) -> np.ndarray:
    parts = []
    for name, _ in spec.param_shapes():
        g = grads[name]
        parts.append(g.reshape(g.shape[0], -1) if per_sample else g.ravel())
    return np.concatenate(parts, axis=-1)


def _param_dict(model: ModelState, tangent=None) -> dict:
    P = model.arrays()
    if tangent is None:
        return P
    T = model.arrays(np.asarray(getattr(tangent, "values", tangent), dtype=np.float64))
    return {k: D.Dual(P[k], T[k]) for k in P}


def _per_sample_ce(logits, y: np.ndarray):
    logp = D.log_softmax(logits)
    return -logp[np.arange(len(y)), y]


def _raise_non_finite(losses: np.ndarray, offset: int = 0) -> None:
    bad = np.flatnonzero(~np.isfinite(losses))
    if bad.size:
        idx = int(bad[0]) + offset
        raise NonFiniteLossError(f"non-finite loss at sample {idx}", sample_index=idx)


def _check_labels(y, k: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= k):
        raise DimensionError(f"labels must lie in [0, {k})")
    return y


def loss_grad_hvp(model: ModelState, batch, tangent=None):
    """Mean cross-entropy, its gradient, and optionally the Hessian-vector product.

    Returns ``(loss, grad, hvp)`` where ``grad``/``hvp`` are ParamVectors with
    the model's layout and ``hvp`` is None unless ``tangent`` is given.
    """
    X, y = batch
    spec = model.spec
    X = _check_input(spec, X)
    y = _check_labels(y, spec.num_classes)
    n = X.shape[0]
    if n == 0:
        raise DimensionError("batch must be non-empty")
    if tangent is not None and np.asarray(getattr(tangent, "values", tangent)).size != len(model.params):
        raise DimensionError("tangent dimension does not match parameters")
    P = _param_dict(model, tangent)
    logits, _, cache = forward(spec, P, X)
    per = _per_sample_ce(logits, y)
    _raise_non_finite(D.value(per))
    loss = float(D.value(per).mean())
    onehot = np.eye(spec.num_classes)[y]
    g_logits = (D.softmax(logits) - onehot) / n
    grads = backward(spec, P, cache, g_logits)
    g_val = _flatten(spec, {k: D.value(v) for k, v in grads.items()})
    grad = model.params.with_values(g_val)
    if tangent is None:
        return loss, grad, None
    h_val = _flatten(spec, {k: D.tangent(v) for k, v in grads.items()})
    return loss, grad, model.params.with_values(h_val)


def _chunks(n: int, size: int = CHUNK):
    for start in range(0, n, size):
        yield start, min(n, start + size)


def predict_logits(model: ModelState, X: np.ndarray) -> np.ndarray:
    X = _check_input(model.spec, X)
    P = model.arrays()
    out = [forward(model.spec, P, X[a:b])[0] for a, b in _chunks(len(X))]
    return np.concatenate(out) if out else np.zeros((0, model.spec.num_classes))


def predict(model: ModelState, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_logits(model, X), axis=1)


def features(model: ModelState, X: np.ndarray) -> np.ndarray:
    """Pre-softmax feature map: the input of the final dense layer, shape (n, feature_dim)."""
    X = _check_input(model.spec, X)
    P = model.arrays()
    out = [forward(model.spec, P, X[a:b])[1] for a, b in _chunks(len(X))]
    return np.concatenate(out) if out else np.zeros((0, model.feature_dim))


def sample_losses(model: ModelState, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    X = _check_input(model.spec, X)
    y = _check_labels(y, model.spec.num_classes)
    if len(X) != len(y):
        raise DimensionError("samples and labels differ in length")
    P = model.arrays()
    out = []
    for a, b in _chunks(len(X)):
        logits = forward(model.spec, P, X[a:b])[0]
        per = _per_sample_ce(logits, y[a:b])
        _raise_non_finite(per, a)
        out.append(per)
    return np.concatenate(out) if out else np.zeros(0)


def loss_directional_derivatives(model: ModelState, X: np.ndarray, y: np.ndarray,
                                 direction) -> np.ndarray:
    """``grad L_i . direction`` for every sample, by one forward-mode pass."""
    X = _check_input(model.spec, X)
    y = _check_labels(y, model.spec.num_classes)
    P = _param_dict(model, direction)
    out = []
    for a, b in _chunks(len(X)):
        logits = forward(model.spec, P, X[a:b])[0]
        out.append(D.tangent(_per_sample_ce(logits, y[a:b])))
    return np.concatenate(out) if out else np.zeros(0)


def per_sample_grads(model: ModelState, X: np.ndarray, y: np.ndarray,
                     chunk: int = 256) -> np.ndarray:
    """Gradient of each sample's own loss, shape (n, num_params)."""
    spec = model.spec
    X = _check_input(spec, X)
    y = _check_labels(y, spec.num_classes)
    P = model.arrays()
    onehot = np.eye(spec.num_classes)
    out = np.empty((len(X), len(model.params)))
    for a, b in _chunks(len(X), chunk):
        logits, _, cache = forward(spec, P, X[a:b])
        g_logits = D.softmax(logits) - onehot[y[a:b]]
        grads = backward(spec, P, cache, g_logits, per_sample=True)
        out[a:b] = _flatten(spec, grads, per_sample=True)
    return out


def hvp_full(model: ModelState, X: np.ndarray, y: np.ndarray, v) -> ParamVector:
    """Hessian of the mean loss over (X, y) times ``v``, accumulated in fixed chunks."""
    X = _check_input(model.spec, X)
    n = len(X)
    total = np.zeros(len(model.params))
    for a, b in _chunks(n):
        _, _, h = loss_grad_hvp(model, (X[a:b], y[a:b]), v)
        total += h.values * (b - a)
    return model.params.with_values(total / n)


def grad_full(model: ModelState, X: np.ndarray, y: np.ndarray) -> ParamVector:
    X = _check_input(model.spec, X)
    n = len(X)
    total = np.zeros(len(model.params))
    for a, b in _chunks(n):
        _, g, _ = loss_grad_hvp(model, (X[a:b], y[a:b]))
        total += g.values * (b - a)
    return model.params.with_values(total / n)
