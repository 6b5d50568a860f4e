"""Gradient and Hessian-vector products for any object exposing ``backprop``.

``model.backprop(batch, tangent)`` must return ``(loss, grad, hvp)`` with
``grad``/``hvp`` ParamVectors; :class:`datalens.model.ModelState` implements
it by hand-written reverse mode, evaluated on dual numbers when a tangent is
supplied.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from datalens.errors import DimensionError
from datalens.numerics.params import LinearOperator, ParamVector, as_array


def _check_batch(batch):
    X, y = batch
    if len(X) == 0:
        raise DimensionError("batch must be non-empty")
    return batch


def grad(model, batch) -> ParamVector:
    """Gradient of the mean loss over ``batch``."""
    _, g, _ = model.backprop(_check_batch(batch))
    return g


def hvp(model, batch, v) -> ParamVector:
    """Exact Hessian-vector product of the mean batch loss."""
    v_arr = as_array(v)
    if v_arr.shape != (len(model.params),):
        raise DimensionError(f"v has {v_arr.size} entries, model has {len(model.params)} parameters")
    _, _, h = model.backprop(_check_batch(batch), v_arr)
    return h


def hvp_fd(model, batch, v, h: float = 1e-4) -> ParamVector:
    """Central difference of gradients; a check on :func:`hvp`, never the default."""
    v_arr = as_array(v)
    theta = model.params.values
    gp = grad(model.with_params(theta + h * v_arr), batch)
    gm = grad(model.with_params(theta - h * v_arr), batch)
    return model.params.with_values((gp.values - gm.values) / (2 * h))


def hvp_operator(model, batch, scope: Sequence[str] | None = None) -> LinearOperator:
    """Hessian of the mean loss as a LinearOperator.

    ``scope`` names parameter segments; the operator then acts on the
    concatenation of those segments only (other parameters held fixed).
    """
    params = model.params
    if scope is None:
        return LinearOperator(len(params), lambda v: hvp(model, batch, v).values)
    mask = params.mask(scope)

    def apply(v: np.ndarray) -> np.ndarray:
        full = np.zeros(len(params))
        full[mask] = v
        return hvp(model, batch, full).values[mask]

    return LinearOperator(int(mask.sum()), apply)
