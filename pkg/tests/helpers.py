"""Shared test oracles: finite differences and brute-force references."""

from __future__ import annotations

import numpy as np

from neurasr import autodiff as ad
from neurasr.autodiff import Tensor


def finite_difference_check(make_loss, params: dict[str, Tensor], h: float = 1e-5,
                            rel_tol: float = 1e-4, abs_floor: float = 1e-7) -> float:
    """Compare autodiff gradients of ``make_loss()`` against central differences.

    ``make_loss`` must rebuild the computation from the current parameter
    values on every call. Returns the worst relative error seen.
    """
    for p in params.values():
        p.zero_grad()
    loss = make_loss()
    ad.backward(loss)
    worst = 0.0
    for name, p in params.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(make_loss().data)
            flat[i] = orig - h
            down = float(make_loss().data)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            analytic = grad.ravel()[i]
            denom = max(abs(numeric), abs(analytic), abs_floor)
            err = abs(numeric - analytic) / denom
            if abs(numeric) < abs_floor and abs(analytic) < abs_floor:
                err = 0.0
            assert err < rel_tol, (
                f"gradient mismatch for {name}[{i}]: analytic={analytic:.8g} "
                f"numeric={numeric:.8g} rel_err={err:.3g}")
            worst = max(worst, err)
    return worst


def recursive_edit_distance(ref, hyp) -> int:
    """Exponential-time Levenshtein distance, memoization intentionally absent."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    if ref[0] == hyp[0]:
        return recursive_edit_distance(ref[1:], hyp[1:])
    return 1 + min(
        recursive_edit_distance(ref[1:], hyp[1:]),
        recursive_edit_distance(ref, hyp[1:]),
        recursive_edit_distance(ref[1:], hyp),
    )
