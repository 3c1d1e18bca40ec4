"""Fused sequence GRU vs the per-step cell, plus gradient fidelity."""

import numpy as np
import pytest

from neurasr import autodiff as ad
from neurasr import nn
from neurasr.autodiff import Tensor
from neurasr.nn import GruParameters

from helpers import finite_difference_check


def test_matches_stepwise_unroll():
    rng = np.random.default_rng(0)
    params = GruParameters.create(rng, 3, 5)
    frames = rng.normal(size=(9, 3))
    h = Tensor(np.zeros(5))
    stepwise = []
    for t in range(9):
        h = nn.gru_step(params, Tensor(frames[t]), h)
        stepwise.append(h.data.copy())
    fused = nn.gru_sequence(params, frames)
    np.testing.assert_allclose(fused.data, np.array(stepwise), atol=1e-14)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    params = GruParameters.create(rng, 2, 3)
    frames = rng.normal(size=(5, 2))
    target = rng.normal(size=(5, 3))

    def make_loss():
        s = nn.gru_sequence(params, frames)
        d = ad.sub(s, target)
        return ad.tsum(ad.mul(d, d))

    finite_difference_check(make_loss, params.named("gru"))


def test_gradients_match_stepwise_route():
    rng = np.random.default_rng(2)
    params = GruParameters.create(rng, 3, 4)
    frames = rng.normal(size=(6, 3))
    target = rng.normal(size=4)

    def loss_via(route):
        for p in params.named("g").values():
            p.zero_grad()
        if route == "fused":
            states = nn.gru_sequence(params, frames)
            last = ad.take_row(states, 5)
        else:
            h = Tensor(np.zeros(4))
            for t in range(6):
                h = nn.gru_step(params, Tensor(frames[t]), h)
            last = h
        d = ad.sub(last, target)
        ad.backward(ad.tsum(ad.mul(d, d)))
        return {k: p.grad.copy() for k, p in params.named("g").items()}

    fused = loss_via("fused")
    stepwise = loss_via("step")
    for k in fused:
        np.testing.assert_allclose(fused[k], stepwise[k], atol=1e-10, err_msg=k)


def test_rejects_wrong_input_dim():
    rng = np.random.default_rng(3)
    params = GruParameters.create(rng, 3, 4)
    with pytest.raises(ValueError):
        nn.gru_sequence(params, rng.normal(size=(5, 2)))
