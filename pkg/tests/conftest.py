"""Shared fixtures and the finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import srkit.autodiff as ad
from srkit.autodiff import Tensor
from srkit.signal_io import synth_corpus

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def fd_gradient(fn, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of a scalar function, per input element."""
    grads = []
    for i, base in enumerate(arrays):
        g = np.zeros_like(base, dtype=np.float64)
        flat = g.reshape(-1)
        for j in range(base.size):
            for sign in (+1.0, -1.0):
                bumped = [a.copy() for a in arrays]
                bumped[i].reshape(-1)[j] += sign * h
                flat[j] += sign * fn(*bumped)
        flat /= 2 * h
        grads.append(g)
    return grads


def check_gradients(build_loss, arrays: list[np.ndarray], tol: float, h: float = 1e-5):
    """Analytic vs central-difference gradients for build_loss(*tensors) -> Tensor.

    Error is normalized by max(1, ||grad||_inf) so near-zero gradients are
    judged absolutely and large ones relatively. Returns the worst error.
    """
    tensors = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    ad.backward(loss)

    def scalar_fn(*arrs):
        with ad.no_grad():
            return build_loss(*[Tensor(a) for a in arrs]).item()

    fd = fd_gradient(scalar_fn, [a.astype(np.float64) for a in arrays], h=h)
    worst = 0.0
    for t, g in zip(tensors, fd):
        assert t.grad is not None, "leaf missed by backward"
        scale = max(1.0, float(np.max(np.abs(g))))
        err = float(np.max(np.abs(t.grad - g))) / scale
        worst = max(worst, err)
    assert worst < tol, f"gradient error {worst:.3e} >= {tol:.0e}"
    return worst


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> str:
    """Six deterministic synthetic 48 kHz wav files."""
    out = tmp_path_factory.mktemp("corpus")
    synth_corpus(6, seed=11, out_dir=out)
    return str(out)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
