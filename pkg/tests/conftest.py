import numpy as np
import pytest
import torch

from atfnet.config import ModelConfig

torch.manual_seed(0)


def tiny_config(**kw):
    """Desk-scale config used across the functional tests."""
    base = dict(encoder_channels=(8, 16, 32, 64, 64), c_dec=32, c_fuse=16, input_size=64)
    base.update(kw)
    return ModelConfig(**base)


def grad_config(**kw):
    """Very small config for 64-bit finite-difference checks at 32x32."""
    base = dict(encoder_channels=(4, 4, 8, 8, 8), c_dec=8, c_fuse=4, input_size=32)
    base.update(kw)
    return ModelConfig(**base)


def rel_err(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom


def fd_gradients(fn, tensors, eps=1e-6):
    """Full elementwise central-difference gradients of the scalar fn().

    The tensors are mutated in place around each evaluation; fn() must read
    them fresh every call. Use float64 tensors.
    """
    grads = []
    for x in tensors:
        flat = x.reshape(-1)
        g = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + eps
            hi = float(fn())
            flat[i] = orig - eps
            lo = float(fn())
            flat[i] = orig
            g[i] = (hi - lo) / (2 * eps)
        grads.append(g.reshape(x.shape))
    return grads


def check_gradients(make_loss, tensors, eps=1e-6, tol=1e-3):
    """Analytic gradients (autograd) vs central differences, elementwise.

    make_loss() computes the scalar from the current tensor contents.
    Returns the worst relative error across tensors.
    """
    leaves = [t.requires_grad_(True) for t in tensors]
    loss = make_loss()
    analytic = torch.autograd.grad(loss, leaves, allow_unused=False)
    for t in leaves:
        t.requires_grad_(False)
    with torch.no_grad():
        numeric = fd_gradients(lambda: make_loss(), tensors, eps=eps)
    worst = max(rel_err(a, n) for a, n in zip(analytic, numeric))
    assert worst < tol, f"gradient mismatch: rel err {worst:.3e} >= {tol}"
    return worst


def check_gradients_directional(make_loss, tensors, n_directions=6, eps=1e-5, tol=1e-3,
                                seed=0):
    """Directional derivative check for large inputs: for random unit
    directions v, compare <grad, v> against (f(x+eps v) - f(x-eps v)) / 2eps."""
    leaves = [t.requires_grad_(True) for t in tensors]
    loss = make_loss()
    analytic = torch.autograd.grad(loss, leaves)
    for t in leaves:
        t.requires_grad_(False)
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for _ in range(n_directions):
            dirs = [torch.randn(t.shape, generator=gen, dtype=t.dtype) for t in tensors]
            norm = torch.sqrt(sum(d.pow(2).sum() for d in dirs))
            dirs = [d / norm for d in dirs]
            for t, d in zip(tensors, dirs):
                t += eps * d
            hi = float(make_loss())
            for t, d in zip(tensors, dirs):
                t -= 2 * eps * d
            lo = float(make_loss())
            for t, d in zip(tensors, dirs):
                t += eps * d
            numeric = (hi - lo) / (2 * eps)
            ana = float(sum((g * d).sum() for g, d in zip(analytic, dirs)))
            err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-12)
            worst = max(worst, err)
    assert worst < tol, f"directional gradient mismatch: rel err {worst:.3e} >= {tol}"
    return worst


def weighted_sum_loss(out, seed=1234):
    """Scalar probe: fixed random weighting of the output tensor."""
    gen = torch.Generator().manual_seed(seed)
    w = torch.randn(out.shape, generator=gen, dtype=out.dtype)
    return (out * w).sum()


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    """One shared 1-video 20-frame 64x64 moving-disc dataset."""
    from atfnet.fixture import FixtureSpec, generate_fixture

    root = tmp_path_factory.mktemp("fixture_data")
    spec = FixtureSpec(videos=1, frames=20, size=64, object_kind="disc",
                       object_size=8, velocity=(2.0, 0.0))
    generate_fixture(spec, np.random.default_rng(0), root)
    return root
