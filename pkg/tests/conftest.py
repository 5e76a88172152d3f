import numpy as np
import pytest
import torch
from torch import nn


class IdentityModel(nn.Module):
    """Returns its input unchanged (not blind-spot; loss fixtures only)."""

    def forward(self, x):
        return x


class ZeroModel(nn.Module):
    def forward(self, x):
        return torch.zeros_like(x)


@pytest.fixture
def identity_model():
    return IdentityModel()


@pytest.fixture
def zero_model():
    return ZeroModel()


@pytest.fixture
def raster4():
    """4x4 single-channel image holding 0..15 in raster order."""
    return np.arange(16, dtype=np.float32).reshape(4, 4, 1)


def _gray(a):
    a = np.asarray(a, dtype=np.float32) / 255.0
    return a.mean(axis=-1) if a.ndim == 3 else a


DESK_SOURCES = ["camera", "astronaut", "coffee", "chelsea", "rocket", "brick", "grass", "gravel",
                "coins", "moon", "clock", "page", "text", "immunohistochemistry", "hubble_deep_field"]


def desk_sources(color=False):
    import skimage.data as data

    out = []
    for name in DESK_SOURCES:
        a = getattr(data, name)()
        if color:
            a = np.asarray(a, dtype=np.float32) / 255.0
            if a.ndim == 2:
                a = np.repeat(a[:, :, None], 3, axis=2)
            out.append(a[:, :, :3])
        else:
            out.append(_gray(a)[:, :, None])
    return out


def random_crops(images, size, seed):
    rng = np.random.default_rng(seed)
    crops = []
    for a in images:
        i = rng.integers(0, a.shape[0] - size + 1)
        j = rng.integers(0, a.shape[1] - size + 1)
        crops.append(np.ascontiguousarray(a[i:i + size, j:j + size]))
    return crops


def fd_gradient_check(model, loss_fn, n_coords=20, h=1e-6, seed=0):
    """Largest relative error between autograd and central differences.

    ``loss_fn(model)`` must be a deterministic scalar. Checks the largest
    gradient coordinates, random well-conditioned ones, and one random
    direction.
    """
    import torch
    from torch.nn.utils import parameters_to_vector, vector_to_parameters

    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss_fn(model).backward()
    grad = torch.cat([p.grad.reshape(-1) for p in params]).detach().clone()
    theta = parameters_to_vector(params).detach().clone()

    def at(vec):
        with torch.no_grad():
            vector_to_parameters(vec, params)
            return loss_fn(model).item()

    rng = np.random.default_rng(seed)
    mag = grad.abs().numpy()
    top = np.argsort(mag)[-n_coords // 2:]
    usable = np.flatnonzero(mag > 1e-6 * mag.max())
    rand = rng.choice(usable, size=min(len(usable), n_coords - len(top)), replace=False)
    worst = 0.0
    for idx in np.concatenate([top, rand]):
        e = torch.zeros_like(theta)
        e[idx] = h
        fd = (at(theta + e) - at(theta - e)) / (2 * h)
        a = grad[idx].item()
        worst = max(worst, abs(fd - a) / max(abs(fd), abs(a)))
    v = torch.from_numpy(rng.normal(size=theta.numel())).to(theta.dtype)
    v /= v.norm()
    fd = (at(theta + h * v) - at(theta - h * v)) / (2 * h)
    a = float(grad @ v)
    worst = max(worst, abs(fd - a) / max(abs(fd), abs(a)))
    with torch.no_grad():
        vector_to_parameters(theta, params)
    return worst
