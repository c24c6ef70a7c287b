"""Membership inference: pi from node states, relaxed assignments z, diagnostics"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..core.exceptions import ValidationError
from ..core.seeding import rng_for
from ..numerics import Tensor, as_tensor, clamp, einsum, log, mul, softmax
from .params import GroupEmbeddings

SIMPLEX_TOLERANCE = 1e-6
LOG_FLOOR = 1e-12


@dataclass
class MembershipState:
    """pi and z rows of one layer for a set of nodes"""
    layer: int
    pi: Tensor
    z: Tensor
    tau: float

    def validate(self):
        if self.tau <= 0:
            raise ValidationError("temperature must be positive", field="tau")
        for name, rows in (("pi", self.pi.value), ("z", self.z.value)):
            if (rows < 0).any() or not np.allclose(rows.sum(axis=-1), 1.0, atol=SIMPLEX_TOLERANCE):
                raise ValidationError(f"layer {self.layer} {name} rows are off the simplex", field=name)
        return True

    def hard(self) -> np.ndarray:
        return hard_assignment(self.z.value)


def membership_distribution(groups: Union[GroupEmbeddings, Tensor], h: Tensor) -> Tensor:
    """pi_i = softmax(Phi h_i) for every row of h; the Dirichlet mean of the stated prior"""
    phi = groups.phi if isinstance(groups, GroupEmbeddings) else as_tensor(groups)
    h = as_tensor(h)
    if h.ndim == 1:
        return softmax(einsum("kd,d->k", phi, h))
    return softmax(einsum("nd,kd->nk", h, phi), axis=-1)


def gumbel_noise(shape, seed: int) -> np.ndarray:
    return rng_for(seed, "gumbel").gumbel(size=shape)


def gumbel_softmax_sample(pi, tau: float, seed: int = 0, noise: Optional[np.ndarray] = None,
                          noise_space: str = "probability") -> Tensor:
    """Relaxed one-hot z_k proportional to exp((pi_k + g_k) / tau).

    ``noise_space="log"`` perturbs log pi instead of pi. Passing ``noise``
    overrides the Gumbel draw (zeros give the noise-free relaxation).
    """
    if tau <= 0:
        raise ValidationError("temperature must be positive", field="tau")
    pi = as_tensor(pi)
    if noise is None:
        noise = gumbel_noise(pi.shape, seed)
    elif np.shape(noise) != pi.shape:
        raise ValidationError(f"noise shape {np.shape(noise)} does not match pi {pi.shape}", field="noise")
    if noise_space == "probability":
        scores = pi
    elif noise_space == "log":
        scores = log(clamp(pi, LOG_FLOOR, 1.0))
    else:
        raise ValidationError("noise_space must be 'probability' or 'log'", field="noise_space")
    return softmax(mul(scores + noise, 1.0 / tau), axis=-1)


def relaxed_assignment(pi, tau: float, noise_space: str = "probability") -> Tensor:
    """Noise-free z = softmax(pi / tau), used at inference"""
    pi = as_tensor(pi)
    return gumbel_softmax_sample(pi, tau, noise=np.zeros(pi.shape), noise_space=noise_space)


def hard_assignment(pi) -> np.ndarray:
    """Argmax group per row, ties toward the lowest index"""
    values = pi.value if isinstance(pi, Tensor) else np.asarray(pi, dtype=np.float64)
    result = np.argmax(values, axis=-1)
    return int(result) if result.ndim == 0 else result


def concentration(pi) -> np.ndarray:
    """Population variance of each pi row"""
    values = pi.value if isinstance(pi, Tensor) else np.asarray(pi, dtype=np.float64)
    result = values.var(axis=-1)
    return float(result) if result.ndim == 0 else result


def sample_dirichlet(pi, seed: int, scale: float = 1.0) -> np.ndarray:
    """Draw pi ~ Dir(scale * softmax(Phi h)) per row; analysis only, no gradients"""
    values = pi.value if isinstance(pi, Tensor) else np.asarray(pi, dtype=np.float64)
    alpha = np.maximum(np.atleast_2d(values) * scale, LOG_FLOOR)
    rng = rng_for(seed, "dirichlet")
    draws = np.stack([rng.dirichlet(row) for row in alpha])
    return draws.reshape(values.shape)


def boundary_nodes(concentrations: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Nodes with the lowest layer-averaged concentration, flattest first"""
    if not 0 < fraction <= 1:
        raise ValidationError("boundary fraction must lie in (0, 1]", field="fraction")
    values = np.asarray(concentrations, dtype=np.float64)
    if values.ndim == 2:
        values = values.mean(axis=0)
    count = max(1, int(round(fraction * values.size)))
    return np.argsort(values, kind="stable")[:count]
