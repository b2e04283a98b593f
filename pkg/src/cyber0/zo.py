"""Zero-order gradient machinery.

A client never uploads vectors: per perturbation direction it uploads the
signed scalar ``c * (f(w + mu z; B) - f(w - mu z; B)) / (2 mu)`` where the
direction z is regenerated from a shared seed and c is d in Sphere mode and
1 in Gaussian mode. The mu = 0 branch projects the exact gradient instead.
Aggregated coefficients are applied by replaying the same seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ParamVector
from .losses import Batch, LossModel
from .seedstream import (
    DirectionMode,
    SeedTuple,
    StreamKind,
    derive_seed,
    make_direction,
    perturb_inplace,
)


class NonFiniteLossError(RuntimeError):
    """A loss or coefficient became non-finite; never silently clamped."""

    def __init__(self, message: str, step: int = -1, direction: int = -1, client: int = -1):
        super().__init__(message)
        self.step = step
        self.direction = direction
        self.client = client


@dataclass(frozen=True)
class ZoConfig:
    """Estimator settings: perturbation step, samples per estimate, direction law."""

    mu: float
    k: int
    direction_mode: DirectionMode = DirectionMode.GAUSSIAN
    mu_zero: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mu_zero:
            if self.mu != 0.0:
                raise ValueError("mu must be 0 when mu_zero is set")
        elif self.mu <= 0.0:
            raise ValueError("mu must be positive unless mu_zero is set")

    def scale(self, d: int) -> float:
        # Sphere directions need the dimension factor; Gaussian ones do not.
        return float(d) if self.direction_mode == DirectionMode.SPHERE else 1.0


@dataclass
class ClientReport:
    """The scalars one client uploads per round: one per direction seed."""

    client_id: int
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.ndim != 1 or len(self.coefficients) == 0:
            raise ValueError("coefficients must be a nonempty 1-D array")


def direction_seed(root: int, step: int, sample: int, epoch: int = 0) -> int:
    return derive_seed(SeedTuple(root, step, sample, epoch, StreamKind.DIRECTION))


def zo_coefficient(
    model: LossModel,
    w: ParamVector,
    batch: Batch,
    cfg: ZoConfig,
    seed: int,
    direction: np.ndarray | None = None,
) -> float:
    """Finite-difference coefficient along the seeded direction.

    Evaluates f at w + mu z and then at (w + mu z) - 2 mu z, exactly the
    in-place perturbation schedule of the round protocol. The bracket runs
    on a scratch copy: an in-place add/subtract cycle can leave individual
    float64 coordinates one ulp off (fl(w + a) is not injective in w), and
    the caller's w must be bit-identical on return.
    """
    if cfg.mu_zero:
        raise ValueError("zo_coefficient requires mu > 0; use zo_coefficient_mu0")
    mu = cfg.mu
    scratch = w.copy()
    perturb_inplace(scratch, mu, seed, cfg.direction_mode, direction)
    loss_plus = model.eval(scratch, batch)
    perturb_inplace(scratch, -2.0 * mu, seed, cfg.direction_mode, direction)
    loss_minus = model.eval(scratch, batch)
    coeff = cfg.scale(len(w)) * (loss_plus - loss_minus) / (2.0 * mu)
    if not np.isfinite(coeff):
        raise NonFiniteLossError(
            f"non-finite zero-order coefficient ({coeff}) from losses "
            f"{loss_plus}, {loss_minus} at mu={mu}"
        )
    return float(coeff)


def zo_coefficient_mu0(
    model: LossModel,
    w: ParamVector,
    batch: Batch,
    cfg: ZoConfig,
    seed: int,
    gradient: np.ndarray | None = None,
    direction: np.ndarray | None = None,
) -> float:
    """Gradient-projection coefficient: c * <grad f(w; B), z(seed)>.

    One gradient evaluation can serve all k directions within a step; pass
    it via ``gradient`` to avoid recomputation.
    """
    g = model.grad(w, batch) if gradient is None else gradient
    z = make_direction(seed, len(w), cfg.direction_mode) if direction is None else direction
    coeff = cfg.scale(len(w)) * float(np.dot(g, z))
    if not np.isfinite(coeff):
        raise NonFiniteLossError(f"non-finite mu=0 coefficient ({coeff})")
    return coeff


def apply_update(
    w: ParamVector,
    agg_coeffs: np.ndarray,
    step: int,
    epoch: int,
    eta: float,
    cfg: ZoConfig,
    root_seed: int,
    directions: list[np.ndarray] | None = None,
) -> None:
    """Replay the k aggregated coefficients into w, mutating it.

    Directions are regenerated from (root, step, r, epoch) in ascending r;
    federator and clients run this identical sequence, so their states stay
    bit-identical. ``directions`` may carry the step's cached vectors.
    """
    if not np.all(np.isfinite(agg_coeffs)):
        raise NonFiniteLossError(f"non-finite aggregated coefficients at step {step}", step=step)
    k = cfg.k
    if len(agg_coeffs) != k:
        raise ValueError(f"expected {k} aggregated coefficients, got {len(agg_coeffs)}")
    for r in range(k):
        scale = -(eta * float(agg_coeffs[r]) / k)
        seed = direction_seed(root_seed, step, r, epoch)
        perturb_inplace(
            w,
            scale,
            seed,
            cfg.direction_mode,
            direction=None if directions is None else directions[r],
        )
