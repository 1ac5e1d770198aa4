"""Self-checks of the closed-form volume factors and density normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import LogGaussian, make_rng
from .manifolds import Manifold, PoincareBall, SiegelDisk, numeric_volume_factor
from .metrics import disk_integral

JACOBIAN_TOL = 1e-4
ROUNDTRIP_TOL = 1e-8
NORMALIZATION_TOL = 1e-3
SIEGEL_TOL = 1e-10


@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed}


def jacobian_errors(manifold: Manifold, cases: int, seed: int, max_norm: float = 3.0) -> np.ndarray:
    """Relative error of the closed-form volume factor against the finite-difference oracle."""
    v = manifold.random_tangent(make_rng(seed), cases, max_norm)
    closed = np.exp(manifold.log_volume_factor_tangent(v))
    numeric = np.array([numeric_volume_factor(manifold, row) for row in v])
    return np.abs(closed - numeric) / closed


def siegel_poincare_gap(count: int, seed: int) -> float:
    """Largest ``|J_siegel(z) - J_poincare(z)|`` over random ``z`` in the unit disk."""
    rng = make_rng(seed)
    radius = rng.uniform(1e-6, 0.999, count)
    angle = rng.uniform(0.0, 2.0 * np.pi, count)
    z = radius * np.exp(1j * angle)
    siegel = SiegelDisk(1).volume_factor(z.reshape(-1, 1, 1))
    poincare = PoincareBall(2).volume_factor(np.stack([z.real, z.imag], axis=-1))
    return float(np.max(np.abs(siegel - poincare)))


def run(manifold: Manifold, cases: int = 100, seed: int = 0) -> list[Check]:
    checks = []
    v = manifold.random_tangent(make_rng(seed), cases, 3.0)
    back = manifold.log(manifold.exp(v))
    checks.append(Check("log_exp_roundtrip", float(np.max(np.abs(back - v))), ROUNDTRIP_TOL))
    max_norm = 1.5 if isinstance(manifold, SiegelDisk) else 3.0
    errors = jacobian_errors(manifold, cases, seed + 1, max_norm)
    checks.append(Check("jacobian_oracle", float(np.max(errors)), JACOBIAN_TOL))
    if isinstance(manifold, PoincareBall) and manifold.dim == 2:
        lg = LogGaussian(manifold, np.zeros(2), np.eye(2))
        checks.append(Check("normalization", abs(disk_integral(lg.log_pdf) - 1.0), NORMALIZATION_TOL))
    if isinstance(manifold, SiegelDisk) and manifold.m == 1:
        checks.append(Check("siegel_poincare", siegel_poincare_gap(1000, seed + 2), SIEGEL_TOL))
    return checks
