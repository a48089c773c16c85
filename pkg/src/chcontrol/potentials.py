"""Double-well potentials F = beta_hat + pi_hat and their derivatives.

Splits used throughout (convex part first):

* regular:      beta_hat = r^4/4,                       pi_hat = 1/4 - r^2/2
* logarithmic:  beta_hat = (1+r)ln(1+r) + (1-r)ln(1-r), pi_hat = -c1 r^2
* quadratic:    beta_hat = r^2/2,                       pi_hat = 0   (linear test case)

``beta`` is evaluated implicitly and ``pi`` explicitly by the time stepper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import PotentialDomainError, PreconditionError

VARIANTS = ("regular", "logarithmic", "quadratic")


@dataclass(frozen=True)
class PotentialSpec:
    variant: str = "regular"
    c1: float = 2.0
    clip: float = 1e-9

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PreconditionError(f"unknown potential variant {self.variant!r}")
        if self.variant == "logarithmic" and not self.c1 > 1:
            raise PreconditionError(f"logarithmic potential needs c1 > 1, got {self.c1}")
        if not 0 < self.clip < 0.5:
            raise PreconditionError(f"clip margin must lie in (0, 0.5), got {self.clip}")

    @property
    def singular(self) -> bool:
        return self.variant == "logarithmic"

    @property
    def bounds(self) -> tuple[float, float]:
        """Effective domain (r-, r+) of beta."""
        if self.singular:
            return (-1.0, 1.0)
        return (-np.inf, np.inf)

    def clamp(self, r):
        if not self.singular:
            return np.asarray(r, dtype=float)
        lo, hi = self.bounds
        return np.clip(r, lo + self.clip, hi - self.clip)


def beta_part(spec: PotentialSpec, r, order: int = 1):
    """Derivative of order ``order`` (0..3) of the convex part ``beta_hat``."""
    r = np.asarray(r, dtype=float)
    if spec.variant == "regular":
        return (r**4 / 4, r**3, 3 * r**2, 6 * r)[order]
    if spec.variant == "quadratic":
        return (r**2 / 2, r, np.ones_like(r), np.zeros_like(r))[order]
    _check_log_domain(r, order)
    if order == 0:
        return xlogy(1 + r, 1 + r) + xlogy(1 - r, 1 - r)
    if order == 1:
        return np.log1p(r) - np.log1p(-r)
    if order == 2:
        return 2.0 / (1 - r * r)
    return 4.0 * r / (1 - r * r) ** 2


def pi_part(spec: PotentialSpec, r, order: int = 1):
    """Derivative of order ``order`` (0..3) of the smooth part ``pi_hat``."""
    r = np.asarray(r, dtype=float)
    zero = np.zeros_like(r)
    if spec.variant == "regular":
        return (0.25 - r**2 / 2, -r, -np.ones_like(r), zero)[order]
    if spec.variant == "quadratic":
        return (zero, zero, zero, zero)[order]
    c1 = spec.c1
    return (-c1 * r**2, -2 * c1 * r, np.full_like(r, -2 * c1), zero)[order]


def _check_log_domain(r: np.ndarray, order: int):
    limit = 1.0 if order == 0 else np.nextafter(1.0, 0.0)
    if np.any(np.abs(r) > limit) or not np.all(np.isfinite(r)):
        raise PotentialDomainError(
            f"logarithmic potential (order {order}) evaluated outside its domain: "
            f"max |r| = {np.max(np.abs(r)):.17g}"
        )


def F_eval(spec: PotentialSpec, r, order: int = 0):
    """Exact value of ``F^(order)(r)`` for order 0..3."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    out = beta_part(spec, r, order) + pi_part(spec, r, order)
    return float(out) if np.ndim(out) == 0 else out


def F_eval_clipped(spec: PotentialSpec, r, order: int = 0):
    """``F_eval`` at ``r`` clamped into ``(r- + clip, r+ - clip)``."""
    return F_eval(spec, spec.clamp(r), order)


@dataclass
class CompatibilityItem:
    name: str
    value: float
    ok: bool


@dataclass
class CompatibilityReport:
    items: list[CompatibilityItem]
    rho: float

    @property
    def passed(self) -> bool:
        return all(item.ok for item in self.items)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "rho": self.rho,
            "items": [{"name": i.name, "value": i.value, "ok": i.ok} for i in self.items],
        }


def validate_compatibility(spec: PotentialSpec, phi0, f, gamma: float) -> CompatibilityReport:
    """Check that the initial datum and the source stay inside (r-, r+).

    The four quantities are ``inf phi0``, ``sup phi0``, ``-rho - (mean phi0)^-``
    and ``rho + (mean phi0)^+`` with ``rho = ||f||_inf / gamma``.
    """
    if not gamma > 0:
        raise PreconditionError(f"gamma must be positive, got {gamma}")
    phi0 = np.asarray(phi0, dtype=float)
    f = np.asarray(f, dtype=float)
    rho = float(np.max(np.abs(f))) / gamma if f.size else 0.0
    m = float(phi0.mean())
    quantities = [
        ("inf phi0", float(phi0.min())),
        ("sup phi0", float(phi0.max())),
        ("-rho - (mean phi0)^-", -rho - max(-m, 0.0)),
        ("rho + (mean phi0)^+", rho + max(m, 0.0)),
    ]
    lo, hi = spec.bounds
    items = [CompatibilityItem(name, value, bool(lo < value < hi)) for name, value in quantities]
    return CompatibilityReport(items, rho)


@dataclass
class SeparationReport:
    min: float
    max: float
    margin_lo: float
    margin_hi: float

    @property
    def separated(self) -> bool:
        return self.margin_lo > 0 and self.margin_hi > 0


def separation_report(phi, spec: PotentialSpec) -> SeparationReport:
    phi = np.asarray(phi, dtype=float)
    lo, hi = spec.bounds
    pmin, pmax = float(phi.min()), float(phi.max())
    return SeparationReport(pmin, pmax, pmin - lo, hi - pmax)
