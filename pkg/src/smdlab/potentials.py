"""Potentials, mirror maps, and Bregman divergences.

A potential is a strictly convex separable function psi on R^p whose
gradient (the mirror map) is an invertible componentwise transformation.
Two families are provided:

* ``qnorm(q)``: psi(w) = (1/q) * sum_j |w_j|^q with q > 1. The mirror map
  is z_j = |w_j|^(q-1) * sign(w_j) and its inverse raises to the power
  1/(q-1). q = 2 gives the squared Euclidean norm whose mirror map is the
  identity; q slightly above 1 is the usual l1 surrogate.
* ``entropy()``: psi(w) = sum_j w_j log w_j on strictly positive vectors,
  whose Bregman divergence is the unnormalized KL divergence.

Large or small q makes |.|^(q-1) under/overflow-prone, so both maps are
computed in log-magnitude form (sign and log|.| carried separately) with
an exact pass-through for unit exponents, which keeps the q = 2 maps
bitwise identity.

All operations are pure; ``Potential`` values are immutable and safe to
share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["Potential", "qnorm", "entropy", "DEFAULT_L1_SURROGATE_Q"]

# The sparse mirror uses q = 1 + eps; eps is not pinned anywhere
# authoritative, so 0.1 is the configurable default.
DEFAULT_L1_SURROGATE_Q = 1.1


def _signed_pow(x: np.ndarray, expo: float) -> np.ndarray:
    """sign(x) * |x|**expo via log magnitudes; exact for expo == 1."""
    if expo == 1.0:
        return x
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0.0
    if np.any(nz):
        xa = x[nz]
        # overflow to inf is intentional; callers reject non-finite results
        with np.errstate(over="ignore"):
            out[nz] = np.sign(xa) * np.exp(expo * np.log(np.abs(xa)))
    return out


def _as_vector(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"expected a flat parameter vector, got shape {w.shape}")
    return w


@dataclass(frozen=True)
class Potential:
    """Descriptor of a strictly convex potential (q-norm or negative entropy).

    Use the :func:`qnorm` and :func:`entropy` constructors rather than
    instantiating directly.
    """

    kind: str
    q: float = 2.0

    def __post_init__(self):
        if self.kind not in ("qnorm", "entropy"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "qnorm" and not (math.isfinite(self.q) and self.q > 1.0):
            raise ValueError(f"q-norm potential requires q > 1, got {self.q}")

    # -- basic evaluations -------------------------------------------------

    def value(self, w) -> float:
        """psi(w). Raises :class:`DomainError` off the entropy domain."""
        w = _as_vector(w)
        if self.kind == "entropy":
            self._check_domain(w)
            return float(np.sum(w * np.log(w)))
        return float(np.sum(np.abs(w) ** self.q) / self.q)

    def grad(self, w) -> np.ndarray:
        """The mirror map z = grad psi(w)."""
        w = _as_vector(w)
        if self.kind == "entropy":
            self._check_domain(w)
            return 1.0 + np.log(w)
        return _signed_pow(w, self.q - 1.0)

    def grad_inv(self, z) -> np.ndarray:
        """The inverse mirror map; exact inverse of :meth:`grad`."""
        z = _as_vector(z)
        if self.kind == "entropy":
            return np.exp(z - 1.0)
        return _signed_pow(z, 1.0 / (self.q - 1.0))

    def grad_inv_deriv(self, z) -> np.ndarray:
        """Componentwise derivative of :meth:`grad_inv` (dual curvature)."""
        z = _as_vector(z)
        if self.kind == "entropy":
            return np.exp(z - 1.0)
        e = 1.0 / (self.q - 1.0)
        if e == 1.0:
            return np.ones_like(z)
        with np.errstate(divide="ignore"):
            return e * np.abs(z) ** (e - 1.0)

    def conjugate_value(self, z) -> float:
        """The convex conjugate psi*(z); grad psi* is :meth:`grad_inv`."""
        z = _as_vector(z)
        if self.kind == "entropy":
            return float(np.sum(np.exp(z - 1.0)))
        qc = self.q / (self.q - 1.0)
        return float(np.sum(np.abs(z) ** qc) / qc)

    # -- Bregman divergence ------------------------------------------------

    def bregman(self, w, w_ref_from) -> float:
        """D_psi(w, w') = psi(w) - psi(w') - <grad psi(w'), w - w'>.

        Computed componentwise with a Taylor branch for nearly equal
        components, so the result stays nonnegative under cancellation.
        """
        w = _as_vector(w)
        v = _as_vector(w_ref_from)
        if w.shape != v.shape:
            raise ValueError(f"dimension mismatch: {w.shape} vs {v.shape}")
        if self.kind == "entropy":
            self._check_domain(w)
            self._check_domain(v)
            return _entropy_bregman(w, v)
        if self.q == 2.0:
            d = w - v
            return float(0.5 * np.dot(d, d))
        return _qnorm_bregman(w, v, self.q)

    # -- misc ----------------------------------------------------------------

    def label(self) -> str:
        return "entropy" if self.kind == "entropy" else f"q={self.q:g}"

    def in_domain(self, w) -> bool:
        w = np.asarray(w, dtype=float)
        if self.kind == "entropy":
            return bool(np.all(w > 0.0))
        return True

    def _check_domain(self, w: np.ndarray) -> None:
        if self.kind == "entropy" and not np.all(w > 0.0):
            raise DomainError("entropy potential requires strictly positive entries")


def _qnorm_bregman(w: np.ndarray, v: np.ndarray, q: float) -> float:
    delta = w - v
    aw = np.abs(w)
    av = np.abs(v)
    scale = np.maximum(aw, av)
    # Direct formula cancels catastrophically when w_j ~ v_j; switch to the
    # exact-to-leading-order quadratic form there (always >= 0).
    near = np.abs(delta) <= 1e-6 * scale
    out = np.zeros_like(delta)
    far = ~near
    if np.any(far):
        gv = _signed_pow(v[far], q - 1.0)
        out[far] = (aw[far] ** q - av[far] ** q) / q - gv * delta[far]
    near &= delta != 0.0
    if np.any(near):
        curv = (q - 1.0) * av[near] ** (q - 2.0)
        out[near] = 0.5 * curv * delta[near] ** 2
    return float(np.sum(out))


def _entropy_bregman(w: np.ndarray, v: np.ndarray) -> float:
    # sum_j w log(w/v) - w + v, written per-component as v*((1+r)log1p(r)-r)
    # with r = (w-v)/v; the small-|r| branch avoids cancellation.
    r = (w - v) / v
    small = np.abs(r) < 1e-8
    out = np.empty_like(r)
    out[small] = 0.5 * r[small] ** 2
    big = ~small
    out[big] = (1.0 + r[big]) * np.log1p(r[big]) - r[big]
    return float(np.sum(v * out))


def qnorm(q: float = 2.0) -> Potential:
    """Potential psi(w) = (1/q) ||w||_q^q, q > 1."""
    return Potential("qnorm", float(q))


def entropy() -> Potential:
    """Negative-entropy potential on strictly positive vectors."""
    return Potential("entropy")
