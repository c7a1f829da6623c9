"""SVD whitening of canonical templates or their feature maps.

The transform is W = U diag(1 / max(s_i, eps)) U^T built from the SVD of the
(p x N) data matrix, optionally centered first. It is stored in factored form; for 120 x 120
templates the dense p x p matrix would need gigabytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import containers


@dataclass(frozen=True)
class WhiteningTransform:
    basis: np.ndarray  # (p, r), orthonormal columns spanning the centered data
    inv_scale: np.ndarray  # (r,) 1 / max(s_i, epsilon)
    mean: np.ndarray  # (p,) template mean removed before the SVD (zeros if uncentered)
    epsilon: float
    source_shape: tuple[int, ...]

    @property
    def matrix(self) -> np.ndarray:
        """Dense W; only sensible for small templates."""
        return (self.basis * self.inv_scale) @ self.basis.T

    def apply(self, data) -> np.ndarray:
        """Flatten, multiply by W, reshape (feature maps flatten all n maps)."""
        data = np.asarray(data, dtype=float)
        if data.shape != self.source_shape:
            raise ValueError(f"expected shape {self.source_shape}, got {data.shape}")
        flat = data.ravel()
        return (self.basis @ (self.inv_scale * (self.basis.T @ flat))).reshape(data.shape)

    def to_bytes(self) -> bytes:
        return containers.whitening_to_bytes(
            self.source_shape, self.epsilon, self.mean, self.basis, self.inv_scale
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "WhiteningTransform":
        shape, eps, mean, basis, inv = containers.whitening_from_bytes(buf)
        return cls(basis, inv, mean, eps, shape)


def fit_whitening(templates, epsilon: float | None = None, center: bool = False) -> WhiteningTransform:
    """Fit on >= 2 equally shaped templates.

    ``epsilon`` floors the singular values; the default is 1e-8 times the
    largest singular value.

    Without centering the whitened templates come out orthonormal, which is
    what removes crosstalk between codebook entries. With ``center=True`` the
    centered templates get identity covariance instead, but since they sum to
    zero they can only reach pairwise cosines of -1/(N-1).
    """
    templates = [np.asarray(t, dtype=float) for t in templates]
    if len(templates) < 2:
        raise ValueError("whitening needs at least two templates")
    shape = templates[0].shape
    if any(t.shape != shape for t in templates):
        raise ValueError("all templates must share one shape")
    x = np.stack([t.ravel() for t in templates], axis=1)  # (p, N)
    mean = x.mean(axis=1) if center else np.zeros(x.shape[0])
    u, s, _ = np.linalg.svd(x - mean[:, None], full_matrices=False)
    # numerically null directions are not part of the data span (centering
    # removes one); keeping them would amplify roundoff by 1/epsilon
    rank_tol = max(x.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > rank_tol
    u, s = u[:, keep], s[keep]
    if epsilon is None:
        epsilon = 1e-8 * (s[0] if s.size else 1.0)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    floor = np.maximum(s, epsilon)
    return WhiteningTransform(u, 1.0 / floor, mean, float(epsilon), tuple(shape))


def apply_whitening(wt: WhiteningTransform, data) -> np.ndarray:
    """Whiten one template or one stack of feature maps; same shape out."""
    return wt.apply(data)
