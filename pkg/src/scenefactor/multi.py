"""Sequential multi-object factorization by explaining away."""

from __future__ import annotations

from collections import Counter

import numpy as np
from scipy.optimize import linear_sum_assignment

from .encoder import Codebooks
from .resonator import FactorizationResult, StoppingCriterion, run


def explain_away(z_r, z_hat, dim: int | None = None) -> np.ndarray:
    """z_{r+1} = z_r - (|<z_hat, z_r>| / D) z_hat."""
    z_r = np.asarray(z_r, dtype=complex)
    z_hat = np.asarray(z_hat, dtype=complex)
    if z_r.shape != z_hat.shape:
        raise ValueError(f"dimension mismatch: {z_r.shape} vs {z_hat.shape}")
    d = z_r.shape[0] if dim is None else dim
    if d != z_r.shape[0]:
        raise ValueError(f"dim={d} does not match vectors of length {z_r.shape[0]}")
    coef = abs(np.vdot(z_r, z_hat)) / d
    return z_r - coef * z_hat


def factorize_multi(
    z,
    books: Codebooks,
    m: int,
    criterion: StoppingCriterion,
    rng: np.random.Generator,
    cleaned: bool = False,
) -> list[FactorizationResult]:
    """Run the resonator ``m`` times, subtracting each output from the residual.

    By default the raw estimate product is explained away; ``cleaned=True``
    subtracts the decoded codebook entries instead.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    resid = np.asarray(z, dtype=complex)
    out = []
    for _ in range(m):
        res = run(resid, books, criterion, rng)
        out.append(res)
        if cleaned:
            z_hat = books.H[res.x_index] * books.V[res.y_index] * books.O[res.k_index]
        else:
            z_hat = res.final_estimate
        resid = explain_away(resid, z_hat)
    return out


def _triple(r):
    if isinstance(r, FactorizationResult):
        return (r.k_index, r.x_index, r.y_index)
    return tuple(r)


def graded_accuracy(results, truth, tolerance: int = 0, side: int | None = None) -> float:
    """Fraction of ground-truth ``(k, x, y)`` placements matched by some result.

    Each result can match at most one truth entry. ``tolerance`` > 0 accepts
    positions within that many pixels (toroidal when ``side`` is given) and
    solves the matching as an assignment problem.
    """
    placements = list(getattr(truth, "placements", truth))
    if not placements:
        return 0.0
    found = [_triple(r) for r in results]
    if tolerance == 0:
        hits = Counter(map(tuple, placements)) & Counter(found)
        return sum(hits.values()) / len(placements)
    if not found:
        return 0.0
    ok = np.zeros((len(placements), len(found)), dtype=bool)
    for i, (k, x, y) in enumerate(placements):
        for j, (fk, fx, fy) in enumerate(found):
            dx, dy = abs(fx - x), abs(fy - y)
            if side is not None:
                dx, dy = min(dx, side - dx), min(dy, side - dy)
            ok[i, j] = fk == k and max(dx, dy) <= tolerance
    rows, cols = linear_sum_assignment(-ok.astype(float))
    return float(ok[rows, cols].sum()) / len(placements)
