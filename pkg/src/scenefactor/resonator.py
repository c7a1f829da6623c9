"""Resonator network factorization of h(x) * v(y) * o(k) composites."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import hdcore
from .encoder import Codebooks
from .hdcore import Codebook

FIXED_POINT, CONFIDENCE, MAX_ITERS_ONLY = "fixed_point", "confidence", "max_iters_only"
FACTORS = ("h", "v", "o")


@dataclass(frozen=True)
class StoppingCriterion:
    kind: str = FIXED_POINT
    epsilon: float = 0.01
    conf_threshold: float = 0.6
    max_iters: int = 100

    def __post_init__(self):
        if self.kind not in (FIXED_POINT, CONFIDENCE, MAX_ITERS_ONLY):
            raise ValueError(f"unknown stopping criterion {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 <= self.conf_threshold <= 1:
            raise ValueError(f"conf_threshold must lie in [0, 1], got {self.conf_threshold}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError(f"max_iters must be a non-negative integer, got {self.max_iters}")


@dataclass(frozen=True)
class ResonatorState:
    est_h: np.ndarray
    est_v: np.ndarray
    est_o: np.ndarray
    iteration: int = 0
    confidence_trace: tuple = field(default=())

    def estimates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.est_h, self.est_v, self.est_o


@dataclass(frozen=True)
class FactorizationResult:
    x_index: int
    y_index: int
    k_index: int
    converged: bool
    iterations: int
    final_confidences: tuple[float, float, float]
    final_estimate: np.ndarray
    trace: tuple = ()

    @property
    def triple(self) -> tuple[int, int, int]:
        return self.x_index, self.y_index, self.k_index


def _check(z: np.ndarray, books: Codebooks) -> None:
    dims = {z.shape[-1], books.H.dim, books.V.dim, books.O.dim}
    if z.ndim != 1 or len(dims) != 1:
        raise ValueError("scene vector and codebooks must share one dimension")


def resonator_step(state: ResonatorState, z, books: Codebooks, order: Sequence[str] = FACTORS):
    """One asynchronous sweep; each factor update sees the freshest estimates.

    Update for factor F with codebook M:  F <- g(M M^dagger (z * conj(others))).
    """
    z = np.asarray(z, dtype=complex)
    _check(z, books)
    est = {"h": state.est_h, "v": state.est_v, "o": state.est_o}
    cb = {"h": books.H, "v": books.V, "o": books.O}
    for f in order:
        a, b = (g for g in FACTORS if g != f)
        unbound = z * np.conj(est[a]) * np.conj(est[b])
        est[f] = hdcore.normalize(cb[f].project(unbound))
    return replace(
        state, est_h=est["h"], est_v=est["v"], est_o=est["o"], iteration=state.iteration + 1
    )


def confidence(codebook: Codebook, estimate) -> float:
    """(a - b) / a with a, b the two largest |similarity| values against the codebook."""
    mags = np.abs(codebook.similarities(np.asarray(estimate)))
    if len(mags) == 1:
        return 1.0 if mags[0] > 0 else 0.0
    b, a = np.partition(mags, -2)[-2:]
    if a <= 0:
        return 0.0
    return float(min(max((a - b) / a, 0.0), 1.0))


def confidences(state: ResonatorState, books: Codebooks) -> tuple[float, float, float]:
    return tuple(confidence(cb, e) for cb, e in zip(books, state.estimates()))


def fixed_point_distance(prev: ResonatorState, cur: ResonatorState) -> float:
    """Mean absolute component difference over the three concatenated estimates."""
    total = 0.0
    count = 0
    for p, c in zip(prev.estimates(), cur.estimates()):
        total += np.abs(p - c).sum()
        count += p.size
    return float(total / count)


def decode(estimate, codebook: Codebook) -> tuple[int, float]:
    """Index of the largest |similarity| (lowest index on ties) and its value."""
    if len(codebook) == 0:
        raise ValueError("cannot decode against an empty codebook")
    mags = np.abs(codebook.similarities(np.asarray(estimate)))
    i = int(np.argmax(mags))
    return i, float(mags[i])


def initial_state(dim: int, rng: np.random.Generator) -> ResonatorState:
    return ResonatorState(
        hdcore.random_phasor(dim, rng), hdcore.random_phasor(dim, rng), hdcore.random_phasor(dim, rng)
    )


def run(
    z,
    books: Codebooks,
    criterion: StoppingCriterion,
    rng: np.random.Generator,
    order: Sequence[str] = FACTORS,
    record_trace: bool = False,
) -> FactorizationResult:
    """Factorize ``z`` from a random initial state.

    Stops on the first sweep that meets ``criterion`` or after
    ``criterion.max_iters`` sweeps. With ``record_trace`` the result carries
    ``(t, conf_h, conf_v, conf_o, distance)`` rows, one per sweep.
    """
    z = np.asarray(z, dtype=complex)
    _check(z, books)
    state = initial_state(z.shape[0], rng)
    converged = False
    trace = []
    for _ in range(criterion.max_iters):
        new = resonator_step(state, z, books, order)
        dist = fixed_point_distance(state, new)
        state = new
        conf = None
        if criterion.kind == CONFIDENCE or record_trace:
            conf = confidences(state, books)
        if record_trace:
            trace.append((state.iteration, *conf, dist))
        if criterion.kind == FIXED_POINT and dist < criterion.epsilon:
            converged = True
            break
        if criterion.kind == CONFIDENCE and min(conf) >= criterion.conf_threshold:
            converged = True
            break
    xi, _ = decode(state.est_h, books.H)
    yi, _ = decode(state.est_v, books.V)
    ki, _ = decode(state.est_o, books.O)
    return FactorizationResult(
        xi,
        yi,
        ki,
        converged,
        state.iteration,
        confidences(state, books),
        state.est_h * state.est_v * state.est_o,
        tuple(trace),
    )


def brute_force(z, books: Codebooks) -> tuple[int, int, int]:
    """Exhaustive argmax of |<h(x) v(y) o(k), z>| over every triple."""
    z = np.asarray(z, dtype=complex)
    best, arg = -1.0, None
    hc = books.H.vectors.conj()
    vc = books.V.vectors.conj()
    for k in range(len(books.O)):
        u = z * books.O[k].conj()
        scores = np.abs((hc * u) @ vc.T)  # [x, y]
        x, y = np.unravel_index(int(np.argmax(scores)), scores.shape)
        if scores[x, y] > best:
            best, arg = scores[x, y], (int(x), int(y), k)
    return arg


def write_trace(path, result: FactorizationResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "conf_h", "conf_v", "conf_o", "fixed_point_distance"])
        for row in result.trace:
            w.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
