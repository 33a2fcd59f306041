"""Ghost-node augmentation of the affine update.

Private signals ``b`` over a box state space are rewritten as edge weights to
``2d`` shared ghost nodes, one holding the (scaled) upper bound and one the
lower bound of each dimension. The augmented matrix is::

    [[(I - L) A,  L W],
     [0,          I  ]]

and ghost states are the rows of ``C``. ``C`` carries a factor ``d`` and ``W``
a factor ``1/d`` so that ``W`` rows sum to one while ``W @ C == b``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .graph_core import StochasticMatrix, as_array


class AugmentationError(ValueError):
    pass


def as_bounds(bounds, d: int | None = None) -> np.ndarray:
    """Coerce bounds to a ``(d, 2)`` array of ``(lower, upper)`` rows."""
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    if d is not None and arr.shape[0] == 1 and d > 1:
        arr = np.repeat(arr, d, axis=0)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise AugmentationError(f"bounds must be (d, 2), got shape {arr.shape}")
    if np.any(arr[:, 1] < arr[:, 0]):
        raise AugmentationError("upper bound below lower bound")
    return arr


def ghost_states(bounds) -> np.ndarray:
    """The ``2d x d`` ghost block ``C``."""
    b = as_bounds(bounds)
    d = b.shape[0]
    c = np.zeros((2 * d, d))
    for l in range(d):
        c[2 * l, l] = d * b[l, 1]
        c[2 * l + 1, l] = d * b[l, 0]
    return c


def signal_weights(b, bounds) -> np.ndarray:
    """Return ``W`` (``N x 2d``) with ``W @ ghost_states(bounds) == b``."""
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    n, d = b.shape
    bnd = as_bounds(bounds, d)
    lo, hi = bnd[:, 0], bnd[:, 1]
    if np.any(b < lo - 1e-12) or np.any(b > hi + 1e-12):
        i, l = np.argwhere((b < lo - 1e-12) | (b > hi + 1e-12))[0]
        raise AugmentationError(
            f"signal b[{i}, {l}] = {b[i, l]!r} lies outside [{lo[l]}, {hi[l]}]"
        )
    width = hi - lo
    upper = np.empty_like(b)
    for l in range(d):
        if width[l] > 0:
            upper[:, l] = np.clip((b[:, l] - lo[l]) / width[l], 0.0, 1.0)
        else:
            if np.any(b[:, l] != lo[l]):
                raise AugmentationError(
                    f"dimension {l} is degenerate at {lo[l]} but a signal differs"
                )
            upper[:, l] = 1.0
    w = np.empty((n, 2 * d))
    w[:, 0::2] = upper
    w[:, 1::2] = 1.0 - upper
    return w / d


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    a_tilde: StochasticMatrix
    c_block: np.ndarray
    w_block: np.ndarray
    lam: np.ndarray
    bounds: np.ndarray

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def d(self) -> int:
        return self.c_block.shape[1]

    @property
    def unconstrained(self) -> np.ndarray:
        """Nodes with zero signal weight; their ``W`` rows are zero."""
        return self.lam == 0

    @property
    def transient(self) -> np.ndarray:
        """The ``(I - L) A`` block."""
        return self.a_tilde.entries[: self.n, : self.n]

    @property
    def exit_block(self) -> np.ndarray:
        """The ``L W`` block."""
        return self.a_tilde.entries[: self.n, self.n :]

    def initial_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n, -1)
        return np.vstack([x, self.c_block])

    def to_envelope(self) -> dict:
        env = self.a_tilde.to_envelope(self.d)
        env["blocks"] = {
            "original": [0, self.n],
            "ghost": [self.n, self.n + 2 * self.d],
        }
        env["lambda"] = self.lam.tolist()
        env["bounds"] = self.bounds.tolist()
        env["c_block"] = self.c_block.tolist()
        return env

    def to_json(self) -> str:
        return json.dumps(self.to_envelope())

    @classmethod
    def from_envelope(cls, env: dict) -> "AugmentedSystem":
        a_tilde = StochasticMatrix(env["entries"], "row_stochastic")
        n0, n1 = env["blocks"]["original"]
        lam = np.asarray(env["lambda"], dtype=float)
        if n1 - n0 != lam.shape[0]:
            raise AugmentationError("lambda length does not match the original block")
        arr = a_tilde.entries
        w = np.zeros((n1, arr.shape[0] - n1))
        pos = lam > 0
        w[pos] = arr[:n1, n1:][pos] / lam[pos, None]
        return cls(
            a_tilde=a_tilde,
            c_block=np.asarray(env["c_block"], dtype=float),
            w_block=w,
            lam=lam,
            bounds=as_bounds(env["bounds"]),
        )


def augment(a, lam, b, bounds) -> AugmentedSystem:
    a = as_array(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise AugmentationError(f"A must be square, got {a.shape}")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,)).copy()
    if np.any(lam < 0) or np.any(lam >= 1):
        raise AugmentationError("every lambda must lie in [0, 1)")
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if b.shape[0] != n:
        raise AugmentationError(f"b has {b.shape[0]} rows for {n} agents")
    d = b.shape[1]
    bnd = as_bounds(bounds, d)
    w = signal_weights(b, bnd)
    w[lam == 0] = 0.0
    c = ghost_states(bnd)

    size = n + 2 * d
    a_tilde = np.zeros((size, size))
    a_tilde[:n, :n] = (1.0 - lam)[:, None] * a
    a_tilde[:n, n:] = lam[:, None] * w
    a_tilde[n:, n:] = np.eye(2 * d)
    return AugmentedSystem(
        a_tilde=StochasticMatrix(a_tilde, "row_stochastic"),
        c_block=c,
        w_block=w,
        lam=lam,
        bounds=bnd,
    )


class Deaugmented(NamedTuple):
    a: np.ndarray
    lam: np.ndarray
    b: np.ndarray
    unconstrained: np.ndarray


def deaugment(sys: AugmentedSystem) -> Deaugmented:
    """Recover ``(A, lambda, b)``; ``b`` rows of signal-free nodes are NaN."""
    arr = sys.a_tilde.entries
    n = sys.n
    ghosts = arr[n:]
    expected = np.zeros_like(ghosts)
    expected[:, n:] = np.eye(ghosts.shape[0])
    if not np.array_equal(ghosts, expected):
        raise AugmentationError("ghost rows of the augmented matrix are not identity rows")
    top_left = arr[:n, :n]
    top_right = arr[:n, n:]
    lam = 1.0 - top_left.sum(axis=1)
    lam[np.abs(lam) < 1e-15] = 0.0
    if np.any(lam >= 1):
        raise AugmentationError("a node has no social weight; A cannot be recovered")
    a = top_left / (1.0 - lam)[:, None]
    free = lam == 0
    b = np.full((n, sys.d), np.nan)
    live = ~free
    w = top_right[live] / lam[live, None]
    b[live] = w @ sys.c_block
    return Deaugmented(a=a, lam=lam, b=b, unconstrained=free)


def step_augmented(sys: AugmentedSystem, x_tilde) -> np.ndarray:
    x_tilde = np.asarray(x_tilde, dtype=float)
    if x_tilde.ndim == 1:
        x_tilde = x_tilde[:, None]
    if x_tilde.shape != (sys.n + 2 * sys.d, sys.d):
        raise AugmentationError(
            f"augmented state must be {(sys.n + 2 * sys.d, sys.d)}, got {x_tilde.shape}"
        )
    if not np.allclose(x_tilde[sys.n :], sys.c_block, rtol=0.0, atol=1e-12):
        raise AugmentationError("ghost rows of the state differ from the ghost block C")
    return sys.a_tilde.entries @ x_tilde
