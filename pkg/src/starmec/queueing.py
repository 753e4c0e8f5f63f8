"""Per-user FIFO backlog dynamics and the quadratic-candidate accounting
used by the slot controller.

The drift bound below dominates the exact one-slot change of the candidate
function ``0.5 * sum Q^2`` for every nonnegative (Q, S, j):

    (max(Q - S, 0) + j)^2 <= Q^2 + j^2 + S^2 + 2 Q (j - S),

which yields bound = sum_k (j_k^2 + S_k^2) / 2 + Q_k (j_k - S_k).
"""

from __future__ import annotations

import numpy as np


class QueueError(ValueError):
    pass


def step_queue(q, executed, admitted):
    """One-slot backlog update: max(Q - S, 0) + j (elementwise on arrays)."""
    q = np.asarray(q, dtype=float)
    executed = np.asarray(executed, dtype=float)
    admitted = np.asarray(admitted, dtype=float)
    out = np.maximum(q - executed, 0.0) + admitted
    if out.ndim == 0:
        return float(out)
    return out


def lyapunov(q) -> float:
    """Quadratic candidate 0.5 * sum_k Q_k^2 (bits^2)."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise QueueError("backlog must be nonnegative")
    return float(0.5 * np.sum(q ** 2))


def drift_bound(q, executed, admitted) -> float:
    """Upper bound on the one-slot candidate change (bits^2)."""
    q = np.asarray(q, dtype=float)
    executed = np.asarray(executed, dtype=float)
    admitted = np.asarray(admitted, dtype=float)
    return float(np.sum((admitted ** 2 + executed ** 2) / 2.0
                        + q * (admitted - executed)))


def exact_drift(q, executed, admitted) -> float:
    """Realized candidate change for the same slot (test oracle companion)."""
    return lyapunov(step_queue(q, executed, admitted)) - lyapunov(q)


def drift_plus_penalty(q, executed, admitted, energy_j, v: float) -> float:
    """Drift bound plus v times the slot's total energy.

    ``v`` carries bits^2 per joule so the result is reported in bits^2.
    """
    if v < 0:
        raise QueueError("penalty weight must be nonnegative")
    return drift_bound(q, executed, admitted) + v * float(np.sum(energy_j))


def stability_metric(history) -> float:
    """Time-averaged total backlog over recorded slots (bits)."""
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    if hist.size == 0:
        raise QueueError("empty backlog history")
    return float(np.mean(np.sum(hist, axis=1)))


def stability_proxy(history, window: float = 0.2, tolerance: float = 0.1) -> bool:
    """Finite-horizon stability check on a backlog trace.

    Stable when the mean total backlog over the last ``window`` fraction of
    slots exceeds the mean over the middle ``window`` fraction by less than
    ``tolerance`` (relatively).  A drained middle section counts as stable
    only if the tail is drained too.
    """
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    n = hist.shape[0]
    if n < 10:
        raise QueueError("need at least 10 recorded slots")
    totals = np.sum(hist, axis=1)
    mid_lo = int(n * (0.5 - window / 2))
    mid_hi = int(n * (0.5 + window / 2))
    middle = float(np.mean(totals[mid_lo:mid_hi]))
    tail = float(np.mean(totals[int(n * (1 - window)):]))
    if middle == 0.0:
        return tail == 0.0
    return tail < middle * (1.0 + tolerance)
