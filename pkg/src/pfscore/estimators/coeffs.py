"""Coefficients of the limiting shrinkage score estimate.

In the large-N limit the score estimate at time k is a weighted sum of
smoothed increment expectations, one per (increment time u, conditioning
horizon s) pair with u <= s <= k.  The weights admit a closed form --
``lam**(s-u)`` on the newest horizon s = k and ``(1-lam)*lam**(s-u)``
otherwise -- which the forward recursion below reproduces; the agreement is
asserted exactly in the tests.
"""

from __future__ import annotations

import numpy as np


def shrinkage_coeffs(lam: float, T: int):
    """Return (recursed, closed_form) coefficient arrays of shape (T+1, T+1, T+1).

    Entry ``[k, u, s]`` is the weight on the expectation of the time-u
    increment under the time-s conditioning, valid for 1 <= u <= s <= k;
    other entries are zero.  The recursion propagates the expansion of the
    score estimate forward in k, substituting the expansions of all earlier
    estimates; intended for test-scale T (cost grows as T^4).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must be in (0, 1)")
    if T < 1:
        raise ValueError("T must be >= 1")

    closed = np.zeros((T + 1, T + 1, T + 1))
    for k in range(1, T + 1):
        for u in range(1, k + 1):
            for s in range(u, k + 1):
                closed[k, u, s] = lam ** (s - u) if s == k else (1.0 - lam) * lam ** (s - u)

    rec = np.zeros((T + 1, T + 1, T + 1))
    rec[1, 1, 1] = 1.0
    for t in range(2, T + 1):
        for u in range(1, t + 1):
            rec[t, u, t] = lam ** (t - u)
        for u in range(1, t):
            for s in range(u, t):
                acc = 0.0
                for k in range(s, t):
                    acc += (1.0 - lam) * lam ** (t - k - 1) * rec[k, u, s]
                rec[t, u, s] = acc
    return rec, closed
