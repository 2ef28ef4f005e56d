"""Realizability-loss overlay classification.

Pure functions of the per-row values, kept separate from any rendering so
they can be unit-tested directly. A row is painted white where the density
is negative and black where the normalized first moment exceeds one; white
wins when both apply (a negative density makes the normalized moment
meaningless).
"""

from __future__ import annotations

import numpy as np

NORMAL = 0
BLACK = 1  # |phi1| > 1
WHITE = 2  # psi0 < 0


def classify_overlay(psi0, f):
    """Vectorized overlay code per row from (psi0, f)."""
    psi0 = np.asarray(psi0, dtype=float)
    f = np.asarray(f, dtype=float)
    out = np.zeros(np.broadcast(psi0, f).shape, dtype=np.int8)
    out[f > 1.0] = BLACK
    out[psi0 < 0.0] = WHITE
    return out
