"""Smooth even frequency cut-offs.

`chi` vanishes for |xi| <= 1/2 and equals 1 for |xi| >= 1, so on the integer
lattice it is simply the indicator of xi != 0; `chi0` vanishes for |xi| <= 1
and equals 1 for |xi| >= 2.  The transition uses the standard exponential
mollifier f(r) = e^{-1/r} / (e^{-1/r} + e^{-1/(1-r)}), which has all
derivatives vanishing at the junctions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["chi", "chi0", "CutoffPair", "smoothstep"]


def smoothstep(r: np.ndarray) -> np.ndarray:
    """C-infinity transition: 0 for r <= 0, 1 for r >= 1, strictly monotone between."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r >= 1.0] = 1.0
    mid = (r > 0.0) & (r < 1.0)
    if np.any(mid):
        rm = r[mid]
        a = np.exp(-1.0 / rm)
        b = np.exp(-1.0 / (1.0 - rm))
        out[mid] = a / (a + b)
    return out


def chi(xi) -> np.ndarray:
    """Even cut-off: 0 for |xi| <= 1/2, 1 for |xi| >= 1."""
    r = 2.0 * np.abs(np.asarray(xi, dtype=float)) - 1.0
    return smoothstep(r)


def chi0(xi) -> np.ndarray:
    """Even cut-off: 0 for |xi| <= 1, 1 for |xi| >= 2."""
    r = np.abs(np.asarray(xi, dtype=float)) - 1.0
    return smoothstep(r)


@dataclass(frozen=True)
class CutoffPair:
    """The two cut-offs used by the calculus and the homological solves."""

    chi: callable = chi
    chi0: callable = chi0
