"""Full-width-at-half-maximum of sampled curves.

Widths are measured between the two half-maximum crossings bracketing
the peak, located by linear interpolation between samples. Periodic
curves are walked on the circle; a curve that never falls below half
its maximum has no crossings and reports the full span with a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HalfWidth:
    width: float
    saturated: bool   # True when the curve never dips below half max
    left: float
    right: float


def fwhm(points, values, periodic=False, period=None):
    """Full width at half maximum of a sampled curve.

    Parameters
    ----------
    points : ndarray
        Increasing sample locations. For periodic curves the first and
        last sample are one period apart and carry equal values.
    values : ndarray
    periodic : bool
    period : float, optional
        Defaults to points[-1] - points[0] for periodic curves.

    Returns
    -------
    HalfWidth
        Width, saturation flag, and the two crossing locations in
        stimulus units, unwrapped around the peak so that right - left
        equals the width even across a periodic seam (nan when saturated).
    """
    s = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float)
    if s.shape != v.shape or s.ndim != 1 or s.size < 3:
        raise ValueError("need matching 1-D arrays of length >= 3")
    if np.any(np.diff(s) <= 0):
        raise ValueError("points must be strictly increasing")
    if periodic:
        if period is None:
            period = s[-1] - s[0]
        if not np.isclose(v[0], v[-1], rtol=1e-6,
                          atol=1e-12 * max(np.max(np.abs(v)), 1e-300)):
            raise ValueError("periodic curve must match at the endpoints")
        s = s[:-1]
        v = v[:-1]
    m = s.size
    peak = int(np.argmax(v))
    half = v[peak] / 2.0
    span = period if periodic else float(points[-1] - points[0])
    if np.min(v) >= half:
        return HalfWidth(width=span, saturated=True,
                         left=float("nan"), right=float("nan"))

    def walk(direction):
        # returns the crossing location unwrapped around the peak
        pos_prev = s[peak]
        idx_prev = peak
        for j in range(1, m + 1):
            idx = idx_prev + direction
            if periodic:
                idx %= m
                step = direction * (s[idx] - s[idx_prev])
                if step <= 0:
                    step += period
            else:
                if idx < 0 or idx >= m:
                    return None
                step = direction * (s[idx] - s[idx_prev])
            pos = pos_prev + direction * step
            if v[idx] < half:
                frac = (half - v[idx_prev]) / (v[idx] - v[idx_prev])
                return pos_prev + frac * (pos - pos_prev)
            pos_prev = pos
            idx_prev = idx
        return None

    left = walk(-1)
    right = walk(+1)
    if left is None or right is None:
        return HalfWidth(width=span, saturated=True,
                         left=float("nan"), right=float("nan"))
    return HalfWidth(width=float(right - left), saturated=False,
                     left=float(left), right=float(right))


def bank_fwhm(bank, neuron=None):
    """FWHM of one neuron's tuning curve (middle neuron by default)."""
    if neuron is None:
        neuron = bank.n_neurons // 2
    return fwhm(bank.grid.points, bank.curves[neuron],
                periodic=bank.grid.periodic)
