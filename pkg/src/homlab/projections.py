"""Projections onto the per-cell dual balls {p : |p diag(a)^{-1}|_F <= r}.

The ball is an axis-aligned ellipsoid whose semiaxis for every column j
(repeated over the m rows) is r * a_j.  The general projection solves
for the Lagrange multiplier nu of

    phi(nu) = sum_ij (p_ij * s_j / (s_j^2 + nu))^2 = 1,    s_j = r * a_j,

by safeguarded Newton iteration; phi is decreasing and convex, so
Newton from nu = 0 increases monotonically toward the root and the
bracket [lo, hi] only catches floating-point stalls.  When all semiaxes
of a cell agree the ellipsoid is a sphere and the projection is the
closed-form radial shrinkage.
"""

from __future__ import annotations

import numpy as np

_NEWTON_MAX = 80
_NEWTON_RTOL = 1e-13


def project_radial(p: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Shrink each cell's (m, d) block onto the sphere of its radius.

    p has shape (m, d, *cells); radii broadcasts over cells.
    """
    nrm = np.sqrt(np.sum(p * p, axis=(0, 1)))
    scale = np.minimum(1.0, radii / np.maximum(nrm, 1e-300))
    return p * scale


def project_ellipsoid(p: np.ndarray, axes: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Project per-cell blocks onto {q : |q diag(axes)^{-1}|_F <= radius}.

    p has shape (m, d, *cells); axes has shape (d, *cells) with positive
    entries.  Cells already inside are returned unchanged.
    """
    s = radius * axes  # semiaxes, (d, *cells)
    ratio = p / s[None]
    inside = np.sum(ratio * ratio, axis=(0, 1)) <= 1.0
    if np.all(inside):
        return p.copy()

    out = p.copy()
    mask = ~inside
    pm = np.moveaxis(p, (0, 1), (-2, -1))[mask]      # (k, m, d)
    sm = np.moveaxis(s, 0, -1)[mask]                 # (k, d)
    s2 = sm[:, None, :] ** 2
    c = pm * pm * s2                                 # (p_ij s_j)^2

    lo = np.zeros(len(pm))
    hi = np.sqrt(c.sum(axis=(1, 2)))  # phi(hi) <= sum c / hi^2 = 1
    nu = lo.copy()
    for _ in range(_NEWTON_MAX):
        denom = s2 + nu[:, None, None]
        phi = (c / denom**2).sum(axis=(1, 2))
        err = phi - 1.0
        if np.all(np.abs(err) <= _NEWTON_RTOL):
            break
        lo = np.where(err >= 0.0, np.maximum(lo, nu), lo)
        hi = np.where(err < 0.0, np.minimum(hi, nu), hi)
        dphi = -2.0 * (c / denom**3).sum(axis=(1, 2))
        cand = nu - err / dphi
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand > hi)
        cand[bad] = 0.5 * (lo[bad] + hi[bad])
        nu = cand

    proj = pm * (s2 / (s2 + nu[:, None, None]))
    # Force strict feasibility against roundoff (dual values must certify).
    nrm = np.sqrt(((proj / sm[:, None, :]) ** 2).sum(axis=(1, 2)))
    proj *= np.minimum(1.0, 1.0 / np.maximum(nrm, 1e-300))[:, None, None]

    view = np.moveaxis(out, (0, 1), (-2, -1))
    view[mask] = proj
    return out
