"""Augmented correlation estimates built from coarray lag averaging.

Each lag of the difference coarray is estimated by averaging the products
``x[p] * conj(x[q])`` over every sensor pair with ``p - q`` equal to that lag
and over every snapshot. The lag estimates are then laid out as a Hermitian
Toeplitz matrix (linear arrays) or a Hermitian block-Toeplitz matrix with
Toeplitz blocks (planar arrays) of a virtual uniform array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.linalg import toeplitz

from .geometry import LinearArrayGeometry, PlanarArrayGeometry, difference_coarray
from .simulate import SnapshotSet


class CoarrayError(ValueError):
    """A requested lag is not achieved by any sensor pair."""


@dataclass(frozen=True)
class CorrelationEstimate:
    matrix: np.ndarray
    construction: str
    lag_counts: Dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _as_array(data):
    if isinstance(data, SnapshotSet):
        return data.data
    return np.atleast_2d(np.asarray(data))


def _positions(geom):
    if isinstance(geom, LinearArrayGeometry):
        return geom.positions
    return tuple(int(p) for p in geom)


def default_lag_count(geom) -> int:
    """Default virtual array length along one axis.

    Linear arrays use the whole contiguous coarray segment; planar arrays use
    ``m_tilde + 1``.
    """
    if isinstance(geom, PlanarArrayGeometry):
        return geom.virtual_size
    return difference_coarray(_positions(geom)).contiguous_len


def sample_correlation(data) -> np.ndarray:
    """Sample correlation ``(1/Q) sum_q x_q x_q^H`` over physical sensors."""
    X = _as_array(data)
    return X.T @ X.conj() / X.shape[0]


def lag_estimates(data, geom, L_c=None, *, return_counts=False):
    """Unbiased coarray lag estimates ``r[0..L_c-1]`` for a linear array.

    Args:
        data: a :class:`SnapshotSet` or a ``(Q, n_sensors)`` array.
        geom: a :class:`LinearArrayGeometry` or a sequence of integer positions
            matching the data columns.
        L_c: number of lags. Defaults to the contiguous coarray length.
        return_counts: also return ``{lag: Q * weight}``.

    Raises:
        CoarrayError: if a lag below ``L_c`` has no sensor pair.
    """
    X = _as_array(data)
    pos = np.asarray(_positions(geom))
    if X.shape[1] != pos.size:
        raise ValueError(f"data has {X.shape[1]} sensors, geometry has {pos.size}")
    if L_c is None:
        L_c = default_lag_count(pos)
    S = sample_correlation(X)
    diff = pos[:, None] - pos[None, :]
    r = np.empty(L_c, dtype=complex)
    counts = {}
    for lag in range(L_c):
        mask = diff == lag
        w = int(mask.sum())
        if w == 0:
            raise CoarrayError(
                f"lag {lag} is missing from the coarray; the contiguous segment "
                f"has length {default_lag_count(pos)}"
            )
        r[lag] = S[mask].mean()
        counts[lag] = w * X.shape[0]
    r[0] = r[0].real
    if return_counts:
        return r, counts
    return r


def toeplitz_correlation(r, lag_counts=None) -> CorrelationEstimate:
    """Hermitian Toeplitz matrix with ``T[a, b] = r[a - b]`` for ``a >= b``."""
    r = np.asarray(r, dtype=complex).ravel()
    if r.size == 0:
        raise ValueError("lag sequence must be nonempty")
    c = r.copy()
    c[0] = c[0].real
    T = toeplitz(c, c.conj())
    return CorrelationEstimate(T, "linear-toeplitz", dict(lag_counts or {}))


def linear_correlation(data, geom, L_c=None) -> CorrelationEstimate:
    r, counts = lag_estimates(data, geom, L_c, return_counts=True)
    return toeplitz_correlation(r, counts)


def planar_lag_estimates(data, geom: PlanarArrayGeometry, m_tilde=None):
    """2D lag estimates on the square ``[-m_tilde, m_tilde]^2``.

    Returns ``(r, counts)`` where ``r[lx + m, ly + m]`` estimates lag
    ``(lx, ly)``. Lags in the half plane ``lx > 0 or (lx == 0 and ly >= 0)``
    are averaged from pairs; the rest are their conjugates.
    """
    X = _as_array(data)
    m = geom.m_tilde if m_tilde is None else m_tilde
    p = np.asarray(geom.positions)
    S = sample_correlation(X)
    dx = (p[:, 0][:, None] - p[:, 0][None, :]).ravel()
    dy = (p[:, 1][:, None] - p[:, 1][None, :]).ravel()
    s = S.ravel()
    keep = (np.abs(dx) <= m) & (np.abs(dy) <= m) & ((dx > 0) | ((dx == 0) & (dy >= 0)))
    n = 2 * m + 1
    flat = (dx[keep] + m) * n + (dy[keep] + m)
    sums = np.bincount(flat, weights=s[keep].real, minlength=n * n) + 1j * np.bincount(
        flat, weights=s[keep].imag, minlength=n * n
    )
    cnt = np.bincount(flat, minlength=n * n)
    r = np.zeros(n * n, dtype=complex)
    half = np.zeros(n * n, dtype=bool)
    ix, iy = np.divmod(np.arange(n * n), n)
    lx, ly = ix - m, iy - m
    half[(lx > 0) | ((lx == 0) & (ly >= 0))] = True
    missing = half & (cnt == 0)
    if missing.any():
        k = int(np.flatnonzero(missing)[0])
        raise CoarrayError(f"2D lag ({lx[k]}, {ly[k]}) is missing from the coarray")
    r[half] = sums[half] / cnt[half]
    r = r.reshape(n, n)
    # fill the other half plane by conjugate symmetry
    mirror = ~half.reshape(n, n)
    r[mirror] = np.conj(r[::-1, ::-1][mirror])
    r[m, m] = r[m, m].real
    Q = X.shape[0]
    counts = {
        (int(a), int(b)): int(c) * Q
        for a, b, c, h in zip(lx, ly, cnt, half)
        if h
    }
    return r, counts


def planar_block_correlation(data, geom: PlanarArrayGeometry) -> CorrelationEstimate:
    """Block-Toeplitz-Toeplitz-block correlation of the virtual URA.

    The result has size ``(m_tilde + 1)**2`` and is indexed in ``vec()`` order
    (x-index outer, y-index inner).
    """
    m = geom.m_tilde
    r, counts = planar_lag_estimates(data, geom, m)
    L = m + 1
    ix, iy = np.divmod(np.arange(L * L), L)
    R = r[(ix[:, None] - ix[None, :]) + m, (iy[:, None] - iy[None, :]) + m]
    return CorrelationEstimate(R, "planar-block", counts)


def _line_data(X, geom: PlanarArrayGeometry, axis, line):
    """Columns of ``X`` for sensors on one row (axis x) or column (axis y)."""
    p = np.asarray(geom.positions)
    if axis == "x":
        sel = np.flatnonzero(p[:, 1] == line)
        coords = p[sel, 0]
    else:
        sel = np.flatnonzero(p[:, 0] == line)
        coords = p[sel, 1]
    order = np.argsort(coords)
    return X[:, sel[order]], coords[order]


def axis_averaged_correlation(
    data, geom: PlanarArrayGeometry, axis: str, L_c=None, rows="all"
) -> CorrelationEstimate:
    """Averaged linear Toeplitz correlation along one axis of a SIRNA/SIRCA.

    With ``axis="x"`` every row of sensors is treated as a copy of the
    underlying linear array, its Toeplitz correlation estimated, and the
    per-row matrices averaged; ``axis="y"`` does the same over columns.

    Args:
        rows: ``"all"`` averages over every occupied row/column. ``"subarray"``
            uses only the lines lying on the long-span subarray (``N`` lines
            for a SIRNA, ``2M`` for a SIRCA).
    """
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    X = _as_array(data)
    if L_c is None:
        L_c = geom.virtual_size
    if rows == "all":
        lines = geom.beta
    elif rows == "subarray":
        lines = geom.subarray_rows()
    else:
        raise ValueError(f"rows must be 'all' or 'subarray', got {rows!r}")
    acc = np.zeros((L_c, L_c), dtype=complex)
    counts: Dict[int, int] = {}
    for line in lines:
        Xl, coords = _line_data(X, geom, axis, line)
        est = linear_correlation(Xl, coords, L_c)
        acc += est.matrix
        for k, v in est.lag_counts.items():
            counts[k] = counts.get(k, 0) + v
    acc /= len(lines)
    tag = "row-averaged" if axis == "x" else "column-averaged"
    return CorrelationEstimate(acc, tag, counts)
