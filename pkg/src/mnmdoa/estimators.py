"""Subspace direction-of-arrival estimators: MUSIC and the minimum norm method."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional, Tuple

import numpy as np

from .correlation import CorrelationEstimate, axis_averaged_correlation, planar_block_correlation

VALUE_CAP = 1e15
GRID_STEP_1D = 1e-3
GRID_STEP_2D = 5e-3


class DegenerateConstraintError(ValueError):
    """The first virtual element lies (numerically) in the signal subspace."""


@dataclass(frozen=True)
class EigenBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    P: int

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    @property
    def signal(self) -> np.ndarray:
        return self.eigenvectors[:, : self.P]

    @property
    def noise(self) -> np.ndarray:
        return self.eigenvectors[:, self.P :]

    def with_sources(self, P: int) -> "EigenBasis":
        return EigenBasis(self.eigenvalues, self.eigenvectors, P)


@dataclass
class Peak:
    location: object  # float (1D) or (u_x, u_y)
    value: float
    index: object


@dataclass
class Pseudospectrum:
    """Pseudospectrum samples on a 1D grid or a rectangular 2D grid.

    For 2D spectra ``values[a, b]`` is evaluated at ``(grid[0][a], grid[1][b])``.
    """

    grid: object
    values: np.ndarray
    method: str
    peaks: List[Peak] = field(default_factory=list)
    short: bool = False

    @property
    def ndim(self) -> int:
        return self.values.ndim


def _matrix(R):
    return R.matrix if isinstance(R, CorrelationEstimate) else np.asarray(R)


def hermitian_eig(R, P: int = 0) -> EigenBasis:
    """Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.

    Raises:
        ValueError: if ``R`` is not Hermitian to within ``1e-12 * ||R||_F``.
    """
    A = _matrix(R)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("correlation matrix must be square")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise ValueError("correlation matrix is not Hermitian")
    w, V = np.linalg.eigh(A)
    order = np.argsort(-w, kind="stable")
    if not 0 <= P <= w.size:
        raise ValueError(f"source count P={P} outside [0, {w.size}]")
    return EigenBasis(w[order], V[:, order], P)


def min_norm_vector(basis: EigenBasis) -> np.ndarray:
    """Minimum-norm noise-subspace vector with first element 1.

    ``d = E_n c* / ||c||^2`` where ``c^T`` is the first row of ``E_n``.
    """
    if basis.P >= basis.dimension:
        raise ValueError("need at least one noise eigenvector")
    En = basis.noise
    c = En[0, :]
    cc = np.vdot(c, c).real
    if cc < 1e-12:
        raise DegenerateConstraintError(
            "first virtual element lies in the signal subspace (||c||^2 = %.3g)" % cc
        )
    d = En @ c.conj() / cc
    d[0] = 1.0
    return d


def min_norm_vector_signal(basis: EigenBasis) -> np.ndarray:
    """Signal-subspace form ``d = [1; -G g* / (1 - ||g||^2)]``.

    ``g^T`` is the first row of ``E_s`` and ``G`` its remaining rows.
    """
    Es = basis.signal
    g = Es[0, :]
    G = Es[1:, :]
    denom = 1.0 - np.vdot(g, g).real
    if denom < 1e-12:
        raise DegenerateConstraintError("first virtual element lies in the signal subspace")
    return np.concatenate(([1.0 + 0j], -G @ g.conj() / denom))


def default_grid(step: float = GRID_STEP_1D) -> np.ndarray:
    n = int(round(2.0 / step))
    return np.linspace(-1.0, 1.0, n + 1)


def _manifold(grid, L):
    return np.exp(1j * np.pi * np.outer(np.asarray(grid, dtype=float), np.arange(L)))


def _invert(den):
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = 1.0 / den
    out[~(den > 1.0 / VALUE_CAP)] = VALUE_CAP
    return out


def mnm_spectrum_1d(d, grid=None, P: Optional[int] = None) -> Pseudospectrum:
    """``P_MN(u) = |v(u)^H d|^-2`` on the virtual ULA of length ``len(d)``."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    d = np.asarray(d)
    den = np.abs(_manifold(grid, d.size).conj() @ d) ** 2
    spec = Pseudospectrum(grid, _invert(den), "mnm")
    if P is not None:
        find_peaks(spec, P)
    return spec


def music_spectrum_1d(basis: EigenBasis, grid=None, P: Optional[int] = None) -> Pseudospectrum:
    """``P_MUSIC(u) = (v(u)^H E_n E_n^H v(u))^-1``."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    proj = _manifold(grid, basis.dimension).conj() @ basis.noise
    den = np.sum(np.abs(proj) ** 2, axis=1)
    spec = Pseudospectrum(grid, _invert(den), "music")
    if P is not None:
        find_peaks(spec, P)
    return spec


def _grid_2d(grid):
    if grid is None:
        g = default_grid(GRID_STEP_2D)
        return g, g
    if isinstance(grid, tuple) and len(grid) == 2:
        return np.asarray(grid[0], dtype=float), np.asarray(grid[1], dtype=float)
    g = np.asarray(grid, dtype=float)
    return g, g


def _planar_response(grid, m_tilde, vecs):
    """``|(w_x (x) w_y)^H vecs|^2`` summed over columns of ``vecs``.

    Uses ``(w_x (x) w_y)^H D`` = ``w_x^H reshape(D) conj(w_y)`` to avoid
    building every Kronecker vector.
    """
    gx, gy = grid
    L = m_tilde + 1
    if vecs.shape[0] != L * L:
        raise ValueError(f"vector dimension {vecs.shape[0]} does not match (m_tilde+1)^2 = {L * L}")
    Wx = _manifold(gx, L).conj()
    Wy = _manifold(gy, L).conj()
    out = np.zeros((gx.size, gy.size))
    for k in range(vecs.shape[1]):
        D = vecs[:, k].reshape(L, L)  # [x-index, y-index]
        out += np.abs(Wx @ D @ Wy.T) ** 2
    return out


def mnm_spectrum_2d(d, m_tilde: int, grid=None, P: Optional[int] = None) -> Pseudospectrum:
    """Bivariate MNM pseudospectrum ``|v(u_x, u_y)^H d|^-2``."""
    g = _grid_2d(grid)
    d = np.asarray(d).reshape(-1, 1)
    spec = Pseudospectrum(g, _invert(_planar_response(g, m_tilde, d)), "mnm")
    if P is not None:
        find_peaks(spec, P)
    return spec


def music_spectrum_2d(basis: EigenBasis, m_tilde: int, grid=None, P: Optional[int] = None) -> Pseudospectrum:
    """Bivariate MUSIC pseudospectrum with the noise projector ``E_n E_n^H``."""
    g = _grid_2d(grid)
    spec = Pseudospectrum(g, _invert(_planar_response(g, m_tilde, basis.noise)), "music")
    if P is not None:
        find_peaks(spec, P)
    return spec


def music_values_2d(basis: EigenBasis, m_tilde: int, points) -> np.ndarray:
    """MUSIC pseudospectrum at arbitrary ``(u_x, u_y)`` points."""
    L = m_tilde + 1
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    k = np.arange(L)
    wx = np.exp(1j * np.pi * np.outer(pts[:, 0], k))
    wy = np.exp(1j * np.pi * np.outer(pts[:, 1], k))
    V = (wx[:, :, None] * wy[:, None, :]).reshape(len(pts), L * L)
    den = np.sum(np.abs(V.conj() @ basis.noise) ** 2, axis=1)
    return _invert(den)


def _parabolic_offset(a, b, c):
    den = a - 2.0 * b + c
    if not np.isfinite(den) or den >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def _peaks_1d(values):
    """Interior plateau maxima; returns leftmost index of each plateau."""
    v = values
    n = v.size
    out = []
    i = 1
    while i < n - 1:
        if v[i] > v[i - 1]:
            j = i
            while j + 1 < n and v[j + 1] == v[i]:
                j += 1
            if j + 1 < n and v[j + 1] < v[i]:
                out.append(i)
            i = j + 1
        else:
            i += 1
    return out


def _peaks_2d(values, mask=None):
    v = values
    c = v[1:-1, 1:-1]
    ok = np.ones_like(c, dtype=bool)
    na, nb = v.shape
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            if da == 0 and db == 0:
                continue
            nb_ = v[1 + da : na - 1 + da, 1 + db : nb - 1 + db]
            if (da, db) < (0, 0):
                ok &= c > nb_
            else:
                ok &= c >= nb_
    if mask is not None:
        ok &= mask[1:-1, 1:-1]
    idx = np.argwhere(ok) + 1
    return [tuple(int(t) for t in k) for k in idx]


def find_peaks(spectrum: Pseudospectrum, P: int) -> List[Peak]:
    """Top-``P`` local maxima refined by parabolic interpolation of log values.

    Ties in value are broken by the smaller grid index. If fewer than ``P``
    maxima exist, ``spectrum.short`` is set. Peaks of 2D spectra are only
    sought inside the unit disk ``u_x^2 + u_y^2 <= 1``.
    """
    v = spectrum.values
    logv = np.log(v)
    # values equal to ~1e-10 relative count as ties
    q = np.round(logv, 10)
    peaks: List[Peak] = []
    if v.ndim == 1:
        g = spectrum.grid
        step = g[1] - g[0] if g.size > 1 else 0.0
        for i in _peaks_1d(q):
            loc = g[i]
            if v[i] < VALUE_CAP and q[i + 1] < q[i]:
                loc = g[i] + step * _parabolic_offset(logv[i - 1], logv[i], logv[i + 1])
            peaks.append(Peak(float(loc), float(v[i]), i))
    else:
        gx, gy = spectrum.grid
        inside = (gx[:, None] ** 2 + gy[None, :] ** 2) <= 1.0 + 1e-12
        sx = gx[1] - gx[0]
        sy = gy[1] - gy[0]
        for a, b in _peaks_2d(q, inside):
            lx, ly = gx[a], gy[b]
            if v[a, b] < VALUE_CAP:
                lx += sx * _parabolic_offset(logv[a - 1, b], logv[a, b], logv[a + 1, b])
                ly += sy * _parabolic_offset(logv[a, b - 1], logv[a, b], logv[a, b + 1])
            peaks.append(Peak((float(lx), float(ly)), float(v[a, b]), (a, b)))
    # stable sort keeps the index order for equal values
    peaks.sort(key=lambda p: -p.value)
    spectrum.peaks = peaks[:P]
    spectrum.short = len(spectrum.peaks) < P
    return spectrum.peaks


def peak_locations(spectrum: Pseudospectrum) -> np.ndarray:
    return np.array([p.location for p in spectrum.peaks], dtype=float)


def estimate_1d(R, P: int, method: str = "mnm", grid=None) -> Pseudospectrum:
    """Full 1D pipeline: eigendecomposition, spectrum, top-``P`` peaks."""
    basis = hermitian_eig(R, P)
    if method == "mnm":
        return mnm_spectrum_1d(min_norm_vector(basis), grid, P)
    if method == "music":
        return music_spectrum_1d(basis, grid, P)
    raise ValueError(f"unknown method {method!r}")


def estimate_2d(R, P: int, m_tilde: int, method: str = "mnm", grid=None) -> Pseudospectrum:
    """Direct 2D pipeline on the block correlation."""
    basis = hermitian_eig(R, P)
    if method == "mnm":
        return mnm_spectrum_2d(min_norm_vector(basis), m_tilde, grid, P)
    if method == "music":
        return music_spectrum_2d(basis, m_tilde, grid, P)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class PairingResult:
    """Outcome of the linear planar method."""

    pairs: List[Tuple[float, float]]
    u_x: np.ndarray
    u_y: np.ndarray
    candidates: List[Tuple[float, float]]
    scores: np.ndarray
    short: bool


def _pad(locs, P):
    locs = list(locs)
    if not locs:
        return locs
    i = 0
    while len(locs) < P:
        locs.append(locs[i])
        i += 1
    return locs


def pair_candidates(u_x, u_y, basis: EigenBasis, m_tilde: int, P: int):
    """Scores every ``(u_x, u_y)`` combination with the 2D MUSIC pseudospectrum
    and keeps the ``P`` largest distinct pairs."""
    cands = list(dict.fromkeys(product([float(a) for a in u_x], [float(b) for b in u_y])))
    if not cands:
        return [], cands, np.empty(0)
    pts = np.clip(np.asarray(cands), -1.0, 1.0)
    scores = music_values_2d(basis, m_tilde, pts)
    order = np.argsort(-scores, kind="stable")[:P]
    return [cands[k] for k in order], cands, scores


def linear_planar_estimate(
    data, geom, P: int, grid=None, method: str = "mnm", rows: str = "all", R_block=None
) -> PairingResult:
    """Linear MNM/MUSIC for SIRNA/SIRCA with pairing of the 1D estimates.

    The row- and column-averaged correlations give ``P`` estimates of ``u_x``
    and of ``u_y``; the ``P**2`` combinations are ranked by 2D MUSIC on the
    block correlation's noise subspace.
    """
    if P < 1:
        raise ValueError("P must be at least 1")
    grid = default_grid() if grid is None else grid
    m = geom.m_tilde
    locs = []
    short = False
    for axis in ("x", "y"):
        R = axis_averaged_correlation(data, geom, axis, rows=rows)
        spec = estimate_1d(R, P, method, grid)
        short |= spec.short
        locs.append(_pad(peak_locations(spec).tolist(), P))
    if R_block is None:
        R_block = planar_block_correlation(data, geom)
    basis = hermitian_eig(R_block, P)
    pairs, cands, scores = pair_candidates(locs[0], locs[1], basis, m, P)
    return PairingResult(pairs, np.array(locs[0]), np.array(locs[1]), cands, scores, short)
