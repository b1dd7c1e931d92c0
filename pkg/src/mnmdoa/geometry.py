"""Linear and planar sparse array geometries on a half-wavelength grid.

All positions are integers: a sensor at index ``k`` sits at ``z = k * lambda/2``.
"""
from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from math import gcd
from typing import Dict, FrozenSet, Tuple

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid array parameters."""


@dataclass(frozen=True)
class LinearArrayGeometry:
    """A linear array built from two interleaved uniform subarrays.

    Subarray 1 has ``M_e`` sensors spaced ``N`` grid units apart, Subarray 2
    has ``N_e`` sensors spaced ``M`` grid units apart. A full ULA is stored
    with ``M_e = L``, ``N = 1`` and an empty second subarray description
    (``N_e = 1``, ``M = 1``).
    """

    kind: str
    M_e: int
    N: int
    N_e: int
    M: int
    positions: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.positions)

    @property
    def aperture(self) -> int:
        """Aperture in grid units."""
        return self.positions[-1]

    @property
    def equivalent_ula_size(self) -> int:
        """Sensor count of the full ULA with the same aperture."""
        return self.aperture + 1

    def coarray(self) -> "Coarray":
        return difference_coarray(self.positions)


@dataclass(frozen=True)
class PlanarArrayGeometry:
    """A symmetry-imposed rectangular array (SIRNA or SIRCA).

    ``indicator[i, j]`` is 1 when a sensor sits at ``x = i``, ``y = j``. Rows
    and columns of the occupied grid are copies of the underlying linear
    array ``beta``. ``positions`` lists ``(i, j)`` pairs in column-major
    ``vec()`` order: x-index outer, y-index inner.
    """

    kind: str
    M: int
    N: int
    beta: Tuple[int, ...]
    indicator: np.ndarray = field(repr=False, compare=False)
    positions: Tuple[Tuple[int, int], ...]

    @property
    def size(self) -> int:
        return len(self.positions)

    @property
    def aperture(self) -> int:
        """Per-axis aperture in grid units."""
        return self.beta[-1]

    @property
    def equivalent_ula_size(self) -> int:
        return self.aperture + 1

    @property
    def m_tilde(self) -> int:
        """Largest lag of the contiguous virtual URA along each axis."""
        if self.kind == "sirna":
            return (self.N - 1) * self.M
        return self.M * self.N + self.M - 1

    @property
    def virtual_size(self) -> int:
        """Number of virtual sensors along one axis (``m_tilde + 1``)."""
        return self.m_tilde + 1

    def coarray_2d(self) -> "Coarray2D":
        return difference_coarray_2d(self.positions)

    def subarray_rows(self) -> Tuple[int, ...]:
        """Rows on the underlying array's long-span subarray.

        For a SIRNA these are ``{M n : 0 <= n < N}`` and for a SIRCA
        ``{N m : 0 <= m < 2M}``, i.e. ``N`` and ``2M`` rows respectively.
        """
        if self.kind == "sirna":
            return tuple(self.M * n for n in range(self.N))
        return tuple(self.N * m for m in range(2 * self.M))


@dataclass(frozen=True)
class Coarray:
    """Non-negative half of a 1D difference coarray."""

    lags: FrozenSet[int]
    weights: Dict[int, int]
    contiguous_len: int

    def weight(self, lag: int) -> int:
        return self.weights.get(abs(lag), 0)


@dataclass(frozen=True)
class Coarray2D:
    """Full (signed) 2D difference coarray with pair counts."""

    weights: Dict[Tuple[int, int], int]
    contiguous_halfwidth: int

    @property
    def lags(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset(self.weights)


def _check_count(name, value, minimum=2):
    if int(value) != value or value < minimum:
        raise GeometryError(f"{name} must be an integer >= {minimum}, got {value!r}")


def build_coprime_linear(M_e: int, N: int, N_e: int, M: int) -> LinearArrayGeometry:
    """Builds a coprime array from ``M_e`` sensors at spacing ``N`` and ``N_e``
    sensors at spacing ``M``.

    Raises:
        GeometryError: if ``gcd(M, N) != 1`` or a count is below 2.
    """
    _check_count("M_e", M_e)
    _check_count("N_e", N_e)
    _check_count("N", N, 1)
    _check_count("M", M, 1)
    if gcd(M, N) != 1:
        raise GeometryError(
            f"undersampling factors must be coprime: gcd(M={M}, N={N}) = {gcd(M, N)}"
        )
    if N != M + 1:
        warnings.warn(
            f"coprime array with N={N}, M={M} does not satisfy N = M + 1; "
            "this is valid but does not minimize the sensor count",
            stacklevel=2,
        )
    pos = {m * N for m in range(M_e)} | {n * M for n in range(N_e)}
    return LinearArrayGeometry("coprime", M_e, N, N_e, M, tuple(sorted(pos)))


def build_nested_linear(M_e: int, N_e: int) -> LinearArrayGeometry:
    """Builds a nested array: a dense ULA of ``M_e`` sensors plus ``N_e``
    sensors at spacing ``M_e``."""
    _check_count("M_e", M_e)
    _check_count("N_e", N_e)
    M = M_e
    pos = set(range(M_e)) | {n * M for n in range(N_e)}
    return LinearArrayGeometry("nested", M_e, 1, N_e, M, tuple(sorted(pos)))


def build_full_ula(L: int) -> LinearArrayGeometry:
    _check_count("L", L)
    return LinearArrayGeometry("full-ula", L, 1, 1, 1, tuple(range(L)))


def sensor_indicator(geom: LinearArrayGeometry) -> np.ndarray:
    """Returns the binary location sequence ``b[k]`` for ``0 <= k <= aperture``.

    ``b`` is the logical OR of the two subarray sequences.
    """
    length = geom.aperture + 1
    k = np.arange(length)
    b1 = (k % geom.N == 0) & (k // geom.N < geom.M_e)
    if geom.kind == "full-ula":
        return b1.astype(np.int8)
    b2 = (k % geom.M == 0) & (k // geom.M < geom.N_e)
    return (b1 | b2).astype(np.int8)


def _contiguous_len(lags) -> int:
    n = 0
    while n in lags:
        n += 1
    return n


def difference_coarray(positions) -> Coarray:
    """Computes the difference coarray of a set of integer positions.

    Only non-negative lags are kept since the coarray is symmetric. Weights
    count ordered pairs ``(p, q)`` with ``p - q = lag``.
    """
    pos = np.asarray(sorted(set(int(p) for p in positions)))
    if pos.size == 0:
        raise GeometryError("positions must be nonempty")
    diffs = (pos[:, None] - pos[None, :]).ravel()
    counts = Counter(int(d) for d in diffs if d >= 0)
    lags = frozenset(counts)
    return Coarray(lags, dict(sorted(counts.items())), _contiguous_len(lags))


def difference_coarray_2d(positions) -> Coarray2D:
    pos = np.asarray(positions, dtype=int).reshape(-1, 2)
    d = (pos[:, None, :] - pos[None, :, :]).reshape(-1, 2)
    counts = Counter(map(tuple, d.tolist()))
    h = 0
    while all(
        (a, b) in counts for a in range(-h - 1, h + 2) for b in range(-h - 1, h + 2)
    ):
        h += 1
    return Coarray2D({k: counts[k] for k in sorted(counts)}, h)


def _planar_from_row(kind, M, N, row) -> PlanarArrayGeometry:
    beta = tuple(sorted(row))
    size = beta[-1] + 1
    # f_L[i, j] is the underlying array laid along x at y = 0
    f_L = np.zeros((size, size), dtype=np.int8)
    f_L[list(beta), 0] = 1
    # f_R[i, j] = sum_{k in beta} f_L[i, j - k]
    f_R = np.zeros_like(f_L)
    for k in beta:
        f_R[:, k:] += f_L[:, : size - k]
    if f_R.max() > 1:
        raise GeometryError("overlapping shifted rows")
    f_R.setflags(write=False)
    positions = tuple((int(i), int(j)) for i, j in np.argwhere(f_R))
    return PlanarArrayGeometry(kind, M, N, beta, f_R, positions)


def build_sirna(M: int, N: int) -> PlanarArrayGeometry:
    """Symmetry-imposed rectangular nested array.

    The underlying row is ``{0..M-1} U {M n : 1 <= n < N}``.
    """
    _check_count("M", M)
    _check_count("N", N)
    row = set(range(M)) | {M * n for n in range(1, N)}
    return _planar_from_row("sirna", M, N, row)


def build_sirca(M: int) -> PlanarArrayGeometry:
    """Symmetry-imposed rectangular coprime array with ``N = M + 1``.

    The underlying row is ``{N m : 0 <= m < 2M} U {M n : 1 <= n < N}``.
    """
    _check_count("M", M)
    N = M + 1
    row = {N * m for m in range(2 * M)} | {M * n for n in range(1, N)}
    return _planar_from_row("sirca", M, N, row)
