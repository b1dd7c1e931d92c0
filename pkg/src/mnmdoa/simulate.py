"""Plane-wave snapshot simulation and exact ensemble correlations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .geometry import LinearArrayGeometry, PlanarArrayGeometry

Direction = Union[float, Tuple[float, float]]


def _check_cosine(u, name="u"):
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > 1.0):
        raise ValueError(f"direction cosine {name} must lie in [-1, 1], got {u}")
    return u


def steering_vector_linear(u: float, positions) -> np.ndarray:
    """Manifold vector ``exp(j pi u k)`` over integer grid positions ``k``."""
    u = float(_check_cosine(u))
    k = np.asarray(positions, dtype=float)
    return np.exp(1j * np.pi * u * k)


def steering_vector_planar(u_x: float, u_y: float, L_x: int, L_y: int) -> np.ndarray:
    """Kronecker steering vector ``w_x (x) w_y`` of a virtual ``L_x`` by ``L_y`` URA.

    Element ``i * L_y + j`` corresponds to x-index ``i`` and y-index ``j``,
    which is the column-stacking ``vec()`` of a data matrix whose columns
    index x and whose rows index y.
    """
    _check_cosine(u_x, "u_x")
    _check_cosine(u_y, "u_y")
    w_x = steering_vector_linear(u_x, np.arange(L_x))
    w_y = steering_vector_linear(u_y, np.arange(L_y))
    return np.kron(w_x, w_y)


def planar_steering_physical(u_x: float, u_y: float, positions) -> np.ndarray:
    """Planar steering vector restricted to physical ``(i, j)`` positions."""
    _check_cosine(u_x, "u_x")
    _check_cosine(u_y, "u_y")
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    return np.exp(1j * np.pi * (u_x * p[:, 0] + u_y * p[:, 1]))


@dataclass(frozen=True)
class SourceSpec:
    """A plane-wave source.

    ``direction`` is a direction cosine ``u`` for linear arrays or a pair
    ``(u_x, u_y)`` for planar arrays. ``power`` is the linear-scale variance.
    """

    direction: Direction
    power: float = 1.0

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.direction, dtype=float))
        if d.size not in (1, 2):
            raise ValueError("direction must be a cosine or a cosine pair")
        _check_cosine(d, "direction")
        if d.size == 2 and d @ d > 1.0 + 1e-12:
            raise ValueError(f"u_x^2 + u_y^2 must not exceed 1, got {tuple(d)}")
        if not self.power > 0:
            raise ValueError(f"source power must be positive, got {self.power}")

    @property
    def is_planar(self) -> bool:
        return np.ndim(self.direction) == 1


def sources_from_snr(directions, snr_db: float = 0.0, noise_power: float = 1.0):
    """Equal-power sources with per-source SNR ``snr_db`` relative to ``noise_power``."""
    power = noise_power * 10.0 ** (snr_db / 10.0)
    return [SourceSpec(tuple(d) if np.ndim(d) else float(d), power) for d in directions]


@dataclass(frozen=True)
class Scenario:
    geometry: Union[LinearArrayGeometry, PlanarArrayGeometry]
    sources: Tuple[SourceSpec, ...]
    noise_power: float = 1.0
    snapshots: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) < 1:
            raise ValueError("a scenario needs at least one source")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if int(self.snapshots) != self.snapshots or self.snapshots < 1:
            raise ValueError("snapshots must be a positive integer")
        planar = isinstance(self.geometry, PlanarArrayGeometry)
        for s in self.sources:
            if s.is_planar != planar:
                raise ValueError("source direction dimensionality does not match the geometry")

    @property
    def is_planar(self) -> bool:
        return isinstance(self.geometry, PlanarArrayGeometry)

    def snr_db(self) -> np.ndarray:
        return 10.0 * np.log10([s.power / self.noise_power for s in self.sources])

    def physical_manifold(self) -> np.ndarray:
        """Steering matrix over physical sensors, one column per source."""
        g = self.geometry
        if self.is_planar:
            cols = [planar_steering_physical(*s.direction, g.positions) for s in self.sources]
        else:
            cols = [steering_vector_linear(s.direction, g.positions) for s in self.sources]
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class SnapshotSet:
    """Snapshots over physical sensors.

    ``data`` has shape ``(Q, n_sensors)``; row ``q`` is snapshot ``q``.
    """

    data: np.ndarray
    scenario: Scenario

    @property
    def Q(self) -> int:
        return self.data.shape[0]

    def grid_matrix(self, q: int) -> np.ndarray:
        """Dense data matrix of snapshot ``q`` with zeros at missing sensors.

        Indexed ``[j, i]`` (row = y, column = x) for planar arrays.
        """
        g = self.scenario.geometry
        if not self.scenario.is_planar:
            out = np.zeros(g.aperture + 1, dtype=complex)
            out[list(g.positions)] = self.data[q]
            return out
        n = g.aperture + 1
        out = np.zeros((n, n), dtype=complex)
        p = np.asarray(g.positions)
        out[p[:, 1], p[:, 0]] = self.data[q]
        return out


def _crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_snapshots(scenario: Scenario, rng=None) -> SnapshotSet:
    """Draws ``Q`` snapshots ``x_q = sum_i a_iq v(u_i) + n_q``.

    Amplitudes and noise are circular complex Gaussian. If ``rng`` is not
    given, a generator seeded with ``scenario.seed`` is used.
    """
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    V = scenario.physical_manifold()
    Q = int(scenario.snapshots)
    P = V.shape[1]
    powers = np.array([s.power for s in scenario.sources])
    amps = _crandn(rng, (Q, P)) * np.sqrt(powers)
    noise = _crandn(rng, (Q, V.shape[0])) * np.sqrt(scenario.noise_power)
    return SnapshotSet(amps @ V.T + noise, scenario)


def exact_snapshots(scenario: Scenario) -> SnapshotSet:
    """Synthetic snapshots whose sample correlation is the ensemble correlation.

    With a square root ``S = A A^H`` over physical sensors, ``X = sqrt(n) A^T``
    has ``X^T X* / n = S`` for ``n`` sensors, so every estimator downstream
    sees exact second-order statistics. The eigen square root is used since
    ``S`` is numerically singular at very high SNR.
    """
    V = scenario.physical_manifold()
    p = np.array([s.power for s in scenario.sources])
    S = (V * p) @ V.conj().T + scenario.noise_power * np.eye(V.shape[0])
    w, U = np.linalg.eigh(S)
    A = U * np.sqrt(np.clip(w, 0.0, None))
    n = S.shape[0]
    return SnapshotSet(np.sqrt(n) * A.T, scenario)


def ensemble_correlation(scenario: Scenario, dimension=None) -> np.ndarray:
    """Exact correlation ``sum_i p_i v_i v_i^H + sigma_n^2 I`` on a virtual array.

    For linear scenarios ``dimension`` is the virtual ULA length. For planar
    scenarios it is the per-axis virtual length (defaults to ``m_tilde + 1``)
    and the result has size ``dimension**2``.
    """
    if scenario.is_planar:
        L = dimension or scenario.geometry.virtual_size
        V = [steering_vector_planar(*s.direction, L, L) for s in scenario.sources]
        n = L * L
    else:
        if dimension is None:
            raise ValueError("dimension is required for linear scenarios")
        V = [steering_vector_linear(s.direction, np.arange(dimension)) for s in scenario.sources]
        n = dimension
    R = scenario.noise_power * np.eye(n, dtype=complex)
    for s, v in zip(scenario.sources, V):
        R += s.power * np.outer(v, v.conj())
    return R


def ensemble_correlation_from(directions: Sequence, powers, noise_power: float, dimension: int):
    """Exact correlation for bare directions, without a geometry.

    Linear directions give a ``dimension``-square matrix, pairs give
    ``dimension**2``-square.
    """
    R = None
    for d, p in zip(directions, powers):
        if np.ndim(d):
            v = steering_vector_planar(d[0], d[1], dimension, dimension)
        else:
            v = steering_vector_linear(d, np.arange(dimension))
        if R is None:
            R = noise_power * np.eye(v.size, dtype=complex)
        R += p * np.outer(v, v.conj())
    if R is None:
        return noise_power * np.eye(dimension, dtype=complex)
    return R
