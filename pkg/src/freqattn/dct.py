"""2D DCT basis planes, spectra, reconstruction, and frequency-index selection.

The basis plane for index (f, t) on an F x T grid is the cosine product

    D[i, j] = cos(pi*f/F * (i + 1/2)) * cos(pi*t/T * (j + 1/2))

Direct O(N^2) summation only; desk-scale grids never need a fast transform.
The (0, 0) plane is constant 1, so its normalized form (divided by F*T)
reduces a map to its global average: global average pooling is the lowest
frequency component of this decomposition.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, DimensionError
from .tensor import tensor


class FrequencyIndex(NamedTuple):
    f: int
    t: int


_cache_lock = threading.Lock()
_plane_cache: dict = {}
_basis_cache: dict = {}


def _cos_matrix(n_freq: int, n_pos: int) -> np.ndarray:
    """Rows indexed by frequency, columns by position: cos(pi*f/N * (i+1/2))."""
    f = np.arange(n_freq)[:, None]
    i = np.arange(n_pos)[None, :]
    return np.cos(np.pi * f / n_pos * (i + 0.5))


def _build_plane(f_dim: int, t_dim: int, f: int, t: int) -> np.ndarray:
    ci = np.cos(np.pi * f / f_dim * (np.arange(f_dim) + 0.5))
    cj = np.cos(np.pi * t / t_dim * (np.arange(t_dim) + 0.5))
    return np.outer(ci, cj)


def basis_plane(f_dim: int, t_dim: int, idx: FrequencyIndex) -> np.ndarray:
    """Cosine-product basis plane for (f, t) on an F x T grid (cached, read-only)."""
    f, t = idx
    if not (0 <= f < f_dim and 0 <= t < t_dim):
        raise IndexError(f"frequency index {(f, t)} out of range for grid {f_dim}x{t_dim}")
    key = (f_dim, t_dim, f, t)
    with _cache_lock:
        plane = _plane_cache.get(key)
    if plane is None:
        plane = _build_plane(f_dim, t_dim, f, t)
        plane.flags.writeable = False
        with _cache_lock:
            plane = _plane_cache.setdefault(key, plane)
    return plane


@dataclass(frozen=True)
class DctBasis:
    """Stack of basis planes for an ordered list of frequency indices.

    With ``normalized`` set, every plane is divided by F*T so that the (0, 0)
    plane is the constant 1/(F*T) and reducing with it equals the global mean.
    """

    f_dim: int
    t_dim: int
    indices: tuple
    planes: np.ndarray  # (k, F, T), read-only
    normalized: bool

    @property
    def k(self) -> int:
        return len(self.indices)


def dct_basis(f_dim: int, t_dim: int, indices, normalized: bool = True) -> DctBasis:
    """Build (or fetch from cache) the basis for the given index list."""
    idx = tuple(FrequencyIndex(int(f), int(t)) for f, t in indices)
    key = (f_dim, t_dim, idx, normalized)
    with _cache_lock:
        basis = _basis_cache.get(key)
    if basis is None:
        planes = np.stack([basis_plane(f_dim, t_dim, i) for i in idx])
        if normalized:
            planes = planes / (f_dim * t_dim)
        planes.flags.writeable = False
        basis = DctBasis(f_dim, t_dim, idx, planes, normalized)
        with _cache_lock:
            basis = _basis_cache.setdefault(key, basis)
    return basis


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def dct2d(x: np.ndarray) -> np.ndarray:
    """Full spectrum SP[f,t] = sum_ij x[i,j] * cos(pi*f/F*(i+1/2)) * cos(pi*t/T*(j+1/2)).

    Plain cosine sums without scale constants, so SP[0,0] equals F*T times
    the global mean of x.
    """
    x = tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"dct2d: expected a 2D map, got shape {x.shape}")
    f_dim, t_dim = x.shape
    a = _cos_matrix(f_dim, f_dim)
    b = _cos_matrix(t_dim, t_dim)
    return a @ x @ b.T


def _ortho_matrix(n: int) -> np.ndarray:
    a = _cos_matrix(n, n) * np.sqrt(2.0 / n)
    a[0] *= np.sqrt(0.5)
    return a


def dct2d_orthonormal(x: np.ndarray) -> np.ndarray:
    """Spectrum with orthonormal scale constants, exactly invertible by idct2d."""
    x = tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"dct2d_orthonormal: expected a 2D map, got shape {x.shape}")
    a = _ortho_matrix(x.shape[0])
    b = _ortho_matrix(x.shape[1])
    return a @ x @ b.T


def idct2d(sp: np.ndarray) -> np.ndarray:
    """Rebuild a map as the weighted sum of its frequency components.

    Inverse of ``dct2d_orthonormal``; round-trip reconstruction error stays
    below 1e-10 because the scale constants make the basis orthonormal.
    """
    sp = tensor(sp)
    if sp.ndim != 2:
        raise DimensionError(f"idct2d: expected a 2D spectrum, got shape {sp.shape}")
    a = _ortho_matrix(sp.shape[0])
    b = _ortho_matrix(sp.shape[1])
    return a.T @ sp @ b


def gap(x: np.ndarray) -> np.ndarray:
    """Global average pooling: per-channel mean over the (F, T) axes."""
    x = tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"gap: expected a C x F x T map, got shape {x.shape}")
    return x.mean(axis=(1, 2))


def select_frequency_indices(f_dim: int, t_dim: int, k: int,
                             strategy: str = "zigzag_low_first") -> list:
    """Pick k indices from low to high frequency.

    ``zigzag_low_first`` ranks by f+t, breaking ties by smaller f then
    smaller t, so the first index is always (0, 0).
    """
    if strategy != "zigzag_low_first":
        raise ValueError(f"unknown frequency selection strategy: {strategy!r}")
    if k > f_dim * t_dim:
        raise CapacityError(
            f"cannot select k={k} frequency components from a {f_dim}x{t_dim} grid "
            f"({f_dim * t_dim} available)")
    ranked = sorted(((f + t, f, t) for f in range(f_dim) for t in range(t_dim)))
    return [FrequencyIndex(f, t) for _, f, t in ranked[:k]]


# ---------------------------------------------------------------------------
# self-verification (backs the `verify-dct` CLI subcommand)
# ---------------------------------------------------------------------------

@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str


def run_verification(max_grid: int = 8, n_random: int = 100, seed: int = 0,
                     perturb: float = 0.0) -> list:
    """Check the documented basis properties and report per-property results.

    ``perturb`` is a test hook: a nonzero value is added to one basis plane
    of the locally built copies, which must make the checks fail.
    """
    rng = np.random.default_rng(seed)
    results = []

    def local_planes(f_dim, t_dim):
        planes = np.stack([_build_plane(f_dim, t_dim, f, t)
                           for f in range(f_dim) for t in range(t_dim)])
        if perturb and planes.shape[0] > 1:
            planes[1] = planes[1] + perturb
        return planes

    # pairwise orthogonality of distinct planes, brute force on every grid
    worst = 0.0
    for f_dim in range(1, max_grid + 1):
        for t_dim in range(1, max_grid + 1):
            mat = local_planes(f_dim, t_dim).reshape(f_dim * t_dim, -1)
            g = mat @ mat.T
            off = g - np.diag(np.diag(g))
            worst = max(worst, float(np.max(np.abs(off))))
    results.append(PropertyResult(
        "orthogonality", worst < 1e-9,
        f"max |<Di,Dj>| over distinct pairs = {worst:.3e} (grids up to {max_grid}x{max_grid})"))

    # lowest component equals F*T times the global mean
    worst = 0.0
    for _ in range(n_random):
        c = int(rng.integers(1, 9))
        f_dim = int(rng.integers(1, 17))
        t_dim = int(rng.integers(1, 21))
        x = rng.standard_normal((c, f_dim, t_dim))
        sp00 = np.array([dct2d(x[i])[0, 0] for i in range(c)])
        if perturb:
            sp00 = sp00 + perturb
        worst = max(worst, float(np.max(np.abs(sp00 - f_dim * t_dim * gap(x)))))
    results.append(PropertyResult(
        "gap_equivalence", worst < 1e-9,
        f"max |SP[0,0] - F*T*gap| = {worst:.3e} over {n_random} random tensors"))

    # normalized (0,0) plane reduces a map to its global mean
    worst = 0.0
    for _ in range(20):
        f_dim = int(rng.integers(1, 9))
        t_dim = int(rng.integers(1, 9))
        x = rng.standard_normal((3, f_dim, t_dim))
        plane = _build_plane(f_dim, t_dim, 0, 0) / (f_dim * t_dim)
        if perturb:
            plane = plane + perturb
        z = np.einsum("ij,cij->c", plane, x)
        worst = max(worst, float(np.max(np.abs(z - gap(x)))))
    results.append(PropertyResult(
        "normalized_gap_reduction", worst < 1e-12,
        f"max |normalized (0,0) reduction - gap| = {worst:.3e}"))

    # orthonormal round trip
    worst = 0.0
    for shape in [(4, 6), (8, 8), (5, 3), (1, 7), (6, 1)]:
        x = rng.standard_normal(shape)
        rec = idct2d(dct2d_orthonormal(x))
        if perturb:
            rec = rec + perturb
        worst = max(worst, float(np.max(np.abs(rec - x))))
    results.append(PropertyResult(
        "orthonormal_round_trip", worst < 1e-10,
        f"max |idct2d(dct2d_orthonormal(x)) - x| = {worst:.3e}"))

    # repeated basis construction is bitwise identical
    a = _build_plane(7, 5, 2, 3)
    b = _build_plane(7, 5, 2, 3)
    if perturb:
        b = b + perturb
    same = bool(np.array_equal(a, b)) and np.array_equal(
        basis_plane(7, 5, FrequencyIndex(2, 3)), a)
    results.append(PropertyResult(
        "determinism", same, "repeated basis generation is bitwise identical"))

    return results
