"""Discrete prolate spheroidal sequences and the reduced-dimension dictionary.

Vectors come from the symmetric tridiagonal matrix that commutes with the
prolate kernel; their concentration eigenvalues are evaluated as the
in-band energy ``int_{-W}^{W} |S(f)|^2 df`` by Gauss-Legendre quadrature,
which resolves eigenvalues (and their complements ``1 - lambda``) down to
about ``N_D eps^2`` rather than the ``eps`` floor of a dense eigensolver.
"""

from __future__ import annotations

import math
import os
import struct
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.signal import zoom_fft
from scipy.special import roots_legendre

from .core import InvalidArgumentError
from .preprocessing import SegmentMatrix

DEFAULT_KD_FACTOR = 2.0
_HEADER = struct.Struct("<QdQ")


@dataclass(frozen=True)
class DpssDictionary:
    length: int
    half_bandwidth: float
    kept: int
    basis: np.ndarray  # (N_D, k_D), orthonormal columns
    eigenvalues: np.ndarray  # (k_D,), descending
    complements: np.ndarray  # 1 - eigenvalues, computed directly

    @property
    def time_bandwidth(self):
        return 2.0 * self.length * self.half_bandwidth

    def strictly_decreasing(self):
        """Strict order check that reads 1 - lambda where lambda rounds to one.

        Eigenvalues or complements below the quadrature resolution (about
        ``N_D eps^2``) cannot be ordered in double precision; such pairs are
        accepted, as
        the vectors come ordered from a tridiagonal matrix with simple
        spectrum that commutes with the kernel.
        """
        lam, comp = self.eigenvalues, self.complements
        floor = complement_resolution(self.length)
        unresolved = ((comp[:-1] <= floor) & (comp[1:] <= floor)) | (
            (lam[:-1] <= floor) & (lam[1:] <= floor))
        ok = (lam[:-1] > lam[1:]) | (comp[:-1] < comp[1:]) | unresolved
        return bool(np.all(ok))


def complement_resolution(length):
    """Smallest ``1 - lambda`` that band_energy resolves for length ``N_D``."""
    return 64.0 * length * np.finfo(float).eps ** 2


# Gauss-Legendre nodes per panel; panels are at most 1/N_D wide, so each
# holds under one period of the fastest term of |S(f)|^2
_PANEL_NODES = 12


def band_energy(seqs, lo, hi):
    """``int_lo^hi |S(f)|^2 df`` for each column of ``seqs``, with S the DTFT.

    Composite Gauss-Legendre over equal panels; the samples of S at one
    relative node position across all panels are equally spaced, so each
    position costs one zoom FFT.
    """
    seqs = np.asarray(seqs)
    if seqs.ndim == 1:
        seqs = seqs[:, None]
    n = seqs.shape[0]
    panels = int(math.ceil(n * (hi - lo))) + 1
    h = (hi - lo) / panels
    u, wt = roots_legendre(_PANEL_NODES)
    u = 0.5 * (u + 1.0)
    out = np.zeros(seqs.shape[1])
    for uj, wj in zip(u, wt):
        f0 = lo + h * uj
        if panels == 1:
            spec = np.exp(-2j * np.pi * f0 * np.arange(n)) @ seqs
            spec = spec[None, :]
        else:
            spec = zoom_fft(seqs, [f0, f0 + h * (panels - 1)], m=panels, fs=1.0,
                            endpoint=True, axis=0)
        out += 0.5 * h * wj * np.sum(np.abs(spec) ** 2, axis=0)
    return out


def _fix_signs(v):
    """Make the first sample with magnitude above 1% of the peak positive."""
    for j in range(v.shape[1]):
        col = v[:, j]
        first = np.flatnonzero(np.abs(col) > 0.01 * np.max(np.abs(col)))[0]
        if col[first] < 0:
            v[:, j] = -col
    return v


def compute_dpss(length, half_bandwidth, kept) -> DpssDictionary:
    """First ``kept`` DPSS vectors of the given length and half bandwidth.

    Parameters
    ----------
    length : int
        N_D, the number of samples per vector.
    half_bandwidth : float
        W_D in (0, 1/2], in cycles per sample.
    kept : int
        k_D, the number of leading vectors returned, ``1 <= k_D <= N_D``.

    Returns
    -------
    DpssDictionary
        Orthonormal columns ordered by decreasing concentration. At
        ``W_D = 1/2`` the standard basis with unit eigenvalues is returned.
    """
    n, w, k = int(length), float(half_bandwidth), int(kept)
    if n != length or n < 1:
        raise InvalidArgumentError("N_D must be a positive integer")
    if not 0 < w <= 0.5:
        raise InvalidArgumentError("W_D must lie in (0, 1/2]")
    if k != kept or not 1 <= k <= n:
        raise InvalidArgumentError(f"k_D must lie in [1, N_D={n}]")
    if w == 0.5:
        return DpssDictionary(n, w, k, np.eye(n, k), np.ones(k), np.zeros(k))
    idx = np.arange(n, dtype=float)
    diag = ((n - 1 - 2 * idx) / 2.0) ** 2 * math.cos(2 * math.pi * w)
    off = idx[1:] * (n - idx[1:]) / 2.0
    if n == 1:
        vecs = np.ones((1, 1))
    else:
        _, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(n - k, n - 1))
        vecs = vecs[:, ::-1].copy()
    vecs /= np.linalg.norm(vecs, axis=0)
    vecs = _fix_signs(vecs)
    lam = band_energy(vecs, -w, w)
    comp = 1.0 - lam
    # near one, 1 - lam cancels; integrate the out-of-band energy directly
    near = lam > 0.5
    if np.any(near):
        comp[near] = band_energy(vecs[:, near], w, 1.0 - w)
    return DpssDictionary(n, w, k, vecs, lam, comp)


_cache = {}
_cache_lock = threading.Lock()


def _cache_path(cache_dir, key):
    n, w, k = key
    return os.path.join(cache_dir, f"dpss_{n}_{w.hex()}_{k}.bin")


def save_dictionary(d: DpssDictionary, path):
    """Header (N_D, W_D, k_D) then row-major f64 Q, eigenvalues and complements."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(d.length, d.half_bandwidth, d.kept))
        fh.write(np.ascontiguousarray(d.basis, dtype="<f8").tobytes())
        fh.write(np.asarray(d.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.asarray(d.complements, dtype="<f8").tobytes())


def load_dictionary(path) -> DpssDictionary:
    with open(path, "rb") as fh:
        raw = fh.read()
    n, w, k = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n * k + 2 * k:
        raise InvalidArgumentError(f"corrupt dictionary file {path}")
    basis = body[: n * k].reshape(n, k).copy()
    lam = body[n * k: n * k + k].copy()
    comp = body[n * k + k:].copy()
    return DpssDictionary(n, w, k, basis, lam, comp)


def cached_dpss(length, half_bandwidth, kept, cache_dir=None) -> DpssDictionary:
    """Memoised compute_dpss; the first dictionary stored under a key wins."""
    key = (int(length), float(half_bandwidth), int(kept))
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    d = None
    if cache_dir is not None:
        path = _cache_path(cache_dir, key)
        if os.path.exists(path):
            d = load_dictionary(path)
    if d is None:
        d = compute_dpss(*key)
        if cache_dir is not None:
            os.makedirs(cache_dir, exist_ok=True)
            tmp = _cache_path(cache_dir, key) + f".{os.getpid()}.{threading.get_ident()}"
            save_dictionary(d, tmp)
            os.replace(tmp, _cache_path(cache_dir, key))
    with _cache_lock:
        return _cache.setdefault(key, d)


def clear_cache():
    with _cache_lock:
        _cache.clear()


def kept_count(width, half_bandwidth, kd_factor=DEFAULT_KD_FACTOR):
    """k_D = ceil(kd_factor * 2 N_D W_D), clipped to [1, N_D]."""
    if kd_factor <= 0:
        raise InvalidArgumentError("kd_factor must be positive")
    # round first so that e.g. 4 * 128 / 32 lands exactly on an integer
    k = math.ceil(round(kd_factor * 2 * width * half_bandwidth, 9))
    return int(min(max(k, 1), width))


def dictionary_factory(period, kd_factor=DEFAULT_KD_FACTOR, cache_dir=None):
    """Callable ``width -> DpssDictionary`` with N_D = width and W_D = 1/(2L)."""
    w = 1.0 / (2 * period)

    def make(width):
        return cached_dpss(width, w, kept_count(width, w, kd_factor), cache_dir)

    return make


def _matrix(z):
    return z.entries if isinstance(z, SegmentMatrix) else np.asarray(z)


def reduce(z, d: DpssDictionary):
    """Z~ = Z Q."""
    zz = _matrix(z)
    if zz.ndim != 2 or zz.shape[1] != d.length:
        raise InvalidArgumentError(
            f"segment width {zz.shape[-1]} differs from dictionary length {d.length}")
    return zz @ d.basis


def lift(x_reduced, d: DpssDictionary):
    """X_bb = X~ Q^T."""
    xr = np.asarray(x_reduced)
    if xr.ndim != 2 or xr.shape[1] != d.kept:
        raise InvalidArgumentError(
            f"reduced matrix has {xr.shape[-1]} columns, dictionary keeps {d.kept}")
    return xr @ d.basis.T


def approximation_error(x_bb, d: DpssDictionary):
    """``||X - X Q Q^T||_F / ||X||_F`` (0 for a zero matrix)."""
    x = np.asarray(x_bb)
    if x.ndim != 2 or x.shape[1] != d.length:
        raise InvalidArgumentError("X_bb width differs from dictionary length")
    nx = np.linalg.norm(x)
    if nx == 0:
        return 0.0
    return float(np.linalg.norm(x - (x @ d.basis) @ d.basis.T) / nx)


def out_of_band_fractions(x_bb, half_bandwidth):
    """Per-row fraction of DTFT energy outside ``|f| <= W`` (0 for zero rows)."""
    x = np.atleast_2d(np.asarray(x_bb, dtype=np.complex128))
    total = np.sum(np.abs(x) ** 2, axis=1)
    if half_bandwidth >= 0.5:
        return np.zeros(x.shape[0])
    out = band_energy(x.T, half_bandwidth, 1.0 - half_bandwidth)
    frac = np.zeros_like(total)
    nz = total > 0
    frac[nz] = out[nz] / total[nz]
    return frac
