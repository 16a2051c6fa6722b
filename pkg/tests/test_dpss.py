import os

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import windows

from mcfh import dpss
from mcfh.core import InvalidArgumentError
from mcfh.fh_signal import FhClassParams, make_radios, synthesize_fh_signal
from mcfh.preprocessing import slice_decompose


def kernel(n, w):
    d = np.subtract.outer(np.arange(n), np.arange(n)).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.sin(2 * np.pi * w * d) / (np.pi * d)
    k[d == 0] = 2 * w
    return k


def dense_eigs(n, w):
    return np.linalg.eigvalsh(kernel(n, w))[::-1]


@pytest.mark.parametrize("n, w", [(8, 0.25), (33, 0.1), (128, 1 / 16)])
def test_eigenvalues_match_dense_kernel(n, w):
    k = min(n, int(4 * n * w) + 4)
    d = dpss.compute_dpss(n, w, k)
    ref = dense_eigs(n, w)[:k]
    assert np.abs(d.eigenvalues - ref).max() <= 1e-10
    # Rayleigh quotients on the returned vectors
    rq = np.einsum("ij,ik,kj->j", d.basis, kernel(n, w), d.basis)
    assert np.abs(rq - d.eigenvalues).max() <= 1e-12


def test_vectors_match_scipy_up_to_sign():
    n, w, k = 96, 0.07, 20
    d = dpss.compute_dpss(n, w, k)
    ref = windows.dpss(n, n * w, k, norm=2).T
    for j in range(k):
        s = np.sign(ref[:, j] @ d.basis[:, j])
        assert np.abs(d.basis[:, j] - s * ref[:, j]).max() <= 1e-8


def test_full_band_is_identity():
    d = dpss.compute_dpss(10, 0.5, 6)
    assert np.array_equal(d.basis, np.eye(10, 6)) and np.all(d.eigenvalues == 1)


def test_sign_convention():
    d = dpss.compute_dpss(64, 0.05, 12)
    for col in d.basis.T:
        first = np.flatnonzero(np.abs(col) > 0.01 * np.abs(col).max())[0]
        assert col[first] > 0


@given(st.integers(2, 160), st.floats(0.01, 0.49), st.data())
def test_orthonormal_and_ordered(n, w, data):
    k = data.draw(st.integers(1, n))
    d = dpss.compute_dpss(n, w, k)
    assert d.basis.shape == (n, k)
    assert np.abs(d.basis.T @ d.basis - np.eye(k)).max() <= 1e-10
    assert np.all(d.eigenvalues < 1 + 1e-12) and np.all(d.complements > 0)
    assert np.allclose(d.eigenvalues + d.complements, 1, atol=1e-12)
    assert d.strictly_decreasing()


def test_eigenvalues_strictly_inside_unit_interval():
    d = dpss.compute_dpss(128, 1 / 16, 128)
    assert np.all(d.complements > 0) and np.all(d.eigenvalues > 0)
    assert d.strictly_decreasing()
    floor = dpss.complement_resolution(128)
    assert d.eigenvalues[-1] <= floor < d.complements[0]
    # resolvable tail values below eps still decrease strictly
    lam = d.eigenvalues
    tail = (lam < 1e-17) & (lam > 100 * floor)
    assert tail.sum() >= 5 and np.all(np.diff(lam[tail]) < 0)


@pytest.mark.parametrize("n", [64, 128, 256])
@pytest.mark.parametrize("big_l", [8, 16])
def test_clustering_envelope(n, big_l):
    w = 1 / (2 * big_l)
    d = dpss.compute_dpss(n, w, n)
    count = int(np.sum(d.eigenvalues > 0.5))
    assert abs(count - 2 * n * w) <= 3 * np.log(n)


def test_bad_arguments():
    for args in ((0, 0.1, 1), (8, 0.0, 1), (8, 0.6, 1), (8, 0.1, 0), (8, 0.1, 9), (8.5, 0.1, 2)):
        with pytest.raises(InvalidArgumentError):
            dpss.compute_dpss(*args)
    with pytest.raises(InvalidArgumentError):
        dpss.kept_count(10, 0.1, 0)


def test_kept_count():
    assert dpss.kept_count(128, 1 / 64) == 8
    assert dpss.kept_count(128, 1 / 64, 1.0) == 4
    assert dpss.kept_count(250, 1 / 64, 2.0) == 16
    assert dpss.kept_count(3, 0.01) == 1
    assert dpss.kept_count(10, 0.5, 4.0) == 10


def test_reduce_examples():
    d = dpss.compute_dpss(40, 0.05, 40)
    z = np.random.default_rng(0).normal(size=(3, 40)) + 0j
    assert np.linalg.norm(dpss.reduce(z, d)) == pytest.approx(np.linalg.norm(z), rel=1e-12)
    small = dpss.compute_dpss(40, 0.05, 8)
    assert not np.any(dpss.reduce(np.zeros((3, 40)), small))
    with pytest.raises(InvalidArgumentError):
        dpss.reduce(np.zeros((3, 41)), small)
    with pytest.raises(InvalidArgumentError):
        dpss.lift(np.zeros((3, 9)), small)
    assert not np.any(dpss.lift(np.zeros((2, 8)), small))


def test_lift_is_projector():
    d = dpss.compute_dpss(60, 0.05, 12)
    x = np.random.default_rng(1).normal(size=(4, 60))
    p = dpss.lift(dpss.reduce(x, d), d)
    assert np.allclose(dpss.lift(dpss.reduce(p, d), d), p, atol=1e-13)


@pytest.mark.parametrize("n", [128, 256, 512])
def test_bandlimited_row_projection(n):
    rng = np.random.default_rng(n)
    w = 1 / 16
    f = rng.uniform(-0.9 * w, 0.9 * w, 5)
    z = (np.exp(2j * np.pi * np.outer(np.arange(n), f)) @ rng.normal(size=5))[None]
    d = dpss.compute_dpss(n, w, dpss.kept_count(n, w))
    assert dpss.approximation_error(z, d) <= 1e-3


def test_approximation_error_examples():
    d = dpss.compute_dpss(64, 1 / 16, 8)
    full = dpss.compute_dpss(64, 1 / 16, 9)
    assert dpss.approximation_error(np.zeros((2, 64)), d) == 0.0
    assert dpss.approximation_error(np.tile(d.basis[:, 3], (3, 1)), d) <= 1e-14
    assert dpss.approximation_error(np.tile(full.basis[:, 8], (3, 1)), d) == pytest.approx(1, abs=1e-12)
    with pytest.raises(InvalidArgumentError):
        dpss.approximation_error(np.zeros((2, 63)), d)


def test_out_of_band_fractions():
    n, w = 256, 1 / 16
    k = np.arange(n)
    inside = np.exp(2j * np.pi * 0.01 * k)
    outside = np.exp(2j * np.pi * 0.3 * k)
    frac = dpss.out_of_band_fractions(np.vstack([inside, outside, 0 * k]), w)
    assert frac[0] < 1e-2 and frac[1] > 0.99 and frac[2] == 0
    # Parseval: in-band plus out-of-band is the total energy
    x = np.random.default_rng(0).normal(size=n)
    tot = dpss.band_energy(x, -w, w) + dpss.band_energy(x, w, 1 - w)
    assert tot[0] == pytest.approx(np.sum(x ** 2), rel=1e-12)


def test_projection_error_envelope():
    rng = np.random.default_rng(3)
    for n, w in ((128, 1 / 16), (256, 1 / 32), (512, 1 / 64)):
        d = dpss.compute_dpss(n, w, int(np.ceil(2 * n * w)) + 10)
        for _ in range(20):
            f = rng.uniform(-w, w, 4)
            x = np.exp(2j * np.pi * np.outer(np.arange(n), f)) @ (rng.normal(size=4) + 1j * rng.normal(size=4))
            x = x + rng.uniform(0, 0.3) * (rng.normal(size=n) + 1j * rng.normal(size=n))
            delta = dpss.out_of_band_fractions(x, w)[0]
            assert dpss.approximation_error(x[None], d) ** 2 <= delta + 1e-6


def fh_rows(seed, r, t_hri=1e-3, big_l=32):
    tc = 4e-7
    cp = FhClassParams(2, 25000.0, t_hri)
    radios = make_radios(cp, 4e-3, (0.0, 1 / tc - 25000.0), seed=seed)
    x, _ = synthesize_fh_signal(cp, radios, 4e-3, tc)
    return slice_decompose(x.samples, big_l)[:, 2000:2000 + r]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fh_round_trip_and_error_envelope(seed):
    big_l, r = 32, 512
    x = fh_rows(seed, r)
    make4 = dpss.dictionary_factory(big_l, 2.0)
    make2 = dpss.dictionary_factory(big_l, 1.0)
    e4 = dpss.approximation_error(x, make4(r))
    e2 = dpss.approximation_error(x, make2(r))
    assert e4 <= 1e-3 and e4 < e2
    delta = dpss.out_of_band_fractions(x, 1 / (2 * big_l))
    assert e4 <= np.sqrt(big_l * (delta.max() + 1e-6))
    # energy-weighted per-row form
    energy = np.sum(np.abs(x) ** 2, axis=1)
    assert e4 ** 2 <= np.sum(delta * energy) / energy.sum() + 1e-6


def test_memory_cache_first_writer_wins():
    dpss.clear_cache()
    a = dpss.cached_dpss(50, 0.05, 7)
    assert dpss.cached_dpss(50, 0.05, 7) is a
    dpss.clear_cache()
    assert dpss.cached_dpss(50, 0.05, 7) is not a


def test_disk_cache_round_trip(tmp_path):
    dpss.clear_cache()
    a = dpss.cached_dpss(70, 0.04, 9, str(tmp_path))
    files = os.listdir(tmp_path)
    assert len(files) == 1 and files[0].endswith(".bin")
    dpss.clear_cache()
    b = dpss.cached_dpss(70, 0.04, 9, str(tmp_path))
    assert np.array_equal(a.basis, b.basis) and np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.complements, b.complements)
    path = tmp_path / files[0]
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InvalidArgumentError):
        dpss.load_dictionary(str(path))
    dpss.clear_cache()


def test_concurrent_cache_returns_one_object():
    from concurrent.futures import ThreadPoolExecutor

    dpss.clear_cache()
    with ThreadPoolExecutor(8) as pool:
        got = list(pool.map(lambda _: dpss.cached_dpss(300, 1 / 64, 19), range(16)))
    assert all(g is got[0] for g in got)
    dpss.clear_cache()
