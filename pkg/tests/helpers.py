"""Shared builders for random multi-cell MIMO test instances."""

import numpy as np

from d2dmimo.beamforming import NoiseCovariance, TransmitBeamformers
from d2dmimo.channel import ChannelSet


def complex_normal(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_psd_covariance(rng, M, sigma2=0.1):
    """Positive-definite interference-plus-noise matrix."""
    A = complex_normal(rng, M, M + 2)
    return A @ A.conj().T + sigma2 * np.eye(M)


def random_network(rng, N=3, K=2, S=2, M=3, L=4, sigma2=0.05):
    """A fully populated ChannelSet plus beamformers for interference tests."""
    cellular = complex_normal(rng, N, N, K, M, L)
    cap = rng.uniform(1.0, 8.0, (N, K, max(M - 1, 0)))
    gain = rng.uniform(1e-10, 1e-8, (N, K, max(M - 1, 0)))
    channels = ChannelSet(cellular=cellular, d2d_capacity=cap, d2d_gain=gain)
    v = complex_normal(rng, N, L, S)
    scheduled = np.stack([rng.permutation(K)[:S] for _ in range(N)])
    tx = TransmitBeamformers(v=v, scheduled=scheduled)
    return channels, tx, sigma2


def naive_interference_covariance(cell, user, channels, tx, noise: NoiseCovariance):
    """Triple-loop re-implementation of J for oracle comparisons."""
    rows = noise.included_rows()
    Mr = len(rows)
    N, S = tx.scheduled.shape
    J = np.zeros((Mr, Mr), dtype=complex)
    for i in range(N):
        H = channels.cellular[i, cell, user][rows]
        for s in range(S):
            if i == cell and tx.scheduled[i, s] == user:
                continue
            t = H @ tx.v[i, :, s]
            J += np.outer(t, t.conj())
    J += noise.sigma2 * np.eye(Mr)
    J += np.diag(np.append(noise.q[rows[:-1]], 0.0))
    return J
