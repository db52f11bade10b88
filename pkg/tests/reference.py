"""Independent brute-force references used by the tests.

Nothing here imports the GP or acquisition code under test; everything is
rebuilt from dense linear algebra and plain loops.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def rbf(u, v, ell, sf2):
    u, v = np.asarray(u, float), np.asarray(v, float)
    return sf2 * math.exp(-float(np.sum((u - v) ** 2)) / (2 * ell**2))


def gram(A, B, ell, sf2):
    return np.array([[rbf(a, b, ell, sf2) for b in B] for a in A])


def standardize(y):
    y = np.asarray(y, float)
    mu, sd = y.mean(), y.std()
    return (y - mu) / sd, mu, sd


def dense_posterior(X, y, Q, ell, sf2, sn2, jitter=1e-10, standardize_y=True):
    """Posterior mean/std at Q via an explicit matrix inverse, raw units."""
    if standardize_y:
        ys, mu0, sd0 = standardize(y)
    else:
        ys, mu0, sd0 = np.asarray(y, float), 0.0, 1.0
    K = gram(X, X, ell, sf2) + (sn2 + jitter) * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    Ks = gram(Q, X, ell, sf2)
    mean = Ks @ Kinv @ ys
    var = sf2 - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    return mu0 + sd0 * mean, sd0 * np.sqrt(np.maximum(var, 0.0))


def dense_lml(X, y, ell, sf2, sn2, jitter=1e-10):
    y = np.asarray(y, float)
    K = gram(X, X, ell, sf2) + (sn2 + jitter) * np.eye(len(X))
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * y @ np.linalg.inv(K) @ y - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi))


def mesh_points(d, r):
    """Lexicographic r^d lattice on the unit cube, last dim fastest."""
    levels = [j / (r - 1) for j in range(r)]
    return np.array(list(itertools.product(levels, repeat=d)))


def sigma_argmax(X, Y, ell, sf2, sn2, candidates, explored=(), jitter=1e-10):
    """Index of the candidate maximizing the summed standardized posterior std.

    Ties go to the first candidate. Scores use the same convention as the
    library: per-output std in standardized units, summed.
    """
    Y = np.atleast_2d(np.asarray(Y, float).T).T
    best, best_score = None, -math.inf
    scores = np.zeros(len(candidates))
    for j in range(Y.shape[1]):
        _, sd = dense_posterior(X, Y[:, j], candidates, ell, sf2, sn2, jitter, standardize_y=False)
        scores += sd
    for i, s in enumerate(scores):
        if i in explored:
            continue
        if s > best_score:
            best, best_score = i, s
    return best, best_score


def ubd_cartesian(d, n):
    levels = [0.5] if n == 1 else [j / (n - 1) for j in range(n)]
    return {tuple(round(v, 12) for v in p) for p in itertools.product(levels, repeat=d)}


# closed-form grating surrogate, re-derived from its documented formulas


def bragg_reference(x, f, c):
    length, depth, width, n_groove, chirp, order = [float(v) for v in x]
    dn = n_groove - c.n_ref
    q = c.coupling * depth * width * abs(dn) / order
    peak = math.tanh(q * length) ** 2
    w = c.bandwidth_scale * math.sqrt(q**2 + (math.pi / length) ** 2) * (1 + c.chirp_broadening * abs(chirp) * length)
    f0 = c.f_bragg * (1 + c.index_shift * dn)
    out = []
    for fi in f:
        t = (fi - f0) / w
        main = math.exp(-t * t / 2) / (1 + c.lorentz * t * t)
        side = math.sin(math.pi * t / c.side_period) ** 2 * (1 - math.exp(-t * t / 8)) * math.exp(-t * t / 200)
        out.append(peak * (main + c.side_lobe * (1 - main) * side))
    return np.array(out), (peak, w, f0)


def r2_by_hand(t, p):
    t, p = list(map(float, t)), list(map(float, p))
    mean = sum(t) / len(t)
    return 1 - sum((a - b) ** 2 for a, b in zip(t, p)) / sum((a - mean) ** 2 for a in t)


def well_conditioned_instance(seed, n_max=20, d_max=6, max_cond=1e4):
    """Random noise-free problem whose kernel matrix has cond <= max_cond.

    Noise-free interpolation error grows like jitter * cond(K); draws above
    the bound are rejected and redrawn from the same stream.
    """
    rng = np.random.default_rng(seed)
    while True:
        n, d = int(rng.integers(2, n_max + 1)), int(rng.integers(1, d_max + 1))
        X = rng.random((n, d))
        ell = float(rng.uniform(0.1, 0.5))
        if np.linalg.cond(gram(X, X, ell, 1.0)) <= max_cond:
            return X, rng.normal(size=(n, 3)), ell
