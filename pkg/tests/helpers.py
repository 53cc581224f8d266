import numpy as np

from spgrl import objectives


def central_differences(f, x, eps=1e-5):
    """Numerical gradient of scalar ``f`` at array ``x`` (x is restored afterwards)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f(x)
        flat[i] = old - eps
        down = f(x)
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return g


def max_rel_error(a, n):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))


def dense_renormalized(a):
    at = a + np.eye(a.shape[0])
    d = at.sum(axis=1)
    return at / np.sqrt(np.outer(d, d))


def brute_force_recon(z, target, pos_weight=1.0, normalize=True):
    """Loop over every ordered pair of the densified target, same per-term arithmetic."""
    n = z.shape[0]
    a = target.to_dense()
    logits = z @ z.T
    terms = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            terms[i, j] = objectives.bernoulli_terms(logits[i, j], a[i, j], pos_weight)
    total = float(np.sum(terms))
    return total / (n * n) if normalize else total
