import numpy as np
import pytest

from gcpd.lasso import EdgeEstimates


def true_neighborhood_matrix(cov: np.ndarray) -> np.ndarray:
    """Population regression coefficients of each column on the rest."""
    p = cov.shape[0]
    m = np.zeros((p, p))
    for j in range(p):
        idx = np.array([i for i in range(p) if i != j])
        m[idx, j] = np.linalg.solve(cov[np.ix_(idx, idx)], cov[idx, j])
    return m


def true_edges(cov: np.ndarray, tau: float = 0.5) -> EdgeEstimates:
    return EdgeEstimates(true_neighborhood_matrix(cov), tau_used=tau, lambda_used=0.0)


def power_iteration_extreme_eigs(a: np.ndarray, iters: int = 2000) -> tuple[float, float]:
    """(min, max) eigenvalues of a symmetric matrix via power iteration."""
    p = a.shape[0]
    rng = np.random.default_rng(0)

    def largest(m):
        v = rng.standard_normal(p)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = m @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                return 0.0
            v = w / norm
            lam = float(v @ (m @ v))
        return lam

    lam_max = largest(a)
    shift = abs(lam_max) + 1.0
    lam_min = shift - largest(shift * np.eye(p) - a)
    return lam_min, lam_max


@pytest.fixture
def rng_factory():
    from gcpd.numstats import Rng

    return lambda seed, stream=0: Rng(seed, stream)
