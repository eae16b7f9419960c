"""
Boundary crossing between discrete time steps.

A path that stays inside D at both ends of a step may still have touched the
boundary in between. Near a C^2 boundary the path is locally a one-dimensional
diffusion along the inward normal, so the half-space Brownian-bridge formula
gives the probability that it stayed inside.
"""
import numpy as np

from utils.exceptions import NonSmoothBoundaryError


def bridge_survival_probability(phi0, phi1, dt, s2):
    """P(bridge from phi0 to phi1 over dt, variance rate s2, stays positive).

    Equals 1 - exp(-2 phi0 phi1 / (s2 dt)); zero when either end sits on the
    boundary, one when s2 = 0 and both ends are inside.
    """
    phi0 = np.asarray(phi0, dtype=float)
    phi1 = np.asarray(phi1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    product = phi0 * phi1
    with np.errstate(divide='ignore', invalid='ignore'):
        exponent = np.where(s2 > 0, -2.0 * product / (s2 * dt), -np.inf)
    survival = -np.expm1(exponent)
    survival = np.where(product > 0, survival, 0.0)
    return survival.item() if survival.ndim == 0 else survival


def normal_diffusivity(domain, model, t: float, x) -> float:
    """grad(phi_D)^T sigma sigma^T grad(phi_D) at one point.

    Raises NonSmoothBoundaryError where phi_D has no gradient (box edges and
    corners, medial points).
    """
    X, _ = domain.as_points(x)
    G, valid = domain.grad_phi(X)
    if not valid[0]:
        raise NonSmoothBoundaryError(
            f'phi_D is not differentiable at {X[0].tolist()}.',
            details={'point': X[0].tolist(), 'domain': domain.kind},
        )
    sigma = model.diffusion(t, X)
    v = np.einsum('nij,ni->nj', sigma, G)
    return float(np.sum(v ** 2, axis=1)[0])


def normal_diffusivity_batch(domain, t: float, X: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Vectorized normal diffusivity for the step kernels.

    Where phi_D has no gradient the largest eigenvalue of sigma sigma^T is used,
    which can only increase the killing probability.
    """
    G, valid = domain.grad_phi(X)
    v = np.einsum('nij,ni->nj', sigma, G)
    s2 = np.sum(v ** 2, axis=1)
    if not valid.all():
        bad = ~valid
        s2[bad] = np.linalg.norm(sigma[bad], ord=2, axis=(1, 2)) ** 2
    return s2
