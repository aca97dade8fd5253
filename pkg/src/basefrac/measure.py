"""A-optimal design measures and the multiplicative algorithm.

A design measure ``p`` puts mass ``p_k`` on treatment ``k``.  Its
information matrix for ``theta`` after eliminating the baseline effect is
``M(p) = Z' (diag(p) - p p') Z`` and the A-criterion is ``tr M(p)^-1``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, NonConvergenceError
from .linalg import MEASURE_RTOL, spd_inverse, symmetrize

log = logging.getLogger(__name__)

DEFAULT_T = 1e-10
DEFAULT_MAX_ITER = 10**6
UNDERFLOW = 1e-300


def as_measure(p, v=None):
    """Validate and return ``p`` as a float array on the simplex."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (v is not None and p.size != v):
        raise ValueError(f"a design measure must be a vector of length {v}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("a design measure must be nonnegative and sum to 1")
    return p


def uniform(v):
    return np.full(v, 1.0 / v)


def info_of_measure(p, z):
    """``M(p) = Z' Delta(p) Z``, symmetrized."""
    p = np.asarray(p, dtype=float)
    g = z.T @ p
    m = (z * p[:, None]).T @ z - np.outer(g, g)
    return symmetrize(m)


def _inverse(p, z):
    return spd_inverse(info_of_measure(p, z), MEASURE_RTOL)


def phi(p, z):
    """``tr M(p)^-1``, or ``inf`` when ``M(p)`` is numerically singular."""
    minv = _inverse(p, z)
    if minv is None:
        return np.inf
    return float(np.trace(minv))


def _variance(p, z, minv):
    e = z - z.T @ p
    f = e @ minv
    return np.einsum("kj,kj->k", f, f)


def variance_function(p, z, k=None):
    """``d_k = e_k' M^-1 M^-1 e_k`` with ``e_k = z_k - Z'p``.

    Returns the whole length-``v`` vector when ``k`` is None, otherwise the
    value at 1-based label ``k``.
    """
    minv = _inverse(p, z)
    if minv is None:
        raise DegenerateModelError("M(p) is singular")
    d = _variance(np.asarray(p, dtype=float), z, minv)
    return d if k is None else float(d[k - 1])


def multiplicative_step(p, z):
    """One multiplicative update ``p_k <- p_k d_k / tr M(p)^-1``."""
    p = np.asarray(p, dtype=float)
    minv = _inverse(p, z)
    if minv is None:
        raise DegenerateModelError("M(p) is singular")
    return _step(p, _variance(p, z, minv), float(np.trace(minv)))


def _step(p, d, tr):
    new = p * d / tr
    new[new < UNDERFLOW] = 0.0
    return new / new.sum()


def directional_derivative(p, p_tilde, z):
    """One-sided derivative of ``phi`` at ``p`` towards ``p_tilde``."""
    p = np.asarray(p, dtype=float)
    minv = _inverse(p, z)
    if minv is None:
        raise DegenerateModelError("M(p) is singular")
    d = _variance(p, z, minv)
    return float(np.dot(p_tilde, np.trace(minv) - d))


@dataclass(frozen=True)
class OptimizerResult:
    p_hat: np.ndarray
    s: float
    iterations: int
    terminal_gap: float
    t: float

    @property
    def phi(self):
        """``tr M(p_hat)^-1``."""
        return self.s + self.t


def optimize(z, t=DEFAULT_T, max_iter=DEFAULT_MAX_ITER):
    """Run the multiplicative algorithm from the uniform measure.

    Iterates until ``max_k d_k - tr M(p)^-1 <= t``, which certifies that
    ``phi(p_hat)`` is within ``t`` of the global minimum.

    Returns
    -------
    OptimizerResult
        ``s = tr M(p_hat)^-1 - t`` is the benchmark used by every efficiency
        bound: any ``N``-run design has ``tr(H^-1) >= s / N``.

    Raises
    ------
    DegenerateModelError
        The uniform measure already has a singular information matrix.
    NonConvergenceError
        ``max_iter`` iterations without meeting the stopping rule.
    """
    z = np.asarray(z, dtype=float)
    p = uniform(z.shape[0])
    increases = 0
    prev = np.inf
    for it in range(max_iter + 1):
        minv = _inverse(p, z)
        if minv is None:
            if it == 0:
                raise DegenerateModelError("uniform measure has a singular information matrix")
            raise NonConvergenceError("M(p) became singular", best=p, iterations=it)
        tr = float(np.trace(minv))
        d = _variance(p, z, minv)
        gap = float(d.max() - tr)
        if tr > prev:
            increases += 1
        prev = tr
        if gap <= t:
            if increases:
                log.info("phi increased on %d of %d iterations", increases, it)
            log.debug("multiplicative algorithm converged in %d iterations", it)
            return OptimizerResult(p_hat=p, s=tr - t, iterations=it, terminal_gap=gap, t=t)
        if it < max_iter:
            p = _step(p, d, tr)
    raise NonConvergenceError(
        f"no convergence after {max_iter} iterations (gap {gap:.3g})",
        best=p, gap=gap, iterations=max_iter,
    )
