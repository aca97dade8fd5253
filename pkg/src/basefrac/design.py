"""Exact designs and their scores.

An ``N``-run design is stored as its replication vector ``r`` over the ``v``
treatments.  The information matrix for ``theta`` is
``H = Z' (diag(r) - r r' / N) Z`` and everything else (A-value, efficiency
bounds, the misspecification-robust score) is a function of ``H``, ``r``
and the model matrices.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidTreatmentError, NoValidScaleError, SingularDesignError
from .linalg import DESIGN_RTOL, spd_inverse, symmetrize

BREAKPOINT_RTOL = 1e-9


class ExactDesign:
    """Replication vector of an exact design (immutable, value semantics)."""

    __slots__ = ("_r",)

    def __init__(self, replications):
        r = np.array(replications, dtype=np.int64)
        if r.ndim != 1:
            raise ValueError("replications must be a vector")
        if np.any(r < 0):
            raise ValueError("replications must be nonnegative")
        if r.sum() < 1:
            raise ValueError("a design needs at least one run")
        r.setflags(write=False)
        self._r = r

    @classmethod
    def from_labels(cls, labels, v):
        """Design whose runs are the given 1-based labels (repeats = replication)."""
        labels = np.asarray(list(labels), dtype=np.int64)
        if labels.size and (labels.min() < 1 or labels.max() > v):
            raise InvalidTreatmentError(f"labels must lie in 1..{v}")
        return cls(np.bincount(labels - 1, minlength=v))

    @classmethod
    def full_factorial(cls, v):
        return cls(np.ones(v, dtype=np.int64))

    @property
    def replications(self):
        return self._r

    @property
    def v(self):
        return self._r.size

    @property
    def n_runs(self):
        return int(self._r.sum())

    @property
    def is_binary(self):
        return bool(np.all(self._r <= 1))

    @property
    def labels(self):
        """Sorted multiset of 1-based labels."""
        return [int(k) + 1 for k in np.repeat(np.arange(self.v), self._r)]

    def add(self, *labels):
        r = self._r.copy()
        for k in labels:
            r[k - 1] += 1
        return ExactDesign(r)

    def remove(self, *labels):
        r = self._r.copy()
        for k in labels:
            if r[k - 1] == 0:
                raise ValueError(f"label {k} is not in the design")
            r[k - 1] -= 1
        return ExactDesign(r)

    def __eq__(self, other):
        return isinstance(other, ExactDesign) and np.array_equal(self._r, other._r)

    def __hash__(self):
        return hash(self._r.tobytes())

    def __repr__(self):
        return f"ExactDesign(N={self.n_runs}, labels={self.labels})"


def info_of_design(d, z):
    """``H = Z' Delta(r) Z``, symmetrized."""
    r = d.replications.astype(float)
    g = z.T @ r
    h = (z * r[:, None]).T @ z - np.outer(g, g) / r.sum()
    return symmetrize(h)


def _h_inverse(d, z):
    hinv = spd_inverse(info_of_design(d, z), DESIGN_RTOL)
    if hinv is None:
        raise SingularDesignError(
            f"the {d.n_runs}-run design has a singular information matrix "
            "(theta is not estimable)", design=d,
        )
    return hinv


def a_value(d, z):
    """``tr(H^-1)``; raises :class:`SingularDesignError` when ``H`` is singular."""
    return float(np.trace(_h_inverse(d, z)))


def eff_lb(d, z, s):
    """Efficiency lower bound ``s / (N tr(H^-1))`` relative to the optimal measure."""
    return s / (d.n_runs * a_value(d, z))


def v_matrix(d, z):
    """``V = H^-1 Z' Delta(r) Delta(r) Z H^-1``; equals ``H^-1`` for binary designs."""
    hinv = _h_inverse(d, z)
    r = d.replications.astype(float)
    # Delta(r) Z = diag(r) Z - r (r'Z) / N
    dz = z * r[:, None] - np.outer(r, z.T @ r) / r.sum()
    b = dz @ hinv
    return symmetrize(b.T @ b)


def psi(d, z, sigma2, delta2, w):
    """Worst-case expected trace of the MSE matrix over misspecification priors."""
    if sigma2 <= 0 or delta2 < 0:
        raise ValueError("need sigma2 > 0 and delta2 >= 0")
    return sigma2 * a_value(d, z) + delta2 * (np.trace(v_matrix(d, z)) - np.trace(w))


def _eff_lb_rho(s, n, a, tr_v, tr_w, rho):
    num = (1 + rho) * s / n - rho * tr_w
    if num < 0:
        warnings.warn(f"eff_lb({rho}) has a negative numerator; the bound is uninformative",
                      stacklevel=3)
    return num / (a + rho * (tr_v - tr_w))


def eff_lb_rho(d, z, s, rho, w):
    """Efficiency lower bound under model misspecification, ``rho = delta^2 / sigma^2``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    a = a_value(d, z)
    if rho == 0:
        return s / (d.n_runs * a)
    return _eff_lb_rho(s, d.n_runs, a, float(np.trace(v_matrix(d, z))), float(np.trace(w)), rho)


@dataclass(frozen=True)
class DesignScore:
    a_value: float
    eff_lb: float
    eff_lb_rho: dict = field(default_factory=dict)
    is_binary: bool = True
    tr_v: float = 0.0


def score_design(d, z, s, w, rhos=(1.0, 5.0)):
    """All scores of a design in one pass."""
    a = a_value(d, z)
    tr_v = float(np.trace(v_matrix(d, z)))
    tr_w = float(np.trace(w))
    n = d.n_runs
    return DesignScore(
        a_value=a,
        eff_lb=s / (n * a),
        eff_lb_rho={float(rho): _eff_lb_rho(s, n, a, tr_v, tr_w, rho) for rho in rhos},
        is_binary=d.is_binary,
        tr_v=tr_v,
    )


def rounding_scale(p_hat, n_target):
    """Smallest multiplier ``c`` whose rounded ``c * p_hat`` adds up to ``n_target``.

    Every mass ``p_k`` contributes breakpoints ``(j + 1/2) / p_k`` where its
    rounded value steps up.  The rounded total is constant between
    consecutive distinct breakpoints, so scanning them in increasing order
    decides whether a valid ``c`` exists; the midpoint of the first interval
    with the right total is returned.  Returns ``None`` if there is none.
    """
    p = np.asarray(p_hat, dtype=float)
    pos = p[p > 0]
    if n_target < 1 or pos.size == 0:
        return None
    # breakpoints with j > n_target are irrelevant: beyond them the total exceeds n_target
    steps = np.arange(n_target + 1) + 0.5
    bp = np.sort((steps[None, :] / pos[:, None]).ravel())
    # masses equal up to roundoff must step together
    starts = np.flatnonzero(np.diff(bp) > BREAKPOINT_RTOL * bp[1:]) + 1
    starts = np.concatenate([[0], starts])
    ends = np.concatenate([starts[1:], [bp.size]])
    totals = ends
    hit = np.flatnonzero(totals == n_target)
    if hit.size == 0:
        return None
    i = hit[0]
    return 0.5 * (bp[ends[i] - 1] + bp[starts[i + 1]])


def round_measure(p_hat, n_target, z=None):
    """Round ``c * p_hat`` to integers adding up to ``n_target``.

    Raises
    ------
    NoValidScaleError
        No multiplier gives the requested total.
    SingularDesignError
        The rounded design exists but ``H`` is singular (only checked when
        ``z`` is given); the design is attached to the exception.
    """
    c = rounding_scale(p_hat, n_target)
    if c is None:
        raise NoValidScaleError(f"no multiplier rounds the measure to {n_target} runs")
    r = np.floor(c * np.asarray(p_hat, dtype=float) + 0.5).astype(np.int64)
    assert r.sum() == n_target
    d = ExactDesign(r)
    if z is not None:
        _h_inverse(d, z)
    return d


def parse_design(text, space):
    """Parse a design file: one run per line, a label or comma-separated levels.

    Blank lines and lines starting with ``#`` are skipped; repeated lines
    replicate a run.
    """
    labels = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if "," in line:
                labels.append(space.label(int(x) for x in line.split(",")))
            else:
                labels.append(int(line))
        except ValueError as exc:
            raise InvalidTreatmentError(f"line {lineno}: {exc}") from None
    if not labels:
        raise InvalidTreatmentError("design file has no runs")
    return ExactDesign.from_labels(labels, space.v)


def read_design(path, space):
    return parse_design(Path(path).read_text(), space)


def format_design(d, space=None, levels=False):
    """Design file text, one run per line."""
    lines = []
    for k in d.labels:
        if levels:
            lines.append(",".join(str(j) for j in space.unlabel(k)))
        else:
            lines.append(str(k))
    return "\n".join(lines) + "\n"


def write_design(path, d, space=None, levels=False, comment=None):
    text = format_design(d, space, levels)
    if comment:
        text = "".join(f"# {line}\n" for line in comment.splitlines()) + text
    Path(path).write_text(text)
