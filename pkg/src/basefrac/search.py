"""Discretization of the optimal measure into exact designs.

Three descent procedures shrink a large design one run at a time while
keeping ``eff_lb`` high:

* **A** starts from a rounded copy of the optimal measure (possibly
  non-binary) and, at each size, keeps the best single deletion if its
  ``eff_lb`` clears ``keep_threshold``, otherwise takes the best
  "delete two runs, add one" exchange.
* **B1** is A started from the full factorial with exchanges restricted to
  binary designs.
* **B2** is greedy single deletion from the full factorial.

All candidates of a step are scored in one batch.  Ties (values within a
relative ``TIE_RTOL``) go to the smallest move descriptor, so traces are
reproducible.
"""

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .design import ExactDesign, a_value, round_measure, score_design, v_matrix
from .errors import (
    BudgetExceededError,
    DeadEndError,
    NoInitialDesignError,
    NoValidScaleError,
    SingularDesignError,
)
from .linalg import batched_cholesky, batched_trace_inverse

log = logging.getLogger(__name__)

TIE_RTOL = 1e-10
# rank-one screening is only trusted on well-conditioned matrices
FAST_RTOL = 1e-7
SHORTLIST_RTOL = 1e-6
CHUNK = 32768
DEFAULT_BUDGET = 10**7


@dataclass(frozen=True)
class ProcedureConfig:
    target_n: int
    init_threshold: float = 0.98
    keep_threshold: float = 0.95
    rho_list: tuple = (1.0, 5.0)
    n1_hint: int = None
    n1_span: int = None
    fast: bool = False

    def __post_init__(self):
        if not 0 < self.keep_threshold <= self.init_threshold <= 1:
            raise ValueError("need 0 < keep_threshold <= init_threshold <= 1")
        object.__setattr__(self, "rho_list", tuple(float(r) for r in self.rho_list))


@dataclass(frozen=True)
class Move:
    """Runs deleted from and added to the previous design."""

    deleted: tuple = ()
    added: tuple = ()

    def __str__(self):
        parts = []
        for sign, labels in (("-", self.deleted), ("+", self.added)):
            if len(labels) == 1:
                parts.append(f"{sign} {labels[0]}")
            elif labels:
                parts.append(f"{sign} ({', '.join(map(str, labels))})")
        return " ".join(parts) if parts else "start"


@dataclass(frozen=True)
class SearchStep:
    n_runs: int
    move: Move
    design: ExactDesign
    a_value: float
    eff_lb: float
    eff_lb_rho: dict
    is_binary: bool


@dataclass
class SearchTrace:
    procedure: str
    steps: list = field(default_factory=list)

    @property
    def final(self):
        return self.steps[-1].design

    def step_at(self, n):
        for step in self.steps:
            if step.n_runs == n:
                return step
        raise KeyError(n)

    def design_at(self, n):
        return self.step_at(n).design


def _record(trace, design, move, model, s, rhos):
    with warnings.catch_warnings():
        # negative robust-bound numerators are expected far from the target
        warnings.simplefilter("ignore")
        sc = score_design(design, model.z, s, model.w, rhos)
    trace.steps.append(SearchStep(
        n_runs=design.n_runs, move=move, design=design, a_value=sc.a_value,
        eff_lb=sc.eff_lb, eff_lb_rho=sc.eff_lb_rho, is_binary=sc.is_binary,
    ))


def score_moves(z, r, deleted, added):
    """``tr(H^-1)`` of every candidate obtained from replications ``r``.

    ``deleted`` and ``added`` are lists of equal-length 0-based label
    arrays; candidate ``i`` removes ``deleted[j][i]`` and adds
    ``added[j][i]`` for every ``j``.  Singular candidates score ``inf``.
    """
    rf = r.astype(float)
    base_s = (z * rf[:, None]).T @ z
    base_g = z.T @ rf
    n_new = rf.sum() - len(deleted) + len(added)
    size = len(deleted[0]) if deleted else len(added[0])
    out = np.empty(size)
    for lo in range(0, size, CHUNK):
        hi = min(lo + CHUNK, size)
        s = np.broadcast_to(base_s, (hi - lo,) + base_s.shape).copy()
        g = np.broadcast_to(base_g, (hi - lo, base_g.size)).copy()
        for labels, sign in [(x, -1.0) for x in deleted] + [(x, 1.0) for x in added]:
            rows = z[labels[lo:hi]]
            s += sign * rows[:, :, None] * rows[:, None, :]
            g += sign * rows
        h = s - g[:, :, None] * g[:, None, :] / n_new
        out[lo:hi], _ = batched_trace_inverse(h)
    return out


def _pick(tr):
    """Index of the best (smallest) finite score, first among near ties."""
    best = np.min(tr)
    if not np.isfinite(best):
        return None
    return int(np.flatnonzero(tr <= best * (1 + TIE_RTOL))[0])


def best_delete_one(d, z, s):
    """Best design after deleting one run.

    Returns ``(design, eff_lb, move)``; ties go to the smallest deleted label.

    Raises
    ------
    DeadEndError
        Every single deletion gives a singular design.
    """
    support = np.flatnonzero(d.replications)
    tr = score_moves(z, d.replications, [support], [])
    i = _pick(tr)
    if i is None:
        raise DeadEndError(f"every deletion from the {d.n_runs}-run design is singular")
    k = int(support[i]) + 1
    return d.remove(k), s / ((d.n_runs - 1) * tr[i]), Move(deleted=(k,))


def _exchange_moves(d, binary_only=False):
    # deleted pairs, then (pair index, added label) per move
    r = d.replications
    v = r.size
    support = np.flatnonzero(r)
    pairs = [(a, b) for a, b in itertools.combinations_with_replacement(support, 2)
             if a != b or r[a] >= 2]
    if not pairs:
        empty = np.empty(0, np.int64)
        return np.empty((0, 2), np.int64), empty, empty
    pairs = np.array(pairs, dtype=np.int64)
    pidx = np.repeat(np.arange(len(pairs)), v)
    a, b = pairs[pidx, 0], pairs[pidx, 1]
    c = np.tile(np.arange(v), len(pairs))
    keep = np.ones(a.size, dtype=bool)
    if binary_only:
        keep &= (r[c] - (c == a) - (c == b)) <= 0
    degenerate = (c == a) | (c == b)
    rest = np.where(c == a, b, a)
    idx = np.flatnonzero(degenerate & keep)
    _, first = np.unique(rest[idx], return_index=True)
    drop = np.ones(idx.size, dtype=bool)
    drop[first] = False
    keep[idx[drop]] = False
    return pairs, pidx[keep], c[keep]


def exchange_candidates(d, binary_only=False):
    """Distinct "delete two, add one" moves as 0-based ``(a, b, c)`` arrays.

    Moves are in lexicographic order of (deleted pair, added label) and
    deduplicated by resulting design: re-adding one of the deleted runs is
    the same as a single deletion, and only the first such move is kept.
    """
    pairs, pidx, c = _exchange_moves(d, binary_only)
    return pairs[pidx, 0], pairs[pidx, 1], c


def exchange_table_fast(z, r, pairs):
    """``tr(H^-1)`` for every (deleted pair, added label), shape ``(P, v)``.

    Adding run ``c`` to the design with a pair removed is a rank-one update
    of the reduced design's information matrix ``K``:
    ``H_c = K + beta w_c w_c'`` with ``beta = 1 - 1/(N-1)`` and ``w_c`` the
    deviation of ``z_c`` from the reduced design's mean row.  One inverse of
    ``K`` per pair thus serves all ``v`` additions (Sherman-Morrison).
    Pairs whose ``K`` is singular or poorly conditioned are scored directly.
    """
    v, q = z.shape
    rf = r.astype(float)
    n = rf.sum()
    base_s = (z * rf[:, None]).T @ z
    base_g = z.T @ rf
    beta = 1.0 - 1.0 / (n - 1)
    # quadratic forms z_c' A z_c for all c at once via vec(A) . vec(z_c z_c')
    zz = (z[:, :, None] * z[:, None, :]).reshape(v, q * q)
    out = np.empty((len(pairs), v))
    step = max(1, 2_000_000 // (q * q))
    for lo in range(0, len(pairs), step):
        pp = pairs[lo:lo + step]
        za, zb = z[pp[:, 0]], z[pp[:, 1]]
        g0 = base_g - za - zb
        k = (base_s - za[:, :, None] * za[:, None, :] - zb[:, :, None] * zb[:, None, :]
             - g0[:, :, None] * g0[:, None, :] / (n - 2))
        chol, bad = batched_cholesky(k, FAST_RTOL)
        ok = np.flatnonzero(~bad)
        if ok.size:
            linv = np.linalg.inv(chol[ok])
            k1 = np.matmul(linv.transpose(0, 2, 1), linv)
            k2 = np.matmul(k1, k1)
            mu = g0[ok] / (n - 2)
            m1 = np.matmul(k1, mu[:, :, None])[:, :, 0]
            m2 = np.matmul(k2, mu[:, :, None])[:, :, 0]
            # w' K^-1 w and w' K^-2 w with w = z_c - mu
            quad1 = (k1.reshape(-1, q * q) @ zz.T - 2 * (m1 @ z.T)
                     + (mu * m1).sum(axis=1)[:, None])
            quad2 = (k2.reshape(-1, q * q) @ zz.T - 2 * (m2 @ z.T)
                     + (mu * m2).sum(axis=1)[:, None])
            out[lo + ok] = (np.trace(k1, axis1=1, axis2=2)[:, None]
                            - beta * quad2 / (1.0 + beta * quad1))
        for i in np.flatnonzero(bad):
            a = np.full(v, pp[i, 0])
            b = np.full(v, pp[i, 1])
            out[lo + i] = score_moves(z, r, [a, b], [np.arange(v)])
    return out


def best_delete_two_add_one(d, z, s, binary_only=False, fast=False):
    """Best design after deleting two runs and adding one.

    With ``binary_only`` set, additions that would repeat a treatment are
    skipped.  With ``fast`` set, candidates are screened by rank-one updates
    and only those near the best are rescored from scratch, so the chosen
    move is the same as without it.  Returns ``(design, eff_lb, move)``.

    Raises
    ------
    DeadEndError
        Every candidate is singular.
    """
    pairs, pidx, c = _exchange_moves(d, binary_only)
    if c.size == 0:
        raise DeadEndError("no exchange candidates")
    a, b = pairs[pidx, 0], pairs[pidx, 1]
    if fast:
        screened = exchange_table_fast(z, d.replications, pairs)[pidx, c]
        screened[~np.isfinite(screened) | (screened <= 0)] = np.inf
        best = np.min(screened)
        short = np.flatnonzero(screened <= best * (1 + SHORTLIST_RTOL))
        if short.size == 0:
            short = np.arange(c.size)
        a, b, c = a[short], b[short], c[short]
    tr = score_moves(z, d.replications, [a, b], [c])
    i = _pick(tr)
    if i is None:
        raise DeadEndError(f"every exchange from the {d.n_runs}-run design is singular")
    ka, kb, kc = int(a[i]) + 1, int(b[i]) + 1, int(c[i]) + 1
    return (d.remove(ka, kb).add(kc), s / ((d.n_runs - 1) * tr[i]),
            Move(deleted=(ka, kb), added=(kc,)))


def _descend(trace, model, s, cfg, exchange, binary_only):
    d = trace.final
    while d.n_runs > cfg.target_n:
        try:
            if not exchange:
                d, _, move = best_delete_one(d, model.z, s)
            else:
                try:
                    d1, e1, m1 = best_delete_one(d, model.z, s)
                except DeadEndError:
                    e1 = -np.inf
                if e1 >= cfg.keep_threshold:
                    d, move = d1, m1
                else:
                    d, _, move = best_delete_two_add_one(d, model.z, s, binary_only, cfg.fast)
        except DeadEndError as exc:
            exc.trace = trace
            raise
        _record(trace, d, move, model, s, cfg.rho_list)
        log.debug("%s: N=%d %s eff_lb=%.4f", trace.procedure, d.n_runs, move,
                  trace.steps[-1].eff_lb)
    return trace


def _check_target(model, cfg, n_max=None):
    if cfg.target_n < model.q + 1:
        raise ValueError(f"target N = {cfg.target_n} is below q + 1 = {model.q + 1}; "
                         "theta would not be estimable")
    if n_max is not None and cfg.target_n > n_max:
        raise ValueError(f"target N = {cfg.target_n} exceeds the {n_max}-run start")


def initial_rounded_design(model, optimum, cfg):
    """Step I of procedure A: smallest scanned ``N_1`` whose rounded design is efficient enough."""
    start = cfg.n1_hint or max(2 * model.v, cfg.target_n + 1)
    span = cfg.n1_span or 10 * model.v
    for n1 in range(max(start, cfg.target_n), start + span + 1):
        try:
            d = round_measure(optimum.p_hat, n1, model.z)
        except (NoValidScaleError, SingularDesignError):
            continue
        if optimum.s / (n1 * a_value(d, model.z)) >= cfg.init_threshold:
            return d
    raise NoInitialDesignError(
        f"no rounded design with eff_lb >= {cfg.init_threshold} for N1 in "
        f"{start}..{start + span}"
    )


def procedure_a(model, optimum, cfg):
    """Rounded start, deletions while ``eff_lb >= keep_threshold``, exchanges otherwise."""
    _check_target(model, cfg)
    trace = SearchTrace("A")
    _record(trace, initial_rounded_design(model, optimum, cfg), Move(), model,
            optimum.s, cfg.rho_list)
    return _descend(trace, model, optimum.s, cfg, exchange=True, binary_only=False)


def procedure_b2(model, s, cfg):
    """Greedy single deletions from the full factorial."""
    _check_target(model, cfg, model.v)
    trace = SearchTrace("B2")
    _record(trace, ExactDesign.full_factorial(model.v), Move(), model, s, cfg.rho_list)
    return _descend(trace, model, s, cfg, exchange=False, binary_only=True)


def procedure_b1(model, s, cfg):
    """Procedure A restricted to binary designs, from the full factorial.

    With ``cfg.n1_hint`` set, starts instead from the ``n1_hint``-run design
    on the B2 trace, which must have ``eff_lb >= init_threshold``.
    """
    _check_target(model, cfg, model.v)
    trace = SearchTrace("B1")
    if cfg.n1_hint and cfg.n1_hint < model.v:
        n1 = max(cfg.n1_hint, cfg.target_n)
        b2 = procedure_b2(model, s, ProcedureConfig(
            target_n=n1, init_threshold=cfg.init_threshold,
            keep_threshold=cfg.keep_threshold, rho_list=cfg.rho_list, fast=cfg.fast))
        start = b2.steps[-1]
        if start.eff_lb < cfg.init_threshold:
            raise NoInitialDesignError(
                f"B2 design at N1 = {n1} has eff_lb {start.eff_lb:.4f} < {cfg.init_threshold}")
        trace.steps.append(start)
    else:
        _record(trace, ExactDesign.full_factorial(model.v), Move(), model, s, cfg.rho_list)
    return _descend(trace, model, s, cfg, exchange=True, binary_only=True)


@dataclass(frozen=True)
class OracleResult:
    n_runs: int
    min_a_value: float
    argmin: ExactDesign
    min_psi: dict
    argmin_psi: dict
    n_designs: int

    def true_efficiency(self, design, model, rho=0.0):
        """Oracle minimum of the (normalized) robust score over that of ``design``."""
        a = a_value(design, model.z)
        if rho == 0:
            return self.min_a_value / a
        tr_v = float(np.trace(v_matrix(design, model.z)))
        return self.min_psi[float(rho)] / (a + rho * (tr_v - model.trace_w))


def brute_force_binary_oracle(model, n, rho_list=(1.0, 5.0), budget=DEFAULT_BUDGET):
    """Exhaustive search over all ``n``-run binary designs.

    Returns the smallest ``tr(H^-1)`` and, for each ``rho``, the smallest
    ``tr(H^-1) + rho (tr V - tr W)`` (``psi`` divided by ``sigma^2``), with
    the first minimizer in lexicographic label order.

    Raises
    ------
    BudgetExceededError
        ``C(v, n)`` exceeds ``budget``.
    """
    v, z = model.v, model.z
    total = math.comb(v, n)
    if total > budget:
        raise BudgetExceededError(
            f"C({v}, {n}) = {total} designs exceeds the budget of {budget}",
            required=total, budget=budget)
    if n < 1:
        raise ValueError("n must be positive")
    rows_dtype = np.dtype((np.int64, n))
    combos = itertools.combinations(range(v), n)
    chunk = max(1, CHUNK * 4 // n)
    best, best_idx = np.inf, None
    seen = 0
    while True:
        block = np.fromiter(itertools.islice(combos, chunk), dtype=rows_dtype)
        if block.size == 0:
            break
        zs = z[block]
        g = zs.sum(axis=1)
        h = np.einsum("bni,bnj->bij", zs, zs) - g[:, :, None] * g[:, None, :] / n
        tr, _ = batched_trace_inverse(h)
        i = _pick(tr)
        if i is not None and tr[i] < best * (1 - TIE_RTOL):
            best, best_idx = float(tr[i]), block[i].copy()
        seen += len(block)
    if best_idx is None:
        raise SingularDesignError(f"every {n}-run binary design is singular")
    argmin = ExactDesign.from_labels(best_idx + 1, v)
    tr_w = model.trace_w
    # binary designs have V = H^-1, so the robust score is monotone in tr(H^-1)
    min_psi = {float(rho): best + rho * (best - tr_w) for rho in rho_list}
    return OracleResult(
        n_runs=n, min_a_value=best, argmin=argmin, min_psi=min_psi,
        argmin_psi={float(rho): argmin for rho in rho_list}, n_designs=seen,
    )
