"""Baseline-parametrized factorial models.

Treatment combinations ``j = (j_1, ..., j_n)`` with ``0 <= j_i < m_i`` are
labelled ``1..v`` in lexicographic order.  A requirement set lists the
factorial effects kept in the model; each effect contributes one parameter
per combination of nonzero levels of its factors.  The model is
``tau = theta_0 * 1 + Z theta`` and everything downstream works with ``Z``.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateModelError, InvalidModelError, InvalidTreatmentError
from .linalg import DESIGN_RTOL, rank, spd_inverse


@dataclass(frozen=True)
class FactorialSpace:
    """An ``m_1 x ... x m_n`` factorial with lexicographic labels."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(int(m) for m in self.levels)
        if not levels:
            raise InvalidModelError("a factorial needs at least one factor")
        if any(m < 2 for m in levels):
            raise InvalidModelError(f"every factor needs at least 2 levels, got {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def n(self):
        return len(self.levels)

    @property
    def v(self):
        return math.prod(self.levels)

    @cached_property
    def strides(self):
        """``mu_i = v / (m_1 ... m_i)``; the last stride is 1."""
        out = []
        rest = self.v
        for m in self.levels:
            rest //= m
            out.append(rest)
        return tuple(out)

    def label(self, treatment):
        """1-based label of a treatment combination."""
        treatment = tuple(int(j) for j in treatment)
        if len(treatment) != self.n:
            raise InvalidTreatmentError(f"expected {self.n} levels, got {len(treatment)}")
        for j, m in zip(treatment, self.levels):
            if not 0 <= j < m:
                raise InvalidTreatmentError(f"level {j} out of range for a {m}-level factor")
        return sum(mu * j for mu, j in zip(self.strides, treatment)) + 1

    def unlabel(self, k):
        """Treatment combination carrying label ``k``."""
        k = int(k)
        if not 1 <= k <= self.v:
            raise InvalidTreatmentError(f"label {k} outside 1..{self.v}")
        rest = k - 1
        out = []
        for mu in self.strides:
            j, rest = divmod(rest, mu)
            out.append(j)
        return tuple(out)

    @cached_property
    def treatments(self):
        """All treatment combinations as a ``(v, n)`` integer array, row ``k-1`` = label ``k``."""
        grids = np.meshgrid(*[np.arange(m) for m in self.levels], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def format_treatment(self, treatment):
        # digit strings are ambiguous once a factor has more than 10 levels
        if max(self.levels) > 10:
            return "-".join(str(j) for j in treatment)
        return "".join(str(j) for j in treatment)


@dataclass(frozen=True, order=True)
class Effect:
    """A main effect or interaction, given by its 1-based factor indices."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(int(i) for i in self.factors)
        if not factors:
            raise InvalidModelError("an effect needs at least one factor")
        if len(set(factors)) != len(factors):
            raise InvalidModelError(f"repeated factor in effect {factors}")
        object.__setattr__(self, "factors", tuple(sorted(factors)))

    @classmethod
    def parse(cls, text):
        """Parse ``"3"`` or ``"1x6"`` (also accepts ``*`` and ``:`` as separators)."""
        text = str(text).strip()
        for sep in ("*", ":", "X"):
            text = text.replace(sep, "x")
        try:
            return cls(tuple(int(part) for part in text.split("x")))
        except ValueError:
            raise InvalidModelError(f"malformed effect {text!r}") from None

    @property
    def order(self):
        return len(self.factors)

    def __str__(self):
        return "".join(f"F{i}" for i in self.factors)


def effect_dimension(space, effect):
    """Number of parameters an effect contributes: the product of ``m_i - 1``."""
    return math.prod(space.levels[i - 1] - 1 for i in effect.factors)


@dataclass(frozen=True)
class RequirementSet:
    """Ordered collection of effects retained in the model."""

    space: FactorialSpace
    effects: tuple

    def __post_init__(self):
        effects = tuple(e if isinstance(e, Effect) else Effect(tuple(e)) for e in self.effects)
        if not effects:
            raise InvalidModelError("the requirement set is empty")
        if len(set(effects)) != len(effects):
            raise InvalidModelError("duplicate effect in requirement set")
        for e in effects:
            if e.factors[-1] > self.space.n or e.factors[0] < 1:
                raise InvalidModelError(f"effect {e} refers to a factor outside 1..{self.space.n}")
        object.__setattr__(self, "effects", effects)
        mains = {e.factors for e in effects if e.order == 1}
        for e in effects:
            missing = [i for i in e.factors if e.order > 1 and (i,) not in mains]
            if missing:
                warnings.warn(
                    f"interaction {e} is present without main effect(s) "
                    + ", ".join(f"F{i}" for i in missing),
                    stacklevel=3,
                )
        if self.q + 1 > self.space.v:
            raise InvalidModelError(
                f"q + 1 = {self.q + 1} exceeds v = {self.space.v}; theta cannot be estimable"
            )

    @classmethod
    def parse(cls, space, spec):
        """Build from ``"1;2;3;1x3"`` or a list of factor-index lists."""
        if isinstance(spec, str):
            parts = [p for p in spec.replace(",", ";").split(";") if p.strip()]
            effects = [Effect.parse(p) for p in parts]
        else:
            effects = [Effect.parse(e) if isinstance(e, str) else
                       Effect(tuple(e) if not isinstance(e, int) else (e,)) for e in spec]
        return cls(space, tuple(effects))

    @classmethod
    def main_effects(cls, space):
        return cls(space, tuple(Effect((i,)) for i in range(1, space.n + 1)))

    @property
    def q(self):
        return sum(effect_dimension(self.space, e) for e in self.effects)

    @cached_property
    def parameters(self):
        """Parameter index tuples ``u`` in column order of ``Z``."""
        out = []
        n = self.space.n
        for e in self.effects:
            ranges = [range(1, self.space.levels[i - 1]) for i in e.factors]
            for combo in itertools.product(*ranges):
                u = [0] * n
                for i, level in zip(e.factors, combo):
                    u[i - 1] = level
                out.append(tuple(u))
        return tuple(out)

    def __str__(self):
        return "{" + ", ".join(str(e) for e in self.effects) + "}"


@dataclass(frozen=True)
class ModelMatrices:
    """``Z`` (v x q), ``X = [1, Z]`` and ``W = (Z' Delta(1) Z)^-1``."""

    z: np.ndarray
    x: np.ndarray
    w: np.ndarray

    @property
    def q(self):
        return self.z.shape[1]

    @property
    def v(self):
        return self.z.shape[0]


def build_model_matrices(space, reqset):
    """Assemble ``Z``, ``X`` and ``W`` for a requirement set.

    Row ``k`` of ``Z`` has a one in the column of parameter ``u`` exactly
    when treatment ``k`` sits at level ``u_i`` on every factor of the
    parameter's effect.

    Raises
    ------
    DegenerateModelError
        If ``X`` does not have full column rank.
    """
    t = space.treatments
    cols = []
    for u in reqset.parameters:
        idx = [i for i, level in enumerate(u) if level]
        cols.append(np.all(t[:, idx] == np.array([u[i] for i in idx]), axis=1))
    z = np.column_stack(cols).astype(float)
    x = np.column_stack([np.ones(space.v), z])
    if rank(x, DESIGN_RTOL) < x.shape[1]:
        raise DegenerateModelError("full-model matrix X is rank deficient")
    centered = z - z.mean(axis=0)
    w = spd_inverse(centered.T @ centered)
    if w is None:
        raise DegenerateModelError("Z' Delta(1) Z is singular")
    for a in (z, x, w):
        a.setflags(write=False)
    return ModelMatrices(z=z, x=x, w=w)


def build_orthocomplement(x):
    """Orthonormal basis of the orthogonal complement of the column space of ``x``."""
    x = np.asarray(x, dtype=float)
    v, p = x.shape
    u, sv, _ = np.linalg.svd(x, full_matrices=True)
    if sv.size == 0 or np.sum(sv > DESIGN_RTOL * sv[0]) < p:
        raise DegenerateModelError("X is rank deficient")
    return u[:, p:]


@dataclass(frozen=True)
class FactorialModel:
    """Factorial space, requirement set and model matrices bundled together."""

    space: FactorialSpace
    reqset: RequirementSet
    matrices: ModelMatrices = field(repr=False)

    @classmethod
    def build(cls, levels, effects=None):
        """``effects=None`` gives the main-effects model."""
        space = FactorialSpace(tuple(levels))
        if effects is None:
            reqset = RequirementSet.main_effects(space)
        else:
            reqset = RequirementSet.parse(space, effects)
        return cls(space, reqset, build_model_matrices(space, reqset))

    @property
    def z(self):
        return self.matrices.z

    @property
    def w(self):
        return self.matrices.w

    @property
    def v(self):
        return self.space.v

    @property
    def q(self):
        return self.reqset.q

    @cached_property
    def trace_w(self):
        return float(np.trace(self.matrices.w))
