"""Built-in problem families and preset wiring.

The reference benchmark ("section4") is a one-dimensional family on the
interval [-1, 1]: equilibrium members whose scalar profiles vanish left of a
threshold and grow like ``tan(x - threshold) - (x - threshold)`` to its
right, paired with zero operators, plus quadratic-drop mappings
``x -> x - c * x^2`` on [0, 1] that fix every nonpositive point. The common
solution set is the interval from -1 to the smallest threshold, so the
projection of the anchor 1 onto it is that threshold. The family ships with
closed-form chunk kernels, which keeps candidate generation vectorized at
millions of members.

The presets "cor1" .. "cor5" wire user-supplied parts into reduced schemes:
pure equilibrium members, variational-inequality members, the single-member
case, asymptotically nonexpansive mappings wrapped as asymptotic
pseudocontractions, and the exact-cut scheme without operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .geometry import Ball, BaseSet, Box, as_vector
from .operators import (
    ProblemFamily,
    PseudoContraction,
    ScalarMonotoneBifunction,
    ZeroBifunction,
    zero_operator,
)
from .solver import ParamSchedule, SolverConfig

__all__ = [
    "Section4Spec",
    "build_section4",
    "section4_bifunction",
    "section4_map",
    "preset",
    "known_solution_set",
    "IntervalSolution",
    "PointSolution",
    "UnsupportedProblemError",
    "default_schedule",
]

# Widest bracket on which tan(u) - u stays finite and nondecreasing
# (singularity at u = pi/2, approx 1.5708).
_TAN_BRACKET_SPAN = 1.5

PRESET_NAMES = ("section4", "cor1", "cor2", "cor3", "cor4", "cor5")


class UnsupportedProblemError(ValueError):
    """The problem carries no analytic solution description."""


@dataclass(frozen=True)
class IntervalSolution:
    """Known solution set of a one-dimensional problem: ``[lo, hi]``."""

    lo: float
    hi: float

    def contains(self, u, tol: float = 1e-12) -> bool:
        value = float(as_vector(u)[0])
        return self.lo - tol <= value <= self.hi + tol

    def project(self, x0) -> np.ndarray:
        return np.array([min(max(float(as_vector(x0)[0]), self.lo), self.hi)])

    def describe(self) -> str:
        return f"interval [{self.lo:.17g}, {self.hi:.17g}]"


@dataclass(frozen=True)
class PointSolution:
    """Known singleton solution set."""

    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", as_vector(self.point))

    def contains(self, u, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(as_vector(u) - self.point)) <= tol

    def project(self, x0) -> np.ndarray:
        return np.array(self.point)

    def describe(self) -> str:
        return f"point {self.point.tolist()!r}"


class _LazyMembers(Sequence):
    """Sequence view constructing members on demand from an index factory."""

    def __init__(self, count: int, factory):
        self._count = count
        self._factory = factory

    def __len__(self) -> int:
        return self._count

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(self._count))]
        i = index + self._count if index < 0 else index
        if not 0 <= i < self._count:
            raise IndexError(index)
        return self._factory(i)


def section4_bifunction(xi: float) -> ScalarMonotoneBifunction:
    """Benchmark equilibrium member with threshold ``xi``.

    The profile is zero left of ``xi`` and ``tan(z - xi) - (z - xi)`` to the
    right. The bracket is capped at ``xi + 1.5`` to stay inside the branch
    where the profile is finite and nondecreasing; every resolvent value
    lands strictly inside the cap because ``arctan`` is bounded by pi/2.
    """

    def profile(z: float) -> float:
        u = z - xi
        if u < 0.0:
            return 0.0
        return math.tan(u) - u

    return ScalarMonotoneBifunction(
        profile=profile, lo=-1.0, hi=min(1.0, xi + _TAN_BRACKET_SPAN)
    )


def section4_map(c: float) -> PseudoContraction:
    """Benchmark mapping ``x -> x - c * x^2`` on [0, 1], identity below 0.

    For ``1 < c < 2`` it is strictly pseudocontractive but not nonexpansive.
    The declared constant ``1 - 1/c`` is tight: the complement ``x -> c*x^2``
    (zero below 0) has inverse-strong-monotonicity modulus exactly
    ``1/(2c)``, attained as both arguments approach 1.
    """
    if not 1.0 < c < 2.0:
        raise ValueError("quadratic-drop coefficient must lie in (1, 2)")

    def mapping(v: np.ndarray) -> np.ndarray:
        # grouped as c * (v * v) to agree bitwise with the chunk kernel
        return np.where(v < 0.0, v, v - c * (v * v))

    return PseudoContraction(map=mapping, kappa=1.0 - 1.0 / c)


@dataclass(frozen=True)
class Section4Spec:
    """Sizes and derived constants of the reference benchmark family."""

    n_geps: int
    n_maps: int

    def __post_init__(self):
        if self.n_geps < 1 or self.n_maps < 1:
            raise ValueError("benchmark needs at least one member of each kind")

    @cached_property
    def thresholds(self) -> np.ndarray:
        i = np.arange(1, self.n_geps + 1, dtype=np.float64)
        return -1.0 + 2.0 * i / (self.n_geps + 1)

    @cached_property
    def coefficients(self) -> np.ndarray:
        j = np.arange(1, self.n_maps + 1, dtype=np.float64)
        return 2.0 - j / (self.n_maps + 1)

    @property
    def kappa(self) -> float:
        # Largest member constant 1 - 1/c at c = 2 - 1/(M+1).
        return self.n_maps / (2.0 * self.n_maps + 1.0)

    @property
    def beta(self) -> float:
        return self.kappa

    @property
    def omega(self) -> float:
        return 1.0

    @property
    def reference(self) -> float:
        """Projection of the anchor 1 onto the solution interval."""
        return float(self.thresholds[0])


def _section4_kernels(spec: Section4Spec):
    thresholds = spec.thresholds
    coefficients = spec.coefficients

    def gep_kernel(lo: int, hi: int, r: float, x: np.ndarray) -> np.ndarray:
        if r != 1.0:
            raise ValueError("closed-form benchmark kernel requires unit step r=1")
        point = float(x[0])
        xi = thresholds[lo:hi]
        gap = point - xi
        fixed = gap < 0.0
        np.arctan(gap, out=gap)
        gap += xi
        gap[fixed] = point
        return gap.reshape(-1, 1)

    def map_kernel(lo: int, hi: int, power: int, v: np.ndarray) -> np.ndarray:
        # Members are plain pseudocontractions: effective power is one.
        point = float(v[0])
        m = hi - lo
        if point < 0.0:
            return np.full((m, 1), point)
        s = coefficients[lo:hi] * (-point * point)
        s += point
        return s.reshape(-1, 1)

    return gep_kernel, map_kernel


def build_section4(n_geps: int, n_maps: int):
    """Construct the reference benchmark family at the given sizes.

    Returns ``(family, schedule, reference)`` where ``reference`` is the
    known limit of the solver started at the anchor 1. The schedule uses
    averaging weights ``1/(n+2)`` (shifted so the first weight already lies
    in (0, 1)), the constant mapping relaxation equal to the family
    pseudocontraction constant, and unit resolvent steps.
    """
    spec = Section4Spec(n_geps=n_geps, n_maps=n_maps)
    thresholds = spec.thresholds
    coefficients = spec.coefficients
    base = Box(lo=[-1.0], hi=[1.0])
    gep_kernel, map_kernel = _section4_kernels(spec)

    def gep_member(i: int):
        return (section4_bifunction(float(thresholds[i])), zero_operator())

    def map_member(j: int):
        return section4_map(float(coefficients[j]))

    family = ProblemFamily(
        base=base,
        geps=_LazyMembers(n_geps, gep_member),
        maps=_LazyMembers(n_maps, map_member),
        alpha=math.inf,
        kappa=spec.kappa,
        k_seq=lambda n: 1.0,
        gep_kernel=gep_kernel,
        map_kernel=map_kernel,
        known_solution=IntervalSolution(lo=-1.0, hi=spec.reference),
    )
    schedule = ParamSchedule(
        alpha_fn=lambda n: 1.0 / (n + 2),
        beta_fn=lambda n, _beta=spec.beta: _beta,
        r_fn=lambda n: 1.0,
        k_fn=lambda n: 1.0,
        omega=spec.omega,
        b=0.5,
        d=1.0,
        e=1.0,
    )
    return family, schedule, spec.reference


def _norm_bound(base: BaseSet) -> float:
    if isinstance(base, Box):
        return float(np.linalg.norm(np.maximum(np.abs(base.lo), np.abs(base.hi))))
    if isinstance(base, Ball):
        return float(np.linalg.norm(base.center)) + base.radius
    raise ValueError("supply omega explicitly for custom base sets")


def default_schedule(
    family: ProblemFamily,
    *,
    beta: float | None = None,
    r: float | None = None,
    omega: float | None = None,
    k_fn=None,
) -> ParamSchedule:
    """Admissible schedule derived from the family constants.

    Averaging weights default to ``1/(n+2)``; the mapping relaxation
    defaults to the family pseudocontraction constant; resolvent steps
    default to the modulus (safely inside ``(0, 2 * modulus)``) or 1 when
    every operator is zero.
    """
    beta_v = family.kappa if beta is None else beta
    if r is None:
        r_v = 1.0 if math.isinf(family.alpha) else family.alpha
    else:
        r_v = r
    omega_v = _norm_bound(family.base) if omega is None else omega
    k = k_fn if k_fn is not None else family.k_seq
    return ParamSchedule(
        alpha_fn=lambda n: 1.0 / (n + 2),
        beta_fn=lambda n: beta_v,
        r_fn=lambda n: r_v,
        k_fn=k,
        omega=omega_v,
        b=max(beta_v, 0.5 * (family.kappa + 1.0)),
        d=r_v,
        e=r_v,
    )


def _as_pairs(bifunctions, operators):
    return tuple(zip(bifunctions, operators, strict=True))


def preset(name: str, *, base: BaseSet, bifunctions=(), operators=(), maps=(),
           known_solution=None, omega: float | None = None):
    """Wire user parts into one of the reduced schemes.

    Returns ``(family, config, schedule)``. Preset names:

    - ``cor1``: equilibrium members (paired with zero operators) followed by
      variational-inequality members (zero bifunctions with the given
      operators), plus mappings.
    - ``cor2``: variational-inequality members only, plus mappings.
    - ``cor3``: a single bifunction, operator, and mapping.
    - ``cor4``: asymptotically nonexpansive mappings (declared with zero
      pseudocontraction constant); each is wrapped with the squared
      asymptotic sequence, the mapping relaxation is pinned to zero, and the
      cut slack uses the squared variant with the original sequence.
    - ``cor5``: equilibrium members and plain mappings with exact cuts.
    """
    if name == "section4":
        raise ValueError("use build_section4 for the benchmark preset")
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}")
    bifunctions = tuple(bifunctions)
    operators = tuple(operators)
    maps = tuple(maps)

    if name == "cor1":
        geps = tuple((f, zero_operator()) for f in bifunctions) + tuple(
            (ZeroBifunction(), A) for A in operators
        )
        family = ProblemFamily.from_members(
            base, geps, maps, known_solution=known_solution
        )
        cfg = SolverConfig(mode="algorithm1")
        sched = default_schedule(family, omega=omega)
    elif name == "cor2":
        if bifunctions:
            raise ValueError("cor2 takes operators only; bifunctions are zero")
        geps = tuple((ZeroBifunction(), A) for A in operators)
        family = ProblemFamily.from_members(
            base, geps, maps, known_solution=known_solution
        )
        cfg = SolverConfig(mode="algorithm1")
        sched = default_schedule(family, omega=omega)
    elif name == "cor3":
        if not (len(bifunctions) == 1 and len(operators) == 1 and len(maps) == 1):
            raise ValueError("cor3 takes exactly one bifunction, operator, and map")
        family = ProblemFamily.from_members(
            base, _as_pairs(bifunctions, operators), maps,
            known_solution=known_solution,
        )
        cfg = SolverConfig(mode="algorithm1")
        sched = default_schedule(family, omega=omega)
    elif name == "cor4":
        if any(s.kappa != 0.0 for s in maps):
            raise ValueError(
                "cor4 expects asymptotically nonexpansive mappings declared "
                "with zero pseudocontraction constant"
            )
        original = [s.k_seq for s in maps]
        wrapped = tuple(
            replace(s, asymptotic=True, k_seq=_squared_sequence(s.k_seq))
            for s in maps
        )
        if not operators:
            operators = tuple(zero_operator() for _ in bifunctions)
        family = ProblemFamily.from_members(
            base, _as_pairs(bifunctions, operators), wrapped,
            known_solution=known_solution,
        )
        cfg = SolverConfig(mode="algorithm1", epsilon_variant="squared")
        if original:
            seqs = tuple(original)
            base_k = lambda n: max(k(n) for k in seqs)  # noqa: E731
        else:
            base_k = lambda n: 1.0  # noqa: E731
        sched = default_schedule(family, beta=0.0, omega=omega, k_fn=base_k)
    elif name == "cor5":
        if any(s.asymptotic for s in maps):
            raise ValueError("cor5 takes plain pseudocontractions")
        geps = tuple((f, zero_operator()) for f in bifunctions)
        family = ProblemFamily.from_members(
            base, geps, maps, known_solution=known_solution
        )
        cfg = SolverConfig(mode="algorithm2")
        sched = default_schedule(family, omega=omega)
    return family, cfg, sched


def _squared_sequence(k_seq):
    return lambda n: k_seq(n) ** 2


def known_solution_set(problem: ProblemFamily):
    """Analytic solution description attached by the built-in constructors.

    Raises:
        UnsupportedProblemError: the family carries none.
    """
    if problem.known_solution is None:
        raise UnsupportedProblemError(
            "no analytic solution set is attached to this problem"
        )
    return problem.known_solution
