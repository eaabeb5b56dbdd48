"""Problem operators: bifunction resolvents, inverse-strongly-monotone
operators, and (asymptotically) strictly pseudocontractive mappings.

A problem family bundles N bifunction/operator pairs and M mappings over one
base set, together with the shared constants the solver needs: the smallest
inverse-strong-monotonicity modulus, the largest pseudocontraction constant,
and the pointwise-largest asymptotic sequence. Large built-in families may
additionally carry vectorized chunk kernels so candidate generation does not
touch per-member Python objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .geometry import BaseSet, as_vector

__all__ = [
    "Bifunction",
    "ZeroBifunction",
    "ScalarMonotoneBifunction",
    "CustomBifunction",
    "IsmOperator",
    "zero_operator",
    "affine_operator",
    "PseudoContraction",
    "identity_map",
    "ProblemFamily",
    "resolvent",
    "resolvent_scalar",
    "apply_power",
    "lipschitz_bound",
    "verify_family",
    "MemberCheck",
    "FamilyReport",
    "InvalidModelError",
    "ResolventFailure",
    "gep_chunk_evaluator",
    "map_chunk_evaluator",
]

DEFAULT_RESOLVENT_TOL = 1e-12
MAX_HALVINGS = 200


class InvalidModelError(ValueError):
    """A declared model property fails on observed data, e.g. a bifunction
    whose scalar profile is not nondecreasing on its interval."""


class ResolventFailure(RuntimeError):
    """Scalar root finding failed; carries the final bracket state."""

    def __init__(self, message: str, bracket: tuple[float, float, float, float]):
        super().__init__(message)
        self.bracket = bracket


class Bifunction:
    """Equilibrium bifunction presented through its resolvent.

    Construction of a concrete variant declares that the usual equilibrium
    conditions hold (vanishing diagonal, monotonicity, upper hemicontinuity
    in the first argument, convex lower-semicontinuous second argument).
    Only the scalar variant is audited at runtime; see
    :func:`verify_family`.
    """

    def resolve(self, r: float, w: np.ndarray, base: BaseSet, tol: float) -> np.ndarray:
        raise NotImplementedError


class ZeroBifunction(Bifunction):
    """The identically zero bifunction; its resolvent is the base projection."""

    def resolve(self, r: float, w: np.ndarray, base: BaseSet, tol: float) -> np.ndarray:
        return base.project(w)


@dataclass(frozen=True)
class ScalarMonotoneBifunction(Bifunction):
    """One-dimensional bifunction ``f(x, y) = profile(x) * (y - x)`` with a
    nondecreasing profile on ``[lo, hi]``.

    The interval is both the root bracket and the clamp region of the
    resolvent; it may be narrower than the base set when the profile is only
    finite and nondecreasing on part of it, as long as every resolvent value
    stays interior to the bracket.
    """

    profile: Callable[[float], float]
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError("bifunction interval requires lo < hi")

    def resolve(self, r: float, w: np.ndarray, base: BaseSet, tol: float) -> np.ndarray:
        if w.size != 1:
            raise ValueError("scalar bifunction requires a 1-D problem")
        z = resolvent_scalar(self.profile, r, float(w[0]), self.lo, self.hi, tol)
        return np.array([z])


@dataclass(frozen=True)
class CustomBifunction(Bifunction):
    """Bifunction given directly by a resolvent oracle ``(r, w) -> point``.

    The oracle must be single-valued, firmly nonexpansive, and reentrant;
    these properties are trusted, not audited.
    """

    oracle: Callable[[float, np.ndarray], np.ndarray]

    def resolve(self, r: float, w: np.ndarray, base: BaseSet, tol: float) -> np.ndarray:
        return as_vector(self.oracle(r, w))


@dataclass(frozen=True)
class IsmOperator:
    """Operator with an inverse-strong-monotonicity modulus.

    ``<A(x) - A(y), x - y> >= alpha * ||A(x) - A(y)||^2`` must hold on the
    base set; it implies ``A`` is ``1/alpha``-Lipschitz. A constant operator
    may declare ``alpha = inf``.
    """

    map: Callable[[np.ndarray], np.ndarray]
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("inverse-strong-monotonicity modulus must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.map(x), dtype=np.float64)


def zero_operator() -> IsmOperator:
    """The zero operator; any modulus works, so it declares infinity."""
    return IsmOperator(map=np.zeros_like, alpha=math.inf)


def affine_operator(gain: float, root) -> IsmOperator:
    """Operator ``x -> gain * (x - root)`` with its exact modulus ``1/gain``."""
    if not gain > 0:
        raise ValueError("affine operator requires a positive gain")
    root_v = as_vector(root)
    return IsmOperator(map=lambda x: gain * (x - root_v), alpha=1.0 / gain)


@dataclass(frozen=True)
class PseudoContraction:
    """Self-map of the base set with a strict-pseudocontraction constant.

    For ``asymptotic`` maps the inequality
    ``||S^n x - S^n y||^2 <= k_n ||x - y||^2 + kappa ||(I-S^n)x - (I-S^n)y||^2``
    must hold for every power ``n >= 1`` with ``k_n -> 1``; plain maps
    satisfy it for ``n = 1`` with ``k = 1`` and are always applied at power
    one by the solver.
    """

    map: Callable[[np.ndarray], np.ndarray]
    kappa: float
    asymptotic: bool = False
    k_seq: Callable[[int], float] = lambda n: 1.0

    def __post_init__(self):
        if not (0.0 <= self.kappa < 1.0):
            raise ValueError("pseudocontraction constant must lie in [0, 1)")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.map(x), dtype=np.float64)


def identity_map() -> PseudoContraction:
    return PseudoContraction(map=lambda x: np.array(x, dtype=np.float64), kappa=0.0)


# Chunk kernel contracts for vectorized families:
#   gep kernel: (lo, hi, r, x) -> resolvent candidates, shape (hi - lo, d)
#   map kernel: (lo, hi, nominal_power, point) -> mapped points, shape (hi - lo, d);
# a kernel applies each member at its effective power (plain members always 1).
GepKernel = Callable[[int, int, float, np.ndarray], np.ndarray]
MapKernel = Callable[[int, int, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemFamily:
    """The data of one common-solution problem.

    Fields ``alpha``, ``kappa`` and ``k_seq`` are the family-wide reductions
    (min modulus, max constant, pointwise max sequence). Use
    :meth:`from_members` to compute them from the member lists; builders of
    very large families pass exact analytic values instead, together with
    chunk kernels, so that members never need to be materialized.
    """

    base: BaseSet
    geps: Sequence[tuple[Bifunction, IsmOperator]]
    maps: Sequence[PseudoContraction]
    alpha: float
    kappa: float
    k_seq: Callable[[int], float]
    gep_kernel: GepKernel | None = None
    map_kernel: MapKernel | None = None
    known_solution: Any = None
    # Family-level flag so huge lazy member sequences never need a scan.
    asymptotic_members: bool = False

    def __post_init__(self):
        if len(self.geps) == 0 and len(self.maps) == 0:
            raise ValueError("a problem family needs at least one member")
        if not self.alpha > 0:
            raise ValueError("family modulus must be positive")
        if not (0.0 <= self.kappa < 1.0):
            raise ValueError("family pseudocontraction constant must lie in [0, 1)")

    @property
    def n_geps(self) -> int:
        return len(self.geps)

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @property
    def has_asymptotic_maps(self) -> bool:
        return self.asymptotic_members

    @classmethod
    def from_members(
        cls,
        base: BaseSet,
        geps: Sequence[tuple[Bifunction, IsmOperator]],
        maps: Sequence[PseudoContraction],
        **kwargs,
    ) -> "ProblemFamily":
        alpha = min((op.alpha for _, op in geps), default=math.inf)
        kappa = max((s.kappa for s in maps), default=0.0)
        if maps:
            members = tuple(maps)
            k_seq = lambda n: max(s.k_seq(n) for s in members)  # noqa: E731
        else:
            k_seq = lambda n: 1.0  # noqa: E731
        return cls(
            base=base, geps=tuple(geps), maps=tuple(maps),
            alpha=alpha, kappa=kappa, k_seq=k_seq,
            asymptotic_members=any(s.asymptotic for s in maps), **kwargs,
        )


def resolvent(
    f: Bifunction,
    A: IsmOperator,
    r: float,
    x,
    base: BaseSet,
    tol: float = DEFAULT_RESOLVENT_TOL,
) -> np.ndarray:
    """Resolvent step ``T_r(x - r * A(x))`` of one bifunction/operator pair.

    With the zero bifunction this reduces to the base projection of the
    forward step; with a zero operator it is the pure equilibrium resolvent.
    """
    if not r > 0:
        raise ValueError("resolvent step size must be positive")
    if not tol > 0:
        raise ValueError("resolvent tolerance must be positive")
    xv = as_vector(x)
    w = xv - r * A(xv)
    return f.resolve(r, w, base, tol)


def resolvent_scalar(
    profile: Callable[[float], float],
    r: float,
    x: float,
    lo: float,
    hi: float,
    tol: float = DEFAULT_RESOLVENT_TOL,
) -> float:
    """Solve ``r * profile(z) + z = x`` on ``[lo, hi]`` by bisection.

    ``profile`` must be nondecreasing on the interval, which makes
    ``g(z) = r * profile(z) + z - x`` strictly increasing. When the root
    bracket ``g(lo) <= 0 <= g(hi)`` fails, the complementarity conditions at
    the interval endpoints apply: the solution clamps to ``lo`` when
    ``g(lo) > 0`` and to ``hi`` when ``g(hi) < 0``. Bisection narrows the
    bracket to width ``tol``.

    Raises:
        InvalidModelError: endpoint signs are decreasing, contradicting the
            declared monotonicity.
        ResolventFailure: a profile evaluation produced a non-finite value
            or the halving budget ran out.
    """
    if not r > 0:
        raise ValueError("resolvent step size must be positive")
    if not lo < hi:
        raise ValueError("bracket requires lo < hi")
    if not tol > 0:
        raise ValueError("tolerance must be positive")

    def g(z: float) -> float:
        value = r * profile(z) + z - x
        if math.isnan(value):
            raise ResolventFailure(
                f"profile produced NaN at z={z!r}", (lo, hi, math.nan, math.nan)
            )
        return value

    g_lo = g(lo)
    g_hi = g(hi)
    if g_lo > 0.0 and g_hi < 0.0:
        raise InvalidModelError(
            "endpoint values decrease across the bracket "
            f"(g({lo})={g_lo:.3e}, g({hi})={g_hi:.3e}); profile is not nondecreasing"
        )
    if g_lo >= 0.0:
        return lo
    if g_hi <= 0.0:
        return hi
    # Exact fixed points short-circuit: when the profile vanishes at x the
    # root is x itself and must be returned without bisection error.
    if lo <= x <= hi and g(x) == 0.0:
        return x
    a, b = lo, hi
    for _ in range(MAX_HALVINGS):
        if b - a <= tol:
            return 0.5 * (a + b)
        m = 0.5 * (a + b)
        g_m = g(m)
        if g_m == 0.0:
            return m
        if g_m < 0.0:
            a = m
        else:
            b = m
    raise ResolventFailure(
        f"bracket width {b - a:.3e} still above tol={tol:.1e} "
        f"after {MAX_HALVINGS} halvings",
        (a, b, g(a), g(b)),
    )


def apply_power(S: PseudoContraction, n: int, x) -> np.ndarray:
    """Apply a mapping ``n`` times; ``n = 0`` is the identity."""
    if n < 0 or n != int(n):
        raise ValueError("power must be a nonnegative integer")
    point = as_vector(x)
    for _ in range(int(n)):
        point = S(point)
    return point


def lipschitz_bound(kappa: float, k_values: Sequence[float]) -> float:
    """Uniform Lipschitz constant of all powers of an asymptotically strictly
    pseudocontractive map: the largest value of
    ``(kappa + sqrt(1 + (1 - kappa) * (k - 1))) / (1 + kappa)`` over ``k``.
    """
    if not (0.0 <= kappa < 1.0):
        raise ValueError("kappa must lie in [0, 1)")
    values = list(k_values)
    if not values:
        raise ValueError("k_values must be nonempty")
    if any(k < 1.0 for k in values):
        raise ValueError("every k must be at least 1")
    return max(
        (kappa + math.sqrt(1.0 + (1.0 - kappa) * (k - 1.0))) / (1.0 + kappa)
        for k in values
    )


def gep_chunk_evaluator(
    family: ProblemFamily, r: float, x: np.ndarray, tol: float = DEFAULT_RESOLVENT_TOL
):
    """Chunk evaluator producing resolvent candidates for members lo..hi."""
    if family.gep_kernel is not None:
        kernel = family.gep_kernel
        return lambda lo, hi: kernel(lo, hi, r, x)

    geps = family.geps
    base = family.base

    def evaluate(lo: int, hi: int) -> np.ndarray:
        rows = np.empty((hi - lo, x.size))
        for i in range(lo, hi):
            f, A = geps[i]
            rows[i - lo] = resolvent(f, A, r, x, base, tol)
        return rows

    return evaluate


def map_chunk_evaluator(family: ProblemFamily, nominal_power: int, point: np.ndarray):
    """Chunk evaluator applying each mapping at its effective power.

    Asymptotic members run at ``nominal_power``; plain members always run at
    power one.
    """
    if family.map_kernel is not None:
        kernel = family.map_kernel
        return lambda lo, hi: kernel(lo, hi, nominal_power, point)

    maps = family.maps

    def evaluate(lo: int, hi: int) -> np.ndarray:
        rows = np.empty((hi - lo, point.size))
        for j in range(lo, hi):
            s = maps[j]
            power = nominal_power if s.asymptotic else 1
            rows[j - lo] = apply_power(s, power, point)
        return rows

    return evaluate


@dataclass(frozen=True)
class MemberCheck:
    """Audit result for one family member."""

    kind: str  # "operator", "map", or "bifunction"
    index: int
    passed: bool
    worst_slack: float
    detail: str = ""


@dataclass(frozen=True)
class FamilyReport:
    entries: tuple[MemberCheck, ...]

    @property
    def ok(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self, kind: str) -> float:
        slacks = [e.worst_slack for e in self.entries if e.kind == kind]
        return min(slacks) if slacks else math.inf

    def failures(self) -> list[MemberCheck]:
        return [e for e in self.entries if not e.passed]


def _ism_slack(A: IsmOperator, x: np.ndarray, y: np.ndarray) -> float:
    ax, ay = A(x), A(y)
    gap2 = float(np.sum((ax - ay) ** 2))
    lhs = float((ax - ay) @ (x - y))
    rhs = 0.0 if gap2 == 0.0 else A.alpha * gap2
    return lhs - rhs


def _pseudocontraction_slack(
    S: PseudoContraction, power: int, x: np.ndarray, y: np.ndarray
) -> float:
    sx = apply_power(S, power, x)
    sy = apply_power(S, power, y)
    k = S.k_seq(power) if S.asymptotic else 1.0
    lhs = float(np.sum((sx - sy) ** 2))
    rhs = k * float(np.sum((x - y) ** 2)) + S.kappa * float(
        np.sum(((x - sx) - (y - sy)) ** 2)
    )
    return rhs - lhs


def verify_family(
    problem: ProblemFamily,
    samples: int = 200,
    rng_seed: int = 0,
    slack_tol: float = 1e-9,
) -> FamilyReport:
    """Audit declared member properties on random point pairs.

    Checks, for each operator, the inverse-strong-monotonicity inequality;
    for each mapping, the strict-pseudocontraction inequality (asymptotic
    members at powers 1..3 with their sequence, plain members at power one)
    plus base-set self-mapping; and for each scalar bifunction, that its
    profile is nondecreasing on sampled pairs. Failures are report entries,
    never exceptions; ``worst_slack`` is the most negative slack observed
    (nonnegative means the inequality held on every sample).
    """
    if samples < 1:
        raise ValueError("need at least one sample pair")
    rng = np.random.default_rng(rng_seed)
    pairs = [
        (problem.base.sample(rng), problem.base.sample(rng)) for _ in range(samples)
    ]
    entries: list[MemberCheck] = []

    for i, (f, A) in enumerate(problem.geps):
        worst = min(_ism_slack(A, x, y) for x, y in pairs)
        entries.append(
            MemberCheck(
                kind="operator",
                index=i,
                passed=worst >= -slack_tol,
                worst_slack=worst,
                detail=f"modulus {A.alpha:g}",
            )
        )
        if isinstance(f, ScalarMonotoneBifunction):
            span = f.hi - f.lo
            pts = f.lo + span * rng.random((samples, 2))
            worst_mono = min(
                (f.profile(float(a)) - f.profile(float(b))) * (float(a) - float(b))
                for a, b in pts
            )
            entries.append(
                MemberCheck(
                    kind="bifunction",
                    index=i,
                    passed=worst_mono >= -slack_tol,
                    worst_slack=worst_mono,
                    detail="profile monotonicity",
                )
            )

    for j, S in enumerate(problem.maps):
        powers = (1, 2, 3) if S.asymptotic else (1,)
        worst = min(
            _pseudocontraction_slack(S, p, x, y) for p in powers for x, y in pairs
        )
        range_gap = max(
            float(np.linalg.norm(S(x) - problem.base.project(S(x)))) for x, _ in pairs
        )
        in_range = range_gap <= max(slack_tol, 1e-12)
        entries.append(
            MemberCheck(
                kind="map",
                index=j,
                passed=(worst >= -slack_tol) and in_range,
                worst_slack=worst,
                detail=f"kappa {S.kappa:g}"
                + ("" if in_range else f"; leaves base set by {range_gap:.3e}"),
            )
        )

    return FamilyReport(entries=tuple(entries))
