"""Catalog of concrete chain constructions.

Each family bundles a prediction rule, a weight process and a base
measure, with parameter validation and analytically declared weight
moments.  Families are addressable by name plus a parameter map so
experiment configs can rebuild them in worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .engine import (
    BaseMeasure,
    GosRule,
    PredictionRule,
    WeightProcess,
    constant_weights,
    two_color_measure,
    uniform01,
)
from .errors import DomainError

FAMILY_NAMES = (
    "blackwell_macqueen",
    "two_param_pd_generalized",
    "reinforced_bm",
    "reinforced_polya",
    "deterministic_rn",
    "power_decay",
    "markov_chain_y",
)


# ---------------------------------------------------------------------------
# weight distributions (iid)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightDist:
    """An iid weight law with analytic moments.

    m is the mean, delta the second raw moment E[Y^2], gamma the
    essential lower bound of the support.  kind_code/p0/p1/p2 encode the
    inverse-CDF transform shared with the compiled sampler.
    """

    name: str
    kind_code: int
    p0: float
    p1: float
    p2: float
    m: float
    delta: float
    gamma: float

    @property
    def variance(self) -> float:
        return self.delta - self.m * self.m

    @property
    def variance_ratio(self) -> float:
        """Var[Y] / E[Y]^2."""
        return self.variance / (self.m * self.m)

    def sample_from_u(self, u: float) -> float:
        return _y_from_u(u, self.kind_code, self.p0, self.p1, self.p2)

    def process(self) -> WeightProcess:
        if self.kind_code == 0:
            return constant_weights(self.p0)

        def sampler(step, hist, rng, _self=self):
            return _self.sample_from_u(rng.random())

        return WeightProcess("iid", sampler, support_low=self.gamma,
                             description=self.name)

    def spec_string(self) -> str:
        return self.name


def _y_from_u(u: float, kind: int, p0: float, p1: float, p2: float) -> float:
    # shared with the compiled chain kernel; see kernels._y_from_u
    if kind == 0:
        return p0
    if kind == 1:
        return p0 + (p1 - p0) * u
    if kind == 2:
        return p0 - p1 * math.log1p(-u)
    if kind == 3:
        return p0 if u < p2 else p1
    raise DomainError(f"unknown weight kind code {kind}")


def point_mass(c: float) -> WeightDist:
    if c <= 0:
        raise DomainError("point mass must be positive")
    return WeightDist(f"point:{c:g}", 0, c, 0.0, 0.0, m=c, delta=c * c, gamma=c)


def uniform_weights(a: float, b: float) -> WeightDist:
    if not 0 < a < b:
        raise DomainError(f"uniform weight support needs 0 < a < b, got ({a}, {b})")
    m = 0.5 * (a + b)
    delta = (a * a + a * b + b * b) / 3.0
    return WeightDist(f"uniform:{a:g},{b:g}", 1, a, b, 0.0, m=m, delta=delta, gamma=a)


def shifted_exponential(shift: float, scale: float = 1.0) -> WeightDist:
    """Y = shift + Exponential(scale)."""
    if shift <= 0 or scale <= 0:
        raise DomainError("shifted exponential needs positive shift and scale")
    m = shift + scale
    delta = shift * shift + 2.0 * shift * scale + 2.0 * scale * scale
    return WeightDist(f"shifted_exp:{shift:g},{scale:g}", 2, shift, scale, 0.0,
                      m=m, delta=delta, gamma=shift)


def two_point(a: float, b: float, p: float) -> WeightDist:
    if a <= 0 or b <= 0 or not 0 <= p <= 1:
        raise DomainError("two-point weights need positive values and p in [0,1]")
    m = p * a + (1 - p) * b
    delta = p * a * a + (1 - p) * b * b
    return WeightDist(f"two_point:{a:g},{b:g},{p:g}", 3, a, b, p,
                      m=m, delta=delta, gamma=min(a, b))


def parse_weight_dist(spec: str) -> WeightDist:
    """Parse 'dist:params' strings such as uniform:1,3 or point:1."""
    name, _, rest = spec.partition(":")
    try:
        args = [float(x) for x in rest.split(",")] if rest else []
        if name == "point":
            return point_mass(*args)
        if name == "uniform":
            return uniform_weights(*args)
        if name == "shifted_exp":
            return shifted_exponential(*args)
        if name == "two_point":
            return two_point(*args)
    except TypeError as exc:
        raise DomainError(f"bad parameters in weight spec {spec!r}: {exc}") from None
    raise DomainError(f"unknown weight distribution {name!r}")


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------

class BlackwellMacQueenRule(GosRule):
    """p(n,i) = 1/(theta+n), r(n) = theta/(theta+n)."""

    def __init__(self, theta: float):
        self.theta = theta
        self.name = f"blackwell_macqueen(theta={theta:g})"

    def r_value(self, k, ys):
        return self.theta / (self.theta + k)

    def g_value(self, i, ys):
        return 1.0 / self.theta

    def individual_weight(self, n, i, partition, ys):
        return 1.0 / (self.theta + n)

    def block_star(self, traj):
        d = self.theta + traj.n
        return [s / d for s in traj.block_sizes], self.theta / d


class SumReinforcedRule(GosRule):
    """p(n,i) = Y_i/(theta + sum Y), r(n) = theta/(theta + sum Y)."""

    def __init__(self, theta: float, name: Optional[str] = None):
        self.theta = theta
        self.name = name or f"reinforced_bm(theta={theta:g})"

    def r_value(self, k, ys):
        return self.theta / (self.theta + math.fsum(ys[:k]))

    def r_next(self, traj):
        return self.theta / (self.theta + traj.sum_y)

    def g_value(self, i, ys):
        return ys[i - 1] / self.theta

    def individual_weight(self, n, i, partition, ys):
        return ys[i - 1] / (self.theta + math.fsum(ys[:n]))

    def block_star(self, traj):
        d = self.theta + traj.sum_y
        return [s / d for s in traj.block_ysums], self.theta / d


class DeterministicRRule(GosRule):
    """r(n) = a_n for a fixed positive non-increasing sequence, a_0 = 1.

    Sequences that decay below what 1/a_n can represent run in log-ratio
    mode; log_a supplies log a_n exactly where known (e.g. geometric).
    """

    def __init__(self, a: Callable[[int], float], name: str = "deterministic_rn",
                 log_a: Optional[Callable[[int], float]] = None,
                 use_log_ratio: bool = False):
        self.a = a
        self.name = name
        self._log_a = log_a
        self.uses_log_ratio = use_log_ratio or log_a is not None
        if a(0) != 1.0:
            raise DomainError(f"a_0 must equal 1, got {a(0)}")

    def r_value(self, k, ys):
        return self.a(k)

    def log_r_value(self, k, traj):
        if self._log_a is not None:
            return self._log_a(k)
        v = self.a(k)
        if v <= 0.0:
            raise DomainError(
                f"a_{k} underflowed to {v}; supply log_a for deeply decaying sequences")
        return math.log(v)

    def block_star(self, traj):
        if self.uses_log_ratio:
            return list(traj.block_probs), math.exp(traj.log_r)
        r = self.a(traj.n)
        return [r * g for g in traj.block_gsums], r


class MarkovScalingRule(GosRule):
    """r(n) = Y_n for the multiplicative-scaling weight chain.

    Y decays geometrically, so the engine works with log r and block
    probabilities updated by ratios rather than with 1/r increments.
    """

    uses_log_ratio = True
    name = "markov_chain_y"

    def r_value(self, k, ys):
        return 1.0 if k == 0 else ys[k - 1]

    def log_r_value(self, k, traj):
        return 0.0 if k == 0 else traj.log_ys[k - 1]


class TwoParamRule(PredictionRule):
    """Partition-dependent rule generalizing the two-parameter
    Poisson-Dirichlet prediction:

        p(n,i) = (y_i - alpha/C_i) / (theta + sum y)
        r(n)   = (theta + alpha L) / (theta + sum y)

    with C_i the size of the block containing i and L the number of
    blocks.
    """

    def __init__(self, theta: float, alpha: float):
        self.theta = theta
        self.alpha = alpha
        self.name = f"two_param_pd(theta={theta:g},alpha={alpha:g})"

    def individual_weight(self, n, i, partition, ys):
        c = len(partition.blocks[partition.block_of(i) - 1])
        return (ys[i - 1] - self.alpha / c) / (self.theta + math.fsum(ys[:n]))

    def new_weight(self, n, partition, ys):
        return (self.theta + self.alpha * partition.length) / (self.theta + math.fsum(ys[:n]))

    def block_star_explicit(self, partition, ys):
        d = self.theta + math.fsum(ys[: partition.n])
        probs = [(math.fsum(ys[i - 1] for i in b) - self.alpha) / d for b in partition.blocks]
        return probs, (self.theta + self.alpha * partition.length) / d

    def block_star(self, traj):
        d = self.theta + traj.sum_y
        probs = [(s - self.alpha) / d for s in traj.block_ysums]
        return probs, (self.theta + self.alpha * traj.length) / d


# negative controls -----------------------------------------------------------

class ScaledRPerturbation(PredictionRule):
    """Deliberately broken rule: r is scaled by `factor` and the p's are
    renormalized.  Used as the negative control of the conditional-identity
    verifier."""

    def __init__(self, base: PredictionRule, factor: float = 1.1):
        self.base = base
        self.factor = factor
        self.name = f"perturbed({base.name},x{factor:g})"

    def new_weight(self, n, partition, ys):
        return min(self.factor * self.base.new_weight(n, partition, ys), 1.0)

    def individual_weight(self, n, i, partition, ys):
        r = self.base.new_weight(n, partition, ys)
        rp = min(self.factor * r, 1.0)
        scale = (1.0 - rp) / (1.0 - r) if r < 1.0 else 0.0
        return self.base.individual_weight(n, i, partition, ys) * scale

    def block_star_explicit(self, partition, ys):
        probs, r = self.base.block_star_explicit(partition, ys)
        rp = min(self.factor * r, 1.0)
        scale = (1.0 - rp) / (1.0 - r) if r < 1.0 else 0.0
        return [p * scale for p in probs], rp


class DiagonalOffsetRule(GosRule):
    """Deliberately broken rule: at every level n the diagonal weight
    p(n,n) is raised by eps and r(n) lowered to compensate, while the
    weights on older observations keep their unperturbed values.  Still
    normalized, but the ratio recursion no longer holds, so the
    predictive mean stops being a martingale.  Audit-only negative
    control; not simulable."""

    def __init__(self, base: GosRule, eps: float = 0.01):
        if not base.is_gos:
            raise DomainError("diagonal offset perturbation wraps ratio-recursion rules")
        self.base = base
        self.eps = eps
        self.name = f"diag_offset({base.name},+{eps:g})"

    def r_value(self, k, ys):
        if k == 0:
            return 1.0
        r = self.base.r_value(k, ys) - self.eps
        if r <= 0:
            raise DomainError(f"offset {self.eps} exceeds r_{k}; shorten the horizon")
        return r

    def individual_weight(self, n, i, partition, ys):
        w = self.base.individual_weight(n, i, partition, ys)
        return w + self.eps if i == n else w

    def new_weight(self, n, partition, ys):
        return self.base.new_weight(n, partition, ys) - self.eps

    def block_star(self, traj):
        raise DomainError(f"{self.name} is an audit-only control, not simulable")

    def audit_level(self, traj):
        # the replayed r sequence carries the -eps shift (except r_0 = 1);
        # undo it to recover the unperturbed ratio the older weights follow
        r_pert = traj.r_seq[-1]
        base_prev = traj.r_seq[-2] + (self.eps if traj.n >= 2 else 0.0)
        ratio = (r_pert + self.eps) / base_prev
        return ratio, 1.0 - ratio, r_pert, self.eps


# ---------------------------------------------------------------------------
# family bundle + constructors
# ---------------------------------------------------------------------------

@dataclass
class Family:
    """A rule/weights/measure bundle ready to simulate."""

    name: str
    rule: PredictionRule
    wp: WeightProcess
    mu: BaseMeasure
    weight_dist: Optional[WeightDist] = None
    params: dict = field(default_factory=dict)

    @property
    def is_gos(self) -> bool:
        return self.rule.is_gos

    def __iter__(self):
        return iter((self.rule, self.wp))


def blackwell_macqueen(theta: float) -> Family:
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    wd = point_mass(1.0)
    return Family("blackwell_macqueen", BlackwellMacQueenRule(theta), wd.process(),
                  uniform01(), weight_dist=wd, params={"theta": theta})


def reinforced_bm(theta: float, weight_dist: WeightDist) -> Family:
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    return Family("reinforced_bm", SumReinforcedRule(theta), weight_dist.process(),
                  uniform01(), weight_dist=weight_dist, params={"theta": theta})


def two_param_pd_generalized(theta: float, alpha: float, weight_dist: WeightDist) -> Family:
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    if weight_dist.gamma <= alpha:
        raise DomainError(
            f"weight support must lie strictly above alpha={alpha}, "
            f"got lower bound {weight_dist.gamma}")
    return Family("two_param_pd_generalized", TwoParamRule(theta, alpha),
                  weight_dist.process(), uniform01(), weight_dist=weight_dist,
                  params={"theta": theta, "alpha": alpha})


def reinforced_polya(b: int, r: int, weight_dist: WeightDist) -> Family:
    if b < 1 or r < 1 or b != int(b) or r != int(r):
        raise DomainError(f"urn needs integer counts b, r >= 1, got ({b}, {r})")
    theta = float(b + r)
    rule = SumReinforcedRule(theta, name=f"reinforced_polya(b={b},r={r})")
    return Family("reinforced_polya", rule, weight_dist.process(),
                  two_color_measure(b / theta), weight_dist=weight_dist,
                  params={"b": int(b), "r": int(r)})


def polya_predictive_prob(traj, b: int, r: int) -> float:
    """Collapsed two-color predictive P(next draw is black | past).

    Equals the block weight of the black tag plus the fresh-draw mass on
    the black atom.
    """
    theta = float(b + r)
    syx = math.fsum(y * t for y, t in zip(traj.ys, traj.tags))
    return (b + syx) / (theta + traj.sum_y)


def deterministic_rn(a, log_a: Optional[Callable[[int], float]] = None) -> Family:
    """Chain with deterministic new-species weights r_n = a_n.

    `a` is a positive non-increasing sequence with a_0 = 1, given either
    as a callable on k or as an explicit list (constant beyond its end).
    Deeply decaying sequences (probed at k = 64, 256, 1024) switch to the
    log-ratio engine path automatically; pass log_a for an exact log form
    when a_n itself underflows.
    """
    if callable(a):
        fn = a
        name = "deterministic_rn"
    else:
        vals = [float(v) for v in a]
        if not vals:
            raise DomainError("empty sequence")

        def fn(k, _vals=vals):
            return _vals[k] if k < len(_vals) else _vals[-1]

        name = "deterministic_rn(list)"
    if fn(0) != 1.0:
        raise DomainError(f"a_0 must equal 1, got {fn(0)}")
    probe_prev = 1.0
    for k in range(1, 8):
        v = fn(k)
        if v <= 0 or v > probe_prev:
            raise DomainError(f"sequence not positive non-increasing at k={k}: {v}")
        probe_prev = v
    deep_decay = log_a is not None or any(fn(k) < 1e-60 for k in (64, 256, 1024))
    rule = DeterministicRRule(fn, name=name, log_a=log_a, use_log_ratio=deep_decay)

    if deep_decay:
        def sampler(step, hist, rng):
            return fn(step)

        def sample_log(step, log_hist, rng, _rule=rule):
            return _rule.log_r_value(step, None)

        wp = WeightProcess("deterministic", sampler, support_low=0.0,
                           tracks_log=True, description="Y_n = a_n (log tracked)")
        wp.sample_log = sample_log
    else:
        def sampler(step, hist, rng):
            return fn(step)

        wp = WeightProcess("deterministic", sampler, support_low=0.0,
                           description="Y_n = a_n")
    return Family("deterministic_rn", rule, wp, uniform01(), params={"a": "callable"})


def power_decay(theta: float, alpha: float) -> Family:
    """deterministic_rn with a_n = theta/(theta + n^(1-alpha))."""
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0,1), got {alpha}")

    def a(k):
        return theta / (theta + k ** (1.0 - alpha))

    fam = deterministic_rn(a)
    fam.name = "power_decay"
    fam.rule.name = f"power_decay(theta={theta:g},alpha={alpha:g})"
    fam.params = {"theta": theta, "alpha": alpha}
    return fam


def markov_chain_y() -> WeightProcess:
    """Multiplicative-scaling weight chain: Y_1 = 1 and, given Y_n, the
    next value is uniform on (0, Y_n).  Non-increasing pathwise with
    E[Y_n] = (1/2)^(n-1)."""

    def sampler(step, hist, rng):
        if step == 1:
            return 1.0
        return hist[-1] * rng.random()

    def sample_log(step, log_hist, rng):
        if step == 1:
            return 0.0
        return log_hist[-1] + math.log(rng.random())

    wp = WeightProcess("markov-chain", sampler, support_low=0.0, support_high=1.0,
                       tracks_log=True, description="Y_{n+1} ~ U(0, Y_n)")
    wp.sample_log = sample_log
    return wp


def markov_family() -> Family:
    """Chain driven by the multiplicative-scaling weights with r_n = Y_n."""
    return Family("markov_chain_y", MarkovScalingRule(), markov_chain_y(),
                  uniform01(), params={})


# ---------------------------------------------------------------------------
# serializable family spec
# ---------------------------------------------------------------------------

@dataclass
class FamilySpec:
    """Name + parameter map from which a Family can be rebuilt anywhere."""

    family: str
    params: dict = field(default_factory=dict)
    weights: Optional[str] = None  # weight dist spec string

    def weight_dist(self) -> Optional[WeightDist]:
        return parse_weight_dist(self.weights) if self.weights else None

    def build(self) -> Family:
        wd = self.weight_dist()
        p = self.params
        if self.family == "blackwell_macqueen":
            return blackwell_macqueen(p["theta"])
        if self.family == "reinforced_bm":
            return reinforced_bm(p["theta"], wd or point_mass(1.0))
        if self.family == "two_param_pd_generalized":
            return two_param_pd_generalized(p["theta"], p.get("alpha", 0.0),
                                            wd or point_mass(1.0))
        if self.family == "reinforced_polya":
            return reinforced_polya(p["b"], p["r"], wd or point_mass(1.0))
        if self.family == "power_decay":
            return power_decay(p["theta"], p["alpha"])
        if self.family == "deterministic_rn":
            if "geometric" in p:
                q = float(p["geometric"])
                if not 0 < q <= 1:
                    raise DomainError(f"geometric ratio must lie in (0,1], got {q}")
                return deterministic_rn(lambda k: q ** k,
                                        log_a=lambda k: k * math.log(q))
            if "values" in p:
                return deterministic_rn(list(p["values"]))
            raise DomainError("deterministic_rn spec needs 'geometric' or 'values'")
        if self.family == "markov_chain_y":
            return markov_family()
        raise DomainError(f"unknown family {self.family!r}; known: {FAMILY_NAMES}")

    def to_dict(self) -> dict:
        d = {"family": self.family, "params": dict(self.params)}
        if self.weights:
            d["weights"] = self.weights
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        return cls(d["family"], dict(d.get("params", {})), d.get("weights"))
