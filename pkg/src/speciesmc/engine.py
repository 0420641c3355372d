"""Sequential sampler for species-sampling chains.

The chain alternates two draws per step.  Given the first n tags and
weights, the next tag duplicates observation i with probability p(n,i) or
is a fresh draw from the base measure with probability r(n); the weight
Y(n+1) is then drawn from the latent weight process, conditionally
independent of the new tag given the past.  A PredictionRule supplies the
weight functions, a BaseMeasure the fresh-tag law, and a WeightProcess the
latent weights.

Tags are plain floats.  The trajectory records everything downstream
statistics need: tags, weights, the new-species flags, the joined block
per step, the r sequence and the diagonal weights p(j,j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, RuleError, WeightError

NORMALIZATION_TOL = 1e-9

_UNSET = object()


# ---------------------------------------------------------------------------
# base measures
# ---------------------------------------------------------------------------

class BaseMeasure:
    """Law of fresh species tags.

    Either diffuse uniform on [0,1] (the default) or a finite atomic
    measure given as (value, probability) pairs.  `mean_of` integrates a
    test function: closed forms may be registered by function id; anything
    unregistered on the diffuse measure falls back to a dense trapezoid
    quadrature computed once and cached.
    """

    QUADRATURE_POINTS = 1_000_001

    def __init__(self, kind: str = "diffuse-uniform", atoms: Optional[Sequence[tuple[float, float]]] = None):
        if kind not in ("diffuse-uniform", "discrete"):
            raise DomainError(f"unknown base measure kind {kind!r}")
        self.kind = kind
        if kind == "discrete":
            if not atoms:
                raise DomainError("discrete base measure needs atoms")
            total = sum(p for _, p in atoms)
            if any(p < 0 for _, p in atoms) or abs(total - 1.0) > 1e-12:
                raise DomainError(f"atom probabilities must be nonnegative and sum to 1, got {total}")
            self.atoms = tuple((float(v), float(p)) for v, p in atoms)
        else:
            if atoms:
                raise DomainError("diffuse measure carries no atoms")
            self.atoms = ()
        self._mean_cache: dict[int, float] = {}

    @property
    def diffuse(self) -> bool:
        return self.kind == "diffuse-uniform"

    def sample(self, rng: np.random.Generator) -> float:
        if self.diffuse:
            return rng.random()
        u = rng.random()
        c = 0.0
        for v, p in self.atoms:
            c += p
            if u < c:
                return v
        return self.atoms[-1][0]

    def atom_mass(self, value: float) -> float:
        for v, p in self.atoms:
            if v == value:
                return p
        return 0.0

    def mean_of(self, fn: Callable[[float], float], closed_form: float = _UNSET) -> float:
        """E[f(X1)] under this measure."""
        if closed_form is not _UNSET:
            return float(closed_form)
        if not self.diffuse:
            return sum(p * fn(v) for v, p in self.atoms)
        key = id(fn)
        if key not in self._mean_cache:
            xs = np.linspace(0.0, 1.0, self.QUADRATURE_POINTS)
            ys = np.array([fn(float(x)) for x in xs])
            self._mean_cache[key] = float(np.trapezoid(ys, xs))
        return self._mean_cache[key]


def uniform01() -> BaseMeasure:
    return BaseMeasure("diffuse-uniform")


def two_color_measure(p_one: float) -> BaseMeasure:
    """Atomic measure on {0,1} with P(1) = p_one."""
    return BaseMeasure("discrete", [(0.0, 1.0 - p_one), (1.0, p_one)])


# ---------------------------------------------------------------------------
# weight processes
# ---------------------------------------------------------------------------

class WeightProcess:
    """Latent weight sequence Y1, Y2, ...

    kind is one of iid / independent-sequence / markov-chain /
    deterministic.  The sampler maps (1-based step, history list, rng) to
    the next value.  `support_low` is the essential lower bound used for
    validation; `tracks_log` marks processes whose values decay
    geometrically and must be handled through ratios downstream.
    """

    def __init__(self, kind: str, sampler: Callable, support_low: float = 0.0,
                 support_high: float = math.inf, tracks_log: bool = False,
                 description: str = ""):
        if kind not in ("iid", "independent-sequence", "markov-chain", "deterministic"):
            raise DomainError(f"unknown weight process kind {kind!r}")
        self.kind = kind
        self.sampler = sampler
        self.support_low = support_low
        self.support_high = support_high
        self.tracks_log = tracks_log
        self.description = description

    def sample(self, step: int, history: list[float], rng: np.random.Generator) -> float:
        y = float(self.sampler(step, history, rng))
        if not (y >= self.support_low or self.tracks_log):
            raise WeightError(f"Y_{step}={y} below declared support bound {self.support_low}")
        if y <= 0.0 and not self.tracks_log:
            raise WeightError(f"Y_{step}={y} is not strictly positive")
        return y

    def sample_log(self, step: int, log_history: list[float], rng: np.random.Generator) -> float:
        """log Y for geometric-decay processes; overridden where tracks_log."""
        hist = [math.exp(v) for v in log_history]
        return math.log(self.sample(step, hist, rng))

    def draw_sequence(self, n: int, rng: np.random.Generator) -> list[float]:
        ys: list[float] = []
        for step in range(1, n + 1):
            ys.append(self.sample(step, ys, rng))
        return ys


def constant_weights(c: float = 1.0) -> WeightProcess:
    if c <= 0:
        raise DomainError("constant weight must be positive")
    return WeightProcess("deterministic", lambda step, hist, rng: c, support_low=c,
                         support_high=c, description=f"Y={c}")


def deterministic_weights(seq: Sequence[float]) -> WeightProcess:
    vals = [float(v) for v in seq]

    def sampler(step, hist, rng):
        if step > len(vals):
            raise WeightError(f"deterministic weight sequence exhausted at step {step}")
        return vals[step - 1]

    lo = min(vals) if vals else 0.0
    return WeightProcess("deterministic", sampler, support_low=lo,
                         description="fixed sequence")


# ---------------------------------------------------------------------------
# prediction rules
# ---------------------------------------------------------------------------

class PredictionRule:
    """Weight functions (p(n,i), r(n)) of a species-sampling chain.

    Two evaluation surfaces exist.  `individual_weight` / `new_weight`
    take an explicit (partition, weight history) pair; they are the slow,
    fully general forms used by the conditional-identity verifier.  During
    simulation the engine instead calls `block_star`, which reads running
    aggregates off the trajectory and returns the block-level weights in
    O(number of blocks).
    """

    name = "rule"
    is_gos = False
    uses_log_ratio = False

    def individual_weight(self, n: int, i: int, partition, ys: Sequence[float]) -> float:
        raise NotImplementedError

    def new_weight(self, n: int, partition, ys: Sequence[float]) -> float:
        raise NotImplementedError

    def block_star_explicit(self, partition, ys: Sequence[float]) -> tuple[list[float], float]:
        """Block weights from an explicit (partition, ys) pair."""
        n = partition.n
        probs = []
        for block in partition.blocks:
            probs.append(sum(self.individual_weight(n, i, partition, ys) for i in block))
        return probs, self.new_weight(n, partition, ys)

    def block_star(self, traj: "Trajectory") -> tuple[list[float], float]:
        """Block weights at the trajectory's current state."""
        raise NotImplementedError


class GosRule(PredictionRule):
    """Rule whose weights ignore the partition and follow the ratio
    recursion p(n,i) = (r_n/r_{n-1}) p(n-1,i), p(n,n) = 1 - r_n/r_{n-1}.

    Subclasses provide r_value(k, ys) with r_value(0, ()) = 1.  The
    closed form p(n,i) = r_n (1/r_i - 1/r_{i-1}) is used for explicit
    evaluation; simulation uses per-block aggregates of the increments
    g_i = 1/r_i - 1/r_{i-1}, or multiplicative updates of the block
    probabilities themselves when r decays below what 1/r can represent
    (uses_log_ratio).
    """

    is_gos = True

    def r_value(self, k: int, ys: Sequence[float]) -> float:
        raise NotImplementedError

    def r_next(self, traj: "Trajectory") -> float:
        """r at the trajectory's current level, from running aggregates.

        Same value as r_value on the full history; overridden where the
        aggregate gives it in O(1).
        """
        return self.r_value(traj.n, traj.ys)

    def g_value(self, i: int, ys: Sequence[float]) -> float:
        return 1.0 / self.r_value(i, ys) - 1.0 / self.r_value(i - 1, ys)

    def individual_weight(self, n, i, partition, ys):
        return self.r_value(n, ys) * self.g_value(i, ys)

    def new_weight(self, n, partition, ys):
        return self.r_value(n, ys)

    def block_star(self, traj):
        if self.uses_log_ratio:
            return list(traj.block_probs), math.exp(traj.log_r)
        r = self.r_value(traj.n, traj.ys)
        return [r * g for g in traj.block_gsums], r

    def log_r_value(self, k: int, traj) -> float:
        return math.log(self.r_value(k, traj.ys))

    def audit_level(self, traj) -> tuple[float, float, float, float]:
        """(old-weight ratio, diagonal, next r, diagonal excess) right after
        an observation was recorded; the excess is zero for true
        ratio-recursion rules and nonzero only for perturbed controls."""
        q = traj.p_diag[-1]
        return 1.0 - q, q, traj.r_seq[-1], 0.0


def gos_weights(r_seq: Sequence[float]) -> list[float]:
    """Full weight vector p(n,1..n) from r_0..r_n via the ratio recursion.

    Requires r_0 = 1 and a positive non-increasing sequence.  With n+1
    values supplied, returns the n weights at step n; together with r_n
    they sum to one.
    """
    r = [float(v) for v in r_seq]
    if not r or r[0] != 1.0:
        raise DomainError("r sequence must start at r_0 = 1")
    for k in range(1, len(r)):
        if r[k] <= 0.0:
            raise DomainError(f"r_{k} = {r[k]} is not strictly positive")
        if r[k] > r[k - 1]:
            raise DomainError(f"r sequence increases at k={k}: {r[k - 1]} -> {r[k]}")
    p: list[float] = []
    for k in range(1, len(r)):
        ratio = r[k] / r[k - 1]
        p = [ratio * w for w in p]
        p.append(1.0 - ratio)
    return p


def gos_weights_closed_form(r_seq: Sequence[float]) -> list[float]:
    """Same vector as `gos_weights` via p(n,i) = r_n (1/r_i - 1/r_{i-1})."""
    r = [float(v) for v in r_seq]
    if not r or r[0] != 1.0:
        raise DomainError("r sequence must start at r_0 = 1")
    rn = r[-1]
    return [rn * (1.0 / r[i] - 1.0 / r[i - 1]) for i in range(1, len(r))]


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Recorded state of one simulated chain.

    Per-step records are parallel lists of length n.  Block-level running
    aggregates support O(L) sampling; they are owned by this trajectory
    and updated only by the engine.
    """

    tags: list[float] = field(default_factory=list)
    ys: list[float] = field(default_factory=list)
    log_ys: list[float] = field(default_factory=list)   # only for tracks_log processes
    new_flags: list[int] = field(default_factory=list)
    joined: list[int] = field(default_factory=list)     # 0-based block index per step
    r_seq: list[float] = field(default_factory=lambda: [1.0])  # r_0..r_n
    p_diag: list[float] = field(default_factory=list)   # p(j,j), GOS rules only
    seed_info: Optional[tuple[int, int]] = None
    mu_diffuse: bool = True

    # block aggregates
    block_tags: list[float] = field(default_factory=list)
    block_sizes: list[int] = field(default_factory=list)
    block_ysums: list[float] = field(default_factory=list)
    block_gsums: list[float] = field(default_factory=list)
    block_probs: list[float] = field(default_factory=list)  # maintained for log-ratio rules
    log_r: float = 0.0
    sum_y: float = 0.0

    _value_to_block: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.tags)

    @property
    def length(self) -> int:
        return len(self.block_tags)

    def copy(self) -> "Trajectory":
        t = Trajectory(
            tags=list(self.tags), ys=list(self.ys), log_ys=list(self.log_ys),
            new_flags=list(self.new_flags),
            joined=list(self.joined), r_seq=list(self.r_seq), p_diag=list(self.p_diag),
            seed_info=self.seed_info, block_tags=list(self.block_tags),
            block_sizes=list(self.block_sizes), block_ysums=list(self.block_ysums),
            block_gsums=list(self.block_gsums), block_probs=list(self.block_probs),
            log_r=self.log_r, sum_y=self.sum_y, mu_diffuse=self.mu_diffuse,
        )
        t._value_to_block = dict(self._value_to_block)
        return t

    def partition_state(self):
        from .partition import induced_partition

        return induced_partition(self.tags)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _check_normalized(probs, r, step):
    total = math.fsum(probs) + r
    if abs(total - 1.0) > NORMALIZATION_TOL or r < -NORMALIZATION_TOL:
        raise RuleError(step, total, components=(list(probs), r))
    if probs and min(probs) < -NORMALIZATION_TOL:
        raise RuleError(step, total, components=(list(probs), r),
                        message=f"negative block weight at step {step}")


def record_observation(traj: Trajectory, rule: PredictionRule, tag: float, y: float,
                       log_y: Optional[float] = None) -> None:
    """Append one (tag, weight) observation with all bookkeeping.

    The engine calls this after drawing; replays (audits, statistics on
    recorded data) call it with stored values.
    """
    n = traj.n
    # place the tag by value equality; with a diffuse measure a fresh draw
    # collides with probability zero and always opens a block
    blk = traj._value_to_block.get(tag)
    if blk is None:
        blk = traj.length
        traj._value_to_block[tag] = blk
        traj.block_tags.append(tag)
        traj.block_sizes.append(0)
        traj.block_ysums.append(0.0)
        traj.block_gsums.append(0.0)
        traj.block_probs.append(0.0)
        traj.new_flags.append(1)
    else:
        traj.new_flags.append(0)
    traj.tags.append(tag)
    traj.joined.append(blk)

    if log_y is not None:
        traj.log_ys.append(log_y)
    traj.ys.append(y)
    traj.sum_y += y
    traj.block_sizes[blk] += 1
    traj.block_ysums[blk] += y

    if isinstance(rule, GosRule):
        m = n + 1
        if rule.uses_log_ratio:
            log_r_next = rule.log_r_value(m, traj)
            ratio = math.exp(log_r_next - traj.log_r)
            if ratio > 1.0 + NORMALIZATION_TOL:
                raise RuleError(m, ratio, message=f"r increased at step {m}")
            ratio = min(ratio, 1.0)
            for k in range(traj.length):
                traj.block_probs[k] *= ratio
            traj.block_probs[blk] += 1.0 - ratio
            traj.log_r = log_r_next
            r_next = math.exp(log_r_next)
        else:
            r_next = rule.r_next(traj)
            if r_next <= 0.0:
                raise RuleError(m, r_next, message=f"r_{m} = {r_next} not strictly positive")
            r_prev = traj.r_seq[-1]
            if r_next > r_prev * (1.0 + NORMALIZATION_TOL):
                raise RuleError(m, r_next, message=f"r increased at step {m}: {r_prev} -> {r_next}")
            ratio = min(r_next / r_prev, 1.0)
            g = 1.0 / r_next - 1.0 / r_prev
            if not math.isfinite(g):
                raise RuleError(m, r_next, message=(
                    f"1/r overflowed at step {m} (r={r_next:.3g}); deeply decaying "
                    f"sequences must run in log-ratio mode"))
            traj.block_gsums[blk] += g
        traj.r_seq.append(r_next)
        traj.p_diag.append(1.0 - ratio)
    else:
        traj.r_seq.append(rule.block_star(traj)[1])
        traj.p_diag.append(float("nan"))


def _advance(traj: Trajectory, rule: PredictionRule, mu: BaseMeasure,
             wp: WeightProcess, rng: np.random.Generator, check: bool) -> None:
    """One step of the chain, in place."""
    n = traj.n
    traj.mu_diffuse = mu.diffuse
    if n == 0:
        probs, r = [], 1.0
    else:
        probs, r = rule.block_star(traj)
        if check:
            _check_normalized(probs, r, n)

    u = rng.random()
    if u < r:
        tag = mu.sample(rng)
    else:
        t = u - r
        c = 0.0
        k = traj.length - 1
        for k, pk in enumerate(probs):
            c += pk
            if t <= c:
                break
        tag = traj.block_tags[k]

    if wp.tracks_log:
        log_y = wp.sample_log(n + 1, traj.log_ys, rng)
        record_observation(traj, rule, tag, math.exp(log_y), log_y=log_y)
    else:
        record_observation(traj, rule, tag, wp.sample(n + 1, traj.ys, rng))


def sample_next(traj: Trajectory, rule: PredictionRule, mu: BaseMeasure,
                wp: WeightProcess, rng: np.random.Generator,
                check: bool = True) -> Trajectory:
    """Return a copy of `traj` extended by one observation."""
    out = traj.copy()
    _advance(out, rule, mu, wp, rng, check)
    return out


def block_weights(traj: Trajectory, rule: PredictionRule) -> tuple[list[float], float]:
    """Block-aggregated weights (p*(n,1..L), r_n) at the current state."""
    if traj.n < 1:
        raise DomainError("block weights need at least one observation")
    probs, r = rule.block_star(traj)
    _check_normalized(probs, r, traj.n)
    return probs, r


def simulate(rule: PredictionRule, mu: BaseMeasure, wp: WeightProcess,
             horizon: int, rng: np.random.Generator,
             seed_info: Optional[tuple[int, int]] = None,
             check_every: int = 64) -> Trajectory:
    """Run the chain for `horizon` observations.

    Weight normalization is revalidated every `check_every` steps (every
    step when check_every=1); rule and weight errors propagate with the
    step index attached.
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    traj = Trajectory(seed_info=seed_info)
    for step in range(horizon):
        _advance(traj, rule, mu, wp, rng, check=(step % check_every == 0))
    return traj


def rng_for_replicate(master_seed: int, replicate_index: int) -> np.random.Generator:
    """Deterministic, collision-free stream for one replicate.

    Streams are derived counter-style from (master seed, replicate index),
    so any replicate is reproducible in isolation.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(replicate_index)]))
