"""Derived statistics of a trajectory.

Everything here is a pure function of the recorded trajectory (tags,
weights, flags, r sequence): empirical and predictive means, the
centered fluctuation statistics and their quadratic variations, the
block-count statistics, and the analytic limit constants of the
catalog families.

Series are numpy arrays indexed by step.  V series have length n+1 and
start at V_0 = E[f(X_1)]; everything else has length n with entry j-1
holding the value at step j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import BaseMeasure, GosRule, PredictionRule, Trajectory
from .errors import DomainError
from .families import Family, FamilySpec, TwoParamRule

# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """A bounded test function with a vectorized form and, where known,
    its closed-form mean under the uniform base measure."""

    fid: str
    fn: Callable[[float], float]
    bound: float
    array_fn: Optional[Callable] = None
    uniform_mean: Optional[float] = None

    def apply(self, tags) -> np.ndarray:
        arr = np.asarray(tags, dtype=float)
        if self.array_fn is not None:
            return self.array_fn(arr)
        return np.array([self.fn(float(t)) for t in arr])

    def mean_under(self, mu: BaseMeasure) -> float:
        if not mu.diffuse:
            return mu.mean_of(self.fn)
        if self.uniform_mean is not None:
            return self.uniform_mean
        return mu.mean_of(self.fn)

    def squared(self) -> "TestFunction":
        return TestFunction(
            f"{self.fid}^2", lambda x: self.fn(x) ** 2, self.bound ** 2,
            array_fn=(lambda a: self.array_fn(a) ** 2) if self.array_fn else None,
            uniform_mean=None if self.fid not in _SQUARED_UNIFORM_MEANS else _SQUARED_UNIFORM_MEANS[self.fid],
        )


_SQUARED_UNIFORM_MEANS = {"ind_half": 0.5, "identity": 1.0 / 3.0, "square": 0.2}

_REGISTRY: dict[str, TestFunction] = {}


def _register(tf: TestFunction) -> TestFunction:
    _REGISTRY[tf.fid] = tf
    return tf


IND_HALF = _register(TestFunction(
    "ind_half", lambda x: 1.0 if x <= 0.5 else 0.0, 1.0,
    array_fn=lambda a: (a <= 0.5).astype(float), uniform_mean=0.5))
IDENTITY = _register(TestFunction(
    "identity", lambda x: x, 1.0, array_fn=lambda a: a, uniform_mean=0.5))
SQUARE = _register(TestFunction(
    "square", lambda x: x * x, 1.0, array_fn=lambda a: a * a, uniform_mean=1.0 / 3.0))


def default_test_functions() -> list[TestFunction]:
    return [IND_HALF, IDENTITY, SQUARE]


def get_test_function(fid: str) -> TestFunction:
    if fid in _REGISTRY:
        return _REGISTRY[fid]
    if fid.startswith("const:"):
        c = float(fid.split(":", 1)[1])
        return TestFunction(fid, lambda x: c, abs(c),
                            array_fn=lambda a: np.full_like(a, c), uniform_mean=c)
    if fid.startswith("ind:"):
        c = float(fid.split(":", 1)[1])
        return TestFunction(fid, lambda x: 1.0 if x <= c else 0.0, 1.0,
                            array_fn=lambda a: (a <= c).astype(float),
                            uniform_mean=min(max(c, 0.0), 1.0))
    raise DomainError(f"unknown test function id {fid!r}")


# ---------------------------------------------------------------------------
# per-step series
# ---------------------------------------------------------------------------


def empirical_mean(traj: Trajectory, f: TestFunction) -> np.ndarray:
    """Running means M_j = (1/j) sum_{k<=j} f(X_k)."""
    if traj.n == 0:
        raise DomainError("empty trajectory")
    fv = f.apply(traj.tags)
    return np.cumsum(fv) / np.arange(1, traj.n + 1)


def predictive_mean(traj: Trajectory, rule: PredictionRule, f: TestFunction,
                    mu: BaseMeasure) -> np.ndarray:
    """V_j = E[f(X_{j+1}) | past at step j], j = 0..n; V_0 = E[f(X_1)]."""
    ef = f.mean_under(mu)
    n = traj.n
    fv = f.apply(traj.tags)
    ys = np.asarray(traj.ys)
    if isinstance(rule, TwoParamRule):
        flags = np.asarray(traj.new_flags, dtype=float)
        sum_yf = np.cumsum(ys * fv)
        sum_fstar = np.cumsum(fv * flags)
        lcount = np.cumsum(flags)
        denom = rule.theta + np.cumsum(ys)
        v = (sum_yf - rule.alpha * sum_fstar
             + (rule.theta + rule.alpha * lcount) * ef) / denom
        return np.concatenate(([ef], v))
    if isinstance(rule, GosRule):
        if rule.uses_log_ratio:
            v = np.empty(n + 1)
            v[0] = ef
            for j in range(1, n + 1):
                q = traj.p_diag[j - 1]
                v[j] = (1.0 - q) * v[j - 1] + q * fv[j - 1]
            return v
        r = np.asarray(traj.r_seq)
        g = 1.0 / r[1:] - 1.0 / r[:-1]
        v = r[1:] * (np.cumsum(g * fv) + ef)
        return np.concatenate(([ef], v))
    raise DomainError(f"no predictive-mean form for rule {rule.name!r}")


def fluctuation_increments(traj: Trajectory, rule: PredictionRule, f: TestFunction,
                           mu: BaseMeasure) -> np.ndarray:
    """Unnormalized martingale increments z_j = f(X_j) - j V_j + (j-1) V_{j-1}.

    Dividing by sqrt(n) gives the triangular-array increments whose row
    sum is S_n and whose squared row sum is U_n.
    """
    fv = f.apply(traj.tags)
    v = predictive_mean(traj, rule, f, mu)
    j = np.arange(1, traj.n + 1)
    return fv - j * v[1:] + (j - 1) * v[:-1]


def fluctuation_increments_product_form(traj: Trajectory, rule: PredictionRule,
                                        f: TestFunction, mu: BaseMeasure) -> np.ndarray:
    """Same increments via z_j = (1 - j p(j,j)) (f(X_j) - V_{j-1}).

    Ratio-recursion rules only; p(j,j) is the recorded diagonal weight.
    """
    if not rule.is_gos:
        raise DomainError("product form needs the ratio-recursion diagonal")
    fv = f.apply(traj.tags)
    v = predictive_mean(traj, rule, f, mu)
    j = np.arange(1, traj.n + 1)
    q = np.asarray(traj.p_diag)
    return (1.0 - j * q) * (fv - v[:-1])


def clt_S(traj: Trajectory, rule: PredictionRule, f: TestFunction, mu: BaseMeasure,
          n: Optional[int] = None) -> tuple[float, float]:
    """(S_n, U_n): the centered empirical-vs-predictive fluctuation
    S_n = sqrt(n)(M_n - V_n) and its quadratic variation
    U_n = (1/n) sum z_j^2."""
    if not rule.is_gos:
        raise DomainError("fluctuation statistics need a ratio-recursion rule")
    n = traj.n if n is None else n
    if not 1 <= n <= traj.n:
        raise DomainError(f"n={n} outside trajectory length {traj.n}")
    z = fluctuation_increments(traj, rule, f, mu)[:n]
    m = empirical_mean(traj, f)[n - 1]
    v = predictive_mean(traj, rule, f, mu)[n]
    s = math.sqrt(n) * (m - v)
    u = float(np.sum(z * z) / n)
    return s, u


def tail_ratio_sum(traj: Trajectory, n: int, upto: Optional[int] = None) -> float:
    """Truncated tail sum n * sum_{k=n}^{N-1} Q_k^2 with Q_k = p(k+1,k+1)."""
    N = traj.n if upto is None else upto
    if not 1 <= n < N <= traj.n:
        raise DomainError(f"need 1 <= n < N <= {traj.n}, got n={n}, N={N}")
    q = np.asarray(traj.p_diag[n:N])
    return n * float(np.sum(q * q))


def clt_W(traj: Trajectory, rule: PredictionRule, f: TestFunction, mu: BaseMeasure,
          n: int, N: Optional[int] = None) -> tuple[float, float]:
    """(W_n, H_n): the predictive-mean fluctuation around its limit and
    the truncated tail sum of squared diagonal weights.

    The limit value is estimated by the empirical mean at the far
    horizon N (default: trajectory end, required >= 25n when defaulted;
    empirical and predictive means merge, and the empirical one does not
    reuse the quantity under test).
    """
    if not rule.is_gos:
        raise DomainError("predictive-fluctuation statistics need a ratio-recursion rule")
    if N is None:
        N = traj.n
        if N < 25 * n:
            raise DomainError(f"defaulted truncation horizon {N} < 25n; "
                              f"pass N explicitly to truncate earlier")
    if N <= n:
        raise DomainError(f"truncation horizon N={N} must exceed n={n}")
    v_n = predictive_mean(traj, rule, f, mu)[n]
    m_N = empirical_mean(traj, f)[N - 1]
    w = math.sqrt(n) * (v_n - m_N)
    h = tail_ratio_sum(traj, n, N)
    return w, h


# ---------------------------------------------------------------------------
# block-count statistics
# ---------------------------------------------------------------------------


@dataclass
class HSpec:
    """Growth sequence h_n: n^alpha, log n, or an explicit callable."""

    kind: str = "log"
    alpha: float = 0.5
    custom: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def values(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=float)
        if self.kind == "power":
            return steps ** self.alpha
        if self.kind == "log":
            return np.log(steps)
        if self.kind == "custom" and self.custom is not None:
            return np.asarray(self.custom(steps), dtype=float)
        raise DomainError(f"unknown h spec {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "log"), float(d.get("alpha", 0.5)))


@dataclass
class PartitionStats:
    """Block-count series under a growth sequence h.

    t is the fluctuation (L_n - R_{n-1})/sqrt(h_n) with R the partial sums
    of the realized r_j, j >= 1.  t_centered replaces R_{n-1} by the full
    compensator sum_{j=0}^{n-1} r_j, which differs by the constant r_0 = 1
    and is exactly mean-zero at every n; the distributional harness tests
    that form.
    """

    h: np.ndarray
    L: np.ndarray
    L_over_h: np.ndarray
    R: np.ndarray
    sigma2: np.ndarray
    t: np.ndarray
    t_centered: np.ndarray


def partition_stats(traj: Trajectory, h: HSpec) -> PartitionStats:
    if not traj.mu_diffuse:
        # with atoms the new-species probability is r_n times the mass of
        # the unseen set, not r_n itself, and the centering below is wrong
        raise DomainError("block-count statistics require a diffuse base measure")
    return partition_stats_from_arrays(
        np.asarray(traj.new_flags, dtype=float), np.asarray(traj.r_seq), h)


def partition_stats_from_arrays(flags: np.ndarray, r_seq: np.ndarray, h: HSpec) -> PartitionStats:
    """Same statistics from the raw (flags, r_0..r_n) arrays."""
    n = len(flags)
    hv = h.values(n)
    L = np.cumsum(flags)
    R = np.cumsum(r_seq[1:n + 1])                 # R_j = r_1 + ... + r_j
    comp = np.cumsum(r_seq[:n])                   # sum_{j=0}^{k-1} r_j at step k
    rj = r_seq[1:n + 1]
    qv = np.cumsum(rj * (1.0 - rj))
    with np.errstate(divide="ignore", invalid="ignore"):
        L_over_h = L / hv
        sigma2 = qv / hv
        sqrt_h = np.sqrt(hv)
        R_prev = R - rj                            # R_{j-1}
        t = (L - R_prev) / sqrt_h
        t_centered = (L - comp) / sqrt_h
    return PartitionStats(h=hv, L=L, L_over_h=L_over_h, R=R, sigma2=sigma2,
                          t=t, t_centered=t_centered)


# ---------------------------------------------------------------------------
# full series bundle
# ---------------------------------------------------------------------------


@dataclass
class StatSeries:
    """Per-step series for a set of test functions, plus running sums."""

    n: int
    fids: list[str]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    z: dict[str, np.ndarray]
    s: dict[str, np.ndarray]
    u: dict[str, np.ndarray]
    L: np.ndarray
    r_seq: np.ndarray
    p_diag: np.ndarray
    sum_y: np.ndarray
    sum_y2: np.ndarray
    sum_yf: dict[str, np.ndarray]
    sum_f: dict[str, np.ndarray]
    sum_f2: dict[str, np.ndarray]
    partition: Optional[PartitionStats] = None


def compute_series(traj: Trajectory, rule: PredictionRule, fs: list[TestFunction],
                   mu: BaseMeasure, h: Optional[HSpec] = None) -> StatSeries:
    n = traj.n
    if n == 0:
        raise DomainError("empty trajectory")
    ys = np.asarray(traj.ys)
    steps = np.arange(1, n + 1, dtype=float)
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    z: dict[str, np.ndarray] = {}
    s: dict[str, np.ndarray] = {}
    u: dict[str, np.ndarray] = {}
    sum_yf: dict[str, np.ndarray] = {}
    sum_f: dict[str, np.ndarray] = {}
    sum_f2: dict[str, np.ndarray] = {}
    for f in fs:
        fv = f.apply(traj.tags)
        m[f.fid] = np.cumsum(fv) / steps
        v[f.fid] = predictive_mean(traj, rule, f, mu)
        if rule.is_gos:
            zz = fluctuation_increments(traj, rule, f, mu)
            z[f.fid] = zz
            s[f.fid] = np.sqrt(steps) * (m[f.fid] - v[f.fid][1:])
            u[f.fid] = np.cumsum(zz * zz) / steps
        sum_yf[f.fid] = np.cumsum(ys * fv)
        sum_f[f.fid] = np.cumsum(fv)
        sum_f2[f.fid] = np.cumsum(fv * fv)
    part = None
    if h is not None:
        part = partition_stats(traj, h)
    return StatSeries(
        n=n, fids=[f.fid for f in fs], m=m, v=v, z=z, s=s, u=u,
        L=np.cumsum(np.asarray(traj.new_flags, dtype=float)),
        r_seq=np.asarray(traj.r_seq), p_diag=np.asarray(traj.p_diag),
        sum_y=np.cumsum(ys), sum_y2=np.cumsum(ys * ys),
        sum_yf=sum_yf, sum_f=sum_f, sum_f2=sum_f2, partition=part)


# ---------------------------------------------------------------------------
# limit constants
# ---------------------------------------------------------------------------


@dataclass
class LimitConstants:
    """Analytic limits for a catalog family, where the theory supplies them.

    lln_limit and clt_sigma2 describe L_n/h_n and its fluctuation under
    the family's natural growth sequence h; delta is Var[Y]/E[Y]^2 (the
    mixture scale of the empirical-vs-predictive fluctuation) and
    h_mixture = E[Y^2]/E[Y]^2 (the tail-sum limit of the predictive
    fluctuation).  Fields are None when no analytic value exists; nothing
    is ever guessed.
    """

    family: str
    h: Optional[HSpec] = None
    lln_limit: Optional[float] = None
    clt_sigma2: Optional[float] = None
    delta: Optional[float] = None
    h_mixture: Optional[float] = None
    uf_formula: str = "delta * (V_{f^2} - V_f^2)"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": "speciesmc/limit-constants/1",
            "family": self.family,
            "h": self.h.to_dict() if self.h else None,
            "lln_limit": self.lln_limit,
            "clt_sigma2": self.clt_sigma2,
            "delta": self.delta,
            "h_mixture": self.h_mixture,
            "uf_formula": self.uf_formula,
            "notes": list(self.notes),
        }


def limit_constants(spec: FamilySpec | Family) -> LimitConstants:
    fam = spec if isinstance(spec, Family) else spec.build()
    name = fam.name
    p = fam.params
    wd = fam.weight_dist
    if name == "power_decay":
        theta, alpha = p["theta"], p["alpha"]
        return LimitConstants(
            family=name, h=HSpec("power", alpha),
            lln_limit=theta / alpha, clt_sigma2=theta / alpha,
            delta=0.0, h_mixture=None,
            notes=["deterministic weights: the mixture variance of the "
                   "empirical-vs-predictive fluctuation degenerates to 0"])
    if name in ("blackwell_macqueen", "reinforced_bm"):
        theta = p["theta"]
        m = wd.m if wd else 1.0
        delta2 = wd.delta if wd else 1.0
        return LimitConstants(
            family=name, h=HSpec("log"),
            lln_limit=theta / m, clt_sigma2=theta / m,
            delta=(delta2 - m * m) / (m * m), h_mixture=delta2 / (m * m))
    if name == "reinforced_polya":
        m = wd.m if wd else 1.0
        delta2 = wd.delta if wd else 1.0
        return LimitConstants(
            family=name, h=None, lln_limit=None, clt_sigma2=None,
            delta=(delta2 - m * m) / (m * m), h_mixture=delta2 / (m * m),
            notes=["atomic base measure: block-count asymptotics do not apply"])
    if name == "markov_chain_y":
        return LimitConstants(
            family=name, h=None, lln_limit=None, clt_sigma2=None,
            delta=None, h_mixture=None,
            notes=["summable new-species probabilities: L_n converges, "
                   "L_n/h_n -> 0 for any divergent h; no analytic constant"])
    return LimitConstants(family=name, notes=["no analytic constant"])
