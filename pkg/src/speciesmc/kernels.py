"""Compiled and vectorized simulation paths for the replication harness.

chain_arrays runs the full chain through a numba kernel that consumes the
random stream in exactly the same order and with exactly the same
arithmetic as the reference engine, so for the supported families the two
produce bit-identical trajectories from the same seed (asserted in the
test suite).  Supported: sum-reinforced rules (r = theta/(theta + sum Y))
with iid weights, and deterministic-r rules, both under the diffuse
uniform base measure.

length_arrays skips tags entirely: conditionally on the weight path, the
new-species indicators of a ratio-recursion chain with diffuse base
measure are independent Bernoulli(r_{j-1}), so block-count statistics
need only (weights, r, indicators).  This product structure is itself
verified against the full engine by the chi-square acceptance test.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .errors import DomainError
from .families import Family

R_SUM_REINFORCED = 0
R_DETERMINISTIC = 1


@numba.njit(cache=True)
def _y_from_u_nb(u, kind, p0, p1, p2):
    if kind == 1:
        return p0 + (p1 - p0) * u
    if kind == 2:
        return p0 - p1 * math.log1p(-u)
    if kind == 3:
        return p0 if u < p2 else p1
    return p0


@numba.njit(cache=True)
def _chain_kernel(rng, n, r_mode, theta, a_seq, wkind, w0, w1, w2):
    tags = np.empty(n)
    ys = np.empty(n)
    flags = np.zeros(n, dtype=np.uint8)
    cap = 256
    b_tag = np.empty(cap)
    b_w = np.empty(cap)  # ysums (mode 0) or 1/r increment sums (mode 1)
    L = 0
    sum_y = 0.0
    for m in range(1, n + 1):
        if r_mode == R_SUM_REINFORCED:
            d = theta + sum_y
            r = theta / d
        else:
            r = a_seq[m - 1]
        u = rng.random()
        if u < r:
            tag = rng.random()
            if L >= cap:
                cap *= 2
                nb_tag = np.empty(cap)
                nb_w = np.empty(cap)
                nb_tag[:L] = b_tag
                nb_w[:L] = b_w
                b_tag = nb_tag
                b_w = nb_w
            b_tag[L] = tag
            b_w[L] = 0.0
            k = L
            L += 1
            flags[m - 1] = 1
        else:
            t = u - r
            c = 0.0
            k = L - 1
            if r_mode == R_SUM_REINFORCED:
                d = theta + sum_y
                for k in range(L):
                    c += b_w[k] / d
                    if t <= c:
                        break
            else:
                for k in range(L):
                    c += r * b_w[k]
                    if t <= c:
                        break
            tag = b_tag[k]
        if r_mode == R_DETERMINISTIC:
            y = a_seq[m]
        elif wkind == 0:
            y = w0
        else:
            y = _y_from_u_nb(rng.random(), wkind, w0, w1, w2)
        sum_y += y
        if r_mode == R_SUM_REINFORCED:
            b_w[k] += y
        else:
            b_w[k] += 1.0 / a_seq[m] - 1.0 / a_seq[m - 1]
        tags[m - 1] = tag
        ys[m - 1] = y
    return tags, ys, flags


def _kernel_params(fam: Family, n: int):
    if not fam.mu.diffuse:
        return None
    rule = fam.rule
    name = type(rule).__name__
    if name in ("SumReinforcedRule", "BlackwellMacQueenRule") and fam.weight_dist is not None:
        wd = fam.weight_dist
        return (R_SUM_REINFORCED, rule.theta, np.empty(0), wd.kind_code, wd.p0, wd.p1, wd.p2)
    if name == "DeterministicRRule" and not rule.uses_log_ratio:
        a_seq = np.array([rule.a(k) for k in range(n + 1)])
        return (R_DETERMINISTIC, 0.0, a_seq, 0, 0.0, 0.0, 0.0)
    return None


def kernel_supported(fam: Family, n: int = 4) -> bool:
    return _kernel_params(fam, 0 if type(fam.rule).__name__ != "DeterministicRRule" else n) is not None


def chain_arrays(fam: Family, n: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(tags, ys, flags, r_seq) for one replicate via the compiled kernel."""
    params = _kernel_params(fam, n)
    if params is None:
        raise DomainError(f"no compiled path for family {fam.name}")
    r_mode, theta, a_seq, wkind, w0, w1, w2 = params
    tags, ys, flags = _chain_kernel(rng, n, r_mode, theta, a_seq, wkind, w0, w1, w2)
    if r_mode == R_SUM_REINFORCED:
        r_seq = np.concatenate(([1.0], theta / (theta + np.cumsum(ys))))
    else:
        r_seq = a_seq
    return tags, ys, flags, r_seq


def length_arrays(fam: Family, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """(flags, r_seq) of one replicate without simulating tags.

    Valid for ratio-recursion rules under a diffuse base measure, by the
    conditional product-Bernoulli structure of the new-species
    indicators.  Weights are drawn first (vectorized), indicators second.
    """
    if not (fam.is_gos and fam.mu.diffuse):
        raise DomainError(f"length-only path needs a ratio-recursion rule and "
                          f"diffuse base measure, not {fam.name}")
    rule = fam.rule
    name = type(rule).__name__
    if name in ("SumReinforcedRule", "BlackwellMacQueenRule"):
        wd = fam.weight_dist
        if wd is None:
            raise DomainError("sum-reinforced length path needs an iid weight law")
        if wd.kind_code == 0:
            ys = np.full(n, wd.p0)
        else:
            u = rng.random(n)
            if wd.kind_code == 1:
                ys = wd.p0 + (wd.p1 - wd.p0) * u
            elif wd.kind_code == 2:
                ys = wd.p0 - wd.p1 * np.log1p(-u)
            else:
                ys = np.where(u < wd.p2, wd.p0, wd.p1)
        r_seq = np.concatenate(([1.0], rule.theta / (rule.theta + np.cumsum(ys))))
    elif name == "DeterministicRRule":
        r_seq = np.array([rule.a(k) for k in range(n + 1)])
    elif name == "MarkovScalingRule":
        log_y = np.concatenate(([0.0], np.cumsum(np.log(rng.random(n - 1)))))
        r_seq = np.concatenate(([1.0], np.exp(log_y)))
    else:
        raise DomainError(f"no length-only path for rule {rule.name}")
    flags = rng.random(n) < r_seq[:n]
    return flags.astype(np.uint8), r_seq
