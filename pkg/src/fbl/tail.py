"""Exact and Monte-Carlo evaluation of the deviation probabilities.

The single-letter statistics of a discrete channel take finitely many
values; when those values share a common lattice step the n-fold sum
lives on an integer grid and its tail can be computed exactly by a
log-domain convolution. Otherwise a seeded Monte-Carlo estimate (with a
Wilson 99% interval) stands in, and continuous-output channels fall
back to the two-sided sandwich from the tilted-measure module.

Inequality conventions follow the two deviation events literally: the
conditional-entropy event is a strict upper tail (borderline lattice
atoms stay in the decoding set), the relative-entropy event is a
non-strict lower tail. Threshold comparisons get a 1e-9 lattice-step
slack toward the decoding set so float noise cannot flip an atom.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import channel as chn
from . import nep
from .estimates import TailEstimate
from .numkit import q_inv, rationalize_step

_WILSON_Z99 = q_inv(0.005)
_MERGE_TOL = 1e-12
_SLACK = 1e-9


class LatticeInfeasibleError(ValueError):
    """No common lattice step, or the DP state count exceeds the budget."""


@dataclass(frozen=True)
class TailBudget:
    """Resource knobs for the exact/MC dispatch ladder."""
    max_lattice_states: int = 10 ** 7
    mc_samples: int = 10 ** 6
    seed: int = 20240817
    shard: int = 65536


@dataclass(frozen=True)
class LatticeSpec:
    """Single-letter distribution: distinct real atoms with probabilities."""
    values: np.ndarray
    probs: np.ndarray
    lattice_step: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and probs must be matching 1-D arrays")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        order = np.argsort(v)
        v, p = v[order], p[order]
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_atoms(cls, values, probs) -> "LatticeSpec":
        """Build a spec, merging duplicate atoms and detecting the lattice step."""
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        keep_v, keep_p = [], []
        for v, p in sorted(zip(values, probs)):
            if p <= 0:
                continue
            if keep_v and abs(v - keep_v[-1]) <= _MERGE_TOL * max(1.0, abs(v)):
                keep_p[-1] += p
            else:
                keep_v.append(v)
                keep_p.append(p)
        v = np.array(keep_v)
        step = rationalize_step(np.diff(v)) if len(keep_v) > 1 else 0.0
        return cls(v, np.array(keep_p), lattice_step=step)


def _lattice_offsets(rows):
    """Common step, per-row integer offsets, and the fixed value offset.

    rows: list of (LatticeSpec, count). Single-atom rows contribute only
    to the fixed offset; multi-atom rows must share a lattice step.
    """
    diffs = []
    for ls, cnt in rows:
        if ls.values.size > 1:
            diffs.extend(np.diff(ls.values))
    if not diffs:
        return 0.0, None  # fully deterministic sum
    step = rationalize_step(diffs)
    if step is None:
        raise LatticeInfeasibleError("atom values share no common lattice step")
    return step, diffs


def _row_pmf_on_lattice(ls: LatticeSpec, step: float):
    """(base value, log-pmf array over lattice indices) for one row."""
    base = float(ls.values[0])
    if ls.values.size == 1:
        return base, np.array([0.0])
    idx = np.round((ls.values - base) / step).astype(int)
    if np.any(np.abs(idx * step - (ls.values - base)) >
              _SLACK * np.maximum(step, np.abs(ls.values - base))):
        raise LatticeInfeasibleError("atom values do not sit on the lattice")
    logp = np.full(idx.max() + 1, -np.inf)
    logp[idx] = np.log(ls.probs)
    return base, logp


def _convolve_log(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Log-domain linear convolution of two log-pmf arrays."""
    out = np.full(a.size + b.size - 1, -np.inf)
    for j in range(b.size):
        if b[j] == -np.inf:
            continue
        out[j:j + a.size] = np.logaddexp(out[j:j + a.size], a + b[j])
    return out


def _power_log(logp: np.ndarray, n: int, max_states: int) -> np.ndarray:
    """n-fold log-domain self-convolution, stage by stage."""
    span = (logp.size - 1) * n + 1
    if span > max_states:
        raise LatticeInfeasibleError(
            f"lattice DP needs {span} states, budget is {max_states}")
    acc = np.array([0.0])
    for _ in range(n):
        acc = _convolve_log(acc, logp)
    return acc


def _sum_distribution(rows, max_states):
    """Distribution of the total sum: (offset, step, log-pmf over indices)."""
    step, diffs = _lattice_offsets(rows)
    offset = 0.0
    acc = np.array([0.0])
    for ls, cnt in rows:
        base, logp = _row_pmf_on_lattice(ls, step if step else 1.0)
        offset += cnt * base
        if logp.size > 1:
            acc = _convolve_log(acc, _power_log(logp, cnt, max_states))
            if acc.size > max_states:
                raise LatticeInfeasibleError("lattice DP exceeded state budget")
    return offset, step, acc


def _tail_from_distribution(offset, step, log_pmf, threshold, side):
    """Tail mass of the lattice sum; side is 'gt' (strict) or 'le'."""
    if step == 0.0 or log_pmf.size == 1:
        total = offset
        if side == "gt":
            hit = total > threshold + _SLACK * max(1.0, abs(threshold))
        else:
            hit = total <= threshold + _SLACK * max(1.0, abs(threshold))
        return 0.0 if hit else -math.inf
    # index k corresponds to value offset + k*step
    kappa = (threshold - offset) / step
    slack = _SLACK * max(1.0, abs(kappa))
    k = np.arange(log_pmf.size)
    mask = (k > kappa + slack) if side == "gt" else (k <= kappa + slack)
    if not np.any(mask):
        return -math.inf
    sel = log_pmf[mask]
    sel = sel[sel > -np.inf]
    if sel.size == 0:
        return -math.inf
    return float(logsumexp(sel))


def exact_tail(ls: LatticeSpec, n: int, threshold: float,
               side: str = "gt", max_states: int = 10 ** 7) -> TailEstimate:
    """Exact tail of the n-fold i.i.d. sum via lattice convolution.

    side='gt' gives P{sum > threshold} (strict), side='le' gives
    P{sum <= threshold}. Raises LatticeInfeasibleError when the atoms do
    not share a lattice or the state budget is exceeded.
    """
    return exact_tail_rows([(ls, n)], threshold, side=side, max_states=max_states)


def exact_tail_rows(rows, threshold: float, side: str = "gt",
                    max_states: int = 10 ** 7) -> TailEstimate:
    """Exact tail for an independent sum drawn row-wise (count copies each)."""
    if side not in ("gt", "le"):
        raise ValueError(f"side must be 'gt' or 'le', got {side!r}")
    for ls, cnt in rows:
        if ls.lattice_step is None and ls.values.size > 1:
            raise LatticeInfeasibleError("spec carries no lattice step")
    offset, step, log_pmf = _sum_distribution(rows, max_states)
    log_tail = _tail_from_distribution(offset, step, log_pmf, threshold, side)
    value = math.exp(log_tail) if log_tail > -745.0 else 0.0
    return TailEstimate(kind="exact", value=min(value, 1.0), log_value=log_tail)


def wilson_interval(hits: int, trials: int, z: float = _WILSON_Z99):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = hits / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _shard_rng(seed: int, shard_index: int) -> np.random.Generator:
    """Counter-based generator for one shard; stable for any worker count."""
    key = np.array([seed % (2 ** 64), shard_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def mc_tail(ls: LatticeSpec, n: int, threshold: float, samples: int,
            seed: int, side: str = "gt", shard: int = 65536) -> TailEstimate:
    """Monte-Carlo tail estimate with a 99% Wilson interval.

    Sampling is sharded into fixed blocks with per-shard generators
    derived from (seed, shard index), so the result is bit-identical no
    matter how shards are scheduled.
    """
    return mc_tail_rows([(ls, n)], threshold, samples, seed, side=side, shard=shard)


def mc_tail_rows(rows, threshold: float, samples: int, seed: int,
                 side: str = "gt", shard: int = 65536) -> TailEstimate:
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    slack = _SLACK * max(1.0, abs(threshold))
    hits = 0
    done = 0
    shard_index = 0
    while done < samples:
        m = min(shard, samples - done)
        rng = _shard_rng(seed, shard_index)
        total = np.zeros(m)
        for ls, cnt in rows:
            if ls.values.size == 1:
                total += cnt * ls.values[0]
                continue
            counts = rng.multinomial(cnt, ls.probs, size=m)
            total += counts @ ls.values
        if side == "gt":
            hits += int(np.count_nonzero(total > threshold + slack))
        else:
            hits += int(np.count_nonzero(total <= threshold + slack))
        done += m
        shard_index += 1
    lo, hi = wilson_interval(hits, samples)
    return TailEstimate(kind="mc", value=hits / samples, lower=lo, upper=hi,
                        samples=samples, seed=seed)


# ---------------------------------------------------------------------------
# deviation probabilities of the two families
# ---------------------------------------------------------------------------

def cond_entropy_spec(ch: chn.DiscreteChannel) -> LatticeSpec:
    """Single-letter spec of -ln p(X|Y) under uniform binary input."""
    v, p = chn.posterior_atoms(ch)
    return LatticeSpec.from_atoms(v, p)


def rel_entropy_rows(ch: chn.DiscreteChannel, t: chn.InputType, n: int):
    """Per-input rows (spec, count) of ln(p(Y|x)/q_t(Y)) for an n-type t."""
    q = chn.mixture_output(ch, t)
    counts = t.counts(n)
    rows = []
    for x in t.support:
        row = ch.matrix[x]
        mask = row > 0
        u = np.log(row[mask]) - np.log(q[mask])
        rows.append((LatticeSpec.from_atoms(u, row[mask]), counts[x]))
    return rows


def pdelta(ch, delta: float, n: int,
           budget: TailBudget | None = None) -> TailEstimate:
    """Deviation probability of the conditional-entropy sum.

    P{ -(1/n) sum ln p(X_i|Z_i) > H(X|Y) + delta } under uniform input.
    Dispatch: exact lattice DP, then Monte Carlo, then the tilted-measure
    sandwich for continuous-output channels.
    """
    budget = budget or TailBudget()
    if isinstance(ch, chn.BiAwgn):
        fam = nep.cond_entropy_family(ch)
        est = nep.tail_bounds(fam, delta, n)
        return est
    spec = cond_entropy_spec(ch)
    h = chn.cond_entropy(ch)
    threshold = n * (h + delta)
    try:
        return exact_tail(spec, n, threshold, side="gt",
                          max_states=budget.max_lattice_states)
    except LatticeInfeasibleError:
        return mc_tail(spec, n, threshold, budget.mc_samples, budget.seed,
                       side="gt", shard=budget.shard)


def ptdelta(ch, t: chn.InputType, delta: float, n: int,
            budget: TailBudget | None = None) -> TailEstimate:
    """Deviation probability of the relative-entropy sum for an n-type t.

    P{ sum ln(p(Y_i|x_i)/q_t(Y_i)) <= n (I(t;P) - delta) } for any fixed
    input of composition t (the law depends on the input only through t).
    """
    budget = budget or TailBudget()
    if isinstance(ch, chn.BiAwgn):
        fam = nep.rel_entropy_family(ch, t)
        return nep.tail_bounds(fam, delta, n)
    rows = rel_entropy_rows(ch, t, n)
    mi = chn.mutual_info(ch, t)
    threshold = n * (mi - delta)
    try:
        return exact_tail_rows(rows, threshold, side="le",
                               max_states=budget.max_lattice_states)
    except LatticeInfeasibleError:
        return mc_tail_rows(rows, threshold, budget.mc_samples, budget.seed,
                            side="le", shard=budget.shard)
