"""Channel models and the information functionals the bounds consume.

Two channel kinds are supported: finite transition matrices (row
stochastic, |X| x |Y|) and binary-input AWGN with a linear snr parameter.
The AWGN convention maps inputs {0, 1} to signals {+sqrt(snr), -sqrt(snr)}
with unit-variance noise, i.e. snr = signal power / noise variance; this
only fixes labeling and does not affect any bound value.

All information quantities are in nats. Expectations run over the support
of the joint law, so zero transition probabilities contribute nothing.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .numkit import LOG_SQRT_2PI, gauss_hermite

_ROW_SUM_TOL = 1e-12


class DegenerateChannelError(ValueError):
    """The single-letter statistic has zero variance (e.g. noiseless channel)."""


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """Memoryless channel given by a row-stochastic transition matrix."""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 1:
            raise ValueError(f"transition matrix must be |X|x|Y| with |X|>=2, got {m.shape}")
        if np.any(m < 0):
            raise ValueError("negative transition probability")
        sums = m.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
            raise ValueError(f"row sums deviate from 1 beyond {_ROW_SUM_TOL}: {sums}")
        m = m / sums[:, None]
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class BiAwgn:
    """Binary-input AWGN channel; snr is linear (signal power over noise variance)."""
    snr: float
    quad_order: int = 199

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.snr)

    def log_likelihood(self, y, x: int):
        """ln p(y|x) for input bit x (0 -> +a, 1 -> -a)."""
        s = self.amplitude if x == 0 else -self.amplitude
        y = np.asarray(y, dtype=float)
        return -0.5 * (y - s) ** 2 - LOG_SQRT_2PI


ChannelModel = DiscreteChannel | BiAwgn


def bsc(p: float) -> DiscreteChannel:
    """Binary symmetric channel with crossover probability p."""
    return DiscreteChannel(np.array([[1 - p, p], [p, 1 - p]]))


def bec(p: float) -> DiscreteChannel:
    """Binary erasure channel; outputs ordered (0, erasure, 1)."""
    return DiscreteChannel(np.array([[1 - p, p, 0.0], [0.0, p, 1 - p]]))


def zchannel(p: float) -> DiscreteChannel:
    """Z channel: input 0 flips to output 1 with probability p, input 1 is clean."""
    return DiscreteChannel(np.array([[1 - p, p], [0.0, 1.0]]))


def as_bsc(ch: ChannelModel):
    """Crossover probability if ch is a BSC in standard layout, else None."""
    if not isinstance(ch, DiscreteChannel) or ch.matrix.shape != (2, 2):
        return None
    m = ch.matrix
    p = 0.5 * (m[0, 1] + m[1, 0])
    if abs(m[0, 0] - m[1, 1]) < 1e-12 and abs(m[0, 1] - m[1, 0]) < 1e-12 and p < 0.5:
        return p
    return None


def as_bec(ch: ChannelModel):
    """Erasure probability if ch is a BEC up to output reordering, else None."""
    if not isinstance(ch, DiscreteChannel) or ch.matrix.shape != (2, 3):
        return None
    m = ch.matrix
    shared = [j for j in range(3) if m[0, j] > 0 and m[1, j] > 0]
    if len(shared) != 1:
        return None
    e = shared[0]
    if abs(m[0, e] - m[1, e]) > 1e-12:
        return None
    own0 = [j for j in range(3) if j != e and m[0, j] > 0]
    own1 = [j for j in range(3) if j != e and m[1, j] > 0]
    if len(own0) == 1 and len(own1) == 1 and own0[0] != own1[0]:
        return float(m[0, e])
    return None


def as_zchannel(ch: ChannelModel):
    """Flip probability if ch is a Z channel in standard layout, else None."""
    if not isinstance(ch, DiscreteChannel) or ch.matrix.shape != (2, 2):
        return None
    m = ch.matrix
    if m[1, 0] == 0.0 and abs(m[1, 1] - 1.0) < 1e-12 and 0 < m[0, 1] < 1:
        return float(m[0, 1])
    return None


@dataclass(frozen=True)
class InputType:
    """Input composition: exact rational probabilities over the input alphabet.

    denominator = n ties the type to a block length (all n*t(x) integers);
    denominator = 0 means a free distribution not bound to any n.
    """
    probs: tuple
    denominator: int = 0

    def __post_init__(self):
        fr = tuple(Fraction(p) for p in self.probs)
        if sum(fr) != 1:
            raise ValueError(f"type probabilities must sum to 1 exactly, got {fr}")
        if any(p < 0 for p in fr):
            raise ValueError("negative type probability")
        if not any(p > 0 for p in fr):
            raise ValueError("empty support")
        if self.denominator:
            for p in fr:
                if (p * self.denominator).denominator != 1:
                    raise ValueError(
                        f"{p} is not a multiple of 1/{self.denominator}")
        object.__setattr__(self, "probs", fr)

    @classmethod
    def uniform(cls, k: int) -> "InputType":
        return cls(tuple(Fraction(1, k) for _ in range(k)))

    @classmethod
    def from_counts(cls, counts) -> "InputType":
        n = sum(counts)
        return cls(tuple(Fraction(c, n) for c in counts), denominator=n)

    def counts(self, n: int):
        """Per-symbol counts n*t(x); raises unless t is an n-type."""
        out = []
        for p in self.probs:
            c = p * n
            if c.denominator != 1:
                raise ValueError(f"type {self.probs} is not an n-type for n={n}")
            out.append(int(c))
        return out

    def as_floats(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    @property
    def support(self):
        return tuple(i for i, p in enumerate(self.probs) if p > 0)

    def entropy(self) -> float:
        t = self.as_floats()
        t = t[t > 0]
        return float(-(t * np.log(t)).sum())


@dataclass(frozen=True)
class InfoSummary:
    """Moments of the single-letter information quantities of a channel."""
    cond_entropy_nats: float | None
    linear_capacity_nats: float | None
    sigma2_h: float | None
    m3_h: float | None
    mutual_info_nats: float | None = None
    divergences: tuple | None = None
    sigma2_d: float | None = None
    m3_d: float | None = None


def log_type_class_size(t: InputType, n: int) -> float:
    """ln of the number of length-n sequences with composition t."""
    counts = t.counts(n)
    from .numkit import log_multinom
    return log_multinom(counts)


# ---------------------------------------------------------------------------
# conditional-entropy family (uniform binary input)
# ---------------------------------------------------------------------------

def _require_binary(ch: ChannelModel):
    if isinstance(ch, DiscreteChannel) and ch.input_size != 2:
        raise ValueError(f"binary-input channel required, |X|={ch.input_size}")


def posterior_atoms(ch: DiscreteChannel):
    """Atoms of -ln p(X|Y) under uniform input: (values, probs) over the joint support."""
    _require_binary(ch)
    m = ch.matrix
    denom = m[0] + m[1]
    values, probs = [], []
    for x in range(2):
        for y in range(ch.output_size):
            if m[x, y] > 0:
                values.append(math.log(denom[y]) - math.log(m[x, y]))
                probs.append(0.5 * m[x, y])
    return np.array(values), np.array(probs)


def _biawgn_neglog_posterior(a: float, y: np.ndarray) -> np.ndarray:
    """-ln p(0|y) in the symmetric representation, = softplus(-2 a y)."""
    return np.logaddexp(0.0, -2.0 * a * y)


def cond_entropy(ch: ChannelModel, order: int | None = None) -> float:
    """H(X|Y) in nats under uniform binary input."""
    _require_binary(ch)
    if isinstance(ch, DiscreteChannel):
        v, p = posterior_atoms(ch)
        return float(p @ v)
    rule = gauss_hermite(order or ch.quad_order)
    a = ch.amplitude
    y = rule.gaussian_nodes(mean=a)
    return float(rule.gaussian_weights @ _biawgn_neglog_posterior(a, y))


def linear_capacity(ch: ChannelModel, order: int | None = None) -> float:
    """ln 2 - H(X|Y), the rate scale of the parity-check ensemble bounds."""
    return math.log(2.0) - cond_entropy(ch, order=order)


def is_symmetric(ch: ChannelModel) -> bool:
    """True when -ln p(0|Y)|X=0 and -ln p(1|Y)|X=1 are equidistributed.

    For such channels the message-puncturing factor 1/(1 - 2^-n) in the
    parity-check ensemble bounds can be dropped.
    """
    if isinstance(ch, BiAwgn):
        return True
    _require_binary(ch)
    m = ch.matrix
    denom = m[0] + m[1]

    def law(x):
        pairs = {}
        for y in range(ch.output_size):
            if m[x, y] > 0:
                v = round(math.log(denom[y]) - math.log(m[x, y]), 12)
                pairs[v] = pairs.get(v, 0.0) + m[x, y]
        return pairs

    l0, l1 = law(0), law(1)
    if set(l0) != set(l1):
        return False
    return all(abs(l0[k] - l1[k]) < 1e-10 for k in l0)


# ---------------------------------------------------------------------------
# relative-entropy family (arbitrary discrete input, composition t)
# ---------------------------------------------------------------------------

def _check_support(ch: ChannelModel, t: InputType):
    size = ch.matrix.shape[0] if isinstance(ch, DiscreteChannel) else 2
    if len(t.probs) != size:
        raise ValueError(f"type has {len(t.probs)} symbols, channel has {size}")


def mixture_output(ch: ChannelModel, t: InputType):
    """Output law q_t(y) = sum_x t(x) p(y|x).

    Returns a probability vector for discrete channels and the signal
    amplitude/weights pair for BiAwgn (a two-component Gaussian mixture).
    """
    _check_support(ch, t)
    tf = t.as_floats()
    if isinstance(ch, DiscreteChannel):
        return tf @ ch.matrix
    return ch.amplitude, tf


def biawgn_log_mixture(ch: BiAwgn, t: InputType, y: np.ndarray) -> np.ndarray:
    """ln q_t(y) for the BiAwgn two-component mixture."""
    tf = t.as_floats()
    terms = []
    for x, w in enumerate(tf):
        if w > 0:
            terms.append(math.log(w) + ch.log_likelihood(y, x))
        else:
            terms.append(np.full_like(np.asarray(y, dtype=float), -np.inf))
    return np.logaddexp(terms[0], terms[1])


def divergences(ch: ChannelModel, t: InputType, order: int | None = None) -> np.ndarray:
    """Per-input divergences D(t, x) between p(.|x) and the mixture q_t.

    D(t, x) is +inf for an input (necessarily outside the support of t)
    whose outputs are unreachable under the mixture.
    """
    _check_support(ch, t)
    if isinstance(ch, DiscreteChannel):
        q = mixture_output(ch, t)
        out = np.zeros(ch.input_size)
        for x in range(ch.input_size):
            row = ch.matrix[x]
            mask = row > 0
            if np.any(q[mask] <= 0.0):
                out[x] = math.inf
                continue
            out[x] = float(row[mask] @ (np.log(row[mask]) - np.log(q[mask])))
        return out
    rule = gauss_hermite(order or ch.quad_order)
    out = np.zeros(2)
    for x in range(2):
        s = ch.amplitude if x == 0 else -ch.amplitude
        y = rule.gaussian_nodes(mean=s)
        u = ch.log_likelihood(y, x) - biawgn_log_mixture(ch, t, y)
        out[x] = float(rule.gaussian_weights @ u)
    return out


def mutual_info(ch: ChannelModel, t: InputType, order: int | None = None) -> float:
    """I(t; P) = sum over the support of t of t(x) D(t, x), in nats."""
    divs = divergences(ch, t, order=order)
    tf = t.as_floats()
    return float(sum(tf[x] * divs[x] for x in t.support))


def _central_moments(values, probs):
    mean = float(probs @ values)
    dev = values - mean
    var = float(probs @ dev ** 2)
    m3 = float(probs @ np.abs(dev) ** 3)
    return mean, var, m3


def moment_summary(ch: ChannelModel, t: InputType | None = None,
                   order: int | None = None) -> InfoSummary:
    """First three moments of both single-letter statistics.

    The conditional-entropy fields are filled for binary-input channels
    (uniform input); the divergence fields require a composition t.
    Raises DegenerateChannelError when the relevant variance vanishes.
    """
    binary = isinstance(ch, BiAwgn) or ch.input_size == 2
    h = cl = s2h = m3h = None
    if binary:
        if isinstance(ch, DiscreteChannel):
            v, p = posterior_atoms(ch)
        else:
            rule = gauss_hermite(order or ch.quad_order)
            a = ch.amplitude
            y = rule.gaussian_nodes(mean=a)
            v, p = _biawgn_neglog_posterior(a, y), rule.gaussian_weights
        h, s2h, m3h = _central_moments(v, p)
        cl = math.log(2.0) - h

    mi = divs = s2d = m3d = None
    if t is not None:
        _check_support(ch, t)
        tf = t.as_floats()
        divs = divergences(ch, t, order=order)
        mi = float(tf @ divs)
        s2d = m3d = 0.0
        for x in t.support:
            if isinstance(ch, DiscreteChannel):
                row = ch.matrix[x]
                mask = row > 0
                q = mixture_output(ch, t)
                u = np.log(row[mask]) - np.log(q[mask])
                w = row[mask]
            else:
                rule = gauss_hermite(order or ch.quad_order)
                s = ch.amplitude if x == 0 else -ch.amplitude
                y = rule.gaussian_nodes(mean=s)
                u = ch.log_likelihood(y, x) - biawgn_log_mixture(ch, t, y)
                w = rule.gaussian_weights
            _, var_x, m3_x = _central_moments(u, w)
            s2d += tf[x] * var_x
            m3d += tf[x] * m3_x
        if s2d <= 1e-14:
            raise DegenerateChannelError(
                "divergence statistic has zero variance for this composition")
    elif binary and s2h <= 1e-14:
        raise DegenerateChannelError(
            "conditional-entropy statistic has zero variance")

    return InfoSummary(cond_entropy_nats=h, linear_capacity_nats=cl,
                       sigma2_h=s2h, m3_h=m3h, mutual_info_nats=mi,
                       divergences=None if divs is None else tuple(divs),
                       sigma2_d=s2d, m3_d=m3d)
