"""Random walk jump kernels, transition probabilities, and seeded RNG streams.

Kernels are finite-support probability distributions on the integers with
zero mean and finite positive variance.  Transition probabilities of the
rate-1 continuous-time walk are computed by uniformization: a Poisson
mixture of discrete convolution powers of the kernel, truncated where the
Poisson tail drops below a tolerance.

Randomness is provided by counter-based Philox streams so that
(seed, stream_id) pins the exact draw sequence across runs and platforms.
Golden sequences are pinned in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "KernelError",
    "NonZeroMean",
    "NonFiniteVariance",
    "NotAProbability",
    "JumpKernel",
    "RngStream",
    "TransitionTable",
    "validate_kernel",
    "load_kernel",
    "builtin_kernel",
    "transition_probability",
    "p0",
    "sample_jump",
    "sample_jumps",
]

MEAN_TOL = 1e-12
PROB_TOL = 1e-12


class KernelError(ValueError):
    """A proposed jump kernel violates one of its invariants."""


class NonZeroMean(KernelError):
    pass


class NonFiniteVariance(KernelError):
    pass


class NotAProbability(KernelError):
    pass


@dataclass(frozen=True)
class JumpKernel:
    """Finite-support jump distribution on Z with mean 0 and variance sigma2.

    Construct through :func:`validate_kernel`; the constructor does not
    re-check invariants.
    """

    offsets: tuple[int, ...]
    probabilities: tuple[float, ...]
    sigma2: float

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @property
    def symmetric(self) -> bool:
        table = dict(zip(self.offsets, self.probabilities))
        return all(abs(p - table.get(-x, 0.0)) <= PROB_TOL for x, p in table.items())

    @property
    def nearest_neighbour(self) -> bool:
        """True for the simple symmetric walk (steps -1/+1 with probability 1/2)."""
        table = dict(zip(self.offsets, self.probabilities))
        nonzero = {x: p for x, p in table.items() if p > 0}
        return set(nonzero) == {-1, 1} and abs(nonzero[1] - 0.5) <= PROB_TOL

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(offsets, cumulative probabilities) for samplers; cum[-1] is exactly 1."""
        offs = np.asarray(self.offsets, dtype=np.int64)
        cum = np.cumsum(np.asarray(self.probabilities, dtype=np.float64))
        cum[-1] = 1.0
        return offs, cum

    def pmf_array(self) -> tuple[int, np.ndarray]:
        """(min_offset, dense probability vector) covering the support."""
        lo, hi = min(self.offsets), max(self.offsets)
        dense = np.zeros(hi - lo + 1)
        for x, p in zip(self.offsets, self.probabilities):
            dense[x - lo] = p
        return lo, dense


def validate_kernel(raw) -> JumpKernel:
    """Check kernel invariants and return a :class:`JumpKernel`.

    ``raw`` is an iterable of (offset, probability) pairs.  Raises
    :class:`NotAProbability`, :class:`NonZeroMean` or
    :class:`NonFiniteVariance` naming the violated invariant.
    """
    pairs = [(int(x), float(p)) for x, p in raw]
    if not pairs:
        raise NotAProbability("empty kernel")
    seen = {}
    for x, p in pairs:
        if x in seen:
            raise NotAProbability(f"duplicate offset {x}")
        seen[x] = p
    offsets = tuple(sorted(seen))
    probs = tuple(seen[x] for x in offsets)
    if any(not np.isfinite(p) or p < 0.0 or p > 1.0 for p in probs):
        raise NotAProbability("probabilities must lie in [0, 1]")
    total = sum(probs)
    if abs(total - 1.0) > PROB_TOL:
        raise NotAProbability(f"probabilities sum to {total!r}, not 1")
    mean = sum(x * p for x, p in zip(offsets, probs))
    if abs(mean) > MEAN_TOL:
        raise NonZeroMean(f"kernel mean is {mean!r}, must be 0")
    sigma2 = sum(x * x * p for x, p in zip(offsets, probs))
    if not np.isfinite(sigma2) or sigma2 <= 0.0:
        raise NonFiniteVariance(f"kernel variance is {sigma2!r}, must be in (0, inf)")
    support = sum(1 for p in probs if p > 0.0)
    if support < 2:
        raise NonFiniteVariance("support must contain at least two offsets")
    return JumpKernel(offsets=offsets, probabilities=probs, sigma2=float(sigma2))


def load_kernel(path) -> JumpKernel:
    """Parse a kernel file: one ``offset probability`` pair per line, # comments."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise NotAProbability(f"{path}:{lineno}: expected 'offset probability'")
            pairs.append((int(parts[0]), float(parts[1])))
    return validate_kernel(pairs)


_BUILTINS = {
    "ssrw": [(-1, 0.5), (1, 0.5)],
    # symmetric kernel with steps of size 1 and 2, used in coupling experiments
    "lazy2": [(-2, 0.25), (-1, 0.25), (1, 0.25), (2, 0.25)],
}


def builtin_kernel(name: str) -> JumpKernel:
    try:
        return validate_kernel(_BUILTINS[name])
    except KeyError:
        raise KeyError(f"unknown builtin kernel {name!r}; have {sorted(_BUILTINS)}") from None


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, stream_id).

    Streams are Philox counter-based generators keyed by the pair, so
    distinct stream_ids are independent and the same pair replays the
    same sequence on any platform.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % (1 << 64), self.stream_id % (1 << 64)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)


@dataclass(frozen=True)
class TransitionTable:
    """p_x(t) for a rate-1 walk, truncated so missing mass <= truncation_tol."""

    kernel: JumpKernel
    t: float
    truncation_tol: float
    values: dict = field(repr=False)

    def __getitem__(self, x: int) -> float:
        return self.values.get(int(x), 0.0)

    def total_mass(self) -> float:
        return float(sum(self.values.values()))


def _poisson_truncation(t: float, tol: float) -> int:
    """Smallest N with P(Poisson(t) > N) <= tol."""
    n = int(t)
    while special.gammainc(n + 1, t) > tol:  # regularized lower = upper Poisson tail
        n = max(n + 1, int(1.2 * n) + 1)
    lo, hi = int(t), n
    while lo < hi:
        mid = (lo + hi) // 2
        if special.gammainc(mid + 1, t) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def transition_probability(kernel: JumpKernel, t: float, tol: float = 1e-10) -> TransitionTable:
    """Transition table of the rate-1 walk at time t via uniformization.

    p(t) = sum_n e^{-t} t^n/n! a^{*n}, with the Poisson series cut at the
    smallest N whose tail mass is below ``tol``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must be in (0, 1)")
    if t == 0.0:
        return TransitionTable(kernel=kernel, t=0.0, truncation_tol=tol, values={0: 1.0})
    nmax = _poisson_truncation(t, tol)
    lo_a, a = kernel.pmf_array()
    weights = _poisson_pmf(np.arange(nmax + 1), t)
    # accumulate weighted convolution powers; power n has offset lo_a * n
    acc_lo = min(0, lo_a * nmax)
    acc_hi = max(0, (lo_a + len(a) - 1) * nmax)
    acc = np.zeros(acc_hi - acc_lo + 1)
    power = np.array([1.0])
    p_lo = 0
    for n in range(nmax + 1):
        if weights[n] > 0.0:
            acc[p_lo - acc_lo : p_lo - acc_lo + len(power)] += weights[n] * power
        if n < nmax:
            power = np.convolve(power, a)
            p_lo += lo_a
    xs = np.arange(acc_lo, acc_hi + 1)
    keep = acc > 0.0
    values = dict(zip(xs[keep].tolist(), acc[keep].tolist()))
    return TransitionTable(kernel=kernel, t=float(t), truncation_tol=tol, values=values)


def _poisson_pmf(ns: np.ndarray, t: float) -> np.ndarray:
    out = np.exp(ns * np.log(t) - t - special.gammaln(ns + 1))
    return out


def _return_probabilities(kernel: JumpKernel, nmax: int) -> np.ndarray:
    """a^{*n}(0) for n = 0..nmax."""
    lo_a, a = kernel.pmf_array()
    q = np.empty(nmax + 1)
    q[0] = 1.0
    power = np.array([1.0])
    p_lo = 0
    for n in range(1, nmax + 1):
        power = np.convolve(power, a)
        p_lo += lo_a
        q[n] = power[-p_lo] if 0 <= -p_lo < len(power) else 0.0
    return q


class P0Evaluator:
    """Fast p_0(t) for one kernel over a wide range of t.

    Small t uses the uniformization series; large t switches to the
    characteristic-function integral
    p_0(t) = (1/pi) int_0^pi exp(t (Re phi - 1)) cos(t Im phi) dtheta,
    which costs O(1) per evaluation.  The support is first reduced by its
    gcd (p_0 is invariant under spatial rescaling), which removes the
    periodic second peak at theta = pi.  The simple symmetric walk has
    the closed form p_0(t) = e^{-t} I_0(t).
    """

    def __init__(self, kernel: JumpKernel, switch_t: float = 400.0, tol: float = 1e-13):
        self.kernel = kernel
        self.switch_t = float(switch_t)
        self.tol = tol
        self._is_ssrw = kernel.nearest_neighbour
        if self._is_ssrw:
            return
        nmax = _poisson_truncation(self.switch_t, tol) + 1
        self._q = _return_probabilities(kernel, nmax)
        offs = np.array([x for x, p in zip(kernel.offsets, kernel.probabilities) if p > 0])
        probs = np.array([p for p in kernel.probabilities if p > 0])
        g = int(np.gcd.reduce(np.abs(offs)))
        offs = offs.astype(float) / g
        self._sigma_red = float(np.sqrt(np.sum(offs**2 * probs)))
        nodes, wts = np.polynomial.legendre.leggauss(320)
        self._gl_nodes, self._gl_wts = nodes, wts
        self._offs, self._probs = offs, probs

    def __call__(self, t):
        if self._is_ssrw:
            out = special.ive(0, np.asarray(t, dtype=float))  # e^{-t} I_0(t)
            return float(out) if np.ndim(t) == 0 else out
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty_like(t)
        small = t <= self.switch_t
        if small.any():
            out[small] = self._series(t[small])
        for i in np.nonzero(~small)[0]:
            out[i] = self._fourier(float(t[i]))
        return float(out[0]) if scalar else out

    def grid(self, h: float, n: int) -> np.ndarray:
        """p_0 on the uniform grid 0, h, ..., n*h (n+1 values)."""
        return self(np.arange(n + 1) * h)

    def _series(self, ts: np.ndarray) -> np.ndarray:
        ns = np.arange(len(self._q))
        out = np.empty_like(ts)
        for start in range(0, len(ts), 256):
            chunk = ts[start : start + 256]
            w = np.exp(
                np.outer(np.log(np.maximum(chunk, 1e-300)), ns)
                - chunk[:, None]
                - special.gammaln(ns + 1)[None, :]
            )
            out[start : start + 256] = w @ self._q
        out[ts == 0.0] = 1.0
        return out

    def _panel(self, a: float, b: float, t: float) -> float:
        theta = 0.5 * (b - a) * (self._gl_nodes + 1.0) + a
        z = np.outer(self._offs, theta)
        re = self._probs @ np.cos(z) - 1.0
        im = self._probs @ np.sin(z)
        vals = np.exp(t * re) * np.cos(t * im)
        return float(0.5 * (b - a) * (self._gl_wts @ vals) / np.pi)

    def _fourier(self, t: float) -> float:
        cut = min(np.pi, 40.0 / (self._sigma_red * np.sqrt(t)))
        total = self._panel(0.0, cut, t)
        if cut < np.pi:
            total += self._panel(cut, np.pi, t)
        return total


def p0(kernel: JumpKernel, t: float, tol: float = 1e-13) -> float:
    """One-off p_0(t); build a :class:`P0Evaluator` for repeated use."""
    return float(P0Evaluator(kernel, switch_t=max(t, 1.0) if t <= 400 else 400.0, tol=tol)(t))


def sample_jump(kernel: JumpKernel, rng) -> int:
    """One displacement drawn from the kernel.

    ``rng`` is an :class:`RngStream` or a numpy Generator; pure in
    (kernel, seed, stream_id) when given a stream.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    offs, cum = kernel.arrays()
    return int(offs[np.searchsorted(cum, gen.random(), side="right")])


def sample_jumps(kernel: JumpKernel, rng, n: int) -> np.ndarray:
    """Vector of n displacements drawn from the kernel."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    offs, cum = kernel.arrays()
    return offs[np.searchsorted(cum, gen.random(n), side="right")]
