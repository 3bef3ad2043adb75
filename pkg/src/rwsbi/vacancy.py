"""k-event vacancy correlations of a Poisson point process.

For events E_1..E_k with intersection intensities nu(∩_{i in I} E_i), the
centered product expectation

    E[ prod_i (1{xi(E_i)=0} - P(xi(E_i)=0)) ]

has the closed form  e^{-sum nu(E_i)} * sum_{I'} (-1)^{k-|I'|} exp(phi(I'))
with phi(I') = sum_{I subset I', |I|>=2} (-1)^{|I|} nu(∩ E_l), and a cover
expansion whose order-M truncation carries an explicit remainder bound.
Only the nu table matters, so the Monte Carlo route realizes the spec on
the finite atom algebra and samples independent Poisson counts per atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import RngStream

__all__ = [
    "KTooLarge",
    "UnrealizableSpec",
    "VacancySpec",
    "correlation_exact",
    "correlation_series",
    "correlation_montecarlo",
    "random_realizable_spec",
    "parse_spec_file",
    "format_spec_file",
]

EXACT_K_MAX = 20
SERIES_K_MAX = 8
ATOL = 1e-12


class KTooLarge(ValueError):
    pass


class UnrealizableSpec(ValueError):
    """No measure space realizes the given intersection table."""


def _popcounts(k: int) -> np.ndarray:
    return np.array([bin(m).count("1") for m in range(1 << k)], dtype=np.int64)


def _superset_moebius(values: np.ndarray, k: int) -> np.ndarray:
    """h[A] = sum_{B >= A} (-1)^{|B \\ A|} values[B] (atom masses from nu)."""
    h = values.copy()
    for b in range(k):
        bit = 1 << b
        for m in range(1 << k):
            if not m & bit:
                h[m] -= h[m | bit]
    return h


def _subset_zeta(values: np.ndarray, k: int) -> np.ndarray:
    """Z[A] = sum_{B <= A} values[B]."""
    z = values.copy()
    for b in range(k):
        bit = 1 << b
        for m in range(1 << k):
            if m & bit:
                z[m] += z[m ^ bit]
    return z


def _superset_zeta(values: np.ndarray, k: int) -> np.ndarray:
    """Z[A] = sum_{B >= A} values[B]."""
    z = values.copy()
    for b in range(k):
        bit = 1 << b
        for m in range(1 << k):
            if not m & bit:
                z[m] += z[m | bit]
    return z


@dataclass(frozen=True)
class VacancySpec:
    """Intersection intensity table nu[mask] for k labeled events.

    ``nu`` is indexed by the bitmask of a nonempty subset I of {1..k}
    (bit i-1 for event i) and holds nu(∩_{i in I} E_i).  Construction
    checks monotonicity, finiteness of singletons, and realizability
    (every atom of the generated algebra gets nonnegative mass).
    """

    k: int
    nu: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (1 <= self.k <= EXACT_K_MAX):
            raise KTooLarge(f"k must be in 1..{EXACT_K_MAX}")
        if self.nu.shape != (1 << self.k,):
            raise ValueError("nu must have 2^k entries (index 0 unused)")
        if not np.all(np.isfinite(self.nu[1:])) or np.any(self.nu[1:] < -ATOL):
            raise UnrealizableSpec("intensities must be finite and nonnegative")
        for m in range(1, 1 << self.k):
            for b in range(self.k):
                bit = 1 << b
                if not m & bit and self.nu[m | bit] > self.nu[m] + ATOL:
                    raise UnrealizableSpec(
                        f"monotonicity violated: nu[{m | bit:b}] > nu[{m:b}]"
                    )
        atoms = self.atom_masses()
        bad = np.nonzero(atoms[1:] < -ATOL)[0] + 1
        if bad.size:
            raise UnrealizableSpec(f"atom {bad[0]:b} has negative mass {atoms[bad[0]]}")

    @classmethod
    def from_dict(cls, k: int, table: dict) -> "VacancySpec":
        """Build from {subset-of-labels: value}; labels are 1-based; missing
        entries default to 0 (and must then be consistent)."""
        nu = np.zeros(1 << k)
        for key, val in table.items():
            labels = (key,) if isinstance(key, int) else tuple(key)
            mask = 0
            for lab in labels:
                if not (1 <= lab <= k):
                    raise ValueError(f"label {lab} outside 1..{k}")
                mask |= 1 << (lab - 1)
            if mask == 0:
                raise ValueError("empty subset key")
            nu[mask] = float(val)
        return cls(k=k, nu=nu)

    def atom_masses(self) -> np.ndarray:
        """Mass of each atom (∩_{i in A} E_i) \\ (∪_{j not in A} E_j), A != 0."""
        vals = self.nu.copy()
        vals[0] = 0.0
        return _superset_moebius(vals, self.k)

    def singleton_sum(self) -> float:
        return float(sum(self.nu[1 << i] for i in range(self.k)))

    def max_pairwise(self) -> float:
        best = 0.0
        for i in range(self.k):
            for j in range(i + 1, self.k):
                best = max(best, float(self.nu[(1 << i) | (1 << j)]))
        return best

    def relabel(self, perm) -> "VacancySpec":
        """Spec with events permuted: new event i is old event perm[i-1]."""
        if sorted(perm) != list(range(1, self.k + 1)):
            raise ValueError("perm must be a permutation of 1..k")
        nu = np.zeros_like(self.nu)
        for m in range(1, 1 << self.k):
            old = 0
            for b in range(self.k):
                if m & (1 << b):
                    old |= 1 << (perm[b] - 1)
            nu[m] = self.nu[old]
        return VacancySpec(k=self.k, nu=nu)


def _phi(spec: VacancySpec) -> np.ndarray:
    """phi[I'] = sum_{I <= I', |I| >= 2} (-1)^{|I|} nu[I]."""
    k = spec.k
    pc = _popcounts(k)
    g = np.where(pc >= 2, np.where(pc % 2 == 0, 1.0, -1.0) * spec.nu, 0.0)
    g[0] = 0.0
    return _subset_zeta(g, k)


def correlation_exact(spec: VacancySpec) -> float:
    """Closed-form centered vacancy correlation (2^k alternating terms)."""
    k = spec.k
    if k > EXACT_K_MAX:
        raise KTooLarge(f"exact evaluation guarded at k <= {EXACT_K_MAX}")
    if k == 1:
        return 0.0
    pc = _popcounts(k)
    phi = _phi(spec)
    signs = np.where((k - pc) % 2 == 0, 1.0, -1.0)
    return float(math.exp(-spec.singleton_sum()) * np.sum(signs * np.exp(phi)))


def correlation_series(spec: VacancySpec, M: int):
    """Order-M cover expansion and its remainder bound.

    Sums over ordered n-tuples (I_1..I_n) of subsets with |I_j| >= 2 whose
    union is {1..k} (n <= M, repeated subsets allowed), with sign
    (-1)^{sum |I_j|} and weight prod nu(∩_{l in I_j} E_l), scaled by
    e^{-sum nu(E_i)}.  The tuple sums are accumulated by dynamic
    programming on the running union mask.  Returns (value, remainder
    bound R with |truncation error| <= e^{-sum nu(E_i)} * R), where
    R = 2^k |x|^{M+1}/(M+1)! e^{|x|} and x = 2^k max_{i<j} nu(E_i ∩ E_j).
    """
    k = spec.k
    if k > SERIES_K_MAX:
        raise KTooLarge(f"series evaluation guarded at k <= {SERIES_K_MAX}")
    if M < 0:
        raise ValueError("M must be >= 0")
    full = (1 << k) - 1
    pc = _popcounts(k)
    w = np.where(pc >= 2, np.where(pc % 2 == 0, 1.0, -1.0) * spec.nu, 0.0)
    w[0] = 0.0
    subsets = [m for m in range(1 << k) if pc[m] >= 2 and w[m] != 0.0]
    total = 0.0
    if k >= 2:
        d = np.zeros(1 << k)
        for m in subsets:
            d[m] += w[m]
        fact = 1.0
        for n in range(1, M + 1):
            fact *= n
            total += d[full] / fact
            if n < M:
                nxt = np.zeros(1 << k)
                for m in range(1 << k):
                    if d[m] != 0.0:
                        dm = d[m]
                        for s in subsets:
                            nxt[m | s] += dm * w[s]
                d = nxt
    x = (1 << k) * spec.max_pairwise()
    bound = (1 << k) * x ** (M + 1) / math.factorial(M + 1) * math.exp(x)
    return float(math.exp(-spec.singleton_sum()) * total), float(bound)


def correlation_montecarlo(
    spec: VacancySpec, replicas: int, seed: int, stream_id: int = 0, chunk: int = 65536
):
    """Monte Carlo estimate of the centered vacancy correlation.

    Realizes the spec on its 2^k - 1 atoms (independent Poisson counts with
    the inclusion-exclusion masses), forms the centered product of vacancy
    indicators, and averages.  Returns (estimate, standard error).
    """
    k = spec.k
    atoms = spec.atom_masses()
    if np.any(atoms[1:] < -ATOL):
        raise UnrealizableSpec("negative atom mass")
    atoms = atoms.copy()
    atoms[0] = 0.0  # the cell outside every event never affects the counts
    masks = np.nonzero(atoms > 0.0)[0]
    masses = atoms[masks]
    member = np.array(
        [[bool(m & (1 << i)) for m in masks] for i in range(k)], dtype=bool
    )  # (k, n_atoms)
    p_vac = np.exp(-np.array([spec.nu[1 << i] for i in range(k)]))
    gen = RngStream(seed, stream_id).generator()
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < replicas:
        b = min(chunk, replicas - done)
        if masses.size:
            counts = gen.poisson(lam=np.broadcast_to(masses, (b, masses.size)))
            occupied = counts > 0
            vac = ~(occupied @ member.T)  # (b, k): no atom containing i is occupied
        else:
            vac = np.ones((b, k), dtype=bool)
        prod = np.prod(vac.astype(float) - p_vac, axis=1)
        total += float(prod.sum())
        total_sq += float((prod**2).sum())
        done += b
    mean = total / replicas
    var = max(total_sq / replicas - mean**2, 0.0)
    return mean, math.sqrt(var / replicas)


def random_realizable_spec(
    k: int, rng, intersection_scale: float = 0.05, singleton_range=(0.4, 1.6),
    n_extra_atoms: int | None = None,
) -> VacancySpec:
    """Random spec built from explicit atom masses (realizable by construction).

    Each event gets a private atom with mass in ``singleton_range``; a few
    random multi-event atoms get masses of order ``intersection_scale``,
    which controls the pairwise intersection intensities.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    atoms = np.zeros(1 << k)
    for i in range(k):
        atoms[1 << i] = gen.uniform(*singleton_range)
    n_multi = n_extra_atoms if n_extra_atoms is not None else max(1, k)
    for _ in range(n_multi):
        m = int(gen.integers(1, 1 << k))
        if bin(m).count("1") >= 2:
            atoms[m] += intersection_scale * gen.uniform(0.2, 1.0)
    nu = _superset_zeta(atoms, k)
    nu[0] = 0.0
    return VacancySpec(k=k, nu=nu)


def parse_spec_file(path) -> VacancySpec:
    """Text format: lines ``I:l1,l2,... = value``, # comments, k inferred."""
    entries = {}
    kmax = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                lhs, rhs = line.split("=")
                head, labels = lhs.split(":")
                if head.strip() != "I":
                    raise ValueError
                labs = tuple(int(x) for x in labels.split(","))
                entries[labs] = float(rhs)
                kmax = max(kmax, max(labs))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'I:l1,l2 = value'") from None
    if not entries:
        raise ValueError(f"{path}: empty spec")
    return VacancySpec.from_dict(kmax, entries)


def format_spec_file(spec: VacancySpec) -> str:
    lines = [f"# k = {spec.k} vacancy spec"]
    for m in range(1, 1 << spec.k):
        if spec.nu[m] != 0.0:
            labs = ",".join(str(i + 1) for i in range(spec.k) if m & (1 << i))
            lines.append(f"I:{labs} = {float(spec.nu[m])!r}")
    return "\n".join(lines) + "\n"
