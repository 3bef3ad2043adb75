"""Semilinear lattice heat equation: solver, asymptotics, and consistency checks.

The density rho_x(t) solves

    d/dt rho_x = (L rho)_x + gamma * delta_0(x) * exp(-alpha * rho_0(t)),
    rho_x(0) = 0,

with L the jump generator of the rate-1 walk.  The primary stepper is an
explicit RK4 with step-doubling (Richardson) error control, the step capped
at half the jump rate; an independent second route solves the equivalent
Volterra integral equation

    rho_0(t) = gamma * int_0^t p_0(t-s) exp(-alpha rho_0(s)) ds

by divide-and-conquer product quadrature.  Closed-form large-t asymptotics
and the sub/supersolution inequalities are evaluated against quadrature of
the same integral form.

The closed-form asymptotics assume the kernel support generates all of Z
(gcd 1); transition probabilities themselves are exact for any kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, signal, special

from .kernels import JumpKernel, P0Evaluator

__all__ = [
    "HeatParams",
    "RhoSolution",
    "ProfileSample",
    "RadiusTooSmall",
    "StepFailure",
    "DomainError",
    "ParameterOrderViolated",
    "solve_rho",
    "solve_rho0_volterra",
    "duhamel_residual",
    "total_mass",
    "asymptotic_rho0",
    "asymptotic_R",
    "tilde_rho",
    "tilde_rho_integral",
    "rescaled_profile",
    "check_sub_supersolution",
    "scan_subsolution_K",
    "scan_supersolution_constants",
    "default_radius",
]


class RadiusTooSmall(ValueError):
    """Lattice truncation too tight: boundary leak above tolerance."""


class StepFailure(RuntimeError):
    """Adaptive stepping could not satisfy the local error target."""


class DomainError(ValueError):
    """Argument outside the domain of a closed-form expression."""


class ParameterOrderViolated(ValueError):
    """Sub/supersolution constant on the wrong side of log(sqrt(2 pi) gamma / sigma)."""


@dataclass(frozen=True)
class HeatParams:
    gamma: float
    alpha: float
    kernel: JumpKernel

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ValueError("gamma must be > 0")
        if not (self.alpha > 0):
            raise ValueError("alpha must be > 0")

    @property
    def sigma(self) -> float:
        return self.kernel.sigma


@dataclass
class RhoSolution:
    """Solution record: dense scalars on the accepted-step grid, profiles at snapshots.

    ``times`` is the accepted-step grid; ``rho0``, ``mass_sum`` (= sum_x rho_x)
    and ``mass_integral`` (= gamma int_0^t exp(-alpha rho0)) are tracked at
    every step.  Full lattice rows are stored only at ``snapshot_times``
    (index ``radius`` is the origin).
    """

    params: HeatParams
    radius: int
    tol: float
    times: np.ndarray
    rho0: np.ndarray
    mass_sum: np.ndarray
    mass_integral: np.ndarray
    snapshot_times: np.ndarray
    profiles: dict
    dt_policy: str
    boundary_leak: float

    def rho0_at(self, t):
        return np.interp(t, self.times, self.rho0)

    def rho0_spline(self):
        return interpolate.CubicSpline(self.times, self.rho0)

    def profile(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self.profiles:
            raise KeyError(f"no stored profile at t={t}; snapshots: {sorted(self.profiles)}")
        return self.profiles[key]

    @property
    def t_max(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True)
class ProfileSample:
    """Rescaled profile rho_{[sigma sqrt(t) y]}(t) / log t against the limit shape."""

    t: float
    points: list  # (y, scaled_value)
    sup_distance: float


def default_radius(sigma: float, t_max: float, factor: float = 8.0) -> int:
    return max(16, int(math.ceil(factor * sigma * math.sqrt(max(t_max, 1.0)))))


def _generator_apply(y: np.ndarray, offsets, probs) -> np.ndarray:
    """(L y)_x = sum_z a_z y_{x-z} - y_x with zero (absorbing) truncation."""
    out = -y.copy()
    for z, p in zip(offsets, probs):
        if z > 0:
            out[z:] += p * y[:-z]
        elif z < 0:
            out[:z] += p * y[-z:]
        else:
            out += p * y
    return out


def solve_rho(
    params: HeatParams,
    t_max: float,
    radius: int | None = None,
    tol: float = 1e-10,
    snapshot_times=None,
    leak_tol: float = 1e-6,
    dt_cap: float = 0.5,
) -> RhoSolution:
    """Integrate the lattice equation to ``t_max`` on the truncated lattice |x| <= radius.

    Explicit RK4 macro-steps are accepted when the step-doubling error
    estimate is below ``tol`` per unit time; the step never exceeds
    ``dt_cap`` (stability of the unit-rate jump generator).  Raises
    :class:`RadiusTooSmall` if the boundary-leak estimate exceeds
    ``leak_tol`` and :class:`StepFailure` if the controller stalls.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if radius is None:
        radius = default_radius(params.sigma, t_max)
    offsets = np.asarray(params.kernel.offsets, dtype=np.int64)
    probs = np.asarray(params.kernel.probabilities, dtype=np.float64)
    gamma, alpha = params.gamma, params.alpha
    c = radius
    n = 2 * radius + 1

    snaps = np.array(sorted(float(s) for s in (snapshot_times or [])))
    if snaps.size and snaps[-1] > t_max + 1e-12:
        raise ValueError("snapshot beyond t_max")

    def rhs(y):
        out = _generator_apply(y, offsets, probs)
        out[c] += gamma * math.exp(-alpha * y[c])
        return out

    def rk4(y, rint, t, h):
        k1 = rhs(y)
        q1 = gamma * math.exp(-alpha * y[c])
        y2 = y + 0.5 * h * k1
        k2 = rhs(y2)
        q2 = gamma * math.exp(-alpha * y2[c])
        y3 = y + 0.5 * h * k2
        k3 = rhs(y3)
        q3 = gamma * math.exp(-alpha * y3[c])
        y4 = y + h * k3
        k4 = rhs(y4)
        q4 = gamma * math.exp(-alpha * y4[c])
        ynew = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rnew = rint + (h / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4)
        return ynew, rnew

    y = np.zeros(n)
    rint = 0.0
    t = 0.0
    times = [0.0]
    rho0 = [0.0]
    mass_sum = [0.0]
    mass_integral = [0.0]
    profiles = {}
    si = 0
    if snaps.size and snaps[0] == 0.0:
        profiles[0.0] = y.copy()
        si = 1

    dt = min(dt_cap, 1e-3 if t_max > 0 else dt_cap)
    while t < t_max - 1e-12 * max(1.0, t_max):
        h = min(dt, dt_cap, t_max - t)
        if si < snaps.size and t + h > snaps[si] - 1e-12:
            h = snaps[si] - t
        if h < 1e-13 * max(1.0, t):
            raise StepFailure(f"step underflow at t={t}")
        y_full, _ = rk4(y, rint, t, h)
        y_half, r_half = rk4(y, rint, t, 0.5 * h)
        y_two, r_two = rk4(y_half, r_half, t + 0.5 * h, 0.5 * h)
        err = float(np.max(np.abs(y_two - y_full))) / 15.0
        target = tol * h
        if err <= target or h <= 1e-12 * max(1.0, t):
            t += h
            y, rint = y_two, r_two
            times.append(t)
            rho0.append(float(y[c]))
            mass_sum.append(float(y.sum()))
            mass_integral.append(rint)
            if si < snaps.size and abs(t - snaps[si]) <= 1e-9 * max(1.0, t):
                profiles[float(snaps[si])] = y.copy()
                si += 1
            if err > 0:
                dt = h * min(2.0, max(0.3, 0.9 * (target / err) ** 0.2))
            else:
                dt = h * 2.0
        else:
            dt = h * max(0.3, 0.9 * (target / err) ** 0.2)

    times = np.array(times)
    rho0 = np.array(rho0)
    mass_sum = np.array(mass_sum)
    mass_integral = np.array(mass_integral)
    # leak = quadrature/truncation discrepancy plus Gaussian mass beyond the box
    discrepancy = float(np.max(np.abs(mass_sum - mass_integral))) if len(times) else 0.0
    tail = 0.0
    if t_max > 0:
        z = radius / (params.sigma * math.sqrt(t_max))
        tail = float(mass_integral[-1]) * math.erfc(z / math.sqrt(2.0))
    leak = discrepancy + tail
    if leak > leak_tol:
        raise RadiusTooSmall(
            f"boundary-leak estimate {leak:.3e} exceeds {leak_tol:.3e}; increase radius"
        )
    return RhoSolution(
        params=params,
        radius=radius,
        tol=tol,
        times=times,
        rho0=rho0,
        mass_sum=mass_sum,
        mass_integral=mass_integral,
        snapshot_times=snaps,
        profiles=profiles,
        dt_policy=(
            f"explicit RK4, step-doubling local error < {tol:g}/unit time, "
            f"dt <= {dt_cap} (generator stability)"
        ),
        boundary_leak=leak,
    )


def solve_rho0_volterra(
    params: HeatParams,
    t_max: float,
    h: float = 0.02,
    p0ev: P0Evaluator | None = None,
    leaf: int = 64,
    fp_tol: float = 1e-13,
):
    """Second, independent route to rho_0: the Volterra equation on a uniform grid.

    Product-trapezoidal discretization solved by divide and conquer: the
    left half is solved, its contribution to the right half is one FFT
    convolution, and leaves are fixed-point iterations.  Returns
    (times, rho0).  Error is O(h^2).
    """
    if p0ev is None:
        p0ev = P0Evaluator(params.kernel)
    nsteps = int(round(t_max / h))
    grid = np.arange(nsteps + 1) * h
    p0g = np.asarray(p0ev(grid))
    gamma, alpha = params.gamma, params.alpha
    f = np.zeros(nsteps + 1)
    g = np.ones(nsteps + 1)  # exp(-alpha f)
    contrib = np.zeros(nsteps + 1)  # full-weight convolution contribution from solved prefix

    def solve_block(lo, hi):
        if hi - lo + 1 <= leaf:
            for _ in range(200):
                delta = 0.0
                for i in range(max(lo, 1), hi + 1):
                    s = contrib[i] + float(p0g[: i - lo + 1][::-1] @ g[lo : i + 1]) * h
                    s -= 0.5 * h * (p0g[i] * g[0] + p0g[0] * g[i])
                    fi = gamma * s
                    delta = max(delta, abs(fi - f[i]))
                    f[i] = fi
                    g[i] = math.exp(-alpha * fi)
                if delta < fp_tol:
                    return
            raise StepFailure("Volterra leaf iteration did not converge")
        mid = (lo + hi) // 2
        solve_block(lo, mid)
        block = g[lo : mid + 1]
        lags = signal.fftconvolve(block, p0g[1 : hi - lo + 1])
        # lags[m] = sum_j g[lo+j] p0[m+1-j]; node i gets lag index i-lo-1
        contrib[mid + 1 : hi + 1] += h * lags[mid - lo : hi - lo]
        solve_block(mid + 1, hi)

    if nsteps >= 1:
        solve_block(0, nsteps)
    return grid, f


def duhamel_residual(
    solution: RhoSolution,
    sample_times,
    p0ev: P0Evaluator | None = None,
    quad_tol: float = 1e-10,
) -> float:
    """Max |rho_0(t) - gamma int_0^t p_0(t-s) e^{-alpha rho_0(s)} ds| over sample_times.

    The integral is evaluated by adaptive quadrature against the stored
    rho_0 (cubic interpolant) and the kernel's p_0 evaluator, with an
    interior breakpoint near s = t where p_0(t-s) varies fastest.
    """
    if p0ev is None:
        p0ev = P0Evaluator(solution.params.kernel)
    gamma, alpha = solution.params.gamma, solution.params.alpha
    spline = solution.rho0_spline()
    worst = 0.0
    for t in sample_times:
        t = float(t)
        if t < 0 or t > solution.t_max + 1e-9:
            raise ValueError(f"sample time {t} outside solve range")
        if t == 0.0:
            integral = 0.0
        else:
            def integrand(s):
                return p0ev(t - s) * np.exp(-alpha * spline(s))

            pts = [t - 30.0] if t > 30.0 else None
            val, _ = integrate.quad(
                integrand, 0.0, t, points=pts, limit=400, epsabs=quad_tol, epsrel=quad_tol
            )
            integral = gamma * val
        worst = max(worst, abs(float(solution.rho0_at(t)) - integral))
    return worst


def total_mass(solution: RhoSolution, t: float):
    """(sum-form R(t), integral-form gamma int_0^t e^{-alpha rho_0}, discrepancy)."""
    if t < 0 or t > solution.t_max + 1e-9:
        raise ValueError(f"t={t} outside solve range")
    s = float(np.interp(t, solution.times, solution.mass_sum))
    i = float(np.interp(t, solution.times, solution.mass_integral))
    return s, i, abs(s - i)


def asymptotic_rho0(t: float, params: HeatParams) -> float:
    """(1/alpha)[log(t)/2 - log log t + log(sqrt(2 pi) gamma alpha / sigma)]."""
    if t <= math.e:
        raise DomainError("asymptotic_rho0 requires t > e")
    return (
        0.5 * math.log(t)
        - math.log(math.log(t))
        + math.log(math.sqrt(2.0 * math.pi) * params.gamma * params.alpha / params.sigma)
    ) / params.alpha


def asymptotic_R(t: float, params: HeatParams) -> float:
    """(sigma/alpha) sqrt(2/pi) sqrt(t) log t; independent of gamma."""
    if t <= 1.0:
        raise DomainError("asymptotic_R requires t > 1")
    return (params.sigma / params.alpha) * math.sqrt(2.0 / math.pi) * math.sqrt(t) * math.log(t)


def tilde_rho(y: float) -> float:
    """Limit shape: the standard normal tail 1 - Phi(|y|)."""
    return 0.5 * math.erfc(abs(y) / math.sqrt(2.0))


def tilde_rho_integral(y: float, quad_tol: float = 1e-12) -> float:
    """Integral form (1/2pi) int_0^1 s^{-1/2}(1-s)^{-1/2} e^{-y^2/(2s)} ds.

    Evaluated after the substitution s = sin^2(theta), which removes both
    endpoint singularities.
    """
    y2 = y * y

    def integrand(theta):
        s = math.sin(theta) ** 2
        if s == 0.0:
            return 0.0 if y2 > 0 else 1.0
        return math.exp(-y2 / (2.0 * s))

    val, _ = integrate.quad(integrand, 0.0, 0.5 * math.pi, epsabs=quad_tol, epsrel=quad_tol)
    return val / math.pi


def rescaled_profile(solution: RhoSolution, t: float, y_grid) -> ProfileSample:
    """Sample rho_{[sigma sqrt(t) y]}(t) / log t on y_grid; t must be a snapshot."""
    if t <= math.e:
        raise DomainError("rescaled profile requires t > e")
    prof = solution.profile(t)
    sigma = solution.params.sigma
    radius = solution.radius
    logt = math.log(t)
    points = []
    sup = 0.0
    for y in y_grid:
        x = int(np.rint(sigma * math.sqrt(t) * y))
        if abs(x) > radius:
            raise RadiusTooSmall(f"sigma sqrt(t) |y| = {abs(x)} exceeds radius {radius}")
        v = float(prof[radius + x]) / logt
        points.append((float(y), v))
        sup = max(sup, abs(v - tilde_rho(y)))
    return ProfileSample(t=float(t), points=points, sup_distance=sup)


def _critical_constant(params: HeatParams) -> float:
    return math.log(math.sqrt(2.0 * math.pi) * params.gamma / params.sigma)


def _candidate(t, K, C, low_value):
    if t >= K:
        return 0.5 * math.log(t) - math.log(math.log(t)) + C
    return low_value


def _integral_side(t, K, C, low_value, params, p0ev, quad_tol=1e-9):
    """gamma int_0^t p_0(t-s) exp(-f(s)) ds for the piecewise candidate f."""
    gamma = params.gamma

    def integrand(s):
        return p0ev(t - s) * math.exp(-_candidate(s, K, C, low_value))

    pts = []
    if K < t:
        pts.append(K)
    if t > 30.0:
        pts.append(t - 30.0)
    val, _ = integrate.quad(
        integrand, 0.0, t, points=sorted(set(pts)) or None, limit=400,
        epsabs=quad_tol, epsrel=quad_tol,
    )
    return gamma * val


def check_sub_supersolution(
    params: HeatParams,
    C: float,
    K: float,
    which: str,
    t_grid,
    K_prime: float | None = None,
    p0ev: P0Evaluator | None = None,
):
    """Evaluate the strict integral inequality for a sub- or supersolution candidate.

    For ``which='sub'`` the candidate (value -1 below K) must satisfy
    f(t) < gamma int p_0(t-s) e^{-f(s)} ds at each grid t; for ``'super'``
    (value K' below K) the inequality is reversed.  Requires alpha = 1.
    Returns a list of (t, lhs, rhs, holds).
    """
    if abs(params.alpha - 1.0) > 1e-12:
        raise ValueError("sub/supersolution check is formulated for alpha = 1")
    crit = _critical_constant(params)
    if which == "sub":
        if not (C < crit):
            raise ParameterOrderViolated(f"subsolution needs C < {crit:.6f}, got {C}")
        low = -1.0
    elif which == "super":
        if not (C > crit):
            raise ParameterOrderViolated(f"supersolution needs C > {crit:.6f}, got {C}")
        if K_prime is None:
            raise ValueError("supersolution check requires K_prime")
        low = float(K_prime)
    else:
        raise ValueError("which must be 'sub' or 'super'")
    if p0ev is None:
        p0ev = P0Evaluator(params.kernel)
    out = []
    for t in t_grid:
        t = float(t)
        lhs = _candidate(t, K, C, low)
        rhs = _integral_side(t, K, C, low, params, p0ev)
        holds = lhs < rhs if which == "sub" else lhs > rhs
        out.append((t, lhs, rhs, bool(holds)))
    return out


def _log_grid(lo, hi, n):
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))


def scan_subsolution_K(
    params: HeatParams, C: float, t_hi: float = 1e5, n_grid: int = 40,
    candidates=(2, 4, 8, 16, 32, 64, 128, 256, 512),
    p0ev: P0Evaluator | None = None,
):
    """Smallest K from the candidate ladder making the subsolution inequality hold."""
    if p0ev is None:
        p0ev = P0Evaluator(params.kernel)
    for K in candidates:
        grid = _log_grid(K, t_hi, n_grid)
        res = check_sub_supersolution(params, C, K, "sub", grid, p0ev=p0ev)
        if all(r[3] for r in res):
            return float(K)
    raise StepFailure(f"no subsolution K found up to {candidates[-1]}")


def scan_supersolution_constants(
    params: HeatParams, C: float, t_hi: float = 1e5, n_grid: int = 40,
    K_candidates=(2, 4, 8, 16, 32, 64, 128, 256, 512),
    Kp_candidates=(0.5, 1.0, 2.0, 3.0, 5.0, 8.0),
    p0ev: P0Evaluator | None = None,
):
    """(K, K') from candidate ladders making the supersolution inequality hold.

    The below-K region is checked too: K' must dominate the integral side
    on a grid of t < K.
    """
    if p0ev is None:
        p0ev = P0Evaluator(params.kernel)
    for K in K_candidates:
        for Kp in Kp_candidates:
            below = np.linspace(K / 8.0, K * 0.999, 8)
            ok_below = all(
                Kp > _integral_side(t, K, C, Kp, params, p0ev) for t in below
            )
            if not ok_below:
                continue
            grid = _log_grid(K, t_hi, n_grid)
            res = check_sub_supersolution(params, C, K, "super", grid, K_prime=Kp, p0ev=p0ev)
            if all(r[3] for r in res):
                return float(K), float(Kp)
    raise StepFailure("no supersolution (K, K') found on the candidate ladders")
