"""Coupling constructions: two-walk mirror coupling, the upper-bound triple
system, and the lower-bound block scheme on its time grid.

The two-walk coupling runs a pair (X, Y) started at x0 and 0.  For the
simple symmetric walk the pair mirrors (after a one-jump parity wait when
x0 is odd) and coalescence before X's origin visit is forced; for general
symmetric kernels the pair mirrors until the walks meet or exchange order
and then runs independently until they meet or X hits the origin,
whichever happens first.  Asymmetric kernels are rejected.

The upper-bound construction couples the true self-blocking system to a
(+eps)-tuned Poisson system plus extra particles added at vacant-origin
attempt times, so the true system is a pathwise sub-multiset of the union.
The lower-bound scheme attempts one extra particle per grid block and
couples it to the first tuned-system arrival of the block's third
subinterval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .heat import RhoSolution
from .kernels import JumpKernel, RngStream

__all__ = [
    "KernelNotSymmetric",
    "DominationViolated",
    "CouplingOutcome",
    "TimeGrid",
    "TripleSystemState",
    "reflection_couple",
    "coupling_success_prob",
    "build_time_grid",
    "simulate_upper_coupling",
    "simulate_lower_coupling",
]


class KernelNotSymmetric(ValueError):
    pass


class DominationViolated(AssertionError):
    """Pathwise domination bookkeeping broke; indicates an implementation bug."""


@dataclass(frozen=True)
class CouplingOutcome:
    """Result of one two-walk coupling trial.

    ``coupling_time`` is inf when the coupling fails and NaN when the trial
    was decided structurally but the meeting itself fell beyond the event
    budget (``forced`` set; simple-walk mirror phase only).  ``hit_time_origin``
    is NaN when X's origin visit fell beyond the budget.
    """

    success: bool
    coupling_time: float
    hit_time_origin: float
    forced: bool = False
    undecided: bool = False
    paths: object = None


@dataclass(frozen=True)
class TimeGrid:
    """Block schedule t_0 < t_1 < ... < t_{3 n_max}.

    t_{3n} follows eps^2 n^2 / log(n v 3)^2; the two short subintervals
    I_n, I_n' get length eps^2 (n+1)^(1-eps/2) capped at a third of the
    enclosing block so the grid stays strictly increasing (the raw lengths
    exceed whole blocks far beyond any desk scale; see ``repaired``).
    """

    epsilon: float
    n_max: int
    t: np.ndarray
    repaired: np.ndarray

    def block_intervals(self, n: int):
        """(I_n, I_n', I_n'') for 1 <= n <= n_max, as (lo, hi] pairs."""
        if not (1 <= n <= self.n_max):
            raise IndexError(f"block {n} outside 1..{self.n_max}")
        b = 3 * (n - 1)
        return (
            (self.t[b], self.t[b + 1]),
            (self.t[b + 1], self.t[b + 2]),
            (self.t[b + 2], self.t[b + 3]),
        )

    def count_ratio(self, t: float) -> float:
        """#{n >= 1 : t_{3n} <= t} * 2 eps / (sqrt(t) log t)."""
        t3 = self.t[::3]
        count = int(np.sum(t3[1:] <= t))
        return count * 2.0 * self.epsilon / (math.sqrt(t) * math.log(t))


def build_time_grid(epsilon: float, n_max: int) -> TimeGrid:
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must be in (0, 1)")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ns = np.arange(n_max + 1, dtype=float)
    t3 = epsilon**2 * ns**2 / np.log(np.maximum(ns, 3.0)) ** 2
    t = np.empty(3 * n_max + 1)
    repaired = np.zeros(n_max, dtype=bool)
    for n in range(n_max):
        raw = epsilon**2 * (n + 1) ** (1.0 - epsilon / 2.0)
        cap = (t3[n + 1] - t3[n]) / 3.0
        d = min(raw, cap)
        repaired[n] = raw > cap
        t[3 * n] = t3[n]
        t[3 * n + 1] = t3[n] + d
        t[3 * n + 2] = t3[n] + 2.0 * d
    t[3 * n_max] = t3[n_max]
    if not np.all(np.diff(t) > 0.0):
        raise AssertionError("time grid not strictly increasing")
    return TimeGrid(epsilon=epsilon, n_max=n_max, t=t, repaired=repaired)


def _require_symmetric(kernel: JumpKernel):
    if not kernel.symmetric:
        raise KernelNotSymmetric("mirror coupling requires a symmetric kernel")


def reflection_couple(
    x0: int,
    kernel: JumpKernel,
    rng,
    max_events: int = 1_000_000,
    tau_budget: int = 1_000_000,
    post_window: float = 0.0,
    record_paths: bool = False,
) -> CouplingOutcome:
    """One mirror-coupling trial of walks from x0 and 0 (symmetric kernels only)."""
    _require_symmetric(kernel)
    if x0 == 0:
        raise ValueError("x0 must be nonzero")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if record_paths:
        return _reflection_recorded(x0, kernel, gen, max_events)
    offs, cum = kernel.arrays()
    status, forced, t_c, tau0, post = engine.reflection_trials(
        gen, x0, offs, cum, kernel.nearest_neighbour, 1,
        max_events, tau_budget, post_window,
    )
    return CouplingOutcome(
        success=status[0] == engine.STATUS_SUCCESS,
        coupling_time=math.inf if status[0] == engine.STATUS_FAIL else float(t_c[0]),
        hit_time_origin=float(tau0[0]),
        forced=bool(forced[0]),
        undecided=status[0] == engine.STATUS_UNDECIDED,
    )


def _reflection_recorded(x0: int, kernel: JumpKernel, gen, max_events: int) -> CouplingOutcome:
    """Path-recording variant (debugging, structural property tests)."""
    offs, cum = kernel.arrays()
    nn = kernel.nearest_neighbour

    def disp():
        u = gen.random()
        return int(offs[np.searchsorted(cum, u, side="right")])

    X, Y, t = x0, 0, 0.0
    times, xs, ys = [0.0], [X], [Y]
    status = engine.STATUS_UNDECIDED
    t_couple = math.nan
    tau0 = math.nan
    ev = 0

    def push():
        times.append(t)
        xs.append(X)
        ys.append(Y)

    if nn:
        if (X - Y) % 2 != 0:
            t += gen.exponential(0.5)
            ev += 1
            step = -1 if gen.random() < 0.5 else 1
            if gen.random() < 0.5:
                X += step
            else:
                Y += step
            push()
            if X == Y:
                status, t_couple = engine.STATUS_SUCCESS, t
                tau0 = t if X == 0 else math.nan
        while status == engine.STATUS_UNDECIDED and ev < max_events:
            t += gen.exponential(1.0)
            ev += 1
            d = -1 if gen.random() < 0.5 else 1
            X += d
            Y -= d
            push()
            if X == Y:
                status, t_couple = engine.STATUS_SUCCESS, t
                tau0 = t if X == 0 else math.nan
        if status == engine.STATUS_UNDECIDED:
            return CouplingOutcome(True, math.nan, math.nan, forced=True,
                                   paths=(np.array(times), np.array(xs), np.array(ys)))
    else:
        sign0 = 1 if X - Y > 0 else -1
        phase = "mirror"
        while status == engine.STATUS_UNDECIDED and ev < max_events:
            if phase == "mirror":
                t += gen.exponential(1.0)
                ev += 1
                d = disp()
                X += d
                Y -= d
                push()
                if X == Y:
                    status, t_couple = engine.STATUS_SUCCESS, t
                    tau0 = t if X == 0 else math.nan
                elif X == 0:
                    status, tau0 = engine.STATUS_FAIL, t
                elif (1 if X - Y > 0 else -1) != sign0:
                    phase = "indep"
            else:
                t += gen.exponential(0.5)
                ev += 1
                d = disp()
                if gen.random() < 0.5:
                    X += d
                    push()
                    if X == Y:
                        status, t_couple = engine.STATUS_SUCCESS, t
                        tau0 = t if X == 0 else math.nan
                    elif X == 0:
                        status, tau0 = engine.STATUS_FAIL, t
                else:
                    Y += d
                    push()
                    if Y == X:
                        status, t_couple = engine.STATUS_SUCCESS, t
    paths = (np.array(times), np.array(xs), np.array(ys))
    if status == engine.STATUS_FAIL:
        return CouplingOutcome(False, math.inf, tau0, paths=paths)
    if status == engine.STATUS_SUCCESS:
        return CouplingOutcome(True, t_couple, tau0, paths=paths)
    return CouplingOutcome(False, math.nan, math.nan, undecided=True, paths=paths)


def coupling_success_prob(
    x0: int,
    kernel: JumpKernel,
    replicas: int,
    seed: int,
    stream_id: int = 0,
    max_events: int = 1_000_000,
    post_window: float = 0.0,
    tau_budget: int = 1_000_000,
):
    """Monte Carlo P(coupling succeeds) with standard error.

    Returns a dict with success/failure/undecided counts, the estimate over
    decided trials, and (when ``post_window`` > 0) the correlation between
    the success indicator and the post-origin-visit displacement together
    with its standard error (the Lemma property (ii) diagnostic).
    """
    _require_symmetric(kernel)
    gen = RngStream(seed, stream_id).generator()
    offs, cum = kernel.arrays()
    status, forced, t_c, tau0, post = engine.reflection_trials(
        gen, x0, offs, cum, kernel.nearest_neighbour, replicas,
        max_events, tau_budget, post_window,
    )
    n_succ = int(np.sum(status == engine.STATUS_SUCCESS))
    n_fail = int(np.sum(status == engine.STATUS_FAIL))
    n_und = int(np.sum(status == engine.STATUS_UNDECIDED))
    decided = n_succ + n_fail
    est = n_succ / decided if decided else math.nan
    se = math.sqrt(est * (1.0 - est) / decided) if decided else math.nan
    out = {
        "estimate": est,
        "se": se,
        "n_success": n_succ,
        "n_fail": n_fail,
        "n_undecided": n_und,
        "n_forced": int(np.sum(forced == 1)),
        "coupling_times": t_c,
        "hit_times": tau0,
    }
    if post_window > 0.0:
        have = ~np.isnan(post) & (status != engine.STATUS_UNDECIDED)
        if have.sum() >= 10 and 0 < n_fail and 0 < n_succ:
            s = (status[have] == engine.STATUS_SUCCESS).astype(float)
            w = post[have]
            if s.std() > 0 and w.std() > 0:
                r = float(np.corrcoef(s, w)[0, 1])
                out["post_incr_corr"] = r
                out["post_incr_corr_se"] = 1.0 / math.sqrt(have.sum())
            else:
                out["post_incr_corr"] = 0.0
                out["post_incr_corr_se"] = 1.0 / math.sqrt(have.sum())
        else:
            out["post_incr_mean_success"] = float(np.nanmean(post[status == 1])) if n_succ else math.nan
            out["post_incr_se"] = (
                float(np.nanstd(post[status == 1]) / math.sqrt(max(1, n_succ)))
            )
    return out


@dataclass
class TripleSystemState:
    """Occupancy snapshot of the coupled triple (eta, eta-tilde, eta-hat)."""

    t: float
    eta: dict
    tilde: dict
    hat: dict
    eta_total: int
    tilde_total: int
    hat_total: int

    def check_domination(self):
        for x, c in self.eta.items():
            if c > self.tilde.get(x, 0) + self.hat.get(x, 0):
                raise DominationViolated(f"eta_x > tilde_x + hat_x at x={x}, t={self.t}")


def simulate_upper_coupling(
    epsilon: float,
    gamma: float,
    kernel: JumpKernel,
    T: float,
    seed: int,
    rho_solution: RhoSolution,
    snapshot_times=None,
    stream_id: int = 0,
    max_events: int = 2**32,
):
    """Jointly build the (+eps) Poisson system, the vacancy-time extras, and
    the true system as a pathwise sub-multiset of their union.

    At each rate-gamma attempt time an extra particle enters iff the tuned
    system's origin is vacant, and the true system adds a particle iff its
    own origin is vacant, bound to an unpartnered union particle at the
    origin (the oldest).  Returns per-snapshot :class:`TripleSystemState`
    records plus the extras count and the tuned system's origin vacancy.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must be in (0, 1)")
    if rho_solution.t_max < T - 1e-9:
        raise ValueError("rho solution must cover [0, T]")
    gen = RngStream(seed, stream_id).generator()
    offs, cum = kernel.arrays()
    noff = len(offs)
    pref = (1.0 + epsilon) * gamma
    rho_t, rho_v = rho_solution.times, rho_solution.rho0

    def beta(t):
        return pref * math.exp(-float(np.interp(t, rho_t, rho_v)))

    snaps = sorted(set(float(s) for s in (snapshot_times or [])) | {float(T)})
    pos = []
    is_tilde = []
    partnered = []
    n0_tilde = n0_hat = n0_eta = 0
    n_tilde = n_hat = n_eta = 0
    hat_added = 0
    tilde_vac_open = True
    tilde_vac_start = 0.0
    tilde_vac_total = 0.0
    t = 0.0
    env = beta(0.0)
    env_b = 1.0
    out_states = []
    si = 0
    ne = 0

    def occupancy(flagged):
        occ = {}
        for p, f in zip(pos, flagged):
            if f:
                occ[p] = occ.get(p, 0) + 1
        return occ

    def record(ts):
        st = TripleSystemState(
            t=ts,
            eta=occupancy(partnered),
            tilde=occupancy(is_tilde),
            hat=occupancy([not b for b in is_tilde]),
            eta_total=n_eta,
            tilde_total=n_tilde,
            hat_total=n_hat,
        )
        st.check_domination()
        out_states.append(st)

    while si < len(snaps):
        n = len(pos)
        rate = n + gamma + env
        tn = t + gen.exponential(1.0 / rate) if rate > 0.0 else math.inf
        cutoff = min(tn, env_b)
        while si < len(snaps) and snaps[si] < cutoff:
            record(snaps[si])
            si += 1
        if si >= len(snaps):
            break
        if tn >= env_b:
            t = env_b
            env = beta(t)
            env_b *= 2.0
            continue
        t = tn
        ne += 1
        if ne > max_events:
            raise RuntimeError("event cap exceeded in simulate_upper_coupling")
        r = gen.random() * rate
        if r < n:
            i = int(r)
            u = gen.random()
            k = 0
            while cum[k] < u:
                k += 1
            d = int(offs[k])
            if d == 0:
                continue
            old = pos[i]
            new_x = old + d
            pos[i] = new_x
            if is_tilde[i]:
                if old == 0:
                    n0_tilde -= 1
                    if n0_tilde == 0:
                        tilde_vac_open = True
                        tilde_vac_start = t
                elif new_x == 0:
                    if tilde_vac_open:
                        tilde_vac_total += t - tilde_vac_start
                        tilde_vac_open = False
                    n0_tilde += 1
            else:
                if old == 0:
                    n0_hat -= 1
                elif new_x == 0:
                    n0_hat += 1
            if partnered[i]:
                if old == 0:
                    n0_eta -= 1
                elif new_x == 0:
                    n0_eta += 1
            if n0_eta > n0_tilde + n0_hat:
                raise DominationViolated(f"origin counts broke at t={t}")
        elif r < n + gamma:
            # attempt time: extras rule then the true system's rule
            if n0_tilde == 0:
                pos.append(0)
                is_tilde.append(False)
                partnered.append(False)
                n0_hat += 1
                n_hat += 1
                hat_added += 1
            if n0_eta == 0:
                j = -1
                for idx in range(len(pos)):
                    if pos[idx] == 0 and not partnered[idx]:
                        j = idx
                        break
                if j < 0:
                    raise DominationViolated(f"no unpartnered particle at origin, t={t}")
                partnered[j] = True
                n0_eta += 1
                n_eta += 1
            if n0_eta > n0_tilde + n0_hat:
                raise DominationViolated(f"origin counts broke at t={t}")
        else:
            b = beta(t)
            if b > env * (1.0 + 1e-9):
                raise RuntimeError("envelope violated in simulate_upper_coupling")
            if gen.random() * env < b:
                pos.append(0)
                is_tilde.append(True)
                partnered.append(False)
                if tilde_vac_open:
                    tilde_vac_total += t - tilde_vac_start
                    tilde_vac_open = False
                n0_tilde += 1
                n_tilde += 1
    if tilde_vac_open and tilde_vac_start < T:
        tilde_vac_total += T - tilde_vac_start
    return {
        "states": out_states,
        "hat_additions": hat_added,
        "tilde_vacancy": tilde_vac_total,
        "n_events": ne,
    }


class _BlockRecord:
    __slots__ = ("n", "t_hat", "t_tilde", "e", "m_tilde", "eta_total", "cum_e")

    def __init__(self, n):
        self.n = n
        self.t_hat = math.inf
        self.t_tilde = math.inf
        self.e = -1  # -1 undecided, 0 failed, 1 success
        self.m_tilde = 0
        self.eta_total = 0
        self.cum_e = 0


class _Pair:
    __slots__ = ("x", "y", "phase", "sign0", "block")

    def __init__(self, x, y, phase, sign0, block):
        self.x = x
        self.y = y
        self.phase = phase  # "wait" | "mirror" | "indep"
        self.sign0 = sign0
        self.block = block

    @property
    def rate(self):
        return 1.0 if self.phase == "mirror" else 2.0


def simulate_lower_coupling(
    epsilon: float,
    gamma: float,
    kernel: JumpKernel,
    n_max: int,
    seed: int,
    rho_solution: RhoSolution,
    stream_id: int = 0,
    max_events: int = 2**32,
):
    """Block scheme coupling the true system, a (-eps) Poisson system, and
    at most one tracked extra particle per block (symmetric kernels only).

    Per block n: the first attempt time in I_n at which the tuned system's
    origin is vacant starts (or relabels) the tracked walk X_n; the first
    tuned arrival in I_n'' starts Y_n, mirror-coupled to X_n.  A meeting
    merges the particles (success); X_n reaching the origin first drops the
    tracked label.  Blocks whose pair is still unresolved at the end of the
    run count as unsuccessful, which keeps the reported count a lower bound.

    Returns {"blocks": [per-block records], "grid": TimeGrid, ...};
    raises :class:`DominationViolated` if a tracked extra sits at the
    origin at an attempt time when the tuned system's origin is vacant
    (the property the construction must maintain).
    """
    _require_symmetric(kernel)
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must be in (0, 1)")
    grid = build_time_grid(epsilon, n_max)
    T = float(grid.t[-1])
    if rho_solution.t_max < T - 1e-9:
        raise ValueError(f"rho solution must cover [0, {T:.1f}]")
    gen = RngStream(seed, stream_id).generator()
    offs, cum = kernel.arrays()
    nn_mode = kernel.nearest_neighbour
    pref = (1.0 - epsilon) * gamma
    rho_t, rho_v = rho_solution.times, rho_solution.rho0

    def beta(tt):
        return pref * math.exp(-float(np.interp(tt, rho_t, rho_v)))

    # particle store; labels as bit flags
    ETA, HAT, TILDE = 1, 2, 4
    pos = []
    lab = []
    alive = []
    free = []  # indices of alive particles not in an active pair
    free_slot = []  # index into free, or -1
    n0 = {ETA: 0, HAT: 0, TILDE: 0}
    n_eta = 0
    pairs = []
    records = [_BlockRecord(n) for n in range(1, n_max + 1)]
    cum_e = 0

    def add_particle(x, labels):
        pos.append(x)
        lab.append(labels)
        alive.append(True)
        free_slot.append(len(free))
        free.append(len(pos) - 1)
        if x == 0:
            for bit in (ETA, HAT, TILDE):
                if labels & bit:
                    n0[bit] += 1
        return len(pos) - 1

    def remove_from_free(i):
        s = free_slot[i]
        last = free[-1]
        free[s] = last
        free_slot[last] = s
        free.pop()
        free_slot[i] = -1

    def add_to_free(i):
        free_slot[i] = len(free)
        free.append(i)

    def move(i, d):
        old = pos[i]
        new_x = old + d
        pos[i] = new_x
        if old == 0 and new_x != 0:
            for bit in (ETA, HAT, TILDE):
                if lab[i] & bit:
                    n0[bit] -= 1
        elif old != 0 and new_x == 0:
            for bit in (ETA, HAT, TILDE):
                if lab[i] & bit:
                    n0[bit] += 1

    def drop_label(i, bit):
        if lab[i] & bit:
            lab[i] &= ~bit
            if pos[i] == 0:
                n0[bit] -= 1

    def gain_label(i, bit):
        if not (lab[i] & bit):
            lab[i] |= bit
            if pos[i] == 0:
                n0[bit] += 1

    def sample_disp():
        u = gen.random()
        k = 0
        while cum[k] < u:
            k += 1
        return int(offs[k])

    # block window state: I_1 = (t_0, t_1] is live from the start
    X_of_block = {}
    grid_times = grid.t
    gi = 1  # next grid barrier index
    env = beta(0.0)
    env_b = 1.0
    t = 0.0
    ne = 0
    cur = 1
    in_I = True
    in_Ipp = False

    def finalize_block(nb):
        nonlocal cum_e
        rec = records[nb - 1]
        if rec.t_hat < math.inf and rec.t_tilde == math.inf:
            xi = X_of_block.get(nb)
            if xi is not None:
                drop_label(xi, HAT)  # no partner arrived; stop tracking
        rec.eta_total = n_eta
        rec.cum_e = cum_e

    def resolve_pair(p, success):
        nonlocal cum_e
        rec = records[p.block - 1]
        if success:
            rec.e = 1
            cum_e += 1
            # merge: X carries all labels, Y's slot dies
            if pos[p.y] == 0:
                for bit in (ETA, HAT, TILDE):
                    if lab[p.y] & bit:
                        n0[bit] -= 1
            alive[p.y] = False
            gain_label(p.x, TILDE)
            add_to_free(p.x)
        else:
            rec.e = 0
            drop_label(p.x, HAT)
            add_to_free(p.x)
            add_to_free(p.y)
        pairs.remove(p)

    while True:
        n_free = len(free)
        pair_rate = 0.0
        for p in pairs:
            pair_rate += p.rate
        rate = n_free + pair_rate + gamma + env
        tn = t + gen.exponential(1.0 / rate)
        barrier = env_b
        if gi <= 3 * n_max:
            barrier = min(barrier, grid_times[gi])
        if tn >= barrier:
            t = barrier
            if gi <= 3 * n_max and abs(barrier - grid_times[gi]) < 1e-15:
                phase = gi % 3
                if phase == 1:  # end of I_cur
                    in_I = False
                elif phase == 2:  # end of I', start of I''
                    in_Ipp = True
                else:  # end of block cur
                    in_Ipp = False
                    finalize_block(cur)
                    if cur == n_max:
                        break
                    cur += 1
                    in_I = True
                gi += 1
            else:
                env = beta(t)
                env_b *= 2.0
            continue
        t = tn
        ne += 1
        if ne > max_events:
            raise RuntimeError("event cap exceeded in simulate_lower_coupling")
        r = gen.random() * rate
        if r < n_free:
            i = free[int(r)]
            d = sample_disp()
            if d != 0:
                move(i, d)
        elif r < n_free + pair_rate:
            acc = n_free
            chosen = None
            for p in pairs:
                acc += p.rate
                if r < acc:
                    chosen = p
                    break
            p = chosen
            if p.phase == "mirror":
                d = sample_disp()
                if d != 0:
                    move(p.x, d)
                    move(p.y, -d)
                if pos[p.x] == pos[p.y]:
                    resolve_pair(p, True)
                elif pos[p.x] == 0:
                    resolve_pair(p, False)
                elif not nn_mode:
                    s = 1 if pos[p.x] - pos[p.y] > 0 else -1
                    if s != p.sign0:
                        p.phase = "indep"
            elif p.phase == "wait":
                d = -1 if gen.random() < 0.5 else 1
                if gen.random() < 0.5:
                    move(p.x, d)
                else:
                    move(p.y, d)
                if pos[p.x] == pos[p.y]:
                    resolve_pair(p, True)
                else:
                    p.phase = "mirror"
            else:  # indep
                d = sample_disp()
                if gen.random() < 0.5:
                    if d != 0:
                        move(p.x, d)
                    if pos[p.x] == pos[p.y]:
                        resolve_pair(p, True)
                    elif pos[p.x] == 0:
                        resolve_pair(p, False)
                else:
                    if d != 0:
                        move(p.y, d)
                    if pos[p.y] == pos[p.x]:
                        resolve_pair(p, True)
        elif r < n_free + pair_rate + gamma:
            # attempt time (the true system's immigration clock)
            rec = records[cur - 1]
            if in_I and rec.t_hat == math.inf and n0[TILDE] == 0:
                if n0[HAT] != 0:
                    raise DominationViolated(
                        f"tracked extra at origin while tuned origin vacant, t={t}"
                    )
                rec.t_hat = t
                if n0[ETA] == 0:
                    xi = add_particle(0, ETA | HAT)
                    n_eta += 1
                else:
                    xi = -1
                    for idx in range(len(pos)):
                        if alive[idx] and pos[idx] == 0 and (lab[idx] & ETA) and not (lab[idx] & HAT):
                            xi = idx
                            break
                    if xi < 0:
                        raise DominationViolated(f"no relabel target at origin, t={t}")
                    gain_label(xi, HAT)
                X_of_block[cur] = xi
            else:
                if n0[ETA] == 0:
                    add_particle(0, ETA)
                    n_eta += 1
        else:
            b = beta(t)
            if b > env * (1.0 + 1e-9):
                raise RuntimeError("envelope violated in simulate_lower_coupling")
            if gen.random() * env < b:
                rec = records[cur - 1]
                first_arrival = False
                if in_Ipp:
                    rec.m_tilde += 1
                    if rec.t_tilde == math.inf:
                        rec.t_tilde = t
                        first_arrival = True
                if first_arrival and rec.t_hat < math.inf:
                    xi = X_of_block[cur]
                    if not alive[xi] or not (lab[xi] & HAT):
                        # tracked walk already lost (merged or relabeled); plain arrival
                        add_particle(0, TILDE)
                    elif pos[xi] == 0:
                        gain_label(xi, TILDE)  # walks born together: immediate merge
                        rec.e = 1
                        cum_e += 1
                    else:
                        yi = add_particle(0, TILDE)
                        remove_from_free(xi)
                        remove_from_free(yi)
                        if nn_mode:
                            phase = "mirror" if (pos[xi] - pos[yi]) % 2 == 0 else "wait"
                        else:
                            phase = "mirror"
                        pairs.append(
                            _Pair(xi, yi, phase, 1 if pos[xi] - pos[yi] > 0 else -1, cur)
                        )
                else:
                    add_particle(0, TILDE)
    # unresolved pairs at the end of the run stay e = -1 (counted as failures
    # in cum_e, keeping the lower bound valid)
    return {
        "blocks": records,
        "grid": grid,
        "n_events": ne,
        "final_eta_total": n_eta,
        "unresolved_pairs": len(pairs),
    }
