"""Event-driven simulation cores (numba).

One aggregated exponential race drives each system: the total rate is the
live particle count (unit jump rate each) plus the immigration attempt
rate, the next event time is exponential in that total, and the event type
is a discrete choice.  State updates are O(1) per event.  Inhomogeneous
immigration is realized by thinning against a piecewise-constant dyadic
envelope, with the clock resampled at envelope boundaries (memorylessness
keeps this exact).

All loops draw from a numpy Generator (Philox stream) passed in by the
caller, so runs are pure functions of (arguments, seed, stream_id).
"""

import numpy as np
from numba import njit

EV_SUCCESS = 0
EV_BLOCKED = 1
EV_JUMP = 2

STATUS_FAIL = 0
STATUS_SUCCESS = 1
STATUS_UNDECIDED = 2


@njit(cache=True, inline="always")
def _disp(gen, offs, cum):
    u = gen.random()
    k = 0
    while cum[k] < u:
        k += 1
    return offs[k]


@njit(cache=True)
def _interp_left(x, xs, ys):
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    lo = np.searchsorted(xs, x) - 1
    if lo < 0:
        lo = 0
    w = (x - xs[lo]) / (xs[lo + 1] - xs[lo])
    return ys[lo] * (1.0 - w) + ys[lo + 1] * w


@njit(cache=True)
def rwsbi_run(gen, gamma, offs, cum, snap_times, max_events, with_log, log_cap):
    """Exact RWSBI run to the last snapshot time.

    Returns (snap_total, snap_origin, snap_vac, snap_pos, snap_pos_off,
    vac_starts, vac_ends, vac_open, vac_start, ev_t, ev_kind, ev_part,
    ev_from, ev_to, n_events, n_attempts).
    """
    n_att = 0
    nsnap = snap_times.shape[0]
    pos = np.empty(1024, np.int64)
    n = 0
    n0 = 0
    t = 0.0
    vac_open = True
    vac_start = 0.0
    vac_total = 0.0
    vs = np.empty(1024, np.float64)
    ve = np.empty(1024, np.float64)
    nv = 0
    snap_total = np.zeros(nsnap, np.int64)
    snap_origin = np.zeros(nsnap, np.int64)
    snap_vac = np.zeros(nsnap, np.float64)
    snap_pos = np.empty(1024, np.int64)
    snap_off = np.zeros(nsnap + 1, np.int64)
    sp = 0
    cap = log_cap if with_log else 1
    ev_t = np.empty(cap, np.float64)
    ev_kind = np.empty(cap, np.int8)
    ev_part = np.empty(cap, np.int64)
    ev_from = np.empty(cap, np.int64)
    ev_to = np.empty(cap, np.int64)
    ne = 0
    si = 0
    while si < nsnap:
        rate = n + gamma
        tn = t + gen.exponential(1.0 / rate)
        while si < nsnap and snap_times[si] < tn:
            ts = snap_times[si]
            snap_total[si] = n
            snap_origin[si] = n0
            snap_vac[si] = vac_total + (ts - vac_start if vac_open else 0.0)
            while sp + n > snap_pos.shape[0]:
                new = np.empty(2 * snap_pos.shape[0], np.int64)
                new[:sp] = snap_pos[:sp]
                snap_pos = new
            for i in range(n):
                snap_pos[sp + i] = pos[i]
            sp += n
            snap_off[si + 1] = sp
            si += 1
        if si >= nsnap:
            break
        t = tn
        ne += 1
        if ne > max_events:
            raise RuntimeError("event cap exceeded in rwsbi_run")
        r = gen.random() * rate
        if r < n:
            i = int(r)
            d = _disp(gen, offs, cum)
            old = pos[i]
            new_x = old + d
            pos[i] = new_x
            if d != 0:
                if old == 0:
                    n0 -= 1
                    if n0 == 0:
                        vac_open = True
                        vac_start = t
                elif new_x == 0:
                    if vac_open:
                        if nv >= vs.shape[0]:
                            vs2 = np.empty(2 * vs.shape[0], np.float64)
                            ve2 = np.empty(2 * ve.shape[0], np.float64)
                            vs2[:nv] = vs[:nv]
                            ve2[:nv] = ve[:nv]
                            vs, ve = vs2, ve2
                        vs[nv] = vac_start
                        ve[nv] = t
                        nv += 1
                        vac_total += t - vac_start
                        vac_open = False
                    n0 += 1
            if with_log:
                if ne > log_cap:
                    raise RuntimeError("event log capacity exceeded")
                ev_t[ne - 1] = t
                ev_kind[ne - 1] = EV_JUMP
                ev_part[ne - 1] = i
                ev_from[ne - 1] = old
                ev_to[ne - 1] = new_x
        else:
            n_att += 1
            if n0 == 0:
                if n >= pos.shape[0]:
                    new = np.empty(2 * pos.shape[0], np.int64)
                    new[:n] = pos[:n]
                    pos = new
                pos[n] = 0
                n += 1
                if vac_open:
                    if nv >= vs.shape[0]:
                        vs2 = np.empty(2 * vs.shape[0], np.float64)
                        ve2 = np.empty(2 * ve.shape[0], np.float64)
                        vs2[:nv] = vs[:nv]
                        ve2[:nv] = ve[:nv]
                        vs, ve = vs2, ve2
                    vs[nv] = vac_start
                    ve[nv] = t
                    nv += 1
                    vac_total += t - vac_start
                    vac_open = False
                n0 = 1
                if with_log:
                    if ne > log_cap:
                        raise RuntimeError("event log capacity exceeded")
                    ev_t[ne - 1] = t
                    ev_kind[ne - 1] = EV_SUCCESS
                    ev_part[ne - 1] = n - 1
                    ev_from[ne - 1] = 0
                    ev_to[ne - 1] = 0
            else:
                if with_log:
                    if ne > log_cap:
                        raise RuntimeError("event log capacity exceeded")
                    ev_t[ne - 1] = t
                    ev_kind[ne - 1] = EV_BLOCKED
                    ev_part[ne - 1] = -1
                    ev_from[ne - 1] = 0
                    ev_to[ne - 1] = 0
    return (
        snap_total, snap_origin, snap_vac, snap_pos[:sp], snap_off,
        vs[:nv], ve[:nv], vac_open, vac_start,
        ev_t[:ne], ev_kind[:ne], ev_part[:ne], ev_from[:ne], ev_to[:ne], ne, n_att,
    )


@njit(cache=True)
def poisson_run(gen, pref, gamma_env_guard, rho_t, rho_v, offs, cum, snap_times, max_events):
    """Tuned Poisson system: immigration at rate pref * exp(-rho0(t)), no blocking.

    ``pref`` is (1 +/- eps) * gamma.  The envelope is piecewise constant on
    dyadic blocks [0,1), [1,2), [2,4), ... set to the rate at each block's
    left endpoint (the tuned rate is nonincreasing).  Returns snapshots as
    in rwsbi_run plus (n_immigrations, beta_monotone_ok, n_events).
    """
    nsnap = snap_times.shape[0]
    pos = np.empty(1024, np.int64)
    n = 0
    n0 = 0
    t = 0.0
    vac_open = True
    vac_start = 0.0
    vac_total = 0.0
    vs = np.empty(1024, np.float64)
    ve = np.empty(1024, np.float64)
    nv = 0
    snap_total = np.zeros(nsnap, np.int64)
    snap_origin = np.zeros(nsnap, np.int64)
    snap_vac = np.zeros(nsnap, np.float64)
    snap_pos = np.empty(1024, np.int64)
    snap_off = np.zeros(nsnap + 1, np.int64)
    sp = 0
    ne = 0
    si = 0
    n_imm = 0
    env = pref * np.exp(-_interp_left(0.0, rho_t, rho_v))
    next_b = 1.0
    last_beta = env
    beta_monotone_ok = True
    while si < nsnap:
        rate = n + env
        tn = t + gen.exponential(1.0 / rate)
        if tn >= next_b:
            while si < nsnap and snap_times[si] < next_b:
                ts = snap_times[si]
                snap_total[si] = n
                snap_origin[si] = n0
                snap_vac[si] = vac_total + (ts - vac_start if vac_open else 0.0)
                while sp + n > snap_pos.shape[0]:
                    new = np.empty(2 * snap_pos.shape[0], np.int64)
                    new[:sp] = snap_pos[:sp]
                    snap_pos = new
                for i in range(n):
                    snap_pos[sp + i] = pos[i]
                sp += n
                snap_off[si + 1] = sp
                si += 1
            if si >= nsnap:
                break
            t = next_b
            env = pref * np.exp(-_interp_left(t, rho_t, rho_v))
            next_b *= 2.0
            continue
        while si < nsnap and snap_times[si] < tn:
            ts = snap_times[si]
            snap_total[si] = n
            snap_origin[si] = n0
            snap_vac[si] = vac_total + (ts - vac_start if vac_open else 0.0)
            while sp + n > snap_pos.shape[0]:
                new = np.empty(2 * snap_pos.shape[0], np.int64)
                new[:sp] = snap_pos[:sp]
                snap_pos = new
            for i in range(n):
                snap_pos[sp + i] = pos[i]
            sp += n
            snap_off[si + 1] = sp
            si += 1
        if si >= nsnap:
            break
        t = tn
        ne += 1
        if ne > max_events:
            raise RuntimeError("event cap exceeded in poisson_run")
        r = gen.random() * rate
        if r < n:
            i = int(r)
            d = _disp(gen, offs, cum)
            old = pos[i]
            new_x = old + d
            pos[i] = new_x
            if d != 0:
                if old == 0:
                    n0 -= 1
                    if n0 == 0:
                        vac_open = True
                        vac_start = t
                elif new_x == 0:
                    if vac_open:
                        if nv >= vs.shape[0]:
                            vs2 = np.empty(2 * vs.shape[0], np.float64)
                            ve2 = np.empty(2 * ve.shape[0], np.float64)
                            vs2[:nv] = vs[:nv]
                            ve2[:nv] = ve[:nv]
                            vs, ve = vs2, ve2
                        vs[nv] = vac_start
                        ve[nv] = t
                        nv += 1
                        vac_total += t - vac_start
                        vac_open = False
                    n0 += 1
        else:
            beta = pref * np.exp(-_interp_left(t, rho_t, rho_v))
            if beta > env * (1.0 + 1e-9):
                raise RuntimeError("envelope violated in poisson_run")
            if beta > last_beta + 1e-12:
                beta_monotone_ok = False
            last_beta = beta
            if gen.random() * env < beta:
                if n >= pos.shape[0]:
                    new = np.empty(2 * pos.shape[0], np.int64)
                    new[:n] = pos[:n]
                    pos = new
                pos[n] = 0
                n += 1
                n_imm += 1
                if vac_open:
                    if nv >= vs.shape[0]:
                        vs2 = np.empty(2 * vs.shape[0], np.float64)
                        ve2 = np.empty(2 * ve.shape[0], np.float64)
                        vs2[:nv] = vs[:nv]
                        ve2[:nv] = ve[:nv]
                        vs, ve = vs2, ve2
                    vs[nv] = vac_start
                    ve[nv] = t
                    nv += 1
                    vac_total += t - vac_start
                    vac_open = False
                n0 += 1
    return (
        snap_total, snap_origin, snap_vac, snap_pos[:sp], snap_off,
        vs[:nv], ve[:nv], vac_open, vac_start,
        n_imm, beta_monotone_ok, ne,
    )


@njit(cache=True)
def reflection_trials(
    gen, x0, offs, cum, nn_mode, n_trials, max_events, tau_budget, post_window
):
    """Mirror-coupling trials for two walks started at x0 and 0.

    nn_mode: simple symmetric walk; parity wait then strict mirror, where
    coalescence before the origin visit is forced (trials that exhaust the
    event budget mid-mirror are recorded as forced successes with censored
    coupling time).  General symmetric kernels mirror until the walks meet
    or exchange order, then run independently until they meet or the first
    walk hits the origin, whichever happens first.

    Returns (status, forced, t_couple, tau0, post_incr) arrays; tau0 and
    the post-tau0 increment over ``post_window`` are censored to NaN when
    the tau budget runs out.
    """
    status = np.empty(n_trials, np.int8)
    forced = np.zeros(n_trials, np.int8)
    t_couple = np.full(n_trials, np.nan)
    tau0 = np.full(n_trials, np.nan)
    post_incr = np.full(n_trials, np.nan)
    for trial in range(n_trials):
        X = x0
        Y = 0
        t = 0.0
        ev = 0
        st = STATUS_UNDECIDED
        tc = np.nan
        t0 = np.nan
        if nn_mode:
            if ((X - Y) % 2) != 0:
                t += gen.exponential(0.5)
                ev += 1
                if gen.random() < 0.5:
                    X += -1 if gen.random() < 0.5 else 1
                else:
                    Y += -1 if gen.random() < 0.5 else 1
                if X == Y:
                    st = STATUS_SUCCESS
                    tc = t
                    if X == 0:
                        t0 = t
            if st == STATUS_UNDECIDED:
                while ev < max_events:
                    t += gen.exponential(1.0)
                    ev += 1
                    d = -1 if gen.random() < 0.5 else 1
                    X += d
                    Y -= d
                    if X == Y:
                        st = STATUS_SUCCESS
                        tc = t
                        if X == 0:
                            t0 = t
                        break
                if st == STATUS_UNDECIDED:
                    # parity established: coalescence before the origin visit
                    # is forced for the simple walk; time is censored
                    st = STATUS_SUCCESS
                    forced[trial] = 1
            if forced[trial] == 1:
                status[trial] = st
                continue
        else:
            sign0 = 1 if X - Y > 0 else -1
            mirror_done = False
            while ev < max_events:
                t += gen.exponential(1.0)
                ev += 1
                d = _disp(gen, offs, cum)
                X += d
                Y -= d
                if X == Y:
                    st = STATUS_SUCCESS
                    tc = t
                    if X == 0:
                        t0 = t
                    break
                if X == 0:
                    st = STATUS_FAIL
                    t0 = t
                    break
                s = 1 if X - Y > 0 else -1
                if s != sign0:
                    mirror_done = True
                    break
            if st == STATUS_UNDECIDED and mirror_done:
                while ev < max_events:
                    t += gen.exponential(0.5)
                    ev += 1
                    d = _disp(gen, offs, cum)
                    if gen.random() < 0.5:
                        X += d
                        if X == Y:
                            st = STATUS_SUCCESS
                            tc = t
                            if X == 0:
                                t0 = t
                            break
                        if X == 0:
                            st = STATUS_FAIL
                            t0 = t
                            break
                    else:
                        Y += d
                        if Y == X:
                            st = STATUS_SUCCESS
                            tc = t
                            break
        status[trial] = st
        t_couple[trial] = tc
        # walk X onward to its origin visit, then measure the post-tau0
        # displacement over a fixed window (property (ii) data)
        if st != STATUS_UNDECIDED and post_window > 0.0:
            if np.isnan(t0):
                evt = 0
                while evt < tau_budget:
                    t += gen.exponential(1.0)
                    evt += 1
                    X += _disp(gen, offs, cum)
                    if X == 0:
                        t0 = t
                        break
            if not np.isnan(t0):
                tw = t0
                Z = 0
                while True:
                    tw += gen.exponential(1.0)
                    if tw > t0 + post_window:
                        break
                    Z += _disp(gen, offs, cum)
                post_incr[trial] = Z
        tau0[trial] = t0
    return status, forced, t_couple, tau0, post_incr
