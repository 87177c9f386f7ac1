"""Numba kernels shared by the abstraction and the dynamic-programming engine.

Two row layouts are supported.  Explicit rows are CSR triplets.  Factored rows
keep, per (state, action, disturbance, dimension), a window of per-dimension
interval bounds; the joint bounds of a successor are the product of the
per-dimension factors (Frechet-combined inside a dependence group), min/max
over the disturbance lattice, and expanded on demand.  The sink is the last
state index and absorbs everything not kept in the window.
"""

import numpy as np
from numba import njit, prange

CACHE = True


@njit(cache=CACHE)
def _fill(vals, lo, hi, n, maximize, idx):
    """Greedy budget fill by weighted selection instead of a full sort.

    Entries strictly better than a pivot are filled first; equal values are
    interchangeable, so the result matches the sorted greedy order.
    """
    base = 0.0
    slo = 0.0
    for i in range(n):
        base += lo[i] * vals[i]
        slo += lo[i]
        idx[i] = i
    budget = 1.0 - slo
    a = 0
    b = n
    while budget > 0.0 and a < b:
        pivot = vals[idx[(a + b) // 2]]
        # three-way partition of idx[a:b]: better | equal | worse
        lt = a
        i = a
        gt = b
        cap_b = 0.0
        sum_b = 0.0
        cap_e = 0.0
        while i < gt:
            j = idx[i]
            v = vals[j]
            c = hi[j] - lo[j]
            if v == pivot:
                cap_e += c
                i += 1
            elif (v > pivot) == maximize:
                cap_b += c
                sum_b += c * v
                idx[i] = idx[lt]
                idx[lt] = j
                lt += 1
                i += 1
            else:
                gt -= 1
                idx[i] = idx[gt]
                idx[gt] = j
        if cap_b >= budget:
            b = lt
            continue
        base += sum_b
        budget -= cap_b
        if cap_e >= budget:
            return base + budget * pivot
        base += cap_e * pivot
        budget -= cap_e
        a = gt
    return base


@njit(cache=CACHE)
def extremize(vals, lo, hi, n, maximize):
    """Optimum of sum(p * vals) over lo <= p <= hi, sum(p) = 1 (greedy order)."""
    idx = np.empty(n, np.int64)
    return _fill(vals, lo, hi, n, maximize, idx)


@njit(cache=CACHE)
def extremize_weights(vals, lo, hi, n, maximize):
    """Maximising/minimising distribution itself (for tests and inspection)."""
    p = lo[:n].copy()
    budget = 1.0 - p.sum()
    order = np.argsort(vals[:n], kind="mergesort")
    for t in range(n):
        if budget <= 0.0:
            break
        i = order[n - 1 - t] if maximize else order[t]
        take = min(hi[i] - lo[i], budget)
        if take > 0.0:
            p[i] += take
            budget -= take
    return p


@njit(cache=CACHE)
def expand_factored(s, a, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups, n_groups,
                    independent, cutoff, sink, cols, plo, phi):
    """Write the explicit row of (s, a) into cols/plo/phi; return its length.

    The last entry is always the sink.  Its bounds intersect the complement
    rule [1 - sum kept upper, 1 - sum kept lower] with the direct bounds on
    the escaping mass (``esc_lo``/``esc_hi``, plus pruned in-window mass).
    """
    D = dims_n.shape[0]
    n_w = lo_t.shape[2]
    W = lo_t.shape[4]
    kmin = np.empty(D, np.int64)
    kmax = np.empty(D, np.int64)
    for d in range(D):
        kmin[d] = W
        kmax[d] = -1
        for k in range(W):
            j = starts[s, a, d] + k
            if j < 0 or j >= dims_n[d]:
                continue
            nz = False
            for w in range(n_w):
                if hi_t[s, a, w, d, k] > 0.0:
                    nz = True
                    break
            if nz:
                if k < kmin[d]:
                    kmin[d] = k
                kmax[d] = k
    n = 0
    sum_lo = 0.0
    sum_hi = 0.0
    pruned = 0.0
    empty = False
    for d in range(D):
        if kmax[d] < kmin[d]:
            empty = True
    if not empty:
        k = kmin.copy()
        glo = np.zeros(n_groups)
        ghi = np.ones(n_groups)
        gcnt = np.zeros(n_groups)
        while True:
            idx = 0
            for d in range(D):
                idx += (starts[s, a, d] + k[d]) * strides[d]
            best_lo = 1.0
            best_hi = 0.0
            for w in range(n_w):
                if independent:
                    pl = 1.0
                    ph = 1.0
                    for d in range(D):
                        pl *= lo_t[s, a, w, d, k[d]]
                        ph *= hi_t[s, a, w, d, k[d]]
                else:
                    for g in range(n_groups):
                        glo[g] = 0.0
                        ghi[g] = 1.0
                        gcnt[g] = 0.0
                    for d in range(D):
                        g = groups[d]
                        glo[g] += lo_t[s, a, w, d, k[d]]
                        v = hi_t[s, a, w, d, k[d]]
                        if v < ghi[g]:
                            ghi[g] = v
                        gcnt[g] += 1.0
                    pl = 1.0
                    ph = 1.0
                    for g in range(n_groups):
                        pl *= max(0.0, glo[g] - (gcnt[g] - 1.0))
                        ph *= ghi[g]
                if pl < best_lo:
                    best_lo = pl
                if ph > best_hi:
                    best_hi = ph
            if best_hi >= cutoff:
                cols[n] = idx
                plo[n] = best_lo
                phi[n] = best_hi
                sum_lo += best_lo
                sum_hi += best_hi
                n += 1
            else:
                pruned += best_hi
            # odometer, last dimension fastest
            d = D - 1
            while d >= 0:
                k[d] += 1
                if k[d] <= kmax[d]:
                    break
                k[d] = kmin[d]
                d -= 1
            if d < 0:
                break
    cols[n] = sink
    h = min(1.0, 1.0 - sum_lo, esc_hi[s, a] + pruned)
    h = max(0.0, h)
    plo[n] = min(h, max(0.0, 1.0 - sum_hi, esc_lo[s, a]))
    phi[n] = h
    return n + 1


@njit(cache=CACHE)
def _better(q, best, maximize_actions):
    return q > best if maximize_actions else q < best


@njit(cache=CACHE)
def _select(qs, nv, a, best, best_a, maximize_actions):
    """Update per-vector best values/actions with action ``a``."""
    for v in range(nv):
        if best_a[v] < 0 or _better(qs[v], best[v], maximize_actions):
            best[v] = qs[v]
            best_a[v] = a


@njit(cache=CACHE)
def _keep_prev(qs_prev, nv, pa, best, best_a, use_prev, maximize_actions, strict_tol):
    for v in range(nv):
        if not use_prev[v] or best_a[v] == pa:
            continue
        gain = best[v] - qs_prev[v] if maximize_actions else qs_prev[v] - best[v]
        if gain <= strict_tol:
            best[v] = qs_prev[v]
            best_a[v] = pa


@njit(parallel=True, cache=CACHE)
def backup_factored(V, pinned, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups, n_groups,
                    independent, cutoff, adversary_max, maximize_actions, fixed_policy,
                    prev_policy, use_prev, strict_tol):
    """One synchronous Bellman sweep of every row of ``V`` (shape (m, n)).

    Each row expansion is shared by the m value vectors.  ``fixed_policy``
    (length n_grid) restricts each state to one action when non-empty.  For
    vectors flagged in ``use_prev`` the action in ``prev_policy`` is kept
    unless another one improves by more than ``strict_tol``.
    """
    nv = V.shape[0]
    n_grid = starts.shape[0]
    n_act = starts.shape[1]
    D = dims_n.shape[0]
    W = lo_t.shape[4]
    cap = 1
    for d in range(D):
        cap *= min(W, dims_n[d])
    cap += 1
    sink = n_grid
    out = V.copy()
    act = np.full((nv, n_grid), -1, np.int64)
    use_fixed = fixed_policy.shape[0] > 0
    any_prev = prev_policy.shape[0] > 0
    for s in prange(n_grid):
        if pinned[s]:
            continue
        cols = np.empty(cap, np.int64)
        plo = np.empty(cap)
        phi = np.empty(cap)
        vals = np.empty(cap)
        idx = np.empty(cap, np.int64)
        qs = np.empty(nv)
        best = np.zeros(nv)
        best_a = np.full(nv, -1, np.int64)
        a0 = 0
        a1 = n_act
        if use_fixed:
            a0 = fixed_policy[s]
            a1 = a0 + 1
        for a in range(a0, a1):
            n = expand_factored(s, a, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups,
                                n_groups, independent, cutoff, sink, cols, plo, phi)
            for v in range(nv):
                for i in range(n):
                    vals[i] = V[v, cols[i]]
                qs[v] = _fill(vals, plo, phi, n, adversary_max, idx)
            _select(qs, nv, a, best, best_a, maximize_actions)
        if any_prev and not use_fixed:
            pa = prev_policy[s]
            if pa >= 0:
                n = expand_factored(s, pa, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups,
                                    n_groups, independent, cutoff, sink, cols, plo, phi)
                for v in range(nv):
                    for i in range(n):
                        vals[i] = V[v, cols[i]]
                    qs[v] = _fill(vals, plo, phi, n, adversary_max, idx)
                _keep_prev(qs, nv, pa, best, best_a, use_prev, maximize_actions, strict_tol)
        for v in range(nv):
            out[v, s] = best[v]
            act[v, s] = best_a[v]
    return out, act


@njit(parallel=True, cache=CACHE)
def backup_csr(V, pinned, row_ptr, cols, lo, hi, n_act, adversary_max, maximize_actions,
               fixed_policy, prev_policy, use_prev, strict_tol):
    nv = V.shape[0]
    n_states = pinned.shape[0]
    out = V.copy()
    act = np.full((nv, n_states), -1, np.int64)
    use_fixed = fixed_policy.shape[0] > 0
    any_prev = prev_policy.shape[0] > 0
    for s in prange(n_states):
        if pinned[s]:
            continue
        qs = np.empty(nv)
        best = np.zeros(nv)
        best_a = np.full(nv, -1, np.int64)
        a0 = 0
        a1 = n_act
        if use_fixed:
            a0 = fixed_policy[s]
            a1 = a0 + 1
        for a in range(a0, a1):
            r = s * n_act + a
            b, e = row_ptr[r], row_ptr[r + 1]
            vals = np.empty(e - b)
            idx = np.empty(e - b, np.int64)
            for v in range(nv):
                for i in range(b, e):
                    vals[i - b] = V[v, cols[i]]
                qs[v] = _fill(vals, lo[b:e], hi[b:e], e - b, adversary_max, idx)
            _select(qs, nv, a, best, best_a, maximize_actions)
        if any_prev and not use_fixed:
            pa = prev_policy[s]
            if pa >= 0:
                r = s * n_act + pa
                b, e = row_ptr[r], row_ptr[r + 1]
                vals = np.empty(e - b)
                idx = np.empty(e - b, np.int64)
                for v in range(nv):
                    for i in range(b, e):
                        vals[i - b] = V[v, cols[i]]
                    qs[v] = _fill(vals, lo[b:e], hi[b:e], e - b, adversary_max, idx)
                _keep_prev(qs, nv, pa, best, best_a, use_prev, maximize_actions, strict_tol)
        for v in range(nv):
            out[v, s] = best[v]
            act[v, s] = best_a[v]
    return out, act


@njit(cache=CACHE)
def factored_to_csr(starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups, n_groups, independent,
                    cutoff, absorbing):
    n_grid = starts.shape[0]
    n_act = starts.shape[1]
    D = dims_n.shape[0]
    W = lo_t.shape[4]
    cap = 1
    for d in range(D):
        cap *= min(W, dims_n[d])
    cap += 1
    sink = n_grid
    cols = np.empty(cap, np.int64)
    plo = np.empty(cap)
    phi = np.empty(cap)
    counts = np.empty((n_grid + 1) * n_act, np.int64)
    for s in range(n_grid):
        for a in range(n_act):
            if absorbing[s]:
                counts[s * n_act + a] = 1
            else:
                counts[s * n_act + a] = expand_factored(s, a, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides,
                                                        groups, n_groups, independent, cutoff,
                                                        sink, cols, plo, phi)
    for a in range(n_act):
        counts[sink * n_act + a] = 1
    row_ptr = np.zeros(counts.shape[0] + 1, np.int64)
    for r in range(counts.shape[0]):
        row_ptr[r + 1] = row_ptr[r] + counts[r]
    out_c = np.empty(row_ptr[-1], np.int64)
    out_l = np.empty(row_ptr[-1])
    out_h = np.empty(row_ptr[-1])
    for s in range(n_grid + 1):
        for a in range(n_act):
            r = s * n_act + a
            b = row_ptr[r]
            if s == sink or absorbing[s]:
                out_c[b] = s
                out_l[b] = 1.0
                out_h[b] = 1.0
                continue
            n = expand_factored(s, a, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups, n_groups,
                                independent, cutoff, sink, cols, plo, phi)
            out_c[b:b + n] = cols[:n]
            out_l[b:b + n] = plo[:n]
            out_h[b:b + n] = phi[:n]
    return row_ptr, out_c, out_l, out_h



@njit(cache=CACHE)
def _row_positive(cols, plo, phi, n, good, forced):
    """Whether a row reaches ``good`` with positive probability under every
    (forced) or some (not forced) feasible distribution."""
    if forced:
        out_hi = 0.0
        for i in range(n):
            if good[cols[i]]:
                if plo[i] > 0.0:
                    return True
            else:
                out_hi += phi[i]
        return out_hi < 1.0
    for i in range(n):
        if phi[i] > 0.0 and good[cols[i]]:
            return True
    return False


@njit(cache=CACHE)
def positive_factored(seed, blocked, forced, all_actions, policy, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n,
                      strides, groups, n_groups, independent, cutoff):
    """Least set containing ``seed`` closed under one-step positive reach.

    A state joins when some (or, with ``all_actions``, every) admissible
    action reaches the set with positive probability; ``forced`` asks for
    positivity under every feasible distribution of the row.  Sweeps run
    in place, alternating direction, until nothing changes.
    """
    n_grid = starts.shape[0]
    n_act = starts.shape[1]
    D = dims_n.shape[0]
    W = lo_t.shape[4]
    cap = 1
    for d in range(D):
        cap *= min(W, dims_n[d])
    cap += 1
    cols = np.empty(cap, np.int64)
    plo = np.empty(cap)
    phi = np.empty(cap)
    good = seed.copy()
    use_policy = policy.shape[0] > 0
    changed = True
    sweep = 0
    while changed:
        changed = False
        for t in range(n_grid):
            s = t if sweep % 2 == 0 else n_grid - 1 - t
            if good[s] or blocked[s]:
                continue
            a0 = 0
            a1 = n_act
            if use_policy:
                a0 = policy[s]
                a1 = a0 + 1
            ok = all_actions
            for a in range(a0, a1):
                n = expand_factored(s, a, starts, lo_t, hi_t, esc_lo, esc_hi, dims_n, strides, groups, n_groups,
                                    independent, cutoff, n_grid, cols, plo, phi)
                hit = _row_positive(cols, plo, phi, n, good, forced)
                if all_actions and not hit:
                    ok = False
                    break
                if not all_actions and hit:
                    ok = True
                    break
            if ok:
                good[s] = True
                changed = True
        sweep += 1
    return good


@njit(cache=CACHE)
def positive_csr(seed, blocked, forced, all_actions, policy, row_ptr, cols, lo, hi, n_act):
    n_states = seed.shape[0]
    good = seed.copy()
    use_policy = policy.shape[0] > 0
    changed = True
    sweep = 0
    while changed:
        changed = False
        for t in range(n_states):
            s = t if sweep % 2 == 0 else n_states - 1 - t
            if good[s] or blocked[s]:
                continue
            a0 = 0
            a1 = n_act
            if use_policy:
                a0 = policy[s]
                a1 = a0 + 1
            ok = all_actions
            for a in range(a0, a1):
                r = s * n_act + a
                b, e = row_ptr[r], row_ptr[r + 1]
                hit = _row_positive(cols[b:e], lo[b:e], hi[b:e], e - b, good, forced)
                if all_actions and not hit:
                    ok = False
                    break
                if not all_actions and hit:
                    ok = True
                    break
            if ok:
                good[s] = True
                changed = True
        sweep += 1
    return good
