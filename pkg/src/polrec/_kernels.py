"""Compiled inner loops for the Gibbs sweeps.

Each kernel mirrors one sweep of the reference implementation in
``samplers.py`` exactly: same update order, same weight formulas, and one
pre-drawn uniform variate per categorical draw, so a chain run on either
engine produces the same sample path.  All state lives in plain arrays owned
by the Python layer; kernels allocate nothing.

The ddCRP kernel maintains link-graph components incrementally: removing the
out-edge of site i leaves i with out-degree zero, so the component containing
i afterwards is exactly the set of sites with a directed path into i, found
by one reverse traversal over in-link lists.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, inline="always")
def _draw(w, n, u):
    """Index of the smallest j with cumsum(w)[j] > u * sum(w)."""
    total = 0.0
    for j in range(n):
        total += w[j]
    threshold = u * total
    acc = 0.0
    for j in range(n):
        acc += w[j]
        if acc > threshold:
            return j
    return n - 1


@njit(cache=True, inline="always")
def _draw_from_log(logw, n, u):
    m = NEG_INF
    for k in range(n):
        if logw[k] > m:
            m = logw[k]
    total = 0.0
    for k in range(n):
        logw[k] = math.exp(logw[k] - m)
        total += logw[k]
    threshold = u * total
    acc = 0.0
    for k in range(n):
        acc += logw[k]
        if acc > threshold:
            return k
    return n - 1


# ---------------------------------------------------------------------------
# Action sweeps
# ---------------------------------------------------------------------------


@njit(cache=True)
def action_sweep_collapsed(actions, W, act_site, z, phi, xi, alpha, us, wbuf):
    """One systematic scan of all action indices, controllers marginalized:
    P(a_t = j) proportional to T-row(t, j) * (count of j in the site's
    cluster, excluding a_t, + alpha).  Returns the number of transition rows
    that had to fall back to prior-only weights."""
    n_fallback = 0
    n_act, A = W.shape
    for t in range(n_act):
        i = act_site[t]
        k = z[i]
        a0 = actions[t]
        phi[i, a0] -= 1
        xi[k, a0] -= 1
        total = 0.0
        for j in range(A):
            wbuf[j] = W[t, j] * (xi[k, j] + alpha)
            total += wbuf[j]
        if total <= 0.0:
            n_fallback += 1
            for j in range(A):
                wbuf[j] = xi[k, j] + alpha
        a1 = _draw(wbuf, A, us[t])
        actions[t] = a1
        phi[i, a1] += 1
        xi[k, a1] += 1
    return n_fallback


@njit(cache=True)
def action_sweep_controllers(actions, W, act_site, z, phi, xi, theta, us, wbuf):
    """Action scan with explicit controllers: P(a_t = j) proportional to
    T-row(t, j) * theta[z(site), j]."""
    n_fallback = 0
    n_act, A = W.shape
    for t in range(n_act):
        i = act_site[t]
        k = z[i]
        a0 = actions[t]
        total = 0.0
        for j in range(A):
            wbuf[j] = W[t, j] * theta[k, j]
            total += wbuf[j]
        if total <= 0.0:
            n_fallback += 1
            for j in range(A):
                wbuf[j] = theta[k, j]
        a1 = _draw(wbuf, A, us[t])
        if a1 != a0:
            actions[t] = a1
            phi[i, a0] -= 1
            phi[i, a1] += 1
            xi[k, a0] -= 1
            xi[k, a1] += 1
    return n_fallback


# ---------------------------------------------------------------------------
# Finite-mixture indicator sweeps
# ---------------------------------------------------------------------------

PRIOR_NONE = 0
PRIOR_MIXING = 1
PRIOR_MIXING_COLLAPSED = 2
PRIOR_POTTS = 3


@njit(cache=True)
def transport_cost_kernel(a, b, C):
    """Exact transportation optimum by successive shortest augmenting paths
    with node potentials (dense Dijkstra on the bipartite graph).

    ``a`` and ``b`` are consumed; every augmentation exactly exhausts a
    supply, a demand, or a residual arc.  Returns the optimal cost.
    """
    m = a.shape[0]
    n = b.shape[0]
    inf = np.inf
    flow = np.zeros((m, n))
    pot_s = np.zeros(m)
    pot_t = np.zeros(n)
    dist_s = np.empty(m)
    dist_t = np.empty(n)
    done_s = np.empty(m, np.bool_)
    done_t = np.empty(n, np.bool_)
    par_t = np.empty(n, np.int64)
    par_s = np.empty(m, np.int64)
    total = 0.0
    for i in range(m):
        total += a[i]
    floor = 1e-13 * max(total, 1.0)
    while True:
        rem_a = 0.0
        for i in range(m):
            rem_a += a[i]
        rem_b = 0.0
        for j in range(n):
            rem_b += b[j]
        if min(rem_a, rem_b) <= floor:
            break
        for i in range(m):
            dist_s[i] = 0.0 if a[i] > 0 else inf
            done_s[i] = False
            par_s[i] = -1
        for j in range(n):
            dist_t[j] = inf
            done_t[j] = False
            par_t[j] = -1
        target = -1
        d_target = inf
        while True:
            best_i = -1
            best_ds = inf
            for i in range(m):
                if not done_s[i] and dist_s[i] < best_ds:
                    best_ds = dist_s[i]
                    best_i = i
            best_j = -1
            best_dt = inf
            for j in range(n):
                if not done_t[j] and dist_t[j] < best_dt:
                    best_dt = dist_t[j]
                    best_j = j
            if best_i >= 0 and best_ds <= best_dt:
                i = best_i
                done_s[i] = True
                for j in range(n):
                    if not done_t[j]:
                        rc = C[i, j] + pot_s[i] - pot_t[j]
                        if rc < 0.0:
                            rc = 0.0
                        nd = dist_s[i] + rc
                        if nd < dist_t[j]:
                            dist_t[j] = nd
                            par_t[j] = i
            elif best_j >= 0:
                j = best_j
                if b[j] > 0:
                    target = j
                    d_target = dist_t[j]
                    break
                done_t[j] = True
                for i in range(m):
                    if not done_s[i] and flow[i, j] > 0:
                        rc = -(C[i, j] + pot_s[i] - pot_t[j])
                        if rc < 0.0:
                            rc = 0.0
                        nd = dist_t[j] + rc
                        if nd < dist_s[i]:
                            dist_s[i] = nd
                            par_s[i] = j
            else:
                break  # nothing reachable
        if target < 0:
            break
        for i in range(m):
            pot_s[i] += min(dist_s[i], d_target)
        for j in range(n):
            pot_t[j] += min(dist_t[j], d_target)
        # walk the alternating parent chain back to the originating source
        j = target
        origin = -1
        delta = b[target]
        while True:
            i = par_t[j]
            if par_s[i] == -1:
                origin = i
                break
            j = par_s[i]
            if flow[i, j] < delta:
                delta = flow[i, j]
        if a[origin] < delta:
            delta = a[origin]
        j = target
        while True:
            i = par_t[j]
            flow[i, j] += delta
            if par_s[i] == -1:
                break
            j = par_s[i]
            flow[i, j] -= delta
        a[origin] -= delta
        b[target] -= delta
    cost = 0.0
    for i in range(m):
        for j in range(n):
            if flow[i, j] > 0:
                cost += flow[i, j] * C[i, j]
    return cost


@njit(cache=True, inline="always")
def _prior_logweights(logw, K, prior_kind, k0, q, zeta, gamma_over_k, beta,
                      nbr_ptr, nbr_idx, nbr_f, z, i, acc):
    if prior_kind == PRIOR_NONE:
        for k in range(K):
            logw[k] = 0.0
    elif prior_kind == PRIOR_MIXING:
        for k in range(K):
            logw[k] = np.log(q[k])
    elif prior_kind == PRIOR_MIXING_COLLAPSED:
        for k in range(K):
            drop = 1 if k == k0 else 0
            logw[k] = np.log(zeta[k] - drop + gamma_over_k)
    else:
        for k in range(K):
            acc[k] = 0.0
        for e in range(nbr_ptr[i], nbr_ptr[i + 1]):
            acc[z[nbr_idx[e]]] += nbr_f[e]
        for k in range(K):
            logw[k] = beta * acc[k]


@njit(cache=True)
def indicator_sweep_mixture_nc(z, phi, xi, zeta, log_theta, prior_kind, q,
                               gamma_over_k, beta, nbr_ptr, nbr_idx, nbr_f,
                               us, logw, acc):
    """Indicator scan with explicit controllers: prior conditional times the
    likelihood of the site's actions under each cluster's controller."""
    n, A = phi.shape
    K = log_theta.shape[0]
    for i in range(n):
        k0 = z[i]
        _prior_logweights(logw, K, prior_kind, k0, q, zeta, gamma_over_k,
                          beta, nbr_ptr, nbr_idx, nbr_f, z, i, acc)
        for k in range(K):
            s = 0.0
            for j in range(A):
                c = phi[i, j]
                if c > 0:
                    s += c * log_theta[k, j]
            logw[k] += s
        k1 = _draw_from_log(logw, K, us[i])
        if k1 != k0:
            for j in range(A):
                c = phi[i, j]
                if c > 0:
                    xi[k0, j] -= c
                    xi[k1, j] += c
            zeta[k0] -= 1
            zeta[k1] += 1
            z[i] = k1


@njit(cache=True)
def indicator_sweep_mixture_collapsed(z, phi, xi, zeta, prior_kind, q,
                                      gamma_over_k, beta, nbr_ptr, nbr_idx,
                                      nbr_f, per_count, per_total, us, logw, acc):
    """Collapsed indicator scan: prior conditional times the ratio
    DirMult(psi_k + phi_i) / DirMult(psi_k), where psi is the cluster count
    table with site i removed.  Only the candidate cluster's factor differs
    between labels, so each label costs O(A) table lookups."""
    n, A = phi.shape
    K = zeta.shape[0]
    for i in range(n):
        k0 = z[i]
        # remove the site entirely; xi now equals psi for every cluster
        n_i = 0
        for j in range(A):
            c = phi[i, j]
            if c > 0:
                xi[k0, j] -= c
                n_i += c
        zeta[k0] -= 1
        _prior_logweights(logw, K, prior_kind, -1, q, zeta, gamma_over_k,
                          beta, nbr_ptr, nbr_idx, nbr_f, z, i, acc)
        if n_i > 0:
            for k in range(K):
                tot = 0
                s = 0.0
                for j in range(A):
                    cj = xi[k, j]
                    tot += cj
                    c = phi[i, j]
                    if c > 0:
                        s += per_count[cj + c] - per_count[cj]
                logw[k] += s + per_total[tot] - per_total[tot + n_i]
        k1 = _draw_from_log(logw, K, us[i])
        for j in range(A):
            c = phi[i, j]
            if c > 0:
                xi[k1, j] += c
        zeta[k1] += 1
        z[i] = k1


# ---------------------------------------------------------------------------
# ddCRP link sweep
# ---------------------------------------------------------------------------


@njit(cache=True)
def ddcrp_link_sweep(links, comp, comp_size, xi_lab,
                     m_head, m_next, m_prev,
                     in_head, in_next, in_prev,
                     free_stack, holders,
                     phi, fmat, nu,
                     per_count, per_total,
                     us, stamp, stack_buf, members_buf, wbuf, lfac):
    """One systematic scan of all link variables.

    For each site i: detach its out-link, recover the component that still
    contains i by reverse reachability, split the bookkeeping if the old
    component fell apart, then draw a new target j with weight

        nu                            for j = i,
        f(d_ij)                       if j lies in i's component,
        f(d_ij) * DirMult-ratio       if linking to j merges two components,

    and merge the component structures if needed.  ``holders`` carries the
    freelist top and the traversal stamp counter.
    """
    n, A = phi.shape
    for i in range(n):
        old = links[i]
        # unlink i from the in-list of its old target
        nxt = in_next[i]
        prv = in_prev[i]
        if prv == -1:
            in_head[old] = nxt
        else:
            in_next[prv] = nxt
        if nxt != -1:
            in_prev[nxt] = prv
        links[i] = -1

        # reverse reachability from i = i's component after edge removal
        holders[1] += 1
        tag = holders[1]
        stamp[i] = tag
        stack_buf[0] = i
        top = 1
        na = 0
        while top > 0:
            top -= 1
            x = stack_buf[top]
            members_buf[na] = x
            na += 1
            y = in_head[x]
            while y != -1:
                if stamp[y] != tag:
                    stamp[y] = tag
                    stack_buf[top] = y
                    top += 1
                y = in_next[y]

        lab0 = comp[i]
        if na < comp_size[lab0]:
            # the old component split: give i's side a fresh label
            holders[0] -= 1
            lab_i = free_stack[holders[0]]
            for j in range(A):
                xi_lab[lab_i, j] = 0
            for m in range(na):
                s = members_buf[m]
                comp[s] = lab_i
                for j in range(A):
                    xi_lab[lab_i, j] += phi[s, j]
                # move s from lab0's member list to lab_i's
                nxt = m_next[s]
                prv = m_prev[s]
                if prv == -1:
                    m_head[lab0] = nxt
                else:
                    m_next[prv] = nxt
                if nxt != -1:
                    m_prev[nxt] = prv
                h = m_head[lab_i]
                m_next[s] = h
                m_prev[s] = -1
                if h != -1:
                    m_prev[h] = s
                m_head[lab_i] = s
            for j in range(A):
                xi_lab[lab0, j] -= xi_lab[lab_i, j]
            comp_size[lab_i] = na
            comp_size[lab0] -= na
        else:
            lab_i = lab0

        # merge factors per other component, scaled by the largest so the
        # linear-space weights cannot overflow
        tot_i = 0
        dm_i = 0.0
        for j in range(A):
            c = xi_lab[lab_i, j]
            tot_i += c
            dm_i += per_count[c]
        dm_i += per_total[0] - per_total[tot_i] - A * per_count[0]
        max_lfac = 0.0
        for lab in range(n):
            if comp_size[lab] > 0 and lab != lab_i:
                tot = 0
                s = 0.0
                for j in range(A):
                    c = xi_lab[lab, j]
                    ci = xi_lab[lab_i, j]
                    tot += c
                    if ci > 0:
                        s += per_count[c + ci] - per_count[c]
                val = s + per_total[tot] - per_total[tot + tot_i] - dm_i
                lfac[lab] = val
                if val > max_lfac:
                    max_lfac = val
        lfac[lab_i] = 0.0

        for j in range(n):
            wbuf[j] = fmat[i, j] * math.exp(lfac[comp[j]] - max_lfac)
        wbuf[i] = nu * math.exp(-max_lfac)
        target = _draw(wbuf, n, us[i])

        links[i] = target
        h = in_head[target]
        in_next[i] = h
        in_prev[i] = -1
        if h != -1:
            in_prev[h] = i
        in_head[target] = i

        lab_t = comp[target]
        if lab_t != lab_i:
            # merge: relabel the smaller side
            if comp_size[lab_t] < comp_size[lab_i]:
                small, big = lab_t, lab_i
            else:
                small, big = lab_i, lab_t
            s = m_head[small]
            while s != -1:
                nxt = m_next[s]
                comp[s] = big
                h = m_head[big]
                m_next[s] = h
                m_prev[s] = -1
                if h != -1:
                    m_prev[h] = s
                m_head[big] = s
                s = nxt
            m_head[small] = -1
            for j in range(A):
                xi_lab[big, j] += xi_lab[small, j]
                xi_lab[small, j] = 0
            comp_size[big] += comp_size[small]
            comp_size[small] = 0
            free_stack[holders[0]] = small
            holders[0] += 1
