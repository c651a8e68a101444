"""Hot numeric loops, compiled with numba when enabled (see metaheat.backend).

Every kernel is a pure function of plain numpy arrays.  Randomness is always
passed in as pre-drawn uniform arrays, never generated inside, so the jitted
and pure-Python paths produce bit-identical results and every caller is
reproducible from its seed.

TSP instances arrive as a uniform-degree neighbor table ``nbr`` of shape
(n, deg) holding, per source node, the sparse out-edge targets ordered by
(length, node index).  Edge e = u*deg + slot carries score ``theta2[u, slot]``.
MIS instances arrive as CSR adjacency (indptr, indices).
"""

import math

import numpy as np

from .backend import maybe_jit


@maybe_jit
def _dist(coords, a, b):
    dx = coords[a, 0] - coords[b, 0]
    dy = coords[a, 1] - coords[b, 1]
    return math.sqrt(dx * dx + dy * dy)


@maybe_jit
def tour_len(coords, tour):
    n = tour.shape[0]
    total = 0.0
    for i in range(n):
        total += _dist(coords, tour[i], tour[(i + 1) % n])
    return total


@maybe_jit
def tsp_sample_batch(coords, nbr, theta2, tau, starts, unif):
    """Sample K tours from the chain-rule distribution at scores theta2/tau.

    starts: (K,) int32 start nodes.  unif: (K, n) uniforms; entry [k, i] drives
    step i of sample k.  Dead ends on the sparse graph fall back to a uniform
    choice over all unvisited nodes (no score participates).
    Returns (tours (K, n) int32, logprobs (K,), costs (K,)).
    """
    K = starts.shape[0]
    n = coords.shape[0]
    deg = nbr.shape[1]
    tours = np.empty((K, n), dtype=np.int32)
    logps = np.zeros(K, dtype=np.float64)
    costs = np.zeros(K, dtype=np.float64)
    visited = np.zeros(n, dtype=np.bool_)
    for k in range(K):
        for i in range(n):
            visited[i] = False
        cur = starts[k]
        tours[k, 0] = cur
        visited[cur] = True
        lp = 0.0
        for step in range(1, n):
            mx = -1.0e300
            cnt = 0
            for s in range(deg):
                if not visited[nbr[cur, s]]:
                    cnt += 1
                    v = theta2[cur, s]
                    if v > mx:
                        mx = v
            u = unif[k, step]
            if cnt > 0:
                wsum = 0.0
                for s in range(deg):
                    if not visited[nbr[cur, s]]:
                        wsum += math.exp((theta2[cur, s] - mx) / tau)
                thresh = u * wsum
                acc = 0.0
                chosen = -1
                for s in range(deg):
                    if not visited[nbr[cur, s]]:
                        acc += math.exp((theta2[cur, s] - mx) / tau)
                        chosen = s
                        if acc >= thresh:
                            break
                nxt = nbr[cur, chosen]
                lp += (theta2[cur, chosen] - mx) / tau - math.log(wsum)
            else:
                rem = n - step
                pick = int(u * rem)
                if pick >= rem:
                    pick = rem - 1
                nxt = -1
                seen = 0
                for j in range(n):
                    if not visited[j]:
                        if seen == pick:
                            nxt = j
                            break
                        seen += 1
                lp -= math.log(rem)
            tours[k, step] = nxt
            visited[nxt] = True
            cur = nxt
        logps[k] = lp
        costs[k] = tour_len(coords, tours[k])
    return tours, logps, costs


@maybe_jit
def tsp_greedy(coords, nbr, theta2, start):
    """Greedy rollout: highest-score unvisited neighbor, ties to lower node id."""
    n = coords.shape[0]
    deg = nbr.shape[1]
    tour = np.empty(n, dtype=np.int32)
    visited = np.zeros(n, dtype=np.bool_)
    cur = start
    tour[0] = cur
    visited[cur] = True
    for step in range(1, n):
        best_v = -1.0e300
        best_j = -1
        for s in range(deg):
            j = nbr[cur, s]
            if not visited[j]:
                v = theta2[cur, s]
                if v > best_v or (v == best_v and j < best_j):
                    best_v = v
                    best_j = j
        if best_j < 0:
            for j in range(n):
                if not visited[j]:
                    best_j = j
                    break
        tour[step] = best_j
        visited[best_j] = True
        cur = best_j
    return tour, tour_len(coords, tour)


@maybe_jit
def tsp_logq_grad(nbr, theta2, tau, tours, weights, out):
    """Accumulate sum_k weights[k] * d log q(tour_k | start) / d theta into out.

    Re-walks each tour replaying the sampler's candidate rule; fallback steps
    (no unvisited sparse neighbor) touch no score and contribute nothing.
    out has shape (n, deg) and is accumulated in place.
    """
    K = tours.shape[0]
    n = tours.shape[1]
    deg = nbr.shape[1]
    visited = np.zeros(n, dtype=np.bool_)
    for k in range(K):
        w = weights[k]
        if w == 0.0:
            continue
        for i in range(n):
            visited[i] = False
        cur = tours[k, 0]
        visited[cur] = True
        for step in range(1, n):
            nxt = tours[k, step]
            mx = -1.0e300
            cnt = 0
            for s in range(deg):
                if not visited[nbr[cur, s]]:
                    cnt += 1
                    v = theta2[cur, s]
                    if v > mx:
                        mx = v
            if cnt > 0:
                wsum = 0.0
                for s in range(deg):
                    if not visited[nbr[cur, s]]:
                        wsum += math.exp((theta2[cur, s] - mx) / tau)
                for s in range(deg):
                    j = nbr[cur, s]
                    if not visited[j]:
                        p = math.exp((theta2[cur, s] - mx) / tau) / wsum
                        ind = 1.0 if j == nxt else 0.0
                        out[cur, s] += w * (ind - p) / tau
            visited[nxt] = True
            cur = nxt
    return out


@maybe_jit
def mis_sample_batch(indptr, indices, theta, tau, unif):
    """Sample K maximal independent sets by sequential softmax over the available set.

    unif: (K, n).  Returns (orders (K, n) int32 padded with -1, sizes (K,),
    logprobs (K,)).  The negated-size cost convention is applied by callers.
    """
    K = unif.shape[0]
    n = indptr.shape[0] - 1
    orders = np.full((K, n), -1, dtype=np.int32)
    sizes = np.zeros(K, dtype=np.int32)
    logps = np.zeros(K, dtype=np.float64)
    avail = np.zeros(n, dtype=np.bool_)
    for k in range(K):
        for i in range(n):
            avail[i] = True
        count = n
        size = 0
        lp = 0.0
        step = 0
        while count > 0:
            mx = -1.0e300
            for j in range(n):
                if avail[j] and theta[j] > mx:
                    mx = theta[j]
            wsum = 0.0
            for j in range(n):
                if avail[j]:
                    wsum += math.exp((theta[j] - mx) / tau)
            thresh = unif[k, step] * wsum
            acc = 0.0
            chosen = -1
            for j in range(n):
                if avail[j]:
                    acc += math.exp((theta[j] - mx) / tau)
                    chosen = j
                    if acc >= thresh:
                        break
            lp += (theta[chosen] - mx) / tau - math.log(wsum)
            orders[k, size] = chosen
            size += 1
            avail[chosen] = False
            count -= 1
            for e in range(indptr[chosen], indptr[chosen + 1]):
                j = indices[e]
                if avail[j]:
                    avail[j] = False
                    count -= 1
            step += 1
        sizes[k] = size
        logps[k] = lp
    return orders, sizes, logps


@maybe_jit
def mis_greedy(indptr, indices, theta):
    """Greedy maximal independent set: highest score available, ties to lower id."""
    n = indptr.shape[0] - 1
    order = np.full(n, -1, dtype=np.int32)
    avail = np.ones(n, dtype=np.bool_)
    count = n
    size = 0
    while count > 0:
        best_v = -1.0e300
        chosen = -1
        for j in range(n):
            if avail[j] and theta[j] > best_v:
                best_v = theta[j]
                chosen = j
        order[size] = chosen
        size += 1
        avail[chosen] = False
        count -= 1
        for e in range(indptr[chosen], indptr[chosen + 1]):
            j = indices[e]
            if avail[j]:
                avail[j] = False
                count -= 1
    return order, size


@maybe_jit
def mis_logq_grad(indptr, indices, theta, tau, orders, sizes, weights, out):
    """Accumulate sum_k weights[k] * d log q(set_k) / d theta into out (n,)."""
    K = orders.shape[0]
    n = indptr.shape[0] - 1
    avail = np.zeros(n, dtype=np.bool_)
    for k in range(K):
        w = weights[k]
        if w == 0.0:
            continue
        for i in range(n):
            avail[i] = True
        for step in range(sizes[k]):
            chosen = orders[k, step]
            mx = -1.0e300
            for j in range(n):
                if avail[j] and theta[j] > mx:
                    mx = theta[j]
            wsum = 0.0
            for j in range(n):
                if avail[j]:
                    wsum += math.exp((theta[j] - mx) / tau)
            for j in range(n):
                if avail[j]:
                    p = math.exp((theta[j] - mx) / tau) / wsum
                    ind = 1.0 if j == chosen else 0.0
                    out[j] += w * (ind - p) / tau
            avail[chosen] = False
            for e in range(indptr[chosen], indptr[chosen + 1]):
                avail[indices[e]] = False
    return out


@maybe_jit
def two_opt_best(coords, tour, max_moves):
    """Best-improvement 2-opt, applied in place; returns the move count.

    Each move scans all non-adjacent edge pairs, applies the single largest
    strictly-improving exchange, and repeats until no improving move remains
    or max_moves is exhausted.
    """
    n = tour.shape[0]
    moves = 0
    while moves < max_moves:
        best_g = 1e-12
        bi = -1
        bj = -1
        for i in range(n - 1):
            a = tour[i]
            b = tour[i + 1]
            dab = _dist(coords, a, b)
            jmax = n if i > 0 else n - 1
            for j in range(i + 2, jmax):
                c = tour[j]
                d = tour[(j + 1) % n]
                g = dab + _dist(coords, c, d) - _dist(coords, a, c) - _dist(coords, b, d)
                if g > best_g:
                    best_g = g
                    bi = i
                    bj = j
        if bi < 0:
            break
        lo = bi + 1
        hi = bj
        while lo < hi:
            t = tour[lo]
            tour[lo] = tour[hi]
            tour[hi] = t
            lo += 1
            hi -= 1
        moves += 1
    return moves


@maybe_jit
def held_karp_dp(dist):
    """Exact TSP by Held-Karp DP with node 0 fixed as the tour start.

    dist: (n, n) symmetric distance matrix.  Returns (optimal cost,
    tour (n,) int32 starting at node 0).  Memory is O(2^(n-1) * n).
    """
    n = dist.shape[0]
    m = n - 1
    full = (1 << m) - 1
    dp = np.full((full + 1, m), np.inf)
    par = np.full((full + 1, m), -1, dtype=np.int8)
    for j in range(m):
        dp[1 << j, j] = dist[0, j + 1]
    for mask in range(1, full + 1):
        for j in range(m):
            if not (mask >> j) & 1:
                continue
            base = dp[mask, j]
            if base == np.inf:
                continue
            for t in range(m):
                if (mask >> t) & 1:
                    continue
                nm = mask | (1 << t)
                c = base + dist[j + 1, t + 1]
                if c < dp[nm, t]:
                    dp[nm, t] = c
                    par[nm, t] = j
    best = np.inf
    bj = 0
    for j in range(m):
        c = dp[full, j] + dist[j + 1, 0]
        if c < best:
            best = c
            bj = j
    tour = np.empty(n, dtype=np.int32)
    tour[0] = 0
    mask = full
    j = bj
    idx = n - 1
    while j >= 0:
        tour[idx] = j + 1
        idx -= 1
        pj = int(par[mask, j])
        mask ^= 1 << int(j)
        j = pj
    return best, tour


@maybe_jit
def mcts_improve(coords, tour0, cand, cand_cum, cand_cnt, unif, c_ucb, stall):
    """Score-guided k-opt (k in {2, 3}) tree search over tour improvements.

    Per evaluation: a base node is picked by a UCB rule over per-node mean
    committed improvement; a replacement edge out of it is sampled from the
    precomputed candidate softmax (cand_cum rows are cumulative weights); the
    induced 2-opt move (or, for k=3, the best of the four pure 3-opt
    reconnections using a second sampled edge) is evaluated and committed only
    if strictly improving.  Runs until the uniform budget (unif rows) or the
    stall limit is exhausted.  Returns (best tour, exact best cost, evals).
    """
    n = tour0.shape[0]
    budget = unif.shape[0]
    cur = tour0.copy()
    pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos[cur[i]] = i
    cur_cost = tour_len(coords, cur)
    best = cur.copy()
    best_cost = cur_cost
    visits = np.zeros(n, dtype=np.float64)
    imp = np.zeros(n, dtype=np.float64)
    total = 0.0
    since = 0
    evals = 0
    scratch = np.empty(n, dtype=np.int32)
    for e in range(budget):
        if since > stall:
            break
        lt = math.log(total + 1.0)
        best_s = -1.0e300
        u = 0
        for i in range(n):
            vi = visits[i]
            mean_imp = imp[i] / vi if vi > 0.0 else 0.0
            s = mean_imp + c_ucb * math.sqrt(lt / (vi + 1.0))
            if s > best_s:
                best_s = s
                u = i
        evals += 1
        visits[u] += 1.0
        total += 1.0
        cc = cand_cnt[u]
        if cc == 0:
            since += 1
            continue
        r = unif[e, 1] * cand_cum[u, cc - 1]
        pick = cc - 1
        for s in range(cc):
            if cand_cum[u, s] >= r:
                pick = s
                break
        v = cand[u, pick]
        gain = 0.0
        committed = False
        if unif[e, 0] < 0.5:
            # 2-opt: remove the successor edges of u and v, reconnect crosswise
            i1 = pos[u]
            j1 = pos[v]
            if i1 > j1:
                t = i1
                i1 = j1
                j1 = t
            if j1 > i1:
                a = cur[i1]
                b = cur[i1 + 1]
                c = cur[j1]
                d = cur[(j1 + 1) % n]
                gain = (
                    _dist(coords, a, b)
                    + _dist(coords, c, d)
                    - _dist(coords, a, c)
                    - _dist(coords, b, d)
                )
                if gain > 1e-12:
                    lo = i1 + 1
                    hi = j1
                    while lo < hi:
                        t2 = cur[lo]
                        cur[lo] = cur[hi]
                        cur[hi] = t2
                        lo += 1
                        hi -= 1
                    for idx in range(i1 + 1, j1 + 1):
                        pos[cur[idx]] = idx
                    committed = True
        else:
            # 3-opt: third cut sampled from the candidates of succ(u)
            su = cur[(pos[u] + 1) % n]
            cc2 = cand_cnt[su]
            if cc2 > 0:
                r2 = unif[e, 2] * cand_cum[su, cc2 - 1]
                pick2 = cc2 - 1
                for s in range(cc2):
                    if cand_cum[su, s] >= r2:
                        pick2 = s
                        break
                w = cand[su, pick2]
                p1 = pos[u]
                p2 = pos[v]
                p3 = pos[w]
                if p1 > p2:
                    t = p1
                    p1 = p2
                    p2 = t
                if p2 > p3:
                    t = p2
                    p2 = p3
                    p3 = t
                if p1 > p2:
                    t = p1
                    p1 = p2
                    p2 = t
                if p1 != p2 and p2 != p3:
                    x1 = cur[p1]
                    y1 = cur[p1 + 1]
                    x2 = cur[p2]
                    y2 = cur[p2 + 1]
                    x3 = cur[p3]
                    y3 = cur[(p3 + 1) % n]
                    removed = (
                        _dist(coords, x1, y1)
                        + _dist(coords, x2, y2)
                        + _dist(coords, x3, y3)
                    )
                    # the four reconnections that replace all three cut edges
                    g2 = removed - (
                        _dist(coords, x1, x2) + _dist(coords, y1, x3) + _dist(coords, y2, y3)
                    )
                    g3 = removed - (
                        _dist(coords, x1, y2) + _dist(coords, x3, y1) + _dist(coords, x2, y3)
                    )
                    g4 = removed - (
                        _dist(coords, x1, y2) + _dist(coords, x3, x2) + _dist(coords, y1, y3)
                    )
                    g5 = removed - (
                        _dist(coords, x1, x3) + _dist(coords, y2, y1) + _dist(coords, x2, y3)
                    )
                    variant = 2
                    gain = g2
                    if g3 > gain:
                        gain = g3
                        variant = 3
                    if g4 > gain:
                        gain = g4
                        variant = 4
                    if g5 > gain:
                        gain = g5
                        variant = 5
                    if gain > 1e-12:
                        w_i = 0
                        for idx in range(0, p1 + 1):
                            scratch[w_i] = cur[idx]
                            w_i += 1
                        if variant == 2:
                            # seg1 reversed, then seg2 reversed
                            for idx in range(p2, p1, -1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                            for idx in range(p3, p2, -1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                        elif variant == 3:
                            # seg2, then seg1
                            for idx in range(p2 + 1, p3 + 1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                            for idx in range(p1 + 1, p2 + 1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                        elif variant == 4:
                            # seg2, then seg1 reversed
                            for idx in range(p2 + 1, p3 + 1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                            for idx in range(p2, p1, -1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                        else:
                            # seg2 reversed, then seg1
                            for idx in range(p3, p2, -1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                            for idx in range(p1 + 1, p2 + 1):
                                scratch[w_i] = cur[idx]
                                w_i += 1
                        for idx in range(p3 + 1, n):
                            scratch[w_i] = cur[idx]
                            w_i += 1
                        for idx in range(n):
                            cur[idx] = scratch[idx]
                            pos[cur[idx]] = idx
                        committed = True
        if committed:
            cur_cost -= gain
            imp[u] += gain
            since = 0
            if cur_cost < best_cost:
                for idx in range(n):
                    best[idx] = cur[idx]
                best_cost = cur_cost
        else:
            since += 1
    return best, tour_len(coords, best), evals
