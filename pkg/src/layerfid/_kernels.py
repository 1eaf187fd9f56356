"""Compiled depth-first kernels over self-avoiding paths.

Graphs are passed as a padded adjacency matrix ``adj`` (row ``u`` lists the
neighbours of ``u`` in ascending order) and a degree vector ``deg``.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _reach(adj, deg, visited, end, stack, mark, stamp):
    """Upper bound on how many more vertices a path leaving ``end`` can visit.

    Counts the unvisited vertices reachable from ``end``; of those with at
    most one usable neighbour (dead ends) only one can be on the path.
    """
    cnt = 0
    dead = 0
    top = 0
    for i in range(deg[end]):
        v = adj[end, i]
        if not visited[v] and mark[v] != stamp:
            mark[v] = stamp
            stack[top] = v
            top += 1
    while top > 0:
        top -= 1
        u = stack[top]
        cnt += 1
        d = 0
        for i in range(deg[u]):
            v = adj[u, i]
            if v == end or not visited[v]:
                d += 1
            if not visited[v] and mark[v] != stamp:
                mark[v] = stamp
                stack[top] = v
                top += 1
        if d <= 1:
            dead += 1
    if dead > 1:
        cnt -= dead - 1
    return cnt


@njit(cache=True, nogil=True)
def count_from(adj, deg, usable, N, s):
    """Directed self-avoiding paths of ``N`` vertices starting at ``s``.

    Returns ``(all, canonical)`` where ``canonical`` counts only paths whose
    last vertex is larger than ``s``.
    """
    n = deg.shape[0]
    if not usable[s]:
        return 0, 0
    if N == 1:
        return 1, 1
    visited = ~usable.copy()
    path = np.empty(N, np.int64)
    it = np.zeros(N, np.int64)
    stack = np.empty(n, np.int64)
    mark = np.zeros(n, np.int64)
    stamp = 0
    total = 0
    canon = 0
    path[0] = s
    visited[s] = True
    k = 1
    while k > 0:
        u = path[k - 1]
        if it[k - 1] < deg[u]:
            v = adj[u, it[k - 1]]
            it[k - 1] += 1
            if visited[v]:
                continue
            if k + 1 == N:
                total += 1
                if v > s:
                    canon += 1
                continue
            visited[v] = True
            need = N - k - 1
            stamp += 1
            if _reach(adj, deg, visited, v, stack, mark, stamp) < need:
                visited[v] = False
                continue
            path[k] = v
            it[k] = 0
            k += 1
        else:
            visited[u] = False
            k -= 1
    return total, canon


@njit(cache=True, nogil=True)
def _better(score, path, top_scores, top_paths, j):
    # (score desc, qubit sequence asc) ordering
    if score > top_scores[j]:
        return True
    if score < top_scores[j]:
        return False
    for i in range(path.shape[0]):
        if path[i] < top_paths[j, i]:
            return True
        if path[i] > top_paths[j, i]:
            return False
    return False


@njit(cache=True, nogil=True)
def _insert(score, path, top_scores, top_paths, filled, K):
    pos = filled
    while pos > 0 and _better(score, path, top_scores, top_paths, pos - 1):
        pos -= 1
    if pos >= K:
        return filled
    last = filled if filled < K else K - 1
    for j in range(last, pos, -1):
        top_scores[j] = top_scores[j - 1]
        top_paths[j, :] = top_paths[j - 1, :]
    top_scores[pos] = score
    top_paths[pos, :] = path
    return filled + 1 if filled < K else K


@njit(cache=True, nogil=True)
def best_from(adj, deg, usable, inc, qlog, N, starts, K, slack, top_scores, top_paths, filled):
    """Branch-and-bound search for the ``K`` best canonical ``N``-paths.

    ``inc[u, i]`` is the log-score increment for stepping from ``u`` to
    ``adj[u, i]`` (edge term plus the new endpoint's 1Q term); ``qlog[s]``
    seeds a path starting at ``s``. The running top list is updated in place
    and its new fill level returned.
    """
    n = deg.shape[0]
    maxinc = -np.inf
    for u in range(n):
        for i in range(deg[u]):
            if inc[u, i] > maxinc:
                maxinc = inc[u, i]
    path = np.empty(N, np.int64)
    scores = np.empty(N, np.float64)
    it = np.zeros(N, np.int64)
    stack = np.empty(n, np.int64)
    mark = np.zeros(n, np.int64)
    stamp = 0
    for si in range(starts.shape[0]):
        s = starts[si]
        if not usable[s]:
            continue
        if N == 1:
            path[0] = s
            filled = _insert(qlog[s], path, top_scores, top_paths, filled, K)
            continue
        visited = ~usable.copy()
        path[0] = s
        scores[0] = qlog[s]
        visited[s] = True
        it[0] = 0
        k = 1
        while k > 0:
            u = path[k - 1]
            if it[k - 1] < deg[u]:
                i = it[k - 1]
                v = adj[u, i]
                it[k - 1] += 1
                if visited[v] or inc[u, i] == -np.inf:
                    continue
                cur = scores[k - 1] + inc[u, i]
                remaining = N - k - 1
                if filled == K and cur + remaining * maxinc < top_scores[K - 1] - slack:
                    continue
                if remaining == 0:
                    if v > s:
                        path[k] = v
                        filled = _insert(cur, path, top_scores, top_paths, filled, K)
                    continue
                visited[v] = True
                stamp += 1
                if _reach(adj, deg, visited, v, stack, mark, stamp) < remaining:
                    visited[v] = False
                    continue
                path[k] = v
                scores[k] = cur
                it[k] = 0
                k += 1
            else:
                visited[u] = False
                k -= 1
    return filled
