"""Jitted inner loops for the layered graph.

Adjacency layout (``graph`` tuple, passed to every kernel)::

    links0[n, :deg0[n]]         neighbors of node n at layer 0
    upper[b, :udeg[b]]          neighbors at layer l > 0, b = ubase[n] + l - 1

``ubase[n]`` is -1 for nodes whose level is 0. Node ids are int32 in storage
and int64 inside the kernels. Every ordering compares (distance, id) so ties
resolve toward the smaller id.

Kernels take an integer ``metric`` and call the module-level :func:`dist`, so
the compiled code for the built-in distances is cached on disk. User-supplied
distances get their own copy of the kernels from :func:`kernels_for`, where
``dist`` is rebound to the user function.
"""

import heapq
import types

import numba
import numpy as np

from .distance import cosine_distance, euclidean

# error codes returned by validate_graph
OK = 0
DEGREE_CAP = 1
ID_RANGE = 2
SELF_LOOP = 3
DUPLICATE = 4
LEVEL_MISMATCH = 5
ASYMMETRIC = 6


L2 = 0
COSINE = 1


@numba.njit(cache=True, nogil=True)
def dist(metric, a, b):
    if metric == COSINE:
        return cosine_distance(a, b)
    return euclidean(a, b)


@numba.njit(cache=True, nogil=True)
def neighbors(graph, node, layer):
    links0, deg0, upper, udeg, ubase = graph
    if layer == 0:
        return links0[node, : deg0[node]]
    b = ubase[node] + layer - 1
    return upper[b, : udeg[b]]


@numba.njit(cache=True, nogil=True)
def set_neighbors(graph, node, layer, ids, count):
    links0, deg0, upper, udeg, ubase = graph
    if layer == 0:
        for i in range(count):
            links0[node, i] = ids[i]
        deg0[node] = count
    else:
        b = ubase[node] + layer - 1
        for i in range(count):
            upper[b, i] = ids[i]
        udeg[b] = count


@numba.njit(cache=True, nogil=True)
def append_neighbor(graph, node, layer, e):
    links0, deg0, upper, udeg, ubase = graph
    if layer == 0:
        links0[node, deg0[node]] = e
        deg0[node] += 1
    else:
        b = ubase[node] + layer - 1
        upper[b, udeg[b]] = e
        udeg[b] += 1


@numba.njit(cache=True, nogil=True)
def remove_neighbor(graph, node, layer, e):
    """Drop ``e`` from the list of ``node``, preserving the order of the rest."""
    links0, deg0, upper, udeg, ubase = graph
    if layer == 0:
        row = links0[node]
        count = deg0[node]
    else:
        b = ubase[node] + layer - 1
        row = upper[b]
        count = udeg[b]
    j = 0
    for i in range(count):
        if row[i] != e:
            row[j] = row[i]
            j += 1
    if layer == 0:
        deg0[node] = j
    else:
        udeg[ubase[node] + layer - 1] = j


@numba.njit(cache=True, nogil=True)
def next_tag(visited, tagbox):
    tagbox[0] += 1
    if tagbox[0] >= 2147483647:
        visited[:] = 0
        tagbox[0] = 1
    return np.int32(tagbox[0])


@numba.njit(cache=True, nogil=True)
def pair_order(ids, dists):
    """Indices sorting the pairs ascending by (dist, id)."""
    by_id = np.argsort(ids, kind="mergesort")
    by_dist = np.argsort(dists[by_id], kind="mergesort")
    return by_id[by_dist]


@numba.njit(cache=True, nogil=True)
def search_layer(data, graph, metric, q, ep_ids, ep_dists, ef, layer, visited, tagbox, counter):
    tag = next_tag(visited, tagbox)
    candidates = [(0.0, np.int64(0))]
    candidates.pop()
    # max-heap through negation; the top is the furthest (dist, id)
    result = [(0.0, np.int64(0))]
    result.pop()

    for i in range(ep_ids.shape[0]):
        e = np.int64(ep_ids[i])
        if visited[e] == tag:
            continue
        visited[e] = tag
        d = np.float64(ep_dists[i])
        heapq.heappush(candidates, (d, e))
        heapq.heappush(result, (-d, -e))
        if len(result) > ef:
            heapq.heappop(result)

    while len(candidates) > 0:
        cd, c = heapq.heappop(candidates)
        if cd > -result[0][0]:
            break
        nbrs = neighbors(graph, c, layer)
        for j in range(nbrs.shape[0]):
            e = np.int64(nbrs[j])
            if visited[e] == tag:
                continue
            visited[e] = tag
            d = dist(metric, data[e], q)
            counter[0] += 1
            far_d = -result[0][0]
            far_id = -result[0][1]
            if len(result) < ef or d < far_d or (d == far_d and e < far_id):
                heapq.heappush(candidates, (d, e))
                heapq.heappush(result, (-d, -e))
                if len(result) > ef:
                    heapq.heappop(result)

    n = len(result)
    ids = np.empty(n, dtype=np.int64)
    ds = np.empty(n, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        neg_d, neg_id = heapq.heappop(result)
        ids[i] = -neg_id
        ds[i] = -neg_d
    return ids, ds


@numba.njit(cache=True, nogil=True)
def select_simple(cand_ids, cand_dists, m):
    order = pair_order(cand_ids, cand_dists)[:m]
    return cand_ids[order], cand_dists[order]


@numba.njit(cache=True, nogil=True)
def select_heuristic(
    data, graph, metric, base, base_id, cand_ids, cand_dists, m, layer, extend, keep_pruned, counter
):
    ids = cand_ids
    ds = cand_dists
    if extend:
        seen = set()
        seen.add(np.int64(base_id))
        for i in range(cand_ids.shape[0]):
            seen.add(np.int64(cand_ids[i]))
        extra_ids = []
        extra_ds = []
        for i in range(cand_ids.shape[0]):
            nbrs = neighbors(graph, cand_ids[i], layer)
            for j in range(nbrs.shape[0]):
                e = np.int64(nbrs[j])
                if e in seen:
                    continue
                seen.add(e)
                extra_ids.append(e)
                extra_ds.append(dist(metric, data[e], base))
                counter[0] += 1
        n_extra = len(extra_ids)
        if n_extra > 0:
            n0 = cand_ids.shape[0]
            ids = np.empty(n0 + n_extra, dtype=np.int64)
            ds = np.empty(n0 + n_extra, dtype=np.float64)
            ids[:n0] = cand_ids
            ds[:n0] = cand_dists
            for i in range(n_extra):
                ids[n0 + i] = extra_ids[i]
                ds[n0 + i] = extra_ds[i]

    order = pair_order(ids, ds)
    res_ids = np.empty(m, dtype=np.int64)
    res_ds = np.empty(m, dtype=np.float64)
    r = 0
    discarded = np.empty(order.shape[0], dtype=np.int64)
    n_disc = 0
    for t in range(order.shape[0]):
        if r >= m:
            break
        i = order[t]
        e = ids[i]
        de = ds[i]
        admit = True
        for j in range(r):
            counter[0] += 1
            if dist(metric, data[e], data[res_ids[j]]) <= de:
                admit = False
                break
        if admit:
            res_ids[r] = e
            res_ds[r] = de
            r += 1
        else:
            discarded[n_disc] = i
            n_disc += 1

    if keep_pruned:
        for t in range(n_disc):
            if r >= m:
                break
            i = discarded[t]
            res_ids[r] = ids[i]
            res_ds[r] = ds[i]
            r += 1
    return res_ids[:r], res_ds[:r]


@numba.njit(cache=True, nogil=True)
def shrink_to(data, graph, metric, node, layer, cand_ids, cap, heuristic, counter):
    """Re-select the list of ``node`` from ``cand_ids`` down to ``cap`` entries.

    Links that do not survive are removed from both endpoints. Pruned
    candidates are never back-filled here, so ``cap`` is a hard bound.
    """
    n = cand_ids.shape[0]
    cand_ds = np.empty(n, dtype=np.float64)
    base = data[node]
    for i in range(n):
        cand_ds[i] = dist(metric, data[cand_ids[i]], base)
        counter[0] += 1
    if heuristic:
        kept, _ = select_heuristic(
            data, graph, metric, base, node, cand_ids, cand_ds, cap, layer, False, False, counter
        )
    else:
        kept, _ = select_simple(cand_ids, cand_ds, cap)
    set_neighbors(graph, node, layer, kept, kept.shape[0])
    for i in range(n):
        x = cand_ids[i]
        survived = False
        for j in range(kept.shape[0]):
            if kept[j] == x:
                survived = True
                break
        if not survived:
            remove_neighbor(graph, x, layer, node)


@numba.njit(cache=True, nogil=True)
def connect(data, graph, metric, node, new, layer, cap, heuristic, counter):
    """Add ``new`` to the list of ``node``; shrink the list when it is full."""
    nbrs = neighbors(graph, node, layer)
    count = nbrs.shape[0]
    if count < cap:
        append_neighbor(graph, node, layer, new)
        return
    cand = np.empty(count + 1, dtype=np.int64)
    cand[:count] = nbrs
    cand[count] = new
    shrink_to(data, graph, metric, node, layer, cand, cap, heuristic, counter)


@numba.njit(cache=True, nogil=True)
def greedy_descent(data, graph, metric, q, ep, top, bottom, visited, tagbox, counter):
    """Walk from ``ep`` at layer ``top`` down to layer ``bottom`` with ef = 1.

    Returns the enter point (as one-element arrays) for layer ``bottom``.
    """
    ep_ids = np.empty(1, dtype=np.int64)
    ep_ds = np.empty(1, dtype=np.float64)
    ep_ids[0] = ep
    ep_ds[0] = dist(metric, data[ep], q)
    counter[0] += 1
    for layer in range(top, bottom, -1):
        ids, ds = search_layer(data, graph, metric, q, ep_ids, ep_ds, 1, layer, visited, tagbox, counter)
        ep_ids = ids[:1]
        ep_ds = ds[:1]
    return ep_ids, ep_ds


@numba.njit(cache=True, nogil=True)
def insert(
    data, graph, metric, node, level, ep, max_layer,
    m, mmax, mmax0, ef_construction, heuristic, extend, keep_pruned,
    visited, tagbox, counter,
):
    q = data[node]
    ep_ids, ep_ds = greedy_descent(
        data, graph, metric, q, ep, max_layer, min(max_layer, level), visited, tagbox, counter
    )
    for layer in range(min(max_layer, level), -1, -1):
        ids, ds = search_layer(
            data, graph, metric, q, ep_ids, ep_ds, ef_construction, layer, visited, tagbox, counter
        )
        if heuristic:
            sel, _ = select_heuristic(
                data, graph, metric, q, node, ids, ds, m, layer, extend, keep_pruned, counter
            )
        else:
            sel, _ = select_simple(ids, ds, m)
        set_neighbors(graph, node, layer, sel, sel.shape[0])
        cap = mmax0 if layer == 0 else mmax
        for i in range(sel.shape[0]):
            connect(data, graph, metric, sel[i], node, layer, cap, heuristic, counter)
        ep_ids = ids
        ep_ds = ds


@numba.njit(cache=True, nogil=True)
def knn_search(data, graph, metric, q, ep, max_layer, k, ef, visited, tagbox, counter):
    ep_ids, ep_ds = greedy_descent(data, graph, metric, q, ep, max_layer, 0, visited, tagbox, counter)
    ids, ds = search_layer(data, graph, metric, q, ep_ids, ep_ds, ef, 0, visited, tagbox, counter)
    return ids[:k], ds[:k]


@numba.njit(cache=True, nogil=True)
def many_distances(data, metric, q):
    out = np.empty(data.shape[0], dtype=np.float64)
    for i in range(data.shape[0]):
        out[i] = dist(metric, data[i], q)
    return out


@numba.njit(cache=True, nogil=True)
def validate_graph(levels, graph, n, mmax, mmax0):
    """Full structural scan. Returns (code, node, layer); code 0 means valid."""
    for u in range(n):
        for layer in range(levels[u] + 1):
            nbrs = neighbors(graph, u, layer)
            cap = mmax0 if layer == 0 else mmax
            if nbrs.shape[0] > cap:
                return DEGREE_CAP, u, layer
            for i in range(nbrs.shape[0]):
                v = nbrs[i]
                if v < 0 or v >= n:
                    return ID_RANGE, u, layer
                if v == u:
                    return SELF_LOOP, u, layer
                for j in range(i):
                    if nbrs[j] == v:
                        return DUPLICATE, u, layer
                if levels[v] < layer:
                    return LEVEL_MISMATCH, u, layer
                back = neighbors(graph, v, layer)
                found = False
                for j in range(back.shape[0]):
                    if back[j] == u:
                        found = True
                        break
                if not found:
                    return ASYMMETRIC, u, layer
    return OK, -1, -1


# every kernel that reaches dist(), directly or through another kernel
_METRIC_KERNELS = (
    "search_layer",
    "select_heuristic",
    "shrink_to",
    "connect",
    "greedy_descent",
    "insert",
    "knn_search",
    "many_distances",
)
BUILTIN = types.SimpleNamespace(**{name: globals()[name] for name in _METRIC_KERNELS})
_families = {}


def kernels_for(kind):
    """Kernel namespace for a distance kind (built-ins share the cached set)."""
    if kind.code in (L2, COSINE):
        return BUILTIN
    family = _families.get(kind.name)
    if family is None:
        user = kind.kernel

        @numba.njit(nogil=True)
        def user_dist(metric, a, b):
            return user(a, b)

        scope = dict(globals())
        scope["dist"] = user_dist
        for name in _METRIC_KERNELS:
            py = globals()[name].py_func
            fn = types.FunctionType(py.__code__, scope, name, py.__defaults__, py.__closure__)
            scope[name] = numba.njit(nogil=True)(fn)
        family = types.SimpleNamespace(**{name: scope[name] for name in _METRIC_KERNELS})
        _families[kind.name] = family
    return family
