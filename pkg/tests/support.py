"""Independent reference code for the tests.

Nothing here calls into the index kernels: the structural scan works from
the exported adjacency arrays, and the search trace is a plain-Python
transcription of the layer search over explicit adjacency lists.
"""

import heapq
import math

import numpy as np


def structural_problems(index):
    """List of violated invariants (empty when the structure is sound)."""
    problems = []
    n = index.n
    if n == 0:
        if index.enter_point is not None:
            problems.append("empty index has an enter point")
        return problems
    levels = np.asarray(index.levels, dtype=np.int64)
    if not (levels[index.enter_point] == index.max_layer == levels.max()):
        problems.append("enter point is not on the top layer")
    p = index.params
    for layer in range(index.max_layer + 1):
        nodes, links, degs = index.layer_arrays(layer)
        if not np.array_equal(nodes, np.flatnonzero(levels >= layer)):
            problems.append(f"layer {layer}: population mismatch")
        cap = p.mmax0 if layer == 0 else p.mmax
        if (degs > cap).any():
            problems.append(f"layer {layer}: degree above {cap}")
        valid = links >= 0
        if (links[valid] >= n).any():
            problems.append(f"layer {layer}: id out of range")
            continue
        owners = np.broadcast_to(nodes[:, None], links.shape)
        if (links[valid] == owners[valid]).any():
            problems.append(f"layer {layer}: self loop")
        srt = np.sort(np.where(valid, links, -1 - np.arange(links.shape[1])[None, :]), axis=1)
        if (srt[:, 1:] == srt[:, :-1]).any():
            problems.append(f"layer {layer}: duplicate link")
        if (levels[links[valid]] < layer).any():
            problems.append(f"layer {layer}: link to a node absent from the layer")
        u = owners[valid].astype(np.int64)
        v = links[valid].astype(np.int64)
        fwd = u * n + v
        rev = v * n + u
        if not np.isin(rev, fwd).all():
            problems.append(f"layer {layer}: asymmetric adjacency")
    return problems


def adjacency_lists(index):
    """adj[layer][node] -> list of neighbor ids, for every node in the layer."""
    out = []
    for layer in range(index.max_layer + 1):
        nodes, links, degs = index.layer_arrays(layer)
        out.append({int(u): [int(x) for x in links[i, : degs[i]]] for i, u in enumerate(nodes)})
    return out


def trace_layer(vectors, adj, q, enter, ef, dist, counter):
    """Layer search over dict adjacency; ``enter`` is a list of (dist, id)."""
    visited = {e for _, e in enter}
    candidates = list(enter)
    heapq.heapify(candidates)
    result = [(-d, -e) for d, e in enter]
    heapq.heapify(result)
    while len(result) > ef:
        heapq.heappop(result)
    while candidates:
        d_c, c = heapq.heappop(candidates)
        if d_c > -result[0][0]:
            break
        for e in adj[c]:
            if e in visited:
                continue
            visited.add(e)
            d = dist(vectors[e], q)
            counter[0] += 1
            if len(result) < ef or (d, e) < (-result[0][0], -result[0][1]):
                heapq.heappush(candidates, (d, e))
                heapq.heappush(result, (-d, -e))
                if len(result) > ef:
                    heapq.heappop(result)
    return sorted((-nd, -ne) for nd, ne in result)


def trace_knn(vectors, adj_by_layer, enter_point, max_layer, q, k, ef, dist):
    """(result [(dist, id)], distance evaluations) for a k-NN query."""
    counter = [0]
    enter = [(dist(vectors[enter_point], q), enter_point)]
    counter[0] += 1
    for layer in range(max_layer, 0, -1):
        enter = trace_layer(vectors, adj_by_layer[layer], q, enter, 1, dist, counter)[:1]
    res = trace_layer(vectors, adj_by_layer[0], q, enter, ef, dist, counter)
    return res[:k], counter[0]


def l2(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def exact_knn_ids(X, q, k):
    """Nearest ``k`` row ids by a full float64 sort, ties by id."""
    d = np.sqrt(((np.asarray(X, np.float64) - np.asarray(q, np.float64)) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(len(d)), d))
    return order[:k], d[order[:k]]


def is_connected(adj):
    nodes = list(adj)
    if not nodes:
        return True
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(nodes)


# acceptance outcome lines, collected for the terminal summary
ACCEPTANCE = {}


def report(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return ok
