"""Independent slow reference implementations used by the tests."""
import math


def euclid(a, b):
    acc = 0.0
    for x, y in zip(a, b):
        acc += (x - y) * (x - y)
    return math.sqrt(acc)


def greedy_traversal(points, farthest=True):
    """Brute-force farthest-first (or closest-first) traversal.

    Seed pair: max (min) distance over i < j, lowest (i, j) on ties. Then
    repeatedly append the unchosen point whose minimum distance to the chosen
    ones is max (min), lowest index on ties. Returns [(index, distance)],
    the first distance being 0.0.
    """
    pts = [[float(v) for v in p] for p in points]
    n = len(pts)
    if n == 0:
        return []
    if n == 1:
        return [(0, 0.0)]
    dist = [[euclid(pts[i], pts[j]) for j in range(n)] for i in range(n)]
    better = (lambda a, b: a > b) if farthest else (lambda a, b: a < b)
    best = None
    for i in range(n):
        for j in range(i + 1, n):
            if best is None or better(dist[i][j], best[0]):
                best = (dist[i][j], i, j)
    d, i, j = best
    order = [(i, 0.0), (j, d)]
    # nearest chosen distance per point, refreshed as points are chosen
    near = [min(dist[c][i], dist[c][j]) for c in range(n)]
    chosen = {i, j}
    while len(order) < n:
        pick = None
        for c in range(n):
            if c not in chosen and (pick is None or better(near[c], pick[0])):
                pick = (near[c], c)
        order.append((pick[1], pick[0]))
        chosen.add(pick[1])
        near = [min(near[c], dist[c][pick[1]]) for c in range(n)]
    return order


def ngram_set(s, n_min, n_max):
    out = set()
    for i in range(len(s)):
        for j in range(i + n_min, min(i + n_max, len(s)) + 1):
            out.add(bytes(s[i:j]))
    return out


def jaccard(a, b):
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)
