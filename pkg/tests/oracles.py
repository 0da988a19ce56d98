"""Slow, independent re-implementations used to cross-check the library.

Nothing here imports the code under test except plain data types.
"""
import math


def simple_paths(edges, start, goal):
    """Every simple path start -> goal, by plain depth-first search."""
    succ = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
    out = []

    def walk(node, path):
        if node == goal:
            out.append(tuple(path))
            return
        for nxt in succ.get(node, ()):
            if nxt not in path:
                walk(nxt, path + [nxt])

    walk(start, [start])
    return out


def flows_by_sensor(edges, bindings, goal):
    return {s: sorted(p for e in entries for p in simple_paths(edges, e, goal)) for s, entries in bindings.items()}


def catalog_counts(text):
    """Tallies straight from the pipe-separated lines (pattern, status, class columns)."""
    total = known = 0
    classes, known_by_pattern = {}, {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cols = [c.strip() for c in line.split("|")]
        total += 1
        if cols[4] == "known":
            known += 1
            for p in cols[0].split(","):
                known_by_pattern[p] = known_by_pattern.get(p, 0) + 1
        else:
            classes[cols[5]] = classes.get(cols[5], 0) + 1
    return total, known, classes, known_by_pattern


def popcount_distance(d1: bytes, d2: bytes) -> int:
    return sum(bin(x ^ y).count("1") for x, y in zip(d1, d2))


def match_similarity(a_kps, b_kps, max_distance, scale_ratio, bin_width, min_group_size):
    """Mutual nearest neighbours (first index wins ties), scale gate, angle histogram."""
    dist = [[popcount_distance(p.descriptor, q.descriptor) for q in b_kps] for p in a_kps]
    if not a_kps or not b_kps:
        return 0, 0, 0

    def argmin(vals):
        best = 0
        for k, v in enumerate(vals):
            if v < vals[best]:
                best = k
        return best

    pairs = []
    for i in range(len(a_kps)):
        j = argmin(dist[i])
        col = [dist[r][j] for r in range(len(a_kps))]
        if argmin(col) != i or dist[i][j] > max_distance:
            continue
        r = b_kps[j].scale / a_kps[i].scale
        if 1 / scale_ratio <= r <= scale_ratio:
            pairs.append((i, j))
    n_bins = int(math.ceil(2 * math.pi / bin_width))
    hist = [0] * n_bins
    for i, j in pairs:
        rel = b_kps[j].angle - a_kps[i].angle
        rel = (rel + math.pi) % (2 * math.pi) - math.pi
        hist[int(math.floor((rel + math.pi) / bin_width)) % n_bins] += 1
    big = [h for h in hist if h >= min_group_size]
    return len(pairs), sum(big), len(big)


def voxel_clusters(points, voxel):
    """Union-find over point pairs whose voxel indices differ by at most one per axis."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    cells = [tuple(math.floor(c / voxel) for c in p) for p in points]
    for i in range(n):
        for j in range(i + 1, n):
            if max(abs(u - v) for u, v in zip(cells[i], cells[j])) <= 1:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(points[i])
    return list(groups.values())


def centroid(points):
    n = len(points)
    return tuple(sum(p[k] for p in points) / n for k in range(3))
