"""Foreground-restricted SLIC over token features.

Clusters working-resolution foreground pixels with the combined distance

    d2 = ||f_a - f_b||^2 / sigma_f^2 + compactness^2 * ||p_a - p_b||^2 / s^2

where sigma_f is the per-image RMS feature deviation over the foreground
(making compactness encoder-independent) and s = sqrt(foreground_area /
n_segments) is the expected grid interval.  Centers are seeded on a
hexagonally offset grid over the foreground bounding box and moved onto
the nearest foreground pixel.  A post-pass merges undersized connected
components into their largest neighbor and caps the segment count at the
request, so the result always partitions the foreground into labels
1..n_actual with 1 <= n_actual <= min(n_segments, foreground pixels).

Everything is plain elementwise numpy with fixed reduction order, so
results are bit-identical across runs and caller thread counts.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import NoForegroundError, ValidationError
from .keypoints import SegmentMap, WorkingGrid

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _seed_centers(coords: np.ndarray, k: int) -> np.ndarray:
    """Pick k seed pixel indices into coords, hex-grid over the bounding box."""
    rmin, cmin = coords.min(axis=0)
    rmax, cmax = coords.max(axis=0)
    bh = float(rmax - rmin + 1)
    bw = float(cmax - cmin + 1)

    nr = max(1, int(round(np.sqrt(k * bh / bw))))
    nr = min(nr, k)
    nc = int(np.ceil(k / nr))
    row_step = bh / nr
    col_step = bw / nc

    pts = np.empty((nr * nc, 2), dtype=np.float64)
    i = 0
    for r_idx in range(nr):
        r = rmin + (r_idx + 0.5) * row_step
        offset = 0.5 * col_step if r_idx % 2 == 1 else 0.0
        for c_idx in range(nc):
            c = cmin + ((c_idx + 0.5) * col_step + offset) % bw
            pts[i] = (r, c)
            i += 1

    # Snap every grid point to its nearest foreground pixel (first minimum
    # wins, and coords are in row-major order, so ties are deterministic).
    d2 = ((pts[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    pixel_idx = d2.argmin(axis=1)

    seen: set[int] = set()
    unique = [int(p) for p in pixel_idx if not (p in seen or seen.add(p))]
    if len(unique) > k:
        sel = np.round(np.linspace(0, len(unique) - 1, k)).astype(int)
        unique = [unique[int(s)] for s in dict.fromkeys(sel)]
    return np.asarray(unique, dtype=np.int64)


def _component_pass(
    assign_img: np.ndarray,
    fg: np.ndarray,
    feats_img: np.ndarray,
    n_segments: int,
    n_centers: int,
    npix: int,
) -> tuple[np.ndarray, int]:
    """Connectivity enforcement: absorb undersized orphans, cap segment count."""
    h, w = assign_img.shape
    comp_img = np.full((h, w), -1, dtype=np.int64)
    total = 0
    for lab in range(n_centers):
        m = assign_img == lab
        if not m.any():
            continue
        lbl, n = ndimage.label(m, structure=_CROSS)
        comp_img[m] = lbl[m] + total - 1  # component ids start at 0
        total += n

    flat = comp_img.ravel()
    valid = flat >= 0
    sizes = np.bincount(flat[valid], minlength=total).astype(np.int64)
    first_pixel = np.full(total, np.iinfo(np.int64).max, dtype=np.int64)
    comp_order, first_idx = np.unique(flat[valid], return_index=True)
    positions = np.flatnonzero(valid)
    first_pixel[comp_order] = positions[first_idx]

    feat_dim = feats_img.shape[-1]
    feat_sum = np.zeros((total, feat_dim), dtype=np.float64)
    fg_flat = fg.ravel()
    np.add.at(feat_sum, flat[valid], feats_img.reshape(-1, feat_dim)[fg_flat])

    adj: list[set[int]] = [set() for _ in range(total)]

    def link(a: np.ndarray, b: np.ndarray) -> None:
        sel = (a >= 0) & (b >= 0) & (a != b)
        for x, y in zip(a[sel].ravel(), b[sel].ravel()):
            adj[x].add(int(y))
            adj[y].add(int(x))

    link(comp_img[:, :-1], comp_img[:, 1:])
    link(comp_img[:-1, :], comp_img[1:, :])

    parent = np.arange(total, dtype=np.int64)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = int(parent[x])
        return x

    alive = set(range(total))

    def merge(src: int, dst: int) -> None:
        parent[src] = dst
        sizes[dst] += sizes[src]
        feat_sum[dst] += feat_sum[src]
        first_pixel[dst] = min(first_pixel[dst], first_pixel[src])
        for nb in adj[src]:
            nb = find(int(nb))
            if nb != dst and nb != src:
                adj[dst].add(nb)
                adj[nb].discard(src)
                adj[nb].add(dst)
        adj[dst].discard(src)
        adj[dst].discard(dst)
        adj[src] = set()
        alive.discard(src)

    threshold = npix / (4.0 * n_segments)

    # Pass 1: orphan components below the size threshold join their largest
    # 4-adjacent neighbor.  Isolated orphans (no foreground neighbor) stay.
    while len(alive) > 1:
        candidates = [
            c for c in alive if sizes[c] < threshold and any(find(n) != c for n in adj[c])
        ]
        if not candidates:
            break
        src = min(candidates, key=lambda c: (sizes[c], first_pixel[c]))
        neighbors = {find(n) for n in adj[src]} - {src}
        dst = max(neighbors, key=lambda c: (sizes[c], -first_pixel[c]))
        merge(src, dst)

    # Pass 2: never exceed the requested segment count.  Merge the smallest
    # component into its feature-nearest neighbor, preferring 4-adjacent
    # targets; only isolated components may merge across background.
    while len(alive) > n_segments:
        src = min(alive, key=lambda c: (sizes[c], first_pixel[c]))
        neighbors = {find(n) for n in adj[src]} - {src}
        pool = neighbors if neighbors else (alive - {src})
        src_mean = feat_sum[src] / sizes[src]

        def feat_gap(c: int) -> float:
            diff = feat_sum[c] / sizes[c] - src_mean
            return float((diff * diff).sum())

        dst = min(pool, key=lambda c: (feat_gap(c), first_pixel[c]))
        merge(src, dst)

    # Relabel survivors 1..n_actual in order of first row-major appearance.
    roots = np.array([find(int(c)) for c in range(total)], dtype=np.int64)
    order = sorted(alive, key=lambda c: first_pixel[c])
    rank = np.zeros(total, dtype=np.int32)
    for new_id, root in enumerate(order, start=1):
        rank[root] = new_id

    labels = np.zeros((h, w), dtype=np.int32)
    labels[fg] = rank[roots[comp_img[fg]]]
    return labels, len(order)


def slic_segment(
    work: WorkingGrid,
    n_segments: int,
    compactness: float = 1.0,
    max_iters: int = 10,
    seed: int = 0,
) -> SegmentMap:
    """Partition the foreground of a working grid into feature-coherent segments.

    Deterministic for fixed inputs; `seed` is accepted for interface stability
    but the procedure is seeding-free (grid initialization is deterministic).
    """
    if n_segments < 1:
        raise ValidationError("n_segments must be >= 1")
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    if compactness < 0:
        raise ValidationError("compactness must be >= 0")

    fg = work.mask == 1
    npix = int(fg.sum())
    if npix == 0:
        raise NoForegroundError(f"{work.image_id}: no foreground")

    coords = np.argwhere(fg).astype(np.float64)  # row-major
    feats = work.features[fg].astype(np.float64)
    k = min(n_segments, npix)

    mean_feat = feats.mean(axis=0)
    sig2 = float(((feats - mean_feat) ** 2).sum(axis=1).mean())
    inv_sig2 = 1.0 / sig2 if sig2 > 0 else 1.0
    s2 = npix / float(n_segments)
    w_spatial = (compactness * compactness) / s2

    seed_idx = _seed_centers(coords.astype(np.int64), k)
    pos = coords[seed_idx].copy()
    cf = feats[seed_idx].copy()
    n_centers = pos.shape[0]

    assign = np.zeros(npix, dtype=np.int64)
    d2 = np.empty((npix, n_centers), dtype=np.float64)
    for _ in range(max_iters):
        for ci in range(n_centers):
            df = feats - cf[ci]
            dp = coords - pos[ci]
            d2[:, ci] = (df * df).sum(axis=1) * inv_sig2 + (dp * dp).sum(axis=1) * w_spatial
        new_assign = d2.argmin(axis=1)
        for ci in range(n_centers):
            members = new_assign == ci
            if members.any():
                pos[ci] = coords[members].mean(axis=0)
                cf[ci] = feats[members].mean(axis=0)
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign

    assign_img = np.full(fg.shape, -1, dtype=np.int64)
    assign_img[fg] = assign
    labels, n_actual = _component_pass(
        assign_img, fg, work.features.astype(np.float64), n_segments, n_centers, npix
    )
    return SegmentMap(labels=labels, n_actual=n_actual, requested=n_segments)
