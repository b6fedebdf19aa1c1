"""Clustering of style embeddings and the dataset splits built from it.

Seeding is kmeans++ (first centroid uniform, later ones drawn proportionally
to squared distance from the nearest chosen centroid), refinement is plain
Lloyd iteration with deterministic tie-breaking, and an empty cluster is
repaired by re-seeding it to the current farthest point, which keeps the
inertia sequence non-increasing.

Distances are squared Euclidean throughout, including the "distance" column
of clusters.csv.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-4

CENTROID_MAGIC = b"SSC1"


class ClusterError(Exception):
    pass


@dataclass
class LloydResult:
    centroids: np.ndarray          # (k, dim)
    assignments: np.ndarray        # (n,) int
    sq_distances: np.ndarray       # (n,) squared distance to own centroid
    inertia: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0


@dataclass
class CentroidModel:
    """Fitted clustering keyed by sample id."""

    centroids: np.ndarray
    assignments: dict[str, tuple[int, float]]  # id -> (cluster, sq distance)
    inertia: float
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def cluster_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for c, _d in self.assignments.values():
            sizes[c] += 1
        return sizes


@dataclass(frozen=True)
class SplitSpec:
    name: str
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ClusterError(f"split {self.name!r} repeats sample ids")


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ClusterError(f"points must be 2-D, got shape {pts.shape}")
    return pts


def kmeanspp_seed(points, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed k centroids; requires at least k distinct points."""
    pts = _as_points(points)
    n = pts.shape[0]
    if k < 1:
        raise ClusterError("k must be at least 1")
    distinct = np.unique(pts, axis=0).shape[0]
    if k > distinct:
        raise ClusterError(f"k={k} exceeds {distinct} distinct points")
    first = int(rng.integers(n))
    chosen = [first]
    d2 = np.sum((pts - pts[first]) ** 2, axis=1)
    for _i in range(1, k):
        probs = d2 / d2.sum()
        nxt = int(rng.choice(n, p=probs))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return pts[chosen].copy()


def _nearest(pts: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # squared distances to every centroid; argmin takes the lowest index on ties
    d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    return assign, d2[np.arange(pts.shape[0]), assign]


def lloyd(points, init_centroids, max_iter: int = DEFAULT_MAX_ITER,
          tol: float = DEFAULT_TOL) -> LloydResult:
    """Alternate assignment and centroid update from the given seeds.

    Stops when assignments are stable or the total squared centroid movement
    drops below tol**2. The history records inertia after every assignment
    pass; the returned assignments are nearest-centroid for the returned
    centroids."""
    pts = _as_points(points)
    centroids = np.array(init_centroids, dtype=np.float64, copy=True)
    k = centroids.shape[0]
    if centroids.ndim != 2 or centroids.shape[1] != pts.shape[1]:
        raise ClusterError("centroid/point dimension mismatch")

    history: list[float] = []
    assign = np.full(pts.shape[0], -1)
    it = 0
    for it in range(1, max_iter + 1):
        new_assign, d2 = _nearest(pts, centroids)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        history.append(float(d2.sum()))

        new_centroids = centroids.copy()
        for j in range(k):
            members = pts[assign == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
        # revive empty clusters at the farthest point; moving that point into
        # its own cluster can only lower inertia
        empties = [j for j in range(k) if not np.any(assign == j)]
        if empties:
            _a, cur_d2 = _nearest(pts, new_centroids)
            order = np.argsort(-cur_d2, kind="stable")
            for j, src in zip(empties, order):
                new_centroids[j] = pts[src]
        shift = float(((new_centroids - centroids) ** 2).sum())
        centroids = new_centroids
        if shift <= tol * tol:
            break

    # final pass so the returned assignments are nearest-centroid for the
    # returned centroids, whatever ended the loop
    assign, d2 = _nearest(pts, centroids)
    history.append(float(d2.sum()))
    return LloydResult(centroids, assign, d2, float(d2.sum()), history, it)


def best_of_restarts(points, k: int, n_init: int,
                     rng: np.random.Generator,
                     max_iter: int = DEFAULT_MAX_ITER,
                     tol: float = DEFAULT_TOL) -> LloydResult:
    """Lowest-inertia result over n_init independently seeded runs.

    Ties keep the earliest run, and each run draws from its own child
    generator so the set of runs is independent of n_init ordering."""
    if n_init < 1:
        raise ClusterError("n_init must be at least 1")
    best: LloydResult | None = None
    for child in rng.spawn(n_init):
        seeds = kmeanspp_seed(points, k, child)
        result = lloyd(points, seeds, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def fit_model(ids: list[str], points, k: int, n_init: int,
              rng: np.random.Generator, max_iter: int = DEFAULT_MAX_ITER,
              tol: float = DEFAULT_TOL) -> CentroidModel:
    pts = _as_points(points)
    if len(ids) != pts.shape[0]:
        raise ClusterError("one id per point required")
    result = best_of_restarts(pts, k, n_init, rng, max_iter, tol)
    assignments = {
        sid: (int(c), float(d))
        for sid, c, d in zip(ids, result.assignments, result.sq_distances)
    }
    return CentroidModel(result.centroids, assignments, result.inertia,
                         result.history)


def assign_nearest(model: CentroidModel, point) -> tuple[int, float]:
    """Nearest centroid for one vector; ties go to the lowest cluster index."""
    p = np.asarray(point, dtype=np.float64)
    dim = model.centroids.shape[1]
    if p.shape != (dim,):
        raise ClusterError(f"point has shape {p.shape}, centroids have dim {dim}")
    d2 = ((model.centroids - p) ** 2).sum(axis=1)
    c = int(np.argmin(d2))
    return c, float(d2[c])


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def _members_by_cluster(model: CentroidModel) -> list[list[tuple[float, str]]]:
    byc: list[list[tuple[float, str]]] = [[] for _ in range(model.k)]
    for sid, (c, d) in model.assignments.items():
        byc[c].append((d, sid))
    for lst in byc:
        lst.sort()  # ascending distance, ties by id
    return byc


def _check_ids_covered(model: CentroidModel, embedding_ids: set[str]) -> None:
    missing = [sid for sid in model.assignments if sid not in embedding_ids]
    if missing:
        raise ClusterError(
            f"{len(missing)} assigned ids missing from embeddings, first {missing[:3]}")


def make_cluster_splits(model: CentroidModel, embedding_ids: set[str],
                        n_per_cluster: int) -> list[SplitSpec]:
    """Per cluster, the n_per_cluster members closest to the centroid."""
    _check_ids_covered(model, embedding_ids)
    byc = _members_by_cluster(model)
    short = [(j, len(byc[j])) for j in range(model.k) if len(byc[j]) < n_per_cluster]
    if short:
        detail = ", ".join(f"cluster_{j} has {m}" for j, m in short)
        raise ClusterError(f"need {n_per_cluster} per cluster but {detail}")
    return [
        SplitSpec(f"cluster_{j}",
                  tuple(sid for _d, sid in byc[j][:n_per_cluster]))
        for j in range(model.k)
    ]


def equal_quotas(total: int, k: int) -> list[int]:
    """total split as evenly as possible; earlier clusters absorb remainders."""
    if total < 0 or k < 1:
        raise ClusterError("need total >= 0 and k >= 1")
    base, rem = divmod(total, k)
    return [base + (1 if j < rem else 0) for j in range(k)]


def proportional_quotas(total: int, proportions: list[float]) -> list[int]:
    """Round total*p_j half-up, then walk the residue out one unit at a time
    over clusters in descending-proportion order until the quotas sum to
    total exactly.

    Published splits built this way can disagree by a unit or two with tables
    whose rounded quotas do not sum to the total."""
    if total < 0 or not proportions:
        raise ClusterError("need total >= 0 and at least one proportion")
    if any(p < 0 for p in proportions):
        raise ClusterError("proportions must be non-negative")
    quotas = [int(np.floor(total * p + 0.5 + 1e-9)) for p in proportions]
    residue = total - sum(quotas)
    order = sorted(range(len(proportions)), key=lambda j: (-proportions[j], j))
    i = 0
    while residue != 0:
        j = order[i % len(order)]
        if residue > 0:
            quotas[j] += 1
            residue -= 1
        elif quotas[j] > 0:
            quotas[j] -= 1
            residue += 1
        i += 1
    return quotas


def make_baselines(model: CentroidModel, embedding_ids: set[str],
                   total: int) -> list[SplitSpec]:
    """The three reference splits of the same total size.

    baseline_0: equal quotas, nearest members per cluster.
    baseline_1: quotas proportional to cluster sizes (exact-total rounding),
    nearest members.
    baseline_2: equal quotas, farthest members per cluster."""
    _check_ids_covered(model, embedding_ids)
    byc = _members_by_cluster(model)
    sizes = [len(lst) for lst in byc]
    n = sum(sizes)
    if n == 0:
        raise ClusterError("model has no assignments")

    eq = equal_quotas(total, model.k)
    prop = proportional_quotas(total, [s / n for s in sizes])

    short = []
    for name, quotas in (("baseline_0", eq), ("baseline_1", prop), ("baseline_2", eq)):
        for j, q in enumerate(quotas):
            if sizes[j] < q:
                short.append(f"{name}/cluster_{j} needs {q} but has {sizes[j]}")
    if short:
        raise ClusterError("quota shortfall: " + "; ".join(short))

    def take_nearest(quotas):
        out = []
        for j, q in enumerate(quotas):
            out.extend(sid for _d, sid in byc[j][:q])
        return tuple(out)

    def take_farthest(quotas):
        out = []
        for j, q in enumerate(quotas):
            # farthest first; ties among equal distances keep id order
            rev = sorted(byc[j], key=lambda t: (-t[0], t[1]))
            out.extend(sid for _d, sid in rev[:q])
        return tuple(out)

    return [SplitSpec("baseline_0", take_nearest(eq)),
            SplitSpec("baseline_1", take_nearest(prop)),
            SplitSpec("baseline_2", take_farthest(eq))]


def write_split(path: str, split: SplitSpec) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sid in split.sample_ids:
            f.write(sid + "\n")


def read_split(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def silhouette(points, assignments, sample_cap: int,
               rng: np.random.Generator) -> float:
    """Mean silhouette coefficient, on a seeded subsample past sample_cap.

    Singleton clusters contribute 0 for their points; a clustering made of
    nothing but singletons is rejected."""
    pts = _as_points(points)
    assign = np.asarray(assignments)
    if pts.shape[0] != assign.shape[0]:
        raise ClusterError("one assignment per point required")
    clusters, counts = np.unique(assign, return_counts=True)
    if len(clusters) < 2:
        raise ClusterError("silhouette needs at least 2 clusters")
    if np.all(counts == 1):
        raise ClusterError("silhouette undefined for singleton-only clustering")

    n = pts.shape[0]
    if n > sample_cap:
        keep = np.sort(rng.choice(n, size=sample_cap, replace=False))
        pts, assign = pts[keep], assign[keep]
        n = sample_cap

    d = np.sqrt(np.maximum(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2), 0.0))
    total = 0.0
    for i in range(n):
        own = assign == assign[i]
        n_own = own.sum()
        if n_own <= 1:
            continue  # singleton in the subsample scores 0
        a = d[i, own].sum() / (n_own - 1)
        b = np.inf
        for c in np.unique(assign):
            if c == assign[i]:
                continue
            other = assign == c
            if other.any():
                b = min(b, d[i, other].mean())
        if not np.isfinite(b):
            continue
        denom = max(a, b)
        total += 0.0 if denom == 0.0 else (b - a) / denom
    return total / n


def project_2d(points) -> np.ndarray:
    """Top-2 principal components of the mean-centered points.

    The sign of each component makes its largest-magnitude loading positive;
    a zero-variance direction yields zero coordinates."""
    pts = _as_points(points)
    if pts.shape[0] < 2:
        raise ClusterError("projection needs at least 2 points")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / (pts.shape[0] - 1)
    vals, vecs = np.linalg.eigh(cov)
    out = np.zeros((pts.shape[0], 2))
    for comp in range(min(2, vecs.shape[1])):
        v = vecs[:, -(comp + 1)]
        lam = vals[-(comp + 1)]
        if lam <= 1e-12 * max(float(vals[-1]), 1e-300):
            continue
        pivot = int(np.argmax(np.abs(v)))
        if v[pivot] < 0:
            v = -v
        out[:, comp] = centered @ v
    return out


def projection_to_csv(path: str, ids: list[str], coords: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("sample_id,x,y\n")
        for sid, (x, y) in zip(ids, coords):
            f.write(f"{sid},{float(x)!r},{float(y)!r}\n")


def clusters_to_csv(path: str, model: CentroidModel) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("sample_id,cluster,distance\n")
        for sid in sorted(model.assignments):
            c, dist = model.assignments[sid]
            f.write(f"{sid},{c},{dist!r}\n")


# ---------------------------------------------------------------------------
# Centroid file format: magic, k, dim, float64 payload
# ---------------------------------------------------------------------------


def save_centroids(path: str, centroids: np.ndarray) -> None:
    c = np.ascontiguousarray(centroids, dtype="<f8")
    if c.ndim != 2:
        raise ClusterError("centroids must be 2-D")
    with open(path, "wb") as f:
        f.write(CENTROID_MAGIC)
        f.write(struct.pack("<II", c.shape[0], c.shape[1]))
        f.write(c.tobytes())


def load_centroids(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CENTROID_MAGIC:
            raise ClusterError("not a centroids file")
        header = f.read(8)
        if len(header) != 8:
            raise ClusterError("centroids file truncated")
        k, dim = struct.unpack("<II", header)
        payload = f.read(k * dim * 8)
        if len(payload) != k * dim * 8 or f.read(1):
            raise ClusterError("centroids file truncated or oversized")
    return np.frombuffer(payload, dtype="<f8").reshape(k, dim).copy()
