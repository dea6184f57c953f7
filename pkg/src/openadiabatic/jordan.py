"""Numerical Jordan decomposition with bi-orthonormal chain bases, and its
continuation along a grid of normalized times.

Conventions
-----------
Blocks are ordered by eigenvalue (real part descending, then imaginary part
descending) and, within one eigenvalue, by size descending.  Column
``start + j`` of ``S`` is the right chain vector ``D^{(j)}`` of a block, so
``L D^{(j)} = D^{(j-1)} + lam D^{(j)}``.  Row ``start + i`` of ``S^{-1}`` is the
left chain covector ``E^{(i)}`` with ``E^{(i)} L = E^{(i+1)} + lam E^{(i)}``.

Gauge: every chain is scaled so that its eigenvector ``D^{(0)}`` has unit
Euclidean norm and its largest component is real-positive.  The top vector
of each chain is chosen orthogonal to the lower generalized eigenspace, which
removes the remaining freedom of adding lower-grade vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment

from .errors import (
    EigenvalueCrossingError,
    JordanError,
    StructureAmbiguityError,
    StructureChangeError,
    TrackingError,
)
from .lindblad import TimeDependentSuperoperator, supermatrix

LOCAL_FD_STEP = 1e-5

TOL_CLUSTER = 1e-8
TOL_RANK = 1e-10
TOL_RECONSTRUCTION = 1e-8
GAP_FLOOR = 1e-6
# eigenvalues of an m-fold defective cluster spread like (cond * eps)^(1/m)
CLUSTER_CONDITION = 1e4
CLUSTER_RADIUS_CAP = 1e-2
MAX_CLUSTER_SEARCH = 8
AMBIGUITY_BAND = 1e2


@dataclass(frozen=True)
class JordanBlock:
    eigenvalue: complex
    size: int
    start: int

    @property
    def columns(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True, eq=False)
class JordanDecomposition:
    """``L = S J S^{-1}`` with chain bases in the columns of ``S`` and rows of ``S_inv``."""

    blocks: tuple
    S: np.ndarray
    S_inv: np.ndarray
    tol_cluster: float = TOL_CLUSTER
    tol_rank: float = TOL_RANK
    residuals: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.S.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([b.eigenvalue for b in self.blocks])

    @property
    def block_sizes(self) -> list:
        return [b.size for b in self.blocks]

    def jordan_matrix(self) -> np.ndarray:
        J = np.zeros((self.size, self.size), dtype=complex)
        for b in self.blocks:
            idx = np.arange(b.start, b.start + b.size)
            J[idx, idx] = b.eigenvalue
            J[idx[:-1], idx[1:]] = 1.0
        return J

    def right(self, alpha: int, j: int) -> np.ndarray:
        """Right chain vector ``D_alpha^{(j)}``."""
        b = self.blocks[alpha]
        if not 0 <= j < b.size:
            raise IndexError(f"block {alpha} has size {b.size}, no grade {j}")
        return self.S[:, b.start + j]

    def left(self, alpha: int, i: int) -> np.ndarray:
        """Left chain covector ``E_alpha^{(i)}`` (as a row, no conjugation)."""
        b = self.blocks[alpha]
        if not 0 <= i < b.size:
            raise IndexError(f"block {alpha} has size {b.size}, no grade {i}")
        return self.S_inv[b.start + i, :]

    def clusters(self) -> list:
        """Lists of block indices sharing one eigenvalue, in block order."""
        groups, last = [], None
        for k, b in enumerate(self.blocks):
            if last is not None and b.eigenvalue == last:
                groups[-1].append(k)
            else:
                groups.append([k])
            last = b.eigenvalue
        return groups

    def index(self, alpha: int, j: int) -> int:
        return self.blocks[alpha].start + j


def _components(vals: np.ndarray, r: float) -> list:
    """Single-linkage groups of points closer than ``r``."""
    n = len(vals)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    close = np.abs(vals[:, None] - vals[None, :]) <= r
    for a in range(n):
        for b in range(a + 1, n):
            if close[a, b]:
                parent[find(a)] = find(b)
    groups = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    return list(groups.values())


def _cluster_radius(m: int, scale: float, tol_cluster: float) -> float:
    eps = np.finfo(float).eps
    return scale * min(CLUSTER_RADIUS_CAP, max(tol_cluster, (CLUSTER_CONDITION * eps) ** (1.0 / m)))


def _cluster(vals, idx, m_max, scale, tol_cluster) -> list:
    remaining = list(idx)
    groups = []
    for m in range(min(m_max, len(remaining)), 1, -1):
        if len(remaining) < m:
            continue
        comps = _components(vals[remaining], _cluster_radius(m, scale, tol_cluster))
        taken = set()
        for c in comps:
            if len(c) >= m:
                groups.append([remaining[k] for k in c])
                taken.update(c)
        remaining = [x for k, x in enumerate(remaining) if k not in taken]
    groups.extend([x] for x in remaining)
    return groups


def _split(vals, idx) -> list:
    """Two groups obtained by cutting the longest single-linkage edge."""
    pts = np.column_stack([vals[idx].real, vals[idx].imag])
    labels = fcluster(linkage(pts, method="single"), 2, criterion="maxclust")
    return [[x for x, lab in zip(idx, labels) if lab == c] for c in (1, 2)]


def _segre_from_ranks(ranks: list, m: int) -> dict:
    """Block counts per size from ranks of N^0..N^m (``ranks[0] = m``)."""
    at_least = [ranks[k - 1] - ranks[k] for k in range(1, m + 1)] + [0]
    if ranks[m] != 0 or any(a < b for a, b in zip(at_least, at_least[1:])) or at_least[0] < 0:
        return {}
    return {k: at_least[k - 1] - at_least[k] for k in range(1, m + 1) if at_least[k - 1] - at_least[k] > 0}


def _null_space(A: np.ndarray, rank: int) -> np.ndarray:
    _, _, vh = np.linalg.svd(A)
    return vh[rank:].conj().T


def _orth(A: np.ndarray) -> np.ndarray:
    if A.shape[1] == 0:
        return A
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    return u[:, s > 1e-12 * max(s[0], 1e-300)]


def _cluster_chains(L, members_sel, m, tol_rank):
    """Chains for one eigenvalue cluster; returns (mu, [(size, chain columns)])."""
    T, Z, sdim = sla.schur(L, output="complex", sort=members_sel)
    if sdim != m:
        raise JordanError(f"invariant subspace has dimension {sdim}, expected {m}")
    Q = Z[:, :m]
    T11 = T[:m, :m]
    mu = complex(np.trace(T11) / m)
    N = T11 - mu * np.eye(m)
    # round-off in N is ~eps ||L||, amplified by ||N|| per further power
    scale = max(np.linalg.norm(L, 2), np.finfo(float).tiny)
    n_norm = np.linalg.norm(N, 2)

    ranks, powers, svals = [m], [np.eye(m, dtype=complex)], []
    P = np.eye(m, dtype=complex)
    for k in range(1, m + 1):
        P = N @ P
        powers.append(P)
        s = np.linalg.svd(P, compute_uv=False)
        thr = tol_rank * scale * n_norm ** (k - 1)
        svals.append(s)
        if np.any((s > thr / AMBIGUITY_BAND) & (s < thr * AMBIGUITY_BAND)):
            raise StructureAmbiguityError(
                f"singular values of (L - {mu:.6g} I)^{k} fall near the rank threshold {thr:.3e}",
                singular_values=svals,
            )
        ranks.append(int(np.sum(s > thr)))
    counts = _segre_from_ranks(ranks, m)
    if not counts:
        raise StructureAmbiguityError(
            f"ranks {ranks} of powers of (L - {mu:.6g} I) admit no Jordan structure", singular_values=svals
        )

    kernels = {k: _null_space(powers[k], ranks[k]) for k in range(0, m + 1)}
    chains = []
    chosen_tops = []
    for k in sorted(counts, reverse=True):
        # grade-(k-1) members of longer chains already span part of ker N^k mod ker N^{k-1}
        longer = [c[:, k - 1] for size, c in chains if size > k]
        W = _orth(np.column_stack([kernels[k - 1], *longer])) if (kernels[k - 1].shape[1] or longer) else np.zeros((m, 0))
        K = kernels[k]
        Pk = K - W @ (W.conj().T @ K)
        u, s, _ = np.linalg.svd(Pk, full_matrices=False)
        if len(s) < counts[k] or s[counts[k] - 1] < 1e-8:
            raise StructureAmbiguityError(f"cannot complete chains of length {k} at eigenvalue {mu:.6g}")
        for t in range(counts[k]):
            top = u[:, t]
            cols = [top]
            for _ in range(k - 1):
                cols.append(N @ cols[-1])
            c = np.column_stack(cols[::-1])
            chains.append((k, c))
            chosen_tops.append(top)
    out = []
    for size, c in chains:
        D = Q @ c
        v0 = D[:, 0]
        norm = np.linalg.norm(v0)
        if norm == 0:
            raise StructureAmbiguityError(f"degenerate chain at eigenvalue {mu:.6g}")
        out.append((size, D * (_canonical_phase(v0) / norm)))
    return mu, out


def _canonical_phase(v: np.ndarray) -> complex:
    """Unit factor making the (first) largest-magnitude component real-positive."""
    a = np.abs(v)
    k = int(np.argmax(a >= a.max() * (1 - 1e-9)))
    return np.conj(v[k]) / a[k]


def _residuals(L, S, S_inv, J) -> dict:
    nrm = max(np.linalg.norm(L), np.finfo(float).tiny)
    return {
        "reconstruction": float(np.linalg.norm(S @ J @ S_inv - L) / nrm),
        "biorthonormality": float(np.abs(S_inv @ S - np.eye(len(S))).max()),
        "right_chain": float(np.linalg.norm(L @ S - S @ J) / (nrm * np.linalg.norm(S))),
        "left_chain": float(np.linalg.norm(S_inv @ L - J @ S_inv) / (nrm * np.linalg.norm(S_inv))),
    }


def jordan_decompose(L, tol_cluster: float = TOL_CLUSTER, tol_rank: float = TOL_RANK) -> JordanDecomposition:
    """Jordan decomposition of a square matrix.

    Parameters
    ----------
    L : array_like
        Square matrix, real or complex.
    tol_cluster : float
        Relative distance (in units of ``||L||_F``) below which eigenvalues are
        always merged.  Defective clusters are additionally merged within their
        expected round-off spread.
    tol_rank : float
        Relative singular-value threshold for ranks of ``(L - lam I)^k``.

    Raises
    ------
    StructureAmbiguityError
        When rank decisions are too close to the threshold or inconsistent.
    JordanError
        When the result fails the reconstruction check.
    """
    L = np.asarray(L)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise JordanError(f"expected a square matrix, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise JordanError("matrix has non-finite entries")
    if tol_cluster <= 0 or tol_rank <= 0:
        raise JordanError("tolerances must be positive")
    L = L.astype(complex)
    n = L.shape[0]
    scale = np.linalg.norm(L)
    if scale == 0:
        eye = np.eye(n, dtype=complex)
        blocks = tuple(JordanBlock(0j, 1, k) for k in range(n))
        res = {"reconstruction": 0.0, "biorthonormality": 0.0, "right_chain": 0.0, "left_chain": 0.0}
        return JordanDecomposition(blocks, eye, eye.copy(), tol_cluster, tol_rank, res)

    vals = np.linalg.eigvals(L)
    # entries carry the ambiguity that caused a split, reported if the split fails too
    queue = [(g, None) for g in _cluster(vals, range(n), MAX_CLUSTER_SEARCH, scale, tol_cluster)]
    found = []
    while queue:
        group, origin = queue.pop()
        members = set(group)

        def sel(x, members=members):
            return int(np.argmin(np.abs(vals - x))) in members

        try:
            mu, chains = _cluster_chains(L, sel, len(group), tol_rank)
        except StructureAmbiguityError as err:
            if len(group) == 1:
                raise (origin or err) from None
            queue.extend((g, origin or err) for g in _split(vals, group))
            continue
        except JordanError:
            if origin is None:
                raise
            raise origin from None
        found.append((mu, chains))

    found.sort(key=lambda item: (-round(item[0].real, 12), -round(item[0].imag, 12)))
    cols, blocks = [], []
    for mu, chains in found:
        for size, c in sorted(chains, key=lambda sc: -sc[0]):
            blocks.append(JordanBlock(mu, size, len(cols)))
            cols.extend(c.T)
    S = np.column_stack(cols)
    S_inv = np.linalg.inv(S)
    dec = JordanDecomposition(tuple(blocks), S, S_inv, tol_cluster, tol_rank)
    res = _residuals(L, S, S_inv, dec.jordan_matrix())
    object.__setattr__(dec, "residuals", res)
    if res["reconstruction"] > TOL_RECONSTRUCTION:
        raise JordanError(f"reconstruction residual {res['reconstruction']:.3e} exceeds {TOL_RECONSTRUCTION}")
    return dec


def chain_bases(dec: JordanDecomposition) -> tuple:
    """Right chains ``[[D_a^(0), ...], ...]`` and left chains ``[[E_a^(0), ...], ...]``."""
    right = [[dec.S[:, b.start + j] for j in range(b.size)] for b in dec.blocks]
    left = [[dec.S_inv[b.start + i, :] for i in range(b.size)] for b in dec.blocks]
    return right, left


# ---------------------------------------------------------------- tracking


@dataclass(frozen=True, eq=False)
class TrackedDecomposition:
    """Gauge-fixed Jordan decompositions on a grid of normalized times.

    Block ``alpha`` refers to the same eigenvalue path at every node.
    ``gauge`` holds, per node, the transforms applied on top of the canonical
    per-node decomposition as ``(block indices, matrix)`` pairs; phases of
    single chains appear as 1x1 matrices.
    """

    grid: np.ndarray
    decompositions: tuple
    generator: object = None
    gauge: tuple = ()

    @property
    def total_time(self) -> float:
        return self.generator.total_time if self.generator is not None else 1.0

    @property
    def blocks(self) -> tuple:
        return self.decompositions[0].blocks

    @property
    def block_sizes(self) -> list:
        return [b.size for b in self.blocks]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def eigenvalues(self) -> np.ndarray:
        """(nodes, blocks) complex eigenvalue paths."""
        return np.array([d.eigenvalues for d in self.decompositions])

    @property
    def S(self) -> np.ndarray:
        return np.array([d.S for d in self.decompositions])

    @property
    def S_inv(self) -> np.ndarray:
        return np.array([d.S_inv for d in self.decompositions])

    def cluster_labels(self) -> np.ndarray:
        """Per-block label; equal labels share an eigenvalue at every node."""
        labels = np.zeros(self.n_blocks, dtype=int)
        for c, group in enumerate(self.decompositions[0].clusters()):
            labels[group] = c
        return labels

    def same_eigenvalue(self, alpha: int, beta: int) -> bool:
        lab = self.cluster_labels()
        return lab[alpha] == lab[beta]

    def right(self, alpha: int, j: int) -> np.ndarray:
        return np.array([d.right(alpha, j) for d in self.decompositions])

    def left(self, alpha: int, i: int) -> np.ndarray:
        return np.array([d.left(alpha, i) for d in self.decompositions])

    def gauge_factors(self) -> np.ndarray:
        """(nodes, blocks) diagonal of the applied gauge transforms."""
        out = np.ones((len(self.grid), self.n_blocks), dtype=complex)
        for k, transforms in enumerate(self.gauge):
            for idx, U in transforms:
                out[k, list(idx)] = np.diag(U)
        return out


def _reorder(dec: JordanDecomposition, order: list) -> tuple:
    """Blocks of ``dec`` rearranged so that new block k is old block order[k]."""
    cols, blocks = [], []
    for old in order:
        b = dec.blocks[old]
        blocks.append(JordanBlock(b.eigenvalue, b.size, len(cols)))
        cols.extend(range(b.start, b.start + b.size))
    return blocks, dec.S[:, cols], dec.S_inv[cols, :]


def _cluster_gap(vals: np.ndarray, labels: np.ndarray) -> float:
    gap = np.inf
    for a in range(len(vals)):
        for b in range(len(vals)):
            if labels[a] != labels[b]:
                gap = min(gap, abs(vals[a] - vals[b]))
    return gap


def _match(prev: JordanDecomposition, new: JordanDecomposition, interval):
    """Permutation of new blocks onto previous blocks and the gauge transforms."""
    n = len(prev.blocks)
    pv, nv = prev.eigenvalues, new.eigenvalues
    cost = np.abs(pv[:, None] - nv[None, :])
    sizes_p = np.array(prev.block_sizes)
    sizes_n = np.array(new.block_sizes)
    big = 1e300
    cost = np.where(sizes_p[:, None] == sizes_n[None, :], cost, big)
    rows, cols = linear_sum_assignment(cost)
    if np.any(cost[rows, cols] >= big):
        raise StructureChangeError(
            f"block sizes change between s={interval[0]:.6g} and s={interval[1]:.6g}: "
            f"{sorted(prev.block_sizes)} -> {sorted(new.block_sizes)}",
            interval=interval,
        )
    order = [0] * n
    for r, c in zip(rows, cols):
        order[r] = int(c)

    labels = np.zeros(n, dtype=int)
    for c, group in enumerate(prev.clusters()):
        labels[group] = c
    gap = min(_cluster_gap(pv, labels), _cluster_gap(nv[order], labels))
    jump = float(cost[rows, cols].max()) if n else 0.0
    if np.isfinite(gap) and jump >= 0.5 * gap:
        raise EigenvalueCrossingError(
            f"eigenvalue paths cannot be matched between s={interval[0]:.6g} and s={interval[1]:.6g} "
            f"(step {jump:.3e} vs gap {gap:.3e}); eigenvalues cross or the grid is too coarse",
            interval=interval,
        )

    blocks, S, S_inv = _reorder(new, order)
    transforms = []
    for group in prev.clusters():
        idx = [i for b in group for i in range(prev.blocks[b].start, prev.blocks[b].start + prev.blocks[b].size)]
        if len(group) == 1:
            ov = np.vdot(prev.S[:, idx].ravel(order="F"), S[:, idx].ravel(order="F"))
            c = np.conj(ov) / abs(ov) if abs(ov) > 0 else 1.0
            S[:, idx] *= c
            S_inv[idx, :] /= c
            transforms.append(((group[0],), np.array([[c]])))
        elif all(prev.blocks[b].size == 1 for b in group):
            # degenerate eigenvectors: unitary rotation closest to the previous basis
            u, _, vh = np.linalg.svd(S[:, idx].conj().T @ prev.S[:, idx])
            U = u @ vh
            S[:, idx] = S[:, idx] @ U
            S_inv[idx, :] = U.conj().T @ S_inv[idx, :]
            transforms.append((tuple(group), U))
        else:
            # blocks of equal size: pair by overlap, then fix one phase per chain
            starts_p = [prev.blocks[b].start for b in group]
            starts_n = [blocks[b].start for b in group]
            sz = [prev.blocks[b].size for b in group]
            ovl = np.zeros((len(group), len(group)))
            for a in range(len(group)):
                for b in range(len(group)):
                    if sz[a] == sz[b]:
                        ovl[a, b] = -abs(np.vdot(prev.S[:, starts_p[a]], S[:, starts_n[b]]))
                    else:
                        ovl[a, b] = big
            ra, rb = linear_sum_assignment(ovl)
            newcols = S.copy()
            newrows = S_inv.copy()
            for a, b in zip(ra, rb):
                src = slice(starts_n[b], starts_n[b] + sz[b])
                dst = slice(starts_n[a], starts_n[a] + sz[a])
                newcols[:, dst] = S[:, src]
                newrows[dst, :] = S_inv[src, :]
            S, S_inv = newcols, newrows
            for a, b in enumerate(group):
                sl = slice(starts_p[a], starts_p[a] + sz[a])
                ov = np.vdot(prev.S[:, sl].ravel(order="F"), S[:, sl].ravel(order="F"))
                c = np.conj(ov) / abs(ov) if abs(ov) > 0 else 1.0
                S[:, sl] *= c
                S_inv[sl, :] /= c
                transforms.append(((b,), np.array([[c]])))
    # eigenvalues along the matched order, block layout identical to prev
    fixed = tuple(JordanBlock(blocks[k].eigenvalue, prev.blocks[k].size, prev.blocks[k].start) for k in range(n))
    return JordanDecomposition(fixed, S, S_inv, new.tol_cluster, new.tol_rank, dict(new.residuals)), tuple(transforms)


def track_decomposition(
    gen: TimeDependentSuperoperator,
    grid,
    tol_cluster: float = TOL_CLUSTER,
    tol_rank: float = TOL_RANK,
    gap_floor: float = GAP_FLOOR,
) -> TrackedDecomposition:
    """Decompose ``L(s)`` at every grid node and connect the results.

    Blocks are matched to the previous node by an optimal assignment on
    eigenvalue distance and every chain is re-phased so that its overlap
    with the previous chain is real-positive (left chains get the inverse
    factor).  Degenerate eigenvectors are aligned by a unitary rotation.

    Raises
    ------
    EigenvalueCrossingError
        Two eigenvalue paths come closer than ``gap_floor * ||L||_F``, merge,
        or cannot be matched unambiguously between nodes.
    StructureChangeError
        Block sizes change between nodes.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise TrackingError("grid needs at least two nodes")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
        raise TrackingError("grid must be strictly increasing within [0, 1]")

    def node(s):
        L = supermatrix(gen, s)
        dec = jordan_decompose(L, tol_cluster, tol_rank)
        vals = np.array([c[0] for c in [[dec.blocks[g[0]].eigenvalue] for g in dec.clusters()]])
        if len(vals) > 1:
            d = np.abs(vals[:, None] - vals[None, :])[~np.eye(len(vals), dtype=bool)].min()
            if d < gap_floor * np.linalg.norm(L):
                raise EigenvalueCrossingError(
                    f"eigenvalue gap {d:.3e} below the floor at s={s:.6g}", interval=(s, s)
                )
        return dec

    first = node(grid[0])
    ident = tuple(((k,), np.array([[1.0 + 0j]])) for k in range(len(first.blocks)))
    if gen.is_constant:
        decs = (first,) * len(grid)
        return TrackedDecomposition(grid, decs, gen, (ident,) * len(grid))

    decs, gauges = [first], [ident]
    n_clusters = len(first.clusters())
    for k in range(1, len(grid)):
        interval = (float(grid[k - 1]), float(grid[k]))
        new = node(grid[k])
        if len(new.clusters()) != n_clusters:
            cls = EigenvalueCrossingError if len(new.clusters()) < n_clusters else StructureChangeError
            raise cls(
                f"number of distinct eigenvalues changes between s={interval[0]:.6g} and s={interval[1]:.6g}: "
                f"{n_clusters} -> {len(new.clusters())}",
                interval=interval,
            )
        if sorted(new.block_sizes) != sorted(decs[-1].block_sizes):
            raise StructureChangeError(
                f"block sizes change between s={interval[0]:.6g} and s={interval[1]:.6g}: "
                f"{sorted(decs[-1].block_sizes)} -> {sorted(new.block_sizes)}",
                interval=interval,
            )
        fixed, transforms = _match(decs[-1], new, interval)
        decs.append(fixed)
        gauges.append(transforms)
    return TrackedDecomposition(grid, tuple(decs), gen, tuple(gauges))


# ------------------------------------------------------- basis derivatives


def _uniform(grid: np.ndarray) -> bool:
    h = np.diff(grid)
    return bool(np.all(np.abs(h - h.mean()) <= 1e-9 * h.mean()))


def grid_derivative(values: np.ndarray, grid, order: int = 2) -> np.ndarray:
    """d/ds along axis 0 by finite differences.

    ``order=2`` uses second-order central differences (one-sided at the ends,
    any grid); ``order=4`` uses five-point stencils and needs a uniform grid
    with at least five nodes.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values)
    if order == 2:
        if len(grid) < 3:
            return np.gradient(values, grid, axis=0, edge_order=1)
        return np.gradient(values, grid, axis=0, edge_order=2)
    if order != 4:
        raise ValueError("order must be 2 or 4")
    if len(grid) < 5 or not _uniform(grid):
        raise ValueError("fourth-order differences need a uniform grid with at least 5 nodes")
    h = grid[1] - grid[0]
    f = values
    out = np.empty_like(f, dtype=np.result_type(f, float))
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def basis_derivative(tracked: TrackedDecomposition, alpha: int, j: int, k: int, order: int = 2) -> np.ndarray:
    """``dD_alpha^{(j)}/ds`` at grid node ``k`` from the gauge-fixed chains."""
    D = tracked.right(alpha, j)
    return grid_derivative(D, tracked.grid, order)[k]


def basis_derivatives(tracked: TrackedDecomposition, order: int = 2) -> np.ndarray:
    """``dS/ds`` at every node, shape (nodes, n, n)."""
    return grid_derivative(tracked.S, tracked.grid, order)


def coupling_matrices(tracked: TrackedDecomposition, order: int = 2) -> np.ndarray:
    """``K[k][a, b] = <<E_a | dD_b/ds>>`` at node k, in flattened chain indices."""
    return np.einsum("kab,kbc->kac", tracked.S_inv, basis_derivatives(tracked, order))


def local_basis_derivative(tracked: TrackedDecomposition, k: int, h: float = LOCAL_FD_STEP) -> np.ndarray:
    """``dS/ds`` at node k from extra decompositions at ``s +- h``.

    The neighbours are gauge-aligned to the node's chains, so the result is
    independent of the grid spacing.  One-sided second-order stencils are
    used within ``2h`` of the interval ends.
    """
    gen = tracked.generator
    dec = tracked.decompositions[k]
    s = float(tracked.grid[k])

    def at(x):
        new = jordan_decompose(supermatrix(gen, x), dec.tol_cluster, dec.tol_rank)
        return _match(dec, new, (s, x))[0].S

    if s - h < 0.0:
        return (-3 * dec.S + 4 * at(s + h) - at(s + 2 * h)) / (2 * h)
    if s + h > 1.0:
        return (3 * dec.S - 4 * at(s - h) + at(s - 2 * h)) / (2 * h)
    return (at(s + h) - at(s - h)) / (2 * h)


def local_coupling_matrices(tracked: TrackedDecomposition, h: float = LOCAL_FD_STEP) -> np.ndarray:
    """``S^{-1} dS/ds`` at every node from :func:`local_basis_derivative`."""
    return np.array(
        [tracked.S_inv[k] @ local_basis_derivative(tracked, k, h) for k in range(len(tracked.grid))]
    )
