"""Gaussian sampling machinery.

Domains are finite unions of axis-aligned rectangles; grids place nodes on
uniform per-axis lattices that include rectangle corners, so maxima on
boundaries stay representable. The joint covariance of (X1 at A1 nodes,
X2 at A2 nodes) is assembled densely and factorised by Cholesky with an
escalating-jitter policy; a factorisation failure beyond 1e-10 jitter is
reported as such, since it usually witnesses an invalid cross-correlation.

Determinism contract: replicate r of a run is a function of (seed, r)
only. Replicates are generated in fixed blocks of _BLOCK; block b draws
its noise from default_rng([seed, b]) regardless of how many replicates
are requested or how many worker threads process blocks, so any thread
count reproduces identical streams.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .model import BivariateMaternModel, cross_corr
from .specfun import MaternParams, matern


class NotPositiveDefiniteError(RuntimeError):
    """Cholesky failed after maximum jitter (validity-condition witness)."""


_BLOCK = 4096          # replicate block size; part of the determinism contract
_JITTERS = (0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10)


# ---------------------------------------------------------------------------
# rectangle-union geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned box: prod_j [lo_j, hi_j]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same dimension")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"negative side length in {self.lo}..{self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def measure(self) -> float:
        out = 1.0
        for l, h in zip(self.lo, self.hi):
            out *= h - l
        return out

    def intersect(self, other: "Rect") -> "Rect | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(h < l for l, h in zip(lo, hi)):
            return None
        return Rect(lo, hi)


def _union_measure(boxes: Sequence[Rect]) -> float:
    """Exact Lebesgue measure of a union of boxes (sweep recursion)."""
    boxes = [b for b in boxes if b.measure() > 0.0]
    if not boxes:
        return 0.0
    if boxes[0].dim == 1:
        spans = sorted((b.lo[0], b.hi[0]) for b in boxes)
        total, cur_lo, cur_hi = 0.0, spans[0][0], spans[0][1]
        for lo, hi in spans[1:]:
            if lo > cur_hi:
                total += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        return total + (cur_hi - cur_lo)
    cuts = sorted({b.lo[0] for b in boxes} | {b.hi[0] for b in boxes})
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (left + right)
        slab = [
            Rect(b.lo[1:], b.hi[1:])
            for b in boxes
            if b.lo[0] <= mid <= b.hi[0]
        ]
        if slab:
            total += (right - left) * _union_measure(slab)
    return total


def _intersect_unions(A: Sequence[Rect], B: Sequence[Rect]) -> list[Rect]:
    out = []
    for a in A:
        for b in B:
            r = a.intersect(b)
            if r is not None:
                out.append(r)
    return out


def subtract_box(cell: Rect, box: Rect) -> list[Rect]:
    """cell minus box, as boxes overlapping at most on faces."""
    if _covers(box, cell):
        return []
    if cell.intersect(box) is None:
        return [cell]
    pieces = []
    lo, hi = list(cell.lo), list(cell.hi)
    for j in range(cell.dim):
        if box.lo[j] > lo[j]:
            piece_hi = hi.copy()
            piece_hi[j] = box.lo[j]
            pieces.append(Rect(tuple(lo), tuple(piece_hi)))
            lo[j] = box.lo[j]
        if box.hi[j] < hi[j]:
            piece_lo = lo.copy()
            piece_lo[j] = box.hi[j]
            pieces.append(Rect(tuple(piece_lo), tuple(hi)))
            hi[j] = box.hi[j]
    return pieces


def _covers(box: Rect, cell: Rect) -> bool:
    return all(bl <= cl and ch <= bh
               for bl, bh, cl, ch in zip(box.lo, box.hi, cell.lo, cell.hi))


def union_covers(boxes: Sequence[Rect], cell: Rect) -> bool:
    """True iff cell is covered by the union (exact box arithmetic)."""
    remaining = [cell]
    for b in boxes:
        nxt: list[Rect] = []
        for piece in remaining:
            if _covers(b, piece):
                continue
            nxt.extend(p for p in subtract_box(piece, b) if p.measure() > 0.0)
        remaining = nxt
        if not remaining:
            return True
    return not remaining


@dataclass(frozen=True)
class DomainPair:
    """Domains A1, A2 as rectangle unions, with the split structure of the
    zero-measure-intersection case: the first split_M coordinates carry the
    overlapping parts, trailing coordinates are touching intervals
    [S_j, T_j] / [T_j, R_j]."""

    A1: tuple[Rect, ...]
    A2: tuple[Rect, ...]
    dim_N: int
    split_M: int | None = None

    def __post_init__(self):
        if not self.A1 or not self.A2:
            raise ValueError("A1 and A2 must be nonempty rectangle unions")
        for r in (*self.A1, *self.A2):
            if r.dim != self.dim_N:
                raise ValueError("rectangle dimension mismatch with dim_N")
        if self.split_M is not None:
            if not (0 <= self.split_M <= self.dim_N - 1):
                raise ValueError("split_M must lie in [0, N-1]")
            self._validate_split()

    def _validate_split(self):
        M = self.split_M
        for j in range(M, self.dim_N):
            s1 = {(r.lo[j], r.hi[j]) for r in self.A1}
            s2 = {(r.lo[j], r.hi[j]) for r in self.A2}
            if len(s1) != 1 or len(s2) != 1:
                raise ValueError(
                    f"split structure needs a single interval in axis {j}"
                )
            (S, T1) = next(iter(s1))
            (T2, R) = next(iter(s2))
            if not (S <= T1 == T2 <= R):
                raise ValueError(
                    f"axis {j}: need S <= T <= R with shared T, "
                    f"got [{S}, {T1}] / [{T2}, {R}]"
                )

    def mes_intersection(self) -> float:
        """N-dimensional measure of A1 intersect A2."""
        return _union_measure(_intersect_unions(self.A1, self.A2))

    def mes_shared_face(self) -> float:
        """M-dimensional measure of the projected intersection for the
        split case (mes_0 is identically 1 by convention)."""
        if self.split_M is None:
            raise ValueError("mes_shared_face requires split_M")
        M = self.split_M
        if M == 0:
            return 1.0
        P1 = [Rect(r.lo[:M], r.hi[:M]) for r in self.A1]
        P2 = [Rect(r.lo[:M], r.hi[:M]) for r in self.A2]
        return _union_measure(_intersect_unions(P1, P2))


def _box_nodes(box: Rect, points_per_axis: int) -> np.ndarray:
    axes = [
        np.linspace(box.lo[j], box.hi[j], points_per_axis)
        for j in range(box.dim)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def _union_nodes(boxes: Sequence[Rect], points_per_axis: int) -> np.ndarray:
    nodes = np.vstack([_box_nodes(b, points_per_axis) for b in boxes])
    nodes = np.unique(nodes, axis=0)  # dedupe shared corners; sorts rows
    return nodes


@dataclass(frozen=True)
class GridSpec:
    domain: DomainPair
    points_per_axis: int
    nodes1: np.ndarray = field(init=False, repr=False, compare=False)
    nodes2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (isinstance(self.points_per_axis, int) and self.points_per_axis >= 1):
            raise ValueError("points_per_axis must be a positive integer")
        object.__setattr__(
            self, "nodes1", _union_nodes(self.domain.A1, self.points_per_axis)
        )
        object.__setattr__(
            self, "nodes2", _union_nodes(self.domain.A2, self.points_per_axis)
        )

    @property
    def n1(self) -> int:
        return self.nodes1.shape[0]

    @property
    def n2(self) -> int:
        return self.nodes2.shape[0]


@dataclass(frozen=True)
class FieldSample:
    x1: np.ndarray
    x2: np.ndarray
    seed: int
    replicate_index: int


# ---------------------------------------------------------------------------
# covariance assembly and sampling
# ---------------------------------------------------------------------------

def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def build_covariance(m: BivariateMaternModel, g: GridSpec) -> np.ndarray:
    """Joint covariance of (X1 at A1 nodes, X2 at A2 nodes).

    Exactly symmetric; unit diagonal for the standardized model.
    """
    s, t = g.nodes1, g.nodes2
    c11 = m.sigma1**2 * matern(_pairwise_dist(s, s), MaternParams(m.nu1, m.a1))
    c22 = m.sigma2**2 * matern(_pairwise_dist(t, t), MaternParams(m.nu2, m.a2))
    c12 = (
        m.rho * m.sigma1 * m.sigma2
        * matern(_pairwise_dist(s, t), MaternParams(m.nu12, m.a12))
    )
    top = np.hstack([c11, c12])
    bot = np.hstack([c12.T, c22])
    return np.vstack([top, bot])


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with jitter escalating 1e-14 .. 1e-10."""
    for eps in _JITTERS:
        try:
            c = cov if eps == 0.0 else cov + eps * np.eye(cov.shape[0])
            return np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        "covariance is not positive semidefinite within jitter 1e-10; "
        "for a bivariate Matern model this usually means rho exceeds the "
        "validity bound"
    )


def _noise_block(seed: int, block: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, block]).standard_normal((n, _BLOCK))


def block_map(
    n_blocks: int, fn: Callable[[int], object], threads: int = 1
) -> list:
    """Apply fn to block indices 0..n_blocks-1, optionally thread-parallel.

    Results come back in block order, so reductions downstream are
    independent of the worker count.
    """
    if threads <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n_blocks)))


def sample_blocks(
    L: np.ndarray, seed: int, count: int, threads: int = 1
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start_index, samples) blocks; samples has shape (n, take)."""
    if count <= 0:
        raise ValueError("count must be positive")
    if not (isinstance(seed, int) and seed >= 0):
        raise ValueError("seed must be a nonnegative integer")
    n = L.shape[0]
    n_blocks = (count + _BLOCK - 1) // _BLOCK

    def one(b: int) -> np.ndarray:
        return L @ _noise_block(seed, b, n)

    done = 0
    # process in modest chunks so thread parallelism does not hoard memory
    chunk = max(threads, 1) * 4
    for lo in range(0, n_blocks, chunk):
        blocks = block_map(min(chunk, n_blocks - lo), lambda i, lo=lo: one(lo + i), threads)
        for mat in blocks:
            take = min(_BLOCK, count - done)
            yield done, mat[:, :take]
            done += take


def cholesky_sample(
    cov: np.ndarray, grid: GridSpec, seed: int, count: int, threads: int = 1
) -> Iterator[FieldSample]:
    """Stream `count` zero-mean Gaussian field samples with covariance cov.

    Replicate r is bit-reproducible from (seed, r) alone.
    """
    L = cholesky_factor(cov)
    n1 = grid.n1
    for start, mat in sample_blocks(L, seed, count, threads):
        for j in range(mat.shape[1]):
            yield FieldSample(
                x1=mat[:n1, j].copy(),
                x2=mat[n1:, j].copy(),
                seed=seed,
                replicate_index=start + j,
            )


# ---------------------------------------------------------------------------
# fractional Brownian motion paths (covariance |s|^a + |t|^a - |t-s|^a,
# twice the standard fBm normalisation)
# ---------------------------------------------------------------------------

def fbm_grid(horizon_T: float, eta: float) -> np.ndarray:
    if not (horizon_T > 0 and eta > 0):
        raise ValueError("horizon_T and eta must be positive")
    n = round(horizon_T / eta)
    if abs(n * eta - horizon_T) > 1e-9 * horizon_T or n < 1:
        raise ValueError(f"eta={eta} does not divide horizon_T={horizon_T}")
    return np.arange(n + 1) * eta


def fbm_covariance(alpha: float, t: np.ndarray) -> np.ndarray:
    """Cov(chi(s), chi(t)) = |s|^a + |t|^a - |t-s|^a on positive nodes.

    This is twice the standard fBm covariance: Var chi(t) = 2 t^alpha.
    """
    ta = t**alpha
    return ta[:, None] + ta[None, :] - np.abs(t[:, None] - t[None, :]) ** alpha


def fbm_cholesky_factor(alpha: float, horizon_T: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """(grid incl. 0, lower factor of the covariance on grid[1:])."""
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha must be in (0, 2), got {alpha}")
    t = fbm_grid(horizon_T, eta)
    L = cholesky_factor(fbm_covariance(alpha, t[1:]))
    return t, L


def sample_fbm(
    alpha: float, horizon_T: float, eta: float, seed: int, count: int,
    threads: int = 1,
) -> Iterator[np.ndarray]:
    """Stream paths of chi on {0, eta, ..., T}; chi(0) = 0 on every path."""
    t, L = fbm_cholesky_factor(alpha, horizon_T, eta)
    for start, mat in sample_blocks(L, seed, count, threads):
        for j in range(mat.shape[1]):
            path = np.empty(len(t))
            path[0] = 0.0
            path[1:] = mat[:, j]
            yield path


# ---------------------------------------------------------------------------
# binary dump (magic "BGRF", u32 node count, u32 replicate count, u32 pad;
# then row-major float64 little-endian, one replicate per row)
# ---------------------------------------------------------------------------

_MAGIC = b"BGRF"


def write_sample_dump(path: str, samples: np.ndarray) -> None:
    samples = np.ascontiguousarray(samples, dtype="<f8")
    if samples.ndim != 2:
        raise ValueError("samples must be a (replicates, nodes) array")
    reps, nodes = samples.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", _MAGIC, nodes, reps, 0))
        fh.write(samples.tobytes(order="C"))


def read_sample_dump(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError("truncated dump header")
        magic, nodes, reps, _ = struct.unpack("<4sIII", header)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nodes * reps:
        raise ValueError("dump payload size mismatch")
    return data.reshape(reps, nodes).copy()
