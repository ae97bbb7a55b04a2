"""Synthetic instances: Tucker-structured acquisition sets, coverage-safe
observation sampling, partial-overlap masks, and small benchmark graphs.

Everything is deterministic given the seed; a single generator is drawn
from in a fixed order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InfeasibleFraction
from .graph import EdgeSet, ObservationSet, build_graph
from .tensor import DenseTensor, FiberMatrix, TuckerFactors, matricize, refold, tucker_synthesize


@dataclass(frozen=True)
class SynthSpec:
    """Third-order acquisition-set generator settings."""

    i1: int
    i2: int
    i3: int
    r: int
    lambda_count: int = 2
    missing_frac: float = 0.4
    core_mean: float = 3.0
    core_std: float = 3.0
    scale_mean: float = 0.0
    scale_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.i1, self.i2, self.i3) < 1:
            raise ValueError("extents must be positive")
        if not 1 <= self.r <= min(self.i1, self.i2):
            raise ValueError(f"rank must lie in 1..{min(self.i1, self.i2)}, got {self.r}")
        if self.lambda_count < 1:
            raise ValueError("need at least one acquisition")
        if not 0.0 <= self.missing_frac:
            raise ValueError("missing fraction must be nonnegative")
        if self.missing_frac * self.lambda_count > self.lambda_count - 1:
            raise InfeasibleFraction(
                f"missing fraction {self.missing_frac} cannot satisfy coverage "
                f"with {self.lambda_count} acquisition(s)"
            )

    @property
    def n(self) -> int:
        return self.i1 * self.i2


def orthonormal_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """(rows, cols) matrix with orthonormal rows: QR of a Gaussian draw,
    sign-fixed so the result is canonical."""
    if rows > cols:
        raise ValueError(f"cannot fit {rows} orthonormal rows in dimension {cols}")
    gauss = rng.standard_normal((cols, rows))
    q, rfac = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(rfac))
    return np.ascontiguousarray(q.T)


def generate_acquisitions(s: SynthSpec) -> list[DenseTensor]:
    """Acquisition 1 is a Tucker synthesis with factor ranks (r, r, i3) and
    a Gaussian core; each further acquisition scales the fiber channels by
    a fresh diagonal Gaussian draw.

    Because the factors have orthonormal rows, the synthesis energy grows
    linearly with the rank setting; acquisition 1 is rescaled to unit
    entry standard deviation so completion errors stay comparable across
    rank sweeps. The channel-scaling relation between acquisitions is
    unaffected.
    """
    rng = np.random.default_rng(s.seed)
    u1 = orthonormal_rows(rng, s.r, s.i1)
    u2 = orthonormal_rows(rng, s.r, s.i2)
    u3 = orthonormal_rows(rng, s.i3, s.i3)
    core = DenseTensor.from_array(
        rng.normal(s.core_mean, s.core_std, size=(s.r, s.r, s.i3))
    )
    first = tucker_synthesize(TuckerFactors(core, (u1, u2, u3)))
    scale = float(first.values.std())
    if scale > 0:
        first = DenseTensor(first.shape, first.values / scale)
    shape = (s.i1, s.i2, s.i3)
    out = [first]
    fibers = matricize(first, 3)
    for _ in range(1, s.lambda_count):
        scales = rng.normal(s.scale_mean, s.scale_std, size=s.i3)
        out.append(refold(FiberMatrix(fibers.values * scales), shape, 3))
    return out


def sample_observation_sets(n: int, missing_frac: float, lambda_count: int,
                            seed: int) -> list[ObservationSet]:
    """Miss ``floor(missing_frac * n)`` fibers per acquisition, with the
    missing sets mutually disjoint so every fiber is observed somewhere.

    Feasibility needs ``missing_frac < (lambda_count - 1) / lambda_count``
    and the disjoint partition to fit, i.e. ``lambda_count * floor(...)``
    at most ``n``.
    """
    if n < 1 or lambda_count < 1:
        raise ValueError("n and lambda_count must be positive")
    if missing_frac < 0:
        raise ValueError("missing fraction must be nonnegative")
    n_missing = math.floor(missing_frac * n)
    if missing_frac > 0 and missing_frac >= (lambda_count - 1) / lambda_count:
        raise InfeasibleFraction(
            f"missing fraction {missing_frac} >= {(lambda_count - 1) / lambda_count} "
            f"violates coverage for {lambda_count} acquisition(s)"
        )
    if n_missing * lambda_count > n:
        raise InfeasibleFraction(
            f"{lambda_count} disjoint missing sets of {n_missing} fibers do not fit in {n}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    all_ids = np.arange(n, dtype=np.int64)
    out = []
    for lam in range(lambda_count):
        missing = np.sort(perm[lam * n_missing : (lam + 1) * n_missing])
        out.append(ObservationSet(n, np.setdiff1d(all_ids, missing)))
    return out


@dataclass(frozen=True)
class OverlapSpec:
    """Partial-overlap masking: the same crop count c of rows and columns
    is removed from opposing sides of the two acquisitions; c is the value
    whose achieved removed-area fraction is closest to the target."""

    height: int
    width: int
    area_removed_frac: float

    def __post_init__(self):
        if min(self.height, self.width) < 1:
            raise ValueError("image extents must be positive")
        if not 0.0 <= self.area_removed_frac <= 0.7:
            raise ValueError(
                f"area fraction must lie in [0, 0.7], got {self.area_removed_frac}"
            )

    @cached_property
    def crop_count(self) -> int:
        counts = np.arange(min(self.height, self.width), dtype=np.int64)
        kept = (self.height - counts) * (self.width - counts)
        achieved = 1.0 - kept / (self.height * self.width)
        return int(np.argmin(np.abs(achieved - self.area_removed_frac)))

    @property
    def achieved_frac(self) -> float:
        c = self.crop_count
        return 1.0 - (self.height - c) * (self.width - c) / (self.height * self.width)


def partial_overlap_masks(o: OverlapSpec) -> tuple[np.ndarray, np.ndarray]:
    """Boolean observation masks (True = observed): the first mask removes
    ``crop_count`` rows from the top and columns from the left, the second
    the same counts from the bottom and right. Pixels False in both masks
    (the opposing corners) are observed nowhere."""
    c = o.crop_count
    first = np.ones((o.height, o.width), dtype=bool)
    second = np.ones((o.height, o.width), dtype=bool)
    if c:
        first[:c, :] = False
        first[:, :c] = False
        second[-c:, :] = False
        second[:, -c:] = False
    return first, second


def two_block_graph(block_size: int, seed: int, *, intra_density: float = 0.9,
                    cross_density: float = 0.01) -> tuple[EdgeSet, np.ndarray]:
    """Two dense blocks joined by sparse cross edges, with 0/1 labels by
    block; regenerated until connected. Edge counts are exact (ceil of
    density times the pair count), so they never fall below the density."""
    if block_size < 2:
        raise ValueError("block size must be at least 2")
    n = 2 * block_size
    labels = np.repeat(np.array([0, 1], dtype=np.int64), block_size)
    intra_pairs = np.array(
        [(u, v) for u in range(block_size) for v in range(u + 1, block_size)],
        dtype=np.int64,
    )
    cross_pairs = np.array(
        [(u, block_size + v) for u in range(block_size) for v in range(block_size)],
        dtype=np.int64,
    )
    n_intra = math.ceil(intra_density * len(intra_pairs))
    n_cross = max(1, math.ceil(cross_density * len(cross_pairs)))
    rng = np.random.default_rng(seed)
    while True:
        chosen = [
            intra_pairs[rng.choice(len(intra_pairs), size=n_intra, replace=False)],
            intra_pairs[rng.choice(len(intra_pairs), size=n_intra, replace=False)]
            + block_size,
            cross_pairs[rng.choice(len(cross_pairs), size=n_cross, replace=False)],
        ]
        edges = EdgeSet(n, np.concatenate(chosen, axis=0))
        graph = build_graph(edges)
        n_components, _ = connected_components(graph.adjacency, directed=False)
        if n_components == 1:
            return edges, labels


def smooth_raster_pair(height: int, width: int, bands: int, seed: int,
                       *, bumps: int = 12) -> tuple[DenseTensor, DenseTensor]:
    """Smooth multiband raster pair: a mixture of rotated anisotropic
    Gaussian bumps, the second acquisition equal to the first with each
    band multiplied by a random positive scale."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    ys = ys / max(height - 1, 1)
    xs = xs / max(width - 1, 1)
    img = np.zeros((height, width, bands), dtype=np.float64)
    for _ in range(bumps):
        cy, cx = rng.uniform(0.05, 0.95, size=2)
        sy, sx = rng.uniform(0.08, 0.3, size=2)
        theta = rng.uniform(0.0, np.pi)
        amps = rng.uniform(0.2, 1.0, size=bands)
        dy, dx = ys - cy, xs - cx
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        major = (cos_t * dx + sin_t * dy) / sx
        minor = (-sin_t * dx + cos_t * dy) / sy
        bump = np.exp(-0.5 * (major**2 + minor**2))
        img += bump[:, :, None] * amps[None, None, :]
    scales = rng.uniform(0.5, 1.5, size=bands)
    first = DenseTensor.from_array(img)
    second = DenseTensor.from_array(img * scales[None, None, :])
    return first, second
