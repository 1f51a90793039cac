"""Role embeddings from heat-kernel wavelets and their empirical characteristic functions."""

from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.polynomial import Chebyshev
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat
from scipy.sparse.csgraph import connected_components, laplacian
from scipy.sparse.linalg import eigsh

from .embeddings import EmbeddingKind, EmbeddingSet
from .errors import ConvergenceError
from .graph import Graph
from .settings import EXACT_SPECTRUM_MAX_NODES

logger = logging.getLogger(__name__)

# Spectrum of the normalized Laplacian lies in [0, 2].
LAMBDA_MAX = 2.0
# Eigenvalues below this count as zero when picking the scale.
ZERO_EIGENVALUE = 1e-8


class WaveletConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    scales: Optional[List[PositiveFloat]] = Field(
        None, description="Heat-kernel scales; None picks one from the spectral bounds."
    )
    num_sample_points: int = Field(25, ge=1, description="Characteristic-function grid size T.")
    t_max: PositiveFloat = Field(100.0, description="Grid spans [0, t_max].")
    chebyshev_order: int = Field(30, ge=1)
    tolerance: PositiveFloat = Field(1e-4, description="Max heat-kernel error for the Chebyshev path.")
    exact_max_nodes: int = Field(
        EXACT_SPECTRUM_MAX_NODES, ge=1, description="Larger components use the Chebyshev path."
    )
    block_size: int = Field(512, ge=1, description="Wavelet columns evaluated at once.")

    @property
    def num_scales(self) -> int:
        return len(self.scales) if self.scales else 1

    @property
    def dim(self) -> int:
        return 2 * self.num_sample_points * self.num_scales

    def sample_points(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.num_sample_points)


def scale_from_bounds(lambda_min: float, lambda_max: float, eta: float = 0.85, gamma: float = 0.95) -> float:
    """Midpoint of the scale interval derived from the spectral bounds."""
    t = np.sqrt(lambda_min * lambda_max)
    s_max = -np.log(eta) / t
    s_min = -np.log(gamma) / t
    return float((s_min + s_max) / 2.0)


def _spectral_bounds(lap: sp.csr_matrix, exact_max_nodes: int) -> Optional[tuple]:
    n = lap.shape[0]
    if n <= exact_max_nodes:
        values = scipy.linalg.eigvalsh(lap.toarray())
        positive = values[values > ZERO_EIGENVALUE]
        if positive.size == 0:
            return None
        return float(positive[0]), float(values[-1])
    # Shift-invert just below zero returns the two smallest eigenvalues.
    smallest = np.sort(eigsh(lap, k=2, sigma=-1e-2, which="LM", return_eigenvectors=False))
    largest = eigsh(lap, k=1, which="LA", return_eigenvectors=False)
    return float(smallest[1]), float(largest[0])


def recommend_scale(g: Graph, cfg: WaveletConfig) -> float:
    """Heat scale from the largest connected component's spectrum.

    Equally large components each propose a scale and the smallest wins, so
    the choice does not depend on node order.
    """
    _, components = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(components)
    candidates = []
    for component in np.flatnonzero(sizes == sizes.max()):
        nodes = np.flatnonzero(components == component)
        lap = laplacian(g.adjacency[nodes][:, nodes], normed=True).tocsr()
        bounds = _spectral_bounds(lap, cfg.exact_max_nodes)
        if bounds is not None:
            candidates.append(scale_from_bounds(*bounds))
    if not candidates:
        logger.warning("graph has no edges; using unit heat scale")
        return 1.0
    return min(candidates)


def characteristic_values(wavelets: np.ndarray, sample_points: np.ndarray) -> np.ndarray:
    """Sampled characteristic function of each column, as interleaved Re/Im pairs."""
    out = np.empty((wavelets.shape[1], 2 * sample_points.shape[0]))
    for j, t in enumerate(sample_points):
        phi = np.exp(1j * t * wavelets).mean(axis=0)
        out[:, 2 * j] = phi.real
        out[:, 2 * j + 1] = phi.imag
    return out


def _chebyshev_heat(scale: float, cfg: WaveletConfig) -> np.ndarray:
    approx = Chebyshev.interpolate(lambda x: np.exp(-scale * x), deg=cfg.chebyshev_order, domain=[0.0, LAMBDA_MAX])
    grid = np.linspace(0.0, LAMBDA_MAX, 2001)
    error = float(np.max(np.abs(approx(grid) - np.exp(-scale * grid))))
    if error > cfg.tolerance:
        raise ConvergenceError(
            f"Chebyshev order {cfg.chebyshev_order} reaches heat-kernel error {error:.2e} "
            f"above tolerance {cfg.tolerance:.0e} at scale {scale:.4g}; increase chebyshev_order"
        )
    return approx.coef


def _chebyshev_apply(lap: sp.csr_matrix, coef: np.ndarray, block: np.ndarray) -> np.ndarray:
    # Map [0, 2] onto [-1, 1]: L - I.
    shifted = lap - sp.identity(lap.shape[0], format="csr")
    prev, curr = block, shifted @ block
    result = coef[0] * prev
    if coef.shape[0] > 1:
        result = result + coef[1] * curr
    for c in coef[2:]:
        prev, curr = curr, 2.0 * (shifted @ curr) - prev
        result = result + c * curr
    return result


def _component_embeddings(lap: sp.csr_matrix, scales: List[float], cfg: WaveletConfig) -> np.ndarray:
    n = lap.shape[0]
    points = cfg.sample_points()
    blocks = []
    if n <= cfg.exact_max_nodes:
        values, vectors = scipy.linalg.eigh(lap.toarray())
        for scale in scales:
            wavelets = (vectors * np.exp(-scale * values)) @ vectors.T
            blocks.append(characteristic_values(wavelets, points))
        return np.hstack(blocks)

    for scale in scales:
        coef = _chebyshev_heat(scale, cfg)
        per_scale = np.empty((n, 2 * points.shape[0]))
        for start in range(0, n, cfg.block_size):
            stop = min(start + cfg.block_size, n)
            impulses = np.zeros((n, stop - start))
            impulses[np.arange(start, stop), np.arange(stop - start)] = 1.0
            per_scale[start:stop] = characteristic_values(_chebyshev_apply(lap, coef, impulses), points)
        blocks.append(per_scale)
    return np.hstack(blocks)


def role_embeddings(g: Graph, cfg: Optional[WaveletConfig] = None) -> EmbeddingSet:
    """Role features ``X_r`` with ``2 * T * len(scales)`` columns.

    Each connected component is embedded on its own normalized Laplacian, so
    structurally identical components give identical rows.
    """
    cfg = cfg or WaveletConfig()
    scales = list(cfg.scales) if cfg.scales else [recommend_scale(g, cfg)]
    num_components, components = connected_components(g.adjacency, directed=False)
    matrix = np.zeros((g.num_nodes, cfg.dim))
    for component in range(num_components):
        nodes = np.flatnonzero(components == component)
        lap = laplacian(g.adjacency[nodes][:, nodes], normed=True).tocsr()
        matrix[nodes] = _component_embeddings(lap, scales, cfg)
    logger.info(
        "computed role embeddings",
        extra={"nodes": g.num_nodes, "components": num_components, "scales": scales, "dim": cfg.dim},
    )
    return EmbeddingSet(matrix=matrix, kind=EmbeddingKind.ROLE)
