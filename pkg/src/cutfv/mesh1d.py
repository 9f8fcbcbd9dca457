"""The two periodic 1D model meshes and role classification of their cells."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import CellRole, ConfigurationError, ParameterError, SchemeSpec, _readonly


@dataclass(frozen=True)
class Mesh1D:
    """Periodic 1D mesh built from full cells of width ``h`` and cut cells of width ``alpha*h``.

    ``roles`` is ``None`` until :func:`classify_cells_1d` has been applied.
    """

    cell_lengths: np.ndarray
    h: float
    alpha: float
    cut_cells: tuple
    tag: str
    roles: np.ndarray | None = None
    layers: int = 0
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cell_lengths", _readonly(self.cell_lengths))
        object.__setattr__(self, "cut_cells", tuple(int(c) for c in self.cut_cells))
        if self.roles is not None:
            roles = np.array(self.roles, dtype=int)
            roles.setflags(write=False)
            object.__setattr__(self, "roles", roles)

    @property
    def n_cells(self) -> int:
        return self.cell_lengths.size

    @property
    def cell_volumes(self) -> np.ndarray:
        return self.cell_lengths

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.cell_lengths)])

    @property
    def cell_centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def length(self) -> float:
        return float(np.sum(self.cell_lengths))

    def distance_to_cut(self) -> np.ndarray:
        """Periodic cell-count distance of every cell to the nearest cut cell."""
        n = self.n_cells
        idx = np.arange(n)
        d = np.full(n, n, dtype=int)
        for c in self.cut_cells:
            dc = np.abs(idx - c)
            d = np.minimum(d, np.minimum(dc, n - dc))
        return d


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")


def _check_h(h: float) -> None:
    if not (h > 0.0 and np.isfinite(h)):
        raise ParameterError(f"h must be positive, got {h}")


def build_single_cut_mesh(M: int, alpha: float, h: float) -> Mesh1D:
    """``M`` full cells with one cut cell of width ``alpha*h`` after the first ``M//2``."""
    _check_alpha(alpha)
    _check_h(h)
    if M < 4:
        raise ParameterError(f"M must be at least 4, got {M}")
    lengths = np.full(M + 1, float(h))
    c = M // 2
    lengths[c] = alpha * h
    return Mesh1D(lengths, float(h), float(alpha), (c,), tag=f"single(M={M},alpha={alpha!r},h={h!r})")


def build_block_mesh(K: int, L: int, alpha: float, h: float) -> Mesh1D:
    """``L`` blocks of ``K/2`` full cells, one cut cell and ``K/2`` full cells."""
    _check_alpha(alpha)
    _check_h(h)
    if K < 2 or K % 2:
        raise ParameterError(f"K must be a positive even number, got {K}")
    if L < 1:
        raise ParameterError(f"L must be at least 1, got {L}")
    block = np.full(K + 1, float(h))
    block[K // 2] = alpha * h
    lengths = np.tile(block, L)
    cuts = tuple(b * (K + 1) + K // 2 for b in range(L))
    return Mesh1D(lengths, float(h), float(alpha), cuts, tag=f"block(K={K},L={L},alpha={alpha!r},h={h!r})")


def refine_block_mesh(mesh: Mesh1D, K: int) -> Mesh1D:
    """Halve ``h`` and double the block count, keeping ``K`` and ``alpha``."""
    return build_block_mesh(K, 2 * len(mesh.cut_cells), mesh.alpha, mesh.h / 2)


def classify_cells_1d(mesh: Mesh1D, spec: SchemeSpec) -> Mesh1D:
    """Attach cell roles for ``spec``.

    With ``k`` extra implicit layers the cut cell is ``CUT``, cells within
    distance ``k`` are ``IMPLICIT_INTERIOR`` and the next layer on either
    side is ``TRANSITION``.
    """
    n = mesh.n_cells
    if not spec.is_mixed:
        return replace(mesh, roles=np.full(n, int(CellRole.EXPLICIT)), layers=0)
    k = spec.implicit_layers
    cuts = sorted(mesh.cut_cells)
    # at least k+1 implicit/transition cells on each side plus two explicit cells between zones
    need = 2 * k + 4
    gaps = [(cuts[(m + 1) % len(cuts)] - cuts[m] - 1) % n for m in range(len(cuts))]
    if len(cuts) == 1:
        gaps = [n - 1]
    if min(gaps) < need:
        raise ConfigurationError(
            f"{spec.name} needs at least {need} full cells between cut cells, mesh has {min(gaps)}"
        )
    d = mesh.distance_to_cut()
    roles = np.full(n, int(CellRole.EXPLICIT))
    roles[d <= k] = int(CellRole.IMPLICIT_INTERIOR)
    roles[d == k + 1] = int(CellRole.TRANSITION)
    roles[d == 0] = int(CellRole.CUT)
    return replace(mesh, roles=roles, layers=k)
