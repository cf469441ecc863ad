"""Background medium, collocation grid and rasterized scatterer profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidParameterError, OutOfDomainError


@dataclass(frozen=True)
class Background:
    """Homogeneous background medium at a fixed angular frequency.

    The wavenumber is derived, never stored, so ``k_b**2 == omega**2 * eps_b * mu_b``
    holds by construction.  The principal square root is used, which puts
    ``Im k_b >= 0`` for passive media.
    """

    eps_b: complex = 1.0
    mu_b: complex = 1.0
    omega: float = 2.0 * math.pi

    def __post_init__(self):
        if self.omega <= 0:
            raise InvalidParameterError("omega must be positive")
        if self.eps_b == 0 or self.mu_b == 0:
            raise InvalidParameterError("background eps_b and mu_b must be nonzero")
        if complex(self.k_b).real <= 0:
            raise InvalidParameterError("background wavenumber must have positive real part")

    @classmethod
    def normalized(cls, wavelength: float = 1.0) -> "Background":
        """Unit permittivity and permeability, ``omega = k_b = 2 pi / wavelength``."""
        if wavelength <= 0:
            raise InvalidParameterError("wavelength must be positive")
        return cls(1.0, 1.0, 2.0 * math.pi / wavelength)

    @property
    def k_b(self) -> complex:
        k = self.omega * np.sqrt(complex(self.eps_b) * complex(self.mu_b))
        if k.imag < 0:
            k = -k
        return complex(k)

    @property
    def lambda_b(self) -> float:
        return 2.0 * math.pi / self.k_b.real

    @property
    def impedance(self) -> complex:
        """Wave impedance ``k_b / (omega eps_b)`` linking E to H for plane waves."""
        return self.k_b / (self.omega * complex(self.eps_b))

    @property
    def is_real(self) -> bool:
        return complex(self.eps_b).imag == 0 and complex(self.mu_b).imag == 0


@dataclass(frozen=True)
class Grid:
    """Uniform collocation grid, node ``m = i + j * n1`` at ``origin + (i h, j h)``.

    Field arrays over the grid are stored with shape ``(n2, n1)`` so that
    C-order flattening reproduces the lexicographic node index.
    """

    n1: int
    n2: int
    h: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise InvalidParameterError("grid needs at least one node per side")
        if not self.h > 0:
            raise InvalidParameterError("grid step must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def centered(cls, n: int, h: float, center=(0.0, 0.0), n2: Optional[int] = None) -> "Grid":
        n2 = n if n2 is None else n2
        origin = (center[0] - 0.5 * (n - 1) * h, center[1] - 0.5 * (n2 - 1) * h)
        return cls(n, n2, h, origin)

    @classmethod
    def for_square(cls, side: float, k_points: int, max_index: float, lambda_b: float,
                   center=(0.0, 0.0)) -> "Grid":
        """Square grid of side ``side`` discretized with ``k_points`` per medium wavelength."""
        h = grid_step(max_index ** 2, 1.0, k_points, lambda_b)
        alpha = k_points * max_index
        n = nodes_per_side(side / lambda_b, alpha)
        return cls.centered(n, h, center)

    @property
    def N(self) -> int:
        return self.n1 * self.n2

    @property
    def shape(self) -> tuple:
        return (self.n2, self.n1)

    @property
    def a(self) -> float:
        """Physical side length spanned by the nodes along the first axis."""
        return (self.n1 - 1) * self.h

    @property
    def center(self) -> tuple:
        return (self.origin[0] + 0.5 * (self.n1 - 1) * self.h,
                self.origin[1] + 0.5 * (self.n2 - 1) * self.h)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(x1, x2)``, each of shape ``(n2, n1)``."""
        i = np.arange(self.n1)
        j = np.arange(self.n2)
        x1 = np.broadcast_to(self.origin[0] + i * self.h, self.shape)
        x2 = np.broadcast_to((self.origin[1] + j * self.h)[:, None], self.shape)
        return np.array(x1), np.array(x2)

    def positions(self) -> np.ndarray:
        """Node positions as an ``(N, 2)`` array in lexicographic order."""
        x1, x2 = self.coordinates()
        return np.column_stack([x1.ravel(), x2.ravel()])

    def covered_box(self) -> tuple:
        """Union of the node cells: ``(x1_min, x1_max, x2_min, x2_max)``."""
        return (self.origin[0] - 0.5 * self.h, self.origin[0] + (self.n1 - 0.5) * self.h,
                self.origin[1] - 0.5 * self.h, self.origin[1] + (self.n2 - 0.5) * self.h)

    def same_as(self, other: "Grid") -> bool:
        return (self.n1, self.n2, self.h, self.origin) == (other.n1, other.n2, other.h, other.origin)


@dataclass(frozen=True, eq=False)
class MediumMap:
    """Relative material parameters sampled at the grid nodes."""

    eps_rel: np.ndarray
    mu_rel: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.eps_rel, dtype=complex)
        mu = np.asarray(self.mu_rel, dtype=complex)
        if eps.shape != mu.shape:
            raise InvalidParameterError("eps_rel and mu_rel must share a shape")
        if np.any(eps == 0):
            raise DomainError("relative permittivity must be nonzero at every node")
        eps.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "eps_rel", eps)
        object.__setattr__(self, "mu_rel", mu)

    @classmethod
    def vacuum(cls, grid: Grid) -> "MediumMap":
        return cls(np.ones(grid.shape, complex), np.ones(grid.shape, complex))

    @property
    def chi_e(self) -> np.ndarray:
        return self.eps_rel - 1.0

    @property
    def chi_m(self) -> np.ndarray:
        return self.mu_rel - 1.0

    @property
    def is_magnetic(self) -> bool:
        return bool(np.any(self.mu_rel != 1.0))

    def invert_permittivity(self) -> "MediumMap":
        """Medium with ``eps_rel -> 1/eps_rel`` and no magnetic contrast.

        Its electric contrast is ``eps_b/eps - 1``, which defines the regularizer.
        """
        return MediumMap(1.0 / self.eps_rel, np.ones_like(self.mu_rel))

    def scatterer_materials(self) -> list[complex]:
        """Distinct relative permittivities at nodes with nonzero contrast."""
        return distinct_values(self.eps_rel[self.chi_e != 0])

    def swapped(self) -> "MediumMap":
        return MediumMap(self.mu_rel, self.eps_rel)


def distinct_values(values, rel_bucket: float = 1e-3) -> list[complex]:
    """Distinct complex values, merged when closer than ``rel_bucket`` relative."""
    out: list[complex] = []
    for v in np.unique(np.asarray(values, dtype=complex).ravel()):
        v = complex(v)
        if not any(abs(v - w) <= rel_bucket * max(abs(w), 1.0) for w in out):
            out.append(v)
    return out


@dataclass(frozen=True)
class ScattererSpec:
    """Geometry and material description of a test scatterer.

    ``kind`` is one of ``homogeneous-square``, ``layered-square``,
    ``circular-cylinder`` or ``analytic-profile``.  Coordinates in the
    parameters are relative to ``center``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    profile: Optional[Callable] = None
    center: tuple = (0.0, 0.0)

    KINDS = ("homogeneous-square", "layered-square", "circular-cylinder", "analytic-profile")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"unknown scatterer kind {self.kind!r}")
        if self.kind == "analytic-profile" and self.profile is None:
            raise InvalidParameterError("analytic-profile needs a profile callable")

    def half_extent(self) -> float:
        if self.kind == "circular-cylinder":
            return self.params["radius"]
        return 0.5 * self.params["side"]

    def materials(self) -> list[complex]:
        """Material values (eps/eps_b) of this scatterer, for grid sizing."""
        p = self.params
        if self.kind == "homogeneous-square" or self.kind == "circular-cylinder":
            return [complex(p["eps_rel"])]
        if self.kind == "layered-square":
            return [complex(p["eps_outer"]), complex(p["eps_inner"])]
        x1, x2 = np.meshgrid(np.linspace(-0.5, 0.5, 201), np.linspace(-0.5, 0.5, 201))
        side = p["side"]
        return list(np.unique(np.asarray(self.profile(x1 * side, x2 * side), complex)))

    def max_refractive_index(self) -> float:
        """``max sqrt(Re(eps/eps_b) * Re(mu/mu_b))``; negative real parts use their magnitude."""
        mu = complex(self.params.get("mu_rel", 1.0)).real
        return max(math.sqrt(abs(complex(e).real * mu)) for e in self.materials())


def homogeneous_square(side: float, eps_rel: complex, mu_rel: complex = 1.0,
                       center=(0.0, 0.0)) -> ScattererSpec:
    return ScattererSpec("homogeneous-square", {"side": side, "eps_rel": eps_rel, "mu_rel": mu_rel},
                         center=tuple(center))


def layered_square(side: float, eps_outer: complex, eps_inner: complex,
                   inner_side: Optional[float] = None, center=(0.0, 0.0)) -> ScattererSpec:
    inner_side = 0.5 * side if inner_side is None else inner_side
    return ScattererSpec("layered-square", {"side": side, "eps_outer": eps_outer,
                                            "eps_inner": eps_inner, "inner_side": inner_side},
                         center=tuple(center))


def circular_cylinder(radius: float, eps_rel: complex, mu_rel: complex = 1.0,
                      center=(0.0, 0.0)) -> ScattererSpec:
    return ScattererSpec("circular-cylinder", {"radius": radius, "eps_rel": eps_rel, "mu_rel": mu_rel},
                         center=tuple(center))


def sin_product_profile(side: float, base: float = 10.0, amplitude: float = 5.0,
                        frequency: float = 4.0, center=(0.0, 0.0)) -> ScattererSpec:
    """``eps/eps_b = base + amplitude sin(f pi x1/a) sin(f pi x2/a)`` on a square of side ``a``."""

    def profile(x1, x2):
        return base + amplitude * np.sin(frequency * np.pi * x1 / side) * np.sin(frequency * np.pi * x2 / side)

    return ScattererSpec("analytic-profile",
                         {"side": side, "profile": "sin-product", "base": base,
                          "amplitude": amplitude, "frequency": frequency},
                         profile=profile, center=tuple(center))


def grid_step(eps_rel_max_real: float, mu_rel_max_real: float, k_points: int, lambda_b: float) -> float:
    """Grid step ``lambda_b / (k n)`` for ``k`` points per smallest medium wavelength."""
    if k_points < 2:
        raise InvalidParameterError("need at least two points per wavelength")
    if not eps_rel_max_real * mu_rel_max_real > 0 or not lambda_b > 0:
        raise InvalidParameterError("refractive index and wavelength must be positive")
    n = math.sqrt(eps_rel_max_real * mu_rel_max_real)
    return lambda_b / (k_points * n)


def nodes_per_side(a_over_lambda: float, alpha: float) -> int:
    """``floor(alpha a / lambda_b) + 1`` nodes; a tiny guard absorbs round-off at integers."""
    if a_over_lambda <= 0 or alpha <= 0:
        raise InvalidParameterError("size and alpha must be positive")
    return int(math.floor(alpha * a_over_lambda + 1e-9)) + 1


def grid_for(spec: ScattererSpec, bg: Background, k_points: int = 15, margin: int = 0) -> Grid:
    """Smallest centered grid at ``k_points`` per medium wavelength covering ``spec``."""
    n_max = spec.max_refractive_index()
    h = grid_step(n_max ** 2, 1.0, k_points, bg.lambda_b)
    extent = 2.0 * spec.half_extent()
    n = nodes_per_side(extent / bg.lambda_b, k_points * n_max) + 2 * margin
    return Grid.centered(n, h, spec.center)


def rasterize(spec: ScattererSpec, grid: Grid, bg: Optional[Background] = None) -> MediumMap:
    """Sample the scatterer at the grid nodes (mid-point rule).

    Nodes on a region boundary belong to the region.  Inner layers override
    outer ones.  Raises :class:`OutOfDomainError` when the scatterer is not
    covered by the grid cells.
    """
    half = spec.half_extent()
    cx, cy = spec.center
    lo1, hi1, lo2, hi2 = grid.covered_box()
    slack = 1e-9 * grid.h
    if cx - half < lo1 - slack or cx + half > hi1 + slack or cy - half < lo2 - slack or cy + half > hi2 + slack:
        raise OutOfDomainError(f"{spec.kind} extends beyond the grid")

    x1, x2 = grid.coordinates()
    x1 = x1 - cx
    x2 = x2 - cy
    tol = 1e-9 * grid.h
    eps = np.ones(grid.shape, complex)
    mu = np.ones(grid.shape, complex)
    p = spec.params
    if spec.kind in ("homogeneous-square", "layered-square", "analytic-profile"):
        inside = (np.abs(x1) <= half + tol) & (np.abs(x2) <= half + tol)
    else:
        inside = np.hypot(x1, x2) <= half + tol

    if spec.kind in ("homogeneous-square", "circular-cylinder"):
        eps[inside] = p["eps_rel"]
        mu[inside] = p.get("mu_rel", 1.0)
    elif spec.kind == "layered-square":
        eps[inside] = p["eps_outer"]
        hi = 0.5 * p["inner_side"]
        core = (np.abs(x1) <= hi + tol) & (np.abs(x2) <= hi + tol)
        eps[core] = p["eps_inner"]
    else:
        eps[inside] = np.asarray(spec.profile(x1[inside], x2[inside]), complex)
    return MediumMap(eps, mu)
