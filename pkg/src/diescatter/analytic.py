"""Cylindrical-harmonic series for plane-wave scattering by a homogeneous circular cylinder.

Serves as the independent reference for the integral-equation solver.  The
incident field matches :func:`diescatter.operator.incident_plane_wave` with
the ``maxwell-consistent`` convention: ``H3 = exp(i k.x)`` for TE and
``E3 = exp(i k.x)`` for TM, in absolute coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import InvalidParameterError, TruncationError
from .medium import Background


@dataclass(frozen=True)
class CylinderProblem:
    radius: float
    eps_rel: complex
    bg: Background
    mu_rel: complex = 1.0
    psi: float = 0.0
    series_terms: Optional[int] = None
    center: tuple = (0.0, 0.0)
    polarization: str = "TE"

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidParameterError("radius must be positive")
        if self.polarization not in ("TE", "TM"):
            raise InvalidParameterError("polarization must be TE or TM")

    @property
    def k_in(self) -> complex:
        k = self.bg.k_b * np.sqrt(complex(self.eps_rel) * complex(self.mu_rel))
        return complex(-k if k.imag < 0 else k)

    def default_terms(self, r_max: float = 0.0) -> int:
        """``ceil(|k_b a sqrt(eps mu)|) + 20``, widened when sampling far outside."""
        m = math.ceil(abs(self.bg.k_b * self.radius * np.sqrt(complex(self.eps_rel) * complex(self.mu_rel))))
        return max(m, math.ceil(abs(self.bg.k_b) * r_max)) + 20

    def coefficients(self, M: Optional[int] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orders ``n = -M..M`` with scattered ``b_n`` and interior ``c_n`` coefficients.

        Outside: ``sum i^n e^{in(phi-psi)} [J_n(k_b r) + b_n H_n(k_b r)]``;
        inside: ``sum i^n e^{in(phi-psi)} c_n J_n(k r)``.
        """
        M = self.series_terms or self.default_terms() if M is None else M
        n = np.arange(-M, M + 1)
        x0 = self.bg.k_b * self.radius
        x1 = self.k_in * self.radius
        # continuity of the axial field and of (1/material) d/dr of it
        if self.polarization == "TE":
            eta = np.sqrt(complex(self.mu_rel) / complex(self.eps_rel))
        else:
            eta = np.sqrt(complex(self.eps_rel) / complex(self.mu_rel))
        H, dH = special.hankel1(n, x0), special.h1vp(n, x0)
        J0, dJ0 = special.jv(n, x0), special.jvp(n, x0)
        J1, dJ1 = special.jv(n, x1), special.jvp(n, x1)
        det = -H * eta * dJ1 + J1 * dH
        b = (J0 * eta * dJ1 - J1 * dJ0) / det
        c = (H * dJ0 - dH * J0) / -det
        return n, b, c

    def fields(self, points) -> dict:
        """Total field components at ``points`` (shape ``(P, 2)``).

        TE returns ``E1, E2, H3``; TM returns ``E3`` (plus ``H1, H2``).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        r = np.hypot(dx, dy)
        phi = np.arctan2(dy, dx)
        M = self.series_terms or self.default_terms(float(r.max(initial=0.0)))
        n, b, c = self.coefficients(M)
        kb = self.bg.k_b
        k1 = self.k_in
        # phase of the incident wave at the cylinder center
        c0 = np.exp(1j * kb * (self.center[0] * np.cos(self.psi) + self.center[1] * np.sin(self.psi)))
        inside = r < self.radius

        axial = np.zeros(len(r), complex)
        dplus = np.zeros(len(r), complex)   # (d1 + i d2) of the axial field
        dminus = np.zeros(len(r), complex)  # (d1 - i d2)
        last = np.zeros(len(r))
        ii = inside
        oo = ~inside
        for idx, order in enumerate(n):
            a = (1j ** order) * np.exp(-1j * order * self.psi)
            e0 = np.exp(1j * order * phi)
            ep = np.exp(1j * (order + 1) * phi)
            em = np.exp(1j * (order - 1) * phi)
            term = np.zeros(len(r), complex)
            if np.any(ii):
                rr = r[ii]
                term[ii] = a * c[idx] * special.jv(order, k1 * rr) * e0[ii]
                dplus[ii] += -a * c[idx] * k1 * special.jv(order + 1, k1 * rr) * ep[ii]
                dminus[ii] += a * c[idx] * k1 * special.jv(order - 1, k1 * rr) * em[ii]
            if np.any(oo):
                rr = r[oo]
                z = kb * rr
                zn = special.jv(order, z) + b[idx] * special.hankel1(order, z)
                zp = special.jv(order + 1, z) + b[idx] * special.hankel1(order + 1, z)
                zm = special.jv(order - 1, z) + b[idx] * special.hankel1(order - 1, z)
                term[oo] = a * zn * e0[oo]
                dplus[oo] += -a * kb * zp * ep[oo]
                dminus[oo] += a * kb * zm * em[oo]
            axial += term
            if abs(order) == M:
                last = np.maximum(last, np.abs(term))
        scale = np.maximum(np.abs(axial), 1e-300)
        if np.max(last / scale) > 1e-12 and np.max(last) > 1e-12 * np.max(np.abs(axial)):
            raise TruncationError(f"series not converged at {M} orders")

        axial *= c0
        d1 = 0.5 * (dplus + dminus) * c0
        d2 = (dplus - dminus) / 2j * c0
        w = self.bg.omega
        if self.polarization == "TE":
            eps = np.where(inside, complex(self.eps_rel), 1.0) * complex(self.bg.eps_b)
            return {"E1": -d2 / (1j * w * eps), "E2": d1 / (1j * w * eps), "H3": axial}
        mu = np.where(inside, complex(self.mu_rel), 1.0) * complex(self.bg.mu_b)
        return {"E3": axial, "H1": d2 / (1j * w * mu), "H2": -d1 / (1j * w * mu)}


def cylinder_fields(problem: CylinderProblem, points) -> dict:
    return problem.fields(points)
