"""Trilinear-form geometry audit.

Evaluates the convective trilinear symbol on divergence-free vectors,
sweeps it over axis rotations of the triple's common normal, extracts the
eight angular Fourier coefficients by torus quadrature, and certifies that
all eight stay away from zero near the reference frequency triple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InvalidParameterError

# reference frequency triple (summing to zero, pairwise distinct magnitudes)
BASE_FREQS = (
    np.array([0.0, 1.0, 0.0]),
    np.array([-1.0, -1.0, 0.0]),
    np.array([1.0, 0.0, 0.0]),
)

ORTHOGONALITY_TOL = 1e-10
SignPattern = tuple[int, int, int]
SIGN_PATTERNS: tuple[SignPattern, ...] = tuple(product((-1, 1), repeat=3))


def _vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise InvalidParameterError("expected a 3-vector")
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError("vector components must be finite")
    return a


def lambda_form(xi1, xi2, xi3, X1, X2, X3) -> float:
    """(X1.xi2)(X2.X3) + (X2.xi1)(X1.X3) on divergence-free arguments.

    Each X_j must be orthogonal to its xi_j; a violation is rejected naming
    the offending index.  Linear in every X_j and degree one in the
    frequencies jointly.
    """
    xis = [_vec(xi1), _vec(xi2), _vec(xi3)]
    Xs = [_vec(X1), _vec(X2), _vec(X3)]
    for j, (xi, X) in enumerate(zip(xis, Xs), start=1):
        scale = max(1.0, float(np.linalg.norm(xi) * np.linalg.norm(X)))
        if abs(float(xi @ X)) > ORTHOGONALITY_TOL * scale:
            raise InvalidParameterError(
                f"argument {j} is not orthogonal to its frequency (|dot|="
                f"{abs(float(xi @ X)):.3e})"
            )
    return float((Xs[0] @ xis[1]) * (Xs[1] @ Xs[2]) + (Xs[1] @ xis[0]) * (Xs[0] @ Xs[2]))


def axis_rotation(xi, theta: float, X) -> np.ndarray:
    """Right-hand rotation of X by theta around the axis xi.

    R X = (X.u)u + cos(theta)(X - (X.u)u) + sin(theta) u x X  with u = xi/|xi|.
    """
    xi = _vec(xi)
    X = _vec(X)
    norm = float(np.linalg.norm(xi))
    if norm == 0.0:
        raise InvalidParameterError("rotation axis must be nonzero")
    u = xi / norm
    axial = float(X @ u) * u
    return axial + math.cos(theta) * (X - axial) + math.sin(theta) * np.cross(u, X)


@dataclass(frozen=True)
class FreqTriple:
    """Three frequencies summing to zero (the interaction triangle)."""

    eta1: np.ndarray
    eta2: np.ndarray
    eta3: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta1", _vec(self.eta1))
        object.__setattr__(self, "eta2", _vec(self.eta2))
        object.__setattr__(self, "eta3", _vec(self.eta3))
        residual = np.abs(self.eta1 + self.eta2 + self.eta3).max()
        if residual > 1e-12:
            raise InvalidParameterError(
                f"frequencies must sum to zero (residual {residual:.3e})"
            )

    @classmethod
    def base(cls) -> "FreqTriple":
        return cls(*BASE_FREQS)

    @property
    def etas(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.eta1, self.eta2, self.eta3

    def normal(self) -> np.ndarray:
        """Unit normal of the triangle plane, oriented towards +z.

        Rejects collinear triples and triples whose plane is tilted too far
        from the reference chart (|n_z| < 0.5).
        """
        n = np.cross(self.eta1, self.eta2)
        norm = float(np.linalg.norm(n))
        scale = float(np.linalg.norm(self.eta1) * np.linalg.norm(self.eta2))
        if norm <= 1e-12 * max(scale, 1e-300):
            raise InvalidParameterError("eta1 and eta2 are collinear")
        n = n / norm
        if abs(n[2]) < 0.5:
            raise InvalidParameterError(
                "triple normal too far from the +z chart (|n_z| < 0.5)"
            )
        return n if n[2] > 0 else -n

    def max_deviation_from_base(self) -> float:
        return max(
            float(np.linalg.norm(e - b)) for e, b in zip(self.etas, BASE_FREQS)
        )


def theta_function(eta: FreqTriple, gamma1: float, gamma2: float, gamma3: float) -> float:
    """The angular sweep of the trilinear form.

    Rotates the common normal n around each eta_j by gamma_j and evaluates
    lambda_form on the rotated vectors.  2-pi periodic and a degree-one
    trigonometric polynomial in each angle.
    """
    n = eta.normal()
    X = [axis_rotation(e, g, n) for e, g in zip(eta.etas, (gamma1, gamma2, gamma3))]
    return lambda_form(*eta.etas, *X)


def _rotated_normal_table(eta: FreqTriple, gammas: np.ndarray) -> list[np.ndarray]:
    """axis_rotation(eta_j, gamma, n) for every gamma, vectorized per axis."""
    n = eta.normal()
    cos = np.cos(gammas)[:, None]
    sin = np.sin(gammas)[:, None]
    out = []
    for e in eta.etas:
        u = e / np.linalg.norm(e)
        axial = float(n @ u) * u
        out.append(axial + cos * (n - axial) + sin * np.cross(u, n))
    return out


def _theta_grid(eta: FreqTriple, grid_size: int) -> np.ndarray:
    gammas = 2.0 * np.pi * np.arange(grid_size) / grid_size
    v1, v2, v3 = _rotated_normal_table(eta, gammas)
    p = v1 @ eta.eta2          # (N,)
    q = v2 @ eta.eta1          # (N,)
    m23 = v2 @ v3.T            # (N, N)
    m13 = v1 @ v3.T            # (N, N)
    return p[:, None, None] * m23[None, :, :] + q[None, :, None] * m13[:, None, :]


def fourier_coefficients(
    eta: FreqTriple, grid_size: int = 16
) -> dict[SignPattern, complex]:
    """The eight angular Fourier coefficients c_sigma of the sweep.

    c_sigma = (2 pi)^-3 integral Theta(g) exp(-i sigma.g) dg, computed by
    the tensor trapezoidal rule, which is exact here for any grid_size >= 4
    because the integrand has degree <= 2 per angle.  All Fourier content
    outside the eight (+-1,+-1,+-1) bins is verified to vanish.
    """
    if grid_size < 4:
        raise InvalidParameterError("grid_size must be >= 4")
    grid = _theta_grid(eta, grid_size)
    spectrum = np.fft.fftn(grid) / grid.size
    coeffs = {
        sigma: complex(spectrum[sigma[0] % grid_size, sigma[1] % grid_size,
                                sigma[2] % grid_size])
        for sigma in SIGN_PATTERNS
    }
    mask = np.ones(grid.shape, dtype=bool)
    for sigma in SIGN_PATTERNS:
        mask[sigma[0] % grid_size, sigma[1] % grid_size, sigma[2] % grid_size] = False
    spurious = float(np.abs(spectrum[mask]).max()) if mask.any() else 0.0
    scale = max(1.0, max(abs(c) for c in coeffs.values()))
    if spurious > 1e-12 * scale:
        raise InvalidParameterError(
            f"unexpected Fourier content outside the sign-pattern bins "
            f"({spurious:.3e}); the sweep is not a degree-one polynomial"
        )
    return coeffs


def min_abs_coefficient(eta: FreqTriple, grid_size: int = 16) -> float:
    return min(abs(c) for c in fourier_coefficients(eta, grid_size).values())


@dataclass(frozen=True)
class ScanResult:
    """Outcome of a non-degeneracy sweep around a center triple."""

    min_abs_c: float
    argmin: FreqTriple
    samples: int


def nondegeneracy_scan(
    center: FreqTriple,
    radius: float,
    samples: int,
    seed: int,
    grid_size: int = 8,
) -> ScanResult:
    """Smallest |c_sigma| over random zero-sum triples near ``center``.

    eta1 and eta2 are perturbed uniformly in the ball of the given radius
    and eta3 is set to close the triangle, so the zero-sum constraint holds
    by construction.  Deterministic in the seed.
    """
    if radius < 0.0:
        raise InvalidParameterError("radius must be >= 0")
    if samples < 1:
        raise InvalidParameterError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    best = math.inf
    argmin = center
    for _ in range(samples):
        d1, d2 = _ball_points(rng, radius)
        eta1 = center.eta1 + d1
        eta2 = center.eta2 + d2
        triple = FreqTriple(eta1, eta2, -(eta1 + eta2))
        value = min_abs_coefficient(triple, grid_size)
        if value < best:
            best = value
            argmin = triple
    return ScanResult(best, argmin, samples)


def _ball_points(rng: np.random.Generator, radius: float) -> tuple[np.ndarray, np.ndarray]:
    if radius == 0.0:
        return np.zeros(3), np.zeros(3)
    out = []
    for _ in range(2):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        out.append(radius * rng.random() ** (1.0 / 3.0) * v)
    return out[0], out[1]
