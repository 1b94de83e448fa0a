"""Singular drift construction, Morrey norm, mollification and form bounds.

The central object is the form-bound certificate (delta_hat, c): for a drift
b and a zeroth-order budget c >= <|b|^2>,

    delta_hat(c) = sup_phi  ( ||b phi||_2^2 - c ||phi||_2^2 ) / ||grad phi||_2^2

over mean-zero, Nyquist-free grid fields.  The supremum is the top
generalized eigenvalue of (M - c, L) with M pointwise multiplication by
|b|^2 and L the discrete Dirichlet form; it is computed by power iteration on
the symmetrized operator L^(-1/2) (M - c) L^(-1/2), applied with FFTs, with a
spectral shift that keeps the iterated operator positive semidefinite.
Budgets c below <|b|^2> are infeasible: the constant trial function already
forces an infinite gradient budget there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse.linalg

from .grid import (
    ScalarField,
    VectorField,
    gradient,
    heat_semigroup,
    irfftn,
    read_field,
    rfftn,
)

__all__ = [
    "DriftSpec",
    "FormBoundCertificate",
    "build_drift",
    "morrey_norm",
    "mollify_drift",
    "form_bound_estimate",
    "zeroth_order_constant",
    "verify_form_bound",
]

DRIFT_KINDS = ("hardy", "constant", "trig", "file")


@dataclass
class DriftSpec:
    """Tagged drift description.

    kind selects the variant:
      hardy     -- sign * sqrt(delta) * (d-2)/2 * x / max(|x|, core_radius)^2,
                   smoothly cut off at cutoff_radius and periodized
      constant  -- uniform field given by ``vector``
      trig      -- per-component sums of amplitude * cos(2 pi k . x) terms
      file      -- vector field loaded from ``path``
    core_radius defaults to two grid spacings at build time.
    """

    kind: str
    delta: float = 4.0
    sign: int = -1
    core_radius: Optional[float] = None
    cutoff_radius: float = 0.4
    vector: Optional[tuple] = None
    components: Optional[list] = None
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}; expected one of {DRIFT_KINDS}")
        if not 0.0 < self.cutoff_radius < 0.5:
            raise ValueError(f"cutoff_radius must lie in (0, 1/2), got {self.cutoff_radius}")
        if self.kind == "hardy":
            if self.delta <= 0:
                raise ValueError(f"hardy drift needs delta > 0, got {self.delta}")
            if self.sign not in (-1, 1):
                raise ValueError(f"sign must be +1 or -1, got {self.sign}")
            if self.core_radius is not None and self.core_radius < 0:
                raise ValueError(f"core_radius must be >= 0, got {self.core_radius}")
        if self.kind == "constant" and self.vector is None:
            raise ValueError("constant drift needs a vector")
        if self.kind == "trig" and self.components is None:
            raise ValueError("trig drift needs per-component (amplitude, wavevector) lists")
        if self.kind == "file" and self.path is None:
            raise ValueError("file drift needs a path")


def _smooth_cutoff(r, inner, outer):
    """C-infinity radial ramp: 1 for r <= inner, 0 for r >= outer."""
    out = np.zeros_like(r)
    out[r <= inner] = 1.0
    band = (r > inner) & (r < outer)
    if np.any(band):
        s = (r[band] - inner) / (outer - inner)
        g_up = np.exp(-1.0 / s)
        g_down = np.exp(-1.0 / (1.0 - s))
        out[band] = g_down / (g_up + g_down)
    return out


def build_drift(spec, grid):
    """Realize a DriftSpec on a grid."""
    if spec.kind == "constant":
        vec = tuple(float(v) for v in spec.vector)
        if len(vec) != grid.dim:
            raise ValueError(f"constant vector has {len(vec)} entries for dim {grid.dim}")
        return VectorField(grid, tuple(ScalarField.full(grid, v) for v in vec))

    if spec.kind == "trig":
        if len(spec.components) != grid.dim:
            raise ValueError(
                f"trig drift lists {len(spec.components)} components for dim {grid.dim}"
            )
        coords = grid.coordinates
        comps = []
        for terms in spec.components:
            values = np.zeros(grid.shape)
            for amplitude, wavevector in terms:
                if len(wavevector) != grid.dim:
                    raise ValueError(f"wavevector {wavevector} has wrong length for dim {grid.dim}")
                phase = sum(2.0 * np.pi * k * x for k, x in zip(wavevector, coords))
                values += float(amplitude) * np.cos(phase)
            comps.append(ScalarField(grid, values))
        return VectorField(grid, tuple(comps))

    if spec.kind == "file":
        loaded = read_field(spec.path)
        if not isinstance(loaded, VectorField):
            raise ValueError(f"{spec.path} holds a scalar field, expected a vector field")
        if loaded.grid != grid:
            raise ValueError(
                f"drift file grid (d={loaded.grid.dim}, n={loaded.grid.n}) does not match "
                f"requested grid (d={grid.dim}, n={grid.n})"
            )
        return loaded

    # hardy
    if grid.dim < 2:
        raise ValueError("hardy drift requires dim >= 2: the radial factor (d-2)/2 degenerates in 1D")
    core = 2.0 * grid.spacing if spec.core_radius is None else spec.core_radius
    coords = grid.coordinates
    r2 = sum(np.broadcast_to(x, grid.shape) ** 2 for x in coords)
    r = np.sqrt(r2)
    capped = np.maximum(r, core)
    chi = _smooth_cutoff(r, spec.cutoff_radius / 2.0, spec.cutoff_radius)
    scale = spec.sign * math.sqrt(spec.delta) * (grid.dim - 2) / 2.0
    radial = scale * chi / capped**2
    comps = tuple(
        ScalarField(grid, radial * np.broadcast_to(x, grid.shape)) for x in coords
    )
    return VectorField(grid, comps)


def _torus_distance_sq(grid):
    """Squared torus distance of every grid offset from the origin."""
    j = np.arange(grid.n)
    axis = np.minimum(j, grid.n - j) * grid.spacing
    axes = np.meshgrid(*([axis] * grid.dim), indexing="ij", sparse=True)
    return sum(np.broadcast_to(a, grid.shape) ** 2 for a in axes)


def morrey_norm(b, eps, radii):
    """Discrete Morrey norm sup_{r, x} r * (ball mean of |b|^(2+eps))^(1/(2+eps)).

    Ball means use a hard indicator over grid points within torus distance r
    of each center, evaluated for every center at once by FFT convolution.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("radii list must be nonempty")
    for r in radii:
        if not 0.0 < r <= 0.5:
            raise ValueError(f"radii must lie in (0, 1/2], got {r}")
    grid = b.grid
    power = 2.0 + eps
    w = b.magnitude_squared() ** (power / 2.0)
    w_hat = rfftn(w)
    dist_sq = _torus_distance_sq(grid)
    best = 0.0
    for r in radii:
        indicator = (dist_sq <= r * r * (1.0 + 1e-12)).astype(float)
        count = indicator.sum()
        ball_sums = irfftn(w_hat * rfftn(indicator), grid.shape)
        mean_max = max(ball_sums.max() / count, 0.0)
        best = max(best, r * mean_max ** (1.0 / power))
    return float(best)


def mollify_drift(b, eps):
    """Heat-semigroup mollification applied componentwise; eps = 0 is identity."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return VectorField(b.grid, tuple(heat_semigroup(c, eps) for c in b.components))


@dataclass
class FormBoundCertificate:
    """A (delta_hat, c) pair with the trial-space evidence that produced it.

    witness is the maximizing mean-zero trial function (L2-normalized);
    residual is the final relative Rayleigh-quotient increment.  Infeasible
    budgets (c below <|b|^2>) carry delta_hat = inf and no witness.
    """

    c_delta: float
    delta_hat: float
    witness: Optional[ScalarField]
    residual: float
    iterations: int
    converged: bool
    feasible: bool = True
    rayleigh_quotient: float = 0.0

    def to_json(self):
        return {
            "c": self.c_delta,
            "delta_hat": None if math.isinf(self.delta_hat) else self.delta_hat,
            "residual": None if math.isnan(self.residual) else self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "feasible": self.feasible,
        }


def _weighted_dot(grid, a, b):
    w = grid.parseval_weights
    return float(np.sum(w * (a.conj() * b).real))


class _PreconditionedOperator:
    """L^(-1/2) (M - c) L^(-1/2) acting on rfftn spectra of mean-zero fields."""

    def __init__(self, grid, b_sq, c):
        self.grid = grid
        self.multiplier = b_sq - c
        sym = grid.dirichlet_symbol
        inv = np.zeros_like(sym)
        positive = sym > 0
        inv[positive] = 1.0 / np.sqrt(sym[positive])
        self.inv_sqrt = inv
        self.support = positive

    def project(self, spectrum):
        return np.where(self.support, spectrum, 0.0)

    def apply(self, spectrum):
        phi = irfftn(self.inv_sqrt * spectrum, self.grid.shape)
        return self.inv_sqrt * rfftn(self.multiplier * phi)


def form_bound_estimate(b, c_values, max_iter=5000, rq_tol=1e-10, seed=0, start=None):
    """Estimate delta_hat(c) for each budget c by preconditioned power iteration.

    Returns one FormBoundCertificate per entry of c_values, in order.  Budgets
    below <|b|^2> are reported infeasible.  Non-convergence within max_iter
    returns the best iterate with residual above rq_tol and converged False.
    """
    grid = b.grid
    b_sq = b.magnitude_squared()
    mean_b_sq = grid.cell_volume * float(b_sq.sum())
    if start is not None:
        start_values = start.values
    else:
        rng = np.random.default_rng(seed)
        x0 = np.broadcast_to(grid.coordinates[0], grid.shape)
        start_values = np.cos(2.0 * np.pi * x0) + 1e-3 * rng.standard_normal(grid.shape)

    certificates = []
    for c in c_values:
        c = float(c)
        if c < mean_b_sq * (1.0 - 1e-12):
            certificates.append(
                FormBoundCertificate(
                    c_delta=c,
                    delta_hat=math.inf,
                    witness=None,
                    residual=math.nan,
                    iterations=0,
                    converged=False,
                    feasible=False,
                )
            )
            continue
        certificates.append(
            _power_iteration(grid, b_sq, c, start_values, max_iter, rq_tol)
        )
    return certificates


def _power_iteration(grid, b_sq, c, start_values, max_iter, rq_tol):
    op = _PreconditionedOperator(grid, b_sq, c)
    psi = op.project(rfftn(start_values))
    norm = math.sqrt(_weighted_dot(grid, psi, psi))
    if norm == 0.0:
        raise ValueError("starting vector has no mean-zero content")
    psi /= norm
    # Poincare bound: the operator spectrum sits above -c / (4 pi^2), so this
    # shift keeps the iterated operator positive semidefinite.
    shift = c / (4.0 * math.pi**2)

    a_psi = op.apply(psi)
    rho = _weighted_dot(grid, psi, a_psi)
    residual = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        z = a_psi + shift * psi
        z_norm = math.sqrt(_weighted_dot(grid, z, z))
        if z_norm == 0.0:
            residual = 0.0
            converged = True
            break
        psi = z / z_norm
        a_psi = op.apply(psi)
        rho_new = _weighted_dot(grid, psi, a_psi)
        residual = abs(rho_new - rho) / max(abs(rho_new), 1e-300)
        rho = rho_new
        if residual < rq_tol:
            converged = True
            break

    witness_values = irfftn(op.inv_sqrt * psi, grid.shape)
    witness_norm = math.sqrt(grid.cell_volume * float((witness_values**2).sum()))
    if witness_norm > 0:
        witness_values = witness_values / witness_norm
    return FormBoundCertificate(
        c_delta=c,
        delta_hat=max(rho, 0.0),
        witness=ScalarField(grid, witness_values),
        residual=residual,
        iterations=iterations,
        converged=converged,
        rayleigh_quotient=rho,
    )


def zeroth_order_constant(b, delta, tol=1e-9):
    """Smallest c with ||b phi||_2^2 <= delta ||grad phi||_2^2 + c ||phi||_2^2
    for every grid field phi: the top eigenvalue of the Schroedinger-type
    operator (|b|^2 - delta L).

    Unlike the mean-zero sweep of form_bound_estimate, this constant covers
    constant-rich trial functions too, which the energy-inequality checks
    feed through exp(u^p / 2).  Always at least <|b|^2> (the constant trial).
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    grid = b.grid
    b_sq = b.magnitude_squared()
    sym = grid.dirichlet_symbol
    shape = grid.shape

    def matvec(vec):
        phi = vec.reshape(shape)
        out = b_sq * phi - delta * irfftn(rfftn(phi) * sym, shape)
        return out.ravel()

    operator = scipy.sparse.linalg.LinearOperator(
        (grid.size, grid.size), matvec=matvec, dtype=float
    )
    rng = np.random.default_rng(0)
    v0 = np.ones(grid.size) + 1e-3 * rng.standard_normal(grid.size)
    top = scipy.sparse.linalg.eigsh(
        operator, k=1, which="LA", v0=v0, tol=tol, return_eigenvectors=False
    )
    mean_b_sq = grid.cell_volume * float(b_sq.sum())
    return max(float(top[0]), mean_b_sq)


def verify_form_bound(b, delta, c_delta, trials):
    """Max over trials of ||b phi||_2^2 - delta ||grad phi||_2^2 - c ||phi||_2^2.

    Nonpositive (or numerically negligible) output means the certificate
    holds on the trial set.
    """
    if not trials:
        raise ValueError("trials list must be nonempty")
    b_sq = b.magnitude_squared()
    worst = -math.inf
    for phi in trials:
        if phi.grid != b.grid:
            raise ValueError("trial grid does not match drift grid")
        grad = gradient(phi)
        weighted = float((b_sq * phi.values**2).sum()) * b.grid.cell_volume
        dirichlet = float(grad.magnitude_squared().sum()) * b.grid.cell_volume
        mass = float((phi.values**2).sum()) * b.grid.cell_volume
        worst = max(worst, weighted - delta * dirichlet - c_delta * mass)
    return worst
