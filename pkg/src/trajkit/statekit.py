"""Dense linear algebra for small Hilbert spaces, state containers and
fidelity measures.

Conventions used throughout the package:

* Two-level systems are stored in the basis (|e>, |g>), index 0 = excited.
  With this ordering sigma_z = diag(+1, -1), i.e. sigma_z|e> = +|e>, and the
  lowering operator is sigma = |g><e|.  The ground state |g><g| therefore has
  Bloch vector (0, 0, -1).
* Three-level systems are stored in the basis (|1>, |2>, |3>); the lowering
  operators are L1 = |1><3| and L2 = |2><3|.
* A density matrix rho on a two-level system decomposes as
  rho = (P*1 + X*sigma_x + Y*sigma_y + Z*sigma_z) / 2; for a normalized state
  P = 1 and (X, Y, Z) is the usual Bloch vector.

States are plain complex ndarrays at the solver level; the small dataclasses
below are validating containers for API boundaries and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Default numerical tolerances; every check below accepts an override.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8
NORM_TOL = 1e-10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|

# Three-level lowering operators, basis (|1>, |2>, |3>).
L1 = np.zeros((3, 3), dtype=complex)
L1[0, 2] = 1.0
L2 = np.zeros((3, 3), dtype=complex)
L2[1, 2] = 1.0
X1 = L1 + L1.conj().T


def _mat(a) -> np.ndarray:
    """Coerce a SystemOperator / DensityMatrix wrapper or array to ndarray."""
    if hasattr(a, "elements"):
        a = a.elements
    elif hasattr(a, "amplitudes"):
        a = a.amplitudes
    return np.asarray(a, dtype=complex)


@dataclass
class PureState:
    """Complex amplitude vector; `normalized=False` marks ostensible states."""

    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    def validate(self, tol: float = NORM_TOL) -> None:
        if not np.all(np.isfinite(self.amplitudes.view(float))):
            raise ValueError("non-finite amplitudes")
        if self.normalized:
            n = float(np.vdot(self.amplitudes, self.amplitudes).real)
            if abs(n - 1.0) > tol:
                raise ValueError(f"state not normalized: <psi|psi> = {n}")

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


@dataclass
class DensityMatrix:
    elements: np.ndarray

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)

    def validate(
        self,
        herm_tol: float = HERMITICITY_TOL,
        trace_tol: float = TRACE_TOL,
        pos_tol: float = POSITIVITY_TOL,
    ) -> None:
        r = self.elements
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"density matrix must be square, got {r.shape}")
        if np.max(np.abs(r - r.conj().T)) > herm_tol:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(r).real - 1.0) > trace_tol:
            raise ValueError(f"trace {np.trace(r).real} != 1")
        if np.min(np.linalg.eigvalsh(0.5 * (r + r.conj().T))) < -pos_tol:
            raise ValueError("density matrix not positive")


@dataclass
class SystemOperator:
    elements: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)
        if not np.all(np.isfinite(self.elements.view(float))):
            raise ValueError(f"operator {self.label!r} has non-finite entries")


@dataclass
class BlochVector:
    """Components of rho = (P + X sx + Y sy + Z sz)/2; norm_weight is P."""

    x: float
    y: float
    z: float
    norm_weight: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.norm_weight])


def dm_from_pure(psi) -> np.ndarray:
    """Outer product |psi><psi|, with no normalization (trace = <psi|psi>)."""
    v = _mat(psi).ravel()
    if not np.all(np.isfinite(v.view(float))):
        raise ValueError("non-finite amplitudes")
    return np.outer(v, v.conj())


def purity(rho) -> float:
    """Tr[rho^2]; requires a square matrix."""
    r = _mat(rho)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"purity needs a square matrix, got {r.shape}")
    return float(np.einsum("ij,ji->", r, r).real)


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    """Matrix square root via Hermitian eigendecomposition.

    Eigenvalues are clipped to [0, inf) first: Monte-Carlo-reconstructed
    states can carry tiny negative eigenvalues.
    """
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def quantum_fidelity(rho1, rho2) -> float:
    """Uhlmann fidelity Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)), in [0, 1]."""
    r1, r2 = _mat(rho1), _mat(rho2)
    if r1.shape != r2.shape:
        raise ValueError(f"dimension mismatch: {r1.shape} vs {r2.shape}")
    s1 = _psd_sqrt(r1)
    inner = s1 @ r2 @ s1
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(np.sum(np.sqrt(w)))


def classical_fidelity(p1, p2, representation: str = "gaussian") -> float:
    """Bhattacharyya overlap int sqrt(P1 P2) dx of two distributions.

    representation="gaussian": each argument is a (mean, variance) pair and
    the closed form sqrt(2 sqrt(v1 v2)/(v1+v2)) exp(-(m1-m2)^2/(4(v1+v2)))
    is used.  representation="grid": each argument is a (x, P) pair sampled
    on a common uniform grid.
    """
    if representation == "gaussian":
        m1, v1 = p1
        m2, v2 = p2
        if v1 <= 0 or v2 <= 0:
            raise ValueError("gaussian fidelity needs positive variances")
        pref = np.sqrt(2.0 * np.sqrt(v1 * v2) / (v1 + v2))
        return float(pref * np.exp(-((m1 - m2) ** 2) / (4.0 * (v1 + v2))))
    if representation == "grid":
        x1, f1 = p1
        x2, f2 = p2
        if len(x1) != len(x2) or not np.allclose(x1, x2):
            raise ValueError("grid fidelity needs a common grid")
        dx = x1[1] - x1[0]
        return float(np.sum(np.sqrt(np.clip(f1, 0, None) * np.clip(f2, 0, None))) * dx)
    raise ValueError(f"unknown representation {representation!r}")


def lindblad_dissipator(A, rho) -> np.ndarray:
    """D[A]rho = A rho A+ - A+A rho/2 - rho A+A / 2 (traceless)."""
    a, r = _mat(A), _mat(rho)
    if a.shape != r.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {r.shape}")
    ada = a.conj().T @ a
    return a @ r @ a.conj().T - 0.5 * (ada @ r + r @ ada)


def h_superop(A, rho) -> np.ndarray:
    """H[A]rho = A rho + rho A+ - Tr[A rho + rho A+] rho (traceless)."""
    a, r = _mat(A), _mat(rho)
    if a.shape != r.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {r.shape}")
    t = a @ r + r @ a.conj().T
    return t - np.trace(t).real * r


def bloch_decompose(rho) -> BlochVector:
    """Components of a Hermitian 2x2 matrix in the (1, sx, sy, sz)/2 basis."""
    r = _mat(rho)
    if r.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {r.shape}")
    return BlochVector(
        x=float(np.trace(SIGMA_X @ r).real),
        y=float(np.trace(SIGMA_Y @ r).real),
        z=float(np.trace(SIGMA_Z @ r).real),
        norm_weight=float(np.trace(r).real),
    )


def bloch_compose(b: BlochVector) -> np.ndarray:
    return 0.5 * (
        b.norm_weight * np.eye(2, dtype=complex)
        + b.x * SIGMA_X
        + b.y * SIGMA_Y
        + b.z * SIGMA_Z
    )
