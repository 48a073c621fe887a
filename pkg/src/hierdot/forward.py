"""
Frequency-domain diffusion approximation on a P1 triangular mesh.

Measurements are the log amplitude and phase of the boundary exitance for
every source/detector pair, ordered source-major. The Jacobian is built
with the adjoint method, reusing one sparse LU factorization of the
(complex symmetric) system matrix for all source and adjoint solves.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import NumericalError, ValidationError
from .mesh import SourceDetectorLayout, TriMesh

__all__ = [
    "PhysicsConstants",
    "OpticalField",
    "MeasurementSet",
    "assemble_system",
    "solve_forward",
    "measure",
    "jacobian",
    "add_noise",
    "DOTForward",
    "write_measurements",
    "read_measurements",
]

SPEED_OF_LIGHT = 2.99792458e11  # mm/s

# int phi_k phi_i phi_j over a triangle, in units of area / 60
_TRIPLE = np.ones((3, 3, 3))
for _i in range(3):
    for _j in range(3):
        for _k in range(3):
            _TRIPLE[_i, _j, _k] = {1: 6.0, 2: 2.0, 3: 1.0}[len({_i, _j, _k})]
_TRIPLE /= 60.0
_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass(frozen=True)
class PhysicsConstants:
    """Constants of the diffusion model.

    ``c`` defaults to the vacuum speed of light over a refractive index
    of 1.4. ``zeta`` is 1/pi in 2-D.
    """

    c: float = SPEED_OF_LIGHT / 1.4
    zeta: float = 1.0 / np.pi
    alpha: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not (self.c > 0 and self.alpha > 0):
            raise ValidationError("c and alpha must be positive")
        if self.dim == 2 and not np.isclose(self.zeta, 1.0 / np.pi):
            raise ValidationError("zeta must be 1/pi in two dimensions")

    @property
    def robin(self) -> float:
        return 2.0 * self.zeta / self.alpha


@dataclass(frozen=True, eq=False)
class OpticalField:
    """Nodal absorption ``mua`` and reduced scattering ``mus`` (1/mm)."""

    mua: np.ndarray
    mus: np.ndarray

    def __post_init__(self):
        mua = np.asarray(self.mua, dtype=float)
        mus = np.asarray(self.mus, dtype=float)
        if mua.shape != mus.shape or mua.ndim != 1:
            raise ValidationError("mua and mus must be 1-D arrays of equal length")
        object.__setattr__(self, "mua", mua)
        object.__setattr__(self, "mus", mus)

    @classmethod
    def homogeneous(cls, n, mua=0.01, mus=1.0):
        return cls(np.full(n, float(mua)), np.full(n, float(mus)))

    @classmethod
    def from_stacked(cls, x):
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n], x[n:])

    @property
    def n(self) -> int:
        return self.mua.size

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.mua, self.mus])

    def check_positive(self):
        if np.any(self.mua <= 0) or np.any(self.mus <= 0):
            bad_a = np.flatnonzero(self.mua <= 0)
            bad_s = np.flatnonzero(self.mus <= 0)
            raise ValidationError(
                f"optical coefficients must be positive "
                f"(mua <= 0 at {bad_a[:5].tolist()}, mus <= 0 at {bad_s[:5].tolist()})"
            )


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Log amplitude and phase of all source/detector pairs.

    ``y`` is ``[log|G|; arg G]`` with each block ordered source-major
    (index ``s * n_det + d``). ``ce_diag`` holds the noise variances or is
    None for noise-free data.
    """

    y: np.ndarray
    n_src: int
    n_det: int
    ce_diag: np.ndarray | None = None
    snr_db: float | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.shape != (2 * self.n_src * self.n_det,):
            raise ValidationError(
                f"y has shape {y.shape}, expected ({2 * self.n_src * self.n_det},)"
            )
        object.__setattr__(self, "y", y)
        if self.ce_diag is not None:
            ce = np.asarray(self.ce_diag, dtype=float)
            if ce.shape != y.shape or np.any(ce <= 0):
                raise ValidationError("ce_diag must be positive and match y")
            object.__setattr__(self, "ce_diag", ce)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def log_amplitude(self) -> np.ndarray:
        return self.y[: self.m // 2]

    @property
    def phase(self) -> np.ndarray:
        return self.y[self.m // 2 :]

    def pairs(self) -> np.ndarray:
        s, d = np.divmod(np.arange(self.n_src * self.n_det), self.n_det)
        return np.stack([s, d], axis=1)


class _FEMOperators:
    """Parameter-independent pieces of the discretization."""

    def __init__(self, mesh: TriMesh, layout: SourceDetectorLayout, phys):
        self.mesh = mesh
        self.layout = layout
        self.phys = phys
        elems = mesh.elements
        area = mesh.signed_areas
        grads = mesh.gradients
        self.area = area
        self.grads = grads
        # A * grad(phi_i) . grad(phi_j), per element
        self.stiff_local = area[:, None, None] * np.einsum("eia,eja->eij", grads, grads)
        self.rows = np.repeat(elems, 3, axis=1).ravel()
        self.cols = np.tile(elems, (1, 3)).ravel()
        n = mesh.n
        mass = (area[:, None, None] * _MASS).ravel()
        self.mass = sparse.csr_matrix((mass, (self.rows, self.cols)), shape=(n, n))
        be = mesh.boundary_edges
        length = np.linalg.norm(mesh.nodes[be[:, 1]] - mesh.nodes[be[:, 0]], axis=1)
        brow = np.repeat(be, 2, axis=1).ravel()
        bcol = np.tile(be, (1, 2)).ravel()
        bval = (length[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0).ravel()
        self.boundary_mass = sparse.csr_matrix((bval, (brow, bcol)), shape=(n, n))
        # scatter (m, 3) element-local values to nodes
        self.scatter = sparse.csr_matrix(
            (np.ones(elems.size), (elems.ravel(), np.arange(elems.size))),
            shape=(n, elems.size),
        )
        q, zeta = layout.strength, phys.zeta
        self.loads = phys.robin * (q / zeta) * layout.source_matrix()
        self.readout = phys.robin * layout.detector_matrix()

    def system(self, field: OpticalField) -> sparse.csc_matrix:
        phys = self.phys
        kappa = 1.0 / (phys.dim * (field.mua + field.mus))
        elems = self.mesh.elements
        kbar = kappa[elems].mean(axis=1)
        k_data = (kbar[:, None, None] * self.stiff_local).ravel()
        m_local = self.area[:, None, None] * np.einsum(
            "kij,ek->eij", _TRIPLE, field.mua[elems]
        )
        data = k_data + m_local.ravel()
        n = self.mesh.n
        K = sparse.csr_matrix((data, (self.rows, self.cols)), shape=(n, n))
        K = K + phys.robin * self.boundary_mass
        K = K.astype(complex)
        if self.layout.omega:
            K = K + (1j * self.layout.omega / phys.c) * self.mass
        return K.tocsc()


def _operators(mesh, layout, phys):
    return _FEMOperators(mesh, layout, phys)


def assemble_system(
    mesh: TriMesh,
    field: OpticalField,
    layout: SourceDetectorLayout,
    phys: PhysicsConstants = PhysicsConstants(),
) -> sparse.csc_matrix:
    """Complex symmetric FEM system matrix K(x; omega)."""
    field.check_positive()
    if field.n != mesh.n:
        raise ValidationError(f"field has {field.n} nodes, mesh has {mesh.n}")
    if layout.omega < 0:
        raise ValidationError("modulation frequency must be non-negative")
    return _operators(mesh, layout, phys).system(field)


def _factorize(K):
    try:
        return spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        diag = np.abs(K.diagonal())
        raise NumericalError(
            f"factorization failed ({exc}); |diag(K)| ranges "
            f"{diag.min():.3e}..{diag.max():.3e}"
        ) from exc


def _solve(lu, rhs):
    sol = lu.solve(np.asarray(rhs, dtype=complex))
    if not np.all(np.isfinite(sol)):
        raise NumericalError("forward solve produced non-finite values")
    return sol


def solve_forward(
    K,
    layout: SourceDetectorLayout,
    mesh: TriMesh,
    phys: PhysicsConstants = PhysicsConstants(),
) -> np.ndarray:
    """Photon density for every source, shape (n, n_src)."""
    if K.shape != (mesh.n, mesh.n):
        raise ValidationError("system matrix does not match the mesh")
    ops = _operators(mesh, layout, phys)
    return _solve(_factorize(K), ops.loads)


def _exitance_to_data(gamma, phase_check=True):
    if np.any(gamma == 0):
        raise NumericalError("zero exitance at a detector; log amplitude undefined")
    log_amp = np.log(np.abs(gamma))
    phase = np.angle(gamma)
    if phase_check and gamma.shape[1] > 1:
        jumps = np.abs(np.diff(phase, axis=1))
        if np.any(jumps >= np.pi):
            raise NumericalError("phase wraps between adjacent detectors")
    return np.concatenate([log_amp.ravel(), phase.ravel()])


def measure(
    phi: np.ndarray,
    layout: SourceDetectorLayout,
    field: OpticalField | None = None,
    phys: PhysicsConstants = PhysicsConstants(),
    mesh: TriMesh | None = None,
) -> MeasurementSet:
    """Noise-free measurements from solved photon densities."""
    phi = np.asarray(phi)
    if mesh is not None and phi.shape[0] != mesh.n:
        raise ValidationError("photon density does not match the mesh")
    readout = phys.robin * layout.detector_matrix()
    gamma = phi.T @ readout  # (n_src, n_det)
    return MeasurementSet(_exitance_to_data(gamma), layout.n_src, layout.n_det)


class DOTForward:
    """Forward map x = (mua, mus) -> y with Jacobian, for a fixed geometry.

    Parameters
    ----------
    mesh : TriMesh
    layout : SourceDetectorLayout
    phys : PhysicsConstants, optional
    """

    def __init__(self, mesh, layout, phys=PhysicsConstants()):
        self.mesh = mesh
        self.layout = layout
        self.phys = phys
        self.ops = _FEMOperators(mesh, layout, phys)

    @property
    def n_params(self) -> int:
        return 2 * self.mesh.n

    @property
    def n_data(self) -> int:
        return self.layout.n_measurements

    def _field(self, x):
        if np.size(x) != self.n_params:
            raise ValidationError(f"x has length {np.size(x)}, expected {self.n_params}")
        field = OpticalField.from_stacked(x)
        field.check_positive()
        return field

    def fields(self, x):
        """Photon densities, adjoint fields and exitance at x."""
        field = self._field(x)
        lu = _factorize(self.ops.system(field))
        phi = _solve(lu, self.ops.loads)
        psi = _solve(lu, self.ops.readout)
        gamma = phi.T @ self.ops.readout
        return field, phi, psi, gamma

    def evaluate(self, x) -> np.ndarray:
        field = self._field(x)
        lu = _factorize(self.ops.system(field))
        phi = _solve(lu, self.ops.loads)
        return _exitance_to_data(phi.T @ self.ops.readout)

    def linearize(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Return A(x) and the Jacobian dA/dx, shape (m, 2n)."""
        field, phi, psi, gamma = self.fields(x)
        y = _exitance_to_data(gamma)
        dgamma_mua, dgamma_mus = self._complex_sensitivities(field, phi, psi)
        # d log G = dG / G; real part -> log amplitude, imaginary part -> phase
        ns, nd = gamma.shape
        inv = (1.0 / gamma).reshape(ns * nd, 1)
        dlog = np.concatenate(
            [dgamma_mua.reshape(-1, ns * nd).T, dgamma_mus.reshape(-1, ns * nd).T],
            axis=1,
        )
        dlog *= inv
        return y, np.concatenate([dlog.real, dlog.imag], axis=0)

    def _complex_sensitivities(self, field, phi, psi, chunk=2048):
        """dG_sd/dmua_k and dG_sd/dmus_k, each shape (n, n_src, n_det)."""
        mesh = self.mesh
        elems = mesh.elements
        ns, nd = phi.shape[1], psi.shape[1]
        stiff = np.zeros((mesh.n, ns * nd), dtype=complex)
        mass = np.zeros((mesh.n, ns * nd), dtype=complex)
        for start in range(0, mesh.n_elements, chunk):
            sl = slice(start, start + chunk)
            e = elems[sl]
            area = self.ops.area[sl]
            g = self.ops.grads[sl]
            scatter = self.ops.scatter[:, 3 * start : 3 * start + 3 * len(e)]
            ph = phi[e]  # (E, 3, ns)
            ps = psi[e]  # (E, 3, nd)
            gt = g.transpose(0, 2, 1)
            gphi = np.matmul(gt, ph)  # (E, 2, ns)
            gpsi = np.matmul(gt, ps)
            # kappa is P1, so d/dkappa_k of the element stiffness is A/3 grad.grad
            s_el = (area / 3.0)[:, None, None] * np.matmul(gphi.transpose(0, 2, 1), gpsi)
            # sum_ij (int l_k l_i l_j) psi_i phi_j, using
            # 60/A int l_k l_i l_j = 1 + d_ki + d_kj + d_ij + 2 d_ki d_kj
            s_ph = ph.sum(axis=1)
            s_ps = ps.sum(axis=1)
            base = s_ph[:, :, None] * s_ps[:, None, :] + np.matmul(ph.transpose(0, 2, 1), ps)
            m_el = (
                base[:, None]
                + ps[:, :, None, :] * s_ph[:, None, :, None]
                + ph[:, :, :, None] * (s_ps[:, None, None, :] + 2 * ps[:, :, None, :])
            )
            m_el *= (area / 60.0)[:, None, None, None]
            stiff += scatter @ np.repeat(s_el.reshape(len(e), 1, -1), 3, axis=1).reshape(
                3 * len(e), -1
            )
            mass += scatter @ m_el.reshape(3 * len(e), -1)
        stiff = stiff.reshape(mesh.n, ns, nd)
        mass = mass.reshape(mesh.n, ns, nd)
        kappa = 1.0 / (self.phys.dim * (field.mua + field.mus))
        dkappa = (-self.phys.dim * kappa**2)[:, None, None]
        # dG/dx = -psi^T (dK/dx) phi
        d_mua = -(mass + dkappa * stiff)
        d_mus = -(dkappa * stiff)
        return d_mua, d_mus


def jacobian(
    mesh: TriMesh,
    field: OpticalField,
    layout: SourceDetectorLayout,
    phys: PhysicsConstants = PhysicsConstants(),
) -> np.ndarray:
    """Jacobian of y with respect to (mua, mus), shape (m, 2n)."""
    if field.n != mesh.n:
        raise ValidationError(f"field has {field.n} nodes, mesh has {mesh.n}")
    return DOTForward(mesh, layout, phys).linearize(field.stacked)[1]


def add_noise(data: MeasurementSet, level: float, seed: int | None = None) -> MeasurementSet:
    """Add white Gaussian noise scaled to each data block's maximum magnitude.

    The standard deviation of each block (log amplitude, phase) is
    ``level * max|block|``; ``ce_diag`` is set to the squared deviations.
    """
    if not level > 0:
        raise ValidationError(f"noise level must be positive, got {level}")
    rng = np.random.default_rng(seed)
    half = data.m // 2
    sigma = np.empty(data.m)
    sigma[:half] = level * np.max(np.abs(data.log_amplitude))
    sigma[half:] = level * np.max(np.abs(data.phase))
    sigma[sigma == 0] = level
    noise = sigma * rng.standard_normal(data.m)
    snr = 10 * np.log10(np.sum(data.y**2) / np.sum(noise**2))
    return replace(data, y=data.y + noise, ce_diag=sigma**2, snr_db=float(snr))


_CSV_HEADER = ["src", "det", "log_amp", "phase", "var_log_amp", "var_phase"]


def write_measurements(data: MeasurementSet, path) -> None:
    half = data.m // 2
    ce = data.ce_diag if data.ce_diag is not None else np.full(data.m, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_CSV_HEADER)
        for k, (s, d) in enumerate(data.pairs()):
            w.writerow(
                [int(s), int(d)]
                + [repr(float(v)) for v in (data.y[k], data.y[half + k], ce[k], ce[half + k])]
            )


def read_measurements(path) -> MeasurementSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise ValidationError(f"{path}: expected header {','.join(_CSV_HEADER)}")
        rows = [r for r in reader if r]
    src = np.array([int(r[0]) for r in rows])
    det = np.array([int(r[1]) for r in rows])
    vals = np.array([[float(v) for v in r[2:]] for r in rows])
    n_src, n_det = src.max() + 1, det.max() + 1
    if len(rows) != n_src * n_det or np.any(src * n_det + det != np.arange(len(rows))):
        raise ValidationError(f"{path}: rows are not a complete source-major grid")
    y = np.concatenate([vals[:, 0], vals[:, 1]])
    ce = np.concatenate([vals[:, 2], vals[:, 3]])
    if np.all(np.isnan(ce)):
        ce = None
    elif np.any(np.isnan(ce)):
        warnings.warn(f"{path}: partial variances ignored")
        ce = None
    return MeasurementSet(y, int(n_src), int(n_det), ce)
