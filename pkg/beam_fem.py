"""
Hermite Cubic Finite Elements for the Clamped Kelvin-Voigt Beam
Builds the graded mesh, assembles mass, stiffness and damping matrices,
eliminates the clamped degrees of freedom and evaluates the discrete energy
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from damping_model import MIN_ELEMENTS, DampingProfile, eval_damping
from lab_errors import QuadratureError
from quadrature import integrate_adaptive

logger = logging.getLogger(__name__)

DOFS_PER_NODE = 2


@dataclass(frozen=True)
class Mesh:
    """Nodes from -1 to 1 with a node at the interface x = 0"""

    nodes: np.ndarray
    grading: float

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def interface_node(self) -> int:
        return int(np.flatnonzero(self.nodes == 0.0)[0])

    @property
    def n_global_dofs(self) -> int:
        return DOFS_PER_NODE * len(self.nodes)

    def element_dofs(self, element: int) -> np.ndarray:
        return np.arange(DOFS_PER_NODE * element, DOFS_PER_NODE * element + 4)


@dataclass
class StateVector:
    """Displacement and velocity coefficients in the free DOF space"""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u)
        self.v = np.asarray(self.v)
        if self.u.shape != self.v.shape:
            raise ValueError(f"u and v must have the same shape, got {self.u.shape} and {self.v.shape}")

    @classmethod
    def zeros(cls, n: int, dtype=float) -> "StateVector":
        return cls(np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype))

    @classmethod
    def from_stacked(cls, w: np.ndarray) -> "StateVector":
        n = len(w) // 2
        return cls(w[:n].copy(), w[n:].copy())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])

    def scaled(self, c: complex) -> "StateVector":
        return StateVector(c * self.u, c * self.v)

    def __len__(self) -> int:
        return len(self.u)


@dataclass
class AssembledSystem:
    """Assembled beam operator on the free DOFs (clamped DOFs eliminated)"""

    mesh: Mesh
    profile: DampingProfile
    M: sp.csc_matrix
    K: sp.csc_matrix
    D: sp.csc_matrix
    G: sp.csc_matrix
    dof_map: np.ndarray

    @property
    def n_dof(self) -> int:
        return len(self.dof_map)


def build_mesh(n_elements: int, grading: float = 1.0) -> Mesh:
    """
    Uniform mesh on (-1, 0) and a geometrically graded mesh on (0, 1).

    With grading g > 1 consecutive element lengths on (0, 1) grow by the
    factor g away from x = 0, normalized so that they sum to 1.
    """
    if n_elements < MIN_ELEMENTS:
        raise ValueError(f"n_elements must be >= {MIN_ELEMENTS}, got {n_elements}")
    if n_elements % 2 != 0:
        raise ValueError(f"n_elements must be even, got {n_elements}")
    if not grading >= 1.0:
        raise ValueError(f"grading must be >= 1, got {grading}")

    half = n_elements // 2
    left = np.linspace(-1.0, 0.0, half + 1)

    if grading == 1.0:
        right = np.linspace(0.0, 1.0, half + 1)
    else:
        sizes = grading ** np.arange(half)
        sizes /= sizes.sum()
        right = np.concatenate([[0.0], np.cumsum(sizes)])
        right[-1] = 1.0

    nodes = np.concatenate([left, right[1:]])
    nodes[half] = 0.0
    return Mesh(nodes=nodes, grading=float(grading))


def element_stiffness(h: float) -> np.ndarray:
    """Exact int N_i'' N_j'' over an element of length h"""
    return (1.0 / h ** 3) * np.array(
        [
            [12.0, 6.0 * h, -12.0, 6.0 * h],
            [6.0 * h, 4.0 * h ** 2, -6.0 * h, 2.0 * h ** 2],
            [-12.0, -6.0 * h, 12.0, -6.0 * h],
            [6.0 * h, 2.0 * h ** 2, -6.0 * h, 4.0 * h ** 2],
        ]
    )


def element_mass(h: float) -> np.ndarray:
    """Exact consistent mass int N_i N_j over an element of length h"""
    return (h / 420.0) * np.array(
        [
            [156.0, 22.0 * h, 54.0, -13.0 * h],
            [22.0 * h, 4.0 * h ** 2, 13.0 * h, -3.0 * h ** 2],
            [54.0, 13.0 * h, 156.0, -22.0 * h],
            [-13.0 * h, -3.0 * h ** 2, -22.0 * h, 4.0 * h ** 2],
        ]
    )


def curvature_coefficients(h: float) -> Tuple[np.ndarray, np.ndarray]:
    """N_i''(x) = B0[i] + xi * B1[i] with xi = (x - x_a) / h"""
    b0 = np.array([-6.0 / h ** 2, -4.0 / h, 6.0 / h ** 2, -2.0 / h])
    b1 = np.array([12.0 / h ** 2, 6.0 / h, -12.0 / h ** 2, 6.0 / h])
    return b0, b1


def damping_moments(profile: DampingProfile, a: float, b: float, quad_tol: float) -> np.ndarray:
    """m_k = int_a^b b(x) xi**k dx for k = 0, 1, 2, with xi = (x - a) / (b - a)"""
    if b <= 0.0 or profile.kappa == 0.0:
        return np.zeros(3)

    h = b - a

    def weighted(x):
        xi = (x - a) / h
        bx = eval_damping(profile, x)
        return np.vstack([bx, bx * xi, bx * xi * xi])

    moments = integrate_adaptive(
        weighted,
        a,
        b,
        tol=quad_tol,
        rel_tol=1e-13,
        singular_left=(a == 0.0),
        label=f"damping moments on [{a:.6g}, {b:.6g}] (alpha={profile.alpha})",
    )
    return np.asarray(moments, dtype=float)


def element_damping(profile: DampingProfile, a: float, b: float, quad_tol: float) -> np.ndarray:
    """int b N_i'' N_j'' over [a, b] built from the three weighted moments"""
    h = b - a
    b0, b1 = curvature_coefficients(h)
    # entries scale like 1/h**4 times a moment
    moment_tol = quad_tol * h ** 4 / 600.0
    m0, m1, m2 = damping_moments(profile, a, b, moment_tol)
    cross = np.outer(b0, b1)
    return m0 * np.outer(b0, b0) + m1 * (cross + cross.T) + m2 * np.outer(b1, b1)


def free_dofs(mesh: Mesh) -> np.ndarray:
    """Global indices that survive clamping u = u' = 0 at x = -1 and x = 1"""
    last = mesh.n_global_dofs
    return np.arange(DOFS_PER_NODE, last - DOFS_PER_NODE)


def assemble(mesh: Mesh, profile: DampingProfile, quad_tol: float = 1e-10) -> AssembledSystem:
    """Assemble M, K, D and the energy Gram matrix G = diag(K, M)"""
    rows, cols = [], []
    mass_vals, stiff_vals, damp_vals = [], [], []

    for element, (a, b) in enumerate(zip(mesh.nodes[:-1], mesh.nodes[1:])):
        h = b - a
        dofs = mesh.element_dofs(element)
        r, c = np.meshgrid(dofs, dofs, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        mass_vals.append(element_mass(h).ravel())
        stiff_vals.append(element_stiffness(h).ravel())

        try:
            damp_vals.append(element_damping(profile, a, b, quad_tol).ravel())
        except QuadratureError as e:
            raise QuadratureError(f"element {element} [{a:.6g}, {b:.6g}], alpha={profile.alpha}: {e}") from e

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = mesh.n_global_dofs
    free = free_dofs(mesh)

    def build(values):
        full = sp.coo_matrix((np.concatenate(values), (rows, cols)), shape=(n, n)).tocsc()
        return full[free][:, free].tocsc()

    M = build(mass_vals)
    K = build(stiff_vals)
    D = build(damp_vals)
    G = sp.block_diag((K, M), format="csc")

    logger.info(
        f"Assembled beam: {mesh.n_elements} elements, {len(free)} free DOFs, "
        f"alpha={profile.alpha}, kappa={profile.kappa}, D nnz={D.count_nonzero()}"
    )
    return AssembledSystem(mesh=mesh, profile=profile, M=M, K=K, D=D, G=G, dof_map=free)


def _check_dims(sys: AssembledSystem, s: StateVector):
    if len(s.u) != sys.n_dof:
        raise ValueError(f"state has {len(s.u)} DOFs, system has {sys.n_dof}")


def energy(sys: AssembledSystem, s: StateVector) -> float:
    """E = 1/2 (u^H K u + v^H M v)"""
    _check_dims(sys, s)
    strain = np.vdot(s.u, sys.K @ s.u).real
    kinetic = np.vdot(s.v, sys.M @ s.v).real
    return 0.5 * (strain + kinetic)


def dissipation_rate(sys: AssembledSystem, s: StateVector) -> float:
    """int b |v''|^2 = v^H D v"""
    _check_dims(sys, s)
    return float(np.vdot(s.v, sys.D @ s.v).real)


def g_inner(sys: AssembledSystem, x: StateVector, y: StateVector) -> complex:
    """Energy inner product <x, y>_G = y^H K x + y^H M x on the stacked states"""
    return np.vdot(y.u, sys.K @ x.u) + np.vdot(y.v, sys.M @ x.v)


def g_norm(sys: AssembledSystem, x: StateVector) -> float:
    return float(np.sqrt(max(g_inner(sys, x, x).real, 0.0)))


def generalized_eigenvalues(sys: AssembledSystem, k: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Smallest k eigenpairs of K x = mu M x (dense, for moderate meshes)"""
    values, vectors = scipy.linalg.eigh(sys.K.toarray(), sys.M.toarray(), subset_by_index=[0, k - 1])
    return values, vectors


def to_global(sys: AssembledSystem, u: np.ndarray) -> np.ndarray:
    full = np.zeros(sys.mesh.n_global_dofs, dtype=np.result_type(u, float))
    full[sys.dof_map] = u
    return full


def interpolate_state(
    mesh: Mesh, func: Callable[[np.ndarray], np.ndarray], dfunc: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Hermite interpolation (nodal values and slopes) restricted to the free DOFs"""
    full = np.empty(mesh.n_global_dofs)
    full[0::2] = func(mesh.nodes)
    full[1::2] = dfunc(mesh.nodes)
    return full[free_dofs(mesh)]


def evaluate_second_derivative(sys: AssembledSystem, u: np.ndarray, x: Union[float, np.ndarray]) -> np.ndarray:
    """u''(x) of the finite element function with free coefficients u"""
    mesh = sys.mesh
    full = to_global(sys, u)
    points = np.atleast_1d(np.asarray(x, dtype=float))
    elements = np.clip(np.searchsorted(mesh.nodes, points, side="right") - 1, 0, mesh.n_elements - 1)

    result = np.empty(points.shape, dtype=full.dtype)
    for i, (point, element) in enumerate(zip(points, elements)):
        a, b = mesh.nodes[element], mesh.nodes[element + 1]
        b0, b1 = curvature_coefficients(b - a)
        xi = (point - a) / (b - a)
        result[i] = (b0 + xi * b1) @ full[mesh.element_dofs(element)]
    return result


def second_derivative_jump(sys: AssembledSystem, u: np.ndarray, node: int) -> complex:
    """u''(node+) - u''(node-) for an interior node"""
    mesh = sys.mesh
    if not 0 < node < len(mesh.nodes) - 1:
        raise ValueError(f"node {node} is not interior")
    full = to_global(sys, u)

    h_left = mesh.lengths[node - 1]
    b0, b1 = curvature_coefficients(h_left)
    left = (b0 + b1) @ full[mesh.element_dofs(node - 1)]

    h_right = mesh.lengths[node]
    b0, _ = curvature_coefficients(h_right)
    right = b0 @ full[mesh.element_dofs(node)]
    return right - left


def export_matrix(matrix: sp.spmatrix, path: Union[str, Path]) -> Path:
    """Coordinate triplet text: header 'rows cols nnz', then 1-based 'row col value'"""
    coo = sp.coo_matrix(matrix)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    path = Path(path)
    with open(path, "w") as f:
        f.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            f.write(f"{r + 1} {c + 1} {v:.17g}\n")
    logger.info(f"Exported {coo.shape[0]}x{coo.shape[1]} matrix ({coo.nnz} entries) to {path}")
    return path
