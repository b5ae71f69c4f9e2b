"""Linearly constrained convex problems: min f(x) subject to Ax = b.

Instances are immutable bundles of oracles. Quadratic objectives carry their
matrices so the saddle solver and the compiled integrator can use them
directly; general objectives only need ``objective`` and ``gradient`` (plus
``hessian`` for Newton saddle solves).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InfeasibleConstraints, KktInconsistent, NotPSD

FEASIBILITY_RTOL = 1e-10
PSD_TOL = 1e-10
SYMMETRY_TOL = 1e-12
KKT_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """f(x) = 0.5 x^T Q x + q^T x + r."""

    Q: np.ndarray
    linear_term: np.ndarray
    constant_term: float = 0.0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float, ndmin=2)
        q = np.array(self.linear_term, dtype=float).reshape(-1)
        if Q.shape != (q.size, q.size):
            raise DimensionMismatch(f"Q has shape {Q.shape}, linear term has size {q.size}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > SYMMETRY_TOL:
            raise NotPSD("Q is not symmetric")
        if q.size and np.linalg.eigvalsh(Q)[0] < -PSD_TOL:
            raise NotPSD(f"smallest eigenvalue of Q is {np.linalg.eigvalsh(Q)[0]:.3e}")
        Q.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "linear_term", q)
        object.__setattr__(self, "constant_term", float(self.constant_term))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.linear_term @ x + self.constant_term)

    def gradient(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.linear_term

    def hessian(self, x=None):
        return self.Q


@dataclass(frozen=True, eq=False)
class SolutionOracle:
    min_norm_primal: np.ndarray
    min_norm_dual: np.ndarray
    optimal_value: float

    @property
    def stacked(self):
        return np.concatenate([self.min_norm_primal, self.min_norm_dual])

    @property
    def norm(self):
        return float(np.linalg.norm(self.stacked))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    constraint_matrix: np.ndarray
    constraint_rhs: np.ndarray
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quadratic: Optional[QuadraticObjective] = None
    oracle: Optional[SolutionOracle] = None
    name: str = "custom"
    _dim_primal: int = field(default=0, repr=False)

    def __post_init__(self):
        A = np.array(self.constraint_matrix, dtype=float)
        b = np.array(self.constraint_rhs, dtype=float).reshape(-1)
        if A.ndim != 2:
            A = A.reshape(b.size, -1) if A.size else np.zeros((b.size, self._dim_primal))
        if A.shape[0] != b.size:
            raise DimensionMismatch(f"A has {A.shape[0]} rows but b has {b.size} entries")
        if self.quadratic is not None and self.quadratic.linear_term.size != A.shape[1]:
            raise DimensionMismatch("objective and constraint dimensions differ")
        if b.size:
            x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
            if np.linalg.norm(A @ x_ls - b) > FEASIBILITY_RTOL * (1.0 + np.linalg.norm(b)):
                raise InfeasibleConstraints("no x satisfies Ax = b")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "constraint_matrix", A)
        object.__setattr__(self, "constraint_rhs", b)

    @property
    def dim_primal(self):
        return self.constraint_matrix.shape[1]

    @property
    def dim_dual(self):
        return self.constraint_matrix.shape[0]

    @property
    def A(self):
        return self.constraint_matrix

    @property
    def b(self):
        return self.constraint_rhs

    def residual(self, x):
        return self.constraint_matrix @ x - self.constraint_rhs

    def kkt_residual(self, x, lam):
        """Norms of the stationarity and feasibility lines of the KKT system."""
        stat = self.gradient(x) + self.constraint_matrix.T @ lam
        return float(np.linalg.norm(stat)), float(np.linalg.norm(self.residual(x)))

    def with_oracle(self, oracle):
        return ProblemInstance(
            self.objective, self.gradient, self.constraint_matrix, self.constraint_rhs,
            hessian=self.hessian, quadratic=self.quadratic, oracle=oracle, name=self.name,
        )


def gradient_check(instance, n_points=20, seed=0, scale=2.0):
    """Worst relative central-difference error of the gradient oracle.

    Step per point is 1e-6 * (1 + ||x||); error is measured as
    ||g_fd - g|| / (1 + ||g||).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = instance.dim_primal
    for _ in range(n_points):
        x = scale * rng.standard_normal(n)
        h = 1e-6 * (1.0 + np.linalg.norm(x))
        g = np.asarray(instance.gradient(x), dtype=float)
        fd = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd[i] = (instance.objective(x + e) - instance.objective(x - e)) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - g) / (1.0 + np.linalg.norm(g)))
    return worst


def build_instance(objective, gradient, A, b, hessian=None, oracle=None, name="custom"):
    """General (non-quadratic) instance; the caller supplies any oracle."""
    A = np.asarray(A, dtype=float)
    inst = ProblemInstance(objective, gradient, A, b, hessian=hessian, oracle=oracle,
                           name=name, _dim_primal=A.shape[-1] if A.ndim == 2 else 0)
    err = gradient_check(inst, n_points=5)
    if err > 1e-5:
        raise ValueError(f"gradient oracle disagrees with objective (relative error {err:.2e})")
    return inst


def build_quadratic(Q, q, r, A, b, name="quadratic", oracle=None):
    quad = QuadraticObjective(Q, q, r)
    n = quad.linear_term.size
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.size == 0:
        A = np.zeros((b.size, n))
    A = A.reshape(-1, n) if A.ndim == 1 else A
    if A.shape[1] != n:
        raise DimensionMismatch(f"A has {A.shape[1]} columns, objective has dimension {n}")
    return ProblemInstance(quad, quad.gradient, A, b, hessian=quad.hessian,
                           quadratic=quad, oracle=oracle, name=name)


def solve_min_norm_kkt(instance):
    """Minimum-norm primal-dual solution of a quadratic instance.

    The KKT set of a quadratic program is the solution set of the linear
    system [Q A^T; A 0] (x; lam) = (-q; b); its least-norm solution is the
    minimum-norm element of that set.
    """
    quad = instance.quadratic
    if quad is None:
        raise TypeError("solve_min_norm_kkt needs a quadratic instance")
    n, m = instance.dim_primal, instance.dim_dual
    A = instance.A
    K = np.block([[quad.Q, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([-quad.linear_term, instance.b])
    z, *_ = np.linalg.lstsq(K, rhs, rcond=KKT_RCOND)
    if np.linalg.norm(K @ z - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        raise KktInconsistent("the KKT system has no solution")
    x, lam = z[:n], z[n:]
    return SolutionOracle(x, lam, quad(x))


def build_paper_problem():
    """min (x1 - x2)^2 + x3^2  s.t.  x1 - x2 + x3 = 2, with its known solution."""

    def f(x):
        return float((x[0] - x[1]) ** 2 + x[2] ** 2)

    def grad(x):
        d = 2.0 * (x[0] - x[1])
        return np.array([d, -d, 2.0 * x[2]])

    Q = np.array([[2.0, -2.0, 0.0], [-2.0, 2.0, 0.0], [0.0, 0.0, 2.0]])
    quad = QuadraticObjective(Q, np.zeros(3), 0.0)
    oracle = SolutionOracle(np.array([0.5, -0.5, 1.0]), np.array([-2.0]), 2.0)
    return ProblemInstance(f, grad, np.array([[1.0, -1.0, 1.0]]), np.array([2.0]),
                           hessian=quad.hessian, quadratic=quad, oracle=oracle, name="paper")


BUILTIN_PROBLEMS = {"paper": build_paper_problem}


def load_instance(path):
    """Read an instance description (JSON).

    Keys: ``Q`` and ``A`` as row-major nested lists, ``q``, ``r``, ``b``, and an
    optional ``oracle`` block with ``x_star``, ``lambda_star``, ``f_star``.
    Without an oracle block the min-norm solution is computed.
    """
    doc = json.loads(Path(path).read_text())
    unknown = set(doc) - {"Q", "q", "r", "A", "b", "oracle", "name"}
    if unknown:
        raise ValueError(f"unknown instance keys: {sorted(unknown)}")
    n = len(doc["q"])
    A = np.array(doc.get("A", []), dtype=float).reshape(-1, n)
    inst = build_quadratic(doc["Q"], doc["q"], doc.get("r", 0.0), A, doc.get("b", []),
                           name=doc.get("name", Path(path).stem))
    if "oracle" in doc:
        o = doc["oracle"]
        oracle = SolutionOracle(np.array(o["x_star"], dtype=float),
                                np.array(o["lambda_star"], dtype=float).reshape(-1),
                                float(o["f_star"]))
    else:
        oracle = solve_min_norm_kkt(inst)
    return inst.with_oracle(oracle)


def dump_instance(instance, path):
    quad = instance.quadratic
    if quad is None:
        raise TypeError("only quadratic instances can be serialized")
    doc = {
        "name": instance.name,
        "Q": quad.Q.tolist(),
        "q": quad.linear_term.tolist(),
        "r": quad.constant_term,
        "A": instance.A.tolist(),
        "b": instance.b.tolist(),
    }
    if instance.oracle is not None:
        o = instance.oracle
        doc["oracle"] = {"x_star": o.min_norm_primal.tolist(),
                         "lambda_star": o.min_norm_dual.tolist(),
                         "f_star": o.optimal_value}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def resolve_instance(ref):
    """Built-in name or path to an instance file."""
    if ref in BUILTIN_PROBLEMS:
        return BUILTIN_PROBLEMS[ref]()
    return load_instance(ref)


def random_quadratic(seed=0, n=6, m=2, rank=3):
    """Seeded convex quadratic with a rank-deficient Hessian and feasible constraints.

    The Hessian has rank ``rank`` < n, so the primal solution set is a
    nontrivial affine set and the minimum-norm selection matters.
    """
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, rank))
    Q = B @ B.T
    q = B @ rng.standard_normal(rank)
    A = rng.standard_normal((m, n))
    b = A @ rng.standard_normal(n)
    inst = build_quadratic(Q, q, 0.0, A, b, name=f"random-{seed}")
    return inst.with_oracle(solve_min_norm_kkt(inst))
