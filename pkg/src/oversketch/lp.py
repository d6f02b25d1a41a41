"""Logarithmic-barrier LP solver with an optionally sketched Newton system.

Solves   minimize c^T x  subject to  A x <= b   (A is n x m, n > m)
by Newton steps on the barrier objective

    f(x) = tau * c^T x - sum_i log(b_i - a_i^T x),

doubling tau every `tau_double_every` iterations. The Hessian is
A^T diag(1/s_i^2) A with slacks s = b - A x; its square root
diag(1/|s_i|) A is what gets sketched: the per-iteration Hessian is either
the exact product or the sketched product (S^T R)^T (S^T R) with
R = hessian_sqrt, computed as a distributed blocked multiply under the
simulator. Sketching itself is performed locally (cheap, linear time); the
simulated waves cover the block-product workers and the reduction, which
is also how the worker budget of the distributed experiment is defined.

Per-iteration time bookkeeping: `compute_s` is the block-product wave
wall-clock (where per-block straggler ignoring acts), `reduction_s` the
reduction wave (reused healthy workers: no stragglers, no invocation
charge), and `invocation_s` one worker-launch overhead per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multiply import oversketch_multiply
from .simulator import Simulator


class InfeasiblePointError(ValueError):
    """An iterate (or start) violates strict feasibility b - Ax > 0."""


class HessianDegenerateError(RuntimeError):
    """Sketched Hessian not positive definite even after regularization."""


class LineSearchError(RuntimeError):
    """Backtracking failed to find an acceptable feasible step."""


@dataclass(frozen=True)
class BarrierProblem:
    a: np.ndarray  # n x m constraint matrix
    b: np.ndarray  # length-n right-hand side
    c: np.ndarray  # length-m objective
    tau0: float = 1.0
    iterations: int = 100
    tau_double_every: int = 10

    def __post_init__(self) -> None:
        # zero constraints are legal (the barrier term just vanishes), so the
        # general matrix validator is not used here
        a = np.asarray(self.a, dtype=np.float64, order="C")
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] < 1:
            raise ValueError(f"constraint matrix must be 2-D with >= 1 column, got {a.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("problem data must be finite")
        if b.shape != (a.shape[0],) or c.shape != (a.shape[1],):
            raise ValueError(
                f"inconsistent shapes: A {a.shape}, b {b.shape}, c {c.shape}"
            )
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if self.iterations < 0 or self.tau_double_every < 1:
            raise ValueError("invalid iteration schedule")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n_constraints(self) -> int:
        return self.a.shape[0]

    @property
    def n_variables(self) -> int:
        return self.a.shape[1]

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.b - self.a @ x

    def tau_at(self, iteration: int) -> float:
        return self.tau0 * 2.0 ** (iteration // self.tau_double_every)


def _strict_slacks(problem: BarrierProblem, x: np.ndarray) -> np.ndarray:
    s = problem.slacks(np.asarray(x, dtype=np.float64))
    if np.any(s <= 0.0):
        raise InfeasiblePointError("iterate violates strict feasibility b - Ax > 0")
    return s


def barrier_value(problem: BarrierProblem, x, tau: float) -> float:
    s = _strict_slacks(problem, x)
    return float(tau * (problem.c @ x) - np.sum(np.log(s)))


def gradient(problem: BarrierProblem, x, tau: float) -> np.ndarray:
    """tau * c + sum_i a_i / s_i, the exact barrier gradient."""
    s = _strict_slacks(problem, x)
    return tau * problem.c + problem.a.T @ (1.0 / s)


def hessian_sqrt(problem: BarrierProblem, x) -> np.ndarray:
    """diag(1/|s_i|) A; its Gram matrix is the barrier Hessian."""
    s = _strict_slacks(problem, x)
    return problem.a / s[:, None]


def hessian(problem: BarrierProblem, x) -> np.ndarray:
    r = hessian_sqrt(problem, x)
    return r.T @ r


@dataclass(frozen=True)
class SketchedHessian:
    """Configuration for computing the Hessian via the sketched multiply."""

    block_size: int
    keep: int
    spare: int
    seed: int = 0
    fresh_seed_each_iteration: bool = True

    def seed_for(self, iteration: int) -> int:
        return self.seed + iteration if self.fresh_seed_each_iteration else self.seed


@dataclass
class IterationRecord:
    iteration: int
    tau: float
    objective: float
    barrier: float
    newton_decrement: float
    compute_s: float = 0.0
    reduction_s: float = 0.0
    invocation_s: float = 0.0

    @property
    def total_s(self) -> float:
        return self.compute_s + self.reduction_s + self.invocation_s


@dataclass
class LPResult:
    x: np.ndarray
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.records[-1].objective if self.records else float("nan")

    def cumulative_compute_s(self) -> float:
        return sum(r.compute_s for r in self.records)

    def percentage_errors(self, reference_objective: float) -> list[float]:
        ref = abs(reference_objective)
        if ref == 0.0:
            raise ValueError("reference objective must be nonzero")
        return [100.0 * abs(r.objective - reference_objective) / ref for r in self.records]


def _sketched_hessian(
    problem: BarrierProblem,
    x: np.ndarray,
    mode: SketchedHessian,
    sim: Simulator,
    iteration: int,
) -> tuple[np.ndarray, float, float]:
    root = hessian_sqrt(problem, x)
    outcome = oversketch_multiply(
        root.T,
        root,
        block_size=mode.block_size,
        keep=mode.keep,
        spare=mode.spare,
        sim=sim,
        seed=mode.seed_for(iteration),
        simulate_sketch=False,
        reduction_invocation_s=0.0,
    )
    waves = sim.trace.waves[-2:]
    compute_s = waves[0].wallclock_s
    reduction_s = waves[1].wallclock_s
    # per-block drops can land asymmetrically; restore exact symmetry
    h = 0.5 * (outcome.product + outcome.product.T)
    return h, compute_s, reduction_s


def _solve_newton_system(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H d = g with escalating diagonal damping.

    Per-block straggler drops can leave the sketched Hessian indefinite, so
    the initial 1e-8 * trace/m shift is escalated tenfold until a Cholesky
    factorization succeeds; heavy damping only shortens the step toward a
    scaled gradient direction, which the line search handles.
    """
    m = h.shape[0]
    reg = 1e-8 * np.trace(h) / m
    eye = np.eye(m)
    for _ in range(40):
        try:
            chol = np.linalg.cholesky(h + reg * eye)
        except np.linalg.LinAlgError:
            reg *= 10.0
            continue
        w = np.linalg.solve(chol, g)
        return np.linalg.solve(chol.T, w)
    raise HessianDegenerateError(
        "sketched Hessian is not positive definite even under heavy damping"
    )


def newton_step(
    problem: BarrierProblem,
    x: np.ndarray,
    tau: float,
    h: np.ndarray,
    armijo: float = 0.1,
    shrink: float = 0.5,
    boundary_fraction: float = 0.99,
    max_backtracks: int = 60,
) -> tuple[np.ndarray, float]:
    """One damped Newton update; returns (next iterate, Newton decrement).

    The step is capped at boundary_fraction of the largest feasible step,
    then backtracked until the Armijo condition on the barrier objective
    holds. Every accepted iterate stays strictly feasible.
    """
    g = gradient(problem, x, tau)
    direction = -_solve_newton_system(h, g)
    decrement = float(np.sqrt(max(0.0, -(g @ direction))))

    s = _strict_slacks(problem, x)
    rate = problem.a @ direction
    tightening = rate > 0.0
    step = 1.0
    if np.any(tightening):
        step = min(1.0, boundary_fraction * float(np.min(s[tightening] / rate[tightening])))

    f0 = barrier_value(problem, x, tau)
    slope = float(g @ direction)
    for _ in range(max_backtracks):
        candidate = x + step * direction
        s_new = problem.slacks(candidate)
        if np.all(s_new > 0.0):
            f_new = float(tau * (problem.c @ candidate) - np.sum(np.log(s_new)))
            if f_new <= f0 + armijo * step * slope:
                return candidate, decrement
        step *= shrink
    raise LineSearchError(f"no acceptable step after {max_backtracks} backtracks")


def solve_lp(
    problem: BarrierProblem,
    x0,
    hessian_mode: str | SketchedHessian = "exact",
    sim: Simulator | None = None,
) -> LPResult:
    """Run the barrier iteration schedule from a strictly feasible start."""
    x = np.asarray(x0, dtype=np.float64)
    s = problem.slacks(x)
    if np.any(s <= 0.0):
        raise InfeasiblePointError("starting point is not strictly feasible")
    sketched = isinstance(hessian_mode, SketchedHessian)
    if sketched and sim is None:
        raise ValueError("sketched Hessian mode needs a simulator")
    if not sketched and hessian_mode != "exact":
        raise ValueError(f"unknown hessian mode {hessian_mode!r}")

    result = LPResult(x=x)
    for t in range(problem.iterations):
        tau = problem.tau_at(t)
        compute_s = reduction_s = invocation_s = 0.0
        if sketched:
            h, compute_s, reduction_s = _sketched_hessian(problem, x, hessian_mode, sim, t)
            invocation_s = sim.invocation_s
        else:
            h = hessian(problem, x)
        x, decrement = newton_step(problem, x, tau, h)
        result.records.append(
            IterationRecord(
                iteration=t,
                tau=tau,
                objective=float(problem.c @ x),
                barrier=barrier_value(problem, x, tau),
                newton_decrement=decrement,
                compute_s=compute_s,
                reduction_s=reduction_s,
                invocation_s=invocation_s,
            )
        )
    result.x = x
    return result


def make_lp_instance(
    n_constraints: int, n_variables: int, seed: int, margin: tuple[float, float] = (0.5, 1.5)
) -> tuple[BarrierProblem, np.ndarray]:
    """Random bounded LP with x = 0 strictly feasible.

    Rows of A are scaled to unit norm, b is a positive margin (so the
    origin is interior), and c = -A^T mu with mu >= 0, which certifies that
    the objective is bounded below on the feasible set.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_constraints, n_variables))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = rng.uniform(*margin, size=n_constraints)
    mu = rng.uniform(0.0, 1.0, size=n_constraints)
    c = -(a.T @ mu) / n_constraints
    problem = BarrierProblem(a, b, c)
    return problem, np.zeros(n_variables)


def save_problem(path, problem: BarrierProblem) -> None:
    """Text format: 'n m' header, then n rows of A, then b, then c."""
    with open(path, "w") as fh:
        n, m = problem.a.shape
        fh.write(f"{n} {m}\n")
        for row in problem.a:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write(" ".join(repr(float(v)) for v in problem.b) + "\n")
        fh.write(" ".join(repr(float(v)) for v in problem.c) + "\n")


def load_problem(path, **schedule) -> BarrierProblem:
    with open(path) as fh:
        tokens = fh.read().split()
    n, m = int(tokens[0]), int(tokens[1])
    values = np.array([float(v) for v in tokens[2:]])
    if values.size != n * m + n + m:
        raise ValueError(f"problem file {path} has {values.size} values, "
                         f"expected {n * m + n + m}")
    a = values[: n * m].reshape(n, m)
    b = values[n * m : n * m + n]
    c = values[n * m + n :]
    return BarrierProblem(a, b, c, **schedule)


def reference_solution(
    problem: BarrierProblem, x0, tau0: float | None = None
) -> LPResult:
    """High-accuracy exact-Hessian run used as the error baseline.

    Boosts tau0 so the final barrier suboptimality n_constraints / tau_final
    is well under the gaps being measured.
    """
    if tau0 is None:
        tau0 = max(problem.tau0, 1e3 * problem.n_constraints)
    boosted = BarrierProblem(
        problem.a, problem.b, problem.c,
        tau0=tau0,
        iterations=problem.iterations,
        tau_double_every=problem.tau_double_every,
    )
    return solve_lp(boosted, x0, hessian_mode="exact")
