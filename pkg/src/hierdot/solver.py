"""
MAP estimation for hierarchical Gaussian priors with a nonlinear forward map.

The unknown ``u`` is either the nodal vector x (uncorrelated prior) or the
difference vector d with x = P d (difference prior). For fixed variances
``theta`` the objective::

    F(u, theta) = 0.5 * sum((y - A(x))**2 / ce)
                + 0.5 * sum(z**2 / theta) + 0.5 * sum((M u)**2 / eps**2)
                + hyper_objective_terms(theta)

(z = u - prior mean; the loop term only in difference mode) is minimised
over u by Gauss-Newton with a halving line search. The outer iteration
alternates this with the closed-form variance update.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as spla

from .errors import NumericalError, ValidationError
from .hypermodels import (
    DifferencePrior,
    Fixed,
    HyperpriorSpec,
    UncorrelatedPrior,
    hyper_objective_terms,
    update_theta,
)

__all__ = [
    "SolverConfig",
    "IASState",
    "GNResult",
    "LinearForward",
    "MAPProblem",
    "eval_objective",
    "gauss_newton_solve",
    "solve_difference_mode",
    "ias_run",
    "convergence_report",
    "write_iteration_log",
    "write_convergence_csv",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration limits.

    ``constraint_sigma`` is the loop-constraint relaxation per class; None
    selects ``1e-6 * sqrt(initial variance)`` of each class. ``floors``
    bounds each class of x from below during line searches (None disables).
    """

    eps_outer: float = 1e-5
    outer_patience: int = 3
    gn_tol: float = 1e-12
    max_outer: int = 100
    max_inner: int = 50
    max_halvings: int = 25
    constraint_sigma: tuple | float | None = None
    floors: tuple | None = (1e-5, 1e-2)

    def __post_init__(self):
        if not (self.eps_outer > 0 and self.gn_tol > 0):
            raise ValidationError("tolerances must be positive")
        if self.outer_patience < 1 or self.max_outer < 1 or self.max_inner < 1:
            raise ValidationError("iteration limits must be at least 1")


class LinearForward:
    """A(x) = A @ x, for testing the solver against linear-algebra oracles."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)

    @property
    def n_params(self):
        return self.A.shape[1]

    def evaluate(self, x):
        return self.A @ x

    def linearize(self, x):
        return self.A @ x, self.A


class MAPProblem:
    """Objective and Gauss-Newton pieces for one data set and prior."""

    def __init__(self, data, forward, prior, specs, config=SolverConfig()):
        if data.ce_diag is None:
            raise ValidationError("data has no noise variances; add noise first")
        self.y = data.y
        self.w = 1.0 / data.ce_diag
        self.sqrt_w = np.sqrt(self.w)
        self.forward = forward
        self.prior = prior
        self.config = config
        if isinstance(prior, UncorrelatedPrior):
            self.difference = False
            sizes = prior.sizes
            self.x_sizes = sizes
            self.mean = prior.mean_vector()
            self.hier = np.ones(self.mean.size, dtype=bool)
            self.P = None
            self.M = None
            init = prior.theta0
            self.initial_theta = np.concatenate(
                [np.full(s, t) for s, t in zip(sizes, init)]
            )
        elif isinstance(prior, DifferencePrior):
            self.difference = True
            st = prior.structures
            sizes = tuple(s.q for s in st)
            self.x_sizes = tuple(s.n for s in st)
            self.mean = np.concatenate(
                [np.where(s.gauge_mask, gm, 0.0) for s, gm in zip(st, prior.gauge_means)]
            )
            self.hier = np.concatenate([~s.gauge_mask for s in st])
            self.P = sparse.block_diag([s.P for s in st], format="csr")
            self.M = sparse.block_diag([s.M for s in st], format="csr")
            self.initial_theta = np.concatenate(
                [
                    np.where(s.gauge_mask, gv, t)
                    for s, gv, t in zip(st, prior.gauge_variances, prior.theta0)
                ]
            )
            sig = config.constraint_sigma
            if sig is None:
                sig = tuple(1e-6 * np.sqrt(t) for t in prior.theta0)
            elif np.isscalar(sig):
                sig = (float(sig),) * len(st)
            self.constraint_sigma = tuple(sig)
            self.constraint_w = np.concatenate(
                [np.full(s.p, 1.0 / e**2) for s, e in zip(st, sig)]
            )
            self.MtWM = (self.M.T @ sparse.diags(self.constraint_w) @ self.M).tocsr()
        else:
            raise TypeError(f"unsupported prior {prior!r}")
        bounds = np.cumsum((0,) + tuple(sizes))
        self.slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        xb = np.cumsum((0,) + tuple(self.x_sizes))
        self.x_slices = [slice(a, b) for a, b in zip(xb[:-1], xb[1:])]
        if not isinstance(specs, (tuple, list)):
            specs = (specs,) * len(sizes)
        if len(specs) != len(sizes):
            raise ValidationError(f"need {len(sizes)} hyperprior specs, got {len(specs)}")
        self.specs = tuple(specs)
        if config.floors is not None and len(config.floors) != len(self.x_sizes):
            raise ValidationError("one positivity floor per parameter class is required")

    @property
    def size(self) -> int:
        return self.mean.size

    def to_x(self, u):
        return u if self.P is None else self.P @ u

    def default_start(self):
        # in difference mode the mean holds only the gauge entries, i.e. a
        # constant background field
        return self.mean.copy()

    def feasible(self, x) -> bool:
        if not np.all(np.isfinite(x)):
            return False
        floors = self.config.floors
        if floors is None:
            return True
        return all(np.all(x[sl] > f) for sl, f in zip(self.x_slices, floors))

    def prior_terms(self, u, theta):
        z = u - self.mean
        val = 0.5 * np.sum(z**2 / theta)
        if self.difference:
            val += 0.5 * np.sum(self.constraint_w * (self.M @ u) ** 2)
        return val

    def hyper_terms(self, theta):
        total = 0.0
        for sl, spec in zip(self.slices, self.specs):
            h = self.hier[sl]
            total += hyper_objective_terms(theta[sl][h], spec)
        return total

    def misfit(self, y_model):
        return 0.5 * np.sum(self.w * (self.y - y_model) ** 2)

    def objective(self, u, theta, y_model=None):
        if y_model is None:
            y_model = self.forward.evaluate(self.to_x(u))
        return self.misfit(y_model) + self.prior_terms(u, theta) + self.hyper_terms(theta)

    def update_theta(self, u, theta):
        z = u - self.mean
        new = theta.copy()
        for sl, spec in zip(self.slices, self.specs):
            h = self.hier[sl]
            new[sl][h] = update_theta(z[sl][h], spec, theta[sl][h])
        return new

    def direction(self, u, theta, y_model, J):
        """Solve (G^T G + C^-1) delta = G^T r - C^-1 z (- M^T W M u)."""
        Ju = J if self.P is None else (self.P.T @ J.T).T
        G = self.sqrt_w[:, None] * Ju
        r = self.sqrt_w * (self.y - y_model)
        rhs = G.T @ r - (u - self.mean) / theta
        if self.difference:
            rhs -= self.MtWM @ u
            S = (sparse.diags(1.0 / theta) + self.MtWM).tocsc()
            try:
                lu = spla.splu(S, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise NumericalError(f"prior block factorization failed: {exc}") from exc
            s_solve = lu.solve
            SG = s_solve(np.ascontiguousarray(G.T))
        else:
            def s_solve(v):
                return theta * v

            SG = theta[:, None] * G.T
        cap = np.eye(G.shape[0]) + G @ SG
        try:
            cho = linalg.cho_factor(cap)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"normal equations not positive definite: {exc}") from exc

        def h_inv(v):
            sv = s_solve(v)
            return sv - SG @ linalg.cho_solve(cho, G @ sv)

        def h_mul(v):
            out = v / theta + G.T @ (G @ v)
            if self.difference:
                out += self.MtWM @ v
            return out

        delta = h_inv(rhs)
        if self.difference:
            for _ in range(2):
                delta += h_inv(rhs - h_mul(delta))
        return delta, rhs


@dataclass
class GNResult:
    unknown: np.ndarray
    F: float
    iterations: int
    line_search_failed: bool = False


@dataclass
class IASState:
    """Outer-iteration record of the alternating solver."""

    unknown: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    t: int = 0
    F_history: list = field(default_factory=list)
    x_history: list = field(default_factory=list)
    x_history_norms: list = field(default_factory=list)
    rel_changes: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    wall_seconds: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""


def _gn(problem: MAPProblem, u0, theta, config: SolverConfig) -> GNResult:
    u = np.array(u0, dtype=float)
    if not problem.feasible(problem.to_x(u)):
        raise ValidationError("starting point violates the positivity floors")
    F = None
    failed = False
    it = 0
    for it in range(1, config.max_inner + 1):
        y_model, J = problem.forward.linearize(problem.to_x(u))
        if F is None:
            F = problem.objective(u, theta, y_model)
        delta, g = problem.direction(u, theta, y_model, J)
        predicted = 0.5 * float(delta @ g)
        if predicted <= config.gn_tol:
            break
        step = 1.0
        accepted = False
        for _ in range(config.max_halvings + 1):
            trial = u + step * delta
            x_trial = problem.to_x(trial)
            if problem.feasible(x_trial):
                try:
                    F_trial = problem.objective(trial, theta)
                except (ValidationError, NumericalError):
                    F_trial = np.inf
                if F_trial < F:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            failed = predicted > 1e-9 * max(abs(F), 1.0)
            if failed:
                warnings.warn(
                    f"line search exhausted at inner iteration {it} "
                    f"(predicted decrease {predicted:.3e})",
                    RuntimeWarning,
                )
            break
        decrease = F - F_trial
        u, F = trial, F_trial
        if decrease < config.gn_tol:
            break
    if F is None:
        F = problem.objective(u, theta)
    return GNResult(u, float(F), it, failed)


def eval_objective(unknown, theta, data, forward, prior, specs, config=SolverConfig()):
    """Value of the MAP objective F(u, theta)."""
    problem = MAPProblem(data, forward, prior, specs, config)
    return float(problem.objective(np.asarray(unknown, float), np.asarray(theta, float)))


def gauss_newton_solve(x0, theta, data, forward, prior, config=SolverConfig(), specs=Fixed()):
    """Minimise F over the unknown for fixed variances (part a of the split)."""
    problem = MAPProblem(data, forward, prior, specs, config)
    return _gn(problem, x0, np.asarray(theta, float), config)


def solve_difference_mode(d0, theta, data, forward, prior, config=SolverConfig(), specs=Fixed()):
    """Gauss-Newton over differences with the relaxed loop constraints."""
    if not isinstance(prior, DifferencePrior):
        raise ValidationError("difference mode needs a DifferencePrior")
    return gauss_newton_solve(d0, theta, data, forward, prior, config, specs)


def ias_run(
    data,
    forward,
    prior,
    specs: HyperpriorSpec | tuple,
    config: SolverConfig = SolverConfig(),
    init=None,
    theta0=None,
    callback=None,
) -> IASState:
    """Iterative alternating sequential minimisation of F(u, theta).

    Each outer iteration runs Gauss-Newton for fixed variances (warm-started
    from the previous iterate) and then applies the closed-form variance
    update. With every class :class:`Fixed` exactly one Gauss-Newton solve
    is performed.
    """
    problem = MAPProblem(data, forward, prior, specs, config)
    u = problem.default_start() if init is None else np.array(init, dtype=float)
    theta = problem.initial_theta.copy() if theta0 is None else np.array(theta0, float)
    if u.shape != (problem.size,) or theta.shape != (problem.size,):
        raise ValidationError(f"initial unknown and variances must have length {problem.size}")
    if np.any(theta <= 0):
        raise ValidationError("initial variances must be positive")
    x = problem.to_x(u)
    state = IASState(unknown=u, x=x, theta=theta)
    state.F_history.append(problem.objective(u, theta))
    state.x_history.append(x.copy())
    state.x_history_norms.append(float(np.linalg.norm(x)))
    fixed_only = all(isinstance(s, Fixed) for s in problem.specs)
    n_small = n_up = 0
    for t in range(1, config.max_outer + 1):
        tic = time.perf_counter()
        try:
            gn = _gn(problem, u, theta, config)
        except (ValidationError, NumericalError) as exc:
            raise type(exc)(f"outer iteration {t}: {exc}") from exc
        u_new = gn.unknown
        F_mid = gn.F
        theta_new = problem.update_theta(u_new, theta)
        F_new = problem.objective(u_new, theta_new)
        if F_new > F_mid + 1e-10 * abs(F_mid):
            raise NumericalError(
                f"outer iteration {t}: variance update increased F "
                f"({F_mid:.12g} -> {F_new:.12g})"
            )
        x_new = problem.to_x(u_new)
        step_norm = np.linalg.norm(x - x_new)
        x_norm = np.linalg.norm(x)
        rel = step_norm / x_norm if x_norm > 0 else (0.0 if step_norm == 0 else np.inf)
        F_prev = state.F_history[-1]
        u, theta, x = u_new, theta_new, x_new
        state.unknown, state.theta, state.x, state.t = u, theta, x, t
        state.F_history.append(float(F_new))
        state.x_history.append(x.copy())
        state.x_history_norms.append(float(np.linalg.norm(x)))
        state.rel_changes.append(float(rel))
        state.inner_iters.append(gn.iterations)
        state.wall_seconds.append(time.perf_counter() - tic)
        if callback is not None:
            callback(state)
        if fixed_only:
            state.converged, state.reason = True, "fixed variances: single solve"
            break
        n_small = n_small + 1 if rel < config.eps_outer else 0
        n_up = n_up + 1 if F_prev - F_new < 0 else 0
        if n_small >= config.outer_patience:
            state.converged, state.reason = True, "relative change below tolerance"
            break
        if n_up >= config.outer_patience:
            state.converged, state.reason = True, "objective stopped decreasing"
            break
    else:
        state.reason = "maximum outer iterations reached"
    return state


def convergence_report(iterates, x_map_reference):
    """Consecutive error pairs (e_i, e_{i+1}) against a reference MAP estimate.

    Returns the pairs, shape (k, 2), and the rate ``mu`` of the best
    unit-slope fit log e_{i+1} = log e_i + log mu in log-log space.
    """
    if isinstance(iterates, IASState):
        iterates = iterates.x_history
    iterates = [np.asarray(x) for x in iterates]
    if len(iterates) < 3:
        raise ValidationError(f"need at least 3 iterates, got {len(iterates)}")
    ref = np.asarray(x_map_reference)
    errors = np.array([np.linalg.norm(x - ref) for x in iterates])
    pairs = np.stack([errors[:-1], errors[1:]], axis=1)
    usable = np.all(pairs > 0, axis=1)
    if not np.any(usable):
        raise ValidationError("all iterates coincide with the reference")
    logs = np.log(pairs[usable])
    rate = float(np.exp(np.mean(logs[:, 1] - logs[:, 0])))
    return pairs, rate


def write_iteration_log(state: IASState, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outer_iter", "inner_iters", "F", "rel_change", "wall_seconds"])
        for k in range(len(state.rel_changes)):
            w.writerow(
                [
                    k + 1,
                    state.inner_iters[k],
                    repr(state.F_history[k + 1]),
                    repr(state.rel_changes[k]),
                    f"{state.wall_seconds[k]:.6f}",
                ]
            )


def write_convergence_csv(pairs, rate, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "error", "next_error"])
        for i, (a, b) in enumerate(pairs):
            w.writerow([i, repr(float(a)), repr(float(b))])
        w.writerow(["rate", repr(rate), ""])
