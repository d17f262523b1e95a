"""Time integration of the coupled wave/heat system.

One time step advances the wave field first and the temperature second.
The wave step treats the quasilinear factor (1 + 2k u or 1 + 2k u_t) and
the remaining nonlinearity by fixed-point iteration, freezing the
temperature-dependent coefficients q(theta^n) and beta(theta^n) over the
step; each iterate solves one linear system.  The heat step is
semi-implicit: diffusion and perfusion are implicit, the absorbed energy
is evaluated from the fresh wave iterate and the previous temperature, so
it costs a single symmetric positive definite solve.

Two schemes share one code path through their leading weights and history
combinations: implicit Euler (weights 1, 1) and BDF2 (weights 3/2, 2).
A BDF2 run takes its first step with Euler weights; the missing earlier
wave level is backfilled as u^{-1} = u^0 - tau * u^1.

Linear systems are solved with a sparse LU factorization by default
("direct"); diagonally preconditioned Krylov iterations remain available
("iterative") but are much slower on these stiffness-dominated systems.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import coefficients as coef
from . import fem, linalg
from .coefficients import DegeneracyError, EquationVariant, HeatParams, TissueModel
from .fem import FEFunction, FESpace, ScalarField
from .linalg import SolveReport

__all__ = [
    "TimeScheme",
    "EULER",
    "BDF2",
    "scheme_by_name",
    "delta1",
    "delta2",
    "history_combos",
    "FixedPointConfig",
    "FixedPointDivergenceError",
    "DegeneracyWarning",
    "StepReport",
    "SimulationState",
    "SimulationResult",
    "wave_step",
    "heat_step",
    "run_simulation",
    "write_step_reports",
]


class FixedPointDivergenceError(RuntimeError):
    """The wave-step fixed point failed to converge."""

    def __init__(self, iterations: int, increment: float):
        super().__init__(
            f"fixed point did not converge in {iterations} iterations "
            f"(last relative increment {increment:.3e})"
        )
        self.iterations = iterations
        self.increment = increment


class DegeneracyWarning(UserWarning):
    """The quasilinear factor came close to zero."""


@dataclass(frozen=True)
class TimeScheme:
    """Implicit multistep scheme written as
    d_tau a = (lead1 * a^{n+1} - delta1) / tau,
    d_tau^2 a = (lead2 * a^{n+1} - delta2) / tau^2."""

    tag: str
    lead1: float
    lead2: float
    depth: int  # history levels entering delta2


EULER = TimeScheme("euler", 1.0, 1.0, 2)
BDF2 = TimeScheme("bdf2", 1.5, 2.0, 3)


def scheme_by_name(name: str) -> TimeScheme:
    try:
        return {"euler": EULER, "bdf2": BDF2}[name]
    except KeyError:
        raise ValueError(f"unknown time scheme {name!r}") from None


def delta1(scheme: TimeScheme, history: Sequence[np.ndarray]) -> np.ndarray:
    """First-derivative history combination; history[0] is the newest level."""
    if scheme.tag == "euler":
        if len(history) < 1:
            raise ValueError("euler delta1 needs one history level")
        return np.asarray(history[0], dtype=np.float64)
    if len(history) < 2:
        raise ValueError("bdf2 delta1 needs two history levels")
    return 2.0 * np.asarray(history[0]) - 0.5 * np.asarray(history[1])


def delta2(scheme: TimeScheme, history: Sequence[np.ndarray]) -> np.ndarray:
    """Second-derivative history combination; history[0] is the newest level."""
    if scheme.tag == "euler":
        if len(history) < 2:
            raise ValueError("euler delta2 needs two history levels")
        return 2.0 * np.asarray(history[0]) - np.asarray(history[1])
    if len(history) < 3:
        raise ValueError("bdf2 delta2 needs three history levels")
    return 5.0 * np.asarray(history[0]) - 4.0 * np.asarray(history[1]) + np.asarray(history[2])


def history_combos(scheme: TimeScheme, history: Sequence[np.ndarray]):
    return delta1(scheme, history), delta2(scheme, history)


@dataclass(frozen=True)
class FixedPointConfig:
    tol: float = 1e-10
    max_iter: int = 100

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ValueError("fixed-point tolerance must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class StepReport:
    index: int
    scheme_tag: str
    iterations: int
    increment: float
    n1_min: float
    increments: tuple = ()
    wave_solves: tuple = ()
    heat_solve: SolveReport | None = None


@dataclass
class SimulationState:
    """Discrete trajectory tail: newest level first in each history list."""

    space: FESpace
    tau: float
    step: int = 0
    time: float = 0.0
    u: list = field(default_factory=list)
    theta: list = field(default_factory=list)

    def u_function(self) -> FEFunction:
        return FEFunction(self.space, self.u[0].copy())

    def theta_function(self) -> FEFunction:
        return FEFunction(self.space, self.theta[0].copy())


@dataclass
class SimulationResult:
    state: SimulationState
    reports: list
    max_u: np.ndarray
    max_theta: np.ndarray


def _effective_scheme(scheme: TimeScheme, step: int) -> TimeScheme:
    # BDF2 has no second history level at the first step; take it with Euler.
    if scheme.tag == "bdf2" and step == 0:
        return EULER
    return scheme


class _StepContext:
    """Per-step frozen data: coefficient tables at theta^n and the parts of
    the wave system that do not change across fixed-point iterations."""

    def __init__(self, state: SimulationState, scheme: TimeScheme, variant: EquationVariant,
                 model: TissueModel, wave_source, solver: str, solver_tol: float):
        space = state.space
        tau = state.tau
        self.space = space
        self.tau = tau
        self.scheme = _effective_scheme(scheme, state.step)
        self.variant = variant
        self.model = model
        self.solver = solver
        self.solver_tol = solver_tol
        self.fev = space.values()
        self.mass = space.mass_matrix()
        self.interior = space.interior_dofs

        theta_n = state.theta[0]
        self.theta_cell = self.fev.fe_values(theta_n)
        theta_grad = self.fev.fe_gradients(theta_n)
        q_vals, dq = coef.q_of_theta(model, self.theta_cell, derivative=True)
        b_vals, db = coef.beta_of_theta(model, self.theta_cell, derivative=True)
        s_q = fem.assemble_weighted_stiffness(space, (q_vals, dq[:, :, None] * theta_grad))
        s_b = fem.assemble_weighted_stiffness(space, (b_vals, db[:, :, None] * theta_grad))
        self.s_beta = s_b

        k_w, k_k = coef.k_coefficients(model, self.theta_cell)
        self.k_cell = k_w if variant.tag == "westervelt" else k_k

        self.d1u = delta1(self.scheme, state.u)
        self.d2u = delta2(self.scheme, state.u)
        self.stiff_frozen = (tau * tau) * s_q + (tau * self.scheme.lead1) * s_b
        self.sb_d1 = s_b @ self.d1u
        t_next = state.time + tau
        self.t_next = t_next
        self.f_load = fem.assemble_load(space, wave_source, t_next)

    def nonlinearity(self, u_vec: np.ndarray):
        """Quasilinear factor N1 and remainder N2 tables at the iterate."""
        fev = self.fev
        nt, nq = fev.points.shape[:2]
        if self.variant.linear:
            return np.ones((nt, nq)), np.zeros((nt, nq))
        ut_vec = (self.scheme.lead1 * u_vec - self.d1u) / self.tau
        if self.variant.tag == "westervelt":
            u_cell = fev.fe_values(u_vec)
            ut_cell = fev.fe_values(ut_vec)
            n1 = 1.0 + 2.0 * self.k_cell * u_cell
            n2 = 2.0 * self.k_cell * ut_cell * ut_cell
        else:
            ut_cell = fev.fe_values(ut_vec)
            n1 = 1.0 + 2.0 * self.k_cell * ut_cell
            gu = fev.fe_gradients(u_vec)
            gut = fev.fe_gradients(ut_vec)
            n2 = 2.0 * np.einsum("cqe,cqe->cq", gu, gut)
        return n1, n2

    def solve(self, a: linalg.SparseMatrix, rhs: np.ndarray, x0: np.ndarray) -> tuple[np.ndarray, SolveReport]:
        if self.solver == "direct":
            return linalg.factorize(a).solve_with_report(rhs)
        return linalg.solve(a, rhs, tol=self.solver_tol, sym=False, x0=x0)


def wave_step(state: SimulationState, scheme: TimeScheme, variant: EquationVariant,
              model: TissueModel, fp: FixedPointConfig, wave_source=None, *,
              solver: str = "direct", solver_tol: float = 1e-12,
              context: _StepContext | None = None,
              warn_threshold: float = 0.1):
    """Advance the wave field one step; returns (u_new, step info dict).

    The fixed point starts from the previous level.  It stops when the
    relative L2 increment between iterates drops below fp.tol (absolute
    when the new iterate is zero), or as soon as the nonlinearity tables
    stop changing, in which case the next solve would reproduce the
    current iterate exactly.
    """
    ctx = context or _StepContext(state, scheme, variant, model, wave_source, solver, solver_tol)
    space = ctx.space
    tau = ctx.tau
    idx = ctx.interior
    lead2 = ctx.scheme.lead2

    u_i = state.u[0].copy()
    n1, n2 = ctx.nonlinearity(u_i)
    n1_min = float(n1.min())
    increments = []
    solves = []
    base_rhs = tau * ctx.sb_d1 + (tau * tau) * ctx.f_load

    for it in range(1, fp.max_iter + 1):
        if n1_min <= 0.0:
            raise DegeneracyError(
                f"quasilinear factor lost positivity (min {n1_min:.3e}) at step {state.step + 1}"
            )
        if n1_min < warn_threshold:
            warnings.warn(
                f"quasilinear factor close to degenerate (min {n1_min:.3e})",
                DegeneracyWarning,
                stacklevel=2,
            )
        m_n1 = fem.assemble_mass(space, n1)
        a_full = lead2 * m_n1 + ctx.stiff_frozen
        rhs = m_n1 @ ctx.d2u + base_rhs - (tau * tau) * fem.assemble_load(space, n2)
        a_ii = a_full.submatrix(idx, idx)
        x, rep = ctx.solve(a_ii, rhs[idx], u_i[idx])
        solves.append(rep)
        u_next = np.zeros(space.n_dofs)
        u_next[idx] = x

        norm_new = space.l2_norm(u_next)
        inc = space.l2_norm(u_next - u_i)
        rel = inc / norm_new if norm_new > 0.0 else inc
        increments.append(rel)
        if rel < fp.tol:
            return u_next, {"iterations": it, "increments": tuple(increments),
                            "n1_min": n1_min, "solves": tuple(solves), "context": ctx}
        n1_next, n2_next = ctx.nonlinearity(u_next)
        n1_min = min(n1_min, float(n1_next.min()))
        if np.array_equal(n1_next, n1) and np.array_equal(n2_next, n2):
            # The system is stationary in the iterate: one more solve would
            # return u_next bit for bit, so the fixed point is reached.
            return u_next, {"iterations": it, "increments": tuple(increments),
                            "n1_min": n1_min, "solves": tuple(solves), "context": ctx}
        u_i, n1, n2 = u_next, n1_next, n2_next

    raise FixedPointDivergenceError(fp.max_iter, increments[-1])


def heat_step(state: SimulationState, u_new: np.ndarray, scheme: TimeScheme,
              variant: EquationVariant, model: TissueModel, heat: HeatParams,
              heat_source=None, *, solver: str = "direct", solver_tol: float = 1e-12,
              context: _StepContext | None = None, factor_cache: dict | None = None):
    """Advance the temperature one step; returns (theta_new, SolveReport).

    The absorbed energy is evaluated from the new wave level, its discrete
    time derivative, and the previous temperature.
    """
    space = state.space
    tau = state.tau
    eff = _effective_scheme(scheme, state.step)
    fev = space.values()
    idx = space.interior_dofs
    mass = space.mass_matrix()

    if context is not None:
        theta_cell = context.theta_cell
        d1u = context.d1u
        t_next = context.t_next
    else:
        theta_cell = fev.fe_values(state.theta[0])
        d1u = delta1(eff, state.u)
        t_next = state.time + tau

    ut_new = (eff.lead1 * u_new - d1u) / tau
    u_cell = fev.fe_values(u_new)
    ut_cell = fev.fe_values(ut_new)
    a1, a2 = coef.absorption_weights(variant, model, theta_cell)
    q_cell = a1 * u_cell * u_cell + a2 * ut_cell * ut_cell

    load = fem.assemble_load(space, q_cell)
    if heat_source is not None:
        load = load + fem.assemble_load(space, heat_source, t_next)
    rhs = mass @ delta1(eff, state.theta) + tau * load

    key = eff.lead1
    if factor_cache is not None and key in factor_cache:
        solve_ii = factor_cache[key]
    else:
        stiff = space.stiffness_matrix()
        h_full = (eff.lead1 + tau * heat.nu) * mass + (tau * heat.kappa) * stiff
        h_ii = h_full.submatrix(idx, idx)
        if solver == "direct":
            lu = linalg.factorize(h_ii)
            solve_ii = lu.solve_with_report
        else:
            def solve_ii(b, _h=h_ii, _tol=solver_tol):
                return linalg.solve(_h, b, tol=_tol, sym=True)
        if factor_cache is not None:
            factor_cache[key] = solve_ii

    x, rep = solve_ii(rhs[idx])
    theta_new = np.zeros(space.n_dofs)
    theta_new[idx] = x
    return theta_new, rep


def _project(space: FESpace, data, projection: str) -> np.ndarray:
    if isinstance(data, FEFunction):
        if data.space is not space:
            raise ValueError("initial data lives on a different space")
        return data.values.copy()
    if isinstance(data, np.ndarray):
        if data.shape != (space.n_dofs,):
            raise ValueError("initial coefficient vector has the wrong length")
        return data.astype(np.float64, copy=True)
    if not isinstance(data, ScalarField):
        raise TypeError(f"unsupported initial data type {type(data).__name__}")
    if projection == "ritz":
        return fem.ritz_projection(space, data, 0.0).values
    if projection == "nodal":
        return fem.nodal_interpolate(space, data, 0.0).values
    raise ValueError(f"unknown projection {projection!r} (expected 'ritz' or 'nodal')")


def run_simulation(space: FESpace, *, scheme: TimeScheme, variant: EquationVariant,
                   model: TissueModel, heat: HeatParams, tau: float,
                   n_steps: int | None = None, final_time: float | None = None,
                   u0, u1, theta0, projection: str = "ritz",
                   wave_source=None, heat_source=None,
                   fp: FixedPointConfig = FixedPointConfig(),
                   snapshot_indices: Sequence[int] = (),
                   on_snapshot: Callable | None = None,
                   solver: str = "direct", solver_tol: float = 1e-12,
                   warn_threshold: float = 0.1) -> SimulationResult:
    """Integrate the coupled system from t = 0.

    Initial data may be ScalarFields (projected per `projection`),
    FEFunctions, or raw coefficient vectors.  Snapshot hooks receive
    (step_index, time, u_h, theta_h) with independent copies.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if (n_steps is None) == (final_time is None):
        raise ValueError("specify exactly one of n_steps and final_time")
    if n_steps is None:
        ratio = final_time / tau
        n_steps = round(ratio)
        if n_steps < 1 or abs(ratio - n_steps) > 1e-9 * max(1.0, n_steps):
            raise ValueError(f"final_time {final_time!r} is not an integer multiple of tau {tau!r}")
    if solver not in ("direct", "iterative"):
        raise ValueError(f"unknown solver {solver!r}")

    u0_vec = _project(space, u0, projection)
    u1_vec = _project(space, u1, projection)
    theta0_vec = _project(space, theta0, projection)
    ghost = u0_vec - tau * u1_vec  # backfilled level u^{-1}

    state = SimulationState(space=space, tau=tau, step=0, time=0.0,
                            u=[u0_vec, ghost], theta=[theta0_vec])

    snapshots = set(int(s) for s in snapshot_indices)
    if any(s < 0 or s > n_steps for s in snapshots):
        raise ValueError(f"snapshot indices must lie in [0, {n_steps}]")

    def emit(idx):
        if on_snapshot is not None and idx in snapshots:
            on_snapshot(idx, state.time, state.u_function(), state.theta_function())

    reports = []
    max_u = [float(np.abs(u0_vec).max())]
    max_theta = [float(np.abs(theta0_vec).max())]
    emit(0)
    heat_factors: dict = {}

    for n in range(n_steps):
        try:
            ctx = _StepContext(state, scheme, variant, model, wave_source, solver, solver_tol)
            u_new, info = wave_step(state, scheme, variant, model, fp, wave_source,
                                    solver=solver, solver_tol=solver_tol, context=ctx,
                                    warn_threshold=warn_threshold)
            theta_new, heat_rep = heat_step(state, u_new, scheme, variant, model, heat,
                                            heat_source, solver=solver, solver_tol=solver_tol,
                                            context=ctx, factor_cache=heat_factors)
        except Exception as e:
            e.step_index = n + 1
            if hasattr(e, "add_note"):
                e.add_note(f"while advancing step {n + 1} of {n_steps}")
            raise

        state.u = [u_new] + state.u[:2]
        state.theta = [theta_new] + state.theta[:2]
        state.step = n + 1
        state.time = (n + 1) * tau

        reports.append(StepReport(
            index=n + 1,
            scheme_tag=ctx.scheme.tag,
            iterations=info["iterations"],
            increment=info["increments"][-1],
            n1_min=info["n1_min"],
            increments=info["increments"],
            wave_solves=info["solves"],
            heat_solve=heat_rep,
        ))
        max_u.append(float(np.abs(u_new).max()))
        max_theta.append(float(np.abs(theta_new).max()))
        emit(n + 1)

    return SimulationResult(state=state, reports=reports,
                            max_u=np.asarray(max_u), max_theta=np.asarray(max_theta))


def write_step_reports(reports: Sequence[StepReport], path) -> None:
    """Stream step reports as CSV."""
    lines = ["step,scheme,iterations,increment,n1_min,wave_residual,heat_residual"]
    for r in reports:
        wave_res = max((s.relative_residual for s in r.wave_solves), default=0.0)
        heat_res = r.heat_solve.relative_residual if r.heat_solve is not None else 0.0
        lines.append(
            f"{r.index},{r.scheme_tag},{r.iterations},{r.increment:.17g},"
            f"{r.n1_min:.17g},{wave_res:.17g},{heat_res:.17g}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
