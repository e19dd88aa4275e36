"""Run orchestration: one-shot solves, the estimator-driven elastoplastic
h-adaptive loop, the predictor-driven elliptic hp-adaptive loop, uniform
refinement loops, convergence tables and exports.

The two adaptive loops are deliberately independent: the elastoplastic loop is
steered by the residual estimator only, the elliptic loop by predicted error
reductions only (each function advertises what it consults in its `consults`
attribute).
"""

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimator as est
from . import predictor as pred
from .assembly import (assemble_norm_matrices, assemble_system,
                       plastic_functional, total_energy)
from .config import RunConfig
from .elliptic import energy_error_sq, solve_scalar
from .mesh import Mesh
from .plasticity import (NewtonConfig, default_rho, plastic_field_at,
                         solve_semismooth_newton, strain_at, write_trace_csv)
from .polybasis import tensor_gauss
from .problems import (elastic_square_manufactured, plastic_square,
                       poisson_1d_singular, poisson_lshape)
from .space import (GaussPointSpace, ScalarSpace, deviatoric_basis,
                    deviatoric_dim)


class SolverFailure(RuntimeError):
    pass


@dataclass
class PlasticState:
    mesh: Mesh
    space: ScalarSpace
    qspace: GaussPointSpace
    system: object
    solution: object
    material: object
    loads: object

    @property
    def total_dofs(self):
        return self.system.K.shape[0] + 2 * self.system.C.shape[0]

    def energy(self):
        return total_energy(self.system, self.qspace,
                            self.solution.u, self.solution.p)


@dataclass
class EllipticState:
    mesh: Mesh
    space: ScalarSpace
    problem: object
    u: np.ndarray
    A: object
    b: np.ndarray

    @property
    def total_dofs(self):
        return self.space.ndof

    def energy_sq(self):
        return float(self.u @ (self.A @ self.u))


@dataclass
class RunRecord:
    iteration: int
    dofs: int
    h_max: float
    energy: float
    newton_iterations: int
    estimate: float
    error_sq: float
    marked: int
    wall_time: float = 0.0

    CSV_FIELDS = ("iteration", "dofs", "h_max", "energy",
                  "newton_iterations", "estimate", "error_sq", "marked")

    def csv_row(self):
        return [self.iteration, self.dofs, f"{self.h_max:.17g}",
                f"{self.energy:.17g}", self.newton_iterations,
                f"{self.estimate:.17g}", f"{self.error_sq:.17g}", self.marked]


def solve_plastic(mesh, material, loads, newton=None):
    space = ScalarSpace(mesh)
    qspace = GaussPointSpace(mesh, material.yield_stress)
    system = assemble_system(space, qspace, material, loads)
    cfg = newton or NewtonConfig(rho=default_rho(material))
    sol = solve_semismooth_newton(system, qspace, cfg)
    if not sol.converged:
        raise SolverFailure(
            f"semi-smooth Newton did not converge in {cfg.max_iter} iterations")
    return PlasticState(mesh=mesh, space=space, qspace=qspace, system=system,
                        solution=sol, material=material, loads=loads)


def solve_elliptic(mesh, problem):
    space = ScalarSpace(mesh)
    u, A, b = solve_scalar(space, problem)
    return EllipticState(mesh=mesh, space=space, problem=problem, u=u, A=A, b=b)


# ---------------------------------------------------------------------------
# reference (overkill) errors
# ---------------------------------------------------------------------------

def refined_state_error(state):
    """Error of a plastic state against the same problem solved on the
    uniformly refined mesh with degrees raised by one:
    ||(du, dp)||^2 + ||dlam||_0^2 by quadrature on the fine mesh."""
    fine_mesh = state.mesh.uniformly_refined()
    fine_mesh = fine_mesh.with_degrees(
        {e: fine_mesh.elements[e].degree + 1 for e in fine_mesh.active_ids()})
    ref = solve_plastic(fine_mesh, state.material, state.loads)
    return plastic_error_sq(state, ref), ref


def _coarse_coords(fine_mesh, eid_fine, coarse_mesh, pts):
    """Map fine-element reference points into the ancestor coarse element."""
    el = fine_mesh.elements[eid_fine]
    anc = el.parent if el.parent is not None else eid_fine
    while not coarse_mesh.elements[anc].active:
        anc = coarse_mesh.elements[anc].parent
    celf = fine_mesh.elements[eid_fine]
    celc = coarse_mesh.elements[anc]
    root = celf.box_lo[None, :] + 0.5 * (pts + 1.0) * (celf.box_hi - celf.box_lo)[None, :]
    out = 2.0 * (root - celc.box_lo[None, :]) / (celc.box_hi - celc.box_lo)[None, :] - 1.0
    return anc, out


def plastic_error_sq(coarse, fine):
    """Combined-norm error between two nested plastic states."""
    mesh_f = fine.mesh
    d = mesh_f.dim
    L = deviatoric_dim(d)
    Phi = deviatoric_basis(d)
    total = 0.0
    for eid in mesh_f.active_ids():
        p = fine.space.degrees[eid]
        emap = mesh_f.element_map(eid)
        pts, wts = tensor_gauss(p + 2, d)
        J = emap.jacobian(pts)
        det = np.linalg.det(J)
        Jinv = np.linalg.inv(J)
        w = wts * det
        cid, cpts = _coarse_coords(mesh_f, eid, coarse.mesh, pts)
        cmap = coarse.mesh.element_map(cid)
        cJinv = np.linalg.inv(cmap.jacobian(cpts))
        du = (_vec_eval(fine.space, eid, fine.solution.u, pts)
              - _vec_eval(coarse.space, cid, coarse.solution.u, cpts))
        deps = (strain_at(fine.space, eid, fine.solution.u, pts, Jinv)
                - strain_at(coarse.space, cid, coarse.solution.u, cpts, cJinv))
        dp = (plastic_field_at(fine.qspace, eid, fine.solution.p, pts)
              - plastic_field_at(coarse.qspace, cid, coarse.solution.p, cpts))
        dl = (plastic_field_at(fine.qspace, eid, fine.solution.lam, pts, dual=True)
              - plastic_field_at(coarse.qspace, cid, coarse.solution.lam, cpts, dual=True))
        total += float(w @ (np.einsum("qk,qk->q", du, du)
                            + np.einsum("qab,qab->q", deps, deps)
                            + np.einsum("qab,qab->q", dp, dp)
                            + np.einsum("qab,qab->q", dl, dl)))
    return total


def _vec_eval(space, eid, u, pts):
    d = space.dim
    rows, cmat = space.connectivity(eid)
    from .polybasis import tensor_shape_eval
    idx = space.local_indices(eid)
    V, _ = tensor_shape_eval(pts, idx, jmax=max(space.degrees[eid], 1))
    loc = np.stack([cmat.T @ u[d * rows + k] for k in range(d)], axis=1)
    return V @ loc


def elliptic_error_sq(state, reference):
    """Energy error via exact data or against a reference energy value."""
    if state.problem.exact_grad is not None:
        return energy_error_sq(state.space, state.u, state.problem.exact_grad)
    return max(reference - state.energy_sq(), 0.0)


# ---------------------------------------------------------------------------
# adaptive loops
# ---------------------------------------------------------------------------

def _build_problem(cfg: RunConfig):
    pb, ms, mt = cfg.problem, cfg.mesh, cfg.material
    if pb.preset == "plastic-square":
        mesh, material, loads = plastic_square(
            n=ms.initial_cells, degree=ms.degree, lam=mt.lam, mu=mt.mu,
            hardening=mt.hardening, yield_stress=mt.yield_stress,
            pull=pb.pull, shear=pb.shear)
        for _ in range(ms.initial_refinements):
            mesh = mesh.uniformly_refined()
        return ("plastic", mesh, material, loads, None)
    if pb.preset == "elastic-square":
        mesh, material, loads, disp, dgrad = elastic_square_manufactured(
            n=ms.initial_cells, degree=ms.degree, lam=mt.lam, mu=mt.mu)
        for _ in range(ms.initial_refinements):
            mesh = mesh.uniformly_refined()
        return ("elastic", mesh, material, loads, (disp, dgrad))
    if pb.preset == "poisson-1d":
        mesh, problem = poisson_1d_singular(alpha=pb.alpha, n=ms.initial_cells,
                                            degree=ms.degree)
    elif pb.preset == "poisson-lshape":
        mesh, problem = poisson_lshape(degree=ms.degree)
    else:
        raise ValueError(pb.preset)
    for _ in range(ms.initial_refinements):
        mesh = mesh.uniformly_refined()
    return ("elliptic", mesh, None, None, problem)


def _newton_config(cfg: RunConfig, material):
    rho = cfg.newton.rho if cfg.newton.rho > 0 else default_rho(material)
    return NewtonConfig(rho=rho, tol=cfg.newton.tol, max_iter=cfg.newton.max_iter)


def run_adaptive(cfg: RunConfig, outdir=None, reference_errors=False):
    """Dispatch on the configured loop; returns (records, final_state)."""
    kind, mesh, material, loads, extra = _build_problem(cfg)
    loop = cfg.run.loop
    if loop in ("plastic-estimator",):
        if kind != "plastic":
            raise ValueError("plastic-estimator needs the plastic-square preset")
        return run_plastic_estimator(cfg, mesh, material, loads, outdir,
                                     reference_errors)
    if loop == "elliptic-predictor":
        if kind != "elliptic":
            raise ValueError("elliptic-predictor needs a Poisson preset")
        return run_elliptic_predictor(cfg, mesh, extra, outdir)
    return run_uniform(cfg, kind, mesh, material, loads, extra, outdir)


def run_plastic_estimator(cfg, mesh, material, loads, outdir=None,
                          reference_errors=False):
    records = []
    states = []
    for it in range(cfg.run.max_iterations):
        t0 = time.perf_counter()
        state = solve_plastic(mesh, material, loads, _newton_config(cfg, material))
        ind = est.compute_indicators(state.space, state.qspace, material, loads,
                                     state.solution.u, state.solution.p,
                                     state.solution.lam)
        err_sq = float("nan")
        if reference_errors:
            err_sq, _ = refined_state_error(state)
        marked = est.mark_dorfler(ind, cfg.run.theta)
        rec = RunRecord(iteration=it, dofs=state.total_dofs,
                        h_max=max(mesh.diameter(e) for e in mesh.active_ids()),
                        energy=state.energy(),
                        newton_iterations=state.solution.iterations,
                        estimate=ind.global_estimate, error_sq=err_sq,
                        marked=len(marked), wall_time=time.perf_counter() - t0)
        records.append(rec)
        states.append((state, ind))
        if outdir:
            export_plastic_state(state, ind, os.path.join(outdir, f"iter{it:03d}"),
                                 marked=marked)
        if state.total_dofs >= cfg.run.max_dofs:
            break
        if cfg.run.tol > 0 and ind.global_estimate <= cfg.run.tol:
            break
        if it == cfg.run.max_iterations - 1:
            break
        mesh = mesh.refine_many(marked)
    if outdir:
        write_records(records, outdir)
    return records, states


run_plastic_estimator.consults = ("estimator",)


def run_elliptic_predictor(cfg, mesh, problem, outdir=None):
    records = []
    states = []
    for it in range(cfg.run.max_iterations):
        t0 = time.perf_counter()
        state = solve_elliptic(mesh, problem)
        space = state.space
        predictions = {}
        for eid in mesh.active_ids():
            cands = pred.default_candidates(space, eid, menu="enrichment")
            best, _ = pred.choose_enrichment(space, problem, state.A, state.b,
                                             state.u, eid, candidates=cands)
            predictions[eid] = best
        gains = {eid: max(pr.delta_e2, 0.0) for eid, pr in predictions.items()}
        marked = est.mark_dorfler(gains, cfg.run.theta)
        err_sq = float("nan")
        if problem.exact_grad is not None:
            err_sq = energy_error_sq(space, state.u, problem.exact_grad)
        rec = RunRecord(iteration=it, dofs=space.ndof,
                        h_max=max(mesh.diameter(e) for e in mesh.active_ids()),
                        energy=state.energy_sq(),
                        newton_iterations=0,
                        estimate=sum(gains.values()), error_sq=err_sq,
                        marked=len(marked), wall_time=time.perf_counter() - t0)
        records.append(rec)
        states.append((state, predictions))
        if outdir:
            dump_predictions(predictions, marked,
                             os.path.join(outdir, f"pred{it:03d}.csv"))
        if space.ndof >= cfg.run.max_dofs or it == cfg.run.max_iterations - 1:
            break
        if cfg.run.tol > 0 and rec.estimate <= cfg.run.tol:
            break
        for eid in marked:
            if not mesh.elements[eid].active:
                continue  # consumed by an earlier closure refinement
            mesh = pred.apply_enrichment(mesh, predictions[eid])
    if outdir:
        write_records(records, outdir)
    return records, states


run_elliptic_predictor.consults = ("predictor",)


def run_uniform(cfg, kind, mesh, material, loads, extra, outdir=None):
    records = []
    states = []
    for it in range(cfg.run.max_iterations):
        t0 = time.perf_counter()
        if kind in ("plastic", "elastic"):
            state = solve_plastic(mesh, material, loads,
                                  _newton_config(cfg, material))
            dofs = state.total_dofs
            energy = state.energy()
            nit = state.solution.iterations
            err_sq = float("nan")
            if kind == "elastic" and extra is not None:
                err_sq = elastic_energy_error_sq(state, extra[0], extra[1])
        else:
            state = solve_elliptic(mesh, extra)
            dofs = state.total_dofs
            energy = state.energy_sq()
            nit = 0
            err_sq = (energy_error_sq(state.space, state.u, extra.exact_grad)
                      if extra.exact_grad is not None else float("nan"))
        rec = RunRecord(iteration=it, dofs=dofs,
                        h_max=max(mesh.diameter(e) for e in mesh.active_ids()),
                        energy=energy, newton_iterations=nit,
                        estimate=float("nan"), error_sq=err_sq,
                        marked=len(mesh.active_ids()),
                        wall_time=time.perf_counter() - t0)
        records.append(rec)
        states.append(state)
        if dofs >= cfg.run.max_dofs or it == cfg.run.max_iterations - 1:
            break
        if cfg.run.loop == "uniform-h":
            mesh = mesh.uniformly_refined()
        else:
            mesh = mesh.with_degrees({e: mesh.elements[e].degree + 1
                                      for e in mesh.active_ids()})
    if outdir:
        write_records(records, outdir)
    return records, states


run_uniform.consults = ()


def elastic_energy_error_sq(state, disp, disp_grad):
    """a-norm error of an (essentially elastic) state against an analytic field."""
    mesh = state.mesh
    d = mesh.dim
    total = 0.0
    for eid in mesh.active_ids():
        p = state.space.degrees[eid]
        emap = mesh.element_map(eid)
        pts, wts = tensor_gauss(p + 3, d)
        J = emap.jacobian(pts)
        det = np.linalg.det(J)
        Jinv = np.linalg.inv(J)
        eps_h = strain_at(state.space, eid, state.solution.u, pts, Jinv)
        g = np.asarray(disp_grad(emap.map_point(pts)), dtype=float)
        eps_ex = 0.5 * (g + g.transpose(0, 2, 1))
        diff = eps_ex - eps_h
        sig = state.material.apply_elasticity(diff)
        total += float((wts * det) @ np.einsum("qab,qab->q", sig, diff))
    return total


# ---------------------------------------------------------------------------
# tables and exports
# ---------------------------------------------------------------------------

def convergence_table(records, use="error_sq"):
    """Rows (dofs, value, rate); the rate compares successive records through
    log(e_i/e_{i+1}) / log(h_i/h_{i+1}) when h changes, else against dofs."""
    rows = []
    vals = []
    for r in records:
        v = getattr(r, use)
        vals.append(np.sqrt(v) if use in ("error_sq", "estimate") else v)
    for i, r in enumerate(records):
        rate = float("nan")
        if i > 0 and vals[i] > 0 and vals[i - 1] > 0:
            h0, h1 = records[i - 1].h_max, r.h_max
            if abs(h0 - h1) > 1e-14 * max(h0, h1):
                rate = np.log(vals[i - 1] / vals[i]) / np.log(h0 / h1)
            else:
                d0, d1 = records[i - 1].dofs, r.dofs
                rate = np.log(vals[i - 1] / vals[i]) / np.log(d1 / d0)
        rows.append((r.dofs, vals[i], rate))
    return rows


def format_table(rows):
    lines = [f"{'dofs':>10} {'value':>14} {'rate':>8}"]
    for dofs, val, rate in rows:
        lines.append(f"{dofs:>10d} {val:>14.6e} {rate:>8.3f}")
    return "\n".join(lines)


def write_records(records, outdir):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "records.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(RunRecord.CSV_FIELDS)
        for r in records:
            wr.writerow(r.csv_row())
    with open(os.path.join(outdir, "timings.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "wall_time"])
        for r in records:
            wr.writerow([r.iteration, f"{r.wall_time:.6f}"])


def read_records(path):
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(RunRecord(
                iteration=int(row["iteration"]), dofs=int(row["dofs"]),
                h_max=float(row["h_max"]), energy=float(row["energy"]),
                newton_iterations=int(row["newton_iterations"]),
                estimate=float(row["estimate"]),
                error_sq=float(row["error_sq"]), marked=int(row["marked"])))
    return records


def dump_predictions(predictions, marked, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    marked = set(marked)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["element", "kind", "size", "delta_e2", "chosen"])
        for eid in sorted(predictions):
            pr = predictions[eid]
            wr.writerow([eid, pr.candidate.kind, pr.candidate.size,
                         f"{pr.delta_e2:.17g}", int(eid in marked)])


def dump_indicators(ind, marked, path):
    marked = set(marked)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["element", "eta_sq", "plastic_sq", "osc_sq", "marked"])
        for i, eid in enumerate(ind.element_ids):
            wr.writerow([int(eid), f"{ind.residual_part[i]:.17g}",
                         f"{ind.plastic_part[i]:.17g}",
                         f"{ind.oscillation[i]:.17g}", int(int(eid) in marked)])


def export_plastic_state(state, indicators, outdir, marked=()):
    os.makedirs(outdir, exist_ok=True)
    mesh = state.mesh
    act = mesh.active_ids()
    L = deviatoric_dim(mesh.dim)
    p_rows = state.solution.p.reshape(-1, L)
    pnorm = []
    for eid in act:
        sl = state.qspace.dof_slice(eid)
        w = state.qspace.weights[sl]
        vals = np.linalg.norm(p_rows[sl], axis=1)
        pnorm.append(float((w * vals).sum() / w.sum()))
    cell = {"degree": [state.space.degrees[e] for e in act],
            "plastic_norm": pnorm}
    if indicators is not None:
        cell["eta_sq"] = indicators.total
    point = {}
    uv = np.stack([state.space.vertex_values(state.solution.u[k::mesh.dim])
                   for k in range(mesh.dim)], axis=1)
    point["displacement"] = np.nan_to_num(uv)
    mesh.write_vtk(os.path.join(outdir, "state.vtk"), cell_data=cell,
                   point_data=point)
    mesh.write_text(os.path.join(outdir, "mesh.txt"))
    write_trace_csv(state.solution, os.path.join(outdir, "newton_trace.csv"))
    if indicators is not None:
        dump_indicators(indicators, marked, os.path.join(outdir, "indicators.csv"))
