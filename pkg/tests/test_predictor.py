import itertools

import numpy as np
import pytest

from conftest import square_mesh
from hpfem.elliptic import ScalarProblem, energy_error_sq, solve_scalar
from hpfem.mesh import Mesh, corner_bits
from hpfem.polybasis import tensor_gauss, tensor_indices, tensor_shape_eval
from hpfem.predictor import (EnrichmentCandidate, Prediction,
                             apply_enrichment, child_element_maps,
                             choose_enrichment, default_candidates,
                             enforce_degree_comparability, hp_enrichment,
                             internal_nodes, local_split, node_child_multi,
                             node_children, p_enrichment, predict_reduction,
                             representation_matrices)
from hpfem.space import ScalarSpace


def interval_mesh(n, degree=1):
    xs = np.linspace(0.0, 1.0, n + 1)
    m = Mesh.from_arrays(xs[:, None], [[i, i + 1] for i in range(n)], dim=1)
    for e in m.elements:
        e.degree = degree
    return m


UNIT_F = ScalarProblem(volume=lambda x: np.ones(len(x)))


class TestLocalSplit:
    def test_p1_no_interior(self):
        m = interval_mesh(3, 1)
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        s = local_split(sp, u, 0)
        assert len(s.interior_dofs) == 0
        np.testing.assert_allclose(s.u_rest, u)

    def test_p2_interior_count_1d(self):
        m = interval_mesh(3, 2)
        sp = ScalarSpace(m)
        u = np.arange(sp.ndof, dtype=float)
        s = local_split(sp, u, 1)
        assert len(s.interior_dofs) == 1

    def test_reassembly_identity(self, rng):
        m = square_mesh(2, degree=3, tagger=lambda c: "dirichlet")
        sp = ScalarSpace(m)
        u = rng.standard_normal(sp.ndof)
        s = local_split(sp, u, 0)
        np.testing.assert_array_equal(s.u_local + s.u_rest, u)


class TestEnrichmentSets:
    def test_p_default_rule_1d(self):
        m = interval_mesh(1, 2)
        sp = ScalarSpace(m)
        c = p_enrichment(sp, 0)
        assert c.p_multis == ((3,),)

    def test_p_default_rule_2d(self):
        m = square_mesh(1, degree=2, tagger=lambda c: "neumann")
        sp = ScalarSpace(m)
        c = p_enrichment(sp, 0)
        assert sorted(c.p_multis) == [(2, 3), (3, 2), (3, 3)]

    def test_internal_node_counts(self):
        from math import comb
        for d in (1, 2, 3):
            nodes = internal_nodes(d)
            for r in range(d + 1):
                n_r = sum(1 for axes, loc in nodes if len(axes) == r)
                assert n_r == comb(d, r) * 2**r

    def test_hp_sizes(self):
        m = square_mesh(1, degree=1, tagger=lambda c: "neumann")
        assert hp_enrichment(ScalarSpace(m), 0).size == 1
        m2 = square_mesh(1, degree=2, tagger=lambda c: "neumann")
        assert hp_enrichment(ScalarSpace(m2), 0).size == 9

    def test_hp_1d_hat(self):
        m = interval_mesh(1, 1)
        sp = ScalarSpace(m)
        c = hp_enrichment(sp, 0)
        assert c.size == 1
        rep = representation_matrices(sp, c)
        # D selects psi_1 on the left child and psi_0 on the right child
        idx = tensor_indices(rep.degree, 1)
        col1 = int(np.nonzero((idx == [1]).all(axis=1))[0][0])
        col0 = int(np.nonzero((idx == [0]).all(axis=1))[0][0])
        assert rep.D[0][0, col1] == 1.0 and np.abs(rep.D[0]).sum() == 1.0
        assert rep.D[1][0, col0] == 1.0 and np.abs(rep.D[1]).sum() == 1.0

    def test_hp_entries_zero_or_one(self):
        m = square_mesh(1, degree=3, tagger=lambda c: "neumann")
        sp = ScalarSpace(m)
        rep = representation_matrices(sp, hp_enrichment(sp, 0))
        for D in rep.D:
            vals = np.unique(D)
            assert set(np.round(vals, 15)).issubset({0.0, 1.0})

    def test_bad_rules_rejected(self):
        m = square_mesh(1, degree=2, tagger=lambda c: "neumann")
        sp = ScalarSpace(m)
        with pytest.raises(ValueError):
            p_enrichment(sp, 0, rule=[(1, 2)])
        with pytest.raises(ValueError):
            hp_enrichment(sp, 0, degree_rule=lambda a, l: [(1,) * len(a)]
                          if a else [()])


def eval_enrichment(space, candidate, rep, which, pts_parent):
    """Direct evaluation of one enrichment function at parent reference points:
    values and physical gradients (independent of the D matrices for p-kind)."""
    mesh = space.mesh
    eid = candidate.element
    d = space.dim
    emap = mesh.element_map(eid)
    if candidate.kind == "p":
        multi = np.array([candidate.p_multis[which]])
        V, G = tensor_shape_eval(pts_parent, multi, jmax=candidate.degree_cap)
        Jinv = np.linalg.inv(emap.jacobian(pts_parent))
        return V[:, 0], np.einsum("qa,qam->qm", G[:, 0, :], Jinv)
    node = candidate.hp_nodes[which]
    zhat = np.asarray(candidate.zhat)
    bits = corner_bits(d)
    vals = np.zeros(len(pts_parent))
    grads = np.zeros((len(pts_parent), d))
    rows = node_children(node, d)
    for row in rows:
        b = bits[row]
        lo = np.where(b == 0, -1.0, zhat)
        hi = np.where(b == 0, zhat, 1.0)
        inside = np.all((pts_parent >= lo - 1e-12) & (pts_parent <= hi + 1e-12),
                        axis=1)
        if not np.any(inside):
            continue
        child_pts = 2.0 * (pts_parent[inside] - lo) / (hi - lo) - 1.0
        multi = np.array([node_child_multi(node, tuple(b))])
        V, G = tensor_shape_eval(child_pts, multi, jmax=candidate.degree_cap)
        cmap = rep.child_maps[row]
        Jinv = np.linalg.inv(cmap.jacobian(child_pts))
        vals[inside] = V[:, 0]
        grads[inside] = np.einsum("qa,qam->qm", G[:, 0, :], Jinv)
    return vals, grads


class TestRepresentation:
    def test_pointwise_restriction_identity(self, rng):
        # the D rows expand each enrichment function exactly on every child
        m = square_mesh(2, degree=2, tagger=lambda c: "neumann")
        sp = ScalarSpace(m)
        for cand in default_candidates(sp, 1):
            rep = representation_matrices(sp, cand)
            idx = tensor_indices(rep.degree, 2)
            zhat = np.zeros(2) if cand.zhat is None else np.asarray(cand.zhat)
            bits = corner_bits(2)
            for row, b in enumerate(bits):
                cpts = rng.uniform(-1, 1, (7, 2))
                lo = np.where(b == 0, -1.0, zhat)
                hi = np.where(b == 0, zhat, 1.0)
                ppts = lo + 0.5 * (cpts + 1.0) * (hi - lo)
                V, _ = tensor_shape_eval(cpts, idx, jmax=rep.degree)
                direct = np.stack([
                    eval_enrichment(sp, cand, rep, k, ppts)[0]
                    for k in range(cand.size)], axis=1)
                np.testing.assert_allclose(V @ rep.D[row].T, direct, atol=1e-12)

    def test_c_equals_cq_times_b_against_sampling(self, rng):
        # C_i rows must reproduce the global dofs restricted to each child
        m = square_mesh(2, degree=2, tagger=lambda c: "neumann")
        m = m.refine_element(0)  # include hanging constraints in C_Q
        sp = ScalarSpace(m)
        eid = [e for e in m.active_ids() if m.elements[e].level == 0][0]
        cand = p_enrichment(sp, eid)
        rep = representation_matrices(sp, cand)
        idx = tensor_indices(rep.degree, 2)
        u = rng.standard_normal(sp.ndof)
        zhat = np.zeros(2)
        bits = corner_bits(2)
        for row, b in enumerate(bits):
            cpts = rng.uniform(-1, 1, (6, 2))
            lo = np.where(b == 0, -1.0, zhat)
            hi = np.where(b == 0, zhat, 1.0)
            ppts = lo + 0.5 * (cpts + 1.0) * (hi - lo)
            V, _ = tensor_shape_eval(cpts, idx, jmax=rep.degree)
            via_rep = V @ rep.C[row].T @ u[rep.rows]
            direct = sp.eval_element(eid, u, ppts)
            np.testing.assert_allclose(via_rep, direct, atol=1e-12)

    def test_child_maps_tile_parent(self):
        m = square_mesh(1, degree=1, tagger=lambda c: "neumann")
        maps = child_element_maps(m.element_map(0), np.array([0.25, -0.5]))
        assert abs(sum(cm.volume() for cm in maps) - 1.0) < 1e-14


def quadrature_prediction_oracle(space, problem, u_W, split, candidate,
                                 quad_bump=4):
    """Independent evaluation of the predicted reduction: build the candidate
    space Y explicitly, solve its dense Galerkin system by direct quadrature,
    and return (delta_e2, eps, y) from the defining identities."""
    mesh = space.mesh
    eid = candidate.element
    d = space.dim
    rep = representation_matrices(space, candidate)
    L = candidate.size
    P = rep.degree

    def grad_of(vec, eid2, pts, Jinv):
        _, g = space.eval_element(eid2, vec, pts, gradient=True)
        return np.einsum("qa,qam->qm", g, Jinv)

    # quadrature over the children of Q for everything local
    a_xx = np.zeros((L, L))
    b_x = np.zeros(L)
    a_rx = np.zeros(L)
    a_lx = np.zeros(L)
    zhat = np.zeros(d) if candidate.zhat is None else np.asarray(candidate.zhat)
    bits = corner_bits(d)
    pts, wts = tensor_gauss(P + quad_bump, d)
    a_rr = 0.0
    a_rl = 0.0
    a_ll = 0.0
    b_r = 0.0
    b_l = 0.0
    for row, b in enumerate(bits):
        cmap = rep.child_maps[row]
        J = cmap.jacobian(pts)
        det = np.linalg.det(J)
        w = wts * det
        lo = np.where(np.asarray(b) == 0, -1.0, zhat)
        hi = np.where(np.asarray(b) == 0, zhat, 1.0)
        ppts = lo + 0.5 * (pts + 1.0) * (hi - lo)
        Jinv_parent = np.linalg.inv(mesh.element_map(eid).jacobian(ppts))
        g_rest = grad_of(split.u_rest, eid, ppts, Jinv_parent)
        g_loc = grad_of(split.u_local, eid, ppts, Jinv_parent)
        gx = np.stack([eval_enrichment(space, candidate, rep, k, ppts)[1]
                       for k in range(L)], axis=1)  # (q, L, d)
        a_xx += np.einsum("q,qkm,qlm->kl", w, gx, gx)
        a_rx += np.einsum("q,qm,qlm->l", w, g_rest, gx)
        a_lx += np.einsum("q,qm,qlm->l", w, g_loc, gx)
        a_rl += float(np.einsum("q,qm,qm->", w, g_rest, g_loc))
        a_ll += float(np.einsum("q,qm,qm->", w, g_loc, g_loc))
        b_r_el = 0.0
        if problem.volume is not None:
            fv = np.asarray(problem.volume(cmap.map_point(pts)), dtype=float)
            vals_rest = space.eval_element(eid, split.u_rest, ppts)
            vals_loc = space.eval_element(eid, split.u_local, ppts)
            vx = np.stack([eval_enrichment(space, candidate, rep, k, ppts)[0]
                           for k in range(L)], axis=1)
            b_x += np.einsum("q,qk->k", w * fv, vx)
            b_r_el = float(w @ (fv * vals_rest))
            b_l += float(w @ (fv * vals_loc))
        b_r += b_r_el
    # contributions of u_rest outside Q (norm and load)
    for e2 in mesh.active_ids():
        if e2 != eid:
            p2 = space.degrees[e2]
            emap2 = mesh.element_map(e2)
            pts2, wts2 = tensor_gauss(p2 + quad_bump, d)
            J2 = emap2.jacobian(pts2)
            det2 = np.linalg.det(J2)
            w2 = wts2 * det2
            g2 = grad_of(split.u_rest, e2, pts2, np.linalg.inv(J2))
            a_rr += float(np.einsum("q,qm,qm->", w2, g2, g2))
            if problem.volume is not None:
                fv2 = np.asarray(problem.volume(emap2.map_point(pts2)),
                                 dtype=float)
                b_r += float(w2 @ (fv2 * space.eval_element(e2, split.u_rest,
                                                            pts2)))
        if problem.neumann is not None:
            for f, info in enumerate(mesh.facet_neighbors(e2)):
                if info.kind != "boundary" or info.tag not in problem.neumann_tags:
                    continue
                qf, wf = tensor_gauss(space.degrees[e2] + quad_bump, d - 1)
                ref = mesh.facet_embed(f, qf)
                dS, _ = mesh.facet_area_element(e2, f, qf)
                gv = np.asarray(problem.neumann(
                    mesh.element_map(e2).map_point(ref)), dtype=float)
                b_r += float((wf * dS * gv)
                             @ space.eval_element(e2, split.u_rest, ref))
                b_l += float((wf * dS * gv)
                             @ space.eval_element(e2, split.u_local, ref))
    # u_rest inside Q via the children quadrature
    for row, b in enumerate(bits):
        cmap = rep.child_maps[row]
        J = cmap.jacobian(pts)
        det = np.linalg.det(J)
        w = wts * det
        lo = np.where(np.asarray(b) == 0, -1.0, zhat)
        hi = np.where(np.asarray(b) == 0, zhat, 1.0)
        ppts = lo + 0.5 * (pts + 1.0) * (hi - lo)
        Jinv_parent = np.linalg.inv(mesh.element_map(eid).jacobian(ppts))
        g_rest = grad_of(split.u_rest, eid, ppts, Jinv_parent)
        a_rr += float(np.einsum("q,qm,qm->", w, g_rest, g_rest))
    # dense Galerkin solve on Y = span{u_rest, xi}
    G = np.zeros((L + 1, L + 1))
    G[0, 0] = a_rr
    G[0, 1:] = a_rx
    G[1:, 0] = a_rx
    G[1:, 1:] = a_xx
    rhs = np.concatenate([[b_r], b_x])
    sol, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    alpha, beta = float(sol[0]), sol[1:]
    # || u_Y - u_W ||^2 with u_Y - u_W = (alpha-1) u_rest - u_loc + beta xi
    am1 = alpha - 1.0
    diff_sq = (am1**2 * a_rr + a_ll + beta @ a_xx @ beta
               - 2.0 * am1 * a_rl + 2.0 * am1 * (a_rx @ beta)
               - 2.0 * (a_lx @ beta))
    rho_y_loc = b_l - (alpha * a_rl + beta @ a_lx)
    return float(diff_sq - 2.0 * rho_y_loc), alpha - 1.0, beta, float(rho_y_loc)


class TestPredictionIdentities:
    def configs(self, rng):
        out = []
        m1 = interval_mesh(3, 2)
        out.append((m1, UNIT_F))
        m2 = square_mesh(2, degree=2, tagger=lambda c: "dirichlet")
        out.append((m2, ScalarProblem(
            volume=lambda x: np.cos(x[:, 0]) + x[:, 1])))
        m3 = square_mesh(2, degree=1,
                         tagger=lambda c: "dirichlet" if c[0] < 1e-12 else "neumann")
        out.append((m3, ScalarProblem(
            volume=lambda x: np.ones(len(x)),
            neumann=lambda x: 0.1 * x[:, 0])))
        return out

    def test_formula_matches_quadrature_oracle(self, rng):
        for m, prob in self.configs(rng):
            sp = ScalarSpace(m)
            u, A, b = solve_scalar(sp, prob)
            for eid in m.active_ids():
                split = local_split(sp, u, eid)
                for cand in default_candidates(sp, eid):
                    pred = predict_reduction(sp, prob, A, b, u, split, cand)
                    if pred.skipped:
                        continue
                    de2, eps, y, rho_y = quadrature_prediction_oracle(
                        sp, prob, u, split, cand)
                    assert abs(pred.delta_e2 - de2) < 1e-10 * max(1.0, abs(de2))
                    assert abs(pred.eps - eps) < 1e-8 * max(1.0, abs(eps))

    def test_enrichment_space_properties(self, rng):
        # at p = 1 the interior part is empty: every candidate enriches, so
        # rho_Y(u_loc) = 0 and the reduction equals the residual of y_xi
        m = square_mesh(2, degree=1,
                        tagger=lambda c: "dirichlet" if c[0] < 1e-12 else "neumann")
        prob = ScalarProblem(volume=lambda x: np.ones(len(x)))
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, prob)
        for eid in m.active_ids():
            split = local_split(sp, u, eid)
            for cand in default_candidates(sp, eid):
                pred = predict_reduction(sp, prob, A, b, u, split, cand)
                assert not pred.skipped
                assert pred.delta_e2 >= -1e-12
                assert abs(pred.delta_e2 - pred.rho_w_yxi) < 1e-10
                _, _, _, rho_y = quadrature_prediction_oracle(sp, prob, u,
                                                              split, cand)
                assert abs(rho_y) < 1e-10

    def test_full_interior_rule_is_enrichment_space(self, rng):
        # J_d = all bubbles up to p+1 contains the interior part: W_loc in Y
        m = interval_mesh(2, 3)
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        eid = 0
        split = local_split(sp, u, eid)
        rule = [(j,) for j in range(2, 5)]
        cand = p_enrichment(sp, eid, rule=rule)
        pred = predict_reduction(sp, UNIT_F, A, b, u, split, cand)
        _, _, _, rho_y = quadrature_prediction_oracle(sp, UNIT_F, u, split, cand)
        assert abs(rho_y) < 1e-10
        assert pred.delta_e2 >= -1e-12
        assert abs(pred.delta_e2 - pred.rho_w_yxi) < 1e-10

    def test_galerkin_orthogonality(self, rng):
        m = square_mesh(2, degree=2, tagger=lambda c: "dirichlet")
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        scale = max(np.abs(b).max(), 1.0)
        for _ in range(20):
            w = rng.standard_normal(sp.ndof)
            assert abs(float(b @ w) - float(u @ (A @ w))) < 1e-10 * scale

    def test_bordered_system_symmetric(self):
        m = interval_mesh(2, 2)
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        # symmetry is structural: assemble and check directly
        from hpfem.predictor import child_local_matrices
        split = local_split(sp, u, 0)
        cand = p_enrichment(sp, 0)
        rep = representation_matrices(sp, cand)
        A_loc, b_loc = child_local_matrices(rep, UNIT_F)
        M = np.zeros((2, 2))
        Avv = np.zeros((1, 1))
        for Di, Ai in zip(rep.D, A_loc):
            Avv += Di @ Ai @ Di.T
        M[1:, 1:] = Avv
        assert np.array_equal(M, M.T)

    def test_single_element_p1_bubble_closed_form(self):
        # -u'' = 1 on (0,1): adding the quadratic bubble captures the exact
        # solution, so the predicted reduction is the full error 1/12
        m = interval_mesh(1, 1)
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        assert sp.ndof == 0
        split = local_split(sp, u, 0)
        pred = predict_reduction(sp, UNIT_F, A, b, u, split, p_enrichment(sp, 0))
        assert abs(pred.delta_e2 - 1.0 / 12.0) < 1e-13
        assert abs(pred.rho_w_yxi - 1.0 / 12.0) < 1e-13


class TestOverkillEquivalence:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_reduction_matches_overkill(self, dim, rng):
        if dim == 1:
            m = interval_mesh(2, 1)
            prob = UNIT_F
            overdeg = 10
        else:
            m = square_mesh(2, degree=1, tagger=lambda c: "dirichlet")
            prob = ScalarProblem(volume=lambda x: np.ones(len(x)))
            overdeg = 8
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, prob)
        mref = m.with_degrees({e: overdeg for e in m.active_ids()})
        spref = ScalarSpace(mref)
        uref, Aref, bref = solve_scalar(spref, prob)
        norm_ref = float(uref @ (Aref @ uref))
        err_W = norm_ref - float(u @ (A @ u))
        eid = m.active_ids()[0]
        split = local_split(sp, u, eid)
        cand = p_enrichment(sp, eid)
        pred = predict_reduction(sp, prob, A, b, u, split, cand)
        # Galerkin + nesting: ||e_Y||^2 = ||u_ref||^2 - ||u_Y||^2 up to the
        # overkill gap; build u_Y explicitly through the oracle quantities
        de2, *_ = quadrature_prediction_oracle(sp, prob, u, split, cand)
        assert abs(pred.delta_e2 - de2) < 1e-9
        # the reduction can not exceed the total error
        assert pred.delta_e2 <= err_W * (1 + 1e-6) + 1e-12

    def test_realized_reduction_1d(self):
        # enrichment-space prediction is realized when the new space contains Y
        m = interval_mesh(2, 1)
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        mref = m.with_degrees({e: 10 for e in m.active_ids()})
        spref = ScalarSpace(mref)
        uref, Aref, _ = solve_scalar(spref, UNIT_F)
        norm_ref = float(uref @ (Aref @ uref))
        err_W = norm_ref - float(u @ (A @ u))
        eid = 0
        split = local_split(sp, u, eid)
        pred = predict_reduction(sp, UNIT_F, A, b, u, split,
                                 p_enrichment(sp, eid))
        m2 = m.with_degrees({eid: 2})
        sp2 = ScalarSpace(m2)
        u2, A2, _ = solve_scalar(sp2, UNIT_F)
        err_W2 = norm_ref - float(u2 @ (A2 @ u2))
        realized = err_W - err_W2
        assert realized >= 0.9 * pred.delta_e2
        assert abs(realized - pred.delta_e2) < 1e-6 * max(realized, 1e-12) + 1e-12


class TestChooserAndApply:
    def test_single_candidate_returned(self):
        m = interval_mesh(2, 1)
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        best, preds = choose_enrichment(sp, UNIT_F, A, b, u, 0,
                                        candidates=[p_enrichment(sp, 0)])
        assert best.candidate.kind == "p"
        assert len(preds) == 1

    def test_apply_p_choice(self):
        m = square_mesh(2, degree=2, tagger=lambda c: "dirichlet")
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        best, _ = choose_enrichment(sp, UNIT_F, A, b, u, 0,
                                    candidates=[p_enrichment(sp, 0)])
        m2 = apply_enrichment(m, best)
        assert m2.elements[0].degree == 3

    def test_apply_hp_choice_inherits_degree(self):
        m = square_mesh(2, degree=2, tagger=lambda c: "dirichlet")
        sp = ScalarSpace(m)
        u, A, b = solve_scalar(sp, UNIT_F)
        best, _ = choose_enrichment(sp, UNIT_F, A, b, u, 0,
                                    candidates=[hp_enrichment(sp, 0)])
        m2 = apply_enrichment(m, best)
        assert not m2.elements[0].active
        kids = m2.elements[0].children
        assert len(kids) == 4
        assert all(m2.elements[c].degree == 2 for c in kids)

    def test_degree_comparability_enforced(self):
        m = square_mesh(2, degree=2, tagger=lambda c: "dirichlet")
        m = m.with_degrees({0: 5})
        m2 = enforce_degree_comparability(m, bound=1)
        for eid in m2.active_ids():
            p = m2.elements[eid].degree
            for info in m2.facet_neighbors(eid):
                if info.kind != "interior":
                    continue
                for piece in info.pieces:
                    q = m2.elements[piece.neighbor].degree
                    assert abs(p - q) <= 1

    def test_skip_reports_reason(self):
        m = interval_mesh(1, 3)
        sp = ScalarSpace(m)
        # all dofs interior: u entirely local
        u = np.ones(sp.ndof)
        split = local_split(sp, u, 0)
        assert split.degenerate
        pred = predict_reduction(sp, UNIT_F, None, None, u, split,
                                 p_enrichment(sp, 0))
        assert pred.skipped == "entirely local solution"
