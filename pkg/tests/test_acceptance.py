"""Acceptance suite: one test per criterion, each printing a PASS line with the
measured numbers (run with -s to see them)."""

import time

import numpy as np
import pytest

from sobtop import (
    GridField,
    PipelineParams,
    builtin_field,
    cell_degree_sweep,
    extendability_oracle,
    homogeneous_from_loop,
    hopf_linking,
    hopf_whitehead,
    jacobian_pairing,
    maximal_function_detector,
    mean_oscillation,
    pullback_degree,
    run_pipeline,
    shrinking_profile,
    sobolev_norm,
    standard_disk_boundaries,
    thickening_profile,
    unit_box,
    winding_degree,
)
from sobtop.invariants import test_form_battery as form_battery
from sobtop.builtins import hopf_fibration
from sobtop.fields import SampledSphereMap
from sobtop.geometry import TriangulatedSphere
from sobtop.util import node_mesh


def report(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS  ({detail})")


def test_criterion_1_degree_exactness():
    t0 = time.time()
    for d in range(-3, 4):
        t = np.linspace(0.0, 2.0 * np.pi, 2048, endpoint=False)
        samples = np.stack([np.cos(d * t), np.sin(d * t)], axis=1)
        ang = np.unwrap(np.arctan2(samples[:, 1], samples[:, 0]))
        total = (ang[-1] - ang[0] + (ang[1] - ang[0])) / (2 * np.pi)
        assert winding_degree(samples) == d
        assert abs(total - d) < 1e-6
    sph = TriangulatedSphere(2, 4)
    ident = SampledSphereMap(sphere=sph, values=sph.vertices)
    anti = SampledSphereMap(sphere=sph, values=-sph.vertices)
    assert pullback_degree(ident) == 1
    assert pullback_degree(anti) == -1
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report(1, f"winding d in -3..3 exact, S^2 degrees +1/-1, {elapsed:.2f}s")


def test_criterion_2_dirac_formula():
    t0 = time.time()
    u = builtin_field("radial", (128, 128))
    forms = form_battery(u.box)
    worst = 0.0
    for form in forms:
        val = jacobian_pairing(u, form)
        expected = float(form(np.zeros((1, 2)))[0])
        err = abs(val - expected)
        assert err <= 0.02 * form.sup
        worst = max(worst, err / form.sup)
    # halving h halves the error within a factor 1.5
    center_form = [f for f in forms if np.allclose(f.center, 0.0)][0]
    e_coarse = abs(jacobian_pairing(u, center_form) - center_form.sup)
    u2 = builtin_field("radial", (256, 256))
    e_fine = abs(jacobian_pairing(u2, center_form) - center_form.sup)
    assert e_fine <= 0.75 * e_coarse
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(2, f"max err {worst:.4f} of sup, halving ratio {e_fine / e_coarse:.2f}, {elapsed:.1f}s")


def test_criterion_3_smooth_nullity():
    worsts = []
    for dims in (128, 256):
        u = builtin_field("smooth_bump", (dims, dims))
        worst = 0.0
        for form in form_battery(u.box):
            worst = max(worst, abs(jacobian_pairing(u, form)) / form.grad_sup)
        worsts.append(worst)
    assert worsts[0] <= 1e-2
    assert worsts[1] <= worsts[0]
    report(3, f"pairings {worsts[0]:.2e} -> {worsts[1]:.2e} of ||d alpha||")


def test_criterion_4_hopf_invariant():
    v4 = hopf_fibration(4)
    assert hopf_linking(v4) == 1
    wh4 = hopf_whitehead(v4)
    assert abs(wh4 - 1.0) <= 0.15
    t0 = time.time()
    v5 = hopf_fibration(5)
    assert hopf_linking(v5) == 1
    wh5 = hopf_whitehead(v5)
    assert abs(wh5 - 1.0) <= 0.08
    elapsed = time.time() - t0
    assert elapsed < 180.0
    report(4, f"linking 1 exactly, whitehead {wh4:.4f} (r4) / {wh5:.4f} (r5), r5 in {elapsed:.0f}s")


def test_criterion_5_extendability_oracle():
    def verdict(u):
        w = maximal_function_detector(u, p=1.5)
        disks = standard_disk_boundaries(u.box, ell=1, count=64, seed=3)
        return extendability_oracle(u, disks, w)

    v = verdict(builtin_field("radial", (128, 128)))
    assert not v.extendable and v.admissible >= 32
    assert len(v.atoms) == 1 and v.atoms[0][1] == 1
    assert np.linalg.norm(v.atoms[0][0]) < 0.02

    v0 = verdict(homogeneous_from_loop(lambda th: 0.8 * np.sin(th), (128, 128)))
    assert v0.extendable and v0.admissible >= 32

    vd = verdict(builtin_field("dipole", (128, 128)))
    assert not vd.extendable and vd.admissible >= 32
    assert sorted(d for _, d in vd.atoms) == [-1, 1]
    report(5, f"radial obstructed (+1), homogeneous-0 extendable, dipole (+1,-1); "
              f"admissible {v.admissible}/{v0.admissible}/{vd.admissible}")


def test_criterion_6_profile_certificates():
    t0 = time.time()
    for r in (0.1, 0.2):
        for rho in (0.3, 0.4):
            rep = thickening_profile(r, rho).invariants_report()
            assert rep["identity_beyond_rho"] == 0.0
            assert rep["monotone_margin"] > 0.0
            assert rep["limit_rel_err_1e8"] <= 0.10
            assert rep["jacobian_floor_m2"] > 0.0 and rep["jacobian_floor_m3"] > 0.0
            for tau in (r / 4.0, r / 8.0):
                theta = min(1.5, 0.9 * rho / r)
                sp = shrinking_profile(r, rho, tau, theta)
                root = np.sqrt(1.0 + sp.gamma)
                assert theta < root < 1.0 / tau
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(6, f"thickening+shrinking certificates on the r/rho/tau grid, {elapsed:.1f}s")


def test_criterion_7_opening_contracts():
    from sobtop import classify_cubes, open_at_point, open_on_skeleton
    from sobtop.geometry import Cubication
    from sobtop.pipeline import _generic_inner_box

    u = builtin_field("dipole", (128, 128))
    w = maximal_function_detector(u, p=1.5)
    # point opening: exact constancy and identity, averaged detector bound
    center, delta = np.array([0.1, -0.2]), 0.04
    out, omap = open_at_point(u, center, delta, w, samples=64, seed=2)
    nodes = u.nodes().reshape(-1, 2)
    ov, uv = out.values.reshape(-1, 2), u.values.reshape(-1, 2)
    inside = np.all(np.abs(nodes - center) <= delta, axis=1)
    outside = np.any(np.abs(nodes - center) > 4 * delta, axis=1)
    assert np.max(np.ptp(ov[inside], axis=0)) <= 1e-12
    assert np.array_equal(ov[outside], uv[outside])

    # Tonelli-average detector bound with C = 2 at 512 samples
    from sobtop import DetectorField, translation_average
    from sobtop.geometry import BoundaryParam

    gamma = BoundaryParam(sphere=TriangulatedSphere(1, 5), radius=0.4,
                          center=np.zeros(2), axes=(0, 1), m=2)
    stats = translation_average(w, gamma, delta=0.15, samples=512, seed=1)
    ball = np.pi * 0.15**2
    assert stats.mean * ball <= 2.0 * gamma.image_measure() * w.integral

    # skeleton opening: Sobolev constant <= 20 on the corpus
    cub = Cubication(_generic_inner_box(u, 0.25), 0.25)
    cls = classify_cubes(u, cub, alpha=0.05, iota=0.2, rho=0.25, k=1, p=1.5)
    _, _, sob = open_on_skeleton(u, cls, "U", 1, w, seed=0)
    assert max(sob.values()) <= 20.0
    report(7, f"exact constancy/identity, Tonelli C=2 ok, Sobolev constant {max(sob.values()):.2f} <= 20")


def test_criterion_8_pipeline_convergence():
    # the grid is held fixed across the eta sweep so the comparison isolates
    # eta-convergence from discretization effects
    p = 1.5
    u = builtin_field("dipole", (512, 512))
    norm_d, times = [], []
    for eta in (0.25, 0.125, 0.0625):
        t0 = time.time()
        rep = run_pipeline(u, PipelineParams(eta=eta, p=p, alpha=0.05))
        times.append(time.time() - t0)
        assert rep.final_class == "R_0"
        assert sorted(d for _, d in rep.final_atoms) == [-1, 1]
        norm_d.append(rep.final_distance)
    assert norm_d[0] > norm_d[1] > norm_d[2]
    assert norm_d[2] <= 0.5 * norm_d[0]
    for t in times:
        assert t < 120.0

    us = builtin_field("smooth_bump", (512, 512))
    rep = run_pipeline(us, PipelineParams(eta=0.0625, p=1.5, alpha=0.05))
    norm = sobolev_norm(us, k=1, p=1.5).value
    assert rep.final_distance <= 0.05 * norm
    report(8, f"dipole d: {norm_d[0]:.3f} > {norm_d[1]:.3f} > {norm_d[2]:.3f}, "
              f"ratio {norm_d[2] / norm_d[0]:.3f} <= 0.5, "
              f"smooth final {rep.final_distance:.2e} <= 0.05*{norm:.2f}, "
              f"times {[f'{t:.0f}s' for t in times]}")


def test_criterion_9_obstruction_persistence():
    results = []
    for eta, dims in ((0.25, 128), (0.125, 256), (0.0625, 384)):
        u = builtin_field("radial", (dims, dims))
        rep = run_pipeline(u, PipelineParams(eta=eta, p=1.5, alpha=0.05))
        assert rep.final_class == "R_0"
        assert len(rep.final_atoms) == 1 and rep.final_atoms[0][1] == 1
        results.append(rep.final_atoms[0])
    report(9, f"radial stays R_0 with one +1 atom at every eta: {results}")


def test_criterion_10_vmo_checks():
    # wedge indicator on the two-triangle polytope
    dims = (192, 192)
    box = unit_box(2)
    pts = node_mesh(box.lo, box.hi, dims)
    vals = np.where(pts[..., 0] >= 0, 1.0, -1.0)[..., None]
    in1 = (pts[..., 1] >= 0) & (pts[..., 1] <= pts[..., 0]) & (pts[..., 0] <= 1)
    in2 = (pts[..., 1] >= 0) & (pts[..., 1] <= -pts[..., 0]) & (pts[..., 0] >= -1)
    f = GridField(box, dims, vals)
    rep = mean_oscillation(f, radii=(0.05, 0.1, 0.2, 0.4), domain_mask=in1 | in2)
    for v in rep.values:
        assert abs(v - 1.0) <= 0.03

    # log-log field: 1-D double-average quadrature (the stated oracle) shows
    # decreasing oscillation with [v]_{1e-3} < 0.5 [v]_{0.1}
    def osc_1d(rho, centers=401):
        xs = np.linspace(-0.5 + rho, 0.5 - rho, centers)
        best = 0.0
        for c in np.concatenate([xs, [0.0]]):
            t = np.linspace(c - rho, c + rho, 401)
            t = t[np.abs(t) > 1e-300]
            v = np.log(np.abs(np.log(np.abs(t))))
            best = max(best, float(np.mean(np.abs(v[:, None] - v[None, :]))))
        return best

    radii = (0.1, 0.01, 1e-3)
    osc = [osc_1d(r) for r in radii]
    assert osc[0] > osc[1] > osc[2]
    assert osc[2] < 0.5 * osc[0]
    report(10, f"wedge double-average 1 within 3%; log-log osc {osc[0]:.3f} > {osc[1]:.3f} > {osc[2]:.3f}")
