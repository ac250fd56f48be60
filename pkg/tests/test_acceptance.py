"""Acceptance gate: one test (and one printed pass line) per product claim.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Each test enforces its stated tolerance and, where stated, its
runtime budget.
"""

import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from tracks4d.archive import read_archive, storage_estimate
from tracks4d.barymap import ALPHA_SCALE
from tracks4d.camera import unproject_map, world_to_cam
from tracks4d.curate import coverage_stats, motion_filter, occlusion_filter
from tracks4d.fit import FaceAccel, brute_force_fit, fit_pixel
from tracks4d.metrics import (Similarity, apply_similarity, ate,
                              correspondence_error, depth_metrics,
                              mutual_nearest_neighbors, recon_metrics, rpe,
                              track_apd, track_epe, umeyama_align)
from tracks4d.scene import SceneSpec, generate_clip
from tracks4d.trajectory import (HFOV_MAX, HFOV_MIN, base_poses, make_rig,
                                 perlin_shake)

TIB = 1024.0 ** 4
GIB = 1024.0 ** 3
ROUND_TRIP_TOL = 1e-3


def _ok(n, msg):
    print(f"\nPASS criterion {n}: {msg}")


@pytest.fixture(scope="module")
def medium_clip(tmp_path_factory):
    """64x64, T=16, C=4 clip for the fidelity criterion."""
    path = tmp_path_factory.mktemp("accept") / "medium.t4d"
    spec = SceneSpec(n_dynamic=2, include_figure=True, n_times=16, seed=1)
    t0 = time.time()
    generate_clip(spec, "independent", path, n_cameras=4, width=64,
                  height=64, seed=1)
    return path, time.time() - t0


def test_criterion_01_storage_formulas():
    dense = storage_estimate(512, 512, 300, 8, mode="dense")["bytes"] / TIB
    rgb = storage_estimate(512, 512, 300, 8, mode="rgb")["bytes"] / GIB
    compact = storage_estimate(512, 512, 300, 8, n_vertices=100_000,
                               mode="compact")
    assert 2.0 <= dense <= 2.2
    assert 6.8 <= rgb <= 7.2
    assert abs(compact["bytes"] / GIB - 9.3) <= 0.93
    assert compact["bytes"] == (compact["pixel_record_bytes"]
                                + compact["vertex_track_bytes"])
    _ok(1, f"dense {dense:.2f} TiB, rgb {rgb:.2f} GiB, "
           f"compact {compact['bytes'] / GIB:.2f} GiB with split components")


def test_criterion_02_round_trip_fidelity(medium_clip):
    path, gen_seconds = medium_clip
    t0 = time.time()
    errors = []
    bounds = []
    with read_archive(path) as a:
        union = a.union
        verts_time = union.vertices_all_times()
        for i in range(a.n_frames):
            t = a.frame_id(i).time
            depth = a.read_depth(i)
            bary = a.read_bary(i)
            dyn = bary.dynamic
            if not dyn.any():
                continue
            truth = unproject_map(depth, a.camera(i)).points[dyn]
            decoded = a.query_dpm(i, t_j=t).points[dyn]
            errors.append(np.linalg.norm(decoded - truth, axis=1))
            # per-pixel quantization allowance from the face edge lengths
            tri = verts_time[t][union.faces[bary.face[dyn].astype(np.int64)]]
            quant = (np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1)
                     + np.linalg.norm(tri[:, 1] - tri[:, 2], axis=1))
            bounds.append(ROUND_TRIP_TOL + quant / ALPHA_SCALE)
    err = np.concatenate(errors)
    bound = np.concatenate(bounds)
    elapsed = gen_seconds + (time.time() - t0)
    assert err.size > 1_000
    assert np.all(err <= bound), f"worst {err.max():.2e}"
    assert np.median(err) <= 1e-5
    assert elapsed <= 60.0
    _ok(2, f"{err.size} dynamic pixels, 100% within tolerance, "
           f"median {np.median(err):.2e}, {elapsed:.1f}s")


def test_criterion_03_oracle_equivalence(tiny_clip, rng):
    path, _ = tiny_clip
    with read_archive(path) as a:
        union = a.union
        # 10^4 random near-surface samples at random times
        verts_time = union.vertices_all_times()
        n = 10_000
        times = rng.integers(0, a.n_times, n)
        faces = rng.integers(0, union.n_faces, n)
        weights = rng.dirichlet(np.ones(3), n)
        offsets = rng.normal(size=(n, 3)) * 0.02
        accels = {t: FaceAccel(union, t) for t in range(a.n_times)}
        mismatches = 0
        for k in range(n):
            t = int(times[k])
            p = weights[k] @ verts_time[t][union.faces[faces[k]]] + offsets[k]
            fast = fit_pixel(p, accels[t])
            slow = brute_force_fit(p, union, t)
            assert abs(fast.residual - slow.residual) <= 1e-9
            if fast.bc.face != slow.bc.face:
                mismatches += 1  # allowed only on exact residual ties
                assert abs(fast.residual - slow.residual) <= 1e-9
        # codec vs naive materialization
        worst = 0.0
        for i, ref, t_j in [(0, None, 3), (7, 2, 0), (15, 15, 7)]:
            pm = a.query_dpm(i, ref=ref, t_j=t_j)
            naive = _naive_dpm(a, i, ref, t_j)
            assert np.array_equal(pm.valid, naive[1])
            worst = max(worst, float(np.abs(pm.points[pm.valid]
                                            - naive[0][pm.valid]).max()))
        assert worst <= 1e-6
    _ok(3, f"fit oracle agrees on 10^4 samples ({mismatches} residual ties), "
           f"dpm vs naive max err {worst:.1e}")


def _naive_dpm(a, i, ref, t_j):
    from tracks4d.camera import NoSurfaceError
    pts = np.zeros((a.height, a.width, 3))
    valid = np.zeros((a.height, a.width), bool)
    for v in range(a.height):
        for u in range(a.width):
            try:
                track, _ = a.query_track(i, (u, v), ref=ref)
            except NoSurfaceError:
                continue
            pts[v, u] = track[t_j]
            valid[v, u] = True
    return pts, valid


def test_criterion_04_reference_frame_identity(tiny_clip, rng):
    path, _ = tiny_clip
    worst = 0.0
    with read_archive(path) as a:
        for _ in range(50):
            i = int(rng.integers(a.n_frames))
            k = int(rng.integers(a.n_frames))
            t_j = int(rng.integers(a.n_times))
            direct = a.query_dpm(i, ref=k, t_j=t_j)
            base = a.query_dpm(i, ref=0, t_j=t_j)
            # re-express the frame-0 map in frame k
            cam0, camk = a.camera(0), a.camera(k)
            world = base.points[base.valid] @ cam0.R + cam0.o
            moved = world_to_cam(world, camk)
            assert np.array_equal(direct.valid, base.valid)
            worst = max(worst, float(
                np.abs(direct.points[direct.valid] - moved).max()))
    assert worst <= 1e-6
    _ok(4, f"50 (i, k, t_j) triples, max identity error {worst:.1e}")


def test_criterion_05_cross_view_consistency(paired_clip):
    path, _ = paired_clip
    total = 0
    agree = 0
    with read_archive(path) as a:
        union = a.union
        verts0 = union.vertices_all_times()
        for c in range(0, a.n_cameras, 2):
            fa, fb = c, c + 1  # the pair's first frames (t = 0)
            ca, cb = a.camera(fa), a.camera(fb)
            assert np.array_equal(ca.o, cb.o) and np.array_equal(ca.R, cb.R)
            pa = a.query_dpm(fa, t_j=a.n_times - 1)
            pb = a.query_dpm(fb, t_j=a.n_times - 1)
            both = pa.valid & pb.valid
            d = np.linalg.norm(pa.points[both] - pb.points[both], axis=1)
            # tolerance: 2x the round-trip budget incl. quantization
            ba = a.read_bary(fa)
            dyn = ba.dynamic[both]
            tri = verts0[0][union.faces[np.where(
                dyn, ba.face[both].astype(np.int64), 0)]]
            quant = (np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1)
                     + np.linalg.norm(tri[:, 1] - tri[:, 2], axis=1))
            tol = 2.0 * (ROUND_TRIP_TOL + np.where(dyn, quant, 0.0)
                         / ALPHA_SCALE)
            total += d.size
            agree += int((d <= tol).sum())
    assert total > 1000
    frac = agree / total
    assert frac >= 0.99
    _ok(5, f"{frac:.2%} of {total} co-visible pixels agree across "
           "the paired first frames")


def test_criterion_06_metric_oracles(rng):
    # umeyama recovers a known similarity to 1e-9
    pts = rng.normal(size=(32, 3))
    sim = Similarity(scale=1.7,
                     rotation=Rotation.random(random_state=3).as_matrix(),
                     translation=np.array([0.3, -1.2, 2.0]))
    est = umeyama_align(pts, apply_similarity(sim, pts))
    assert abs(est.scale - sim.scale) <= 1e-9
    assert np.abs(est.rotation - sim.rotation).max() <= 1e-9
    assert np.abs(est.translation - sim.translation).max() <= 1e-9

    # perfect predictions
    traj = rng.normal(size=(12, 3))
    rots = Rotation.random(12, random_state=4).as_matrix()
    assert ate(traj, traj) <= 1e-12
    t_err, r_err = rpe(rots, traj, rots, traj)
    assert t_err <= 1e-12 and r_err <= 1e-4
    tracks = rng.normal(size=(10, 6, 3))
    assert track_epe(tracks, tracks)["per_point"] == 0.0
    assert track_apd(tracks, tracks) == 100.0
    depth = rng.uniform(1, 5, (16, 16))
    perfect = depth_metrics(depth, depth, align="none")
    assert perfect["abs_rel"] == 0.0 and perfect["delta_125"] == 100.0
    cloud = rng.normal(size=(150, 3))
    rm = recon_metrics(cloud, cloud)
    assert rm["acc"] == 0.0 and rm["comp"] == 0.0 and rm["nc"] >= 1 - 1e-9
    src = [rng.normal(size=(20, 3))]
    tgt = [rng.normal(size=(20, 3))]
    assert correspondence_error(tgt, src, tgt)["l_cor"] <= 1e-12

    # invariances
    pred = traj + rng.normal(size=(12, 3)) * 0.05
    assert abs(ate(apply_similarity(sim, pred), traj)
               - ate(pred, traj)) <= 1e-9
    d_pred = 0.4 * depth + 1.3
    ss = depth_metrics(d_pred, depth, align="scale-and-shift")
    assert ss["abs_rel"] <= 1e-9 and ss["delta_125"] == 100.0

    # brute-force recounts on <= 16^2-sized instances
    gt = rng.normal(size=(16, 16, 3))
    noisy = gt + rng.normal(size=(16, 16, 3)) * 0.3
    err = np.linalg.norm(noisy - gt, axis=-1)
    assert track_epe(noisy, gt)["per_point"] == pytest.approx(
        err.mean(), abs=1e-12)
    from tracks4d.metrics import APD_THRESHOLDS
    expect = 100.0 * np.mean([(err.ravel() < tau).mean()
                              for tau in APD_THRESHOLDS])
    assert track_apd(noisy, gt) == pytest.approx(expect, abs=1e-12)
    pd_ = depth.ravel() * rng.uniform(0.8, 1.2, 256)
    dm = depth_metrics(pd_, depth.ravel(), align="none")
    assert dm["abs_rel"] == pytest.approx(
        np.mean(np.abs(pd_ - depth.ravel()) / depth.ravel()), abs=1e-12)
    p_cloud = rng.normal(size=(16, 3))
    g_cloud = rng.normal(size=(16, 3))
    dmat = np.linalg.norm(p_cloud[:, None] - g_cloud[None], axis=-1)
    rm = recon_metrics(p_cloud, g_cloud,
                       gt_normals=np.tile([0, 0, 1.0], (16, 1)),
                       pred_normals=np.tile([0, 0, 1.0], (16, 1)))
    assert rm["acc"] == pytest.approx(dmat.min(axis=1).mean(), abs=1e-12)
    assert rm["comp"] == pytest.approx(dmat.min(axis=0).mean(), abs=1e-12)
    pairs = mutual_nearest_neighbors(p_cloud, g_cloud)
    nn_of_g = dmat.argmin(axis=0)  # target u -> source v
    nn_of_p = dmat.argmin(axis=1)  # source v -> target u
    expect_pairs = [(u, int(nn_of_g[u])) for u in range(16)
                    if nn_of_p[nn_of_g[u]] == u]
    assert sorted(map(tuple, pairs.tolist())) == sorted(expect_pairs)
    _ok(6, "umeyama/ATE/RPE/EPE/APD/AbsRel/delta/Acc/Comp/NC/L_cor oracles")


def test_criterion_07_curation_thresholds():
    keep = np.zeros((400, 400), bool)
    keep[100:300, 100:300] = True  # 200x200 fully visible
    assert occlusion_filter(keep).keep

    small = np.zeros((400, 400), bool)
    small[0:50, 0:50] = True  # bbox area 2,500 < 10,000
    d = occlusion_filter(small)
    assert not d.keep and d.bbox_area == 2_500

    sparse = np.zeros((400, 400), bool)
    sparse[100, 100] = sparse[100, 299] = True
    sparse[299, 100] = sparse[299, 299] = True
    flat = sparse[101:299, 101:299].ravel()
    flat[np.nonzero(~flat)[0][:10_996]] = True
    sparse[101:299, 101:299] = flat.reshape(198, 198)
    d = occlusion_filter(sparse)  # 11,000 / 40,000 = 0.275 < 0.3
    assert not d.keep and d.visible_ratio == pytest.approx(0.275)

    teleport = [np.zeros((300, 300), bool) for _ in range(3)]
    teleport[0][:60, :60] = True
    teleport[1][:60, 200:260] = True
    teleport[2][:60, 200:260] = True
    assert not motion_filter(teleport).keep
    static = [teleport[1]] * 4
    assert motion_filter(static).keep
    _ok(7, "three occlusion boundary cases and both motion demos")


def test_criterion_08_camera_statistics():
    t0 = time.time()
    az, po, ra = [], [], []
    root = np.array([0.0, 0.0, 0.5])
    for seed in range(100):
        specs = make_rig("paired-orbits", root, seed)
        positions = []
        for s in specs:
            assert HFOV_MIN <= s.hfov_deg <= HFOV_MAX
            pos, tgt = base_poses(s, 30)
            pos, _ = perlin_shake(pos, tgt, s.shake_amplitude, s.shake_seed)
            positions.append(pos)
        a, p, r = coverage_stats(np.concatenate(positions), root)
        az.append(a)
        po.append(p)
        ra.append(r)
    elapsed = time.time() - t0
    assert np.median(az) > 250.0
    assert np.median(po) > 30.0
    assert np.median(ra) > 2.5
    assert elapsed <= 120.0
    _ok(8, f"100 rigs: median spans az {np.median(az):.0f} deg, "
           f"polar {np.median(po):.0f} deg, radial {np.median(ra):.1f}, "
           f"{elapsed:.1f}s")


def test_criterion_09_determinism(tmp_path):
    outs = []
    for name in ("one.t4d", "two.t4d"):
        out = tmp_path / name
        cmd = [sys.executable, "-m", "tracks4d.cli", "generate", str(out),
               "--seed", "17", "--cameras", "2", "--frames", "4",
               "--width", "24", "--height", "24", "--dynamic", "1",
               "--no-figure"]
        res = subprocess.run(cmd, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0]) > 1000
    _ok(9, f"two seeded runs produced byte-identical {len(outs[0])}-byte "
           "archives")
