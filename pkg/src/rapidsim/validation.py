"""Self-checks run by ``rapidsim validate``.

Each check returns ``(ok, detail)``.  The quick variants use smaller sample
counts so the suite finishes in a few seconds.
"""
from __future__ import annotations

import numpy as np

from .channel import codebook, project_virtual
from .evaluation import ExperimentConfig, link_snr_db, run_experiment
from .fusion import fuse_network, radial_posterior, select_beams, share_rays
from .geometry import NetworkDeployment, build_intercept_table, ray_direction, solve_intercept
from .measurement import assemble_cs, draw_schedule, es_schedule, es_slot_count, observe
from .scenes import on_grid_scene
from .sparse_recovery import recover


def check_snr_anchor(quick=True):
    snr = link_snr_db(np.sqrt(2) * 50, 4.0, 1e-5)
    return abs(snr + 23.98) <= 0.05, f"{snr:.3f} dB"


def check_es_slots(quick=True):
    t = es_slot_count(16, 32, 8)
    return t == 64, f"T_ES = {t}"


def check_codebooks(quick=True):
    err = max(np.abs(codebook(n).conj().T @ codebook(n) - np.eye(n)).max() for n in (8, 16, 32))
    return err <= 1e-10, f"max |C^H C - I| = {err:.1e}"


def check_intercepts(quick=True):
    """Closed-form intercepts lie on both rays."""
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50 if quick else 1000):
        dep = NetworkDeployment.random(rng, 2)
        nb, np_ = rng.integers(-31, 32, size=2)
        delta = dep.displacement(1, 0)
        sol = solve_intercept(nb, np_, delta, *dep.bs_orientations, 32)
        if sol is None:
            continue
        pb = dep.bs_positions[0] + sol[0] * ray_direction(nb, dep.bs_orientations[0], 32)
        pp = dep.bs_positions[1] + sol[1] * ray_direction(np_, dep.bs_orientations[1], 32)
        worst = max(worst, float(np.linalg.norm(pb - pp)))
    return worst <= 1e-6, f"max mismatch {worst:.1e} m"


def check_cs_consistency(quick=True):
    rng = np.random.default_rng(2)
    W_c, F_c = codebook(32), codebook(16)
    worst = 0.0
    for t in range(10 if quick else 100):
        H = rng.standard_normal((32, 16)) + 1j * rng.standard_normal((32, 16))
        sched = draw_schedule(t, 48, 16, 32, 4, 8, 1)
        y = observe(H, sched, 0, W_c, F_c, 1.0, 0.0, rng)
        rec = assemble_cs(sched, 0, y, 1.0, 0.0)
        V = project_virtual(H, W_c, F_c)
        err = np.linalg.norm(rec.y - rec.model(V)) / np.linalg.norm(rec.y)
        worst = max(worst, err)
    return worst <= 1e-9, f"max relative error {worst:.1e}"


def check_posterior(quick=True):
    a = np.linspace(0, 1e-2, 100)
    r = np.linspace(1, 200, 100)
    A, R = np.meshgrid(a, r)
    p = radial_posterior(A, R, 4.0, 1e-5)
    s = R ** -4.0 / 1e-5
    direct = 1.0 / (1.0 + (s + 1) * np.exp(-(A ** 2 / 1e-5) / (1 + 1 / s)))
    ok = np.all((p > 0) & (p < 1))
    finite = np.isfinite(direct) & (direct > 0)
    rel = np.max(np.abs(p[finite] - direct[finite]) / direct[finite])
    return bool(ok and rel <= 1e-12), f"max relative deviation {rel:.1e}"


def check_fusion_scenes(quick=True):
    """Noise-free exhaustive sweep, OMP and fusion recover the true pair."""
    rng = np.random.default_rng(3)
    W_c, F_c = codebook(32), codebook(16)
    sched = es_schedule(16, 32, 8, 3)
    hits = total = 0
    for _ in range(5 if quick else 50):
        scene = on_grid_scene(rng, 3, 32, 16)
        table = build_intercept_table(scene.deployment, 32)
        est = []
        for b, ch in enumerate(scene.channels):
            rec = assemble_cs(sched, b, observe(ch.H, sched, b, W_c, F_c, 1.0, 0.0, rng),
                              1.0, 1e-5)
            est.append(recover(rec).V)
        var = 1e-5 / rec.A_g ** 2
        for b in range(3):
            shared = {p: share_rays(est[p], table, p, b, None) for p in range(3) if p != b}
            fused = fuse_network(b, est[b], shared, table, F_c, 4.0, var, rule="max")
            hits += select_beams(fused, est[b])[0] == scene.true_beams[b]
            total += 1
    return hits == total, f"{hits}/{total} BSs select the true pair"


def check_determinism(quick=True):
    cfg = ExperimentConfig(trials=2, P_dBm=[10.0], seed=7)
    a = run_experiment(cfg).to_csv()
    b = run_experiment(cfg).to_csv()
    return a == b, "identical CSV" if a == b else "CSV differs"


CHECKS = [
    ("snr anchor", check_snr_anchor),
    ("exhaustive-search slot count", check_es_slots),
    ("codebook unitarity", check_codebooks),
    ("intercepts on both rays", check_intercepts),
    ("cs consistency", check_cs_consistency),
    ("posterior range and log form", check_posterior),
    ("noise-free fusion on constructed scenes", check_fusion_scenes),
    ("determinism", check_determinism),
]


def run_checks(quick: bool = True):
    for name, fn in CHECKS:
        try:
            ok, detail = fn(quick)
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
