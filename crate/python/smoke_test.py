"""Smoke test for the pyoptomech extension.

Build and install first:  pip install --no-build-isolation -e crates/py
Then run:                 python python/smoke_test.py
"""

import math

import pyoptomech as om


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []
    p = om.ModalParams.paper_device()
    env = om.Environment(300.0)

    f_min = om.thermal_force_limit(p, env, 1.0)
    results.append(check("thermal force limit", abs(f_min / 38e-18 - 1) < 0.1, f"{f_min * 1e18:.1f} aN"))

    # Brownian motion of the scaled twin
    s = om.ModalParams.scaled_test_device()
    traj = om.simulate_langevin(s, 300.0 / s.gamma, seed=3, decimation=10)
    e1 = (math.cos(s.theta1), math.sin(s.theta1))
    q1 = [x * e1[0] + z * e1[1] for x, z in zip(traj["x"], traj["z"])]
    mean = sum(q1) / len(q1)
    var = sum((v - mean) ** 2 for v in q1) / len(q1)
    target = s.equipartition_variance(0, env)
    results.append(check("equipartition (short run)", abs(var / target - 1) < 0.25, f"ratio {var / target:.3f}"))

    spec = om.welch_psd(q1, traj["dt"], 4096)
    results.append(check("welch spectrum", len(spec["freqs"]) == 2049 and min(spec["psd"]) >= 0))

    f0 = p.omega1 / (2 * math.pi)
    freqs = [f0 - 2000 + 2.0 * k for k in range(2000)]
    a = om.analytic_projected_psd(p, p.theta1 + math.pi / 4, freqs, env)
    fit = om.fit_doublet(a["freqs"], a["psd"], p.mass, env)
    results.append(
        check("doublet fit", abs(fit["omega_minus"] / p.omega1 - 1) < 1e-6, f"{fit['omega_minus'] / 2 / math.pi:.1f} Hz")
    )

    field = om.ForceField.green_532()
    fx, fz = field.force(0.0, 0.0, 96e-6)
    results.append(check("on-axis force", abs(fx) < 1e-30 and abs(fz / 70e-15 - 1) < 1e-9, f"{fz * 1e15:.1f} fN"))

    # a purely rotational gradient never changes the trace of K
    g = [[0.0, 1e-3], [-1e-3, 0.0]]
    modes = om.modes(p, g, 1e-4, 1e-4)
    results.append(check("mode analysis", modes["report"]["kind"] in ("stable", "flutter", "divergence")))
    work = om.work_per_cycle(g, 1e-9, 1e-9, 1)
    results.append(check("work per cycle", abs(work - math.pi * 1e-18 * 2e-3) < 1e-30, f"{work:.3e} J"))

    d = om.ModalParams.instability_device()
    grid = om.RectGrid.uniform(-1e-6, 1e-6, 21, -2e-6, 2e-6, 21)
    smap = om.stability_map(d, field, grid, 300e-6)
    results.append(check("stability map", smap["area"] > 0, f"area {smap['area'] * 1e12:.3f} um^2"))
    pt = om.threshold_power(d, field, 0.25e-6, -0.1e-6, 5e-3)
    results.append(check("threshold", pt is not None and 40e-6 < pt < 400e-6, f"{(pt or 0) * 1e6:.0f} uW"))

    small = om.RectGrid.uniform(-0.8e-6, 0.8e-6, 5, -1.5e-6, 1.5e-6, 5)
    fmap = om.map_force_field(p, field, small, noise_scale=0.0)
    results.append(
        check("noiseless force map", fmap["stats"]["max_relative_error"] < 1e-6, f"{len(fmap['nodes'])} nodes")
    )

    try:
        om.ModalParams.from_hz(-1.0, 1e3, 1e3, 100.0, 0.0)
        results.append(check("invalid input raises", False))
    except ValueError:
        results.append(check("invalid input raises", True))

    failed = results.count(False)
    print(f"{len(results) - failed}/{len(results)} passed")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
