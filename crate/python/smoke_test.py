#!/usr/bin/env python3
"""Smoke test for the allpay_py extension module.

Builds the cdylib if needed, loads it from the cargo target directory, and
exercises each exported surface against known values. Exits nonzero on the
first mismatch.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    lib = REPO / "target" / "debug" / "liballpay_py.so"
    if not lib.exists():
        subprocess.run(
            ["cargo", "build", "-p", "allpay-py"], cwd=REPO, check=True
        )
    staging = Path(tempfile.mkdtemp(prefix="allpay_py."))
    shutil.copy2(lib, staging / "allpay_py.so")
    sys.path.insert(0, str(staging))
    import allpay_py

    return allpay_py


def approx(got, want, tol=1e-9, label=""):
    if not math.isfinite(got) or abs(got - want) > tol:
        raise AssertionError(f"{label}: got {got!r}, want {want!r} (tol {tol})")


def main():
    ap = load_module()

    # Store-level equilibrium with an atom: n=2, theta=0.8, b=0.6.
    scene = ap.Scene(2, 0.8, 0.6)
    region = ap.classify_region(scene)
    assert region["tag"] == "R2", region
    approx(region["pooling_threshold"], 0.4, 1e-15, "pooling threshold")
    approx(region["slack_threshold"], 0.8, 1e-15, "slack threshold")
    mu = ap.solve_atom_mu(scene)
    approx(mu, 0.5, 1e-12, "budget atom mass")
    approx(ap.atom_payoff(scene, mu), 0.0, 1e-10, "payoff at atom root")

    g_h, g_l = ap.equilibrium_profile(scene)
    assert g_l.mass_at(0.6) > 0.49, g_l.atoms()
    for u in (0.05, 0.37, 0.81, 0.99):
        p = g_h.inverse(u)
        approx(g_h.eval(p), u, 1e-9, f"inverse roundtrip at {u}")
    lo, hi = g_h.support()
    approx(g_h.eval(lo - 1e-12), 0.0, 1e-15, "cdf left of support")
    approx(g_h.eval(hi), 1.0, 1e-12, "cdf at top of support")
    gap_h, gap_l = ap.best_response_gap(g_h, g_l, scene, 20_000)
    assert gap_h < 1e-3 and gap_l < 1e-3, (gap_h, gap_l)

    u_h, u_l, pi = ap.allpay_payoffs(scene)
    approx(u_h + u_l * 0.0, max(0.8 - 0.6, 0.0), 1e-15, "high payoff")
    s_h, s_l, s_pi = ap.standard_payoffs(scene)
    assert s_h > u_h and s_l > u_l and pi > s_pi, "format ranking"
    approx(pi + 2 * (0.2 * u_h + 0.8 * u_l), 1.0, 1e-12, "surplus identity")

    mean = ap.expected_bid(g_l)
    draws = 20_000
    sampled = sum(ap.sample_bid(g_l, (k + 0.5) / draws) for k in range(draws))
    approx(sampled / draws, mean, 1e-3, "sampled mean vs analytic")

    # Poisson layer.
    approx(ap.z(0, 1.0), math.exp(-1.0), 1e-15, "empty-store weight")
    approx(
        ap.expect_over_demand(1.0, lambda n: 1.0, 1),
        1.0 - math.exp(-1.0),
        1e-12,
        "arrival probability series",
    )

    # Market layer: symmetric all-pay equilibrium at lambda=1.
    eq = ap.symmetric_equilibrium(1.0, 0.2, 0.5)
    approx(eq["reserve_star"], 0.0, 0.0, "equilibrium reserve")
    approx(eq["omega"], math.exp(-1.0), 1e-12, "market utility")
    approx(eq["profit"], 1.0 - 2.0 * math.exp(-1.0), 1e-12, "equilibrium profit")
    assert abs(ap.standard_deviation_gain(1.0, 0.2, 0.5)) <= 1e-9

    dev = ap.allpay_deviation(1.0, 0.2, 0.5, 0.3)
    assert dev["profit_gain"] > 0.0 and not dev["subsidy_required"], dev

    # Demand solver roundtrip: utilities generated by a posting are recovered.
    x_h, x_l = 0.65, 0.35
    uu_h, uu_l = ap.utilities("standard", 0.2, x_h, x_l, 0.5)
    rx_h, rx_l = ap.solve_demand("standard", 0.2, uu_h, uu_l, 0.5)
    approx(rx_h, x_h, 1e-9, "recovered high demand")
    approx(rx_l, x_l, 1e-9, "recovered low demand")
    approx(
        ap.profit_identity_residual("standard", 0.2, x_h, x_l, 0.5),
        0.0,
        1e-12,
        "profit identity",
    )

    # Monte Carlo layer, small runs.
    store = ap.simulate_store(3, 0.5, 0.5, "allpay", reps=50_000, seed=7)
    approx(store["pi"]["mean"], 1.0, 5 * store["pi"]["std_error"] + 1e-9, "dissipated profit")
    market = ap.simulate_market(
        1.0, 0.2, 0.5, "allpay", 0.0, 0.65, 0.35, reps=50_000, seed=7
    )
    want = 1.0 - 2.0 * math.exp(-1.0)
    assert abs(market["profit"]["mean"] - want) < 5 * market["profit"]["std_error"]

    # Domain errors surface as ValueError.
    for bad in (lambda: ap.Scene(1, 0.5, 0.5), lambda: ap.Scene(2, 0.5, 1.5)):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError for bad scene")

    print("smoke test passed: all python binding checks succeeded")


if __name__ == "__main__":
    main()
