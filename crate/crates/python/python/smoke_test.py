"""Smoke test for the photonstat_py extension module.

Build and install with `maturin develop --release` (or `pip install .`) from
crates/python, then run `python python/smoke_test.py`.
"""

import math
import sys
import tempfile
from pathlib import Path

import photonstat_py as ps


def check(label, condition, detail=""):
    print(f"[{'PASS' if condition else 'FAIL'}] {label} {detail}".rstrip())
    return condition


def main():
    ok = True
    ref = ps.G2Coefficients.reference()
    g0 = ps.g2_convolved(ref, 0.0, 0.354)
    ok &= check("convolved g2(0)", abs(g0 - 0.31) <= 0.005, f"{g0:.4f}")
    ok &= check("ideal g2(0) is zero", abs(ps.g2_ideal(ref, 0.0)) < 1e-12)
    ok &= check("corrected lifetime", f"{ps.corrected_lifetime(0.83, 0.39, 1.17):.2f}" == "1.11")
    ok &= check("visibility", abs(ps.visibility(33e3, 7e3) - 0.65) < 1e-12)

    rates = ps.TransitionRates.from_coefficients(ref, 0.3)
    back = rates.coefficients()
    ok &= check(
        "coefficient round trip",
        all(math.isclose(x, y, rel_tol=1e-9) for x, y in [(back.tau1, 0.83), (back.tau2, 42.2), (back.a, 0.16)]),
        repr(back),
    )
    ok &= check("populations sum to one", abs(sum(rates.steady_state()) - 1.0) < 1e-12)

    signal = 0.5 * rates.mean_count_rate(0.5)
    a, b = ps.simulate(rates, 0.005, 7, eta=0.5, jitter_w=0.354, background_rate=signal / 6.0)
    ok &= check("simulated channels", len(a) > 1000 and len(b) > 1000, f"{len(a)} / {len(b)} events")

    raw = ps.cross_correlate(a, b, bin_width=0.1, tau_max=150.0)
    corrected = raw.normalize().background_correct(ps.snr_to_rho(6.0))
    fit = ps.fit_g2(corrected, drf_width=0.354)
    ok &= check("g2 fit converged", fit.converged, repr(fit))
    ok &= check("tau1 within 15%", abs(fit["tau1"] / 0.83 - 1.0) < 0.15, f"{fit['tau1']:.3f} ns")

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "a.pstm"
        a.save(path)
        again = ps.TimestampStream.load(path)
        ok &= check("timestamp file round trip", again.timestamps_ps == a.timestamps_ps)
        hpath = Path(tmp) / "h.csv"
        corrected.save(hpath)
        ok &= check("histogram file round trip", ps.Histogram.load(hpath).values == corrected.values)

    x = [0.125 * i for i in range(1, 41)]
    y = [77.8e3 * p / (p + 1.17) for p in x]
    sat = ps.fit_saturation(x, y)
    ok &= check("saturation fit", abs(sat["p_sat"] - 1.17) < 1e-6, repr(sat))

    wl = [760.0 + 0.01 * i for i in range(2501)]
    lines = [(770.0, 1.36, 1.0), (773.6, 2.70, 0.6)]
    intensity = [0.05 + sum(h / (1 + ((w - c) / (f / 2)) ** 2) for c, f, h in lines) for w in wl]
    centers = sorted(p[0] for p in ps.fit_spectrum(wl, intensity, npeaks=2).peaks())
    ok &= check("spectrum centers", abs(centers[0] - 770.0) < 0.01 and abs(centers[1] - 773.6) < 0.01, str(centers))

    try:
        ps.G2Coefficients(-1.0, 42.2, 0.16)
        ok &= check("invalid input raises", False)
    except ValueError:
        ok &= check("invalid input raises", True)

    [(cid, name, passed, detail)] = ps.run_selftest(2)
    ok &= check(f"selftest criterion {cid} ({name})", passed, detail)

    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
