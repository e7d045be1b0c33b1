"""Smoke test for the altproj Python extension.

Build and install first, e.g.

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/altproj-*.whl
"""

import math

import altproj


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    u, s, v = altproj.svd([[3.0, 0.0], [0.0, -2.0]])
    assert s == [3.0, 2.0], s

    vals, _ = altproj.sym_eig([[2.0, 1.0], [1.0, 2.0]])
    assert close(vals[0], 3.0, 1e-12) and close(vals[1], 1.0, 1e-12), vals

    box = altproj.Projector.box([[0.0], [0.0]], [[1.0], [1.0]])
    assert box.project([[2.0], [-1.0]]) == [[1.0], [0.0]]
    assert box.contains([[0.5], [0.5]])

    # lines at 45 degrees: distance contracts by cos^2 per iteration
    lx = altproj.Projector.line(0.0, 0.0)
    ly = altproj.Projector.line(math.pi / 4, 0.0)
    t = altproj.run_alternating_projections(lx, ly, [[1.0], [1.0]], 200, 1e-12)
    assert t["stop_reason"] == "tolerance", t["stop_reason"]
    recs = t["records"]
    assert recs[0]["dx"] is None
    assert close(recs[5]["f"] / recs[4]["f"], 0.25, 1e-9)
    assert all(r["residual"] == 2 * r["dy"] for r in recs)

    assert close(altproj.welch_bound(3, 6), math.sqrt(0.2), 1e-15)
    assert altproj.mutual_coherence([[1.0, 0.0], [0.0, 1.0]]) == 0.0

    frame = altproj.design_prescribed_norm_frame(3, 5, seed=1)
    assert frame["gap"] <= 1e-6, frame["gap"]
    assert frame["tightness_residual"] <= 1e-6

    etf = altproj.design_etf(3, 6, seed=1)
    assert etf["coherence"] <= altproj.welch_bound(3, 6) + 5e-3, etf["coherence"]

    est = altproj.estimate_kl_exponent([(k, 0.9**k) for k in range(1, 201)])
    assert est["rate_class"] == "linear" and close(est["rho_hat"], 0.9, 1e-6), est

    try:
        altproj.welch_bound(4, 3)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
