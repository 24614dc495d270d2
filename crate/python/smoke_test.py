"""Smoke test for the Python bindings.

Build and install first:

    pip install --no-build-isolation -e crates/python
"""

import math

import weinstein_lab_py as wl


def main():
    local = wl.Scene("local_nc", n=2)
    assert local.real_dim == 4

    # Hessian at the origin of the local model: 2(1 -+ 1/eps), each twice
    eps = 0.1
    value, grad, hess = local.jet([0.0] * 4, eps)
    assert abs(value + math.log(eps**2)) < 1e-12
    assert max(abs(g) for g in grad) == 0.0
    trace = sum(hess[i][i] for i in range(4))
    assert abs(trace - 8.0) < 1e-9, trace

    product = wl.Scene("cpn_x_cpn", n=2)
    crit = wl.find_critical_points(product, 0.05)
    assert sorted(c.index for c in crit) == [0, 2, 4], crit
    assert all(c.grad_norm < 1e-8 for c in crit)

    mesh = wl.build_thimble(local, 0.04, angular=8)
    assert not mesh["failed_lines"]
    for row in mesh["points"]:
        for p in row:
            z0 = complex(p["coords"][0], p["coords"][1])
            z1 = complex(p["coords"][2], p["coords"][3])
            assert abs(z1 - z0.conjugate()) < 1e-6

    rep = wl.alignment(wl.Scene("cpn_o2h", n=2), 0.04, samples=20)
    assert rep["max_horizontal"] < 1e-8 and rep["max_radial"] < 1e-8

    glued = wl.glue(samples=200)
    assert glued["dlambda_status"] == "pass", glued["dlambda_residual"]

    passed, rows = wl.run_command("crit", '{"scene": "cpn_x_cpn", "n": 2}')
    assert passed, [r for r in rows if not r["pass"]]

    try:
        wl.Scene("torus")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown scene accepted")

    print(f"smoke test passed ({len(crit)} critical points, {len(rows)} check rows)")


if __name__ == "__main__":
    main()
