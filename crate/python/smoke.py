"""Smoke test for the pyporobiot extension.

Build first with python/build_ext.sh, then run: python3 python/smoke.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyporobiot as pb


def main():
    prob = pb.Problem.manufactured("linear", n=8, tau=0.25)
    n_u, n_q, n_p = prob.dofs
    assert (n_u, n_q, n_p) == (2 * 81, 3 * 64 + 16, 128), prob.dofs
    assert prob.steps == 4

    state, trace = prob.first_step("splitting", rule="undrained")
    assert trace.converged and trace.iterations < 50, trace
    assert len(state.p) == n_p and len(state.q) == n_q and len(state.u) == n_u
    assert abs(state.time - 0.25) < 1e-12

    run = prob.march("monolithic", rule="fixed", l1=1.0, l2=1.0)
    assert len(run) == 4 and all(t.converged for _, t in run)
    err = prob.errors(run[-1][0])
    assert all(math.isfinite(v) and v < 0.1 for v in err.values()), err

    nl = pb.Problem.manufactured("t1c1", n=8, tau=0.25)
    c = nl.constants()
    assert c["l_b"] > 0 and c["l_h"] > 0, c
    grid = pb.logspace(-1, 1, 3)
    rows = nl.sweep("monolithic", grid, grid)
    assert len(rows) == 9
    assert any(status == "converged" for *_, status in rows)

    try:
        pb.Problem.manufactured("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown case accepted")

    mandel = pb.Problem.mandel("linear", dt=1.0, steps=3, nx=10, ny=4)
    run = mandel.march("monolithic", rule="scaled")
    series = mandel.mandel_series([s for s, _ in run])
    assert len(series) == 4 and series[0][1] > 0

    print("pyporobiot", pb.__version__, "smoke OK:", trace, err)


if __name__ == "__main__":
    main()
