#!/usr/bin/env python3
"""Smoke test for the gccsolver_py extension module.

Builds the cdylib with cargo if needed, copies it next to this script under
the importable name, then exercises pricing, optimal stopping and the
equilibrium solver against closed-form values.
"""

import math
import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def ensure_module() -> None:
    target = HERE / "gccsolver_py.so"
    built = ROOT / "target" / "release" / "libgccsolver_py.so"
    if not built.exists():
        built = ROOT / "target" / "debug" / "libgccsolver_py.so"
    if not built.exists() or not target.exists() or built.stat().st_mtime > target.stat().st_mtime:
        if not built.exists():
            print("building gccsolver-py ...")
            subprocess.run(
                ["cargo", "build", "--release", "-p", "gccsolver-py"],
                cwd=ROOT,
                check=True,
            )
            built = ROOT / "target" / "release" / "libgccsolver_py.so"
        shutil.copy2(built, target)
    sys.path.insert(0, str(HERE))


def approx(a: float, b: float, tol: float = 1e-10) -> None:
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main() -> None:
    ensure_module()
    import gccsolver_py as g

    print(f"gccsolver_py {g.__version__}")

    # constant claims price to themselves
    t = g.Tree.binomial(steps=3)
    assert t.validate() == []
    approx(g.indifference_value(t, [2.5] * t.n_terminals(), alpha=1.7), 2.5, 1e-12)

    # unhedgeable binary claim: exp(-a*pi) = p*exp(-a*n) + 1 - p
    model = """
    {
      "schema": "gccsolver-model-v1",
      "horizon_years": 1.0,
      "asset_dim": 0,
      "nodes": [
        {"id": 0, "time": 0, "parent": null},
        {"id": 1, "time": 1, "parent": 0, "prob": 0.3},
        {"id": 2, "time": 1, "parent": 0, "prob": 0.7}
      ]
    }
    """
    one_step = g.Tree.from_json(model)
    for n in (1.0, 5.0, 20.0):
        pi = g.indifference_value(one_step, [n, 0.0], alpha=1.0)
        approx(math.exp(-pi), 0.3 * math.exp(-n) + 0.7, 1e-12)

    # complete-market pricing is preference-free
    tc = g.Tree.binomial(steps=5, vol=0.4, traded=True)
    walk = tc.walk()
    put = [max(-walk[v], 0.0) for v in tc.terminal_nodes()]
    p1 = g.indifference_value(tc, put, alpha=0.3)
    p2 = g.indifference_value(tc, put, alpha=4.0)
    approx(p1, p2, 1e-10)

    # optimal stopping of a constant payoff stops at the root
    s = g.snell(t, [1.5] * t.n_nodes(), alpha=1.0)
    approx(s["root"], 1.5, 1e-12)
    assert s["stops"] == [0]

    # the two stop-first equilibria of the penalized walk game
    t3 = g.Tree.binomial(steps=3)
    w = t3.walk()
    x = list(w)
    y = [v + 0.5 for v in w]
    buyer_first = g.nash(t3, x, y, alpha_buyer=1.0, alpha_seller=2.0, first_mover="buyer")
    assert buyer_first["converged"] and buyer_first["verified"]
    assert buyer_first["buyer_stops"] == [0]
    approx(buyer_first["j_buyer"], 0.0, 1e-12)

    seller_first = g.nash(t3, x, y, alpha_buyer=1.0, alpha_seller=2.0, first_mover="seller")
    assert seller_first["seller_stops"] == [0]
    approx(seller_first["j_buyer"], 0.5, 1e-12)

    check = g.verify_equilibrium(
        t3, x, y,
        buyer_stops=seller_first["buyer_stops"],
        seller_stops=seller_first["seller_stops"],
        alpha_buyer=1.0, alpha_seller=2.0,
    )
    assert check["verified"]

    # an incomplete market prices a nonreplicable claim below its
    # risk-neutral expectation
    ti = g.Tree.trinomial(steps=2)
    u = ti.untraded()
    claim = [u[v] for v in ti.terminal_nodes()]
    pi = g.indifference_value(ti, claim, alpha=2.0)
    mean = sum(claim) / len(claim)  # symmetric weights are the pricing measure
    assert pi < mean + 1e-12

    print("smoke test OK")


if __name__ == "__main__":
    main()
