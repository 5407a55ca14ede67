"""Exhaustive layered search on small targets, and the budget refusal.

    python3 scripts/layer_search_demo.py
"""

import numpy as np

from ionforge.circuit import Circuit, circuit_unitary
from ionforge.gatekit import MS, Z
from ionforge.optimizer import OptConfig
from ionforge.targets import BudgetExceeded, combinations_count, layer_search


def main():
    rng = np.random.default_rng(0)
    cfg = OptConfig(n_restarts=3, seed=1)
    for gates in ([MS], [Z(1), MS, Z(2)]):
        c = Circuit(2, gates)
        target = circuit_unitary(c, rng.uniform(-np.pi, np.pi, c.n_params))
        res = layer_search(target, 2, 1, 1e-8, cfg)
        print(f"target {c}: found {' '.join(g.label for g in res.active_gates)} "
              f"after {res.configurations_tried} configurations, cost {res.cost:.1e}")
    for n, l_ms in ((3, 3), (4, 5)):
        print(f"N_combinations(n={n}, L_MS={l_ms}) = {combinations_count(n, l_ms)}")
    try:
        layer_search(np.eye(16), 4, 5, 1e-2)
    except BudgetExceeded as exc:
        print(f"refused: {exc}")


if __name__ == "__main__":
    main()
