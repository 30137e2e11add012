import numpy as np

from securegsr import harness
from securegsr.graph import Graph


def path_graph(n: int = 3) -> Graph:
    w = np.zeros((n, n))
    for i in range(n - 1):
        w[i, i + 1] = w[i + 1, i] = 1.0
    return Graph(w)


def seeded_instance(seed: int, snr_db: float = 20.0, **overrides) -> harness.Instance:
    cfg = harness.ExperimentConfig(**overrides)
    return harness.make_instance(cfg, snr_db, np.random.default_rng(seed))


# one "criterion N: PASS/FAIL ..." line per acceptance check, echoed by conftest
ACCEPTANCE_LINES: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
