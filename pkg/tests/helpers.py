import numpy as np

from shrinkcount import CountDataset


def random_dataset(rng, I=None, N=None, n=None, family="binomial"):
    """Small random dataset; sizes drawn within the ranges used by the real data."""
    I = I or int(rng.integers(1, 11))
    N = N if N is not None else rng.integers(1, 70, size=I)
    n = n or int(rng.integers(1, 54))
    N = np.broadcast_to(N, (I,))
    if family == "binomial":
        p = rng.uniform(0, 1, size=I)
        counts = [rng.binomial(N[i], p[i], size=n) for i in range(I)]
    elif family == "zib":
        pi, gam = rng.uniform(0.05, 0.9, size=I), rng.uniform(0.0, 0.6, size=I)
        counts = [np.where(rng.random(n) < gam[i], 0, rng.binomial(N[i], pi[i], size=n)) for i in range(I)]
    else:
        a, b = rng.uniform(0.5, 5, size=I), rng.uniform(0.5, 20, size=I)
        counts = [rng.binomial(N[i], rng.beta(a[i], b[i], size=n)) for i in range(I)]
    return CountDataset.from_arrays(counts, N)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(tag: str, ok: bool, detail: str) -> bool:
    line = f"{tag:<6} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
