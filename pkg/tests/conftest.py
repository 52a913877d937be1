import numpy as np
import pytest

from covbridge import ModelSpec, Output, TimeGrid, ou_example, solve_pipeline


def random_instance(rng, n_max=4):
    """Stable A, controllable (A, B), full-row-rank C, SPD covariances."""
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, n + 1))
    m = int(rng.integers(1, n + 1))
    while True:
        G = rng.normal(size=(n, n))
        A = G - (np.max(np.linalg.eigvals(G).real) + 0.5) * np.eye(n)
        B = rng.normal(size=(n, m))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if np.linalg.svd(ctrb, compute_uv=False)[-1] > 1e-2:
            break
    W = rng.normal(size=(n, n))
    Sigma0 = W @ W.T / n + 0.5 * np.eye(n)
    C = rng.normal(size=(p, n))
    Wy = rng.normal(size=(p, p))
    SigmaY = Wy @ Wy.T / p + 0.2 * np.eye(p)
    return ModelSpec(A=A, B=B, C=C, T=1.0, Sigma0=Sigma0, target=Output(SigmaY))


def random_instances(count=20, seed=20240601):
    rng = np.random.default_rng(seed)
    return [random_instance(rng) for _ in range(count)]


def scalar_spec(target=1.0, full_state=False):
    from covbridge import FullState
    tgt = FullState(np.array([[target]])) if full_state else Output(np.array([[target]]))
    return ModelSpec(A=[[0.0]], B=[[1.0]], C=[[1.0]], T=1.0, Sigma0=[[1.0]], target=tgt)


def random_spd(rng, n, cond=None):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    if cond is None:
        w = rng.uniform(0.2, 3.0, size=n)
    else:
        w = np.geomspace(1.0, cond, n)
    return (Q * w) @ Q.T


@pytest.fixture(scope="session")
def ou_pipeline():
    return solve_pipeline(ou_example(), TimeGrid(1.0, 1000))


@pytest.fixture(scope="session")
def scalar_pipeline():
    return solve_pipeline(scalar_spec(), TimeGrid(1.0, 1000))


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE = {}


def record(number, title, ok, detail):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
