import os

# single-threaded BLAS: runtime figures and bit-for-bit reruns assume it
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import time  # noqa: E402

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from grassdescent import diagnostics, operators, problems, solvers  # noqa: E402

CRITERIA = [f"A{i}" for i in range(1, 13)]
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    marks = getattr(report, "_criteria", None)
    if not marks:
        return
    if report.when == "call" or report.failed or report.skipped:
        for cid in marks:
            prev = _outcomes.get(cid, "pass")
            if report.failed:
                _outcomes[cid] = "FAIL"
            elif report.skipped and prev != "FAIL":
                _outcomes[cid] = "skip"
            else:
                _outcomes.setdefault(cid, "pass")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report._criteria = [m.args[0] for m in item.iter_markers("acceptance")]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for cid in CRITERIA:
        status = _outcomes.get(cid)
        if status is not None:
            terminalreporter.write_line(f"{cid}: {status}")


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def harmonic():
    """The n=400 harmonic-oscillator operator on [-10, 10] and its dense oracle (N=4)."""
    grid = operators.build_grid(400, -10.0, 10.0)
    A = operators.build_schrodinger_1d(grid, operators.harmonic)
    t0 = time.perf_counter()
    ref = diagnostics.dense_eigensolve(A, 4)
    return A, ref, time.perf_counter() - t0


def run_fixture_a1(A, ref, variant, algorithm="alg1", seed=0):
    """Solve on the harmonic grid from a seeded start at distance ~0.2 from the oracle."""
    p = problems.simplified(A, 4)
    B = operators.build_preconditioner(variant, A, shift=1.0, alpha=1.0)
    phi0 = solvers.initial_frame(p, B, "perturbed_oracle", seed=seed, scale=0.2,
                                 ref_frame=ref.frame)
    cfg = solvers.SolverConfig(algorithm=algorithm, max_iters=500, tol=1e-10, seed=seed)
    t0 = time.perf_counter()
    phi, rec = solvers.solve(p, B, phi0, cfg, ref)
    return p, B, phi0, phi, rec, time.perf_counter() - t0


@pytest.fixture(scope="session")
def a1_runs(harmonic):
    """Algorithms 1-3 on the A1 fixture with the kinetic-stencil preconditioner."""
    A, ref, _ = harmonic
    return {alg: run_fixture_a1(A, ref, "shifted", alg) for alg in ("alg1", "alg2", "alg3")}


@pytest.fixture(scope="session")
def inverse_a_runs(harmonic):
    """Algorithms 1-3 on the A1 grid and start with the inverse-operator preconditioner."""
    A, ref, _ = harmonic
    return {alg: run_fixture_a1(A, ref, "inverse_a", alg) for alg in ("alg1", "alg2", "alg3")}


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
