import numpy as np
import pytest


def random_unitary(N, rng):
    """Haar-like unitary from the QR decomposition of a complex Gaussian matrix."""
    A = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    Q, R = np.linalg.qr(A)
    return Q * (np.diagonal(R) / np.abs(np.diagonal(R)))


def random_hermitian(N, rng):
    A = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    return (A + A.conj().T) / 2


def chain(N, J=1.0, mu=None):
    mu = np.zeros(N) if mu is None else np.asarray(mu, dtype=float)
    return np.diag(mu) - J * (np.eye(N, k=1) + np.eye(N, k=-1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call":
                lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
