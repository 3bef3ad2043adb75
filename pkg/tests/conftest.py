import pytest
from hypothesis import HealthCheck, settings

from rwsbi import heat as H
from rwsbi import kernels as K

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def ssrw():
    return K.builtin_kernel("ssrw")


@pytest.fixture(scope="session")
def lazy2():
    return K.builtin_kernel("lazy2")


@pytest.fixture(scope="session")
def params_unit(ssrw):
    return H.HeatParams(gamma=1.0, alpha=1.0, kernel=ssrw)


@pytest.fixture(scope="session")
def sol_1e3(params_unit):
    return H.solve_rho(params_unit, 1000.0, tol=1e-10,
                       snapshot_times=[1.0, 10.0, 100.0, 1000.0])
