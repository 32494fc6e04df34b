import numpy as np
import pytest

from cascadelab.circuit import CircuitSpec, Mode, StateVector
from cascadelab.gates import GateParams, pump_terms, rotor_terms
from cascadelab.integrator import IntegratorConfig


@pytest.fixture
def xy_modes():
    return Mode("x", 1), Mode("y", 2)


@pytest.fixture
def xyz_modes():
    return Mode("x", 1), Mode("y", 2), Mode("z", 3)


@pytest.fixture
def pump_spec(xy_modes):
    x, y = xy_modes
    return CircuitSpec((x, y), tuple(pump_terms(x, y, GateParams(1.0))))


@pytest.fixture
def rotor_spec(xyz_modes):
    x, y, z = xyz_modes
    return CircuitSpec((x, y, z), tuple(rotor_terms(x, y, z, GateParams(1.0))))


@pytest.fixture
def tight_cfg():
    return IntegratorConfig(rtol=1e-10, atol=1e-14)


def state(*values, t=0.0):
    return StateVector(t, np.array(values, dtype=float))
