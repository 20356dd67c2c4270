import pytest

from cpolab.params import FieldDrive, MagneticEnvironment, Polarization, SystemParams


@pytest.fixture
def ref():
    return SystemParams.reference()


@pytest.fixture
def lin_drive(ref):
    return FieldDrive.from_rabi(ref, Polarization.LIN_PERP_LIN)


@pytest.fixture
def circ_drive(ref):
    return FieldDrive.from_rabi(ref, Polarization.CIRC_ORTHOGONAL)


@pytest.fixture
def uniform_field():
    return MagneticEnvironment.from_units(b0_G=0.9)


@pytest.fixture
def quiet_console(monkeypatch):
    from cpolab.console import console
    monkeypatch.setattr(console, "quiet", True)
    return console
