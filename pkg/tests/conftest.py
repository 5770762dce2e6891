import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from squidcoupler.circuit import CircuitParams  # noqa: E402


@pytest.fixture(scope="session")
def table_one() -> CircuitParams:
    return CircuitParams.table_one()


@pytest.fixture(scope="session")
def phi_off(table_one) -> float:
    from squidcoupler.spectrum import find_phi_off

    return find_phi_off(table_one)


@pytest.fixture(scope="session")
def cz22(table_one, phi_off):
    """Calibrated 22 ns CZ waveform for the default circuit."""
    from squidcoupler.pulse import PulseConfig, calibrate_beta

    return calibrate_beta(table_one, 22.0, PulseConfig(phi_off=phi_off))


@pytest.fixture(scope="session")
def cz22_result(table_one, cz22):
    from squidcoupler.dynamics import simulate_gate

    return simulate_gate(table_one, cz22.waveform, beta=cz22.beta)


@pytest.fixture(scope="session")
def t1_fit(table_one, cz22):
    """Lindblad infidelities over a two-decade T1 grid (ns), with the linear fit."""
    from squidcoupler.dynamics import t1_sweep_fit

    return t1_sweep_fit(table_one, cz22.waveform, [1e5, 3e5, 1e6, 3e6])


@pytest.fixture(scope="session")
def lindblad_1ms(table_one, cz22):
    """The calibrated gate with T1 = 1 ms on both transmons."""
    from squidcoupler.dynamics import propagate_lindblad

    return propagate_lindblad(table_one, cz22.waveform, (1e6, 1e6))
