import warnings

from tccva import CirParams, JumpParams, MarketCurve
from tccva.curves import FellerWarning

# reference parameter sets; jump pairs are (rate, mean size)
SET_A = CirParams(0.02, 0.161, 0.08, 0.03)
SET_B = CirParams(0.072, 0.05, 0.045, 0.04)
JCIR_A = JumpParams.from_mean(0.07, 0.08)
JCIR_B = JumpParams.from_mean(0.07, 0.05)
CLOCK_A = JumpParams.from_mean(0.6, 0.512)
CLOCK_B = JumpParams.from_mean(0.4, 0.49)
MARKET = MarketCurve.flat(0.05, 3.0)


def degenerate_cir(kappa=0.5, eta=0.1):
    """x0 = beta = 0: intensity identically zero (violates Feller on purpose)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FellerWarning)
        return CirParams(kappa, 0.0, eta, 0.0)


# one summary line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
