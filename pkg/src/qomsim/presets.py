"""Metasurfaces and pumps of the three demonstration samples (QOM-A/B/C).

Q-factors of the ED-BIC (330) and MD-BIC (1000) modes are the measured ones;
polarization axes put the ED mode along 0 deg and the MD mode along 90 deg.
"""

from .optics import Metasurface, Resonance
from .spdc import PumpConfig

ED_Q = 330.0
MD_Q = 1000.0


def qom_a():
    """ED-BIC at 1446 nm and MD-BIC at 1512 nm; pumped at 723 nm."""
    return Metasurface(
        "QOM-A",
        [Resonance("ED-BIC", 1446.0, ED_Q, 0.0), Resonance("MD-BIC", 1512.0, MD_Q, 90.0)],
    )


def qom_b():
    return Metasurface("QOM-B", [Resonance("ED-BIC", 1391.0, ED_Q, 0.0)])


def qom_c():
    return Metasurface(
        "QOM-C",
        [Resonance("ED-BIC", 1359.0, ED_Q, 0.0), Resonance("MD-BIC", 1429.0, MD_Q, 90.0)],
    )


def pump_a(power_mW=9.6):
    return PumpConfig(723.0, power_mW, pol_deg=0.0)


def pump_b(power_mW=9.6):
    return PumpConfig(718.0, power_mW, pol_deg=0.0)


def pump_c(power_mW=9.6):
    # 40 deg polarization couples to both the ED and the MD mode
    return PumpConfig(725.0, power_mW, pol_deg=40.0)
