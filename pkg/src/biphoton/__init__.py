"""Simulation of position-momentum-entangled two-photon fields from type-I
SPDC: phase-matching engineering, propagation, discrete entropic
entanglement witness, and synthetic camera coincidence measurement."""

from .dispersion import (
    BBO,
    PhaseMatchContext,
    PumpAnisotropy,
    SellmeierModel,
    TransverseMomentum,
    collinear_angle,
    delta_kz,
    load_sellmeier,
    longitudinal_wavevectors,
    make_context,
    pump_coefficients,
    refractive_index,
)
from .phasematch import (
    CrystalSetup,
    PumpSpec,
    momentum_amplitude,
    phi_double,
    phi_single,
    pump_envelope,
    sinc,
)
from .fields import (
    BiphotonAmplitude4,
    Distribution,
    MomentumGrid4,
    Pipeline,
    averaged_joint_x,
    build_amplitude,
    conditional_position,
    momentum_pdf,
    position_pdf,
    propagate,
    singles,
    to_position,
)

__version__ = "0.1.0"
