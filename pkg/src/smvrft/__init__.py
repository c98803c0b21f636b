"""smvrft: set-membership VRFT controller synthesis.

From two noisy input/output records of an unknown stable discrete-time SISO
plant the package identifies a polytopic parameter-uncertainty set
(set-membership identification with a scenario-estimated inflation factor),
synthesizes a reference-tracking controller (static feedforward or integral
action) by minimizing a virtual-reference criterion subject to robust
stability certificates at the set vertices, and evaluates the resulting
closed loop.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    cli,
    conic,
    evaluation,
    lti,
    polytope,
    presets,
    report,
    scenario,
    signals,
    sm,
    synth_ei,
    synth_ff,
)
