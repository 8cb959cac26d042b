"""Bundle of everything a reduced-cost evaluation needs besides the control."""

from __future__ import annotations

from dataclasses import dataclass, field

from .control import PenaltyConfig
from .domain import PhaseGrid, SpeciesParams, TimeGrid
from .tracking import TrackingWeights


@dataclass
class Problem:
    """Fixed data of one optimal-control problem instance.

    The reduced cost J(B) and its gradient are evaluated against this
    bundle with frozen random substreams, so J is a deterministic function
    of the control.
    """

    grid: PhaseGrid
    time: TimeGrid
    electron_species: SpeciesParams
    ion_species: SpeciesParams
    electrons_init: object
    ions_init: object
    tracking: TrackingWeights
    penalty: PenaltyConfig
    n_particles: int
    n_terminal: int
    species_mass: float = 1.0
    static_ions: bool = False
    escape_threshold: float = 0.01
    threads: int = 1
    raw_index_gradient: bool = False
    include_terminal_g: bool = False
    extra: dict = field(default_factory=dict)
