"""Open-system quantum annealing toolkit.

Engines: direct adiabatic-master-equation propagation (`ame`), its
quantum-jump trajectory unraveling with parallel ensembles
(`trajectories`), stochastic 1/f telegraph-noise Hamiltonians
(`fluctuators`), and a semiclassical spin-vector Monte Carlo baseline
(`svmc`). Problem construction, schedules, and reverse-annealing
protocols live in `model`; the instantaneous-eigenbasis machinery in
`spectral`; batch runs in `cli`.
"""

from . import ame, fluctuators, liouville, model, spectral, stats, svmc, trajectories
from .ame import FeedbackSpec, gibbs, observables, propagate, trace_distance
from .liouville import build_generator
from .model import (AnnealModel, IsingProblem, PSpinProblem, Protocol, Schedule,
                    assemble_hamiltonian, build_ising, build_pspin, chain_model,
                    ising_model, pspin_model)
from .spectral import BathSpec, build_lindblads, decompose, group_bohr, ohmic_rate
from .trajectories import ensemble, run_trajectory

__version__ = "0.1.0"
