"""Spin-phonon simulations of sympathetically cooled ion crystals."""
from .cooling import (CoolingLaser, CoolingRates, HeatingSpec, apply_anomalous_heating,
                      coherence_ratio, coolant_lamb_dicke, mode_cooling_rates, shifted_detuning)
from .crystal import (EquilibriumConfig, IonChain, IonSpecies, NormalModes, Role, compute_modes,
                      lamb_dicke, mg_chain, solve_equilibrium)
from .dynamics import (OUNoise, SolverConfig, TimeSeries, evolve, fidelity, optimize_gate_time,
                       ou_sample, propagate_expm, steady_state, trace_distance,
                       trajectory_average)
from .effective import (CollectiveJumps, DrivenIsingModel, EffectiveSpinModel,
                        build_effective_liouvillian, build_ising_liouvillian,
                        collective_jump_operators, dressed_noise_params, sw_flipflop_params,
                        sw_ising_params)
from .errors import (ConfigError, ConvergenceError, IonSimError, NumericalError,
                     SingularConfigurationError, UnphysicalModelError, UnstableConfigurationError)
from .fullmodel import (DensityMatrix, FockCutoff, RamanDrive, SpinPhononLiouvillian,
                        apply_liouvillian, build_dissipator, build_full_model,
                        build_hamiltonian_rf, initial_state, reduce_spins)
from .generator import Lindbladian, kossakowski_channels
from .scenario import Scenario, load_config

__version__ = "0.1.0"
