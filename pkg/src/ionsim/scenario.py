"""JSON scenarios: loading, validation and model assembly.

Frequencies in a scenario are given as ``*_over_2pi_mhz`` (or ``_khz``)
values, times in seconds, heating in phonons/ms. Everything built here is in
rad/s.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import operators as ops
from .cooling import (MG24_LINEWIDTH, MG24_WAVELENGTH, CoolingLaser, HeatingSpec,
                      apply_anomalous_heating, coherence_ratio, coolant_lamb_dicke,
                      mode_cooling_rates, shifted_detuning)
from .crystal import (AMU, MG_MASSES, IonChain, IonSpecies, Role, compute_modes, lamb_dicke,
                      solve_equilibrium, wavevector_for_lamb_dicke)
from .errors import ConfigError
from .fullmodel import FockCutoff, RamanDrive

TWO_PI_MHZ = 2 * np.pi * 1e6
TWO_PI_KHZ = 2 * np.pi * 1e3


def _schema():
    text = resources.files("ionsim").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def preset_names():
    root = resources.files("ionsim").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read(source):
    """Text of a config given as a path or a preset name."""
    path = Path(source)
    if path.is_file():
        return path.read_text(), str(path)
    name = str(source)
    name = name[:-5] if name.endswith(".json") else name
    if name in preset_names():
        return resources.files("ionsim").joinpath("presets", name + ".json").read_text(), name
    raise ConfigError(f"no config file or preset named {source!r} "
                      f"(presets: {', '.join(preset_names())})")


def parse_config(text, origin="<config>"):
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{origin}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    validate_config(cfg, origin)
    return cfg


def validate_config(cfg, origin="<config>"):
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{origin}: {'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                 for e in errors]
        raise ConfigError("\n".join(lines))
    drive = cfg.get("drive", {})
    if "omega_sigma_over_2pi_mhz" in drive and "omega_sigma_eta_over_w" in drive:
        raise ConfigError(f"{origin}: drive: give omega_sigma_over_2pi_mhz or "
                          "omega_sigma_eta_over_w, not both")


def load_config(source):
    text, origin = _read(source)
    return parse_config(text, origin)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def set_path(cfg, path, value):
    """Copy of ``cfg`` with the dotted ``path`` set to ``value``."""
    out = copy.deepcopy(cfg)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"sweep path {path!r} runs through a non-object")
    node[keys[-1]] = value
    return out


def _species(entry):
    if isinstance(entry, (int, float)):
        amu = int(entry)
        if amu not in MG_MASSES:
            raise ConfigError(f"no tabulated Mg isotope {amu}; give mass_amu and role")
        role = Role.TAU if amu == 24 else Role.SIGMA
        return IonSpecies.from_amu(MG_MASSES[amu], f"{amu}Mg+", role)
    return IonSpecies.from_amu(entry["mass_amu"], entry.get("label", ""), entry["role"])


SPIN_STATES = {
    "up": ("u",), "down": ("d",),
    "ud": ("u", "d"), "du": ("d", "u"), "uu": ("u", "u"), "dd": ("d", "d"),
}


def spin_ket(label, n_spins):
    if label in SPIN_STATES:
        k = ops.ket(*SPIN_STATES[label])
    elif label in ops.bell_states():
        k = ops.bell_states()[label]
    elif label == "plus":
        plus = (ops.UP + ops.DOWN) / np.sqrt(2)
        k = plus
        for _ in range(n_spins - 1):
            k = np.kron(k, plus)
    else:
        raise ConfigError(f"unknown initial state {label!r}")
    if len(k) != 2**n_spins:
        raise ConfigError(f"initial state {label!r} does not fit {n_spins} qubit ions")
    return k


@dataclass
class Scenario:
    """A validated config with the derived physical objects built lazily."""

    config: dict

    @classmethod
    def load(cls, source):
        return cls(load_config(source))

    def section(self, name):
        return self.config.get(name, {})

    @property
    def name(self):
        return self.config.get("name", "scenario")

    @property
    def model_kind(self):
        return self.config.get("model", "full")

    @cached_property
    def chain(self):
        c = self.section("chain")
        ions = [_species(e) for e in c.get("species", [25, 24, 25])]
        ref = c.get("reference_mass_amu")
        return IonChain(ions, c.get("omega_z_over_2pi_mhz", 4.1) * TWO_PI_MHZ,
                        None if ref is None else ref * AMU)

    @cached_property
    def equilibrium(self):
        return solve_equilibrium(self.chain)

    @cached_property
    def modes(self):
        return compute_modes(self.chain, self.equilibrium)

    @property
    def gamma_tau(self):
        c = self.section("cooling")
        return c.get("gamma_tau_over_2pi_mhz", MG24_LINEWIDTH / TWO_PI_MHZ) * TWO_PI_MHZ

    @cached_property
    def laser(self):
        c = self.section("cooling")
        if "eta_tau" in c:
            eta = np.asarray(c["eta_tau"], dtype=float)
            if eta.shape != (self.modes.n_modes,):
                raise ConfigError(f"cooling.eta_tau needs {self.modes.n_modes} entries")
        else:
            tau = self.chain.tau_indices
            mass = self.chain.masses[tau[0]] if tau else self.chain.masses[0]
            eta = coolant_lamb_dicke(self.modes, c.get("wavelength_nm", MG24_WAVELENGTH * 1e9) * 1e-9,
                                     mass, c.get("projection", 1.0))
        g = self.gamma_tau
        return CoolingLaser(c.get("omega_tau_over_gamma", 0.15) * g,
                            c.get("delta_tau_over_gamma", -0.5) * g, g, eta,
                            self.chain.tau_indices)

    @cached_property
    def bare_rates(self):
        """Laser-cooling rates without anomalous heating."""
        return mode_cooling_rates(self.laser, self.modes)

    @cached_property
    def heating(self):
        return HeatingSpec.from_phonons_per_ms(self.section("heating").get("phonons_per_ms", 0.0))

    @cached_property
    def rates(self):
        return apply_anomalous_heating(self.bare_rates, self.heating)

    @property
    def target_mode(self):
        """Zero-based index of the mode the drive is tuned close to (default: highest)."""
        n = self.section("drive").get("target_mode", self.modes.n_modes)
        if not 1 <= n <= self.modes.n_modes:
            raise ConfigError(f"drive.target_mode must be in 1..{self.modes.n_modes}")
        return n - 1

    @cached_property
    def detunings(self):
        """delta_n; from an explicit list, or from one detuning plus the mode spacings."""
        d = self.section("drive")
        w = self.modes.frequencies
        if "delta_over_2pi_mhz" in d:
            delta = np.asarray(d["delta_over_2pi_mhz"], dtype=float) * TWO_PI_MHZ
            if delta.shape != w.shape:
                raise ConfigError(f"drive.delta_over_2pi_mhz needs {len(w)} entries")
            return delta
        # one laser frequency: detunings differ by the mode spacings
        k = self.target_mode
        return d.get("delta_target_over_2pi_mhz", -0.3) * TWO_PI_MHZ + w - w[k]

    @cached_property
    def eta_sigma(self):
        d = self.section("drive")
        if "eta_sigma" in d:
            return np.asarray(d["eta_sigma"], dtype=float)
        # effective Raman wavevector fixed by the lowest-mode parameter of the first qubit ion
        sigma = self.chain.sigma_indices
        if not sigma:
            raise ConfigError("chain has no qubit ions")
        m = self.chain.masses[sigma[0]]
        w = self.modes.frequencies
        k = wavevector_for_lamb_dicke(d.get("eta1_sigma", 0.16), m, w[0])
        return lamb_dicke(k, 1.0, m, w)

    @property
    def omega_sigma(self):
        d = self.section("drive")
        if "omega_sigma_over_2pi_mhz" in d:
            return d["omega_sigma_over_2pi_mhz"] * TWO_PI_MHZ
        k = self.target_mode
        return d.get("omega_sigma_eta_over_w", 10.0) * self.bare_rates.W[k] / self.eta_sigma[k]

    @cached_property
    def drive(self):
        d = self.section("drive")
        n_sigma = len(self.chain.sigma_indices)
        if "phases" in d:
            phases = np.asarray(d["phases"], dtype=float)
        else:
            # outer qubit ions see light phases differing by p*pi
            phases = np.zeros(n_sigma)
            if n_sigma:
                phases[-1] = np.pi * (d.get("parity", 0) % 2)
        return RamanDrive(self.omega_sigma, phases, self.eta_sigma, self.detunings)

    @cached_property
    def delta_tilde(self):
        return shifted_detuning(self.rates, self.detunings)

    def ratios(self, variant="flipflop"):
        return coherence_ratio(self.rates, self.delta_tilde, variant)

    @cached_property
    def cutoff(self):
        f = self.section("fock")
        retained = f.get("retained_modes")
        if f.get("all_modes", False):
            retained = list(range(1, self.modes.n_modes + 1))
        return FockCutoff(f.get("n_max", 16),
                          None if retained is None else tuple(m - 1 for m in retained),
                          f.get("leak_threshold", 1e-6))

    @property
    def initial_label(self):
        return self.config.get("initial_state", "ud")

    def initial_ket(self):
        return spin_ket(self.initial_label, len(self.chain.sigma_indices))

    @property
    def target_state(self):
        label = self.config.get("target")
        if label is None:
            return None
        if label in ops.bell_states():
            return ops.bell_states()[label]
        return spin_ket(label, len(self.chain.sigma_indices))

    def output_grid(self):
        s = self.section("solver")
        t_final = s.get("t_final_s", 1e-3)
        return np.linspace(0.0, t_final, int(s.get("n_points", 201)))

    @property
    def window(self):
        w = self.section("outputs").get("optimize_window_s")
        return None if w is None else tuple(w)

    def noise_params(self):
        """(Gamma_d, tau_c, Omega_d) in SI angular units, or None."""
        n = self.config.get("noise")
        if n is None:
            return None
        gamma_d = n["gamma_d_over_2pi_khz"] * TWO_PI_KHZ
        tau_c = n["tau_c_s"] if "tau_c_s" in n else n.get("tau_c_gamma_d", 1e-2) / gamma_d
        return gamma_d, tau_c, n.get("omega_d_over_2pi_mhz", 0.0) * TWO_PI_MHZ
