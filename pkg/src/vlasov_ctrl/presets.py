"""Experiment presets and builders from config to solver objects.

Values marked paper-default reproduce the source experiments: the Landau
setup (p_max = 4*pi, v_max = 10, k = 0.5, alpha = 1, ions in thermal and
spatial equilibrium), the two-stream beams (sigma_TS = 0.5, v_TS = 3,
static ions), and the confinement run (bell-shaped symmetric initial data,
B = 0 start). Mesh sizes, particle counts and horizons are desk-scale
choices the experiments do not pin down.
"""

from __future__ import annotations

import numpy as np

from .config import (ExperimentConfig, FitSection, ForwardSection,
                     GridConfig, InitConfig, IonConfig, NcgSection,
                     ParticleConfig, PenaltySection, SpeciesTrackingConfig,
                     TimeConfig, TrackingConfig, WeightConfig)
from .control import PenaltyConfig
from .domain import PhaseGrid, TimeGrid, electron_params, ion_params
from .errors import ConfigInvalid
from .optimizer import NcgConfig
from .problem import Problem
from .sampling import (BUMP_NORM_1D, Bump1D, Gaussian1D, GaussianSpec,
                       ProductSpec, TabulatedSpec, TwoBeams1D, Uniform1D,
                       UniformBox)
from .tracking import SpeciesTracking, TrackingWeights, gaussian_weight

TWO_PI = 2.0 * np.pi


def landau_config() -> ExperimentConfig:
    return ExperimentConfig(
        preset="landau", mode="forward",
        grid=GridConfig(p_max=4.0 * np.pi, v_max=10.0, n_x=64, n_v=64),
        time=TimeConfig(t_final=10.0, n_t=400),
        particles=ParticleConfig(n_forward=200_000, n_terminal=100_000,
                                 species_mass=4.0 * np.pi),
        init_electrons=InitConfig(kind="landau", params={"alpha": 1.0, "k": 0.5}),
        init_ions=InitConfig(kind="maxwellian", params={"var_v": 1.0}),
        fit=FitSection(window=[0.0, 10.0]),
    )


def two_stream_config() -> ExperimentConfig:
    return ExperimentConfig(
        preset="two_stream", mode="forward",
        grid=GridConfig(p_max=10.0 * np.pi, v_max=12.0, n_x=64, n_v=32),
        time=TimeConfig(t_final=40.0, n_t=800),
        particles=ParticleConfig(n_forward=100_000, n_terminal=100_000,
                                 species_mass=10.0 * np.pi),
        init_electrons=InitConfig(kind="two_stream",
                                  params={"v_beam": 3.0, "sigma_beam": 0.5,
                                          "sigma_v2": 0.05}),
        init_ions=InitConfig(kind="maxwellian", params={"var_v": 1.0}),
        forward=ForwardSection(static_ions=True, escape_threshold=0.01),
        fit=FitSection(window=[0.0, 30.0]),
    )


def confinement_config() -> ExperimentConfig:
    track = SpeciesTrackingConfig(
        theta=WeightConfig(amplitude=5.0, var=[0.5625, 4.0, 4.0],
                           center=[3.0, 0.0, 0.0]),
        phi=WeightConfig(amplitude=5.0, var=[0.5625, 4.0, 4.0],
                         center=[3.0, 0.0, 0.0]),
    )
    return ExperimentConfig(
        preset="confinement", mode="optimize",
        grid=GridConfig(p_max=6.0, v_max=6.0, n_x=32, n_v=32),
        time=TimeConfig(t_final=3.0, n_t=75),
        particles=ParticleConfig(n_forward=20_000, n_terminal=50_000,
                                 species_mass=6.0),
        ion=IonConfig(mu_x=0.023337417088286416, mu_v=0.05),
        init_electrons=InitConfig(kind="bump",
                                  params={"center_x": 3.0, "radius_x": 0.75,
                                          "radius_v": 2.0}),
        init_ions=InitConfig(kind="bump",
                             params={"center_x": 3.0, "radius_x": 0.75,
                                     "radius_v": 2.0}),
        tracking=TrackingConfig(electrons=track, ions=track),
        penalty=PenaltySection(alpha=3e-4, kappa_t=5e-2, kappa_x=5e-2),
        ncg=NcgSection(tol=1e-8, l_max=12, sigma_init=64.0),
        fit=FitSection(window=[0.0, 3.0]),
    )


def smoke_config() -> ExperimentConfig:
    """Small lattice for the gradient oracle checks (criterion scale).

    Free parameters (domain, horizon, widths, mass) are tuned so the
    first-order biases of the particle gradient stay well under the 10%
    directional-check tolerance at this resolution: short horizon (little
    backward shear in lambda), Gaussian data wide relative to dv = 0.5,
    targets off-center in x, v1 and v2 so no symmetry cancels the
    B-sensitivity, and a small plasma mass so the clamped reaction tally
    stays near zero.
    """
    track = SpeciesTrackingConfig(
        theta=WeightConfig(amplitude=5.0, var=[1.0, 2.0, 2.0],
                           center=[2.5, 0.5, 0.4]),
        phi=WeightConfig(amplitude=1.0, var=[1.0, 2.0, 2.0],
                         center=[2.5, 0.5, 0.4]),
    )
    gauss = InitConfig(kind="gaussian",
                       params={"mean_x": 2.0, "mean_v1": 0.0, "mean_v2": 0.0,
                               "var_x": 0.25, "var_v1": 0.8, "var_v2": 0.8})
    return ExperimentConfig(
        preset="smoke", mode="optimize", seed=11,
        grid=GridConfig(p_max=4.0, v_max=4.0, n_x=16, n_v=16),
        time=TimeConfig(t_final=0.7, n_t=20),
        particles=ParticleConfig(n_forward=20_000, n_terminal=400_000,
                                 species_mass=0.25),
        init_electrons=gauss,
        init_ions=gauss,
        tracking=TrackingConfig(electrons=track, ions=track),
        penalty=PenaltySection(alpha=1e-2, kappa_t=1e-2, kappa_x=1e-2),
        ncg=NcgSection(tol=1e-8, l_max=5),
        fit=FitSection(window=[0.0, 0.7]),
    )


def custom_config() -> ExperimentConfig:
    return ExperimentConfig(preset="custom")


def preset_config(name: str) -> ExperimentConfig:
    builders = {"landau": landau_config, "two_stream": two_stream_config,
                "confinement": confinement_config, "smoke": smoke_config,
                "custom": custom_config}
    if name not in builders:
        raise ConfigInvalid("preset", f"unknown preset {name!r}")
    return builders[name]()


# ---------------------------------------------------------------------------
# config -> solver objects


def landau_density(p_max: float, alpha: float, k: float) -> TabulatedSpec:
    """Perturbed Maxwellian (1 + alpha cos(kx))/p_max * N(v1) * N(v2).

    Needs k*p_max to be a multiple of 2*pi so the cosine integrates to zero
    and the expression is a normalized density. The envelope over the
    uniform-x Maxwellian helper is exactly 1 + alpha.
    """
    cycles = k * p_max / TWO_PI
    if abs(cycles - round(cycles)) > 1e-9:
        raise ConfigInvalid("init.params.k",
                            "k*p_max must be a multiple of 2*pi")

    def g(x, v1, v2):
        vsq = np.asarray(v1) ** 2 + np.asarray(v2) ** 2
        return ((1.0 + alpha * np.cos(k * np.asarray(x))) / p_max
                * np.exp(-0.5 * vsq) / (2.0 * np.pi))

    helper = ProductSpec(Uniform1D(0.0, p_max), Gaussian1D(0.0, 1.0),
                         Gaussian1D(0.0, 1.0))
    return TabulatedSpec(g, helper, 1.0 + alpha)


def bump_density(p_max: float, center_x: float, radius_x: float,
                 radius_v: float) -> TabulatedSpec:
    """Bell-shaped mollifier bump, compactly supported and symmetric."""
    bx = Bump1D(center_x, radius_x)
    b1 = Bump1D(0.0, radius_v)
    b2 = Bump1D(0.0, radius_v)

    def g(x, v1, v2):
        return bx.pdf(x) * b1.pdf(v1) * b2.pdf(v2)

    helper = UniformBox((center_x - radius_x, center_x + radius_x),
                        (-radius_v, radius_v), (-radius_v, radius_v))
    envelope = (2.0 * np.exp(-1.0) / BUMP_NORM_1D) ** 3
    return TabulatedSpec(g, helper, envelope)


def build_density(init: InitConfig, p_max: float):
    p = init.params
    if init.kind == "landau":
        return landau_density(p_max, p.get("alpha", 1.0), p.get("k", 0.5))
    if init.kind == "maxwellian":
        var = p.get("var_v", 1.0)
        return ProductSpec(Uniform1D(0.0, p_max), Gaussian1D(0.0, var),
                           Gaussian1D(0.0, var))
    if init.kind == "two_stream":
        return ProductSpec(
            Uniform1D(0.0, p_max),
            TwoBeams1D(p.get("v_beam", 3.0), p.get("sigma_beam", 0.5) ** 2),
            Gaussian1D(0.0, p.get("sigma_v2", 0.05) ** 2))
    if init.kind == "bump":
        return bump_density(p_max, p.get("center_x", 0.5 * p_max),
                            p.get("radius_x", 0.125 * p_max),
                            p.get("radius_v", 1.5))
    if init.kind == "uniform_box":
        return UniformBox((p.get("x_lo", 0.0), p.get("x_hi", p_max)),
                          (p.get("v1_lo", -1.0), p.get("v1_hi", 1.0)),
                          (p.get("v2_lo", -1.0), p.get("v2_hi", 1.0)))
    if init.kind == "gaussian":
        return GaussianSpec([p.get("mean_x", 0.5 * p_max),
                             p.get("mean_v1", 0.0), p.get("mean_v2", 0.0)],
                            [p.get("var_x", 1.0), p.get("var_v1", 1.0),
                             p.get("var_v2", 1.0)])
    raise ConfigInvalid("init.kind", f"unknown kind {init.kind!r}")


def build_tracking(cfg: TrackingConfig) -> TrackingWeights:
    def species(sp: SpeciesTrackingConfig) -> SpeciesTracking:
        return SpeciesTracking(
            theta=gaussian_weight(sp.theta.amplitude, sp.theta.var, sp.theta.center),
            phi=gaussian_weight(sp.phi.amplitude, sp.phi.var, sp.phi.center))

    return TrackingWeights(electron=species(cfg.electrons), ion=species(cfg.ions))


def build_problem(cfg: ExperimentConfig) -> Problem:
    grid = PhaseGrid(p_max=cfg.grid.p_max, v_max=cfg.grid.v_max,
                     n_x=cfg.grid.n_x, n_v=cfg.grid.n_v)
    time = TimeGrid(t_final=cfg.time.t_final, n_t=cfg.time.n_t)
    return Problem(
        grid=grid, time=time,
        electron_species=electron_params(),
        ion_species=ion_params(cfg.ion.mu_x, cfg.ion.mu_v),
        electrons_init=build_density(cfg.init_electrons, grid.p_max),
        ions_init=build_density(cfg.init_ions, grid.p_max),
        tracking=build_tracking(cfg.tracking),
        penalty=PenaltyConfig(alpha=cfg.penalty.alpha, kappa_t=cfg.penalty.kappa_t,
                              kappa_x=cfg.penalty.kappa_x),
        n_particles=cfg.particles.n_forward,
        n_terminal=cfg.particles.n_terminal,
        species_mass=cfg.particles.species_mass,
        static_ions=cfg.forward.static_ions,
        escape_threshold=cfg.forward.escape_threshold,
        threads=cfg.threads,
    )


def build_ncg_config(cfg: ExperimentConfig) -> NcgConfig:
    n = cfg.ncg
    return NcgConfig(tol=n.tol, l_max=n.l_max, armijo_c1=n.armijo_c1,
                     armijo_shrink=n.armijo_shrink, sigma_init=n.sigma_init,
                     restart_every=n.restart_every,
                     max_backtracks=n.max_backtracks,
                     sigma_growth=n.sigma_growth)
