//! One function per subcommand; each resolves its parameters, runs the
//! experiment and hands its artifacts to the [`Run`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use bohm_lab::density::{self, evolve_backtrack, nine_mode_state, relaxation_run, NonequilibriumSpec, RelaxSettings};
use bohm_lab::drift::{self, build_drift_field, drift_settings, long_drift, radial_balance, PolarGrid};
use bohm_lab::entropy::{discrete_entropy, is_entropy_conserving, CoarseGrain, DiscreteDistribution, TransitionMatrix};
use bohm_lab::field_models::{
    self, decay_ensemble, detection_probability, measurement_ensemble, model_tolerances, one_particle_cdf, vacuum_cdf,
    DecayParams, DetectionSettings, MeasuredState,
};
use bohm_lab::grid::{Bounds, DensityGrid};
use bohm_lab::guidance::{integrate, IntegratorSettings};
use bohm_lab::oscillator::default_half_width;
use bohm_lab::spectral::{self, spectral_ensemble};
use bohm_lab::stats::{ks_statistic, Histogram};
use bohm_lab::vorticity::{self, census, classify_vorticity, find_nodes, track_nodes, NodeSearch, TrackSettings};
use bohm_lab::{random_state, Configuration, OscillatorState};
use clap::{Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{params, resolve};
use crate::error::CliError;
use crate::output::Run;

params! {
    CensusArgs => CensusConfig {
        /// Energy cutoff of the random states.
        m: usize = 2,
        /// Number of states drawn.
        n: usize = 10_000,
    }
}

params! {
    FindNodesArgs => FindNodesConfig {
        /// Cutoff of the random state used when no state file is given.
        m: usize = 2,
        /// Time of the node search.
        t: f64 = 0.0,
        /// Cells per side of the search grid.
        grid: usize = 256,
        /// Tracking time step.
        dt: f64 = 2.0 * PI / 2000.0,
    }
    optional {
        /// State file (JSON).
        state: PathBuf,
        /// Track nodes from `t` up to this time.
        until: f64,
    }
}

params! {
    DriftFieldArgs => DriftFieldConfig {
        /// Cutoff of the random state used when no state file is given.
        m: usize = 2,
        /// Innermost ring radius.
        eta_min: f64 = 4.0,
        /// Outermost ring radius.
        eta_max: f64 = 20.0,
        /// Rings and angles per ring.
        grid: usize = 100,
    }
    optional {
        /// State file (JSON).
        state: PathBuf,
    }
}

params! {
    LongDriftArgs => LongDriftConfig {
        /// Cutoff of the random state used when no state file is given.
        m: usize = 2,
        /// Number of trajectories.
        points: usize = 200,
        /// Whole periods to integrate.
        periods: usize = 1000,
        /// Lower end of the starting radii.
        eta_lo: f64 = 4.0,
        /// Upper end of the starting radii.
        eta_hi: f64 = 20.0,
        /// Histogram bins over the starting radius range.
        bins: usize = 16,
    }
    optional {
        /// State file (JSON).
        state: PathBuf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fv,
    Backtrack,
}

params! {
    RelaxArgs => RelaxConfig {
        /// Widening of the initial density, `|ψ(x/w, y/w)|²/w²`.
        w: f64 = 2.0,
        /// Whole periods to evolve.
        periods: usize = 1,
        /// Cells per side.
        grid: usize = 256,
        /// Half-width of the square domain.
        half_width: f64 = 8.0,
        /// Finite-volume steps per period.
        steps_per_period: usize = 4000,
        /// Coarse cells per side.
        coarse: usize = 32,
        /// Evolution scheme.
        #[arg(value_enum)]
        method: Method = Method::Fv,
    }
    optional {
        /// State file (JSON); the nine-mode state is used when absent and no cutoff is given.
        state: PathBuf,
        /// Cutoff of a random state drawn from the seed.
        m: usize,
        /// Start from an isotropic normal density with this deviation instead of widening.
        sigma: f64,
    }
}

params! {
    TrajectoriesArgs => TrajectoriesConfig {
        /// Cutoff of the random state used when no state file is given.
        m: usize = 2,
        /// Number of trajectories, started from |ψ|² at T = 0.
        n: usize = 10,
        /// Final time.
        t_end: f64 = 2.0 * PI,
    }
    optional {
        /// State file (JSON).
        state: PathBuf,
    }
}

params! {
    DecayArgs => DecayConfig {
        /// Widening of the initial field distribution.
        w: f64 = 1.0,
        /// Ensemble size.
        n: usize = 10_000,
        /// Final time.
        t_end: f64 = PI,
        /// Field-mode frequency.
        omega: f64 = 1.0,
        /// Coupling.
        g: f64 = 1.0,
        /// Histogram bins.
        bins: usize = 60,
        /// Lower histogram edge.
        lo: f64 = -5.0,
        /// Upper histogram edge.
        hi: f64 = 5.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measured {
    Vacuum,
    OneParticle,
    Superposition,
}

params! {
    EnergyArgs => EnergyConfig {
        /// State of the measured mode.
        #[arg(value_enum)]
        measured: Measured = Measured::Superposition,
        /// Widening of the initial field distribution.
        w: f64 = 1.0,
        /// Ensemble size (per phase when averaging).
        n: usize = 10_000,
        /// Duration of the interaction.
        t_end: f64 = 4.5,
        /// Pointer reading that counts as "one particle".
        threshold: f64 = 9.0,
        /// Histogram bins.
        bins: usize = 60,
        /// Lower histogram edge.
        lo: f64 = -5.0,
        /// Upper histogram edge.
        hi: f64 = 25.0,
    }
    optional {
        /// Relative phase of the superposition; when absent the detection
        /// probability is averaged over ten equally spaced phases.
        theta: f64,
    }
}

params! {
    SpectralArgs => SpectralConfig {
        /// Widening of the initial field distribution.
        w: f64 = 1.0,
        /// Resolution parameter, in [1, 1000].
        #[arg(long = "T")]
        t_obs: f64 = 10.0,
        /// Ensemble size.
        n: usize = 10_000,
        /// Histogram bins over the energy deviation.
        bins: usize = 80,
        /// Lower histogram edge.
        lo: f64 = -8.0,
        /// Upper histogram edge.
        hi: f64 = 12.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    Permutation,
    Map,
    Random,
    File,
}

params! {
    EntropyArgs => EntropyConfig {
        /// Number of states.
        n: usize = 5,
        #[arg(value_enum)]
        kind: MatrixKind = MatrixKind::Permutation,
        /// Random distributions pushed through the matrix.
        trials: usize = 100,
    }
    optional {
        /// JSON array of rows, `T[i][j]` = probability of j → i, columns summing to 1 (with `--kind file`).
        matrix: PathBuf,
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Total vorticity of random states.
    VorticityCensus(CensusArgs),
    /// Nodes of a state at one time, optionally tracked over an interval.
    FindNodes(FindNodesArgs),
    /// One-period drift on a polar grid.
    DriftField(DriftFieldArgs),
    /// Vorticity class and drift type of a state.
    Classify(DriftFieldArgs),
    /// Radial drift of an ensemble over many periods.
    LongDrift(LongDriftArgs),
    /// Coarse-grained relaxation of a nonequilibrium density.
    RelaxDensity(RelaxArgs),
    /// Guidance trajectories from Born-distributed starts.
    Trajectories(TrajectoriesArgs),
    /// Two-mode decay ensemble.
    Decay(DecayArgs),
    /// Pointer readings of an energy measurement.
    EnergyMeasure(EnergyArgs),
    /// Recorded line profile at one resolution.
    SpectralLine(SpectralArgs),
    /// Entropy conservation of a transition matrix.
    EntropyCheck(EntropyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VorticityCensus(_) => "vorticity-census",
            Command::FindNodes(_) => "find-nodes",
            Command::DriftField(_) => "drift-field",
            Command::Classify(_) => "classify",
            Command::LongDrift(_) => "long-drift",
            Command::RelaxDensity(_) => "relax-density",
            Command::Trajectories(_) => "trajectories",
            Command::Decay(_) => "decay",
            Command::EnergyMeasure(_) => "energy-measure",
            Command::SpectralLine(_) => "spectral-line",
            Command::EntropyCheck(_) => "entropy-check",
        }
    }

    pub fn run(&self, file: &Map<String, Value>, run: &mut Run) -> Result<(), CliError> {
        match self {
            Command::VorticityCensus(a) => vorticity_census(resolve(a, file)?, run),
            Command::FindNodes(a) => nodes(resolve(a, file)?, run),
            Command::DriftField(a) => drift_field(resolve(a, file)?, run),
            Command::Classify(a) => classify(resolve(a, file)?, run),
            Command::LongDrift(a) => long_drift_run(resolve(a, file)?, run),
            Command::RelaxDensity(a) => relax(resolve(a, file)?, run),
            Command::Trajectories(a) => trajectories(resolve(a, file)?, run),
            Command::Decay(a) => decay(resolve(a, file)?, run),
            Command::EnergyMeasure(a) => energy(resolve(a, file)?, run),
            Command::SpectralLine(a) => spectral_line(resolve(a, file)?, run),
            Command::EntropyCheck(a) => entropy_check(resolve(a, file)?, run),
        }
    }
}

/// The state file if one is given, otherwise a random state drawn from the seed.
fn load_state(path: &Option<PathBuf>, m: usize, run: &mut Run) -> Result<OscillatorState, CliError> {
    match path {
        Some(p) => Ok(OscillatorState::from_json(&run.read_input(p)?)?),
        None => Ok(random_state(m, run.seed())?),
    }
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

fn histogram_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>, CliError> {
    check(bins > 0 && lo < hi && lo.is_finite() && hi.is_finite(), "histograms need bins ≥ 1 and lo < hi")?;
    Ok(Histogram::uniform_edges(lo, hi, bins))
}

fn histogram_rows(h: &Histogram) -> Vec<(f64, f64, usize, f64)> {
    h.edges
        .windows(2)
        .zip(&h.counts)
        .zip(h.density())
        .map(|((e, c), d)| (e[0], e[1], *c, d))
        .collect()
}

const HISTOGRAM_HEADER: [&str; 4] = ["lo", "hi", "count", "density"];

fn vorticity_census(cfg: CensusConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(json!({ "circle_tol": vorticity::CIRCLE_TOL }));
    let classes = census(cfg.m, cfg.n, run.seed())?;
    let seed = run.seed();
    run.csv(
        "census.csv",
        &["m", "seed", "vorticity_over_2pi", "category"],
        classes.iter().map(|c| (cfg.m, seed, c.winding, c.category.name())),
    )?;
    let mut by_winding: BTreeMap<i64, usize> = BTreeMap::new();
    let mut by_category: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &classes {
        *by_winding.entry(c.winding).or_default() += 1;
        *by_category.entry(c.category.name()).or_default() += 1;
    }
    let n = classes.len().max(1) as f64;
    let fractions = |m: BTreeMap<String, usize>| m.into_iter().map(|(k, v)| (k, v as f64 / n)).collect::<BTreeMap<_, _>>();
    run.json(
        "summary.json",
        &json!({
            "m": cfg.m,
            "n": classes.len(),
            "winding_fractions": fractions(by_winding.into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
            "category_fractions": fractions(by_category.into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
        }),
    )
}

fn nodes(cfg: FindNodesConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    let state = load_state(&cfg.state, cfg.m, run)?;
    let search = NodeSearch {
        grid: cfg.grid,
        ..NodeSearch::enclosing(&state)
    };
    let track = TrackSettings {
        dt: cfg.dt,
        ..TrackSettings::default()
    };
    run.set_tolerances(json!({ "node_search": search, "tracking": track, "circle_tol": vorticity::CIRCLE_TOL }));
    check(cfg.grid >= 2, "search grid needs at least 2 cells per side")?;
    let sets = match cfg.until {
        Some(t1) => track_nodes(&state, cfg.t, t1, &track, &search)?,
        None => vec![find_nodes(&state, cfg.t, &search)?],
    };
    let rows: Vec<_> = sets
        .iter()
        .flat_map(|s| s.nodes.iter().map(|n| (n.t, n.config.qx, n.config.qy, n.vorticity)))
        .collect();
    run.csv("nodes.csv", &["T", "Qx", "Qy", "vorticity"], rows)?;
    let events: Vec<_> = sets
        .iter()
        .flat_map(|s| &s.events)
        .map(|e| {
            let kind = match e.kind {
                vorticity::EventKind::Creation => "creation",
                vorticity::EventKind::Annihilation => "annihilation",
            };
            let [a, b] = e.positions;
            (e.t, kind, a.qx, a.qy, e.vorticities[0], b.qx, b.qy, e.vorticities[1])
        })
        .collect();
    run.csv("events.csv", &["T", "kind", "Qx1", "Qy1", "vorticity1", "Qx2", "Qy2", "vorticity2"], events)?;
    let far = classify_vorticity(&state)?;
    run.json(
        "summary.json",
        &json!({
            "far_field": far,
            "node_total_at_start": sets[0].total_vorticity(),
            "node_total_at_end": sets[sets.len() - 1].total_vorticity(),
            "samples": sets.len(),
        }),
    )
}

fn polar_grid(cfg: &DriftFieldConfig) -> Result<PolarGrid, CliError> {
    let g = PolarGrid {
        eta_min: cfg.eta_min,
        eta_max: cfg.eta_max,
        n_eta: cfg.grid,
        n_phi: cfg.grid,
    };
    g.validate()?;
    Ok(g)
}

fn drift_tolerances() -> Value {
    json!({
        "integrator": drift_settings(),
        "crossing_floor": drift::CROSSING_FLOOR,
        "radial_floor": drift::RADIAL_FLOOR,
        "max_masked_fraction": drift::MAX_MASKED_FRACTION,
    })
}

fn drift_field(cfg: DriftFieldConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(drift_tolerances());
    let grid = polar_grid(&cfg)?;
    let state = load_state(&cfg.state, cfg.m, run)?;
    let field = build_drift_field(&state, &grid, &drift_settings())?;
    let cells = |values: &[f64]| -> Vec<(f64, f64, f64, bool)> {
        (0..grid.n_phi)
            .flat_map(|j| (0..grid.n_eta).map(move |i| (i, j)))
            .map(|(i, j)| {
                let k = j * grid.n_eta + i;
                (grid.eta(i), grid.phi(j), values[k], field.masked[k])
            })
            .collect()
    };
    run.csv("angular.csv", &["eta", "phi", "d_phi", "masked"], cells(&field.d_phi))?;
    run.csv("radial.csv", &["eta", "phi", "d_eta", "masked"], cells(&field.d_eta))?;
    let (inward, outward) = radial_balance(&field);
    run.json(
        "classification.json",
        &json!({
            "classification": field.classification,
            "masked_fraction": field.masked_fraction(),
            "inward_fraction": inward,
            "outward_fraction": outward,
            "fine_tuned": state.is_fine_tuned(),
        }),
    )
}

fn classify(cfg: DriftFieldConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(drift_tolerances());
    let grid = polar_grid(&cfg)?;
    let state = load_state(&cfg.state, cfg.m, run)?;
    let vort = classify_vorticity(&state)?;
    let field = build_drift_field(&state, &grid, &drift_settings())?;
    let ring = field.ring_average();
    run.csv(
        "ring.csv",
        &["phi", "mean_d_phi"],
        (0..grid.n_phi).map(|j| (grid.phi(j), ring[j])),
    )?;
    run.json(
        "classify.json",
        &json!({
            "vorticity": vort,
            "drift": field.classification,
            "fine_tuned": state.is_fine_tuned(),
        }),
    )
}

fn long_drift_run(cfg: LongDriftConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(json!({ "integrator": drift_settings() }));
    let edges = histogram_edges(cfg.eta_lo, cfg.eta_hi, cfg.bins)?;
    let state = load_state(&cfg.state, cfg.m, run)?;
    let ld = long_drift(&state, cfg.points, (cfg.eta_lo, cfg.eta_hi), cfg.periods, run.seed(), &drift_settings())?;
    run.csv(
        "radii.csv",
        &["index", "eta_initial", "eta_final"],
        ld.initial_eta.iter().zip(&ld.final_eta).enumerate().map(|(k, (a, b))| (k, *a, *b)),
    )?;
    let (before, after) = (ld.initial_histogram(&edges), ld.final_histogram(&edges));
    run.csv(
        "histogram.csv",
        &["lo", "hi", "initial", "final"],
        edges.windows(2).zip(before.iter().zip(&after)).map(|(e, (a, b))| (e[0], e[1], *a, *b)),
    )?;
    run.json(
        "summary.json",
        &json!({
            "periods": ld.periods,
            "points": cfg.points,
            "failures": ld.failures(),
            "median_shift": ld.median_shift(),
        }),
    )
}

fn relax(cfg: RelaxConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    let settings = RelaxSettings {
        half_width: cfg.half_width,
        cells: cfg.grid,
        steps_per_period: cfg.steps_per_period,
        coarse: CoarseGrain {
            cells_x: cfg.coarse,
            cells_y: cfg.coarse,
        },
        ..RelaxSettings::default()
    };
    run.set_tolerances(json!({
        "relax": settings,
        "velocity_cap_fraction": density::VELOCITY_CAP_FRACTION,
        "max_masked_fraction": density::MAX_MASKED_FRACTION,
        "backtrack_integrator": IntegratorSettings::default(),
    }));
    check(cfg.half_width > 0.0 && cfg.grid > 0, "relaxation needs a positive domain and grid")?;
    let state = match (&cfg.state, cfg.m) {
        (Some(_), _) => load_state(&cfg.state, 0, run)?,
        (None, Some(m)) => random_state(m, run.seed())?,
        (None, None) => nine_mode_state(run.seed())?,
    };
    let noneq = match cfg.sigma {
        Some(sigma) => NonequilibriumSpec::Gaussian { sigma },
        None => NonequilibriumSpec::Widened { wx: cfg.w, wy: cfg.w },
    };
    noneq.validate()?;
    let (times, h_bar, last, stats) = match cfg.method {
        Method::Fv => {
            // Keep only the final frame.
            let every = cfg.periods.max(1);
            let r = relaxation_run(&state, &noneq, cfg.periods, &RelaxSettings { frame_every: every, ..settings })?;
            let last = r.frames.last().cloned().expect("initial frame kept");
            (r.times, r.h_bar, last, serde_json::to_value(r.stats).expect("stats serialize"))
        }
        Method::Backtrack => backtrack_series(&state, &noneq, cfg.periods, &settings)?,
    };
    run.csv("hbar.csv", &["T", "Hbar"], times.iter().zip(&h_bar).map(|(t, h)| (*t, *h)))?;
    run.binary("frame.bin", &last.values)?;
    run.json(
        "frame.json",
        &json!({ "bounds": last.bounds, "nx": last.nx, "ny": last.ny, "T": last.t, "layout": "row-major float64 little-endian" }),
    )?;
    let rises = h_bar.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    run.json(
        "summary.json",
        &json!({
            "initial_hbar": h_bar[0],
            "final_hbar": h_bar[h_bar.len() - 1],
            "max_rise": rises,
            "stats": stats,
        }),
    )
}

type Series = (Vec<f64>, Vec<f64>, DensityGrid, Value);

/// `H̄` once per period by reconstructing each frame along backward trajectories.
fn backtrack_series(
    state: &OscillatorState,
    noneq: &NonequilibriumSpec,
    periods: usize,
    settings: &RelaxSettings,
) -> Result<Series, CliError> {
    let born0 = |x: f64, y: f64| state.psi(Configuration::new(x, y), 0.0).norm_sqr();
    let rho0: Box<dyn Fn(f64, f64) -> f64 + Sync> = match *noneq {
        NonequilibriumSpec::Widened { wx, wy } => Box::new(move |x, y| born0(x / wx, y / wy) / (wx * wy)),
        NonequilibriumSpec::Gaussian { sigma } => {
            Box::new(move |x, y| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma))
        }
        NonequilibriumSpec::CustomGrid { .. } => {
            return Err(CliError::Config("backtracking needs an analytic initial density".into()))
        }
    };
    let f0 = |x: f64, y: f64| {
        let b = born0(x, y);
        if b > 1e-300 {
            rho0(x, y) / b
        } else {
            0.0
        }
    };
    let bounds = Bounds::square(settings.half_width);
    let n = settings.cells;
    let integ = IntegratorSettings::default();
    let (mut times, mut h_bar, mut masked) = (Vec::new(), Vec::new(), Vec::new());
    let mut last = None;
    for k in 0..=periods {
        let t = 2.0 * PI * k as f64;
        let r = evolve_backtrack(&f0, state, t, bounds, n, n, &integ)?;
        let born = density::born_grid(state, bounds, n, n, t)?;
        times.push(t);
        h_bar.push(bohm_lab::entropy::coarse_grained_h(&r.grid, &born, &settings.coarse)?);
        masked.push(r.masked);
        last = Some(r.grid);
    }
    Ok((times, h_bar, last.expect("at least one frame"), json!({ "masked_cells": masked })))
}

/// Rejection sampling of `|ψ(·, 0)|²` on the state's default domain.
fn born_starts(state: &OscillatorState, n: usize, seed: u64) -> Vec<Configuration> {
    let half = default_half_width(state.m());
    let density = |x: f64, y: f64| state.psi(Configuration::new(x, y), 0.0).norm_sqr();
    let mesh = 200;
    let peak = (0..mesh * mesh)
        .map(|k| {
            let x = -half + 2.0 * half * ((k % mesh) as f64 + 0.5) / mesh as f64;
            let y = -half + 2.0 * half * ((k / mesh) as f64 + 0.5) / mesh as f64;
            density(x, y)
        })
        .fold(0.0, f64::max)
        * 1.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (x, y) = (rng.gen_range(-half..half), rng.gen_range(-half..half));
        if rng.gen::<f64>() * peak < density(x, y) {
            out.push(Configuration::new(x, y));
        }
    }
    out
}

fn trajectories(cfg: TrajectoriesConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    let settings = IntegratorSettings::default();
    run.set_tolerances(json!({ "integrator": settings }));
    check(cfg.t_end.is_finite(), "final time must be finite")?;
    let state = load_state(&cfg.state, cfg.m, run)?;
    let starts = born_starts(&state, cfg.n, run.seed());
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (k, s) in starts.iter().enumerate() {
        match integrate(&state, *s, 0.0, cfg.t_end, &settings) {
            Ok(tr) => rows.extend(tr.samples.iter().map(|(t, c)| (k, *t, c.qx, c.qy))),
            Err(e) => failed.push(json!({ "trajectory": k, "error": e.to_string() })),
        }
    }
    if failed.len() == starts.len() && !starts.is_empty() {
        return Err(CliError::Numerical(bohm_lab::Error::TooManyFailures {
            failed: failed.len(),
            total: starts.len(),
        }));
    }
    run.csv("trajectories.csv", &["trajectory", "T", "Qx", "Qy"], rows)?;
    run.json("summary.json", &json!({ "starts": starts, "failures": failed }))
}

fn model_tolerance_json() -> Value {
    json!({ "integrator": model_tolerances(), "max_failed_fraction": field_models::MAX_FAILED_FRACTION })
}

fn decay(cfg: DecayConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(model_tolerance_json());
    let edges = histogram_edges(cfg.lo, cfg.hi, cfg.bins)?;
    let params = DecayParams {
        omega: cfg.omega,
        g: cfg.g,
    };
    let ens = decay_ensemble(cfg.w, cfg.n, cfg.t_end, run.seed(), &params)?;
    run.csv("joint.csv", &["q1", "q2"], ens.samples.iter().map(|q| (q[0], q[1])))?;
    run.csv("marginal_q1.csv", &HISTOGRAM_HEADER, histogram_rows(&Histogram::new(&ens.q1(), edges.clone())))?;
    run.csv("marginal_q2.csv", &HISTOGRAM_HEADER, histogram_rows(&Histogram::new(&ens.q2(), edges)))?;
    run.json(
        "summary.json",
        &json!({
            "samples": ens.samples.len(),
            "failures": ens.failures,
            "ks_q1_vacuum": ens.ks_q1_vacuum(),
            "ks_q2_one_particle": ens.ks_q2_one_particle(),
            "correlation": ens.correlation(),
        }),
    )
}

fn energy(cfg: EnergyConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(model_tolerance_json());
    let edges = histogram_edges(cfg.lo, cfg.hi, cfg.bins)?;
    let state = match (cfg.measured, cfg.theta) {
        (Measured::Vacuum, _) => MeasuredState::Vacuum,
        (Measured::OneParticle, _) => MeasuredState::OneParticle,
        (Measured::Superposition, Some(theta)) => MeasuredState::Superposition { theta },
        (Measured::Superposition, None) => {
            let settings = DetectionSettings {
                t_end: cfg.t_end,
                threshold: cfg.threshold,
                n: cfg.n,
                ..DetectionSettings::default()
            };
            let det = detection_probability(cfg.w, &settings, run.seed())?;
            run.csv("per_theta.csv", &["theta", "probability"], det.per_theta.clone())?;
            return run.json(
                "summary.json",
                &json!({ "probability": det.mean, "failures": det.failures, "thetas": settings.thetas }),
            );
        }
    };
    let ens = measurement_ensemble(state, cfg.w, cfg.n, cfg.t_end, run.seed())?;
    run.csv("joint.csv", &["Q", "Y"], ens.samples.iter().map(|z| (z[0], z[1])))?;
    run.csv("pointer.csv", &HISTOGRAM_HEADER, histogram_rows(&Histogram::new(&ens.pointer(), edges)))?;
    let q: Vec<f64> = ens.samples.iter().map(|z| z[0]).collect();
    run.json(
        "summary.json",
        &json!({
            "probability": ens.fraction_beyond(cfg.threshold),
            "failures": ens.failures,
            "ks_q_vacuum": ks_statistic(&q, vacuum_cdf),
            "ks_q_one_particle": ks_statistic(&q, one_particle_cdf),
        }),
    )
}

fn spectral_line(cfg: SpectralConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(json!({
        "integrator": model_tolerances(),
        "max_failed_fraction": field_models::MAX_FAILED_FRACTION,
        "peak_bandwidth": spectral::PEAK_BANDWIDTH,
    }));
    let edges = histogram_edges(cfg.lo, cfg.hi, cfg.bins)?;
    check((1.0..=1000.0).contains(&cfg.t_obs), format!("resolution parameter {} outside [1, 1000]", cfg.t_obs))?;
    let ens = spectral_ensemble(cfg.w, &[cfg.t_obs], cfg.n, run.seed())?;
    run.csv("histogram.csv", &HISTOGRAM_HEADER, histogram_rows(&ens.profile(0, edges)))?;
    let s = ens.summary(0);
    run.json(
        "summary.json",
        &json!({
            "mean": s.mean,
            "std": s.std,
            "peaks": s.peaks,
            "failures": ens.failures,
            "separatrix_crossings": ens.separatrix_crossings,
        }),
    )
}

fn entropy_check(cfg: EntropyConfig, run: &mut Run) -> Result<(), CliError> {
    run.set_config(&cfg);
    run.set_tolerances(json!({ "trials": cfg.trials }));
    check(cfg.n > 0 || cfg.kind == MatrixKind::File, "matrix needs at least one state")?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed());
    let t = match cfg.kind {
        MatrixKind::Permutation => TransitionMatrix::random_permutation(cfg.n, &mut rng),
        MatrixKind::Map => TransitionMatrix::random_map(cfg.n, &mut rng),
        MatrixKind::Random => TransitionMatrix::random(cfg.n, &mut rng),
        MatrixKind::File => {
            let path = cfg.matrix.as_ref().ok_or_else(|| CliError::Config("--kind file needs --matrix".into()))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&run.read_input(path)?)
                .map_err(|e| CliError::Config(format!("matrix file: {e}")))?;
            check(rows.iter().all(|r| r.len() == rows.len()), "matrix must be square")?;
            TransitionMatrix::new(rows.len(), rows.concat())?
        }
    };
    let n = t.n();
    let conserving = is_entropy_conserving(&t, cfg.trials, run.seed())?;
    let mut trials = Vec::with_capacity(cfg.trials);
    for k in 0..cfg.trials {
        let p = DiscreteDistribution::random(n, &mut rng);
        let q = t.apply(&p)?;
        trials.push((k, discrete_entropy(&p), discrete_entropy(&q)));
    }
    run.csv("trials.csv", &["trial", "H_before", "H_after"], trials)?;
    run.csv(
        "matrix.csv",
        &["from", "to", "probability"],
        (0..n).flat_map(|j| (0..n).map(move |i| (j, i))).map(|(j, i)| (j, i, t.get(i, j))),
    )?;
    run.json(
        "summary.json",
        &json!({ "n": n, "is_permutation": t.is_permutation(), "entropy_conserving": conserving }),
    )
}
