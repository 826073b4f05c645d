//! The two simulation studies: shape approximation of a growth process and
//! bicycle tracking with a glint-corrupted radar.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::baselines::{ukf_config, MixtureSampler, MomentMatched, ParticleFilter, ParticleSet};
use crate::error::{invalid, Result};
use crate::filter::{predict, update, AdaptSession, FilterConfig, FilterState, SplitPolicy, StateSpaceModel};
use crate::mixture::{normal_pdf, GaussianComponent, GaussianMixture};
use crate::quadrature::gauss_legendre;
use crate::statlin::SchemeConfig;

/// Densities below this are clipped before taking logarithms.
const DENSITY_FLOOR: f64 = 1e-300;

/// Gauss–Legendre nodes for the prior integral of the growth-process truth.
const TRUTH_NODES: usize = 2000;

/// Half-width, in prior standard deviations, of the truth integration range.
const TRUTH_HALF_WIDTH: f64 = 8.0;

/// Uniform one-dimensional grid `start, start + step, …, end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            start: -15.0,
            end: 15.0,
            step: 0.005,
        }
    }
}

impl Grid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start < end && step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("invalid grid [{start}, {end}] with step {step}")));
        }
        Ok(Self { start, end, step })
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Density values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    /// Riemann sum `Σ f(y) Δy`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.step
    }

    /// Grid point with the largest density.
    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        self.grid.start + i as f64 * self.grid.step
    }
}

/// Deterministic part of the growth process, `m(ξ) = ξ/2 + 5ξ/(1 + ξ²)`.
pub fn growth_map(xi: f64) -> f64 {
    xi / 2.0 + 5.0 * xi / (1.0 + xi * xi)
}

/// Density of `y = m(ξ) + w` with `ξ ~ N(prior_mean, prior_var)` and
/// `w ~ N(0, noise_var)`; `w` is integrated analytically, `ξ` by Gauss–Legendre.
pub fn true_density(
    grid: &Grid,
    map: impl Fn(f64) -> f64,
    prior_mean: f64,
    prior_var: f64,
    noise_var: f64,
) -> Result<TabulatedDensity> {
    if !(prior_var > 0.0 && noise_var > 0.0) {
        return Err(invalid("variances must be positive"));
    }
    let half = TRUTH_HALF_WIDTH * prior_var.sqrt();
    let rule = gauss_legendre(TRUTH_NODES, prior_mean - half, prior_mean + half)?;
    let nodes: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&xi, &w)| (map(xi), w * normal_pdf(xi, prior_mean, prior_var)))
        .collect();
    let values = grid
        .points()
        .iter()
        .map(|&y| nodes.iter().map(|&(m, w)| w * normal_pdf(y, m, noise_var)).sum())
        .collect();
    Ok(TabulatedDensity { grid: *grid, values })
}

/// Truth of the shape experiment: prior `N(1, 1)`, unit additive noise.
pub fn true_density_growth(grid: &Grid) -> Result<TabulatedDensity> {
    true_density(grid, growth_map, 1.0, 1.0, 1.0)
}

/// Tabulates a one-dimensional mixture on `grid`.
pub fn tabulate(approx: &GaussianMixture, grid: &Grid) -> Result<TabulatedDensity> {
    if approx.dim() != 1 {
        return Err(invalid("only one-dimensional mixtures can be tabulated"));
    }
    let comps: Vec<(f64, f64, f64)> = approx
        .components()
        .iter()
        .map(|c| (c.weight(), c.mean()[0], c.cov()[(0, 0)]))
        .collect();
    let values = grid
        .points()
        .iter()
        .map(|&y| comps.iter().map(|&(w, m, v)| w * normal_pdf(y, m, v)).sum())
        .collect();
    Ok(TabulatedDensity { grid: *grid, values })
}

/// `Σ p ln(p/q) Δy` with both densities clipped below at 1e-300.
pub fn kld_tabulated(truth: &TabulatedDensity, approx: &TabulatedDensity) -> Result<f64> {
    if truth.values.len() != approx.values.len() {
        return Err(invalid("tabulations use different grids"));
    }
    let sum: f64 = truth
        .values
        .iter()
        .zip(&approx.values)
        .map(|(&p, &q)| {
            let p = p.max(DENSITY_FLOOR);
            let q = q.max(DENSITY_FLOOR);
            p * (p / q).ln()
        })
        .sum();
    Ok((sum * truth.grid.step).max(0.0))
}

/// `KL(truth ‖ approx)` on the truth's grid.
pub fn kld_on_grid(truth: &TabulatedDensity, approx: &GaussianMixture) -> Result<f64> {
    if !approx.is_normalized() {
        return Err(invalid("approximation must be normalized"));
    }
    kld_tabulated(truth, &tabulate(approx, &truth.grid)?)
}

/// Splitting rule compared in the shape experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeScheme {
    /// Error-driven selection and direction with the given `γ`.
    Gamma(f64),
    /// Largest weight along the largest eigenvalue.
    MaxEigenvalue,
}

impl ShapeScheme {
    pub fn label(&self) -> String {
        match self {
            ShapeScheme::Gamma(g) => format!("gamma={g}"),
            ShapeScheme::MaxEigenvalue => "max-eigenvalue".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeScenario {
    /// `γ` of the first error-driven scheme; the second always uses `γ = 1`.
    pub gamma: f64,
    pub scheme: SchemeConfig,
    /// Component counts at which the approximation is scored, ascending.
    pub schedule: Vec<usize>,
    pub grid: Grid,
    pub direction_nodes: usize,
}

impl Default for ShapeScenario {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            scheme: SchemeConfig::gaussian_estimator_n4(),
            schedule: vec![1, 2, 4, 8, 16, 32, 64],
            grid: Grid::default(),
            direction_nodes: 5,
        }
    }
}

impl ShapeScenario {
    pub fn schemes(&self) -> [ShapeScheme; 3] {
        [ShapeScheme::Gamma(self.gamma), ShapeScheme::Gamma(1.0), ShapeScheme::MaxEigenvalue]
    }

    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("schedule must be a strictly increasing list of positive counts"));
        }
        Ok(())
    }
}

/// Score of one scheme at one component count.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRow {
    pub scheme: String,
    pub components: usize,
    pub kld_x10: f64,
    /// The pushed-forward approximation of `y`.
    pub approximation: GaussianMixture,
}

#[derive(Debug, Clone)]
pub struct ShapeResult {
    pub truth: TabulatedDensity,
    pub rows: Vec<ShapeRow>,
    /// Per scheme label: fraction of splits whose axis is dominated by `ξ`.
    pub xi_split_fraction: Vec<(String, f64)>,
}

/// Growth process `y = m(ξ) + w` on the stacked input `[ξ, w]`.
pub fn growth_process(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_element(1, growth_map(x[0]) + x[1])
}

/// Recursively splits the prior of `[ξ, w]` and scores the image of `y` at every schedule point.
pub fn run_shape(scn: &ShapeScenario) -> Result<ShapeResult> {
    scn.validate()?;
    let truth = true_density_growth(&scn.grid)?;
    let prior = GaussianMixture::gaussian(DVector::from_row_slice(&[1.0, 0.0]), DMatrix::identity(2, 2))?;
    let cap = *scn.schedule.last().expect("validated");
    let mut rows = Vec::new();
    let mut fractions = Vec::new();
    for scheme in scn.schemes() {
        let config = FilterConfig {
            gamma: match scheme {
                ShapeScheme::Gamma(g) => g,
                ShapeScheme::MaxEigenvalue => 1.0,
            },
            eps_max: 0.0,
            l_max: cap,
            d_max: 1.0,
            reduce_pred: 1,
            reduce_filt: 1,
            scheme: scn.scheme.clone(),
            direction_nodes: scn.direction_nodes,
            policy: match scheme {
                ShapeScheme::Gamma(_) => SplitPolicy::Adaptive,
                ShapeScheme::MaxEigenvalue => SplitPolicy::MaxWeightEigen,
            },
            ..FilterConfig::default()
        };
        let g = growth_process;
        let mut session = AdaptSession::new(&prior, &g, &config)?;
        let label = scheme.label();
        let mut next = 0;
        loop {
            let count = session.components().len();
            while next < scn.schedule.len() && scn.schedule[next] < count {
                next += 1;
            }
            if next < scn.schedule.len() && scn.schedule[next] == count {
                let image = session
                    .components()
                    .iter()
                    .zip(session.linearizations())
                    .map(|(c, lin)| GaussianComponent::new(c.weight(), lin.y_mean.clone(), lin.y_cov.clone()))
                    .collect::<Result<Vec<_>>>()?;
                let approximation = GaussianMixture::normalized(image)?;
                rows.push(ShapeRow {
                    scheme: label.clone(),
                    components: count,
                    kld_x10: 10.0 * kld_on_grid(&truth, &approximation)?,
                    approximation,
                });
                next += 1;
            }
            if next >= scn.schedule.len() || session.step()?.is_none() {
                break;
            }
        }
        let splits = session.splits();
        let along_xi = splits.iter().filter(|s| s.axis[0].abs() > s.axis[1].abs()).count();
        let fraction = if splits.is_empty() { 0.0 } else { along_xi as f64 / splits.len() as f64 };
        fractions.push((label, fraction));
    }
    Ok(ShapeResult {
        truth,
        rows,
        xi_split_fraction: fractions,
    })
}

/// Bicycle kinematics observed by a range/bearing radar with glint noise.
///
/// State `[x, y, φ]`, input `u = tan(α)`.
#[derive(Debug, Clone)]
pub struct BicycleRadar {
    process_noise: GaussianMixture,
    measurement_noise: GaussianMixture,
}

impl BicycleRadar {
    /// Glint mixture `(1 − β) N(0, diag(1, 0.01)) + β N(0, diag(4, 0.04))`; all
    /// noise covariances are multiplied by `noise_scale`.
    pub fn new(beta: f64, noise_scale: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid(format!("glint probability must lie in [0, 1], got {beta}")));
        }
        if !(noise_scale > 0.0) {
            return Err(invalid("noise scale must be positive"));
        }
        let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_row_slice(v)) * noise_scale;
        let process_noise = GaussianMixture::gaussian(DVector::zeros(3), diag(&[0.01, 0.01, 1e-4]))?;
        let mut glint = Vec::new();
        if beta < 1.0 {
            glint.push(GaussianComponent::new(1.0 - beta, DVector::zeros(2), diag(&[1.0, 0.01]))?);
        }
        if beta > 0.0 {
            glint.push(GaussianComponent::new(beta, DVector::zeros(2), diag(&[4.0, 0.04]))?);
        }
        Ok(Self {
            process_noise,
            measurement_noise: GaussianMixture::normalized(glint)?,
        })
    }

    pub fn prior() -> Result<GaussianMixture> {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        GaussianMixture::gaussian(
            DVector::from_row_slice(&[100.0, 100.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[100.0, 100.0, pi2])),
        )
    }

    fn radar(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&[x[0].hypot(x[1]), x[1].atan2(x[0])])
    }
}

impl StateSpaceModel for BicycleRadar {
    fn state_dim(&self) -> usize {
        3
    }

    fn system(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&[
            x[0] + x[2].cos() + w[0],
            x[1] + x[2].sin() + w[1],
            x[2] + u[0] + w[2],
        ])
    }

    fn measurement(&self, _k: usize, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        Self::radar(x) + v
    }

    fn process_noise(&self) -> &GaussianMixture {
        &self.process_noise
    }

    fn measurement_noise(&self) -> &GaussianMixture {
        &self.measurement_noise
    }

    fn additive_measurement(&self, _k: usize, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(Self::radar(x))
    }
}

/// Filters compared in the tracking study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FilterKind {
    Agmf,
    Mwe,
    Pf,
    Ukf,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Agmf => "agmf",
            FilterKind::Mwe => "mwe",
            FilterKind::Pf => "pf",
            FilterKind::Ukf => "ukf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "agmf" => Ok(FilterKind::Agmf),
            "mwe" => Ok(FilterKind::Mwe),
            "pf" => Ok(FilterKind::Pf),
            "ukf" => Ok(FilterKind::Ukf),
            other => Err(invalid(format!("unknown filter '{other}'"))),
        }
    }

    /// Whether the filter is a mixture filter governed by the reduction thresholds.
    pub fn uses_reduction(&self) -> bool {
        matches!(self, FilterKind::Agmf | FilterKind::Mwe)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackScenario {
    pub beta: f64,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub particles: usize,
    /// Draw the true initial state from the prior; otherwise start at the prior mean.
    pub truth_from_prior: bool,
    /// Multiplier on every noise covariance.
    pub noise_scale: f64,
    /// Final position error beyond which a run counts as diverged.
    pub divergence_threshold: f64,
}

impl Default for TrackScenario {
    fn default() -> Self {
        Self {
            beta: 0.4,
            steps: 100,
            runs: 50,
            seed: 0,
            particles: 10_000,
            truth_from_prior: true,
            noise_scale: 1.0,
            divergence_threshold: 50.0,
        }
    }
}

/// Ground truth, inputs and measurements of one Monte-Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

fn mix_seed(seed: u64, run: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over a combined key.
    let mut z = seed
        .wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator for `stream` of run `run`.
pub fn run_rng(seed: u64, run: usize, stream: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(mix_seed(seed, run as u64, stream))
}

/// Simulates one run: `z_k` observes `x_k`, then `u_k` drives `x_k → x_{k+1}`.
pub fn simulate(scn: &TrackScenario, model: &BicycleRadar, run: usize) -> Result<Trajectory> {
    let mut rng = run_rng(scn.seed, run, 0);
    let prior = BicycleRadar::prior()?;
    let mut x = if scn.truth_from_prior {
        MixtureSampler::new(&prior)?.sample(&mut rng)
    } else {
        prior.components()[0].mean().clone()
    };
    let process = MixtureSampler::new(model.process_noise())?;
    let measurement = MixtureSampler::new(model.measurement_noise())?;
    let mut states = Vec::with_capacity(scn.steps);
    let mut inputs = Vec::with_capacity(scn.steps);
    let mut measurements = Vec::with_capacity(scn.steps);
    for k in 0..scn.steps {
        let z = model.measurement(k, &x, &measurement.sample(&mut rng));
        let alpha: f64 = rng.random_range(-0.2..=0.2);
        let u = DVector::from_element(1, alpha.tan());
        let next = model.system(k, &x, &u, &process.sample(&mut rng));
        states.push(x);
        inputs.push(u);
        measurements.push(z);
        x = next;
    }
    Ok(Trajectory {
        states,
        inputs,
        measurements,
    })
}

/// Estimates of one filter on one trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub estimates: Vec<DVector<f64>>,
    pub splits: usize,
    pub adapt_calls: usize,
    pub degenerate: bool,
    pub failed: bool,
    pub predict_s: f64,
    pub update_s: f64,
    pub runtime_s: f64,
}

fn run_mixture_filter<M: StateSpaceModel + ?Sized>(
    traj: &Trajectory,
    model: &M,
    config: &FilterConfig,
) -> RunRecord {
    let mut rec = RunRecord::default();
    let start = Instant::now();
    let result = (|| -> Result<()> {
        let mut state = FilterState::prior(BicycleRadar::prior()?)?;
        let steps = traj.measurements.len();
        for k in 0..steps {
            let t = Instant::now();
            state = update(&state, &traj.measurements[k], model, config)?;
            rec.update_s += t.elapsed().as_secs_f64();
            rec.splits += state.diagnostics.splits;
            rec.adapt_calls += 1;
            rec.degenerate |= state.diagnostics.degenerate;
            rec.estimates.push(state.mean());
            if k + 1 < steps {
                let t = Instant::now();
                state = predict(&state, &traj.inputs[k], model, config)?;
                rec.predict_s += t.elapsed().as_secs_f64();
                rec.splits += state.diagnostics.splits;
                rec.adapt_calls += 1;
            }
        }
        Ok(())
    })();
    rec.failed = result.is_err();
    rec.runtime_s = start.elapsed().as_secs_f64();
    rec
}

fn run_particle_filter(traj: &Trajectory, model: &BicycleRadar, scn: &TrackScenario, run: usize) -> RunRecord {
    let mut rec = RunRecord::default();
    let start = Instant::now();
    let mut rng = run_rng(scn.seed, run, 1);
    let result = (|| -> Result<()> {
        let pf = ParticleFilter::new(model)?;
        let mut set = ParticleSet::from_prior(&BicycleRadar::prior()?, scn.particles, &mut rng)?;
        let steps = traj.measurements.len();
        for k in 0..steps {
            let t = Instant::now();
            set = pf.reweight(set, k, &traj.measurements[k], model, &mut rng)?;
            rec.update_s += t.elapsed().as_secs_f64();
            rec.estimates.push(set.mean());
            if k + 1 < steps {
                let t = Instant::now();
                set = pf.propagate(&set, k, &traj.inputs[k], model, &mut rng)?;
                rec.predict_s += t.elapsed().as_secs_f64();
            }
        }
        Ok(())
    })();
    rec.failed = result.is_err();
    rec.runtime_s = start.elapsed().as_secs_f64();
    rec
}

/// Aggregate of one filter over all runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub filter: FilterKind,
    pub beta: f64,
    /// Reduction threshold; `None` for filters without one.
    pub reduction: Option<usize>,
    /// Position RMSE over all steps of the runs that completed.
    pub rmse: f64,
    /// Mean wall-clock seconds per run.
    pub runtime_s: f64,
    pub predict_s: f64,
    pub update_s: f64,
    /// Mean splits per adapt call.
    pub avg_splits: f64,
    /// Runs that failed, produced non-finite estimates, or ended beyond the divergence threshold.
    pub diverged_runs: usize,
    /// Runs in which at least one update fell back to the inflated prediction.
    pub degenerate_runs: usize,
}

/// Runs every filter on the same simulated trajectories.
pub fn run_tracking(scn: &TrackScenario, filters: &[FilterKind], config: &FilterConfig) -> Result<Vec<TrackSummary>> {
    config.validate()?;
    if scn.runs == 0 || scn.steps == 0 {
        return Err(invalid("runs and steps must be positive"));
    }
    if filters.contains(&FilterKind::Pf) && scn.particles == 0 {
        return Err(invalid("particle count must be positive"));
    }
    let model = BicycleRadar::new(scn.beta, scn.noise_scale)?;
    let trajectories = (0..scn.runs)
        .map(|r| simulate(scn, &model, r))
        .collect::<Result<Vec<_>>>()?;
    let matched = MomentMatched::new(&model)?;
    let ukf = ukf_config(config.scheme.kappa);
    let mwe = FilterConfig {
        policy: SplitPolicy::MaxWeightEigen,
        ..config.clone()
    };

    let mut out = Vec::with_capacity(filters.len());
    for &filter in filters {
        let records: Vec<RunRecord> = trajectories
            .iter()
            .enumerate()
            .map(|(run, traj)| match filter {
                FilterKind::Agmf => run_mixture_filter(traj, &model, config),
                FilterKind::Mwe => run_mixture_filter(traj, &model, &mwe),
                FilterKind::Ukf => run_mixture_filter(traj, &matched, &ukf),
                FilterKind::Pf => run_particle_filter(traj, &model, scn, run),
            })
            .collect();
        out.push(summarize(filter, scn, config, &trajectories, &records));
    }
    Ok(out)
}

fn summarize(
    filter: FilterKind,
    scn: &TrackScenario,
    config: &FilterConfig,
    trajectories: &[Trajectory],
    records: &[RunRecord],
) -> TrackSummary {
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut diverged = 0;
    for (traj, rec) in trajectories.iter().zip(records) {
        let errors: Vec<f64> = rec
            .estimates
            .iter()
            .zip(&traj.states)
            .map(|(e, x)| (e[0] - x[0]).powi(2) + (e[1] - x[1]).powi(2))
            .collect();
        let finite = errors.iter().all(|e| e.is_finite());
        let last = errors.last().copied().unwrap_or(f64::INFINITY);
        if rec.failed || !finite || last.sqrt() > scn.divergence_threshold {
            diverged += 1;
        }
        if !rec.failed && finite {
            sq += errors.iter().sum::<f64>();
            count += errors.len();
        }
    }
    let n = records.len() as f64;
    let calls: usize = records.iter().map(|r| r.adapt_calls).sum();
    let splits: usize = records.iter().map(|r| r.splits).sum();
    TrackSummary {
        filter,
        beta: scn.beta,
        reduction: filter.uses_reduction().then_some(config.reduce_filt),
        rmse: if count > 0 { (sq / count as f64).sqrt() } else { f64::NAN },
        runtime_s: records.iter().map(|r| r.runtime_s).sum::<f64>() / n,
        predict_s: records.iter().map(|r| r.predict_s).sum::<f64>() / n,
        update_s: records.iter().map(|r| r.update_s).sum::<f64>() / n,
        avg_splits: if calls > 0 { splits as f64 / calls as f64 } else { 0.0 },
        diverged_runs: diverged,
        degenerate_runs: records.iter().filter(|r| r.degenerate).count(),
    }
}
