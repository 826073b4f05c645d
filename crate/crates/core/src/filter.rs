//! The adaptive Gaussian mixture filter.
//!
//! Each step forms the product of the state mixture with the noise mixture on
//! the stacked space, splits components of that joint mixture where the
//! statistical linearization of the model is poor, applies the Kalman
//! predictor or update per component, and reduces the result.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, numerical, Result};
use crate::linalg::{block_diag, ln_gaussian_chol, repair_psd, stack, symmetrize};
use crate::mixture::{eigendecompose, log_sum_exp, GaussianComponent, GaussianMixture, IsdTracker};
use crate::quadrature::{gauss_hermite, QuadratureRule};
use crate::reduction::reduce;
use crate::splitting::{
    best_component, best_direction, direction_scores, selection_scores, split_component, SplitLibrary,
};
use crate::statlin::{error_trace, linearize, Linearization, SchemeConfig};

/// Measurement likelihoods below this count as zero.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Linearization errors at or below this fraction of `1 + trace(Cʸ)` are roundoff.
const AFFINE_TOLERANCE: f64 = 1e-10;

/// Covariance inflation applied when an update is degenerate.
const DEGENERATE_INFLATION: f64 = 2.0;

/// Discrete-time model `x' = a_k(x, u, w)`, `z = h_k(x, v)` with mixture noises.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;

    fn system(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;

    fn measurement(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    fn process_noise(&self) -> &GaussianMixture;

    fn measurement_noise(&self) -> &GaussianMixture;

    /// `h(x)` when `z = h(x) + v`; lets sampling filters evaluate the noise
    /// density exactly. `None` for non-additive measurement noise.
    fn additive_measurement(&self, _k: usize, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

type SystemFn = dyn Fn(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type MeasurementFn = dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type AdditiveFn = dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// Closure-backed [`StateSpaceModel`].
pub struct FnModel {
    state_dim: usize,
    system: Box<SystemFn>,
    measurement: Box<MeasurementFn>,
    additive: Option<Box<AdditiveFn>>,
    process_noise: GaussianMixture,
    measurement_noise: GaussianMixture,
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel")
            .field("state_dim", &self.state_dim)
            .field("additive", &self.additive.is_some())
            .field("process_noise", &self.process_noise)
            .field("measurement_noise", &self.measurement_noise)
            .finish_non_exhaustive()
    }
}

impl FnModel {
    pub fn new(
        state_dim: usize,
        system: impl Fn(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        measurement: impl Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        process_noise: GaussianMixture,
        measurement_noise: GaussianMixture,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if !process_noise.is_normalized() || !measurement_noise.is_normalized() {
            return Err(invalid("noise mixtures must be normalized"));
        }
        Ok(Self {
            state_dim,
            system: Box::new(system),
            measurement: Box::new(measurement),
            additive: None,
            process_noise,
            measurement_noise,
        })
    }

    /// Model with `z = h(x) + v`.
    pub fn additive(
        state_dim: usize,
        system: impl Fn(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        h: impl Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync + Clone + 'static,
        process_noise: GaussianMixture,
        measurement_noise: GaussianMixture,
    ) -> Result<Self> {
        let h2 = h.clone();
        let mut model = Self::new(
            state_dim,
            system,
            move |k, x, v| h(k, x) + v,
            process_noise,
            measurement_noise,
        )?;
        model.additive = Some(Box::new(h2));
        Ok(model)
    }
}

impl StateSpaceModel for FnModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn system(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        (self.system)(k, x, u, w)
    }

    fn measurement(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        (self.measurement)(k, x, v)
    }

    fn process_noise(&self) -> &GaussianMixture {
        &self.process_noise
    }

    fn measurement_noise(&self) -> &GaussianMixture {
        &self.measurement_noise
    }

    fn additive_measurement(&self, k: usize, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.additive.as_ref().map(|h| h(k, x))
    }
}

/// How the split loop picks components and directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPolicy {
    /// Error-weighted selection, error-driven direction, all three stopping rules.
    Adaptive,
    /// Largest weight, largest eigenvalue; ignores the error threshold.
    MaxWeightEigen,
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub gamma: f64,
    pub eps_max: f64,
    pub l_max: usize,
    pub d_max: f64,
    /// Component budget after prediction.
    pub reduce_pred: usize,
    /// Component budget after the measurement update.
    pub reduce_filt: usize,
    pub scheme: SchemeConfig,
    pub split_library: SplitLibrary,
    /// Gauss–Hermite nodes per eigendirection in the direction scores.
    pub direction_nodes: usize,
    pub policy: SplitPolicy,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            eps_max: 0.05,
            l_max: 128,
            d_max: 1.0,
            reduce_pred: 8,
            reduce_filt: 8,
            scheme: SchemeConfig::unscented(0.5),
            split_library: SplitLibrary::default(),
            direction_nodes: 5,
            policy: SplitPolicy::Adaptive,
        }
    }
}

impl FilterConfig {
    /// Same budgets for prediction and update.
    pub fn with_reduction(mut self, target: usize) -> Self {
        self.reduce_pred = target;
        self.reduce_filt = target;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eps_max) {
            return Err(invalid(format!("eps_max must lie in [0, 1], got {}", self.eps_max)));
        }
        if !(0.0..=1.0).contains(&self.d_max) {
            return Err(invalid(format!("d_max must lie in [0, 1], got {}", self.d_max)));
        }
        if self.l_max == 0 || self.reduce_pred == 0 || self.reduce_filt == 0 {
            return Err(invalid("component thresholds must be positive"));
        }
        if self.reduce_pred > self.l_max || self.reduce_filt > self.l_max {
            return Err(invalid(format!(
                "reduction thresholds ({}, {}) must not exceed l_max {}",
                self.reduce_pred, self.reduce_filt, self.l_max
            )));
        }
        if self.direction_nodes == 0 {
            return Err(invalid("direction_nodes must be positive"));
        }
        Ok(())
    }
}

/// Why a split loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The next split would exceed `l_max`.
    ComponentLimit,
    /// The next split would move the mixture more than `d_max` from its start.
    Deviation,
    /// Every selection score is below `eps_max`.
    ErrorThreshold,
    /// Every component is transformed affinely up to roundoff.
    Affine,
    /// The selected component has no direction with positive variance.
    NoDirection,
}

/// One committed split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvent {
    pub component_index: usize,
    pub direction: usize,
    /// Unit eigenvector the split was made along.
    pub axis: DVector<f64>,
}

/// Mixture and per-component linearizations after the split loop.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub mixture: GaussianMixture,
    pub linearizations: Vec<Linearization>,
    pub splits: Vec<SplitEvent>,
    pub stop: StopReason,
}

type VectorFn<'a> = dyn Fn(&DVector<f64>) -> DVector<f64> + 'a;

/// The split-linearize loop, one split per [`AdaptSession::step`].
pub struct AdaptSession<'a> {
    g: &'a VectorFn<'a>,
    config: &'a FilterConfig,
    rule: QuadratureRule,
    components: Vec<GaussianComponent>,
    linearizations: Vec<Linearization>,
    tracker: Option<IsdTracker>,
    splits: Vec<SplitEvent>,
    stop: Option<StopReason>,
}

impl<'a> AdaptSession<'a> {
    pub fn new(joint: &GaussianMixture, g: &'a VectorFn<'a>, config: &'a FilterConfig) -> Result<Self> {
        config.validate()?;
        let linearizations = joint
            .components()
            .iter()
            .map(|c| linearize(g, c.mean(), c.cov(), &config.scheme))
            .collect::<Result<Vec<_>>>()?;
        // The normalized ISD never exceeds one.
        let tracker = if config.d_max < 1.0 {
            Some(IsdTracker::new(joint)?)
        } else {
            None
        };
        Ok(Self {
            g,
            config,
            rule: gauss_hermite(config.direction_nodes)?,
            components: joint.components().to_vec(),
            linearizations,
            tracker,
            splits: Vec::new(),
            stop: None,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn linearizations(&self) -> &[Linearization] {
        &self.linearizations
    }

    pub fn splits(&self) -> &[SplitEvent] {
        &self.splits
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    fn halt(&mut self, reason: StopReason) -> Result<Option<&SplitEvent>> {
        self.stop = Some(reason);
        Ok(None)
    }

    /// Performs one split; `None` once a stopping rule has fired.
    pub fn step(&mut self) -> Result<Option<&SplitEvent>> {
        if self.stop.is_some() {
            return Ok(None);
        }
        let cfg = self.config;
        if self.components.len() + cfg.split_library.len() - 1 > cfg.l_max {
            return self.halt(StopReason::ComponentLimit);
        }
        let affine = self.linearizations.iter().all(|lin| {
            error_trace(lin) <= AFFINE_TOLERANCE * (1.0 + lin.y_cov.trace().abs())
        });
        if affine {
            return self.halt(StopReason::Affine);
        }

        let mixture = GaussianMixture::new(self.components.clone())?;
        let (index, below_threshold) = match cfg.policy {
            SplitPolicy::Adaptive => {
                let scores = selection_scores(&mixture, &self.linearizations, cfg.gamma)?;
                let below = scores.iter().all(|s| s.score < cfg.eps_max);
                (best_component(&scores).expect("non-empty mixture"), below)
            }
            SplitPolicy::MaxWeightEigen => {
                let mut best = 0;
                for (i, c) in self.components.iter().enumerate() {
                    if c.weight() > self.components[best].weight() {
                        best = i;
                    }
                }
                (best, false)
            }
        };

        let component = &self.components[index];
        let eig = eigendecompose(component.cov())?;
        let direction = match cfg.policy {
            SplitPolicy::Adaptive => {
                let d = direction_scores(component, &eig, self.g, &self.linearizations[index], &self.rule)?;
                best_direction(&d)
            }
            SplitPolicy::MaxWeightEigen => (eig.eigenvalues[0] > 0.0).then_some(0),
        };
        let Some(direction) = direction else {
            return self.halt(StopReason::NoDirection);
        };
        let children = split_component(component, direction, &eig, &cfg.split_library)?;

        let candidate = match &self.tracker {
            Some(tracker) => {
                let c = tracker.candidate(index, &children)?;
                if c.deviation() > cfg.d_max {
                    return self.halt(StopReason::Deviation);
                }
                Some(c)
            }
            None => None,
        };
        if below_threshold {
            return self.halt(StopReason::ErrorThreshold);
        }

        let child_lins = children
            .iter()
            .map(|c| linearize(self.g, c.mean(), c.cov(), &cfg.scheme))
            .collect::<Result<Vec<_>>>()?;
        if let (Some(tracker), Some(c)) = (self.tracker.as_mut(), candidate) {
            tracker.commit(index, &children, c);
        }
        self.components.splice(index..=index, children);
        self.linearizations.splice(index..=index, child_lins);
        self.splits.push(SplitEvent {
            component_index: index,
            direction,
            axis: eig.vector(direction),
        });
        Ok(self.splits.last())
    }

    /// Runs the loop to completion.
    pub fn run(mut self) -> Result<AdaptOutcome> {
        while self.step()?.is_some() {}
        self.finish()
    }

    /// Current state; the stop reason is `ComponentLimit` if the loop was cut short.
    pub fn finish(self) -> Result<AdaptOutcome> {
        Ok(AdaptOutcome {
            mixture: GaussianMixture::new(self.components)?,
            linearizations: self.linearizations,
            splits: self.splits,
            stop: self.stop.unwrap_or(StopReason::ComponentLimit),
        })
    }
}

/// Splits and linearizes `joint` against `g` until a stopping rule fires.
pub fn adapt<F>(joint: &GaussianMixture, g: &F, config: &FilterConfig) -> Result<AdaptOutcome>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    AdaptSession::new(joint, g, config)?.run()
}

/// Product mixture over the stacked space `[x; w]`; component `(i, j)` sits at `i · L_w + j`.
pub fn joint_components(state: &GaussianMixture, noise: &GaussianMixture) -> Result<GaussianMixture> {
    let mut out = Vec::with_capacity(state.len() * noise.len());
    for s in state.components() {
        for n in noise.components() {
            out.push(GaussianComponent::new(
                s.weight() * n.weight(),
                stack(s.mean(), n.mean()),
                block_diag(s.cov(), n.cov()),
            )?);
        }
    }
    GaussianMixture::new(out)
}

/// Which density a [`FilterState`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    Predicted,
    Posterior,
}

/// Bookkeeping of the most recent filter step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    pub splits: usize,
    /// `ε` of every joint component after splitting.
    pub epsilons: Vec<f64>,
    pub stop: Option<StopReason>,
    /// The update saw no usable likelihood and fell back to the inflated prediction.
    pub degenerate: bool,
    pub joint_components: usize,
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub k: usize,
    pub density: GaussianMixture,
    pub kind: DensityKind,
    pub diagnostics: StepDiagnostics,
}

impl FilterState {
    /// State at time 0 holding the prior, ready for an update.
    pub fn prior(density: GaussianMixture) -> Result<Self> {
        if !density.is_normalized() {
            return Err(invalid("prior mixture must be normalized"));
        }
        Ok(Self {
            k: 0,
            density,
            kind: DensityKind::Predicted,
            diagnostics: StepDiagnostics::default(),
        })
    }

    pub fn mean(&self) -> DVector<f64> {
        self.density.moments().0
    }
}

fn diagnostics(outcome: &AdaptOutcome) -> StepDiagnostics {
    StepDiagnostics {
        splits: outcome.splits.len(),
        epsilons: outcome.linearizations.iter().map(error_trace).collect(),
        stop: Some(outcome.stop),
        degenerate: false,
        joint_components: outcome.mixture.len(),
    }
}

fn run_adapt(joint: &GaussianMixture, g: &VectorFn<'_>, config: &FilterConfig) -> Result<AdaptOutcome> {
    AdaptSession::new(joint, g, config)?.run()
}

fn check_dims(state: &FilterState, nx: usize) -> Result<usize> {
    if state.density.dim() != nx {
        return Err(invalid(format!(
            "state mixture has dimension {} but the model expects {nx}",
            state.density.dim()
        )));
    }
    Ok(nx)
}

/// Time update `k → k + 1`.
pub fn predict<M: StateSpaceModel + ?Sized>(
    state: &FilterState,
    u: &DVector<f64>,
    model: &M,
    config: &FilterConfig,
) -> Result<FilterState> {
    let nx = check_dims(state, model.state_dim())?;
    let noise = model.process_noise();
    let nw = noise.dim();
    let k = state.k;
    let g = |x: &DVector<f64>| {
        let s = x.rows(0, nx).into_owned();
        let w = x.rows(nx, nw).into_owned();
        model.system(k, &s, u, &w)
    };
    let joint = joint_components(&state.density, noise)?;
    let outcome = run_adapt(&joint, &g, config)?;

    let mut out = Vec::with_capacity(outcome.mixture.len());
    for (c, lin) in outcome.mixture.components().iter().zip(&outcome.linearizations) {
        if lin.output_dim() != nx {
            return Err(invalid("system function must return a state-sized vector"));
        }
        let mean = &lin.g * c.mean() + &lin.b;
        let cov = &lin.g * c.cov() * lin.g.transpose() + &lin.err_cov;
        out.push(GaussianComponent::new(c.weight(), mean, cov)?);
    }
    let predicted = reduce(&GaussianMixture::normalized(out)?, config.reduce_pred)?;
    Ok(FilterState {
        k: k + 1,
        density: GaussianMixture::normalized(predicted.into_components())?,
        kind: DensityKind::Predicted,
        diagnostics: diagnostics(&outcome),
    })
}

/// Measurement update at the current time index.
///
/// When every component assigns `z` a likelihood below [`LIKELIHOOD_FLOOR`],
/// the predicted mixture is returned with covariances doubled and
/// `diagnostics.degenerate` set.
pub fn update<M: StateSpaceModel + ?Sized>(
    state: &FilterState,
    z: &DVector<f64>,
    model: &M,
    config: &FilterConfig,
) -> Result<FilterState> {
    let nx = check_dims(state, model.state_dim())?;
    let noise = model.measurement_noise();
    let nv = noise.dim();
    let k = state.k;
    let g = |x: &DVector<f64>| {
        let s = x.rows(0, nx).into_owned();
        let v = x.rows(nx, nv).into_owned();
        model.measurement(k, &s, &v)
    };
    let joint = joint_components(&state.density, noise)?;
    let outcome = run_adapt(&joint, &g, config)?;
    let mut diag = diagnostics(&outcome);

    let mut posterior = Vec::with_capacity(outcome.mixture.len());
    let mut ln_weights = Vec::with_capacity(outcome.mixture.len());
    for (c, lin) in outcome.mixture.components().iter().zip(&outcome.linearizations) {
        if lin.output_dim() != z.len() {
            return Err(invalid(format!(
                "measurement has dimension {} but the model returns {}",
                z.len(),
                lin.output_dim()
            )));
        }
        let z_hat = &lin.g * c.mean() + &lin.b;
        let s = symmetrize(&(&lin.g * c.cov() * lin.g.transpose() + &lin.err_cov));
        let chol = s
            .clone()
            .cholesky()
            .or_else(|| repair_psd(&s).ok().and_then(|r| r.cholesky()))
            .ok_or_else(|| numerical("innovation covariance is not positive definite"))?;
        let cross = c.cov().rows(0, nx) * lin.g.transpose();
        // K = P_xz S⁻¹, i.e. Kᵀ = S⁻¹ P_xzᵀ.
        let gain = chol.solve(&cross.transpose()).transpose();
        let x_prior = c.mean().rows(0, nx).into_owned();
        let c_prior = c.cov().view((0, 0), (nx, nx)).into_owned();
        let mean = &x_prior + &gain * (z - &z_hat);
        let cov = symmetrize(&(&c_prior - &gain * cross.transpose()));
        posterior.push(GaussianComponent::new(c.weight(), mean, cov)?);
        ln_weights.push(c.weight().ln() + ln_gaussian_chol(z, &z_hat, &chol));
    }

    let max_ln = ln_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let density = if !(max_ln >= LIKELIHOOD_FLOOR.ln()) {
        diag.degenerate = true;
        let inflated = state
            .density
            .components()
            .iter()
            .map(|c| GaussianComponent::new(c.weight(), c.mean().clone(), c.cov() * DEGENERATE_INFLATION))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::normalized(inflated)?
    } else {
        let total = log_sum_exp(&ln_weights);
        let weighted = posterior
            .into_iter()
            .zip(&ln_weights)
            .map(|(c, &lw)| c.with_weight((lw - total).exp()))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::normalized(weighted)?
    };
    let reduced = reduce(&density, config.reduce_filt)?;
    Ok(FilterState {
        k,
        density: GaussianMixture::normalized(reduced.into_components())?,
        kind: DensityKind::Posterior,
        diagnostics: diag,
    })
}

/// Mean and covariance of the block `start..start + len`.
pub fn marginal(component: &GaussianComponent, start: usize, len: usize) -> (DVector<f64>, DMatrix<f64>) {
    (
        component.mean().rows(start, len).into_owned(),
        component.cov().view((start, start), (len, len)).into_owned(),
    )
}
