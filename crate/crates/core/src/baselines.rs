//! Comparison filters: unscented Kalman filter, bootstrap particle filter and
//! the largest-weight/largest-eigenvalue splitting variant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::filter::{adapt, predict, update, AdaptOutcome, FilterConfig, FilterState, SplitPolicy, StateSpaceModel};
use crate::linalg::semidefinite_cholesky;
use crate::mixture::{GaussianComponent, GaussianMixture, MixtureDensity};
use crate::statlin::SchemeConfig;

/// Single Gaussian with the mixture's mean and covariance.
pub fn moment_matched(m: &GaussianMixture) -> Result<GaussianMixture> {
    let (mean, cov) = m.moments();
    GaussianMixture::gaussian(mean, cov)
}

/// Wraps a model and replaces both noise mixtures by moment-matched Gaussians.
#[derive(Debug)]
pub struct MomentMatched<'m, M: ?Sized> {
    inner: &'m M,
    process: GaussianMixture,
    measurement: GaussianMixture,
}

impl<'m, M: StateSpaceModel + ?Sized> MomentMatched<'m, M> {
    pub fn new(inner: &'m M) -> Result<Self> {
        Ok(Self {
            process: moment_matched(inner.process_noise())?,
            measurement: moment_matched(inner.measurement_noise())?,
            inner,
        })
    }
}

impl<M: StateSpaceModel + ?Sized> StateSpaceModel for MomentMatched<'_, M> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn system(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.inner.system(k, x, u, w)
    }

    fn measurement(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.inner.measurement(k, x, v)
    }

    fn process_noise(&self) -> &GaussianMixture {
        &self.process
    }

    fn measurement_noise(&self) -> &GaussianMixture {
        &self.measurement
    }

    fn additive_measurement(&self, k: usize, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.additive_measurement(k, x)
    }
}

/// Filter configuration under which the mixture filter is an unscented Kalman filter.
pub fn ukf_config(kappa: f64) -> FilterConfig {
    FilterConfig {
        l_max: 1,
        reduce_pred: 1,
        reduce_filt: 1,
        scheme: SchemeConfig::unscented(kappa),
        ..FilterConfig::default()
    }
}

/// One UKF cycle: prediction with input `u` at time `k`, then the update with `z`.
pub fn ukf_step<M: StateSpaceModel + ?Sized>(
    state: &GaussianComponent,
    k: usize,
    u: &DVector<f64>,
    z: &DVector<f64>,
    model: &M,
    kappa: f64,
) -> Result<GaussianComponent> {
    let matched = MomentMatched::new(model)?;
    let config = ukf_config(kappa);
    let prior = FilterState {
        k,
        density: GaussianMixture::single(state.with_weight(1.0)?),
        kind: crate::filter::DensityKind::Posterior,
        diagnostics: Default::default(),
    };
    let predicted = predict(&prior, u, &matched, &config)?;
    let posterior = update(&predicted, z, &matched, &config)?;
    Ok(posterior.density.components()[0].clone())
}

/// Split loop with largest-weight selection along the largest eigenvalue.
/// Stops only on the component or deviation threshold.
pub fn mwe_adapt<F>(joint: &GaussianMixture, g: &F, config: &FilterConfig) -> Result<AdaptOutcome>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let config = FilterConfig {
        policy: SplitPolicy::MaxWeightEigen,
        ..config.clone()
    };
    adapt(joint, g, &config)
}

/// Draws samples from a Gaussian mixture.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    cumulative: Vec<f64>,
    means: Vec<DVector<f64>>,
    roots: Vec<DMatrix<f64>>,
}

impl MixtureSampler {
    pub fn new(m: &GaussianMixture) -> Result<Self> {
        let total = m.total_weight();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(m.len());
        let mut means = Vec::with_capacity(m.len());
        let mut roots = Vec::with_capacity(m.len());
        for c in m.components() {
            acc += c.weight() / total;
            cumulative.push(acc);
            means.push(c.mean().clone());
            roots.push(semidefinite_cholesky(c.cov())?.0);
        }
        Ok(Self {
            cumulative,
            means,
            roots,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let i = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        let n = self.means[i].len();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        &self.means[i] + &self.roots[i] * z
    }
}

/// Weighted particle approximation of a density.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    /// `n` equally weighted draws from `prior`.
    pub fn from_prior<R: Rng + ?Sized>(prior: &GaussianMixture, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(invalid("particle count must be positive"));
        }
        let sampler = MixtureSampler::new(prior)?;
        Ok(Self {
            particles: (0..n).map(|_| sampler.sample(rng)).collect(),
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.particles[0].len());
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            m.axpy(w, p, 1.0);
        }
        m
    }
}

/// Residual resampling: parent `i` is copied `⌊n ωᵢ⌋` times, the remaining
/// slots are drawn from the normalized residual weights.
pub fn residual_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let expected = n as f64 * w;
        let copies = expected.floor();
        out.extend(std::iter::repeat_n(i, copies as usize));
        residual.push(expected - copies);
    }
    let remaining = n.saturating_sub(out.len());
    if remaining > 0 {
        let total: f64 = residual.iter().sum();
        let mut cumulative = Vec::with_capacity(residual.len());
        let mut acc = 0.0;
        for r in &residual {
            acc += r / total;
            cumulative.push(acc);
        }
        for _ in 0..remaining {
            let u: f64 = rng.random();
            let i = cumulative.iter().position(|&c| u < c).unwrap_or(weights.len() - 1);
            out.push(i);
        }
    }
    out.truncate(n);
    out
}

/// Reusable per-model data of the bootstrap particle filter.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    process: MixtureSampler,
    measurement: MixtureSampler,
    measurement_density: MixtureDensity,
    kernel: GaussianMixture,
}

impl ParticleFilter {
    pub fn new<M: StateSpaceModel + ?Sized>(model: &M) -> Result<Self> {
        Ok(Self {
            process: MixtureSampler::new(model.process_noise())?,
            measurement: MixtureSampler::new(model.measurement_noise())?,
            measurement_density: model.measurement_noise().density_evaluator()?,
            kernel: {
                let (_, cov) = model.measurement_noise().moments();
                GaussianMixture::gaussian(DVector::zeros(cov.nrows()), cov)?
            },
        })
    }

    /// Residual resampling followed by propagation through the dynamics at
    /// time `k` with sampled process noise. The result is equally weighted.
    pub fn propagate<M: StateSpaceModel + ?Sized, R: Rng + ?Sized>(
        &self,
        set: &ParticleSet,
        k: usize,
        u: &DVector<f64>,
        model: &M,
        rng: &mut R,
    ) -> Result<ParticleSet> {
        let n = set.len();
        if n == 0 {
            return Err(invalid("particle set is empty"));
        }
        let parents = residual_resample(&set.weights, n, rng);
        let particles = parents
            .iter()
            .map(|&i| model.system(k, &set.particles[i], u, &self.process.sample(rng)))
            .collect();
        Ok(ParticleSet {
            particles,
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Multiplies the weights by the likelihood of `z` at time `k`.
    ///
    /// With additive measurement noise the likelihood is the exact noise
    /// density of `z − h(x)`. Otherwise one noise draw per particle is pushed
    /// through `h` and scored with a moment-matched Gaussian kernel.
    pub fn reweight<M: StateSpaceModel + ?Sized, R: Rng + ?Sized>(
        &self,
        set: ParticleSet,
        k: usize,
        z: &DVector<f64>,
        model: &M,
        rng: &mut R,
    ) -> Result<ParticleSet> {
        let kernel = self.kernel.density_evaluator()?;
        let ln_lik: Vec<f64> = set
            .particles
            .iter()
            .map(|x| match model.additive_measurement(k, x) {
                Some(hx) => self.measurement_density.ln_evaluate(&(z - hx)),
                None => {
                    let v = self.measurement.sample(rng);
                    kernel.ln_evaluate(&(z - model.measurement(k, x, &v)))
                }
            })
            .collect();
        let max_lik = ln_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max_lik >= crate::filter::LIKELIHOOD_FLOOR.ln()) {
            return Err(Error::DegenerateUpdate {
                max_log_likelihood: max_lik,
            });
        }
        let ln_post: Vec<f64> = ln_lik.iter().zip(&set.weights).map(|(l, w)| l + w.ln()).collect();
        let max = ln_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = ln_post.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(ParticleSet {
            particles: set.particles,
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    /// [`propagate`](Self::propagate) at time `k`, then [`reweight`](Self::reweight) with `z` at `k + 1`.
    pub fn step<M: StateSpaceModel + ?Sized, R: Rng + ?Sized>(
        &self,
        set: &ParticleSet,
        k: usize,
        u: &DVector<f64>,
        z: &DVector<f64>,
        model: &M,
        rng: &mut R,
    ) -> Result<ParticleSet> {
        let moved = self.propagate(set, k, u, model, rng)?;
        self.reweight(moved, k + 1, z, model, rng)
    }
}

/// One bootstrap particle filter cycle; see [`ParticleFilter::step`].
pub fn pf_step<M: StateSpaceModel + ?Sized, R: Rng + ?Sized>(
    set: &ParticleSet,
    k: usize,
    u: &DVector<f64>,
    z: &DVector<f64>,
    model: &M,
    rng: &mut R,
) -> Result<ParticleSet> {
    ParticleFilter::new(model)?.step(set, k, u, z, model, rng)
}
