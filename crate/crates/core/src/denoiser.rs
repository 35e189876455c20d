//! Estimators of the clean set X₀ given a latent X_t.
//!
//! The neural denoiser predicts, for every point of X_t, the probability that
//! it is a retained data point, plus a categorical distribution over the number
//! of thinned data points and a diagonal-Gaussian mixture over their locations.
//! The oracle denoiser knows X₀ and returns it exactly.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    log_sum_exp, sinusoidal_embed, softmax_rows, Checkpoint, Gradients, Linear, Matrix, Mlp,
    ParameterStore, SetEncoder, Tape, Var,
};
use crate::pointset::{Domain, LabeledState, PointSet};
use crate::rng::Rng as StreamRng;

/// Rejection attempts for mixture draws landing outside [-1, 1]^d.
pub const MAX_REJECTIONS: usize = 16;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hyperparameters of the neural denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub width: usize,
    pub heads: usize,
    pub depth: usize,
    pub components: usize,
    /// Largest representable |X₀ ∖ X_t|.
    pub max_count: usize,
    pub var_floor: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            width: 32,
            heads: 4,
            depth: 2,
            components: 16,
            max_count: 100,
            var_floor: 1e-4,
        }
    }
}

impl DenoiserConfig {
    /// Count-head capacity for a training set: twice its largest cardinality.
    pub fn max_count_for(max_cardinality: usize) -> usize {
        (2 * max_cardinality).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || !self.width.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "width must be positive and even, got {}",
                self.width
            )));
        }
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "width {} not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if self.components == 0 {
            return Err(Error::InvalidArgument(
                "need at least one mixture component".into(),
            ));
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(Error::InvalidArgument(
                "variance floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Prediction of p_θ(X̃₀ | X_t).
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    /// Per point of X_t, probability it belongs to X₀ ∩ X_t.
    pub keep_prob: Vec<f64>,
    /// Logits over |X₀ ∖ X_t| ∈ {0..max_count}.
    pub count_logits: Vec<f64>,
    pub mix_weights: Vec<f64>,
    /// K × d.
    pub mix_means: Matrix,
    /// K × d, each ≥ the variance floor.
    pub mix_vars: Matrix,
}

impl DenoiserOutput {
    pub fn count_probs(&self) -> Vec<f64> {
        softmax_rows(&Matrix::row_vector(self.count_logits.clone())).into_data()
    }

    /// log Σ_k w_k N(x; μ_k, diag σ²_k).
    pub fn mixture_log_prob(&self, x: &[f64]) -> f64 {
        mixture_log_prob(self, x)
    }

    /// Draw one location from the mixture, resampling up to
    /// [`MAX_REJECTIONS`] times when it leaves the canonical box and clamping
    /// the last draw otherwise.
    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut last = Vec::new();
        for _ in 0..MAX_REJECTIONS {
            last = self.draw_component_point(rng);
            if last.iter().all(|v| (-1.0..=1.0).contains(v)) {
                return last;
            }
        }
        last.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        last
    }

    fn draw_component_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = sample_categorical(&self.mix_weights, rng);
        let d = self.mix_means.cols();
        (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                self.mix_means.get(k, j) + self.mix_vars.get(k, j).sqrt() * z
            })
            .collect()
    }

    /// Bernoulli keep decisions, a count draw and that many mixture points,
    /// assembled into an estimate of X₀ relative to `xt`.
    pub fn sample_x0_hat<R: Rng + ?Sized>(&self, xt: &PointSet, rng: &mut R) -> Result<X0Estimate> {
        if self.keep_prob.len() != xt.len() {
            return Err(Error::Shape(format!(
                "{} keep probabilities for {} points",
                self.keep_prob.len(),
                xt.len()
            )));
        }
        let d = xt.dim();
        let mut coords = Vec::new();
        let mut kept = Vec::new();
        // Thinned points are never in X_t, so new draws must avoid all of it,
        // not only the kept part: dropped points can survive as noise.
        let mut seen: std::collections::HashSet<_> = xt.iter().map(point_key).collect();
        for (i, p) in xt.iter().enumerate() {
            if rng.random_bool(self.keep_prob[i].clamp(0.0, 1.0)) {
                kept.push((i, kept.len()));
                coords.extend_from_slice(p);
            }
        }
        let m = sample_categorical(&self.count_probs(), rng);
        for _ in 0..m {
            // A clamped draw can coincide with an existing point; redraw.
            for _ in 0..MAX_REJECTIONS {
                let p = self.sample_location(rng);
                if seen.insert(point_key(&p)) {
                    coords.extend(p);
                    break;
                }
            }
        }
        debug_assert_eq!(coords.len() % d, 0);
        Ok(X0Estimate {
            x0: PointSet::from_flat(xt.domain().clone(), coords)?,
            kept,
        })
    }
}

fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter()
        .map(|v| if *v == 0.0 { 0 } else { v.to_bits() })
        .collect()
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Log density of the predicted diagonal-Gaussian mixture at `x`.
pub fn mixture_log_prob(output: &DenoiserOutput, x: &[f64]) -> f64 {
    let d = output.mix_means.cols();
    let terms: Vec<f64> = (0..output.mix_weights.len())
        .map(|k| {
            let mut quad = 0.0;
            let mut log_det = 0.0;
            for j in 0..d {
                let var = output.mix_vars.get(k, j);
                let diff = x[j] - output.mix_means.get(k, j);
                quad += diff * diff / var;
                log_det += var.ln();
            }
            output.mix_weights[k].ln() - 0.5 * (d as f64 * LN_2PI + log_det + quad)
        })
        .collect();
    log_sum_exp(&terms)
}

/// An estimate X̃₀ together with which points of X_t it keeps.
#[derive(Debug, Clone, PartialEq)]
pub struct X0Estimate {
    pub x0: PointSet,
    /// (index in X_t, index in `x0`) for every kept point.
    pub kept: Vec<(usize, usize)>,
}

impl X0Estimate {
    /// X_t relabeled against X̃₀: kept points retained, the rest noise.
    pub fn label(&self, xt: &PointSet, t: usize) -> LabeledState {
        let mut is_kept = vec![false; xt.len()];
        let mut retained_idx = Vec::with_capacity(self.kept.len());
        let mut origin = Vec::with_capacity(self.kept.len());
        for &(i, o) in &self.kept {
            is_kept[i] = true;
            retained_idx.push(i);
            origin.push(o);
        }
        let noise_idx: Vec<usize> = (0..xt.len()).filter(|&i| !is_kept[i]).collect();
        LabeledState {
            t,
            retained: xt.select(&retained_idx),
            origin,
            noise: xt.select(&noise_idx),
        }
    }
}

/// Anything that can draw X̃₀ ~ p(X₀ | X_t).
pub trait Denoiser: Send + Sync {
    /// Domain the latents live on.
    fn domain(&self) -> &Arc<Domain>;

    fn sample_x0_hat(&self, xt: &PointSet, t: usize, rng: &mut StreamRng) -> Result<X0Estimate>;
}

/// Test double realizing p(X̃₀ | X_t) = δ_{X₀}.
///
/// Points of X_t are matched to X₀ by exact coordinates: inside a sampling
/// chain the latent is unlabeled with respect to this particular X₀.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    x0: PointSet,
    index: HashMap<Vec<u64>, usize>,
}

impl OracleDenoiser {
    pub fn new(x0: PointSet) -> Self {
        let index = x0
            .iter()
            .enumerate()
            .map(|(i, p)| (point_key(p), i))
            .collect();
        OracleDenoiser { x0, index }
    }

    pub fn x0(&self) -> &PointSet {
        &self.x0
    }

    /// The oracle's prediction for a labeled state: keep probability 1 on
    /// retained points and 0 on noise, all count mass on |X₀ ∖ X_t|, and one
    /// floor-variance component per thinned point.
    pub fn output_for_state(&self, state: &LabeledState, var_floor: f64) -> Result<DenoiserOutput> {
        state.check_against(&self.x0)?;
        let mut present = vec![false; self.x0.len()];
        state.origin.iter().for_each(|&o| present[o] = true);
        let thinned: Vec<usize> = (0..self.x0.len()).filter(|&i| !present[i]).collect();
        let d = self.x0.dim();
        let m = thinned.len();
        let mut count_logits = vec![-1e9; self.x0.len() + 1];
        count_logits[m] = 0.0;
        let k = m.max(1);
        let mut means = Matrix::zeros(k, d);
        for (r, &i) in thinned.iter().enumerate() {
            means.row_mut(r).copy_from_slice(self.x0.point(i));
        }
        let mut keep_prob = vec![1.0; state.retained.len()];
        keep_prob.extend(std::iter::repeat_n(0.0, state.noise.len()));
        Ok(DenoiserOutput {
            keep_prob,
            count_logits,
            mix_weights: vec![1.0 / k as f64; k],
            mix_means: means,
            mix_vars: Matrix::filled(k, d, var_floor),
        })
    }
}

impl Denoiser for OracleDenoiser {
    fn domain(&self) -> &Arc<Domain> {
        self.x0.domain()
    }

    fn sample_x0_hat(&self, xt: &PointSet, _t: usize, _rng: &mut StreamRng) -> Result<X0Estimate> {
        let kept = xt
            .iter()
            .enumerate()
            .filter_map(|(i, p)| self.index.get(&point_key(p)).map(|&o| (i, o)))
            .collect();
        Ok(X0Estimate {
            x0: self.x0.clone(),
            kept,
        })
    }
}

/// Layer handles of the neural denoiser; the values live in a
/// [`ParameterStore`] so the same graph can be built over perturbed copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: DenoiserConfig,
    pub dim: usize,
    pub steps: usize,
    pub input: Linear,
    pub encoder: SetEncoder,
    pub classifier: Mlp,
    pub mixture: Mlp,
    pub count: Mlp,
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub keep_logits: Var,
    pub count_logits: Var,
    pub weight_logits: Var,
    pub means: Var,
    pub vars: Var,
}

/// Loss terms for one training example.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub bce: f64,
    /// Count cross-entropy plus mixture NLL of the thinned points.
    pub nll: f64,
    pub count_nll: f64,
    pub mixture_nll: f64,
}

impl Architecture {
    pub fn new(
        store: &mut ParameterStore,
        config: DenoiserConfig,
        dim: usize,
        steps: usize,
    ) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let w = config.width;
        let k = config.components;
        Ok(Architecture {
            input: Linear::new(store, "input", dim + 2 * w, w),
            encoder: SetEncoder::new(store, "encoder", w, config.heads, config.depth)?,
            classifier: Mlp::new(store, "classifier", &[4 * w, w, w, 1], true),
            mixture: Mlp::new(store, "mixture", &[3 * w, w, k + 2 * k * dim], true),
            count: Mlp::new(store, "count", &[3 * w, w, config.max_count + 1], true),
            config,
            dim,
            steps,
        })
    }

    /// Start the mixture means at distinct uniform points of the box. With
    /// the head's final weights at zero, identical components would receive
    /// identical gradients and never separate.
    fn spread_component_means(&self, store: &mut ParameterStore, rng: &mut StreamRng) {
        let k = self.config.components;
        let last = self.mixture.layers.last().expect("mixture head has layers");
        let bias = store.value_mut(last.bias).data_mut();
        for v in &mut bias[k..k + k * self.dim] {
            *v = rng.random_range(-1.0..1.0);
        }
    }

    fn check_input(&self, xt: &PointSet, t: usize) -> Result<()> {
        if xt.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: xt.dim(),
            });
        }
        if t > self.steps {
            return Err(Error::StepOutOfRange { t, max: self.steps });
        }
        Ok(())
    }

    /// Build the forward graph for X_t at step t.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        xt: &PointSet,
        t: usize,
    ) -> Result<ForwardVars> {
        self.check_input(xt, t)?;
        let w = self.config.width;
        let n = xt.len();
        let emb_n = sinusoidal_embed(n, w)?;
        let emb_t = sinusoidal_embed(t, w)?;

        let mut tokens = Matrix::zeros(n, self.dim + 2 * w);
        for (i, p) in xt.iter().enumerate() {
            let row = tokens.row_mut(i);
            row[..self.dim].copy_from_slice(p);
            row[self.dim..self.dim + w].copy_from_slice(&emb_n);
            row[self.dim + w..].copy_from_slice(&emb_t);
        }
        let tokens = tape.constant(tokens);
        let h = self.input.forward(tape, store, tokens)?;
        let h = self.encoder.forward(tape, store, h)?;
        let pooled = tape.mean_rows(h);
        let en = tape.constant(Matrix::row_vector(emb_n));
        let et = tape.constant(Matrix::row_vector(emb_t));
        let context = tape.concat_cols(&[pooled, en, et])?;

        let ctx_rows = tape.repeat_rows(context, n)?;
        let cls_in = tape.concat_cols(&[h, ctx_rows])?;
        let keep_logits = self.classifier.forward(tape, store, cls_in)?;

        let count_logits = self.count.forward(tape, store, context)?;

        let k = self.config.components;
        let kd = k * self.dim;
        let mix = self.mixture.forward(tape, store, context)?;
        let weight_logits = tape.slice_cols(mix, 0, k)?;
        let means = tape.slice_cols(mix, k, k + kd)?;
        let raw_vars = tape.slice_cols(mix, k + kd, k + 2 * kd)?;
        let vars = tape.softplus(raw_vars);
        let vars = tape.add_scalar(vars, self.config.var_floor);
        Ok(ForwardVars {
            keep_logits,
            count_logits,
            weight_logits,
            means,
            vars,
        })
    }

    pub fn predict(
        &self,
        store: &ParameterStore,
        xt: &PointSet,
        t: usize,
    ) -> Result<DenoiserOutput> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, store, xt, t)?;
        let k = self.config.components;
        let weights = softmax_rows(tape.value(f.weight_logits)).into_data();
        Ok(DenoiserOutput {
            keep_prob: tape
                .value(f.keep_logits)
                .data()
                .iter()
                .map(|z| sigmoid(*z))
                .collect(),
            count_logits: tape.value(f.count_logits).data().to_vec(),
            mix_weights: weights,
            mix_means: Matrix::from_vec(k, self.dim, tape.value(f.means).data().to_vec())?,
            mix_vars: Matrix::from_vec(k, self.dim, tape.value(f.vars).data().to_vec())?,
        })
    }

    /// Build the training loss for X₀ and a labeled X_t drawn from the
    /// forward marginal:
    /// BCE(keep | retained vs noise) − log P(|X₀ ∖ X_t|) − Σ log p_mix(x).
    pub fn loss_graph(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x0: &PointSet,
        state: &LabeledState,
    ) -> Result<(Var, LossVars)> {
        state.check_against(x0)?;
        let mut present = vec![false; x0.len()];
        state.origin.iter().for_each(|&o| present[o] = true);
        let thinned: Vec<usize> = (0..x0.len()).filter(|&i| !present[i]).collect();
        let m = thinned.len();
        if m > self.config.max_count {
            return Err(Error::CountOverflow {
                thinned: m,
                max: self.config.max_count,
            });
        }

        let xt = state.latent();
        let f = self.forward(tape, store, &xt, state.t)?;

        // Σ softplus(z) − y·z, labels 1 for retained points (listed first).
        let n = xt.len();
        let labels: Vec<f64> = (0..n)
            .map(|i| if i < state.retained.len() { 1.0 } else { 0.0 })
            .collect();
        let y = tape.constant(Matrix::from_vec(n, 1, labels)?);
        let sp = tape.softplus(f.keep_logits);
        let yz = tape.mul(y, f.keep_logits)?;
        let bce_terms = tape.sub(sp, yz)?;
        let bce = tape.sum_all(bce_terms);

        let log_counts = tape.log_softmax_rows(f.count_logits);
        let log_pm = tape.pick(log_counts, 0, m)?;
        let count_nll = tape.scale(log_pm, -1.0);

        let mixture_nll = if m == 0 {
            tape.constant(Matrix::scalar(0.0))
        } else {
            let k = self.config.components;
            let d = self.dim;
            let mut xs = Matrix::zeros(m, k * d);
            for (r, &i) in thinned.iter().enumerate() {
                let p = x0.point(i);
                for c in 0..k {
                    xs.row_mut(r)[c * d..(c + 1) * d].copy_from_slice(p);
                }
            }
            let xs = tape.constant(xs);
            let means = tape.repeat_rows(f.means, m)?;
            let vars = tape.repeat_rows(f.vars, m)?;
            let diff = tape.sub(xs, means)?;
            let sq = tape.square(diff);
            let quad = tape.div(sq, vars)?;
            let log_v = tape.ln(vars);
            let per_coord = tape.add(quad, log_v)?;
            // Block-sum the d coordinates of each component.
            let mut blocks = Matrix::zeros(k * d, k);
            for c in 0..k {
                for j in 0..d {
                    blocks.row_mut(c * d + j)[c] = 1.0;
                }
            }
            let blocks = tape.constant(blocks);
            let per_comp = tape.matmul(per_coord, blocks)?;
            let log_n = tape.scale(per_comp, -0.5);
            let log_n = tape.add_scalar(log_n, -0.5 * d as f64 * LN_2PI);
            let log_w = tape.log_softmax_rows(f.weight_logits);
            let joint = tape.add_row(log_n, log_w)?;
            let lse = tape.log_sum_exp_rows(joint);
            let total = tape.sum_all(lse);
            tape.scale(total, -1.0)
        };
        let nll = tape.add(count_nll, mixture_nll)?;
        let total = tape.add(bce, nll)?;
        Ok((
            total,
            LossVars {
                bce,
                count_nll,
                mixture_nll,
            },
        ))
    }

    pub fn breakdown(tape: &Tape, total: Var, vars: &LossVars) -> LossBreakdown {
        let count_nll = tape.value(vars.count_nll).item();
        let mixture_nll = tape.value(vars.mixture_nll).item();
        LossBreakdown {
            total: tape.value(total).item(),
            bce: tape.value(vars.bce).item(),
            nll: count_nll + mixture_nll,
            count_nll,
            mixture_nll,
        }
    }
}

/// Scalar nodes of the individual loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub bce: Var,
    pub count_nll: Var,
    pub mixture_nll: Var,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Transformer-encoder denoiser with classifier, count and mixture heads.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDenoiser {
    pub arch: Architecture,
    pub store: ParameterStore,
    domain: Arc<Domain>,
}

impl NeuralDenoiser {
    /// Fresh model on the canonical box of `dim` dimensions; output-head
    /// final layers start at zero.
    pub fn new(
        config: DenoiserConfig,
        dim: usize,
        ordered_axis: Option<usize>,
        steps: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let mut store = ParameterStore::new();
        let arch = Architecture::new(&mut store, config, dim, steps)?;
        store.init(rng);
        arch.spread_component_means(&mut store, rng);
        Ok(NeuralDenoiser {
            arch,
            store,
            domain: Arc::new(Domain::canonical(dim, ordered_axis)?),
        })
    }

    /// Rebuild a model from its configuration and a parameter checkpoint.
    pub fn from_checkpoint(
        config: DenoiserConfig,
        dim: usize,
        ordered_axis: Option<usize>,
        steps: usize,
        ckpt: &Checkpoint,
    ) -> Result<Self> {
        let mut store = ParameterStore::new();
        let arch = Architecture::new(&mut store, config, dim, steps)?;
        store.load_checkpoint(ckpt)?;
        Ok(NeuralDenoiser {
            arch,
            store,
            domain: Arc::new(Domain::canonical(dim, ordered_axis)?),
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.arch.config
    }

    pub fn dim(&self) -> usize {
        self.arch.dim
    }

    pub fn steps(&self) -> usize {
        self.arch.steps
    }

    pub fn predict(&self, xt: &PointSet, t: usize) -> Result<DenoiserOutput> {
        self.arch.predict(&self.store, xt, t)
    }

    pub fn loss(&self, x0: &PointSet, state: &LabeledState) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let (total, vars) = self.arch.loss_graph(&mut tape, &self.store, x0, state)?;
        Ok(Architecture::breakdown(&tape, total, &vars))
    }

    pub fn loss_and_gradients(
        &self,
        x0: &PointSet,
        state: &LabeledState,
    ) -> Result<(LossBreakdown, Gradients)> {
        let mut tape = Tape::new();
        let (total, vars) = self.arch.loss_graph(&mut tape, &self.store, x0, state)?;
        let grads = tape.backward(total, &self.store)?;
        Ok((Architecture::breakdown(&tape, total, &vars), grads))
    }
}

impl Denoiser for NeuralDenoiser {
    fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    fn sample_x0_hat(&self, xt: &PointSet, t: usize, rng: &mut StreamRng) -> Result<X0Estimate> {
        self.predict(xt, t)?.sample_x0_hat(xt, rng)
    }
}
