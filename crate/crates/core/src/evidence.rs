//! Marginal likelihood by Chib's decomposition with reduced runs.
//!
//! ```text
//! ln f(y|g) = ln f(y|θ*) + ln p(θ*) + ln p(p*|g) - ln p(θ*|y) - ln p(p*|y,g)
//! p(θ*|y)  = p(φ*|y) p(ν*|y,φ*) p(μ*|y,φ*,ν*) p(τ*|y,φ*,ν*,μ*) p(π*|y,φ*,ν*,μ*,τ*)
//! ```
//!
//! The AR and degrees-of-freedom ordinates come from Metropolis
//! numerator/denominator averages, the rest are Rao-Blackwellised.
//! Consecutive reduced runs share chains: the run that fixes blocks
//! `1..j` supplies the denominator of block `j` and the numerator of `j+1`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{ln_dirichlet_pdf, ln_gamma_pdf, ln_normal_pdf, sample_dirichlet};
use crate::error::{Error, Result};
use crate::model::{self, log_sum_exp};
use crate::order::{
    canonical_orders, labelled_multiplicity, run_order_selection, OrderSelection, RjSettings,
};
use crate::prior::PriorConfig;
use crate::sampler::{
    run_gibbs, ChainState, ChainTrace, Frozen, GibbsSettings, LatentState, Params, Sampler,
};
use statrs::function::gamma::ln_gamma;

pub const DEFAULT_REDUCED_ITERATIONS: usize = 10_000;
pub const DEFAULT_STABILITY_DRAWS: usize = 200;
/// Points used to decide whether the whole weight simplex is stable.
const SIMPLEX_PROBES: usize = 2_000;

#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceSettings {
    /// Retained sweeps per reduced run.
    pub reduced_iterations: usize,
    /// Sweeps discarded at the start of each reduced run.
    pub reduced_burnin: usize,
    /// Dirichlet draws per estimate of the stable-weight probability.
    pub stability_draws: usize,
}

impl Default for EvidenceSettings {
    fn default() -> Self {
        Self {
            reduced_iterations: DEFAULT_REDUCED_ITERATIONS,
            reduced_burnin: DEFAULT_REDUCED_ITERATIONS / 10,
            stability_draws: DEFAULT_STABILITY_DRAWS,
        }
    }
}

/// Highest-posterior-kernel draw of a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub params: Params,
    pub index: usize,
    pub ln_likelihood: f64,
    pub ln_prior: f64,
}

/// Log posterior ordinates of the five blocks at the anchor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlockDensities {
    pub ar: f64,
    pub dofs: f64,
    pub means: f64,
    pub precisions: f64,
    pub weights: f64,
}

impl BlockDensities {
    pub fn total(&self) -> f64 {
        self.ar + self.dofs + self.means + self.precisions + self.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceReport {
    pub g: usize,
    pub orders: Vec<usize>,
    pub anchor: Params,
    pub ln_likelihood: f64,
    pub ln_prior: f64,
    pub ln_order_prior: f64,
    pub ln_order_posterior: f64,
    pub blocks: BlockDensities,
    /// Raw Chib estimate (no label-permutation correction).
    pub marginal_ln_likelihood: f64,
    /// `ln g!`, the correction for label-permutation symmetry.
    pub ln_label_permutations: f64,
}

impl EvidenceReport {
    fn assemble(
        anchor: &Anchor,
        ln_order_prior: f64,
        ln_order_posterior: f64,
        blocks: BlockDensities,
    ) -> Self {
        let g = anchor.params.g();
        let marginal = anchor.ln_likelihood + anchor.ln_prior + ln_order_prior
            - blocks.total()
            - ln_order_posterior;
        Self {
            g,
            orders: anchor.params.orders(),
            anchor: anchor.params.clone(),
            ln_likelihood: anchor.ln_likelihood,
            ln_prior: anchor.ln_prior,
            ln_order_prior,
            ln_order_posterior,
            blocks,
            marginal_ln_likelihood: marginal,
            ln_label_permutations: ln_gamma(g as f64 + 1.0),
        }
    }

    /// Difference between the reported estimate and its defining identity.
    pub fn identity_residual(&self) -> f64 {
        self.marginal_ln_likelihood
            - (self.ln_likelihood + self.ln_prior + self.ln_order_prior
                - self.blocks.total()
                - self.ln_order_posterior)
    }
}

/// The draw maximising log-likelihood plus log-prior; ties go to the
/// earliest draw.
pub fn select_anchor(trace: &ChainTrace, y: &[f64], priors: &PriorConfig) -> Result<Anchor> {
    let mut best: Option<Anchor> = None;
    for (index, draw) in trace.draws.iter().enumerate() {
        let ln_prior = priors.ln_density(&draw.weights, &draw.means, &draw.precisions, &draw.ar, &draw.dofs)?;
        let ln_likelihood = draw.ln_likelihood(y, trace.window_start);
        let score = ln_prior + ln_likelihood;
        if score.is_finite() && best.as_ref().is_none_or(|b| score > b.ln_prior + b.ln_likelihood) {
            best = Some(Anchor {
                params: draw.clone(),
                index,
                ln_likelihood,
                ln_prior,
            });
        }
    }
    best.ok_or_else(|| Error::Data("trace has no draw with finite posterior kernel".into()))
}

/// Running mean of values given in log space.
#[derive(Default)]
struct LogMean {
    values: Vec<f64>,
}

impl LogMean {
    fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    fn ln_mean(&self) -> f64 {
        log_sum_exp(&self.values) - (self.values.len() as f64).ln()
    }
}

/// Probability that Dirichlet(alpha) weights keep the AR blocks stable.
struct StableWeightMass<'a> {
    ar: &'a [Vec<f64>],
    whole_simplex: bool,
    draws: usize,
    cache: HashMap<Vec<usize>, f64>,
}

impl<'a> StableWeightMass<'a> {
    fn new<R: Rng + ?Sized>(ar: &'a [Vec<f64>], draws: usize, rng: &mut R) -> Result<Self> {
        let g = ar.len();
        let whole_simplex = if g == 1 || ar.iter().map(Vec::len).max().unwrap_or(0) <= 1 {
            // the stability condition is linear in the weights: vertices decide it
            (0..g).all(|k| ar[k].first().map_or(0.0, |c| c * c) < 1.0 - model::STABILITY_MARGIN)
        } else {
            let mut all = true;
            for k in 0..g {
                let mut vertex = vec![0.0; g];
                vertex[k] = 1.0;
                all &= model::is_stable(&vertex, ar)?;
            }
            for _ in 0..SIMPLEX_PROBES {
                if !all {
                    break;
                }
                all &= model::is_stable(&sample_dirichlet(&vec![1.0; g], rng)?, ar)?;
            }
            all
        };
        Ok(Self {
            ar,
            whole_simplex,
            draws,
            cache: HashMap::new(),
        })
    }

    fn ln_mass<R: Rng + ?Sized>(&mut self, alpha: &[f64], counts: &[usize], rng: &mut R) -> Result<f64> {
        if self.whole_simplex {
            return Ok(0.0);
        }
        if let Some(v) = self.cache.get(counts) {
            return Ok(*v);
        }
        let mut stable = 0usize;
        for _ in 0..self.draws {
            if model::is_stable(&sample_dirichlet(alpha, rng)?, self.ar)? {
                stable += 1;
            }
        }
        // half a success keeps the log finite when no draw is stable
        let v = ((stable as f64).max(0.5) / self.draws as f64).ln();
        self.cache.insert(counts.to_vec(), v);
        Ok(v)
    }
}

fn check_nesting(state: &ChainState, anchor: &Params, frozen: &Frozen) -> Result<()> {
    let p = &state.params;
    let mut ok = true;
    for k in 0..anchor.g() {
        ok &= !frozen.ar[k] || p.ar[k] == anchor.ar[k];
        ok &= !frozen.dofs[k] || p.dofs[k] == anchor.dofs[k];
    }
    ok &= !frozen.means || p.means == anchor.means;
    ok &= !frozen.precisions || p.precisions == anchor.precisions;
    if ok {
        Ok(())
    } else {
        Err(Error::numerical("reduced run moved a block held at the anchor"))
    }
}

/// Parameter blocks in the order their ordinates are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Block {
    Ar(usize),
    Dof(usize),
    Means,
    Precisions,
    Weights,
}

fn block_sequence(g: usize) -> Vec<Block> {
    let mut blocks: Vec<Block> = (0..g).map(Block::Ar).collect();
    blocks.extend((0..g).map(Block::Dof));
    blocks.extend([Block::Means, Block::Precisions, Block::Weights]);
    blocks
}

fn freeze(frozen: &mut Frozen, block: Block) {
    match block {
        Block::Ar(k) => frozen.ar[k] = true,
        Block::Dof(k) => frozen.dofs[k] = true,
        Block::Means => frozen.means = true,
        Block::Precisions => frozen.precisions = true,
        Block::Weights => frozen.weights = true,
    }
}

/// Estimate every block ordinate at `anchor` with reduced runs.
///
/// Run `m` holds blocks `0..m` at the anchor. It supplies the Metropolis
/// denominator of block `m - 1` and the numerator (or Rao-Blackwell
/// average) of block `m`. `sampler` must carry the random-walk steps of the
/// main run; it is left with no block frozen.
pub fn posterior_ordinates<R: Rng + ?Sized>(
    sampler: &mut Sampler<'_>,
    anchor: &Params,
    settings: &EvidenceSettings,
    rng: &mut R,
) -> Result<BlockDensities> {
    if settings.reduced_iterations == 0 {
        return Err(Error::Usage("reduced runs need at least one iteration".into()));
    }
    if !anchor.is_stable()? {
        return Err(Error::invalid("anchor is not stable"));
    }
    let g = anchor.g();
    let n = sampler.n_effective();
    let fix_means = sampler.priors().fix_means_to_zero;
    let mut stable_mass = StableWeightMass::new(&anchor.ar, settings.stability_draws, rng)?;
    let mut state = ChainState {
        params: anchor.clone(),
        latent: LatentState {
            allocations: vec![0; n],
            xis: vec![1.0; n],
        },
    };
    let sequence = block_sequence(g);
    let mut ordinate = vec![0.0; sequence.len()];
    let mut frozen = Frozen::none(g);
    frozen.means = fix_means;

    for m in 0..sequence.len() {
        if m > 0 {
            freeze(&mut frozen, sequence[m - 1]);
        }
        let previous = if m > 0 { Some(sequence[m - 1]) } else { None };
        let current = sequence[m];
        let wants_denominator = match previous {
            Some(Block::Ar(k)) => !anchor.ar[k].is_empty(),
            Some(Block::Dof(_)) => true,
            _ => false,
        };
        let wants_current = match current {
            Block::Ar(k) => !anchor.ar[k].is_empty(),
            Block::Means => !fix_means,
            Block::Weights => g > 1,
            _ => true,
        };
        if !wants_denominator && !wants_current {
            continue;
        }
        // every run restarts from the anchor, which is stable
        let lambda = state.params.lambda;
        state.params = anchor.clone();
        state.params.lambda = lambda;
        sampler.frozen = frozen.clone();
        sampler.refresh_latents(&mut state, rng);
        for _ in 0..settings.reduced_burnin {
            sampler.sweep(&mut state, rng)?;
        }

        let mut denominator = LogMean::default();
        let mut numerator = LogMean::default();
        let mut iterations = settings.reduced_iterations;
        let mut extended = false;
        let mut j = 0;
        while j < iterations {
            sampler.sweep(&mut state, rng)?;
            check_nesting(&state, anchor, &frozen)?;
            let stats = sampler.component_stats(&state);
            if wants_denominator {
                match previous {
                    Some(Block::Ar(k)) => {
                        // α(φ*, φ̃) with φ̃ from the random walk centred at φ*
                        let step = sampler.steps[k];
                        let proposal: Vec<f64> = anchor.ar[k]
                            .iter()
                            .map(|c| {
                                let z: f64 = StandardNormal.sample(rng);
                                c + step * z
                            })
                            .collect();
                        denominator.push(sampler.ar_acceptance(&state, k, &proposal)?.ln());
                    }
                    Some(Block::Dof(k)) => {
                        let candidate = sampler.nu_prior(k).sample(rng);
                        denominator.push(
                            sampler
                                .dof_acceptance(&stats[k], anchor.dofs[k], candidate)
                                .ln(),
                        );
                    }
                    _ => unreachable!(),
                }
            }
            if wants_current {
                let v = match current {
                    Block::Ar(k) => {
                        let step = sampler.steps[k];
                        let q: f64 = state.params.ar[k]
                            .iter()
                            .zip(&anchor.ar[k])
                            .map(|(from, to)| ln_normal_pdf(*to, *from, step * step))
                            .sum();
                        sampler.ar_acceptance(&state, k, &anchor.ar[k])?.ln() + q
                    }
                    Block::Dof(k) => {
                        sampler
                            .dof_acceptance(&stats[k], state.params.dofs[k], anchor.dofs[k])
                            .ln()
                            + sampler.nu_prior(k).ln_pdf(anchor.dofs[k])
                    }
                    Block::Means => (0..g)
                        .map(|k| {
                            let (mean, var) = sampler.mean_conditional(&state, &stats, k);
                            ln_normal_pdf(anchor.means[k], mean, var)
                        })
                        .sum(),
                    Block::Precisions => (0..g)
                        .map(|k| {
                            let (shape, rate) = sampler.precision_conditional(&state, &stats, k);
                            ln_gamma_pdf(anchor.precisions[k], shape, rate)
                        })
                        .sum(),
                    Block::Weights => {
                        let alpha = sampler.weight_posterior(&state);
                        let counts = sampler.counts(&state);
                        ln_dirichlet_pdf(&anchor.weights, &alpha)
                            - stable_mass.ln_mass(&alpha, &counts, rng)?
                    }
                };
                numerator.push(v);
            }
            j += 1;
            if j == iterations
                && wants_denominator
                && !extended
                && denominator.ln_mean() == f64::NEG_INFINITY
            {
                // every proposal away from the anchor was rejected: run as long again
                extended = true;
                iterations *= 2;
            }
        }
        if wants_denominator {
            let d = denominator.ln_mean();
            if !d.is_finite() {
                return Err(Error::numerical(format!(
                    "every reduced-run proposal away from the anchor was rejected for {previous:?}"
                )));
            }
            ordinate[m - 1] -= d;
        }
        if wants_current {
            ordinate[m] += numerator.ln_mean();
        }
    }
    sampler.frozen = Frozen::none(g);

    let mut blocks = BlockDensities::default();
    for (block, v) in sequence.iter().zip(&ordinate) {
        match block {
            Block::Ar(_) => blocks.ar += v,
            Block::Dof(_) => blocks.dofs += v,
            Block::Means => blocks.means = *v,
            Block::Precisions => blocks.precisions = *v,
            Block::Weights => blocks.weights = *v,
        }
    }
    for v in [blocks.ar, blocks.dofs, blocks.means, blocks.precisions, blocks.weights] {
        if !v.is_finite() {
            return Err(Error::numerical(format!("non-finite block ordinate {blocks:?}")));
        }
    }
    Ok(blocks)
}

/// Order-prior and order-posterior terms for canonical orders `orders`
/// selected by a reversible-jump run.
pub fn order_terms(selection: &OrderSelection, orders: &[usize]) -> Result<(f64, f64)> {
    let share = selection.share(orders);
    if share <= 0.0 {
        return Err(Error::numerical(format!(
            "orders {:?} were never visited",
            canonical_orders(orders)
        )));
    }
    let g = orders.len() as f64;
    let prior = (labelled_multiplicity(orders) as f64).ln() - g * (selection.p_max as f64).ln();
    Ok((prior, share.ln()))
}

/// Evidence at the anchor of `trace`, with optional order terms
/// `(ln p(p*|g), ln p(p*|y,g))`; fixed orders use `(0, 0)`.
pub fn estimate_evidence<R: Rng + ?Sized>(
    y: &[f64],
    priors: &PriorConfig,
    trace: &ChainTrace,
    order_terms: (f64, f64),
    settings: &EvidenceSettings,
    rng: &mut R,
) -> Result<EvidenceReport> {
    let anchor = select_anchor(trace, y, priors)?;
    let mut sampler = Sampler::new(y, trace.window_start, priors)?.with_steps(trace.ar_steps.clone());
    let blocks = posterior_ordinates(&mut sampler, &anchor.params, settings, rng)?;
    Ok(EvidenceReport::assemble(&anchor, order_terms.0, order_terms.1, blocks))
}

/// Evidence at a given anchor point (used for relabelling checks).
pub fn evidence_at<R: Rng + ?Sized>(
    y: &[f64],
    start: usize,
    priors: &PriorConfig,
    anchor: &Params,
    ar_steps: &[f64],
    order_terms: (f64, f64),
    settings: &EvidenceSettings,
    rng: &mut R,
) -> Result<EvidenceReport> {
    let ln_prior = priors.ln_density(&anchor.weights, &anchor.means, &anchor.precisions, &anchor.ar, &anchor.dofs)?;
    let anchor = Anchor {
        ln_likelihood: anchor.ln_likelihood(y, start),
        ln_prior,
        params: anchor.clone(),
        index: 0,
    };
    let mut sampler = Sampler::new(y, start, priors)?.with_steps(ar_steps.to_vec());
    let blocks = posterior_ordinates(&mut sampler, &anchor.params, settings, rng)?;
    Ok(EvidenceReport::assemble(&anchor, order_terms.0, order_terms.1, blocks))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSettings {
    pub selection: RjSettings,
    pub gibbs: GibbsSettings,
    pub evidence: EvidenceSettings,
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub selection: OrderSelection,
    pub trace: ChainTrace,
    pub report: EvidenceReport,
}

/// Order selection, a fixed-order fit of the preferred orders and the
/// evidence estimate, all on the window starting at `p_max` so that
/// different numbers of components are scored on the same observations.
pub fn run_pipeline<R: Rng + ?Sized>(
    y: &[f64],
    priors: &PriorConfig,
    settings: &PipelineSettings,
    rng: &mut R,
) -> Result<PipelineResult> {
    let selection = run_order_selection(y, priors, &settings.selection, rng)?;
    let orders = selection.preferred.clone();
    let mut gibbs = settings.gibbs.clone();
    gibbs.window_start = Some(settings.selection.p_max);
    let trace = run_gibbs(y, &orders, priors, &gibbs, rng)?;
    let terms = order_terms(&selection, &orders)?;
    let report = estimate_evidence(y, priors, &trace, terms, &settings.evidence, rng)?;
    Ok(PipelineResult {
        selection,
        trace,
        report,
    })
}
