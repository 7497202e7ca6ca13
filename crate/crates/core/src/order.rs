//! Reversible-jump selection of per-component autoregressive orders.
//!
//! A move picks a component uniformly, then either appends a coefficient
//! drawn from U(-1.5, 1.5) (birth) or drops the highest-lag coefficient
//! (death). Only the AR block changes dimension and the Jacobian is 1.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::prior::PriorConfig;
use crate::sampler::{AcceptanceCounter, ChainState, Params, Sampler, StepAdapter};

pub const MIN_ORDER: usize = 1;
/// Half-width of the birth proposal for a new coefficient.
pub const BIRTH_HALF_WIDTH: f64 = 1.5;
pub const DEFAULT_SWEEPS_PER_MOVE: usize = 5;

/// Probability of proposing a birth from order `p`.
pub fn birth_probability(p: usize, p_max: usize) -> f64 {
    if p >= p_max {
        0.0
    } else if p <= MIN_ORDER {
        1.0
    } else {
        0.5
    }
}

pub fn death_probability(p: usize, p_max: usize) -> f64 {
    if p <= MIN_ORDER {
        0.0
    } else {
        1.0 - birth_probability(p, p_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Direction {
    Birth { coefficient: f64 },
    Death,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderMove {
    pub component: usize,
    pub direction: Direction,
}

/// Draw a move; `None` when no order can change (`p_max == 1`).
pub fn propose_order_move<R: Rng + ?Sized>(orders: &[usize], p_max: usize, rng: &mut R) -> Option<OrderMove> {
    if p_max <= MIN_ORDER || orders.is_empty() {
        return None;
    }
    let component = rng.random_range(0..orders.len());
    let p = orders[component];
    let direction = if rng.random::<f64>() < birth_probability(p, p_max) {
        Direction::Birth {
            coefficient: rng.random_range(-BIRTH_HALF_WIDTH..BIRTH_HALF_WIDTH),
        }
    } else {
        Direction::Death
    };
    Some(OrderMove {
        component,
        direction,
    })
}

/// Candidate AR blocks after applying `mv`.
pub fn apply_move(ar: &[Vec<f64>], mv: &OrderMove) -> Vec<Vec<f64>> {
    let mut out = ar.to_vec();
    match mv.direction {
        Direction::Birth { coefficient } => out[mv.component].push(coefficient),
        Direction::Death => {
            out[mv.component].pop();
        }
    }
    out
}

/// Acceptance probability of `mv` from the state's parameters, using the
/// mixture likelihood over `y[start..]` with latent variables integrated
/// out.
pub fn move_acceptance(
    state: &ChainState,
    y: &[f64],
    start: usize,
    priors: &PriorConfig,
    p_max: usize,
    mv: &OrderMove,
) -> Result<f64> {
    let params = &state.params;
    let k = mv.component;
    let p = params.ar[k].len();
    let (proposal_factor, dropped) = match mv.direction {
        Direction::Birth { .. } => {
            if p >= p_max {
                return Ok(0.0);
            }
            (
                death_probability(p + 1, p_max) / birth_probability(p, p_max)
                    * (2.0 * BIRTH_HALF_WIDTH),
                None,
            )
        }
        Direction::Death => {
            if p <= MIN_ORDER {
                return Ok(0.0);
            }
            (
                birth_probability(p - 1, p_max) / death_probability(p, p_max)
                    / (2.0 * BIRTH_HALF_WIDTH),
                params.ar[k].last().copied(),
            )
        }
    };
    // the reverse birth could never have proposed this coefficient
    if dropped.is_some_and(|c| c.abs() > BIRTH_HALF_WIDTH) {
        return Ok(0.0);
    }
    let ar = apply_move(&params.ar, mv);
    if !priors.ar_within_bound(&ar[k]) || !crate::model::is_stable(&params.weights, &ar)? {
        return Ok(0.0);
    }
    let mut candidate = params.clone();
    candidate.ar = ar;
    let log_ratio = candidate.ln_likelihood(y, start) - params.ln_likelihood(y, start);
    Ok((log_ratio + proposal_factor.ln()).min(0.0).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RjSettings {
    /// Counted reversible-jump moves.
    pub iterations: usize,
    /// Moves discarded before counting starts.
    pub burnin: usize,
    pub sweeps_per_move: usize,
    pub p_max: usize,
    pub ar_steps: Option<Vec<f64>>,
    /// Adapt random-walk steps during burn-in.
    pub adapt: bool,
    /// Starting point for [`Sampler::initialize_near`].
    pub start: Option<Params>,
}

impl RjSettings {
    pub fn new(iterations: usize, burnin: usize, p_max: usize) -> Self {
        Self {
            iterations,
            burnin,
            sweeps_per_move: DEFAULT_SWEEPS_PER_MOVE,
            p_max,
            ar_steps: None,
            adapt: true,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Usage("order selection needs at least one iteration".into()));
        }
        if self.p_max < MIN_ORDER {
            return Err(Error::Usage("p_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Orders sorted in decreasing order; the label-free identity of a model.
pub fn canonical_orders(orders: &[usize]) -> Vec<usize> {
    let mut c = orders.to_vec();
    c.sort_unstable_by(|a, b| b.cmp(a));
    c
}

/// Number of distinct labelled order tuples sharing `orders`' canonical form.
pub fn labelled_multiplicity(orders: &[usize]) -> u64 {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &p in orders {
        *counts.entry(p).or_default() += 1;
    }
    let factorial = |n: u64| (1..=n).product::<u64>();
    counts
        .values()
        .fold(factorial(orders.len() as u64), |acc, &c| acc / factorial(c))
}

#[derive(Clone, Debug)]
pub struct OrderSelection {
    pub g: usize,
    pub p_max: usize,
    pub iterations: usize,
    /// Visits per labelled order tuple.
    pub visit_counts: BTreeMap<Vec<usize>, usize>,
    /// Visits per canonical (sorted) order tuple.
    pub model_counts: BTreeMap<Vec<usize>, usize>,
    /// Canonical orders of the most visited model.
    pub preferred: Vec<usize>,
    pub birth_acceptance: AcceptanceCounter,
    pub death_acceptance: AcceptanceCounter,
    pub ar_steps: Vec<f64>,
    pub final_state: ChainState,
}

impl OrderSelection {
    pub fn share(&self, orders: &[usize]) -> f64 {
        let c = self.model_counts.get(&canonical_orders(orders)).copied().unwrap_or(0);
        c as f64 / self.iterations as f64
    }

    pub fn preferred_share(&self) -> f64 {
        self.share(&self.preferred)
    }

    /// `(canonical orders, count, share)` by decreasing share, ties toward
    /// smaller total order.
    pub fn table(&self) -> Vec<(Vec<usize>, usize, f64)> {
        let mut rows: Vec<_> = self
            .model_counts
            .iter()
            .map(|(o, &c)| (o.clone(), c, c as f64 / self.iterations as f64))
            .collect();
        rows.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.0.iter().sum::<usize>().cmp(&b.0.iter().sum::<usize>()))
                .then(a.0.cmp(&b.0))
        });
        rows
    }
}

/// Interleave reversible-jump moves with within-model sweeps from `state`.
///
/// The sampler's window start must be at least `p_max` so every model is
/// scored on the same observations.
pub fn run_order_chain<R: Rng + ?Sized>(
    sampler: &mut Sampler<'_>,
    mut state: ChainState,
    settings: &RjSettings,
    rng: &mut R,
) -> Result<OrderSelection> {
    settings.validate()?;
    let p_max = settings.p_max;
    if sampler.start() < p_max {
        return Err(Error::InsufficientHistory {
            needed: p_max,
            got: sampler.start(),
        });
    }
    if state.params.ar.iter().any(|c| c.len() < MIN_ORDER || c.len() > p_max) {
        return Err(Error::invalid(format!(
            "starting orders {:?} outside [1, {p_max}]",
            state.params.orders()
        )));
    }
    let y = sampler.y();
    let start = sampler.start();
    let priors = sampler.priors();
    let mut adapter = StepAdapter::new();
    let mut out = OrderSelection {
        g: state.params.g(),
        p_max,
        iterations: settings.iterations,
        visit_counts: BTreeMap::new(),
        model_counts: BTreeMap::new(),
        preferred: Vec::new(),
        birth_acceptance: AcceptanceCounter::default(),
        death_acceptance: AcceptanceCounter::default(),
        ar_steps: Vec::new(),
        final_state: state.clone(),
    };
    let total = settings.burnin + settings.iterations;
    for iteration in 0..total {
        let counted = iteration >= settings.burnin;
        if let Some(mv) = propose_order_move(&state.params.orders(), p_max, rng) {
            let prob = move_acceptance(&state, y, start, priors, p_max, &mv)?;
            let accept = rng.random::<f64>() < prob;
            if accept {
                state.params.ar = apply_move(&state.params.ar, &mv);
            }
            if counted {
                match mv.direction {
                    Direction::Birth { .. } => out.birth_acceptance.record(accept),
                    Direction::Death => out.death_acceptance.record(accept),
                }
            }
            // the move ignored (z, ξ); redraw them from their exact conditional
            sampler.refresh_latents(&mut state, rng);
        }
        for _ in 0..settings.sweeps_per_move {
            let outcome = sampler.sweep(&mut state, rng)?;
            if !counted && settings.adapt {
                adapter.update(&mut sampler.steps, &outcome);
            }
        }
        if let Err(message) = state.params.check_invariants() {
            return Err(Error::ChainFault { iteration, message });
        }
        if counted {
            let orders = state.params.orders();
            *out.model_counts.entry(canonical_orders(&orders)).or_default() += 1;
            *out.visit_counts.entry(orders).or_default() += 1;
        }
    }
    out.preferred = out.table()[0].0.clone();
    out.ar_steps = sampler.steps.clone();
    out.final_state = state;
    Ok(out)
}

/// Order selection for `g` components starting at orders 1, near
/// `settings.start` when given.
pub fn run_order_selection<R: Rng + ?Sized>(
    y: &[f64],
    priors: &PriorConfig,
    settings: &RjSettings,
    rng: &mut R,
) -> Result<OrderSelection> {
    settings.validate()?;
    let g = priors.g();
    let mut sampler = Sampler::new(y, settings.p_max, priors)?;
    if let Some(steps) = &settings.ar_steps {
        if steps.len() != g {
            return Err(Error::Usage(format!("need {g} random-walk steps, got {}", steps.len())));
        }
        sampler.steps = steps.clone();
    }
    let orders = vec![MIN_ORDER; g];
    let state = match &settings.start {
        Some(hint) => sampler.initialize_near(hint, &orders, rng)?,
        None => sampler.initialize(&orders, rng)?,
    };
    run_order_chain(&mut sampler, state, settings, rng)
}
