//! Posterior summaries: HDIs, effective sample size and relabelling for
//! reports.

use crate::error::{Error, Result};
use crate::sampler::{ChainTrace, Params};

/// Fewest draws accepted by the interval and ESS estimators.
pub const MIN_DRAWS: usize = 100;

fn require_draws(n: usize) -> Result<()> {
    if n < MIN_DRAWS {
        return Err(Error::Data(format!(
            "{n} draws given, at least {MIN_DRAWS} are required"
        )));
    }
    Ok(())
}

/// Shortest interval covering `⌈mass·N⌉` of the sorted draws.
pub fn hdi(draws: &[f64], mass: f64) -> Result<(f64, f64)> {
    require_draws(draws.len())?;
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::invalid(format!("HDI mass {mass} outside (0, 1]")));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::Data("draws contain non-finite values".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let width = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (lo, _) = (0..=n - width)
        .map(|i| (i, sorted[i + width - 1] - sorted[i]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one window");
    Ok((sorted[lo], sorted[lo + width - 1]))
}

/// Effective sample size by Geyer's initial positive sequence.
///
/// A constant sequence has ESS 0. The result never exceeds the number of
/// draws.
pub fn effective_sample_size(draws: &[f64]) -> Result<f64> {
    require_draws(draws.len())?;
    let n = draws.len();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = draws.iter().map(|d| d - mean).collect();
    let var = centred.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Ok(0.0);
    }
    let rho = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        // enforce a monotone sequence
        let pair = pair.min(previous);
        sum += pair;
        previous = pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Ok((n as f64 / tau).min(n as f64))
}

/// Permutations of `0..g` that map components only onto components of the
/// same order.
fn order_preserving_permutations(orders: &[usize]) -> Vec<Vec<usize>> {
    fn extend(orders: &[usize], current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let k = current.len();
        if k == orders.len() {
            out.push(current.clone());
            return;
        }
        for j in 0..orders.len() {
            if !used[j] && orders[j] == orders[k] {
                used[j] = true;
                current.push(j);
                extend(orders, current, used, out);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(orders, &mut Vec::new(), &mut vec![false; orders.len()], &mut out);
    out
}

/// `result[k] = draw[perm[k]]` for every component-indexed block.
pub fn permute_params(p: &Params, perm: &[usize]) -> Params {
    Params {
        weights: perm.iter().map(|&j| p.weights[j]).collect(),
        means: perm.iter().map(|&j| p.means[j]).collect(),
        precisions: perm.iter().map(|&j| p.precisions[j]).collect(),
        ar: perm.iter().map(|&j| p.ar[j].clone()).collect(),
        dofs: perm.iter().map(|&j| p.dofs[j]).collect(),
        lambda: p.lambda,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Relabelled {
    pub draws: Vec<Params>,
    /// Permutation applied to each draw.
    pub permutations: Vec<Vec<usize>>,
}

impl Relabelled {
    pub fn identity_share(&self) -> f64 {
        let id = self
            .permutations
            .iter()
            .filter(|p| p.iter().enumerate().all(|(i, j)| i == *j))
            .count();
        id as f64 / self.permutations.len().max(1) as f64
    }
}

fn relabel_key(p: &Params, k: usize) -> [f64; 2] {
    [p.means[k], -0.5 * p.precisions[k].ln()]
}

/// Inverse variances of `(μ_k, ln σ_k)` across the draws, per component;
/// zero for coordinates that never move.
fn coordinate_weights(draws: &[Params]) -> Vec<[f64; 2]> {
    let g = draws[0].g();
    let n = draws.len() as f64;
    (0..g)
        .map(|k| {
            let mut w = [0.0; 2];
            for (c, wc) in w.iter_mut().enumerate() {
                let mean = draws.iter().map(|d| relabel_key(d, k)[c]).sum::<f64>() / n;
                let var = draws
                    .iter()
                    .map(|d| (relabel_key(d, k)[c] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                *wc = if var > 0.0 { 1.0 / var } else { 0.0 };
            }
            w
        })
        .collect()
}

/// Align each draw's labels with the first draw by minimising the distance
/// of `(μ_k, ln σ_k)`, each coordinate scaled by its spread across the
/// trace for the reference component (so a barely identified mean cannot
/// swamp a well separated scale). Only components of equal order swap.
pub fn relabel_for_reporting(draws: &[Params]) -> Relabelled {
    let Some(reference) = draws.first() else {
        return Relabelled {
            draws: Vec::new(),
            permutations: Vec::new(),
        };
    };
    let weights = coordinate_weights(draws);
    let perms = order_preserving_permutations(&reference.orders());
    let mut out = Relabelled {
        draws: Vec::with_capacity(draws.len()),
        permutations: Vec::with_capacity(draws.len()),
    };
    for d in draws {
        let best = perms
            .iter()
            .map(|perm| {
                let cost: f64 = perm
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| {
                        let r = relabel_key(reference, k);
                        let x = relabel_key(d, j);
                        (0..2).map(|c| weights[k][c] * (x[c] - r[c]).powi(2)).sum::<f64>()
                    })
                    .sum();
                (perm, cost)
            })
            // ties keep the earliest permutation (the identity comes first)
            .fold(None::<(&Vec<usize>, f64)>, |best, (perm, cost)| match best {
                Some((_, c)) if c <= cost => best,
                _ => Some((perm, cost)),
            })
            .map(|(perm, _)| perm.clone())
            .expect("identity permutation always exists");
        out.draws.push(permute_params(d, &best));
        out.permutations.push(best);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub hdi_lower: f64,
    pub hdi_upper: f64,
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
    pub weight_acceptance: f64,
    pub ar_acceptance: Vec<f64>,
    pub dof_acceptance: Vec<f64>,
    pub relabelled: bool,
    /// Share of draws left with their original labels.
    pub identity_share: f64,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub fn summarize_column(name: &str, values: &[f64], mass: f64) -> Result<ParameterSummary> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (hdi_lower, hdi_upper) = hdi(values, mass)?;
    Ok(ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        hdi_lower,
        hdi_upper,
        ess: effective_sample_size(values)?,
    })
}

/// Per-parameter summaries with `mass` HDIs, optionally after relabelling.
pub fn summarize(trace: &ChainTrace, mass: f64, relabel: bool) -> Result<PosteriorSummary> {
    require_draws(trace.len())?;
    let (draws, identity_share) = if relabel {
        let r = relabel_for_reporting(&trace.draws);
        let share = r.identity_share();
        (r.draws, share)
    } else {
        (trace.draws.clone(), 1.0)
    };
    let names = trace.parameter_names();
    let rows: Vec<Vec<f64>> = draws.iter().map(crate::sampler::flatten_params).collect();
    let parameters = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            summarize_column(name, &col, mass)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary {
        parameters,
        weight_acceptance: trace.weight_acceptance.rate(),
        ar_acceptance: trace.ar_acceptance.iter().map(|a| a.rate()).collect(),
        dof_acceptance: trace.dof_acceptance.iter().map(|a| a.rate()).collect(),
        relabelled: relabel,
        identity_share,
    })
}
