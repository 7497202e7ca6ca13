//! The five batch commands, driven by a merged [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{NuCenter, RunConfig};
use crate::data::{format_value, load_series, write_series, SeriesData};
use crate::diagnostics::{summarize, PosteriorSummary};
use crate::error::{Error, Result};
use crate::evidence::{run_pipeline, EvidenceReport, EvidenceSettings, PipelineSettings};
use crate::model::{self, simulate_series, Location, TMarSpec};
use crate::order::{run_order_selection, OrderSelection, RjSettings};
use crate::output::{
    evidence_entries, join_orders, read_trace, selection_table_text, summary_entries, write_key_values,
    write_plot_data, write_trace, KeyValues, DEFAULT_BINS,
};
use crate::prior::{default_priors, PriorConfig};
use crate::sampler::{pilot_nu_centres, run_gibbs, ChainTrace, GibbsSettings, Params};

pub const DEFAULT_FIT_ITERATIONS: usize = 20_000;
pub const DEFAULT_FIT_BURNIN: usize = 2_000;
pub const DEFAULT_RJ_ITERATIONS: usize = 10_000;
pub const DEFAULT_RJ_BURNIN: usize = 1_000;
pub const DEFAULT_PILOT_ITERATIONS: usize = 3_000;
pub const DEFAULT_SIM_LENGTH: usize = 500;

/// Built-in simulation models.
pub const PRESETS: [&str; 2] = ["tmar-3-211", "ar1"];

pub fn preset(name: &str) -> Result<TMarSpec> {
    match name {
        "tmar-3-211" => Ok(TMarSpec::three_component_benchmark()),
        "ar1" => TMarSpec::with_means(vec![1.0], vec![0.0], vec![1.0], vec![vec![0.6]], vec![10.0]),
        other => Err(Error::Usage(format!(
            "unknown preset '{other}' (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

/// Random stream for component count `g` under `seed`.
pub fn stream_rng(seed: u64, g: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(g as u64);
    rng
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn kv(entries: &mut KeyValues, key: impl Into<String>, value: impl ToString) {
    entries.push((key.into(), value.to_string()));
}

pub fn load_data(cfg: &RunConfig) -> Result<SeriesData> {
    load_series(cfg.data()?, cfg.column, cfg.transform())
}

// ------------------------------------------------------------------ simulate

#[derive(Clone, Debug)]
pub struct SimulateOutput {
    pub series_path: PathBuf,
    pub truth_path: PathBuf,
    pub values: Vec<f64>,
    pub stable: bool,
}

fn custom_spec(cfg: &RunConfig) -> Result<TMarSpec> {
    let missing = |k: &str| Error::Usage(format!("custom simulation needs '{k}' (or name a preset)"));
    let weights = cfg.sim_weights.clone().ok_or_else(|| missing("sim_weights"))?;
    let g = weights.len();
    let means = cfg.sim_means.clone().unwrap_or_else(|| vec![0.0; g]);
    let scales = cfg.sim_scales.clone().ok_or_else(|| missing("sim_scales"))?;
    let ar = cfg.sim_ar.clone().ok_or_else(|| missing("sim_ar"))?;
    let dofs = cfg.sim_dofs.clone().ok_or_else(|| missing("sim_dofs"))?;
    // unit-root or explosive components have no mean; treat the value as a shift
    let locations = means
        .iter()
        .zip(&ar)
        .map(|(m, c)| {
            if (1.0 - c.iter().sum::<f64>()).abs() < 1e-12 {
                Location::Shift(*m)
            } else {
                Location::Mean(*m)
            }
        })
        .collect();
    TMarSpec::new(weights, locations, scales, ar, dofs)
}

pub fn truth_entries(spec: &TMarSpec, stable: bool) -> KeyValues {
    let mut e = Vec::new();
    kv(&mut e, "g", spec.g());
    kv(&mut e, "orders", join_orders(&spec.orders()));
    kv(&mut e, "stable", stable);
    if !stable {
        kv(&mut e, "warning", "model fails the stability condition; series may diverge");
    }
    for k in 0..spec.g() {
        let c = k + 1;
        kv(&mut e, format!("pi_{c}"), format_value(spec.weights()[k]));
        match spec.locations()[k] {
            Location::Mean(m) => kv(&mut e, format!("mu_{c}"), format_value(m)),
            Location::Shift(s) => kv(&mut e, format!("shift_{c}"), format_value(s)),
        }
        kv(&mut e, format!("sigma_{c}"), format_value(spec.scales()[k]));
        kv(&mut e, format!("tau_{c}"), format_value(spec.precision(k)));
        for (i, phi) in spec.ar()[k].iter().enumerate() {
            kv(&mut e, format!("phi_{c}_{}", i + 1), format_value(*phi));
        }
        kv(&mut e, format!("nu_{c}"), format_value(spec.dofs()[k]));
    }
    e
}

/// Simulate a series from a preset or a custom model.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let out = cfg.output()?;
    let n = cfg.n.unwrap_or(DEFAULT_SIM_LENGTH);
    if n == 0 {
        return Err(Error::Usage("series length n must be positive".into()));
    }
    let spec = match &cfg.preset {
        Some(name) => preset(name)?,
        None => custom_spec(cfg)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_series(&spec, n, cfg.sim_burnin.unwrap_or(model::MIN_SIMULATION_BURNIN), &mut rng)?;
    create_dir(out)?;
    let series_path = out.join("series.txt");
    write_series(&series_path, &sim.values)?;
    let mut truth = truth_entries(&spec, sim.stable);
    kv(&mut truth, "preset", cfg.preset.as_deref().unwrap_or("custom"));
    kv(&mut truth, "n", n);
    kv(&mut truth, "seed", seed);
    let truth_path = out.join("truth.txt");
    write_key_values(&truth_path, &truth)?;
    Ok(SimulateOutput {
        series_path,
        truth_path,
        values: sim.values,
        stable: sim.stable,
    })
}

// --------------------------------------------------------------------- priors

/// Default priors for `g` components. With `nu_center = auto` the dof priors
/// are centred on profile estimates from a pilot run at `pilot_orders` on
/// the window starting at `window_start`; the pilot draw those estimates
/// belong to is returned as a starting point, so that the main run's labels
/// match the centres.
pub fn build_priors(
    y: &[f64],
    g: usize,
    pilot_orders: &[usize],
    window_start: Option<usize>,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(PriorConfig, Option<Params>)> {
    let var = cfg.nu_target_var();
    let fix = cfg.fix_means_to_zero.unwrap_or(false);
    let finish = |mut p: PriorConfig| -> Result<PriorConfig> {
        p.fix_means_to_zero = fix;
        p.validate()?;
        Ok(p)
    };
    match cfg.nu_center() {
        NuCenter::Fixed(c) => Ok((finish(default_priors(y, g, &c, var)?)?, None)),
        NuCenter::Auto => {
            let provisional = finish(default_priors(y, g, &[10.0], var)?)?;
            let total = cfg.pilot_iterations.unwrap_or(DEFAULT_PILOT_ITERATIONS);
            let mut settings = GibbsSettings::new(total, total / 3);
            settings.window_start = window_start;
            let (best, _) = pilot_nu_centres(y, pilot_orders, &provisional, &settings, rng)?;
            let priors = finish(default_priors(y, g, &best.dofs, var)?)?;
            Ok((priors, Some(best)))
        }
    }
}

fn prior_entries(p: &PriorConfig) -> KeyValues {
    let mut e = Vec::new();
    kv(&mut e, "prior.zeta", p.zeta);
    kv(&mut e, "prior.kappa", p.kappa);
    kv(&mut e, "prior.a", p.a);
    kv(&mut e, "prior.b", p.b);
    kv(&mut e, "prior.c", p.c);
    kv(&mut e, "prior.fix_means_to_zero", p.fix_means_to_zero);
    for k in 0..p.g() {
        kv(&mut e, format!("prior.nu_shape_{}", k + 1), p.nu_shape[k]);
        kv(&mut e, format!("prior.nu_rate_{}", k + 1), p.nu_rate[k]);
    }
    e
}

// ----------------------------------------------------------------------- fit

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub trace: ChainTrace,
    pub summary: PosteriorSummary,
    pub priors: PriorConfig,
}

fn fit_orders(cfg: &RunConfig) -> Result<Vec<usize>> {
    let orders = cfg
        .orders
        .clone()
        .ok_or_else(|| Error::Usage("fit needs component orders (--orders 2,1,1)".into()))?;
    if let Some(g) = &cfg.g {
        if g.len() != 1 || g[0] != orders.len() {
            return Err(Error::Usage(format!(
                "g = {g:?} disagrees with {} orders",
                orders.len()
            )));
        }
    }
    Ok(orders)
}

/// Fixed-order posterior sampling; writes `trace.csv` and `summary.txt`.
pub fn fit(cfg: &RunConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let out = cfg.output()?;
    let orders = fit_orders(cfg)?;
    let g = orders.len();
    let mut settings = GibbsSettings::new(
        cfg.iterations(DEFAULT_FIT_ITERATIONS),
        cfg.burnin(DEFAULT_FIT_BURNIN),
    );
    settings.ar_steps = cfg.gamma.clone().map(|s| if s.len() == 1 { vec![s[0]; g] } else { s });
    settings.adapt = cfg.adapt.unwrap_or(true);
    settings.validate()?;
    let data = load_data(cfg)?;
    let y = data.values();
    let mut rng = stream_rng(seed, g);
    let (priors, start) = build_priors(y, g, &orders, None, cfg, &mut rng)?;
    settings.start = start;
    let trace = run_gibbs(y, &orders, &priors, &settings, &mut rng)?;
    let summary = summarize(&trace, cfg.hdi_mass(), cfg.relabel.unwrap_or(true))?;

    create_dir(out)?;
    let trace_path = out.join("trace.csv");
    write_trace(&trace_path, &trace)?;
    let mut entries = Vec::new();
    kv(&mut entries, "command", "fit");
    kv(&mut entries, "g", g);
    kv(&mut entries, "orders", join_orders(&orders));
    kv(&mut entries, "iterations", settings.iterations);
    kv(&mut entries, "burnin", settings.burnin);
    kv(&mut entries, "draws", trace.len());
    kv(&mut entries, "seed", seed);
    kv(&mut entries, "hdi_mass", cfg.hdi_mass());
    for (k, s) in trace.ar_steps.iter().enumerate() {
        kv(&mut entries, format!("gamma_{}", k + 1), s);
    }
    entries.extend(prior_entries(&priors));
    entries.extend(summary_entries(&summary));
    let summary_path = out.join("summary.txt");
    write_key_values(&summary_path, &entries)?;
    Ok(FitOutput {
        trace_path,
        summary_path,
        trace,
        summary,
        priors,
    })
}

// -------------------------------------------------------------------- select

fn g_list(cfg: &RunConfig) -> Result<Vec<usize>> {
    cfg.g
        .clone()
        .ok_or_else(|| Error::Usage("a list of component counts is required (--g 2,3)".into()))
}

fn rj_settings(cfg: &RunConfig) -> Result<RjSettings> {
    let total = cfg.iterations(DEFAULT_RJ_ITERATIONS + DEFAULT_RJ_BURNIN);
    let burnin = cfg.burnin(DEFAULT_RJ_BURNIN.min(total / 2));
    if total <= burnin {
        return Err(Error::Usage(format!(
            "iterations ({total}) must exceed burnin ({burnin})"
        )));
    }
    let mut s = RjSettings::new(total - burnin, burnin, cfg.p_max());
    if let Some(n) = cfg.sweeps_per_move {
        s.sweeps_per_move = n;
    }
    s.ar_steps = cfg.gamma.clone();
    s.adapt = cfg.adapt.unwrap_or(true);
    s.validate()?;
    Ok(s)
}

fn selection_priors(
    y: &[f64],
    g: usize,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(PriorConfig, Option<Params>)> {
    build_priors(y, g, &vec![1; g], Some(cfg.p_max()), cfg, rng)
}

#[derive(Clone, Debug)]
pub struct SelectOutput {
    pub g: usize,
    pub table_path: PathBuf,
    pub selection: OrderSelection,
}

/// Reversible-jump order selection for every configured `g`; writes
/// `select_g<g>.tsv` per component count.
pub fn select(cfg: &RunConfig) -> Result<Vec<SelectOutput>> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let out = cfg.output()?;
    let gs = g_list(cfg)?;
    let mut settings = rj_settings(cfg)?;
    let data = load_data(cfg)?;
    let y = data.values();
    create_dir(out)?;
    let mut results = Vec::new();
    for g in gs {
        let mut rng = stream_rng(seed, g);
        let (priors, start) = selection_priors(y, g, cfg, &mut rng)?;
        settings.start = start;
        if let Some(s) = &cfg.gamma {
            settings.ar_steps = Some(if s.len() == 1 { vec![s[0]; g] } else { s.clone() });
        }
        let selection = run_order_selection(y, &priors, &settings, &mut rng)?;
        let table_path = out.join(format!("select_g{g}.tsv"));
        fs::write(&table_path, selection_table_text(&selection)).map_err(|e| Error::io(&table_path, e))?;
        results.push(SelectOutput {
            g,
            table_path,
            selection,
        });
    }
    Ok(results)
}

// ------------------------------------------------------------------ evidence

#[derive(Clone, Debug)]
pub struct EvidenceOutcome {
    pub g: usize,
    pub report_path: PathBuf,
    /// `Err` when any stage failed; such entries are left out of the ranking.
    pub result: std::result::Result<(OrderSelection, EvidenceReport), String>,
}

#[derive(Clone, Debug)]
pub struct EvidenceOutput {
    pub outcomes: Vec<EvidenceOutcome>,
    /// `(g, orders, marginal log-likelihood)` by decreasing evidence.
    pub ranking: Vec<(usize, Vec<usize>, f64)>,
    pub verdict_path: PathBuf,
}

fn evidence_for_g(
    y: &[f64],
    g: usize,
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(OrderSelection, EvidenceReport)> {
    let mut rng = stream_rng(seed, g);
    let (priors, start) = selection_priors(y, g, cfg, &mut rng)?;
    let mut selection = rj_settings(cfg)?;
    selection.start = start.clone();
    if let Some(s) = &cfg.gamma {
        selection.ar_steps = Some(if s.len() == 1 { vec![s[0]; g] } else { s.clone() });
    }
    let mut gibbs = GibbsSettings::new(
        cfg.iterations(DEFAULT_FIT_ITERATIONS),
        cfg.burnin(DEFAULT_FIT_BURNIN),
    );
    gibbs.adapt = cfg.adapt.unwrap_or(true);
    gibbs.start = start;
    gibbs.validate()?;
    let mut evidence = EvidenceSettings::default();
    if let Some(n) = cfg.reduced_iterations {
        evidence.reduced_iterations = n;
        evidence.reduced_burnin = n / 10;
    }
    let settings = PipelineSettings {
        selection,
        gibbs,
        evidence,
    };
    let result = run_pipeline(y, &priors, &settings, &mut rng)?;
    let table_path = out.join(format!("select_g{g}.tsv"));
    fs::write(&table_path, selection_table_text(&result.selection))
        .map_err(|e| Error::io(&table_path, e))?;
    write_trace(&out.join(format!("trace_g{g}.csv")), &result.trace)?;
    Ok((result.selection, result.report))
}

/// Full pipeline per `g` (run concurrently, one random stream each), per-g
/// reports and a ranked `verdict.txt`.
pub fn evidence(cfg: &RunConfig) -> Result<EvidenceOutput> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let out = cfg.output()?.to_path_buf();
    let gs = g_list(cfg)?;
    rj_settings(cfg)?;
    let data = load_data(cfg)?;
    let y = data.values();
    create_dir(&out)?;

    let results: Vec<(usize, Result<(OrderSelection, EvidenceReport)>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = gs
            .iter()
            .map(|&g| {
                let out = &out;
                (g, scope.spawn(move || evidence_for_g(y, g, cfg, seed, out)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(g, h)| {
                let r = h
                    .join()
                    .unwrap_or_else(|_| Err(Error::numerical(format!("worker for g = {g} panicked"))));
                (g, r)
            })
            .collect()
    });

    let mut outcomes = Vec::new();
    let mut ranking = Vec::new();
    for (g, r) in results {
        let report_path = out.join(format!("evidence_g{g}.txt"));
        let mut entries = Vec::new();
        match &r {
            Ok((selection, report)) => {
                kv(&mut entries, "status", "ok");
                kv(&mut entries, "preferred_share", selection.preferred_share());
                entries.extend(evidence_entries(report));
                ranking.push((g, report.orders.clone(), report.marginal_ln_likelihood));
            }
            Err(e) => {
                kv(&mut entries, "status", "invalid");
                kv(&mut entries, "g", g);
                kv(&mut entries, "error", e);
            }
        }
        write_key_values(&report_path, &entries)?;
        outcomes.push(EvidenceOutcome {
            g,
            report_path,
            result: r.map_err(|e| e.to_string()),
        });
    }
    ranking.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut verdict = String::new();
    for (rank, (g, orders, ml)) in ranking.iter().enumerate() {
        verdict.push_str(&format!(
            "{} g={g} orders={} marginal_ln_likelihood={ml:.4}\n",
            rank + 1,
            join_orders(orders)
        ));
    }
    for o in outcomes.iter().filter(|o| o.result.is_err()) {
        verdict.push_str(&format!("- g={} invalid\n", o.g));
    }
    let verdict_path = out.join("verdict.txt");
    fs::write(&verdict_path, &verdict).map_err(|e| Error::io(&verdict_path, e))?;
    Ok(EvidenceOutput {
        outcomes,
        ranking,
        verdict_path,
    })
}

// -------------------------------------------------------------------- report

/// Plot data for every column of a trace file.
pub fn report(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let trace = cfg
        .trace
        .as_deref()
        .ok_or_else(|| Error::Usage("report needs a trace file (--trace)".into()))?;
    let out = cfg.output()?;
    let table = read_trace(trace)?;
    write_plot_data(&table, out, cfg.bins.unwrap_or(DEFAULT_BINS))
}
