use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use ptg_core::assignment::{run_restart, PeriodicTable, PtgRun};
use ptg_core::data::{CompoundDataset, ElementTable};
use ptg_core::evaluation::{cross_validate, enrichment, Descriptor, EnrichmentReport, EvalReport};
use ptg_core::landscapes::{landscape, table_svg};
use ptg_core::layouts::NodeSet;
use ptg_core::sampler::{LatentState, Model};
use ptg_core::PtgError;

use crate::config::RunConfig;
use crate::manifest::{EvaluationSummary, Manifest, RankedDescriptor, RestartEntry};

pub const CONFIG_FILE: &str = "config.toml";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    /// Sets `T`; burn-in becomes `T / 2`.
    pub iterations: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.chain.seed = s;
        }
        if let Some(r) = self.restarts {
            cfg.run.restarts = r;
        }
        if let Some(t) = self.iterations {
            cfg.chain.iterations = t;
            cfg.chain.burn_in = t / 2;
        }
        if let Some(o) = &self.out {
            cfg.run.out = o.clone();
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("cannot resolve {}", p.display()))
}

fn load_elements(cfg: &RunConfig) -> Result<ElementTable> {
    let path = &cfg.data.elements;
    let raw = ElementTable::load(path, &cfg.load_options())
        .with_context(|| format!("loading element data {}", path.display()))?;
    Ok(raw.standardize()?)
}

fn restart_stem(r: usize) -> String {
    format!("restart_{r}")
}

/// Run every restart and write tables, traces, states and the manifest.
pub fn generate(mut cfg: RunConfig, overrides: &Overrides) -> Result<PathBuf> {
    overrides.apply(&mut cfg);
    cfg.validate()?;
    // Inputs are loaded before anything is created on disk.
    let elements = load_elements(&cfg)?;
    let (coarse, fine) = cfg.layout.build()?;
    fine.ensure_capacity(elements.n_elements())?;
    cfg.data.elements = absolute(&cfg.data.elements)?;
    if let Some(c) = &cfg.data.compounds {
        cfg.data.compounds = Some(absolute(c)?);
    }
    let out = cfg.run.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    write(&out.join(CONFIG_FILE), cfg.to_toml()?)?;
    execute(&cfg, &out, &elements, &coarse, &fine, false)?;
    Ok(out)
}

/// Continue an interrupted run from its chain checkpoints.
pub fn resume(out: &Path) -> Result<PathBuf> {
    let cfg = RunConfig::load(&out.join(CONFIG_FILE))?;
    cfg.validate()?;
    let elements = load_elements(&cfg)?;
    let (coarse, fine) = cfg.layout.build()?;
    execute(&cfg, out, &elements, &coarse, &fine, true)?;
    Ok(out.to_path_buf())
}

fn execute(
    cfg: &RunConfig,
    out: &Path,
    elements: &ElementTable,
    coarse: &NodeSet,
    fine: &NodeSet,
    resume: bool,
) -> Result<()> {
    let started = Instant::now();
    let d = elements.n_features();
    let ptg = cfg.ptg_config(d, Some(out.join("checkpoints")));
    ptg.validate()?;
    let hash = cfg.hash()?;
    std::fs::create_dir_all(out.join("checkpoints"))?;

    let mut manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash.clone(),
        base_seed: cfg.chain.seed,
        layout: serde_json::to_string(&cfg.layout)?,
        n_elements: elements.n_elements(),
        n_features: d,
        ..Manifest::default()
    };
    for (stage, nodes) in [("coarse", coarse), ("fine", fine)] {
        let m = Model::new(elements.features().clone(), nodes.clone(), ptg.priors, ptg.jitter)?;
        manifest.jitter.insert(format!("{stage}_c_g"), m.gram_g().jitter());
        manifest.jitter.insert(format!("{stage}_c_r"), m.gram_r().jitter());
    }

    info!(
        "running {} restart(s) of {} sweeps on {} worker(s)",
        ptg.restarts,
        ptg.iterations,
        rayon::current_num_threads()
    );
    let results: Vec<(usize, Result<PtgRun, PtgError>, f64)> = (0..ptg.restarts)
        .into_par_iter()
        .map(|r| {
            let t = Instant::now();
            let res = run_restart(elements, coarse, fine, &ptg, r, &hash, resume);
            (r, res, t.elapsed().as_secs_f64())
        })
        .collect();

    let mut ok: Vec<&PtgRun> = results.iter().filter_map(|(_, r, _)| r.as_ref().ok()).collect();
    ok.sort_by(|a, b| {
        let (pa, pb) = (&a.table.provenance, &b.table.provenance);
        pb.log_likelihood.total_cmp(&pa.log_likelihood).then(pa.restart.cmp(&pb.restart))
    });
    let rank_of = |r: usize| ok.iter().position(|run| run.table.provenance.restart == r).map(|i| i + 1);

    let mut first_error = None;
    for (r, res, secs) in &results {
        let seed = ptg.restart_seed(*r);
        let entry = match res {
            Ok(run) => {
                write_run(out, run)?;
                let p = &run.table.provenance;
                RestartEntry {
                    restart: *r,
                    seed,
                    status: "ok".into(),
                    error: None,
                    log_likelihood: Some(p.log_likelihood),
                    rank: rank_of(*r),
                    r_acceptance_rate: Some(p.r_acceptance_rate),
                    fine_tune_best_iteration: Some(p.fine_tune_best_iteration),
                    seconds: *secs,
                }
            }
            Err(e) => {
                warn!("restart {r} failed: {e}");
                if first_error.is_none() {
                    first_error = Some(PtgError::Stage {
                        stage: "restart",
                        seed,
                        source: Box::new(clone_error(e)),
                    });
                }
                RestartEntry {
                    restart: *r,
                    seed,
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    log_likelihood: None,
                    rank: None,
                    r_acceptance_rate: None,
                    fine_tune_best_iteration: None,
                    seconds: *secs,
                }
            }
        };
        manifest.restarts.push(entry);
    }
    manifest
        .timings
        .insert("generate_seconds".into(), started.elapsed().as_secs_f64());
    manifest.save(out)?;
    match first_error {
        Some(e) => Err(anyhow::Error::new(e).context(format!(
            "{} of {} restarts failed; partial outputs kept in {}",
            results.iter().filter(|(_, r, _)| r.is_err()).count(),
            results.len(),
            out.display()
        ))),
        None => Ok(()),
    }
}

/// `PtgError` is not `Clone`; keep the numerical/input distinction and message.
fn clone_error(e: &PtgError) -> PtgError {
    if e.is_numerical() {
        PtgError::NonFinite(e.to_string())
    } else {
        PtgError::Config(e.to_string())
    }
}

fn write_run(out: &Path, run: &PtgRun) -> Result<()> {
    let stem = restart_stem(run.table.provenance.restart);
    let mut csv = Vec::new();
    run.table.write_csv(&mut csv)?;
    write(&out.join("tables").join(format!("{stem}.csv")), csv)?;
    write(&out.join("tables").join(format!("{stem}.json")), run.table.to_json()? + "\n")?;
    write(&out.join("tables").join(format!("{stem}.svg")), table_svg(&run.table, None)?)?;
    let mut trace = Vec::new();
    run.chain.write_trace_csv(&mut trace)?;
    write(&out.join("traces").join(format!("{stem}.csv")), trace)?;
    write(
        &out.join("states").join(format!("{stem}.json")),
        serde_json::to_string(&run.state)? + "\n",
    )?;
    Ok(())
}

/// Tables in a run directory, by restart index.
fn load_tables(out: &Path) -> Result<Vec<PeriodicTable>> {
    let dir = out.join("tables");
    let mut tables = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path)?;
                tables.push(
                    PeriodicTable::from_json(&text)
                        .with_context(|| format!("malformed table {}", path.display()))?,
                );
            }
        }
    }
    if tables.is_empty() {
        return Err(PtgError::Config(format!("no tables found in {}", dir.display())).into());
    }
    tables.sort_by_key(|t| t.provenance.restart);
    Ok(tables)
}

/// Cross-validate every table and the standard table; rank by MAE.
pub fn evaluate(out: &Path, compounds: Option<&Path>) -> Result<Vec<RankedDescriptor>> {
    let started = Instant::now();
    let cfg = RunConfig::load(&out.join(CONFIG_FILE))?;
    let tables = load_tables(out)?;
    let compounds = match compounds {
        Some(p) => p.to_path_buf(),
        None => cfg
            .data
            .compounds
            .clone()
            .ok_or_else(|| PtgError::Config("no compounds file given or configured".into()))?,
    };
    let elements = ElementTable::load(&cfg.data.elements, &cfg.load_options())
        .with_context(|| format!("loading element data {}", cfg.data.elements.display()))?;
    let data = CompoundDataset::load(&compounds, &elements)
        .with_context(|| format!("loading compounds {}", compounds.display()))?;
    let cv = cfg.cv_config();

    let mut descriptors = Vec::new();
    for t in &tables {
        let name = restart_stem(t.provenance.restart);
        descriptors.push((Some(t.provenance.restart), Descriptor::from_table(name, t)?));
    }
    descriptors.push((None, Descriptor::standard(&elements)?));

    let dir = out.join("evaluation");
    let mut reports: Vec<(Option<usize>, EvalReport)> = Vec::new();
    for (restart, d) in &descriptors {
        info!("cross-validating {}", d.name);
        let rep = cross_validate(&data, d, &cv)?;
        write(&dir.join(format!("{}.json", d.name)), rep.to_json()? + "\n")?;
        let mut csv = Vec::new();
        rep.write_errors_csv(&mut csv)?;
        write(&dir.join(format!("{}_errors.csv", d.name)), csv)?;
        reports.push((*restart, rep));
    }

    let mut ranking: Vec<RankedDescriptor> = reports
        .iter()
        .map(|(restart, r)| RankedDescriptor {
            descriptor: r.descriptor.clone(),
            restart: *restart,
            mae_mean: r.mae_mean,
            mae_std: r.mae_std,
            rmse_mean: r.rmse_mean,
            rmse_std: r.rmse_std,
        })
        .collect();
    ranking.sort_by(|a, b| a.mae_mean.total_cmp(&b.mae_mean).then(a.descriptor.cmp(&b.descriptor)));
    let mut csv = String::from("rank,descriptor,mae_mean,mae_std,rmse_mean,rmse_std\n");
    for (i, r) in ranking.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            r.descriptor,
            r.mae_mean,
            r.mae_std,
            r.rmse_mean,
            r.rmse_std
        ));
    }
    write(&dir.join("ranking.csv"), csv)?;

    let best = ranking.iter().find_map(|r| r.restart);
    if let Some(b) = best {
        let best_rep = &reports.iter().find(|(r, _)| *r == Some(b)).expect("ranked").1;
        let std_rep = &reports.last().expect("standard report").1;
        let e = enrichment(best_rep, std_rep, &cfg.thresholds(), &data)?;
        for (tag, rows) in [(restart_stem(b), &e.rows_a), ("standard".to_string(), &e.rows_b)] {
            let mut csv = Vec::new();
            EnrichmentReport::write_csv(rows, &mut csv)?;
            write(&dir.join(format!("enrichment_{tag}.csv")), csv)?;
        }
    }

    let mut manifest = Manifest::load(out)?;
    manifest.selected_table = best;
    manifest.evaluation = Some(EvaluationSummary {
        compounds: compounds.display().to_string(),
        n_compounds: data.len(),
        ranking: ranking.clone(),
    });
    manifest
        .timings
        .insert("evaluate_seconds".into(), started.elapsed().as_secs_f64());
    manifest.save(out)?;
    Ok(ranking)
}

/// Landscapes of one feature, or all with `"all"`, for the chosen restart.
/// Without `restart` the evaluated best table is used, else the most likely one.
pub fn landscapes(out: &Path, feature: &str, restart: Option<usize>) -> Result<Vec<PathBuf>> {
    let cfg = RunConfig::load(&out.join(CONFIG_FILE))?;
    let manifest = Manifest::load(out)?;
    let elements = load_elements(&cfg)?;
    let std = elements.standardization().expect("standardized on load");
    let names = elements.feature_names();
    let features: Vec<usize> = if feature == "all" {
        (0..names.len()).collect()
    } else {
        match elements.feature_index(feature) {
            Some(d) => vec![d],
            None => {
                return Err(PtgError::Config(format!(
                    "unknown feature `{feature}`; valid names: all, {}",
                    names.join(", ")
                ))
                .into())
            }
        }
    };
    let restart = match restart.or(manifest.selected_table) {
        Some(r) => r,
        None => manifest
            .restarts
            .iter()
            .find(|e| e.rank == Some(1))
            .map(|e| e.restart)
            .ok_or_else(|| PtgError::Config("run has no successful restart".into()))?,
    };
    let stem = restart_stem(restart);
    let table_path = out.join("tables").join(format!("{stem}.json"));
    let table = PeriodicTable::from_json(
        &std::fs::read_to_string(&table_path)
            .with_context(|| format!("cannot read {}", table_path.display()))?,
    )?;
    let state_path = out.join("states").join(format!("{stem}.json"));
    let state: LatentState = serde_json::from_str(
        &std::fs::read_to_string(&state_path)
            .with_context(|| format!("cannot read {}", state_path.display()))?,
    )?;
    state.validate()?;

    let dir = out.join("landscapes").join(&stem);
    let mut written = Vec::new();
    for d in features {
        let l = landscape(d, &state, &table.nodes, std)?;
        let mut csv = Vec::new();
        l.write_csv(&mut csv)?;
        let base = dir.join(&names[d]);
        write(&base.with_extension("csv"), csv)?;
        write(&base.with_extension("svg"), table_svg(&table, Some(&l))?)?;
        written.push(base.with_extension("csv"));
        written.push(base.with_extension("svg"));
    }
    let mut manifest = manifest;
    manifest.save(out)?;
    Ok(written)
}

/// Error carried to the process exit code: 1 for numerical failures, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(p) = cause.downcast_ref::<PtgError>() {
            return if p.is_numerical() { 1 } else { 2 };
        }
    }
    2
}

pub fn check_nonempty(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!(PtgError::Config(format!("{} is not a run directory", dir.display())));
    }
    Ok(())
}
