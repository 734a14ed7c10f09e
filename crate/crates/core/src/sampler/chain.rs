//! The sweep loop, posterior averaging and checkpoint/resume.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::conditionals::normalize_log_weights;
use super::{sample_beta, sample_g, sample_h, sample_r, sample_z, sq_distances, LatentState, Model};
use crate::error::{PtgError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub path: PathBuf,
    /// Write every this many sweeps; 0 writes only on failure.
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thin: usize,
    #[serde(default)]
    pub checkpoint: Option<CheckpointConfig>,
}

impl ChainConfig {
    /// `T = 10000`, `T_b = 5000`, stride 5.
    pub fn reference(seed: u64) -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            seed,
            thin: 5,
            checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(PtgError::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(PtgError::Config("thinning stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Sweep `t` (1-based) is recorded when past burn-in and on the stride.
    pub fn records(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in) % self.thin == 0
    }

    pub fn n_recorded(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loglik: f64,
    pub beta: f64,
    pub accept_r: bool,
}

/// Running sums over recorded sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub count: usize,
    pub beta: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DVector<f64>,
    /// Responsibilities, `N × K`.
    pub resp: DMatrix<f64>,
}

impl Accumulators {
    fn new(n: usize, k: usize, d: usize) -> Self {
        Self {
            count: 0,
            beta: 0.0,
            g: DVector::zeros(k),
            h: DMatrix::zeros(k, d),
            r: DVector::zeros(k),
            resp: DMatrix::zeros(n, k),
        }
    }

    fn add(&mut self, model: &Model, s: &LatentState) {
        self.count += 1;
        self.beta += s.beta;
        self.g += &s.g;
        self.h += &s.h;
        self.r += &s.r;
        let d2 = sq_distances(model.x(), s.y());
        let mut row = vec![0.0; d2.ncols()];
        for i in 0..d2.nrows() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = d2[(i, j)];
            }
            let p = normalize_log_weights(&row, s.beta);
            for (j, pj) in p.iter().enumerate() {
                self.resp[(i, j)] += pj;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub beta: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DVector<f64>,
    /// Per-element argmax of the averaged responsibilities.
    pub assignment: Vec<usize>,
    pub mean_responsibilities: DMatrix<f64>,
    pub trace: Vec<TraceRecord>,
    pub n_samples: usize,
    /// Fraction of all sweeps whose `r` proposal was accepted.
    pub acceptance_rate: f64,
    pub final_state: LatentState,
}

impl PosteriorSummary {
    /// The averaged parameters as a state.
    pub fn mean_state(&self) -> Result<LatentState> {
        LatentState::new(
            self.assignment.clone(),
            self.beta,
            self.g.clone(),
            self.h.clone(),
            self.r.clone(),
        )
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut out: W) -> Result<()> {
    let io = |e| PtgError::io("trace", e);
    writeln!(out, "iter,loglik,beta,accept_r").map_err(io)?;
    for t in trace {
        writeln!(
            out,
            "{},{},{},{}",
            t.iter,
            t.loglik,
            t.beta,
            u8::from(t.accept_r)
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Everything needed to continue a chain bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Completed sweeps.
    pub iteration: usize,
    pub config: ChainConfig,
    pub state: LatentState,
    pub rng: ChaCha20Rng,
    pub accumulators: Accumulators,
    pub trace: Vec<TraceRecord>,
    pub accepted_r: usize,
    pub shape: [usize; 3],
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let file = std::fs::File::create(&tmp).map_err(|e| PtgError::io(&tmp, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        std::fs::rename(&tmp, path).map_err(|e| PtgError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| PtgError::io(path, e))?;
        let ck: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(PtgError::Serde(format!(
                "checkpoint version {} not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}

/// A single chain; sweeps update `Z, β, g, H, r` in that order.
pub struct Chain<'a> {
    model: &'a Model,
    config: ChainConfig,
    state: LatentState,
    rng: ChaCha20Rng,
    iteration: usize,
    acc: Accumulators,
    trace: Vec<TraceRecord>,
    accepted_r: usize,
}

impl<'a> Chain<'a> {
    pub fn new(model: &'a Model, config: ChainConfig, init: LatentState) -> Result<Self> {
        config.validate()?;
        model.check_state(&init)?;
        init.validate()?;
        let acc = Accumulators::new(model.n_elements(), model.n_nodes(), model.n_features());
        Ok(Self {
            model,
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            config,
            state: init,
            iteration: 0,
            acc,
            trace: Vec::new(),
            accepted_r: 0,
        })
    }

    pub fn from_checkpoint(model: &'a Model, ck: Checkpoint) -> Result<Self> {
        let shape = [model.n_elements(), model.n_features(), model.n_nodes()];
        if ck.shape != shape {
            return Err(PtgError::Config(format!(
                "checkpoint shape {:?} does not match data/layout {:?}",
                ck.shape, shape
            )));
        }
        ck.config.validate()?;
        let mut state = ck.state;
        state.refresh();
        model.check_state(&state)?;
        Ok(Self {
            model,
            config: ck.config,
            state,
            rng: ck.rng,
            iteration: ck.iteration,
            acc: ck.accumulators,
            trace: ck.trace,
            accepted_r: ck.accepted_r,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            iteration: self.iteration,
            config: self.config.clone(),
            state: self.state.clone(),
            rng: self.rng.clone(),
            accumulators: self.acc.clone(),
            trace: self.trace.clone(),
            accepted_r: self.accepted_r,
            shape: [
                self.model.n_elements(),
                self.model.n_features(),
                self.model.n_nodes(),
            ],
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    fn sweep(&mut self) -> Result<bool> {
        let m = self.model;
        let mut s = self.state.clone();
        s.assignment = sample_z(m, &s, &mut self.rng);
        s.beta = sample_beta(m, &s, &mut self.rng)?;
        s.g = sample_g(m, &s, &mut self.rng)?;
        s.refresh();
        s.h = sample_h(m, &s, &mut self.rng)?;
        s.refresh();
        let out = sample_r(m, &s, &mut self.rng)?;
        if out.failed {
            warn!("sweep {}: length-scale ascent failed, r kept", self.iteration + 1);
        }
        s.r = out.value;
        s.validate()?;
        self.state = s;
        Ok(out.accepted)
    }

    /// Run one sweep, recording it when due.
    pub fn step(&mut self) -> Result<()> {
        let t = self.iteration + 1;
        let accepted = match self.sweep() {
            Ok(a) => a,
            Err(e) => {
                if let Some(ck) = &self.config.checkpoint {
                    let path = ck.path.clone();
                    match self.checkpoint().save(&path) {
                        Ok(()) => info!("checkpoint written to {}", path.display()),
                        Err(w) => warn!("could not write checkpoint: {w}"),
                    }
                }
                return Err(PtgError::Chain {
                    iteration: t,
                    source: Box::new(e),
                });
            }
        };
        self.iteration = t;
        self.accepted_r += accepted as usize;
        if self.config.records(t) {
            self.acc.add(self.model, &self.state);
            self.trace.push(TraceRecord {
                iter: t,
                loglik: self.model.marginal_log_likelihood(&self.state),
                beta: self.state.beta,
                accept_r: accepted,
            });
        }
        if let Some(ck) = &self.config.checkpoint {
            if ck.every > 0 && t % ck.every == 0 && t < self.config.iterations {
                let path = ck.path.clone();
                self.checkpoint().save(&path)?;
                debug!("checkpoint at sweep {t}");
            }
        }
        Ok(())
    }

    /// Run to the configured length and average the recorded sweeps.
    pub fn run(mut self) -> Result<PosteriorSummary> {
        while self.iteration < self.config.iterations {
            self.step()?;
        }
        self.summary()
    }

    /// Run at most `sweeps` more sweeps; true once the chain is complete.
    pub fn advance(&mut self, sweeps: usize) -> Result<bool> {
        for _ in 0..sweeps {
            if self.iteration >= self.config.iterations {
                break;
            }
            self.step()?;
        }
        Ok(self.iteration >= self.config.iterations)
    }

    pub fn summary(&self) -> Result<PosteriorSummary> {
        let c = self.acc.count;
        if c == 0 {
            return Err(PtgError::Config("no sweeps were recorded".into()));
        }
        let inv = 1.0 / c as f64;
        let resp = &self.acc.resp * inv;
        let assignment = (0..resp.nrows())
            .map(|i| {
                let row = resp.row(i);
                // Lowest index among ties.
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        Ok(PosteriorSummary {
            beta: self.acc.beta * inv,
            g: &self.acc.g * inv,
            h: &self.acc.h * inv,
            r: &self.acc.r * inv,
            assignment,
            mean_responsibilities: resp,
            trace: self.trace.clone(),
            n_samples: c,
            acceptance_rate: self.accepted_r as f64 / self.iteration.max(1) as f64,
            final_state: self.state.clone(),
        })
    }
}

pub fn run_chain(model: &Model, config: &ChainConfig, init: LatentState) -> Result<PosteriorSummary> {
    Chain::new(model, config.clone(), init)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::JitterPolicy;
    use crate::layouts::square_grid;
    use crate::sampler::{initial_state, Priors};
    use rand_distr::{Distribution, StandardNormal};

    fn toy_model(seed: u64) -> Model {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(12, 3, |_, _| StandardNormal.sample(&mut rng));
        let nodes = square_grid(2, (-1.0, 1.0)).unwrap();
        Model::new(x, nodes, Priors::reference(3), JitterPolicy::default()).unwrap()
    }

    fn config(t: usize, tb: usize, thin: usize) -> ChainConfig {
        ChainConfig {
            iterations: t,
            burn_in: tb,
            seed: 7,
            thin,
            checkpoint: None,
        }
    }

    #[test]
    fn recording_schedule() {
        let c = ChainConfig::reference(0);
        assert_eq!(c.n_recorded(), 1000);
        assert!(!c.records(5000));
        assert!(c.records(5005));
        assert!(c.records(10_000));
        assert!(config(3, 3, 1).validate().is_err());
        assert!(config(3, 1, 0).validate().is_err());
    }

    #[test]
    fn single_recorded_state_is_the_summary() {
        let m = toy_model(1);
        let init = initial_state(&m).unwrap();
        let s = run_chain(&m, &config(4, 3, 1), init).unwrap();
        assert_eq!(s.n_samples, 1);
        assert_eq!(s.trace.len(), 1);
        let f = &s.final_state;
        assert_eq!(s.beta, f.beta);
        assert_eq!(s.g, f.g);
        assert_eq!(s.h, f.h);
        assert_eq!(s.r, f.r);
    }

    #[test]
    fn identical_seeds_give_identical_summaries() {
        let m = toy_model(2);
        let init = initial_state(&m).unwrap();
        let a = run_chain(&m, &config(30, 10, 2), init.clone()).unwrap();
        let b = run_chain(&m, &config(30, 10, 2), init).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 10);
        assert!(a.g.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let m = toy_model(3);
        let init = initial_state(&m).unwrap();
        let cfg = config(24, 8, 2);
        let full = run_chain(&m, &cfg, init.clone()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.json");
        let mut chain = Chain::new(&m, cfg, init).unwrap();
        chain.advance(13).unwrap();
        chain.checkpoint().save(&path).unwrap();
        drop(chain);
        let resumed = Chain::from_checkpoint(&m, Checkpoint::load(&path).unwrap())
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(full, resumed);
    }

    #[test]
    fn trace_csv_layout() {
        let trace = [TraceRecord {
            iter: 6,
            loglik: -1.5,
            beta: 2.0,
            accept_r: true,
        }];
        let mut out = Vec::new();
        write_trace_csv(&trace, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "iter,loglik,beta,accept_r\n6,-1.5,2,1\n");
    }
}
