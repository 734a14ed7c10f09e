use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{ForestParams, RandomForest};
use super::{phi, Descriptor};
use crate::data::CompoundDataset;
use crate::error::{PtgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub forest: ForestParams,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 5,
            seed: 0,
            forest: ForestParams::default(),
        }
    }
}

/// Cross-validated error of one descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub descriptor: String,
    pub config: CvConfig,
    pub mae_mean: f64,
    /// Sample standard deviation over repeats; 0 for a single repeat.
    pub mae_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    /// Fold-averaged (MAE, RMSE) of each repeat.
    pub per_repeat: Vec<(f64, f64)>,
    /// `folds[r][i]` is the test fold of compound `i` in repeat `r`.
    pub folds: Vec<Vec<usize>>,
    pub formulas: Vec<String>,
    pub targets: Vec<f64>,
    /// Absolute held-out error of each compound, averaged over repeats.
    pub compound_errors: Vec<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `formula,target,abs_error`.
    pub fn write_errors_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| PtgError::io("compound errors", e);
        writeln!(out, "formula,target,abs_error").map_err(io)?;
        for ((f, t), e) in self.formulas.iter().zip(&self.targets).zip(&self.compound_errors) {
            writeln!(out, "{f},{t},{e}").map_err(io)?;
        }
        Ok(())
    }
}

/// Fold label of each sample: samples are ranked by target and each run of
/// `folds` consecutive ranks receives a random permutation of the labels.
pub fn stratified_folds(targets: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(PtgError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if targets.len() < folds {
        return Err(PtgError::Config(format!(
            "{} samples is fewer than {folds} folds",
            targets.len()
        )));
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|a, b| targets[*a].total_cmp(&targets[*b]).then(a.cmp(b)));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut labels = vec![0; targets.len()];
    let mut perm: Vec<usize> = (0..folds).collect();
    for block in order.chunks(folds) {
        perm.shuffle(&mut rng);
        for (i, f) in block.iter().zip(&perm) {
            labels[*i] = *f;
        }
    }
    Ok(labels)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Repeated stratified k-fold cross-validation of a random forest on
/// `phi(composition)`. Repeat `r` splits with seed `seed + r`.
pub fn cross_validate(
    data: &CompoundDataset,
    descriptor: &Descriptor,
    config: &CvConfig,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(PtgError::Config("empty compound dataset".into()));
    }
    if config.repeats == 0 {
        return Err(PtgError::Config("need at least one repeat".into()));
    }
    let x: Vec<Vec<f64>> = data
        .records
        .iter()
        .map(|r| phi(&r.composition, descriptor))
        .collect::<Result<_>>()?;
    let y = data.targets();
    let folds: Vec<Vec<usize>> = (0..config.repeats)
        .map(|r| stratified_folds(&y, config.folds, config.seed.wrapping_add(r as u64)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .collect();
    // (repeat, fold, test indices, predictions)
    let results: Vec<(usize, Vec<usize>, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..y.len()).partition(|i| folds[r][*i] == f);
            let tx: Vec<Vec<f64>> = train.iter().map(|i| x[*i].clone()).collect();
            let ty: Vec<f64> = train.iter().map(|i| y[*i]).collect();
            let seed = config
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((r * config.folds + f) as u64);
            let forest = RandomForest::fit(&tx, &ty, &config.forest, seed)?;
            let pred = test.iter().map(|i| forest.predict(&x[*i])).collect();
            Ok((r, test, pred))
        })
        .collect::<Result<_>>()?;

    let mut fold_mae = vec![Vec::new(); config.repeats];
    let mut fold_rmse = vec![Vec::new(); config.repeats];
    let mut compound_errors = vec![0.0; y.len()];
    for (r, test, pred) in &results {
        let errs: Vec<f64> = test.iter().zip(pred).map(|(i, p)| (p - y[*i]).abs()).collect();
        let n = errs.len() as f64;
        fold_mae[*r].push(errs.iter().sum::<f64>() / n);
        fold_rmse[*r].push((errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt());
        for (i, e) in test.iter().zip(&errs) {
            compound_errors[*i] += e / config.repeats as f64;
        }
    }
    let per_repeat: Vec<(f64, f64)> = (0..config.repeats)
        .map(|r| (mean_std(&fold_mae[r]).0, mean_std(&fold_rmse[r]).0))
        .collect();
    let (mae_mean, mae_std) = mean_std(&per_repeat.iter().map(|p| p.0).collect::<Vec<_>>());
    let (rmse_mean, rmse_std) = mean_std(&per_repeat.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(EvalReport {
        descriptor: descriptor.name.clone(),
        config: *config,
        mae_mean,
        mae_std,
        rmse_mean,
        rmse_std,
        per_repeat,
        folds,
        formulas: data.records.iter().map(|r| r.formula.clone()).collect(),
        targets: y,
        compound_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Composition, CompoundRecord};
    use proptest::prelude::*;
    use rand::Rng;

    /// Binary compounds over a three-element descriptor, target = φ₁.
    fn learnable(n: usize) -> (CompoundDataset, Descriptor) {
        let d = Descriptor::new(
            "toy",
            vec!["Li".into(), "Fe".into(), "O".into()],
            vec![vec![-1.0, 0.3], vec![1.0, -0.2], vec![0.0, 1.0]],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let pairs = [("Li", "Fe"), ("Fe", "O"), ("Li", "O")];
        let records = (0..n)
            .map(|i| {
                let (a, b) = pairs[i % 3];
                let c = Composition::from_counts(&[(a, rng.random_range(0.1..1.0)), (b, rng.random_range(0.1..1.0))])
                    .unwrap();
                let target = phi(&c, &d).unwrap()[0];
                CompoundRecord {
                    formula: format!("c{i}"),
                    composition: c,
                    target,
                }
            })
            .collect();
        (
            CompoundDataset {
                records,
                unit: String::new(),
            },
            d,
        )
    }

    #[test]
    fn folds_are_balanced() {
        let y: Vec<f64> = (0..23).map(|i| ((i * 37) % 23) as f64).collect();
        let f = stratified_folds(&y, 5, 3).unwrap();
        let mut counts = [0; 5];
        for l in &f {
            counts[*l] += 1;
        }
        assert!(counts.iter().all(|c| *c == 4 || *c == 5), "{counts:?}");
        assert!(stratified_folds(&y[..4], 5, 0).is_err());
        assert!(stratified_folds(&y, 1, 0).is_err());
    }

    #[test]
    fn learnable_target() {
        let (data, d) = learnable(600);
        let rep = cross_validate(&data, &d, &CvConfig::default()).unwrap();
        let (_, sd) = mean_std(&data.targets());
        assert!(rep.mae_mean < 0.05 * sd, "{} vs {}", rep.mae_mean, sd);
        assert!(rep.rmse_mean >= rep.mae_mean);
        assert_eq!(rep.per_repeat.len(), 5);
    }

    #[test]
    fn deterministic_report() {
        let (data, d) = learnable(90);
        let cfg = CvConfig {
            forest: ForestParams {
                n_trees: 10,
                ..Default::default()
            },
            seed: 17,
            ..Default::default()
        };
        let a = cross_validate(&data, &d, &cfg).unwrap();
        let b = cross_validate(&data, &d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(EvalReport::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn rmse_not_below_mae(n in 30usize..80, seed in any::<u64>()) {
            let (data, d) = learnable(n);
            let cfg = CvConfig { seed, repeats: 2, forest: ForestParams { n_trees: 5, ..Default::default() }, ..Default::default() };
            let rep = cross_validate(&data, &d, &cfg).unwrap();
            prop_assert!(rep.mae_mean >= 0.0);
            prop_assert!(rep.rmse_mean >= rep.mae_mean);
            for (m, r) in &rep.per_repeat {
                prop_assert!(r >= m);
            }
        }
    }
}
