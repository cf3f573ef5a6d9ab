//! Monte Carlo coverage experiments: repeatedly sample from a model,
//! estimate a graph and count false and missed edges against the truth.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimators::cluster::cluster_graph_detailed;
use crate::estimators::graph::{graph_guarantee_check, EdgeRule, GraphEstimate, GraphMethod, PairInterval};
use crate::estimators::restricted::restricted_statistics;
use crate::estimators::{estimate_graph, EstimateOptions, Method};
use crate::linalg::{self, CovMatrix};
use crate::models::{ground_truth, sample, GroundTruth, ModelSpec, TRUE_EDGE_TOL};
use crate::rng::{derive_seed, Purpose};

fn default_alpha() -> f64 {
    0.1
}

fn default_reps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub method: Method,
    #[serde(default)]
    pub options: EstimateOptions,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Seed of replicate `rep`; used for both sampling and estimation.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, Purpose::Replicate, rep as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub any_false: bool,
    pub false_edges: usize,
    pub missed_edges: usize,
    pub true_edges: usize,
    pub found_edges: usize,
    pub error: Option<String>,
    /// Wall-clock seconds. Left out of the JSON report, which must not
    /// depend on timing; written to the per-replicate CSV instead.
    #[serde(skip_serializing, default)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub completed: usize,
    pub errors: usize,
    /// Fraction of completed replicates with at least one false edge.
    pub fwer_hat: Option<f64>,
    /// Clopper-Pearson 95% interval for the family-wise error rate.
    pub ci_95: Option<(f64, f64)>,
    /// Fraction of true edges recovered, pooled over completed replicates.
    pub power_hat: Option<f64>,
    pub conventions: serde_json::Value,
    pub records: Vec<RepRecord>,
}

/// Exact two-sided binomial interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, level: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bad binomial interval request k={k}, n={n}, level={level}"
        )));
    }
    let tail = (1.0 - level) / 2.0;
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::InvalidArgument(e.to_string()));
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        beta(kf, nf - kf + 1.0)?.inverse_cdf(tail)
    };
    let hi = if k == n {
        1.0
    } else {
        beta(kf + 1.0, nf - kf)?.inverse_cdf(1.0 - tail)
    };
    Ok((lo, hi))
}

fn truth_from_values(values: Vec<f64>, d: usize, rule: EdgeRule) -> Result<GraphEstimate> {
    let per_pair = values
        .into_iter()
        .map(|v| PairInterval {
            estimate: v,
            ci_lo: v,
            ci_hi: v,
        })
        .collect();
    let labels = (1..=d).map(|i| i.to_string()).collect();
    GraphEstimate::from_intervals(labels, per_pair, rule, 0.0, GraphMethod::Truth, 0)
}

/// True graph targeted by `method`, for methods whose target does not depend
/// on the data.
fn fixed_truth(config: &ExperimentConfig, gt: &GroundTruth) -> Result<Option<GraphEstimate>> {
    let d = config.model.d;
    let truth = match config.method {
        Method::Delta | Method::Bootstrap | Method::Super | Method::Finite => Some(gt.graph.clone()),
        Method::Corr => {
            let r = linalg::sample_correlations(&gt.sigma)?;
            let eps = config.options.epsilon.max(TRUE_EDGE_TOL);
            Some(truth_from_values(
                linalg::upper_triangle(&r),
                d,
                EdgeRule::ExcludeBand(eps),
            )?)
        }
        Method::Restricted => {
            let l = config
                .options
                .l
                .ok_or_else(|| Error::InvalidArgument("method restricted needs L".into()))?;
            let stats = restricted_statistics(&gt.sigma, l)?;
            Some(truth_from_values(stats, d, EdgeRule::ExcludeBand(TRUE_EDGE_TOL))?)
        }
        Method::Cluster => None,
    };
    Ok(truth)
}

/// Partial-correlation graph of the cluster averages under the true
/// covariance.
fn cluster_truth(sigma: &CovMatrix, cluster_of: &[usize], clusters: usize) -> Result<GraphEstimate> {
    let d = cluster_of.len();
    let mut sizes = vec![0.0; clusters];
    for &c in cluster_of {
        sizes[c] += 1.0;
    }
    let w = DMatrix::from_fn(
        clusters,
        d,
        |c, f| if cluster_of[f] == c { 1.0 / sizes[c] } else { 0.0 },
    );
    let avg = CovMatrix::new(&w * sigma.values() * w.transpose())?;
    let theta = linalg::partial_correlations(&linalg::precision(&avg)?)?;
    truth_from_values(theta.upper(), clusters, EdgeRule::ExcludeBand(TRUE_EDGE_TOL))
}

fn run_rep(config: &ExperimentConfig, gt: &GroundTruth, truth: Option<&GraphEstimate>, rep: usize) -> RepRecord {
    let seed = config.rep_seed(rep);
    let start = Instant::now();
    let outcome = (|| -> Result<(GraphEstimate, GraphEstimate)> {
        let x = sample(&config.model, config.n, seed)?;
        let opts = EstimateOptions {
            seed,
            ..config.options.clone()
        };
        match truth {
            Some(t) => Ok((estimate_graph(&x, config.method, config.alpha, &opts)?, t.clone())),
            None => {
                let l = opts
                    .l
                    .ok_or_else(|| Error::InvalidArgument("method cluster needs L".into()))?;
                let cg = cluster_graph_detailed(&x, l, config.alpha, opts.cluster_method, &opts)?;
                let t = cluster_truth(&gt.sigma, &cg.assignment.cluster_of, cg.assignment.num_clusters())?;
                Ok((cg.graph, t))
            }
        }
    })();
    let runtime_secs = start.elapsed().as_secs_f64();
    let mut record = RepRecord {
        rep,
        seed,
        any_false: false,
        false_edges: 0,
        missed_edges: 0,
        true_edges: 0,
        found_edges: 0,
        error: None,
        runtime_secs,
    };
    match outcome.and_then(|(g_hat, g_true)| Ok((graph_guarantee_check(&g_hat, &g_true)?, g_true.edges().len()))) {
        Ok((check, true_edges)) => {
            record.any_false = check.any_false;
            record.false_edges = check.false_edges;
            record.missed_edges = check.missed_edges;
            record.true_edges = true_edges;
            record.found_edges = true_edges - check.missed_edges;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Runs the experiment on `workers` threads (0 picks the rayon default).
/// Replicate `r` is seeded from `(seed, r)`, so the report does not depend
/// on the number of workers. Replicate-level failures are recorded, not
/// fatal.
pub fn run_coverage(config: &ExperimentConfig, workers: usize) -> Result<CoverageReport> {
    config.validate()?;
    let gt = ground_truth(&config.model)?;
    let truth = fixed_truth(config, &gt)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let records: Vec<RepRecord> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| run_rep(config, &gt, truth.as_ref(), rep))
            .collect()
    });

    let ok: Vec<&RepRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let completed = ok.len();
    let failures = ok.iter().filter(|r| r.any_false).count();
    let fwer_hat = (completed > 0).then(|| failures as f64 / completed as f64);
    let ci_95 = if completed > 0 {
        Some(clopper_pearson(failures, completed, 0.95)?)
    } else {
        None
    };
    let true_total: usize = ok.iter().map(|r| r.true_edges).sum();
    let found_total: usize = ok.iter().map(|r| r.found_edges).sum();
    let power_hat = (true_total > 0).then(|| found_total as f64 / true_total as f64);
    Ok(CoverageReport {
        config: config.clone(),
        completed,
        errors: records.len() - completed,
        fwer_hat,
        ci_95,
        power_hat,
        conventions: config.model.conventions(),
        records,
    })
}

impl CoverageReport {
    /// Writes one CSV line per replicate, including runtimes.
    pub fn write_rep_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "rep",
            "seed",
            "any_false",
            "false_edges",
            "missed_edges",
            "true_edges",
            "found_edges",
            "runtime_secs",
            "error",
        ])
        .map_err(io_err)?;
        for r in &self.records {
            w.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                r.any_false.to_string(),
                r.false_edges.to_string(),
                r.missed_edges.to_string(),
                r.true_edges.to_string(),
                r.found_edges.to_string(),
                format!("{:.6}", r.runtime_secs),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// A short human-readable summary.
    pub fn summary_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        let ci = self
            .ci_95
            .map_or("n/a".to_string(), |(lo, hi)| format!("[{lo:.3}, {hi:.3}]"));
        let model = serde_json::to_string(&self.config.model).unwrap_or_default();
        format!(
            "model      {model}\nmethod     {}\nn          {}\nalpha      {}\nreps       {} ({} completed, {} errors)\nfwer_hat   {} 95% CI {ci}\npower_hat  {}\n",
            self.config.method.name(),
            self.config.n,
            self.config.alpha,
            self.config.reps,
            self.completed,
            self.errors,
            fmt(self.fwer_hat),
            fmt(self.power_hat),
        )
    }
}
