//! Graph estimators. Each one turns a data matrix into a [`GraphEstimate`]
//! whose edges carry simultaneous confidence intervals.

pub mod cluster;
pub mod correlation;
pub mod finite;
pub mod graph;
pub mod partial;
pub mod restricted;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{Multiplicity, TEstimatorKind};
use crate::bootstrap::{SuperVariant, DEFAULT_REPLICATES};
use crate::error::{Error, Result};
use crate::linalg::DataMatrix;

pub use cluster::{cluster_graph, l_centers, ClusterAssignment, DistanceKind};
pub use correlation::correlation_graph;
pub use finite::{finite_sample_graph, finite_sample_width, FiniteSampleBand};
pub use graph::{graph_guarantee_check, EdgeRule, GraphEstimate, GraphMethod, GuaranteeCheck, PairInterval};
pub use partial::{partial_corr_graph, PartialMethod};
pub use restricted::{restricted_graph, restricted_partial_corr, DEFAULT_BUDGET_CAP};

/// Every estimation procedure, under its command-line name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Delta,
    Bootstrap,
    #[serde(rename = "super")]
    Super,
    Corr,
    Cluster,
    Restricted,
    Finite,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Delta,
        Method::Bootstrap,
        Method::Super,
        Method::Corr,
        Method::Cluster,
        Method::Restricted,
        Method::Finite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Delta => "delta",
            Method::Bootstrap => "bootstrap",
            Method::Super => "super",
            Method::Corr => "corr",
            Method::Cluster => "cluster",
            Method::Restricted => "restricted",
            Method::Finite => "finite",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Tuning knobs shared by the estimators; each method reads the ones it
/// needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    /// Bootstrap replicates.
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub multiplicity: Multiplicity,
    pub t_estimator: TEstimatorKind,
    pub super_variant: SuperVariant,
    /// Uniform draws for [`SuperVariant::UniformSample`].
    pub uniform_draws: usize,
    /// Cluster count (cluster graphs) or conditioning-set size (restricted
    /// graphs).
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// Half-width of the null band for correlation graphs.
    pub epsilon: f64,
    /// Finite-sample constant; required by the finite method.
    pub c_alpha: Option<f64>,
    pub distance_kind: DistanceKind,
    /// Inner procedure for cluster graphs.
    pub cluster_method: PartialMethod,
    /// Attach per-cluster correlation subgraphs to cluster graphs.
    pub cluster_subgraphs: bool,
    pub budget_cap: u128,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            b: DEFAULT_REPLICATES,
            seed: 0,
            multiplicity: Multiplicity::default(),
            t_estimator: TEstimatorKind::default(),
            super_variant: SuperVariant::default(),
            uniform_draws: DEFAULT_REPLICATES,
            l: None,
            epsilon: 0.0,
            c_alpha: None,
            distance_kind: DistanceKind::default(),
            cluster_method: PartialMethod::Delta,
            cluster_subgraphs: false,
            budget_cap: DEFAULT_BUDGET_CAP,
        }
    }
}

fn require_l(opts: &EstimateOptions, method: Method) -> Result<usize> {
    opts.l
        .ok_or_else(|| Error::InvalidArgument(format!("method {} needs L", method.name())))
}

/// Runs `method` on `x`.
pub fn estimate_graph(x: &DataMatrix, method: Method, alpha: f64, opts: &EstimateOptions) -> Result<GraphEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    match method {
        Method::Delta => partial_corr_graph(x, alpha, PartialMethod::Delta, opts),
        Method::Bootstrap => partial_corr_graph(x, alpha, PartialMethod::Bootstrap, opts),
        Method::Super => partial_corr_graph(x, alpha, PartialMethod::SuperAccurate, opts),
        Method::Corr => correlation_graph(x, alpha, opts.epsilon, opts.b, opts.seed),
        Method::Cluster => cluster_graph(x, require_l(opts, method)?, alpha, opts.cluster_method, opts),
        Method::Restricted => restricted_graph(x, require_l(opts, method)?, alpha, opts.b, opts.seed, opts.budget_cap),
        Method::Finite => {
            let c = opts
                .c_alpha
                .ok_or_else(|| Error::InvalidArgument("method finite needs c_alpha".into()))?;
            Ok(finite_sample_graph(x, alpha, c)?.1)
        }
    }
}
