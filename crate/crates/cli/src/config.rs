//! Experiment configuration (TOML) and problem construction.

use std::path::{Path, PathBuf};

use costa_core::costa::{Method, RunConfig};
use costa_core::problems::dataset::{LabelRule, SyntheticSpec};
use costa_core::problems::mcp::McpParams;
use costa_core::problems::trajectory::{Environment, Obstacle};
use costa_core::schedule::ScheduleParams;
use costa_core::subsolver::SolverOptions;
use costa_core::validation::{Check, Defect, ValidationOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    SparseLogistic,
    Trajectory,
    SyntheticQuadratic,
    ExteriorBall,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    #[serde(default = "default_method")]
    pub method: Method,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub schedule: ScheduleParams,
    pub run: RunSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub emit: EmitSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub exterior_ball: Option<ExteriorBallSection>,
    #[serde(default)]
    pub synthetic_quadratic: Option<QuadraticSection>,
    #[serde(default)]
    pub sparse_logistic: Option<LogisticSection>,
    #[serde(default)]
    pub trajectory: Option<TrajectorySection>,
}

fn default_method() -> Method {
    Method::Costa
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("costa-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mu: f64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default)]
    pub report_samples: usize,
    #[serde(default)]
    pub tracking_samples: usize,
    #[serde(default = "one")]
    pub kkt_every: usize,
    #[serde(default = "default_kkt_samples")]
    pub kkt_samples: usize,
    #[serde(default = "unit")]
    pub rho_scale: f64,
    /// Starting point; each problem has its own default.
    #[serde(default)]
    pub x1: Option<Vec<f64>>,
}

fn default_tol() -> f64 {
    1e-8
}

fn one() -> usize {
    1
}

fn default_kkt_samples() -> usize {
    64
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    pub iterations: Vec<usize>,
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitSection {
    #[serde(default = "yes")]
    pub trace: bool,
    #[serde(default = "yes")]
    pub summary: bool,
    #[serde(default = "yes")]
    pub plot_data: bool,
    #[serde(default = "yes")]
    pub schema: bool,
    /// Re-estimate the constraint margin along the trace and compare the
    /// recorded dual norms with the resulting bound.
    #[serde(default)]
    pub dual_bound: bool,
    #[serde(default = "default_dual_stride")]
    pub dual_bound_stride: usize,
    #[serde(default = "default_omega")]
    pub dual_bound_omega: f64,
}

fn yes() -> bool {
    true
}

fn default_dual_stride() -> usize {
    10
}

fn default_omega() -> f64 {
    0.1
}

impl Default for EmitSection {
    fn default() -> Self {
        Self {
            trace: true,
            summary: true,
            plot_data: true,
            schema: true,
            dual_bound: false,
            dual_bound_stride: default_dual_stride(),
            dual_bound_omega: default_omega(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "unit")]
    pub radius: f64,
    #[serde(default = "default_fd")]
    pub fd_step: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Number of anchors: the starting point plus random points around it.
    #[serde(default = "default_anchors")]
    pub anchors: usize,
    #[serde(default)]
    pub defect: Option<Defect>,
}

fn default_checks() -> Vec<Check> {
    vec![Check::Tangent, Check::Majorization, Check::Convexity]
}

fn default_samples() -> usize {
    10_000
}

fn default_fd() -> f64 {
    1e-3
}

fn default_anchors() -> usize {
    3
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            checks: default_checks(),
            samples: default_samples(),
            radius: 1.0,
            fd_step: default_fd(),
            omega: default_omega(),
            anchors: default_anchors(),
            defect: None,
        }
    }
}

impl ValidateSection {
    pub fn options(&self, seed: u64) -> ValidationOptions {
        ValidationOptions {
            checks: self.checks.clone(),
            samples: self.samples,
            radius: self.radius,
            fd_step: self.fd_step,
            omega: self.omega,
            seed,
            defect: self.defect,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExteriorBallSection {
    pub target: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSection {
    /// Noise level of the ten-dimensional benchmark.
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSection {
    pub mcp: McpParams,
    /// LIBSVM training file; a synthetic set is generated when absent.
    #[serde(default)]
    pub libsvm: Option<PathBuf>,
    /// LIBSVM test file; otherwise `test_fraction` of the rows are held out.
    #[serde(default)]
    pub test_libsvm: Option<PathBuf>,
    #[serde(default = "default_rule")]
    pub label_rule: LabelRule,
    #[serde(default)]
    pub n_features: Option<usize>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
}

fn default_rule() -> LabelRule {
    LabelRule::Sign
}

fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub samples: usize,
    pub features: usize,
    pub informative: usize,
    pub density: f64,
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSection {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            samples: self.samples,
            features: self.features,
            informative: self.informative,
            density: self.density,
            label_noise: self.label_noise,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub starts: Vec<[f64; 2]>,
    pub goals: Vec<[f64; 2]>,
    pub horizon: usize,
    pub dt: f64,
    #[serde(default)]
    pub obstacle_center: Option<[f64; 2]>,
    #[serde(default)]
    pub obstacle_radius: Option<f64>,
    pub agent_radius: f64,
    pub v_max: Vec<f64>,
    pub omega: f64,
    pub sigma: f64,
    /// Ensemble draws for the straight-line baseline energy.
    #[serde(default = "default_energy_samples")]
    pub energy_samples: usize,
}

fn default_energy_samples() -> usize {
    1000
}

impl TrajectorySection {
    pub fn environment(&self) -> Result<Environment, String> {
        let obstacle = match (self.obstacle_center, self.obstacle_radius) {
            (Some(center), Some(radius)) => Some(Obstacle { center, radius }),
            (None, None) => None,
            _ => return Err("obstacle_center and obstacle_radius must be given together".into()),
        };
        Ok(Environment {
            starts: self.starts.clone(),
            goals: self.goals.clone(),
            horizon: self.horizon,
            dt: self.dt,
            obstacle,
            agent_radius: self.agent_radius,
            v_max: self.v_max.clone(),
            omega: self.omega,
            sigma: self.sigma,
        })
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // relative dataset paths resolve against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(l) = cfg.sparse_logistic.as_mut() {
            for p in [&mut l.libsvm, &mut l.test_libsvm].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), String> {
        let missing = |s: &str| format!("problem needs a [{s}] section");
        match self.problem {
            ProblemKind::ExteriorBall if self.exterior_ball.is_none() => return Err(missing("exterior_ball")),
            ProblemKind::SyntheticQuadratic if self.synthetic_quadratic.is_none() => {
                return Err(missing("synthetic_quadratic"))
            }
            ProblemKind::Trajectory if self.trajectory.is_none() => return Err(missing("trajectory")),
            ProblemKind::SparseLogistic => {
                let l = self.sparse_logistic.as_ref().ok_or_else(|| missing("sparse_logistic"))?;
                for p in [&l.libsvm, &l.test_libsvm].into_iter().flatten() {
                    if !p.exists() {
                        return Err(format!("dataset {} does not exist", p.display()));
                    }
                }
                if l.libsvm.is_none() && l.synthetic.is_none() {
                    return Err("sparse_logistic needs either libsvm or a [sparse_logistic.synthetic] section".into());
                }
            }
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if s.seeds.is_empty() || s.iterations.is_empty() {
                return Err("sweep seeds and iterations must be nonempty".into());
            }
            if s.methods.as_ref().is_some_and(|m| m.is_empty()) {
                return Err("sweep methods must be nonempty when given".into());
            }
        }
        self.schedule.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Run configuration for one cell.
    pub fn run_config(&self, x1: Vec<f64>, iterations: usize, seed: u64) -> RunConfig {
        let r = &self.run;
        let mut cfg = RunConfig::new(x1, self.schedule, r.mu, iterations);
        cfg.solver = SolverOptions::with_tol(r.solver_tol);
        cfg.seed = seed;
        cfg.deterministic = r.deterministic;
        cfg.report_samples = r.report_samples;
        cfg.tracking_samples = r.tracking_samples;
        cfg.kkt_every = r.kkt_every;
        cfg.kkt_samples = r.kkt_samples;
        cfg.rho_scale = r.rho_scale;
        cfg
    }
}
