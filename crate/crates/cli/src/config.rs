//! Run configuration: a TOML file with one section per concern, every field
//! optional except the objective name and region mode. Omitted fields fall back
//! to the reference experiment settings (`a = b = 0.1`, `β₀ = 0`, `Σ₀ = I`,
//! domain `[−10, 10]^d`, the 10-point diagonal design, `M = 1000`, `S = 40`).
//!
//! The exact grammar is TOML 1.0; see the repository README for the key tables.
//! Unknown keys are rejected, and range violations are reported all at once.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use derivgp::constraints::{DomainBox, RegionMode, RegionSpec};
use derivgp::error::Error as CoreError;
use derivgp::gp::{Dataset, GpHyperParams};
use derivgp::kernel::LengthScales;
use derivgp::objectives::{self, NlsInstance, Objective};
use derivgp::optimizer::{diagonal_design, EtaForm, EtaSchedule, ShortcutReducer, StageSettings};
use derivgp::tmcmc::{ProposalKernel, TmcmcConfig};

use crate::CliError;

/// Scalar broadcast or one value per coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scales {
    Shared(f64),
    PerCoord(Vec<f64>),
}

impl Scales {
    fn to_vector(&self, d: usize, what: &str, errors: &mut Vec<String>) -> DVector<f64> {
        match self {
            Scales::Shared(v) => DVector::from_element(d, *v),
            Scales::PerCoord(v) => {
                if v.len() != d {
                    errors.push(format!("{what}: expected {d} entries, got {}", v.len()));
                    DVector::from_element(d, 1.0)
                } else {
                    DVector::from_vec(v.clone())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    /// `example1` … `example5`, or a name registered programmatically.
    pub name: String,
    /// Dimension (example5 only).
    pub d: Option<usize>,
    /// Observation count (example5; 0 or omitted selects the per-d default).
    pub m: Option<usize>,
    /// Instance generation seed (example5).
    pub instance_seed: Option<u64>,
    /// Count-data file (example4). Default `data/aids_quarterly.txt`.
    pub data_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub mode: Option<RegionMode>,
    pub epsilon: Option<f64>,
    pub domain_lo: Option<Vec<f64>>,
    pub domain_hi: Option<Vec<f64>>,
    pub det_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GpSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lambda: Option<Scales>,
    /// Pick a shared λ by marginal-likelihood grid search over the initial design.
    pub grid_search_lambda: Option<bool>,
    pub jitter: Option<f64>,
    pub corrected_shape: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TmcmcSection {
    pub kernel: Option<ProposalKernel>,
    pub n_iter: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub scales1: Option<Scales>,
    pub scales2: Option<Scales>,
    /// Starting point; when omitted (or outside the support) the driver
    /// searches the domain box with uniform draws.
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StagesSection {
    pub s: Option<usize>,
    pub resample_m: Option<usize>,
    pub eta_form: Option<EtaForm>,
    pub eta_scale: Option<f64>,
    pub eta_offset: Option<f64>,
    /// Skip the stages and reduce the stage-0 particles directly.
    pub shortcut: Option<ShortcutReducer>,
    pub distinct_clusters: Option<bool>,
    pub count_threshold: Option<f64>,
    pub cluster_radius_frac: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub n: Option<usize>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub gp: GpSection,
    #[serde(default)]
    pub tmcmc: TmcmcSection,
    #[serde(default)]
    pub stages: StagesSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything resolved and validated, ready to execute.
#[derive(Debug)]
pub struct PreparedRun {
    pub objective: Objective,
    /// Present for example5 runs.
    pub nls: Option<NlsInstance>,
    pub region: RegionSpec,
    pub hp: GpHyperParams,
    pub tmcmc: TmcmcConfig,
    pub settings: StageSettings,
    pub init_data: Dataset,
    pub configured_init: Option<DVector<f64>>,
    pub shortcut: Option<ShortcutReducer>,
    pub workers: usize,
    pub count_threshold: f64,
    pub seed: u64,
    pub init_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub meta: RunMeta,
}

/// Identification echoed into the output documents.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub objective: String,
    pub mode: String,
    pub seed: u64,
}

fn default_epsilon(name: &str, d: usize) -> f64 {
    if name == "example5" {
        match d {
            0..=2 => 1.0,
            3..=5 => 3.0,
            6..=10 => 6.0,
            11..=50 => 100.0,
            _ => 400.0,
        }
    } else {
        1.0
    }
}

fn default_eta(name: &str, d: usize) -> (EtaForm, f64, f64) {
    if name == "example5" {
        match d {
            0..=2 => (EtaForm::Inverse, 1.0, 10.0),
            3..=5 => (EtaForm::ScaledInverseLog, 1.5, 11.0),
            6..=10 => (EtaForm::ScaledInverseLog, 7.0, 10.0),
            11..=50 => (EtaForm::ScaledInverseLog, 200.0, 10.0),
            _ => (EtaForm::ScaledInverseLog, 850.0, 10.0),
        }
    } else {
        (EtaForm::InverseSquare, 1.0, 10.0)
    }
}

/// Resolves the configuration against the per-example defaults, collecting all
/// violations into one diagnostic.
pub fn prepare(cfg: &RunConfig) -> Result<PreparedRun, CliError> {
    let mut errors: Vec<String> = Vec::new();

    // objective
    let name = cfg.objective.name.as_str();
    let (objective, nls) = match name {
        "example1" => (objectives::example1(), None),
        "example2" => (objectives::example2(), None),
        "example3" => (objectives::example3(), None),
        "example4" => {
            let path = cfg
                .objective
                .data_file
                .clone()
                .unwrap_or_else(|| PathBuf::from("data/aids_quarterly.txt"));
            match objectives::load_count_data(&path).and_then(objectives::example4) {
                Ok(obj) => (obj, None),
                Err(e) => return Err(CliError::Validation(format!("example4: {e}"))),
            }
        }
        "example5" => {
            let d = cfg.objective.d.unwrap_or(0);
            if d == 0 {
                errors.push("objective.d is required for example5".into());
            }
            let m = cfg.objective.m.unwrap_or(0);
            let seed = cfg.objective.instance_seed.unwrap_or(101);
            let d = d.max(1);
            let (obj, inst) = objectives::example5(d, m, seed);
            (obj, Some(inst))
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown objective {other:?} (expected example1..example5)"
            )))
        }
    };
    let d = objective.dim();

    // region
    let mode = match cfg.region.mode {
        Some(m) => m,
        None => {
            errors.push("region.mode is required".into());
            RegionMode::Minimum
        }
    };
    let epsilon = cfg
        .region
        .epsilon
        .unwrap_or_else(|| default_epsilon(name, d));
    if !(epsilon > 0.0) {
        errors.push(format!("region.epsilon must be positive, got {epsilon}"));
    }
    let domain = match (&cfg.region.domain_lo, &cfg.region.domain_hi) {
        (None, None) => DomainBox::symmetric(d, 10.0),
        (Some(lo), Some(hi)) => match DomainBox::new(lo.clone(), hi.clone()) {
            Ok(b) if b.dim() == d => b,
            Ok(b) => {
                errors.push(format!(
                    "region domain has dim {}, objective has {d}",
                    b.dim()
                ));
                DomainBox::symmetric(d, 10.0)
            }
            Err(e) => {
                errors.push(format!("region domain: {e}"));
                DomainBox::symmetric(d, 10.0)
            }
        },
        _ => {
            errors.push("region.domain_lo and region.domain_hi must be given together".into());
            DomainBox::symmetric(d, 10.0)
        }
    };
    let det_tol = cfg
        .region
        .det_tol
        .unwrap_or(derivgp::constraints::DEFAULT_DET_TOL);
    if det_tol < 0.0 {
        errors.push("region.det_tol must be nonnegative".into());
    }

    // gp hyperparameters
    let mut hp = GpHyperParams::default_for_dim(d);
    if let Some(a) = cfg.gp.a {
        hp.a = a;
    }
    if let Some(b) = cfg.gp.b {
        hp.b = b;
    }
    if hp.a <= 0.0 || hp.b <= 0.0 {
        errors.push("gp.a and gp.b must be positive".into());
    }
    if let Some(j) = cfg.gp.jitter {
        if j < 0.0 {
            errors.push("gp.jitter must be nonnegative".into());
        } else {
            hp.jitter = j;
        }
    }
    hp.corrected_shape = cfg.gp.corrected_shape.unwrap_or(false);
    if let Some(lam) = &cfg.gp.lambda {
        let v = lam.to_vector(d, "gp.lambda", &mut errors);
        match LengthScales::new(v) {
            Ok(ls) => hp.ls = ls,
            Err(e) => errors.push(format!("gp.lambda: {e}")),
        }
    }

    // design (defaults to the domain box)
    let design_n = cfg.design.n.unwrap_or(10);
    if design_n < 2 {
        errors.push("design.n must be at least 2".into());
    }
    let design_lo = cfg.design.lo.clone().unwrap_or_else(|| domain.lo.clone());
    let design_hi = cfg.design.hi.clone().unwrap_or_else(|| domain.hi.clone());
    if design_lo.len() != d || design_hi.len() != d {
        errors.push("design.lo/design.hi must match the objective dimension".into());
    }

    // tmcmc
    let seed = cfg.run.seed.unwrap_or(42);
    let mut rng = objectives::SplitMix64::new(seed);
    let chain_seed = seed;
    let resample_seed = rng.next_u64();
    let init_seed = rng.next_u64();

    let mut tm = TmcmcConfig::default_for_dim(d, chain_seed);
    if let Some(k) = cfg.tmcmc.kernel {
        tm.kernel = k;
    }
    if let Some(v) = cfg.tmcmc.n_iter {
        tm.n_iter = v;
    }
    if let Some(v) = cfg.tmcmc.burn_in {
        tm.burn_in = v;
    }
    if let Some(v) = cfg.tmcmc.thin {
        tm.thin = v;
    }
    if let Some(v) = cfg.tmcmc.p {
        tm.p = v;
    }
    if let Some(v) = cfg.tmcmc.q {
        tm.q = v;
    }
    if let Some(s) = &cfg.tmcmc.scales1 {
        tm.scales1 = s.to_vector(d, "tmcmc.scales1", &mut errors);
    }
    if let Some(s) = &cfg.tmcmc.scales2 {
        tm.scales2 = s.to_vector(d, "tmcmc.scales2", &mut errors);
    }
    if tm.burn_in >= tm.n_iter {
        errors.push(format!(
            "tmcmc.burn_in ({}) must be smaller than tmcmc.n_iter ({})",
            tm.burn_in, tm.n_iter
        ));
    }
    if tm.thin == 0 {
        errors.push("tmcmc.thin must be at least 1".into());
    }
    let configured_init = match &cfg.tmcmc.init {
        Some(v) if v.len() == d => Some(DVector::from_vec(v.clone())),
        Some(v) => {
            errors.push(format!(
                "tmcmc.init has {} entries, objective has {d}",
                v.len()
            ));
            None
        }
        None => None,
    };

    // stages
    let s_stages = cfg.stages.s.unwrap_or(40);
    let resample_m = cfg.stages.resample_m.unwrap_or(1000);
    if resample_m == 0 {
        errors.push("stages.resample_m must be positive".into());
    }
    let (def_form, def_scale, def_offset) = default_eta(name, d);
    let eta_form = cfg.stages.eta_form.unwrap_or(def_form);
    let eta_scale = cfg.stages.eta_scale.unwrap_or(def_scale);
    let eta_offset = cfg.stages.eta_offset.unwrap_or(def_offset);
    let schedule = match EtaSchedule::new(eta_form, eta_scale, eta_offset) {
        Ok(s) => s,
        Err(e) => {
            errors.push(format!("stages eta schedule: {e}"));
            EtaSchedule::reference()
        }
    };
    let count_threshold = cfg.stages.count_threshold.unwrap_or(0.95);
    if !(count_threshold > 0.5 && count_threshold < 1.0) {
        errors.push("stages.count_threshold must lie in (0.5, 1)".into());
    }
    let cluster_radius_frac = cfg.stages.cluster_radius_frac.unwrap_or(0.02);
    if !(cluster_radius_frac > 0.0) {
        errors.push("stages.cluster_radius_frac must be positive".into());
    }

    // run
    let workers = cfg.run.workers.unwrap_or(1);
    if workers == 0 {
        errors.push("run.workers must be at least 1".into());
    }

    if !errors.is_empty() {
        return Err(CliError::Validation(format!(
            "{} configuration violation(s):\n  - {}",
            errors.len(),
            errors.join("\n  - ")
        )));
    }

    // region + objective with the configured domain
    let objective = objective
        .with_domain(domain.clone())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let region = RegionSpec::new(epsilon, mode, domain, det_tol)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    // initial design, then optional length-scale grid search against it
    let init_data =
        diagonal_design(&objective, &design_lo, &design_hi, design_n).map_err(map_core)?;
    if cfg.gp.grid_search_lambda.unwrap_or(false) {
        hp.ls = derivgp::gp::grid_search_lengthscale(&init_data, &hp).map_err(map_core)?;
    }

    let mut settings = StageSettings::new(s_stages, resample_m, schedule, resample_seed);
    settings.parallel_weights = workers > 1;
    settings.distinct_clusters = cfg.stages.distinct_clusters.unwrap_or(false);
    settings.cluster_radius_frac = cluster_radius_frac;
    settings.det_tol = det_tol;

    Ok(PreparedRun {
        meta: RunMeta {
            objective: objective.name().to_string(),
            mode: mode.to_string(),
            seed,
        },
        objective,
        nls,
        region,
        hp,
        tmcmc: tm,
        settings,
        init_data,
        configured_init,
        shortcut: cfg.stages.shortcut,
        workers,
        count_threshold,
        seed,
        init_seed,
        output_dir: cfg.run.output_dir.clone(),
    })
}

fn map_core(e: CoreError) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Shared example data for tests and templates.
pub fn example4_counts() -> Vec<f64> {
    vec![
        0.0, 1.0, 2.0, 3.0, 1.0, 4.0, 9.0, 18.0, 23.0, 31.0, 20.0, 25.0, 37.0, 45.0,
    ]
}

/// Builds a dataset directly from a matrix (used by tests).
pub fn dataset_from_rows(rows: &[Vec<f64>], values: &[f64]) -> Result<Dataset, CliError> {
    let n = rows.len();
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    Dataset::new(x, DVector::from_vec(values.to_vec())).map_err(map_core)
}
