//! Executes a prepared run and writes the output files: `trace.csv` (chain),
//! `stages.csv`, `estimates.json`, `count.json`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use derivgp::counting::{converged_count, dp_mean_var, CountRecord, DpPosteriorSummary};
use derivgp::error::Error as CoreError;
use derivgp::gp::build_cache;
use derivgp::optimizer::{
    self, find_init, shortcut_estimate, Estimate, PosteriorTarget, RunOutput, StageSettings,
};
use derivgp::tmcmc::ChainOutput;

use crate::config::{PreparedRun, RunMeta};
use crate::CliError;

/// Result of executing a prepared run.
pub struct RunArtifacts {
    pub meta: RunMeta,
    /// Initialization proved the constrained region unreachable.
    pub no_critical_point: bool,
    pub output: Option<RunOutput>,
    pub count_threshold: f64,
}

impl RunArtifacts {
    pub fn estimates(&self) -> &[Estimate] {
        self.output
            .as_ref()
            .map(|o| o.estimates.as_slice())
            .unwrap_or(&[])
    }

    pub fn total_accepted(&self) -> usize {
        self.output
            .as_ref()
            .map(|o| o.reports.iter().map(|r| r.n_k).sum())
            .unwrap_or(0)
    }
}

/// Runs the staged optimizer (or the configured shortcut) for a prepared
/// configuration. An unreachable region is reported as a result, not an error.
pub fn execute(prep: &PreparedRun) -> Result<RunArtifacts, CliError> {
    let init = {
        let cache = build_cache(prep.init_data.clone(), prep.hp.clone())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let target = PosteriorTarget::new(&cache, &prep.region, &prep.objective)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        match find_init(
            &target,
            &prep.region,
            prep.configured_init.as_ref(),
            prep.init_seed,
        ) {
            Ok(x0) => x0,
            Err(CoreError::InitSearchFailed { .. }) => {
                return Ok(RunArtifacts {
                    meta: prep.meta.clone(),
                    no_critical_point: true,
                    output: None,
                    count_threshold: prep.count_threshold,
                });
            }
            Err(e) => return Err(CliError::Runtime(e.to_string())),
        }
    };
    let mut tm = prep.tmcmc.clone();
    tm.init = init;

    let mut settings: StageSettings = prep.settings.clone();
    if prep.shortcut.is_some() {
        settings.stages = 0;
    }

    let run_once = || -> Result<RunOutput, CoreError> {
        let mut out = optimizer::run(
            &prep.objective,
            &prep.region,
            &tm,
            &prep.hp,
            prep.init_data.clone(),
            &settings,
        )?;
        if let Some(reducer) = prep.shortcut {
            out.estimates = vec![shortcut_estimate(
                &out.particles,
                &prep.objective,
                reducer,
                settings.det_tol,
            )?];
        }
        Ok(out)
    };

    let output = if prep.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(prep.workers)
            .build()
            .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
        pool.install(run_once)
    } else {
        run_once()
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    Ok(RunArtifacts {
        meta: prep.meta.clone(),
        no_critical_point: false,
        output: Some(output),
        count_threshold: prep.count_threshold,
    })
}

/// `estimates.json` document. Field order is fixed so identical runs are
/// byte-identical.
#[derive(Debug, Serialize, Deserialize)]
pub struct EstimatesDoc {
    pub objective: String,
    pub mode: String,
    pub seed: u64,
    pub no_critical_point_in_region: bool,
    pub total_accepted: usize,
    pub estimates: Vec<Estimate>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CountDoc {
    pub y: Vec<usize>,
    pub k: usize,
    pub threshold: f64,
    pub converged: Option<usize>,
    pub table: Vec<CountRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CountRow {
    pub m: usize,
    pub mean: f64,
    pub variance: f64,
}

pub fn estimates_doc(a: &RunArtifacts) -> EstimatesDoc {
    EstimatesDoc {
        objective: a.meta.objective.clone(),
        mode: a.meta.mode.clone(),
        seed: a.meta.seed,
        no_critical_point_in_region: a.no_critical_point,
        total_accepted: a.total_accepted(),
        estimates: a.estimates().to_vec(),
        diagnostics: a
            .output
            .as_ref()
            .map(|o| o.diagnostics.clone())
            .unwrap_or_default(),
    }
}

pub fn count_doc(a: &RunArtifacts) -> Result<CountDoc, CliError> {
    let record: CountRecord = a
        .output
        .as_ref()
        .map(|o| o.count.clone())
        .unwrap_or_default();
    let (table, converged) = if record.k() == 0 {
        (Vec::new(), None)
    } else {
        let mut table = Vec::new();
        for m in 0..=record.max_count() {
            let DpPosteriorSummary { m, mean, variance } =
                dp_mean_var(m, &record).map_err(|e| CliError::Runtime(e.to_string()))?;
            table.push(CountRow { m, mean, variance });
        }
        let converged = converged_count(&record, a.count_threshold)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        (table, converged)
    };
    Ok(CountDoc {
        k: record.k(),
        y: record.y,
        threshold: a.count_threshold,
        converged,
        table,
    })
}

pub fn trace_csv(chain: Option<&ChainOutput>, dim: usize) -> String {
    let mut s = String::from("iter");
    for j in 1..=dim {
        let _ = write!(s, ",x_{j}");
    }
    s.push_str(",log_post,move_accepted\n");
    if let Some(chain) = chain {
        for i in 0..chain.samples.len() {
            let _ = write!(s, "{}", chain.iterations[i]);
            for v in chain.samples[i].iter() {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(
                s,
                ",{},{}",
                chain.log_densities[i],
                u8::from(chain.move_accepted[i])
            );
        }
    }
    s
}

pub fn stages_csv(a: &RunArtifacts) -> String {
    let mut s = String::from("k,eta_k,n_k,dataset_size\n");
    if let Some(out) = &a.output {
        for r in &out.reports {
            let _ = writeln!(s, "{},{},{},{}", r.k, r.eta_k, r.n_k, r.dataset_size);
        }
    }
    s
}

/// Writes the four run products into `dir` (created if missing).
pub fn write_outputs(a: &RunArtifacts, dim: usize, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("create {}: {e}", dir.display())))?;
    let io = |e: std::io::Error| CliError::Runtime(format!("write outputs: {e}"));

    let estimates = serde_json::to_string_pretty(&estimates_doc(a)).expect("serializes");
    std::fs::write(dir.join("estimates.json"), estimates + "\n").map_err(io)?;

    let count = serde_json::to_string_pretty(&count_doc(a)?).expect("serializes");
    std::fs::write(dir.join("count.json"), count + "\n").map_err(io)?;

    std::fs::write(dir.join("stages.csv"), stages_csv(a)).map_err(io)?;
    std::fs::write(
        dir.join("trace.csv"),
        trace_csv(a.output.as_ref().map(|o| &o.chain), dim),
    )
    .map_err(io)?;
    Ok(())
}
