//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Criteria 1–5 drive the bundled benchmark reproductions at desk scale
//! (N = 10⁴ stored stage-0 samples unless stated otherwise); 6–9 exercise the
//! numerical core directly; 10 checks determinism and parallel equivalence of
//! the run products.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use derivgp::constraints::{in_region, DomainBox, RegionMode, RegionSpec};
use derivgp::counting::{dp_mean_var, CountRecord};
use derivgp::gp::{build_cache, ln_gamma, Dataset, GpHyperParams};
use derivgp::kernel::{self, LengthScales};
use derivgp::objectives::{self, SplitMix64};
use derivgp::optimizer::diagonal_design;
use derivgp::tmcmc::{run_chain, ProposalKernel, TmcmcConfig};

use derivgp_cli::bench::run_bench;
use derivgp_cli::config::{prepare, RunConfig};
use derivgp_cli::runner::{estimates_doc, execute, write_outputs};
use derivgp_cli::templates::{template, Scale};

fn data_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/aids_quarterly.txt")
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "{} criterion {criterion}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_example1_reproduction() {
    let started = Instant::now();
    let rep = run_bench("1", Scale::Desk, None).expect("bench 1 runs");
    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "{} | single-threaded elapsed {elapsed:.1}s (limit 300s)",
        rep.render_table().replace('\n', "; ")
    );
    report(
        "1 (example 1: x̂ within 0.01 of -1 and 2)",
        rep.all_passed() && elapsed <= 300.0,
        &detail,
    );
}

#[test]
fn criterion_02_example2_reproduction() {
    let rep = run_bench("2", Scale::Desk, None).expect("bench 2 runs");
    report(
        "2 (example 2: all six optima within 0.02)",
        rep.all_passed(),
        &rep.render_table().replace('\n', "; "),
    );
}

#[test]
fn criterion_03_example3_reproduction() {
    let rep = run_bench("3", Scale::Desk, None).expect("bench 3 runs");
    report(
        "3 (example 3: max, two saddles, inconclusive, empty minimum)",
        rep.all_passed(),
        &rep.render_table().replace('\n', "; "),
    );
}

#[test]
fn criterion_04_example4_reproduction() {
    let data = data_file();
    let rep = run_bench("4", Scale::Desk, Some(data)).expect("bench 4 runs");
    if let Some(msg) = &rep.skipped {
        println!("SKIP criterion 4: {msg}");
        return;
    }
    report(
        "4 (example 4: gradient norm < 0.755344, target <= 0.45)",
        rep.all_passed(),
        &rep.render_table().replace('\n', "; "),
    );
}

#[test]
fn criterion_05_example5_reproduction() {
    let d2 = run_bench("5-d2", Scale::Desk, None).expect("bench 5-d2 runs");
    let d5 = run_bench("5-d5", Scale::Desk, None).expect("bench 5-d5 runs");
    let d10 = run_bench("5-d10", Scale::Desk, None).expect("bench 5-d10 runs");
    let all = d2.all_passed() && d5.all_passed() && d10.all_passed();
    let detail = format!(
        "d2: {} | d5: {} | d10: {}",
        d2.render_table().replace('\n', "; "),
        d5.render_table().replace('\n', "; "),
        d10.render_table().replace('\n', "; ")
    );
    report(
        "5 (example 5: d=2 <= 0.05; d=5, d=10 finite and improving)",
        all,
        &detail,
    );
}

// ---------------------------------------------------------------------------
// criterion 6: dense-inverse / independent-t oracles at 1e-8 on 100 instances

fn t_log_density_at_zero(mu: &DVector<f64>, sigma: &DMatrix<f64>, shape: f64, rate: f64) -> f64 {
    let d = mu.len() as f64;
    let alpha = 2.0 * shape;
    let prec = (shape / rate) * sigma.clone().try_inverse().expect("invertible");
    let q = (mu.transpose() * &prec * mu)[(0, 0)];
    ln_gamma((alpha + d) / 2.0)
        - ln_gamma(alpha / 2.0)
        - d / 2.0 * (alpha * std::f64::consts::PI).ln()
        + 0.5 * prec.determinant().ln()
        - (alpha + d) / 2.0 * (1.0 + q / alpha).ln()
}

#[test]
fn criterion_06_posterior_math_oracles() {
    let mut rng = SplitMix64::new(2718281828);
    let mut worst_q: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    let mut worst_dens: f64 = 0.0;
    for _ in 0..100 {
        let n = 3 + (rng.next_u64() % 28) as usize;
        let d = 1 + (rng.next_u64() % 5) as usize;
        let half_width = 3.0f64.max(1.5 * (n as f64).powf(1.0 / d as f64));
        let mut pts: Vec<Vec<f64>> = Vec::new();
        while pts.len() < n {
            let c: Vec<f64> = (0..d).map(|_| half_width * rng.uniform_sym()).collect();
            if pts.iter().all(|p| {
                p.iter()
                    .zip(&c)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    > 1.0
            }) {
                pts.push(c);
            }
        }
        let x = DMatrix::from_fn(n, d, |i, j| pts[i][j]);
        let f = DVector::from_fn(n, |_, _| 2.0 * rng.normal());
        let mut hp = GpHyperParams::default_for_dim(d);
        hp.jitter = 0.0;
        hp.ls = LengthScales::new(DVector::from_fn(d, |_, _| 0.3 + 0.9 * rng.next_f64())).unwrap();
        hp.beta0 = DVector::from_fn(d + 1, |_, _| 0.3 * rng.uniform_sym());

        let cache = build_cache(Dataset::new(x.clone(), f.clone()).unwrap(), hp.clone()).unwrap();

        // dense path with explicit inverses
        let h = kernel::basis_matrix(&x);
        let s22 = kernel::corr_matrix(&x, &hp.ls);
        let k = &h * &hp.sigma0 * h.transpose() + &s22;
        let k_inv = k.try_inverse().unwrap();
        let r = &f - &h * &hp.beta0;
        let q_dense = (r.transpose() * &k_inv * &r)[(0, 0)];
        worst_q = worst_q.max((cache.q_form() - q_dense).abs() / q_dense.abs().max(1.0));

        let s22_inv = s22.try_inverse().unwrap();
        let s0_inv = hp.sigma0.clone().try_inverse().unwrap();
        let m_inv = (h.transpose() * &s22_inv * &h + &s0_inv)
            .try_inverse()
            .unwrap();
        let beta_hat = &m_inv * (h.transpose() * &s22_inv * &f + &s0_inv * &hp.beta0);
        let mut a = DMatrix::zeros(d, d + 1);
        for i in 0..d {
            a[(i, i + 1)] = 1.0;
        }

        let x_star: Vec<f64> = (0..d).map(|_| half_width * rng.uniform_sym()).collect();
        let mut s12 = DMatrix::zeros(d, n);
        for j in 0..n {
            let xj: Vec<f64> = x.row(j).iter().copied().collect();
            s12.set_column(j, &kernel::cross_cov_column(&x_star, &xj, &hp.ls).unwrap());
        }
        let mu_o = &a * &beta_hat + &s12 * &s22_inv * (&f - &h * &beta_hat);
        let tilde = kernel::grad_grad_cov(&hp.ls) - &s12 * &s22_inv * s12.transpose();
        let w = &a - &s12 * &s22_inv * &h;
        let sigma_o = &tilde + &w * &m_inv * w.transpose();
        let sigma_o = 0.5 * (&sigma_o + sigma_o.transpose());

        let (_, sigma) = cache.derivative_posterior_params(&x_star).unwrap();
        worst_sigma = worst_sigma.max((sigma.clone() - &sigma_o).norm() / sigma_o.norm().max(1.0));

        let got = cache.log_density_grad_zero(&x_star).unwrap();
        let want = t_log_density_at_zero(&mu_o, &sigma_o, cache.gamma_shape(), cache.gamma_rate());
        worst_dens = worst_dens.max((got - want).abs());
    }
    let passed = worst_q < 1e-8 && worst_sigma < 1e-8 && worst_dens < 1e-8;
    report(
        "6 (posterior math vs dense oracles, 100 instances)",
        passed,
        &format!(
            "worst rel err: Q {worst_q:.2e}, Sigma-hat {worst_sigma:.2e}; worst abs err log density {worst_dens:.2e} (tol 1e-8)"
        ),
    );
}

#[test]
fn criterion_07_derivative_convergence_rate() {
    let mut errs = Vec::new();
    for h in [2.0f64, 1.0, 0.5] {
        let n = (20.0 / h) as usize + 1;
        let x = DMatrix::from_fn(n, 1, |i, _| -10.0 + h * i as f64);
        let f = DVector::from_fn(n, |i, _| x[(i, 0)].sin());
        let cache = build_cache(
            Dataset::new(x, f).unwrap(),
            GpHyperParams::default_for_dim(1),
        )
        .unwrap();
        let mut sup: f64 = 0.0;
        for t in 0..200 {
            let xs = -10.0 + 20.0 * t as f64 / 199.0;
            let (mu, _) = cache.derivative_posterior_params(&[xs]).unwrap();
            sup = sup.max((mu[0] - xs.cos()).abs());
        }
        errs.push(sup);
    }
    let nonincreasing = errs[0] >= errs[1] && errs[1] >= errs[2];
    let slope = (errs[0].ln() - errs[2].ln()) / (2.0f64.ln() - 0.5f64.ln());
    report(
        "7 (derivative posterior sup-error rate over h = 2, 1, 0.5)",
        nonincreasing && slope >= 0.4,
        &format!("sup errors {errs:?}, log-log slope {slope:.2} (needs >= 0.4, nonincreasing)"),
    );
}

#[test]
fn criterion_08_dp_counting() {
    // hand-checked first-stage means, exact to 1e-12
    let r1 = CountRecord::new(vec![1]);
    let m1 = dp_mean_var(1, &r1).unwrap().mean;
    let r2 = CountRecord::new(vec![2]);
    let m2 = dp_mean_var(1, &r2).unwrap().mean;
    let hand_ok = (m1 - 0.75).abs() < 1e-12 && (m2 - 0.25).abs() < 1e-12;

    // constant sequence of length 200 concentrates
    let m_tilde = 3usize;
    let rec = CountRecord::new(vec![m_tilde; 200]);
    let s = dp_mean_var(m_tilde, &rec).unwrap();
    // direct evaluation of the stated variance display, as an upper bound scale
    let k = 200.0f64;
    let mass: f64 = (1..=200).rev().map(|j| 1.0 / (j as f64 * j as f64)).sum();
    let hits = k;
    let displayed = (mass + hits) * ((1.0 - 0.5f64.powi(m_tilde as i32)) * mass + k - hits)
        / ((mass + k).powi(2) * (mass + k + 1.0));
    let var_ok = s.variance <= 1.2 * displayed;
    report(
        "8 (DP counting: concentration and hand checks)",
        hand_ok && s.mean >= 0.99 && var_ok,
        &format!(
            "k=1 means {m1}/{m2}; constant-sequence mean {:.4} (needs >= 0.99), variance {:.3e} <= 1.2 x displayed {:.3e}",
            s.mean, s.variance, 1.2 * displayed
        ),
    );
}

#[test]
fn criterion_09_sampler_correctness() {
    // mixture kernel on an unconstrained 2-d standard normal
    let target = (2usize, |x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1]));
    let cfg = TmcmcConfig {
        n_iter: 200_000,
        burn_in: 0,
        thin: 1,
        p: 0.5,
        q: 0.5,
        scales1: DVector::from_element(2, 1.0),
        scales2: DVector::from_element(2, 1.0),
        kernel: ProposalKernel::Mixture,
        init: DVector::from_vec(vec![0.3, -0.3]),
        seed: 1234,
    };
    let out = run_chain(&cfg, &target).unwrap();
    let n = out.samples.len() as f64;
    let mut ok = true;
    let mut detail = String::new();
    for j in 0..2 {
        let mean: f64 = out.samples.iter().map(|s| s[j]).sum::<f64>() / n;
        let var: f64 = out
            .samples
            .iter()
            .map(|s| (s[j] - mean).powi(2))
            .sum::<f64>()
            / n;
        ok &= mean.abs() <= 0.05 && (var - 1.0).abs() <= 0.1;
        detail.push_str(&format!("coord {j}: mean {mean:.4}, var {var:.4}; "));
    }

    // constrained run: every stored sample satisfies its region predicate
    let obj = objectives::example1();
    let region = RegionSpec::new(
        1.0,
        RegionMode::Minimum,
        DomainBox::symmetric(1, 10.0),
        1e-3,
    )
    .unwrap();
    let data = diagonal_design(&obj, &[-10.0], &[10.0], 10).unwrap();
    let cache = build_cache(data, GpHyperParams::default_for_dim(1)).unwrap();
    let target = derivgp::optimizer::PosteriorTarget::new(&cache, &region, &obj).unwrap();
    let init = derivgp::optimizer::find_init(&target, &region, None, 5).unwrap();
    let ccfg = TmcmcConfig {
        n_iter: 40_000,
        burn_in: 5_000,
        thin: 5,
        p: 0.5,
        q: 0.5,
        scales1: DVector::from_element(1, 1.0),
        scales2: DVector::from_element(1, 1.0),
        kernel: ProposalKernel::Additive,
        init,
        seed: 77,
    };
    let cout = run_chain(&ccfg, &target).unwrap();
    let violations = cout
        .samples
        .iter()
        .filter(|s| !in_region(s.as_slice(), &region, &obj).unwrap())
        .count();
    ok &= violations == 0;
    detail.push_str(&format!("constrained-run support violations: {violations}"));
    report(
        "9 (mixture sampler moments; zero support violations)",
        ok,
        &detail,
    );
}

#[test]
fn criterion_10_determinism_and_parallel_equivalence() {
    let dir = std::env::temp_dir().join(format!("derivgp-acc10-{}", std::process::id()));
    let mut cfg: RunConfig = template("1-min", Scale::Desk).unwrap();
    cfg.run.output_dir = None;

    let render = |cfg: &RunConfig| -> (String, Vec<u8>) {
        let prep = prepare(cfg).unwrap();
        let artifacts = execute(&prep).unwrap();
        let sub = dir.join(format!("w{}-{}", prep.workers, prep.seed));
        write_outputs(&artifacts, prep.objective.dim(), &sub).unwrap();
        let bytes = std::fs::read(sub.join("estimates.json")).unwrap();
        (
            serde_json::to_string(&estimates_doc(&artifacts)).unwrap(),
            bytes,
        )
    };

    let (doc_a, bytes_a) = render(&cfg);
    // identical reruns
    let dir2 = dir.join("rerun");
    std::fs::create_dir_all(&dir2).unwrap();
    let prep = prepare(&cfg).unwrap();
    let artifacts = execute(&prep).unwrap();
    write_outputs(&artifacts, prep.objective.dim(), &dir2).unwrap();
    let bytes_rerun = std::fs::read(dir2.join("estimates.json")).unwrap();

    // four workers
    cfg.run.workers = Some(4);
    let (doc_b, bytes_b) = render(&cfg);

    let same_rerun = bytes_a == bytes_rerun;
    let same_workers = doc_a == doc_b && bytes_a == bytes_b;
    let _ = std::fs::remove_dir_all(&dir);
    report(
        "10 (byte-identical estimates.json across reruns and workers 1 vs 4)",
        same_rerun && same_workers,
        &format!("rerun identical: {same_rerun}; workers 1 vs 4 identical: {same_workers}"),
    );
}
