//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    central_difference, dense_inverse, lda_delta_psi, max_rel_diff, random_model, random_spd, random_unit,
    sample_index, sandwich_psi, Sandwich,
};
use ppda_core::asymptotics::{
    best_average_weight, c_eta, efficiency_limits, optimal_weight, pca_fisher_check, psi_lda, psi_matrix, psi_pca,
    AsymptoticMethod, DegeneratePoints,
};
use ppda_core::estimators::{maximize_on_sphere, msi_against, OptimizerOptions, PopulationIndex};
use ppda_core::indices::{evaluate, IndexSpec};
use ppda_core::linalg::{structured_rank1_inverse, SymmetricMatrix};
use ppda_core::mixture::{
    derive, ones_plus_identity, population_index, population_projected_moment, sample, MixtureModel,
};
use ppda_core::moments::center;
use ppda_core::sim::{run_grid_with_workers, write_outputs, ExperimentConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn delta1() -> f64 {
    DegeneratePoints::new().delta1
}

/// α₁ at least `gap` away from the degenerate proportions.
fn informative_alpha(rng: &mut impl Rng, gap: f64) -> f64 {
    let pts = DegeneratePoints::new();
    loop {
        let a = rng.random_range(0.05..0.95);
        if [pts.delta1, pts.delta2, 0.5].iter().all(|d| (a - d).abs() > gap) {
            return a;
        }
    }
}

fn balanced_limits() -> Outcome {
    let (ek, eg) = efficiency_limits(0.25).map_err(|e| e.to_string())?;
    check(
        (ek - 1.0).abs() <= 1e-12 && eg.abs() <= 1e-12,
        format!("eff_kappa = {ek}, eff_gamma = {eg}"),
    )
}

fn degenerate_flatness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(2..=6);
        let mk = random_model(p, delta1(), &mut rng);
        let ms = random_model(p, 0.5, &mut rng);
        let u = random_unit(p, &mut rng);
        let s = |m: &MixtureModel, k| population_projected_moment(m, &u, k).unwrap();
        let excess = s(&mk, 4) / s(&mk, 2).powi(2) - 3.0;
        let skew2 = s(&ms, 3).powi(2) / s(&ms, 2).powi(3);
        for v in [
            population_index(&mk, &u, &IndexSpec::kurtosis()),
            excess * excess,
            population_index(&ms, &u, &IndexSpec::skewness()),
            skew2,
        ] {
            worst = worst.max(v.abs());
        }
    }
    check(worst < 1e-12, format!("largest index value {worst:.3e} over 100 models and directions"))
}

fn fisher_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = OptimizerOptions::default();
    let mut worst: f64 = 1.0;
    for _ in 0..20 {
        let p = rng.random_range(2..=6);
        let alpha1 = informative_alpha(&mut rng, 0.05);
        let model = random_model(p, alpha1, &mut rng);
        let theta = derive(&model).unwrap().theta_unit;
        for spec in [IndexSpec::kurtosis(), IndexSpec::skewness(), IndexSpec::hybrid(0.8).unwrap()] {
            let obj = PopulationIndex { spec, model: &model };
            let mut best: Option<(f64, DVector<f64>)> = None;
            for _ in 0..=opts.restarts {
                let start = random_unit(p, &mut rng);
                let a = maximize_on_sphere(&obj, &start, &opts).map_err(|e| e.to_string())?;
                if best.as_ref().is_none_or(|(v, _)| a.value > *v) {
                    best = Some((a.value, a.direction));
                }
            }
            worst = worst.min(msi_against(&best.unwrap().1, &theta).0);
        }
    }
    check(worst >= 1.0 - 1e-8, format!("smallest |MSI| = 1 - {:.3e} over 20 models x 3 indices, {} starts each", 1.0 - worst, opts.restarts + 1))
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for pair in 0..50 {
        let p = rng.random_range(2..=6);
        let alpha1 = rng.random_range(0.1..0.9);
        let model = random_model(p, alpha1, &mut rng);
        let ld = sample(&model, 400, 1000 + pair).unwrap();
        let rows: Vec<Vec<f64>> = ld.data.rows().map(|r| r.to_vec()).collect();
        let c = center(&ld.data);
        let u = random_unit(p, &mut rng);
        for w_skew in [0.0, 1.0, 0.8] {
            let spec = if w_skew == 0.0 {
                IndexSpec::kurtosis()
            } else if w_skew == 1.0 {
                IndexSpec::skewness()
            } else {
                IndexSpec::hybrid(w_skew).unwrap()
            };
            let ev = evaluate(&spec, &c, &u).map_err(|e| e.to_string())?;
            let fd = central_difference(|v| sample_index(&rows, v, w_skew), &u, 1e-5);
            let rel = (&ev.gradient - &fd).norm() / ev.gradient.norm();
            worst = worst.max(rel);
        }
    }
    check(worst <= 1e-6, format!("largest relative gradient error {worst:.3e} over 50 pairs x 3 indices"))
}

fn lemma6_reproduction() -> Outcome {
    let config = ExperimentConfig::from_json(
        r#"{
        "schema": 1, "p": 3, "tau_grid": [10], "alpha1_grid": [0.1], "n_grid": [8000],
        "sigma": {"kind": "ones_plus_identity"},
        "mean": {"kind": "explicit", "by_tau": [{"tau": 10, "mu2": [3.06, 1.6, -1.11]}]},
        "estimators": [{"method": "lda"}, {"method": "pp", "index": "hybrid", "w1": 0.8}],
        "replicates": 200, "seed": 20240605
    }"#,
    )
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let result = run_grid_with_workers(&config, 4).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs <= 300.0;
    let mut parts = Vec::new();
    for cell in &result.cells {
        let ratio = cell.scaled_loss_mean / cell.theory_trace;
        ok &= (ratio - 1.0).abs() <= 0.15 && cell.failures == 0;
        parts.push(format!(
            "{}: mean n*2(1-MSI) = {:.4}, tr(Psi) = {:.4}, ratio {:.3}, nonconverged {}",
            cell.method, cell.scaled_loss_mean, cell.theory_trace, ratio, cell.nonconverged
        ));
    }
    ok &= result.cells.len() == 2;
    check(ok, format!("{}; {secs:.1} s", parts.join("; ")))
}

fn proportionality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = rng.random_range(2..=6);
        let alpha1 = informative_alpha(&mut rng, 0.02);
        let model = random_model(p, alpha1, &mut rng);
        let d = derive(&model).unwrap();
        let delta_u = lda_delta_psi(&model);
        let (psi_u, _) = psi_lda(&model).unwrap();
        worst = worst.max(max_rel_diff(&delta_u, psi_u.matrix()));
        for (method, route) in [
            (AsymptoticMethod::Kurtosis, Sandwich::Kurtosis),
            (AsymptoticMethod::Skewness, Sandwich::Skewness),
            (AsymptoticMethod::Hybrid(0.8), Sandwich::Hybrid(0.8)),
        ] {
            let summary = psi_matrix(method, &model).unwrap();
            let constant = method.constant(d.beta, d.tau).unwrap();
            let scaled = &delta_u * constant;
            let sandwich = sandwich_psi(&model, &route);
            worst = worst.max(max_rel_diff(&sandwich, &scaled));
            worst = worst.max(max_rel_diff(summary.psi.as_ref().unwrap().matrix(), &sandwich));
        }
    }
    check(
        worst <= 1e-10,
        format!("largest entrywise relative gap {worst:.3e} between sandwich and C * Psi_U over 20 models"),
    )
}

fn optimal_weight_anchors() -> Outcome {
    let low = best_average_weight(0.01).map_err(|e| e.to_string())?;
    let high = best_average_weight(1e6).map_err(|e| e.to_string())?;
    check(
        (0.78..=0.82).contains(&low) && (high - 0.7242).abs() <= 0.01,
        format!("best weight {low:.4} at tau = 0.01, {high:.4} at tau = 1e6"),
    )
}

fn discontinuity() -> Outcome {
    let d1 = delta1();
    let below = optimal_weight(d1 - 0.01, 5.0).map_err(|e| e.to_string())?.w1;
    let above = optimal_weight(d1 + 0.01, 5.0).map_err(|e| e.to_string())?.w1;
    let eps = 0.001;
    let beta = (d1 + eps) * (1.0 - d1 - eps);
    let mut argmax = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=10_000 {
        let w = 1e-6 + (1.0 - 2e-6) * i as f64 / 10_000.0;
        let eff = 1.0 / c_eta(beta, 5.0, w).unwrap();
        if eff > best {
            best = eff;
            argmax = w;
        }
    }
    let solver = optimal_weight(d1 + eps, 5.0).map_err(|e| e.to_string())?.w1;
    check(
        (below - above).abs() > 0.5 && argmax < 0.1 && solver < 0.1,
        format!(
            "w1* = {below:.4} below and {above:.4} above delta1; efficiency maximizer at eps = 0.001: {argmax:.4} (scan), {solver:.4} (solver)"
        ),
    )
}

fn random_orthonormal(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    a.qr().q()
}

fn pca_criteria() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ratio_gap: f64 = 0.0;
    let mut literal = Vec::new();
    for _ in 0..10 {
        let p = rng.random_range(2..=6);
        let variance = rng.random_range(0.5..3.0);
        let sigma = SymmetricMatrix::new(DMatrix::identity(p, p) * variance).unwrap();
        let h = common::normal_vector(p, &mut rng) * rng.random_range(0.5..3.0);
        let alpha1 = rng.random_range(0.1..0.9);
        let model = MixtureModel::centered(alpha1, h, sigma).unwrap();
        let d = derive(&model).unwrap();
        let tr_u = psi_lda(&model).unwrap().0.trace();
        let tr_pca = psi_pca(&model).map_err(|e| e.to_string())?.trace;
        let tb = d.tau * d.beta;
        ratio_gap = ratio_gap.max(((tr_u / tr_pca) - tb).abs() / tb);
        literal.push(((tr_pca / tr_u) * tb - 1.0).abs());
    }
    let fig9 = MixtureModel::centered(
        0.3,
        DVector::from_vec(vec![0.0, 5.0]),
        SymmetricMatrix::from_rows(&[vec![10.0, 0.3], vec![0.3, 1.0]]).unwrap(),
    )
    .unwrap();
    let fig9_check = pca_fisher_check(&fig9).map_err(|e| e.to_string())?;
    let mut inv_gap: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(2..=7);
        let w = random_orthonormal(p, &mut rng);
        let lambda: Vec<f64> = (1..p)
            .map(|_| rng.random_range(0.2..4.0) * if rng.random_bool(0.3) { -1.0 } else { 1.0 })
            .collect();
        let c = random_spd(p, &mut rng);
        let mut a = w.column(0) * (w.column(0).transpose() * c.matrix());
        for (k, l) in lambda.iter().enumerate() {
            a += w.column(k + 1) * w.column(k + 1).transpose() * *l;
        }
        let fast = structured_rank1_inverse(&lambda, &w, &c).map_err(|e| e.to_string())?;
        inv_gap = inv_gap.max(max_rel_diff(&fast, &dense_inverse(&a)));
    }
    let literal_max = literal.iter().copied().fold(0.0, f64::max);
    check(
        ratio_gap <= 1e-10 && !fig9_check.consistent && inv_gap <= 1e-9,
        format!(
            "spherical: tr(Psi_U)/tr(Psi_PCA) = tau*beta to {ratio_gap:.2e} (the reciprocal tr(Psi_PCA)/tr(Psi_U) equals 1/(tau*beta): max |ratio * tau*beta - 1| = {literal_max:.2e}); \
             counterexample consistent = {} (margin {:.3}, eigenvector residual {:.3}); structured inverse gap {inv_gap:.2e}",
            fig9_check.consistent, fig9_check.eigen_margin, fig9_check.eigenvector_residual
        ),
    )
}

fn moment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for m in 0..10 {
        let p = rng.random_range(2..=6);
        let alpha1 = rng.random_range(0.1..0.9);
        let model = random_model(p, alpha1, &mut rng);
        let u = random_unit(p, &mut rng);
        let ld = sample(&model, n, 5000 + m).unwrap();
        let mean = model.mean();
        let offset = u.dot(&mean);
        let t: Vec<f64> = ld.data.rows().map(|r| r.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>() - offset).collect();
        for k in 2..=6 {
            let vals: Vec<f64> = t.iter().map(|x| x.powi(k)).collect();
            let avg = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let exact = population_projected_moment(&model, &u, k as u32).unwrap();
            worst_z = worst_z.max((avg - exact).abs() / se);
        }
    }
    check(worst_z <= 3.0, format!("largest |z| = {worst_z:.2} over 10 models x k = 2..6"))
}

fn mahalanobis_fixture() -> Outcome {
    let model = MixtureModel::centered(0.3, DVector::from_vec(vec![0.81, -2.24, -0.36]), ones_plus_identity(3))
        .map_err(|e| e.to_string())?;
    let tau = derive(&model).map_err(|e| e.to_string())?.tau;
    check((tau - 5.0).abs() <= 0.01, format!("tau = {tau:.5}"))
}

fn determinism() -> Outcome {
    let config = ExperimentConfig::from_json(
        r#"{
        "schema": 1, "p": 3, "tau_grid": [5, 10], "alpha1_grid": [0.2, 0.4], "n_grid": [2, 200, 800],
        "sigma": {"kind": "ar1", "rho": 0.6}, "mean": {"kind": "random_at_distance"},
        "estimators": [{"method": "lda"}, {"method": "pca"}, {"method": "fobi", "index": "kurtosis"},
                       {"method": "pp", "index": "hybrid", "w1": "optimal", "optimizer": {"restarts": 3}}],
        "replicates": 8, "seed": 12, "layout": "curve"
    }"#,
    )
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for (run, workers) in [1usize, 4, 2, 1].into_iter().enumerate() {
        let mut c = config.clone();
        c.outputs.dir = dir.path().join(format!("run{run}"));
        let result = run_grid_with_workers(&c, workers).map_err(|e| e.to_string())?;
        let paths = write_outputs(&result, &c).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&paths[0]).map_err(|e| e.to_string())?);
    }
    let identical = files.windows(2).all(|w| w[0] == w[1]);
    let rows = files[0].iter().filter(|&&b| b == b'\n').count() - 1;
    check(
        identical && rows == 32,
        format!("{} runs with 1, 4, 2, 1 workers; {rows} rows; byte-identical = {identical}", files.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("balanced-case limits", balanced_limits),
        ("degenerate flatness", degenerate_flatness),
        ("Fisher consistency of the population indices", fisher_consistency),
        ("sample-index gradients vs finite differences", gradient_correctness),
        ("Monte-Carlo loss vs tr(Psi), n = 8000", lemma6_reproduction),
        ("Psi proportional to Psi_U", proportionality),
        ("optimal-weight anchors", optimal_weight_anchors),
        ("optimal-weight discontinuity", discontinuity),
        ("PCA criteria", pca_criteria),
        ("projected moments vs Monte Carlo", moment_oracle),
        ("Mahalanobis fixture", mahalanobis_fixture),
        ("simulation determinism across workers", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
