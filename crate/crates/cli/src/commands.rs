use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use serde_json::json;

use ppda_core::asymptotics::{
    average_efficiency, best_average_weight, beta_of, c_eta, c_gamma, c_kappa, equal_efficiency_frontier,
    optimal_weight, pca_fisher_check, psi_lda, psi_matrix, psi_pca, AsymptoticMethod, DegeneratePoints,
};
use ppda_core::estimators::{
    fobi_direction, lda_direction, msi_against, pca_direction, pp_direction, EstimateResult, Method, OptimizerOptions,
};
use ppda_core::indices::{evaluate, IndexSpec};
use ppda_core::linalg::SymmetricMatrix;
use ppda_core::mixture::{derive, MixtureModel};
use ppda_core::moments::center;
use ppda_core::sim::{format_float, run_grid, write_outputs, ExperimentConfig, Layout, Table};
use ppda_core::{Error, Result};

use crate::input::{labeled, parse_grid, parse_matrix, parse_vector, read_csv, read_model};
use crate::{
    AsymptoticsArgs, Command, EstimateArgs, FisherCheckArgs, IndexArg, LayoutArg, MethodArg, SimulateArgs, Which,
};

pub fn dispatch(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Estimate(a) => estimate(a, out),
        Command::Asymptotics(a) => asymptotics(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::FisherCheck(a) => fisher_check(a, out),
    }
}

fn join(v: &DVector<f64>) -> String {
    v.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(",")
}

fn index_spec(index: IndexArg, w1: f64) -> Result<IndexSpec> {
    Ok(match index {
        IndexArg::Skewness => IndexSpec::skewness(),
        IndexArg::Kurtosis => IndexSpec::kurtosis(),
        IndexArg::Hybrid => IndexSpec::hybrid(w1)?,
    })
}

fn estimate(a: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    let csv = read_csv(&a.csv, a.labels.as_deref())?;
    let groups = csv.labels.as_ref().map(|raw| labeled(&csv.data, raw)).transpose()?;
    let spec = index_spec(a.index, a.w1)?;
    let opts = OptimizerOptions { max_iter: a.max_iter, tol: a.tol, restarts: a.restarts, ..Default::default() };
    let result = match a.method {
        MethodArg::Pp => pp_direction(&csv.data, &spec, &opts, a.seed)?,
        MethodArg::Pca => pca_direction(&csv.data)?,
        MethodArg::Fobi => {
            let u = fobi_direction(&csv.data, &spec)?;
            let value = evaluate(&spec, &center(&csv.data), &u)?.value;
            EstimateResult {
                direction: u,
                index_value: value,
                iterations: 0,
                converged: true,
                restarts_used: 0,
                grad_norm_at_opt: 0.0,
                method: Method::Fobi(spec),
                low_information: false,
            }
        }
        MethodArg::Lda => match &groups {
            Some((ld, _)) => lda_direction(ld)?,
            None => return Err(Error::Validation("--method lda needs --labels".into())),
        },
    };
    let lda = groups.as_ref().map(|(ld, names)| lda_direction(ld).map(|r| (r, names))).transpose()?;

    writeln!(out, "method: {}", result.method)?;
    if matches!(a.method, MethodArg::Pp | MethodArg::Fobi) && a.index == IndexArg::Hybrid {
        writeln!(out, "w1: {}", a.w1)?;
    }
    writeln!(out, "n: {}", csv.data.n())?;
    writeln!(out, "p: {}", csv.data.p())?;
    writeln!(out, "direction: {}", join(&result.direction))?;
    writeln!(out, "index_value: {}", format_float(result.index_value))?;
    writeln!(out, "converged: {}", result.converged)?;
    writeln!(out, "iterations: {}", result.iterations)?;
    writeln!(out, "restarts_used: {}", result.restarts_used)?;
    writeln!(out, "grad_norm: {}", format_float(result.grad_norm_at_opt))?;
    writeln!(out, "low_information: {}", result.low_information)?;
    let mut report = json!({
        "method": result.method.to_string(),
        "n": csv.data.n(),
        "p": csv.data.p(),
        "direction": result.direction.as_slice(),
        "index_value": result.index_value,
        "converged": result.converged,
        "iterations": result.iterations,
        "restarts_used": result.restarts_used,
        "grad_norm": result.grad_norm_at_opt,
        "low_information": result.low_information,
    });
    if matches!(a.method, MethodArg::Pp | MethodArg::Fobi) && a.index == IndexArg::Hybrid {
        report["w1"] = json!(a.w1);
    }
    if let Some((lda, names)) = lda {
        let (msi, _) = msi_against(&result.direction, &lda.direction);
        writeln!(out, "group1_label: {}", names[1])?;
        writeln!(out, "lda_direction: {}", join(&lda.direction))?;
        writeln!(out, "msi_vs_lda: {}", format_float(msi))?;
        report["group1_label"] = json!(names[1]);
        report["lda_direction"] = json!(lda.direction.as_slice());
        report["msi_vs_lda"] = json!(msi);
    }
    if let Some(path) = &a.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn table(header: &[&str]) -> Table {
    Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
}

fn efficiency(c: f64) -> f64 {
    1.0 / c
}

fn asymptotics(a: &AsymptoticsArgs, out: &mut dyn Write) -> Result<()> {
    let alphas = || parse_grid(&a.alpha1, false);
    let taus = || parse_grid(&a.tau, true);
    let weights = || parse_grid(&a.w1, false);
    let f = format_float;
    let t = match a.which {
        Which::Constants | Which::Efficiencies => {
            let mut t = if a.which == Which::Constants {
                table(&["alpha1", "tau", "w1", "beta", "c_kappa", "c_gamma", "c_eta"])
            } else {
                table(&["alpha1", "tau", "w1", "eff_kappa", "eff_gamma", "eff_eta"])
            };
            for alpha in alphas()? {
                let beta = beta_of(alpha)?;
                for tau in taus()? {
                    let (ck, cg) = (c_kappa(beta, tau)?, c_gamma(beta, tau)?);
                    for w in weights()? {
                        let ce = c_eta(beta, tau, w)?;
                        t.rows.push(if a.which == Which::Constants {
                            vec![f(alpha), f(tau), f(w), f(beta), f(ck), f(cg), f(ce)]
                        } else {
                            vec![f(alpha), f(tau), f(w), f(efficiency(ck)), f(efficiency(cg)), f(efficiency(ce))]
                        });
                    }
                }
            }
            t
        }
        Which::OptimalWeight => {
            let mut t = table(&["alpha1", "tau", "w1_opt", "unique", "c_eta", "eff_eta"]);
            for alpha in alphas()? {
                for tau in taus()? {
                    let o = optimal_weight(alpha, tau)?;
                    t.rows.push(vec![f(alpha), f(tau), f(o.w1), o.unique.to_string(), f(o.c_eta), f(efficiency(o.c_eta))]);
                }
            }
            t
        }
        Which::Average => {
            let mut t = table(&["w1", "tau", "average_efficiency"]);
            for w in weights()? {
                for tau in taus()? {
                    t.rows.push(vec![f(w), f(tau), f(average_efficiency(w, tau)?)]);
                }
            }
            t
        }
        Which::BestWeight => {
            let mut t = table(&["tau", "w1_best", "average_efficiency"]);
            for tau in taus()? {
                let w = best_average_weight(tau)?;
                t.rows.push(vec![f(tau), f(w), f(average_efficiency(w, tau)?)]);
            }
            t
        }
        Which::Frontier => {
            let mut t = table(&["tau", "alpha1_low", "alpha1_high"]);
            for tau in taus()? {
                let (lo, hi) = equal_efficiency_frontier(tau)?;
                t.rows.push(vec![f(tau), f(lo), f(hi)]);
            }
            t
        }
        Which::Epsilon => {
            let d1 = DegeneratePoints::new().delta1;
            let mut t = table(&["epsilon", "alpha1", "tau", "w1", "eff_eta"]);
            for eps in parse_grid(&a.epsilon, false)? {
                let alpha = d1 + eps;
                let beta = beta_of(alpha)?;
                for tau in taus()? {
                    for w in weights()? {
                        t.rows.push(vec![f(eps), f(alpha), f(tau), f(w), f(efficiency(c_eta(beta, tau, w)?))]);
                    }
                }
            }
            t
        }
        Which::PsiTrace => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| Error::Validation("--which psi-trace needs --model".into()))?;
            let model = read_model(path)?.build()?;
            let mut t = table(&["method", "w1", "constant", "trace", "efficiency_vs_lda"]);
            let na = || "NA".to_string();
            let mut methods = vec![(AsymptoticMethod::Lda, None), (AsymptoticMethod::Kurtosis, None), (AsymptoticMethod::Skewness, None)];
            for w in weights()? {
                methods.push((AsymptoticMethod::Hybrid(w), Some(w)));
            }
            for (m, w) in methods {
                let s = psi_matrix(m, &model)?;
                t.rows.push(vec![
                    m.to_string(),
                    w.map(f).unwrap_or_else(na),
                    f(s.constant),
                    f(s.trace),
                    f(s.efficiency_vs_lda),
                ]);
            }
            let lda_trace = psi_lda(&model)?.0.trace();
            match psi_pca(&model) {
                Ok(s) => t.rows.push(vec!["pca".into(), na(), f(s.constant), f(s.trace), f(lda_trace / s.trace)]),
                Err(Error::Inapplicable(_)) => t.rows.push(vec!["pca".into(), na(), na(), na(), na()]),
                Err(e) => return Err(e),
            }
            t
        }
    };
    let text = t.to_csv()?;
    match &a.output {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(w) = a.workers {
        config.workers = Some(w);
    }
    if let Some(d) = &a.output_dir {
        config.outputs.dir = d.clone();
    }
    if let Some(s) = &a.stem {
        config.outputs.stem = s.clone();
    }
    if let Some(l) = a.layout {
        config.layout = match l {
            LayoutArg::Heatmap => Layout::Heatmap,
            LayoutArg::Curve => Layout::Curve,
        };
    }
    if a.json {
        config.outputs.json = true;
    }
    config.validate()?;
    if !config.outputs.dir.exists() {
        log::info!("creating output directory {}", config.outputs.dir.display());
    }
    let start = Instant::now();
    let result = run_grid(&config)?;
    let paths = write_outputs(&result, &config)?;
    let secs = start.elapsed().as_secs_f64();
    for s in &result.skipped {
        log::warn!("skipped tau = {}, alpha1 = {}, n = {}: {}", s.tau, s.alpha1, s.n, s.reason);
    }
    let nonconverged: usize = result.cells.iter().map(|c| c.nonconverged).sum();
    let failures: usize = result.cells.iter().map(|c| c.failures).sum();
    writeln!(
        out,
        "cells: {}, skipped: {}, nonconverged: {nonconverged}, failures: {failures}, elapsed: {secs:.2} s",
        result.cells.len(),
        result.skipped.len()
    )?;
    for p in paths {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn flag_model(a: &FisherCheckArgs) -> Result<MixtureModel> {
    let mu2 = parse_vector(a.mu2.as_deref().unwrap_or_default())?;
    let p = mu2.len();
    let mu1 = match &a.mu1 {
        Some(s) => parse_vector(s)?,
        None => vec![0.0; p],
    };
    let sigma = match &a.sigma {
        Some(s) => SymmetricMatrix::from_rows(&parse_matrix(s)?)?,
        None => SymmetricMatrix::identity(p),
    };
    MixtureModel::new(a.alpha1, DVector::from_vec(mu1), DVector::from_vec(mu2), sigma)
}

fn is_spherical(s: &SymmetricMatrix) -> bool {
    let m = s.matrix();
    let d = m[(0, 0)];
    (0..s.dim()).all(|i| (0..s.dim()).all(|j| m[(i, j)] == if i == j { d } else { 0.0 }))
}

fn fisher_check(a: &FisherCheckArgs, out: &mut dyn Write) -> Result<()> {
    let model = match &a.model {
        Some(path) => read_model(path)?.build()?,
        None => flag_model(a)?,
    };
    let d = derive(&model)?;
    let check = pca_fisher_check(&model)?;
    writeln!(out, "consistent: {}", check.consistent)?;
    writeln!(out, "eigen_margin: {}", format_float(check.eigen_margin))?;
    writeln!(out, "eigenvector_residual: {}", format_float(check.eigenvector_residual))?;
    writeln!(out, "phi: {}", format_float(check.phi))?;
    writeln!(out, "tau: {}", format_float(d.tau))?;
    writeln!(out, "beta: {}", format_float(d.beta))?;
    if check.consistent {
        let pca = psi_pca(&model)?;
        let lda = psi_lda(&model)?.0.trace();
        writeln!(out, "pca_trace: {}", format_float(pca.trace))?;
        writeln!(out, "lda_trace: {}", format_float(lda))?;
        writeln!(out, "pca_efficiency_vs_lda: {}", format_float(lda / pca.trace))?;
    }
    if is_spherical(model.sigma()) {
        writeln!(out, "spherical_efficiency_tau_beta: {}", format_float(d.tau * d.beta))?;
    }
    Ok(())
}
