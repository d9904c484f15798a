//! Acceptance suite: runs every criterion, prints one PASS/FAIL line each and
//! fails at the end if any criterion failed.
//!
//! `cargo test --release --test acceptance -- --nocapture`

use std::time::Instant;

use dbc::assembly::{element_mass, element_stiffness, time_mass, time_stiffness, Discretization};
use dbc::checks::{adjoint_duality_check, coercivity_check, gradient_check, hessian_check};
use dbc::manufactured::{example51, run_study, StudyOptions, StudyReport};
use dbc::mesh::SpaceTimeMesh;
use dbc::optimizer::ReducedProblem;
use nalgebra::DMatrix;

const LEVELS: [(usize, usize); 5] = [(4, 4), (8, 6), (16, 12), (32, 23), (64, 46)];

/// Reference errors (state, adjoint, control) per level.
const REFERENCE: [[f64; 3]; 5] = [
    [0.02610199, 0.00690363, 0.09476646],
    [0.01401513, 0.00341977, 0.05263751],
    [0.00707057, 0.00165730, 0.02631136],
    [0.00357310, 0.00081186, 0.01342729],
    [0.00178706, 0.00040030, 0.00671436],
];

struct Verdict {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn last_two(rates: impl Iterator<Item = Option<f64>>) -> Vec<f64> {
    let all: Vec<f64> = rates.flatten().collect();
    all[all.len().saturating_sub(2)..].to_vec()
}

fn rate_criterion(id: usize, name: &'static str, rates: Vec<f64>, lo: f64, hi: f64) -> Verdict {
    Verdict {
        id,
        name,
        passed: rates.len() == 2 && rates.iter().all(|r| (lo..=hi).contains(r)),
        detail: format!("last two {:.3?}, required in [{lo}, {hi}]", rates),
    }
}

fn study_criteria(report: &StudyReport) -> Vec<Verdict> {
    let levels = &report.levels;
    let mut out = vec![
        rate_criterion(1, "state rate in h", last_two(levels.iter().map(|l| l.rate_state_h)), 0.85, 1.15),
        rate_criterion(2, "adjoint rate in h", last_two(levels.iter().map(|l| l.rate_adjoint_h)), 0.9, 1.2),
        rate_criterion(3, "control rate in sigma", last_two(levels.iter().map(|l| l.rate_control_sigma)), 0.9, 1.1),
    ];

    let l3 = levels.iter().position(|l| (l.n, l.steps) == LEVELS[2]).map(|i| &levels[i]);
    let (passed, detail) = match l3 {
        Some(l) => {
            let measured = [l.err_state, l.err_adjoint, l.err_control];
            let dev: Vec<f64> = measured.iter().zip(REFERENCE[2]).map(|(m, r)| m / r - 1.0).collect();
            (
                dev.iter().all(|d| d.abs() <= 0.2),
                format!(
                    "state {:.5e} ({:+.1}%), adjoint {:.5e} ({:+.1}%), control {:.5e} ({:+.1}%), required within 20%",
                    measured[0],
                    100.0 * dev[0],
                    measured[1],
                    100.0 * dev[1],
                    measured[2],
                    100.0 * dev[2]
                ),
            )
        }
        None => (false, "level (16, 12) missing".into()),
    };
    out.push(Verdict { id: 4, name: "absolute errors at M = 12", passed, detail });

    let worst = levels
        .iter()
        .map(|l| l.diagnostics.stationarity.max(l.diagnostics.complementarity).max(l.diagnostics.infeasibility))
        .fold(0.0f64, f64::max);
    out.push(Verdict {
        id: 8,
        name: "KKT residuals on every level",
        passed: levels.len() == LEVELS.len() && worst < 1e-8,
        detail: format!("worst {worst:.2e} over {} levels, required < 1e-8", levels.len()),
    });

    let monotone = levels.windows(2).all(|w| {
        w[1].err_state <= w[0].err_state && w[1].err_adjoint <= w[0].err_adjoint && w[1].err_control <= w[0].err_control
    });
    println!("info errors non-increasing along the levels: {monotone}");
    out
}

fn derivative_criteria() -> Vec<Verdict> {
    let case = example51();
    let problem =
        ReducedProblem::new(SpaceTimeMesh::unit(2, 2).unwrap(), case.lambda, case.q_a, case.q_b, &case.data(), Default::default())
            .unwrap();
    let mut out = Vec::new();

    let grad = gradient_check(&problem, 5, 20, 1e-4).unwrap();
    out.push(Verdict {
        id: 5,
        name: "finite-difference gradient",
        passed: grad < 1e-6,
        detail: format!("worst relative error {grad:.2e} over 20 directions, required < 1e-6"),
    });

    let worst_duality = (2..=4)
        .flat_map(|n| (1..=4).map(move |m| (n, m)))
        .take(10)
        .enumerate()
        .map(|(i, (n, m))| {
            let disc = Discretization::new(SpaceTimeMesh::unit(n, m).unwrap(), Default::default()).unwrap();
            adjoint_duality_check(&disc, 100 + i as u64, 1).unwrap()
        })
        .fold(0.0f64, f64::max);
    out.push(Verdict {
        id: 6,
        name: "adjoint duality",
        passed: worst_duality < 1e-10,
        detail: format!("worst {worst_duality:.2e} over 10 instances, required < 1e-10"),
    });

    let margin = coercivity_check(&[(2, 3), (3, 3), (4, 3)], 11, 100).unwrap();
    out.push(Verdict {
        id: 7,
        name: "coercivity of the state form",
        passed: margin >= 0.0,
        detail: format!("min B(v,v) - sum k|grad v|^2 = {margin:.3e} over 100 states, required >= 0"),
    });

    // dense reduced Hessian from gradient differences
    let zero = problem.zero_control();
    let g0 = problem.reduced_gradient(&zero).unwrap();
    let dim = zero.len();
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = zero.clone();
        e.values_mut()[j] = 1.0;
        let gj = problem.reduced_gradient(&e).unwrap();
        for i in 0..dim {
            h[(i, j)] = gj.values()[i] - g0.values()[i];
        }
    }
    let a = dbc::assembly::assemble_control_seminorm(problem.mesh()).unwrap().to_dense();
    let a = DMatrix::from_fn(dim, dim, |i, j| a[i][j]);
    let dense_asym = (&h - h.transpose()).abs().max();
    let gram = &h - a * problem.lambda;
    let min_eig = ((&gram + gram.transpose()) * 0.5).symmetric_eigenvalues().min();
    let (asym, margin) = hessian_check(&problem, 9, 10).unwrap();
    out.push(Verdict {
        id: 9,
        name: "Hessian symmetry and lower bound",
        passed: dense_asym < 1e-10 && asym < 1e-10 && min_eig >= -1e-12 && margin >= 0.0,
        detail: format!(
            "asymmetry dense {dense_asym:.1e} / products {asym:.1e} (< 1e-10), min eig(H - lambda A) {min_eig:.2e}, \
             min dHd - lambda dAd {margin:.2e} (>= 0)"
        ),
    });
    out
}

fn element_criterion() -> Verdict {
    let triangles = [
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [[0.2, 0.1], [1.3, 0.4], [0.5, 1.7]],
        [[0.0, 0.0], [0.25, 0.0], [0.25, 0.25]],
    ];
    let mut worst = 0.0f64;
    for p in triangles {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let (m, s) = (element_mass(area), element_stiffness(&p));
        for i in 0..3 {
            for j in 0..3 {
                let mass = if i == j { area / 6.0 } else { area / 12.0 };
                // (e_i . e_j) / (4 area) with e_i the edge opposite vertex i, rotated
                let edge = |v: usize| {
                    let (a, b) = (p[(v + 1) % 3], p[(v + 2) % 3]);
                    [b[0] - a[0], b[1] - a[1]]
                };
                let (ei, ej) = (edge(i), edge(j));
                let stiff = (ei[0] * ej[0] + ei[1] * ej[1]) / (4.0 * area);
                worst = worst.max((m[i][j] - mass).abs()).max((s[i][j] - stiff).abs());
            }
        }
    }
    for k in [0.25, 1.0 / 6.0, 1.0 / 46.0] {
        let (mt, st) = (time_mass(k), time_stiffness(k));
        let sym_m = [[k / 3.0, k / 6.0], [k / 6.0, k / 3.0]];
        for a in 0..2 {
            for b in 0..2 {
                let sign = if a == b { 1.0 } else { -1.0 };
                worst = worst.max((mt[a][b] - sym_m[a][b]).abs()).max((k * st[a][b] - sign).abs());
            }
        }
    }
    Verdict {
        id: 10,
        name: "element matrices",
        passed: worst <= 1e-14,
        detail: format!("worst entry deviation {worst:.1e}, required <= 1e-14"),
    }
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get()).min(LEVELS.len());
    let study = run_study(&LEVELS, &example51(), &StudyOptions { jobs, ..Default::default() });
    let mut verdicts = match &study {
        Ok(report) => study_criteria(report),
        Err(failure) => {
            println!("study failed: {failure}");
            study_criteria(&failure.partial)
        }
    };
    let report = study.as_ref().map_or_else(|f| &f.partial, |r| r);
    println!("{:>3} {:>3} {:>12} {:>7} {:>12} {:>7} {:>12} {:>7}", "n", "M", "state", "rate", "adjoint", "rate", "control", "rate");
    let rate = |r: Option<f64>| r.map_or("-".into(), |r| format!("{r:.2}"));
    for l in &report.levels {
        println!(
            "{:>3} {:>3} {:>12.5e} {:>7} {:>12.5e} {:>7} {:>12.5e} {:>7}",
            l.n,
            l.steps,
            l.err_state,
            rate(l.rate_state_h),
            l.err_adjoint,
            rate(l.rate_adjoint_h),
            l.err_control,
            rate(l.rate_control_sigma)
        );
    }
    let study_time = start.elapsed();
    verdicts.extend(derivative_criteria());
    verdicts.push(element_criterion());
    verdicts.sort_by_key(|v| v.id);

    for v in &verdicts {
        println!("{} [{:>2}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
    }
    println!("study time {:.1} s (target < 600 s, {jobs} jobs), total {:.1} s", study_time.as_secs_f64(), start.elapsed().as_secs_f64());

    let failed: Vec<String> = verdicts.iter().filter(|v| !v.passed).map(|v| format!("[{}] {}", v.id, v.name)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
