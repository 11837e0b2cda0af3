//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use sirude_core::experiment::{
    build_geography, coupling_to_peak_flow, fit_model, run_experiment, simulate_scenario, ExperimentConfig,
};
use sirude_core::metrics::{aie, daily_incidence, mae, median, Metric, Window};
use sirude_core::models::{fit_sir, initial_params, make_target_view, training_loss_grad, FitConfig, ModelKind};
use sirude_core::ode::integrate_rk4;
use sirude_core::sim::Scenario;
use sirude_core::sindy::{build_library, sparse_regression, Library, Method};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::paper();
    let (geo, m) = build_geography(&cfg).unwrap();
    let mut worst = 0.0f64;
    let mut cells = 0usize;
    for &scenario in &cfg.scenarios {
        let data = simulate_scenario(&cfg, &geo, &m, scenario).unwrap();
        let [inits, regions, _, days] = data.shape();
        for init in 0..inits {
            for region in 0..regions {
                let pop = data.populations()[region];
                for day in 1..=days {
                    let total: f64 = data.state(init, region, day).iter().sum();
                    worst = worst.max((total - pop).abs() / pop);
                    cells += 1;
                }
            }
        }
    }
    let t = secs(start.elapsed());
    outcome(
        worst <= 1e-6 && t <= 120.0,
        format!("{cells} cells, max |S+I+R-N|/N = {worst:.2e} (<= 1e-6), {t:.1} s (<= 120 s)"),
    )
}

fn decay_error(dt: f64) -> f64 {
    let gamma = 0.1;
    let traj = integrate_rk4(|_, u, du| du[0] = -gamma * u[0], &[1.0], (0.0, 500.0), dt, 1.0).unwrap();
    (0..traj.len())
        .map(|k| {
            let exact = (-gamma * traj.times[k]).exp();
            (traj.state(k)[0] - exact).abs() / exact
        })
        .fold(0.0, f64::max)
}

fn integrator() -> Outcome {
    let err = decay_error(0.25);
    let coarse = decay_error(0.5);
    let fine = err;
    let factor = coarse / fine;
    outcome(
        err < 1e-6 && factor >= 12.0,
        format!("max relative error {err:.2e} at dt 0.25 (< 1e-6), halving factor {factor:.2} at dt 0.5 -> 0.25 (>= 12)"),
    )
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale).max(1e-300))
        .fold(0.0, f64::max)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::desk();
    cfg.n_regions = 2;
    cfg.n_initializations = 1;
    cfg.days = 10;
    cfg.train_split = 8;
    cfg.beta = 0.4;
    cfg.n_infected = 50;
    cfg.scenarios = vec![Scenario::NoRecovered];
    let (geo, m) = build_geography(&cfg).unwrap();
    let data = simulate_scenario(&cfg, &geo, &m, Scenario::NoRecovered).unwrap();
    let view = make_target_view(&data, 0, 0, (1, 10)).unwrap();
    let fit = FitConfig::default();
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for kind in ModelKind::TRAINED {
        let mut kind_worst = 0.0f64;
        for seed in 0..10 {
            let p = initial_params(kind, &view, &fit, seed).unwrap();
            let (_, grad) = training_loss_grad(kind, &view, &fit, &p).unwrap();
            let mut x = p.clone();
            let fd: Vec<f64> = (0..p.len())
                .map(|k| {
                    let h = 1e-6 * p[k].abs().max(1.0);
                    x[k] = p[k] + h;
                    let up = training_loss_grad(kind, &view, &fit, &x).unwrap().0;
                    x[k] = p[k] - h;
                    let down = training_loss_grad(kind, &view, &fit, &x).unwrap().0;
                    x[k] = p[k];
                    (up - down) / (2.0 * h)
                })
                .collect();
            kind_worst = kind_worst.max(rel_error(&grad, &fd));
        }
        parts.push(format!("{kind} {kind_worst:.1e}"));
        worst = worst.max(kind_worst);
    }
    let t = secs(start.elapsed());
    outcome(
        worst < 1e-4 && t <= 30.0,
        format!("max relative error over 10 seeds: {} (< 1e-4), {t:.1} s (<= 30 s)", parts.join(", ")),
    )
}

fn recovery() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::desk();
    cfg.decoupled = true;
    cfg.n_regions = 2;
    cfg.n_initializations = 1;
    cfg.n_infected = 20;
    cfg.beta = 0.3;
    cfg.gamma = 0.1;
    cfg.days = 500;
    cfg.train_split = 250;
    cfg.scenarios = vec![Scenario::NoRecovered];
    let (geo, m) = build_geography(&cfg).unwrap();
    let data = simulate_scenario(&cfg, &geo, &m, Scenario::NoRecovered).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for region in 0..cfg.n_regions {
        if data.state(0, region, 1)[1] == 0.0 {
            continue;
        }
        let view = make_target_view(&data, 0, region, cfg.train_days()).unwrap();
        let model = fit_sir(&view, &cfg.fit, 1).unwrap();
        let p = model.sir_params.unwrap();
        let eb = (p.beta - 0.3).abs() / 0.3;
        let eg = (p.gamma - 0.1).abs() / 0.1;
        worst = worst.max(eb).max(eg);
        parts.push(format!("region {}: beta {:.5}, gamma {:.5}", region + 1, p.beta, p.gamma));
    }
    let t = secs(start.elapsed());
    outcome(
        !parts.is_empty() && worst < 0.02 && t <= 60.0,
        format!("{}; max relative error {worst:.2e} (< 0.02), {t:.1} s (<= 60 s)", parts.join("; ")),
    )
}

struct DeskSeed {
    sir_ude_mae: f64,
    sir_mae: f64,
    sir_ude_aie: f64,
    ude_aie: f64,
    /// Selected initialization, median over regions.
    selected_ude_mae: f64,
    sindy_mae: f64,
}

fn desk_grid() -> (Vec<DeskSeed>, f64) {
    let start = Instant::now();
    let mut out = Vec::new();
    for seed in 1..=5 {
        let mut cfg = ExperimentConfig::desk();
        cfg.seed = seed;
        cfg.scenarios = vec![Scenario::NoRecovered];
        let run = run_experiment(&cfg).unwrap();
        let get = |kind, metric| {
            run.report
                .overall(Scenario::NoRecovered, kind, Window::Test, metric)
                .unwrap_or(f64::NAN)
        };
        let pair = run
            .sindy
            .as_ref()
            .and_then(|s| {
                s.comparison
                    .iter()
                    .find(|r| r.scenario == Scenario::NoRecovered && r.metric == Metric::Mae && r.window == Window::Test)
            })
            .map(|r| (r.sir_ude.unwrap_or(f64::NAN), r.sir_sindy.unwrap_or(f64::NAN)))
            .unwrap_or((f64::NAN, f64::NAN));
        let row = DeskSeed {
            sir_ude_mae: get(ModelKind::SirUde, Metric::Mae),
            sir_mae: get(ModelKind::SirFit, Metric::Mae),
            sir_ude_aie: get(ModelKind::SirUde, Metric::Aie),
            ude_aie: get(ModelKind::FullUde, Metric::Aie),
            selected_ude_mae: pair.0,
            sindy_mae: pair.1,
        };
        println!(
            "  desk seed {seed}: test MAE sir+ude {:.3} sir {:.3}; test AIE sir+ude {:.3} ude {:.3}; selected init MAE sir+ude {:.3} sir+sindy {:.3}",
            row.sir_ude_mae, row.sir_mae, row.sir_ude_aie, row.ude_aie, row.selected_ude_mae, row.sindy_mae
        );
        out.push(row);
    }
    (out, secs(start.elapsed()))
}

fn directional(grid: &[DeskSeed], t: f64) -> Outcome {
    let mae_wins = grid.iter().filter(|s| s.sir_ude_mae < s.sir_mae).count();
    let aie_wins = grid.iter().filter(|s| s.sir_ude_aie < s.ude_aie).count();
    outcome(
        mae_wins >= 4 && aie_wins >= 4 && t <= 900.0,
        format!(
            "MAE(sir+ude) < MAE(sir) on {mae_wins}/5, AIE(sir+ude) < AIE(ude) on {aie_wins}/5 (each >= 4), {t:.0} s (<= 900 s)"
        ),
    )
}

fn substitution(grid: &[DeskSeed]) -> Outcome {
    let gaps: Vec<f64> = grid
        .iter()
        .map(|s| (s.sindy_mae - s.selected_ude_mae).abs() / s.selected_ude_mae)
        .collect();
    let ok = gaps.iter().filter(|g| **g <= 0.10).count();
    let shown: Vec<String> = gaps.iter().map(|g| format!("{:.1}%", 100.0 * g)).collect();
    outcome(
        ok >= 4,
        format!("|MAE(sir+sindy) - MAE(sir+ude)| / MAE(sir+ude) per seed: {} (<= 10% on >= 4/5)", shown.join(", ")),
    )
}

fn planted_null() -> Outcome {
    let mut cfg = ExperimentConfig::desk();
    cfg.decoupled = true;
    cfg.n_initializations = 1;
    cfg.n_infected = 30;
    cfg.beta = 0.3;
    cfg.scenarios = vec![Scenario::NoRecovered];
    let (geo, m) = build_geography(&cfg).unwrap();
    let data = simulate_scenario(&cfg, &geo, &m, Scenario::NoRecovered).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for region in 0..cfg.n_regions {
        if data.state(0, region, 1)[1] == 0.0 {
            continue;
        }
        let view = make_target_view(&data, 0, region, cfg.train_days()).unwrap();
        let model = fit_model(ModelKind::SirUde, &view, &cfg.fit, 3).unwrap();
        let ratio = coupling_to_peak_flow(&model, &view, cfg.beta).unwrap();
        worst = worst.max(ratio);
        parts.push(format!("region {} {:.2e}", region + 1, ratio));
    }
    outcome(
        !parts.is_empty() && worst <= 0.02,
        format!("mean g / peak infection flow: {} (<= 0.02)", parts.join(", ")),
    )
}

fn sindy_cases() -> Outcome {
    let rows = 30;
    let x: Vec<f64> = (0..rows * 3)
        .map(|k| ((k / 3) as f64 * (0.3 + 0.2 * (k % 3) as f64) + (k % 3) as f64).sin())
        .collect();
    let linear: Vec<f64> = x.chunks_exact(3).map(|r| 2.0 * r[0] + 3.0).collect();
    let reg = sparse_regression(&build_library(&x, 3, Library::LinearBias).unwrap(), &linear, 0.1, Method::Stlsq).unwrap();
    let expected = [3.0, 2.0, 0.0, 0.0];
    let coef_err = reg
        .coefficients
        .iter()
        .zip(expected)
        .map(|(c, e)| (c - e).abs())
        .fold(0.0, f64::max);
    let support_ok = reg.support() == vec![0, 1];

    let quad: Vec<f64> = x.chunks_exact(3).map(|r| 1.0 + r[0] * r[0] - 0.5 * r[1] * r[2]).collect();
    let lin_fit = sparse_regression(&build_library(&x, 3, Library::LinearBias).unwrap(), &quad, 0.1, Method::Stlsq).unwrap();
    let poly_fit = sparse_regression(&build_library(&x, 3, Library::Poly2).unwrap(), &quad, 0.1, Method::Stlsq).unwrap();
    outcome(
        coef_err < 1e-8 && support_ok && lin_fit.fit_residual > 0.0 && poly_fit.fit_residual < 1e-8,
        format!(
            "linear max coefficient error {coef_err:.1e} (< 1e-8), exact support {support_ok}; quadratic residual LinearBias {:.3e} (> 0), Poly2 {:.1e} (< 1e-8)",
            lin_fit.fit_residual, poly_fit.fit_residual
        ),
    )
}

fn metric_cases() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    check("mae", mae_flat_pair(&[0.0, 0.0], &[1.0, 3.0]) == 2.0);
    let lam = daily_incidence(&[[100.0, 0.0, 0.0], [95.0, 5.0, 0.0]], 100.0);
    check("incidence", lam == vec![5.0]);
    check("aie", aie(&[5.0], &[3.0]).unwrap() == 2.0);
    check("median", median(&[4.0, 1.0, 3.0, 2.0]) == Some(2.5));
    let a = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
    let b = [[0.5, 2.5, 3.0], [4.0, 7.0, 5.0]];
    check("mae symmetry", mae(&a, &b).unwrap() == mae(&b, &a).unwrap());
    let scale = |t: &[[f64; 3]]| t.iter().map(|r| r.map(|v| 4.0 * v)).collect::<Vec<_>>();
    check("mae homogeneity", mae(&scale(&a), &scale(&b)).unwrap() == 4.0 * mae(&a, &b).unwrap());
    let traj = [[100.0, 0.0, 0.0], [96.0, 4.0, 0.0], [91.0, 7.0, 2.0], [90.0, 6.0, 4.0]];
    let total: f64 = daily_incidence(&traj, 100.0).iter().sum();
    check("incidence telescopes", total == (traj[0][0] - traj[3][0]) / 100.0 * 100.0);
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "mae([0,0],[1,3]) = 2, incidence 5, aie 2, median 2.5, symmetry, homogeneity, telescoping".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn mae_flat_pair(y: &[f64], y_hat: &[f64]) -> f64 {
    sirude_core::metrics::mae_flat(y, y_hat).unwrap()
}

fn run_all(config: &Path, out: &Path, jobs: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sirude"))
        .arg("--config")
        .arg(config)
        .args(["--seed", "11", "--jobs", &jobs.to_string(), "--out"])
        .arg(out)
        .arg("run-all")
        .env("RUST_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![("report.csv".to_string(), fs::read(dir.join("report.csv")).unwrap_or_default())];
    let mut models: Vec<_> = fs::read_dir(dir.join("models"))
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    models.sort();
    for path in models {
        files.push((path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap()));
    }
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::desk();
    cfg.n_initializations = 2;
    cfg.days = 60;
    cfg.train_split = 30;
    cfg.fit.sir.iterations = 200;
    cfg.fit.full_ude.iterations = 100;
    cfg.fit.sir_ude.adam_iterations = 100;
    cfg.fit.sir_ude.bfgs_iterations = 20;
    let config = tmp.path().join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if !(run_all(&config, &a, 1) && run_all(&config, &b, 3)) {
        return outcome(false, "run-all exited with an error".into());
    }
    let (fa, fb) = (tree_bytes(&a), tree_bytes(&b));
    let models = fa.len() - 1;
    let same = fa == fb && models > 0;
    outcome(
        same,
        format!("report.csv and {models} model files byte-identical across --jobs 1 and --jobs 3: {same}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "conservation", conservation()),
        (2, "integrator accuracy", integrator()),
        (3, "gradient correctness", gradients()),
        (4, "parameter recovery", recovery()),
    ];
    let (grid, t) = desk_grid();
    results.push((5, "directional reproduction", directional(&grid, t)));
    results.push((6, "planted-null coupling", planted_null()));
    results.push((7, "sindy recovery", sindy_cases()));
    results.push((8, "sindy substitution fidelity", substitution(&grid)));
    results.push((9, "metric hand cases", metric_cases()));
    results.push((10, "determinism", determinism()));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
