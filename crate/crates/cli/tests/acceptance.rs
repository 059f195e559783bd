//! End-to-end acceptance run. Drives the `levynoise` binary where a workflow
//! exists and the library otherwise, prints one line per criterion and fails
//! if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use levynoise::colored::{convolve_kernel, variance_colored};
use levynoise::white_noise::{box_indicator, char_functional};
use levynoise::{Axis, DftPlan, GridSpec, JumpMeasure, SpectralDensity, TestFunction};
use num_complex::Complex64;
use serde_json::Value;
use sha2::{Digest, Sha256};

struct Run {
    code: i32,
    stderr: String,
    elapsed: Duration,
}

fn levynoise(args: &[&str], out: &Path) -> Run {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_levynoise"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    Run {
        code: o.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        elapsed: start.elapsed(),
    }
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// The checks of a verify report whose names start with `prefix`.
fn checks<'a>(report: &'a Value, prefix: &str) -> Vec<&'a Value> {
    report["report"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"].as_str().unwrap().starts_with(prefix))
        .collect()
}

fn describe(c: &Value) -> String {
    match c["type"].as_str().unwrap() {
        "mc" => format!(
            "{} est {:.5} target {:.5} z {:+.2}",
            c["name"].as_str().unwrap(),
            c["estimate"].as_f64().unwrap(),
            c["target"].as_f64().unwrap(),
            c["z"].as_f64().unwrap()
        ),
        "ecf" => format!(
            "{} max dev {:.3e} band {:.3e}",
            c["name"].as_str().unwrap(),
            c["max_deviation"].as_f64().unwrap(),
            c["band"].as_f64().unwrap()
        ),
        _ => format!("{}: {}", c["name"].as_str().unwrap(), c["detail"].as_str().unwrap()),
    }
}

fn all_pass(cs: &[&Value]) -> bool {
    !cs.is_empty() && cs.iter().all(|c| c["pass"].as_bool() == Some(true))
}

#[derive(Default)]
struct Ledger {
    results: Vec<(usize, bool)>,
}

impl Ledger {
    fn record(&mut self, n: usize, title: &str, pass: bool, details: &[String]) {
        println!("criterion {n:>2} {} {title}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("              {d}");
        }
        self.results.push((n, pass));
    }
}

fn sha256_files(dir: &Path, names: &[&str]) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(std::fs::read(dir.join(n)).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn verify(ledger_dir: &Path, suite: &str) -> (Run, Value) {
    let run = levynoise(&["verify", "--suite", suite], ledger_dir);
    assert!(run.code == 0 || run.code == 2, "verify {suite}: exit {} {}", run.code, run.stderr);
    let report = read_json(ledger_dir.join(format!("verify_{}.json", suite.replace('-', "_"))));
    (run, report)
}

fn white(ledger: &mut Ledger, dir: &Path) {
    let (run, report) = verify(dir, "white");
    let mc: Vec<&Value> = ["white: var", "white: cov"].iter().flat_map(|p| checks(&report, p)).collect();
    let fast = run.elapsed < Duration::from_secs(60);
    let mut details: Vec<String> = mc.iter().map(|c| describe(c)).collect();
    details.push(format!("runtime {:.1}s (limit 60s)", run.elapsed.as_secs_f64()));
    ledger.record(1, "white-noise variance and covariance", all_pass(&mc) && fast, &details);

    let ecf = checks(&report, "white: ecf");
    let nu = JumpMeasure::two_point(2.0, 1.0).unwrap();
    let grid = GridSpec::cube(1, 0.0, 2.0, 4, 1.0, 2).unwrap();
    let b = box_indicator(&grid, 0.0, 1.0, &[0.0], &[1.0]).unwrap();
    let at_pi = char_functional(&nu, &grid, &b, PI).unwrap();
    let exact = (at_pi - Complex64::new((-4.0f64).exp(), 0.0)).norm() < 1e-12;
    let mut details: Vec<String> = ecf.iter().map(|c| describe(c)).collect();
    details.push(format!("theory at u=π: {:.10} vs e^-4 = {:.10}", at_pi.re, (-4.0f64).exp()));
    ledger.record(2, "characteristic functional", all_pass(&ecf) && exact, &details);
}

fn small_jumps(ledger: &mut Ledger, dir: &Path) {
    let (run, report) = verify(dir, "small-jumps");
    let cs = checks(&report, "small jumps");
    let details: Vec<String> = cs.iter().map(|c| describe(c)).collect();
    ledger.record(3, "small-jump consistency", run.code == 0 && all_pass(&cs) && cs.len() == 5, &details);
}

fn colored(ledger: &mut Ledger, dir: &Path) {
    let (run, report) = verify(dir, "colored");
    let mut cs: Vec<&Value> = ["colored: kernel", "colored: var X_t", "colored: var regression intercept"]
        .iter()
        .flat_map(|p| checks(&report, p))
        .collect();
    let fast = run.elapsed < Duration::from_secs(300);
    let mut details: Vec<String> = cs.iter().map(|c| describe(c)).collect();
    details.push(format!("runtime {:.1}s (limit 300s)", run.elapsed.as_secs_f64()));
    let pass = all_pass(&cs) && checks(&report, "colored: var X_t").len() == 3 && fast;
    ledger.record(4, "colored-noise variance growth", pass, &details);

    cs = checks(&report, "colored: cov X_s, X_t - X_s");
    let details: Vec<String> = cs.iter().map(|c| describe(c)).collect();
    ledger.record(5, "uncorrelated increments", all_pass(&cs), &details);
}

fn existence(ledger: &mut Ledger, dir: &Path) {
    let run = levynoise(&["existence"], dir);
    let rows = levynoise_cli::commands::read_existence(&dir.join("existence.csv")).unwrap();
    let mut wrong = Vec::new();
    for r in &rows {
        let d = r.d as f64;
        let tempered = r.alpha < d;
        let solvable = d - 2.0 < r.alpha && r.alpha < d;
        if r.tempered != tempered || r.solvable != solvable {
            wrong.push(format!("d={} α={}: got ({}, {}), want ({tempered}, {solvable})", r.d, r.alpha, r.tempered, r.solvable));
        }
    }
    let mut details = vec![format!("{} rows over d ∈ {{1,2,3}}, {} mismatches", rows.len(), wrong.len())];
    details.extend(wrong.iter().cloned());
    ledger.record(6, "existence phase diagram", run.code == 0 && rows.len() == 18 && wrong.is_empty(), &details);
}

fn solver(ledger: &mut Ledger, dir: &Path) {
    let (run, report) = verify(dir, "solver");
    let per_op = run.elapsed / 2;
    for (n, op) in [(7, "heat"), (8, "wave")] {
        let cs = checks(&report, &format!("{op}:"));
        let fast = per_op < Duration::from_secs(600);
        let mut details: Vec<String> = cs.iter().map(|c| describe(c)).collect();
        details.push(format!("runtime {:.1}s for both operators (limit 600s each)", run.elapsed.as_secs_f64()));
        ledger.record(n, &format!("{op}-equation variance identity"), all_pass(&cs) && fast, &details);
    }
}

fn determinism(ledger: &mut Ledger, dir: &Path) {
    let mut details = Vec::new();
    let mut pass = true;
    let cases: [(&[&str], &[&str]); 3] = [
        (&["simulate"], &["noise.csv", "simulate.json"]),
        (&["solve", "--replicas", "200", "--seed", "11"], &["solution.csv", "solve.json"]),
        (&["verify", "--suite", "white", "--replicas", "200"], &["verify_white.json"]),
    ];
    for (args, files) in cases {
        let a = dir.join(format!("{}-a", args[0]));
        let b = dir.join(format!("{}-b", args[0]));
        let ra = levynoise(args, &a);
        let mut with_threads = args.to_vec();
        with_threads.extend(["--threads", "3"]);
        let rb = levynoise(&with_threads, &b);
        let (ha, hb) = (sha256_files(&a, files), sha256_files(&b, files));
        let same = ra.code == 0 && rb.code == 0 && ha == hb;
        pass &= same;
        details.push(format!("{}: {} {}", args.join(" "), &ha[..16], if same { "identical" } else { "DIFFERENT" }));
    }
    ledger.record(9, "bit-reproducible outputs", pass, &details);
}

fn gaussian(x: &[f64]) -> f64 {
    (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
}

fn dft_and_translation(ledger: &mut Ledger) {
    let mut details = Vec::new();
    let mut pass = true;
    for axes in [vec![Axis::new(-20.0, 20.0, 512)], vec![Axis::new(-12.0, 12.0, 96), Axis::new(-10.0, 14.0, 80)]] {
        let grid = GridSpec::new(axes.clone(), 1.0, 1).unwrap();
        let plan = DftPlan::new(&axes);
        let phi: Vec<f64> = grid.sample_space(gaussian);
        let spec = plan.forward_real(&phi).unwrap();
        let back = plan.inverse(&spec).unwrap();
        let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let round = back.iter().zip(&phi).map(|(b, p)| (b - p).norm()).fold(0.0, f64::max) / scale;
        let space: f64 = phi.iter().map(|v| v * v).sum::<f64>() * grid.spatial_cell_volume();
        let freq: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() * plan.frequency_cell_volume()
            / (2.0 * PI).powi(axes.len() as i32);
        let exact = PI.powf(axes.len() as f64 / 2.0);
        let parseval = ((space - freq) / freq).abs();
        let continuous = ((freq - exact) / exact).abs();
        let ok = round < 1e-8 && parseval < 1e-8 && continuous < 1e-8;
        pass &= ok;
        details.push(format!(
            "d={}: round trip {round:.1e}, Parseval {parseval:.1e}, vs ∫φ² {continuous:.1e}",
            axes.len()
        ));
    }

    let h = SpectralDensity::riesz(0.5, 1).unwrap();
    let phi = TestFunction::smoothed_indicator(vec![-1.0], vec![1.5], 0.3).unwrap();
    let base = variance_colored(&phi, &h, 2.0, 1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for shift in [0.37, -2.5, 7.125] {
        let moved = variance_colored(&phi.translated(&[shift]).unwrap(), &h, 2.0, 1.0, 1.0).unwrap();
        worst = worst.max(((moved - base) / base).abs());
    }
    let bump = TestFunction::gaussian_bump(vec![0.3], 1.0, 1.0).unwrap();
    let axes = [Axis::new(-20.0, 20.0, 1024)];
    let k0 = convolve_kernel(&bump, &h, &DftPlan::new(&axes)).unwrap().grid_norm_sq;
    for shift in [0.37, -2.5, 7.125] {
        let moved = [Axis::new(-20.0 + shift, 20.0 + shift, 1024)];
        let k = convolve_kernel(&bump.translated(&[shift]).unwrap(), &h, &DftPlan::new(&moved)).unwrap().grid_norm_sq;
        worst = worst.max(((k - k0) / k0).abs());
    }
    pass &= worst < 1e-8;
    details.push(format!("covariance quadrature and grid kernel norm under shifts: worst relative change {worst:.1e}"));
    ledger.record(10, "DFT convention and translation invariance", pass, &details);
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut ledger = Ledger::default();
    white(&mut ledger, &dir.join("white"));
    small_jumps(&mut ledger, &dir.join("small"));
    colored(&mut ledger, &dir.join("colored"));
    existence(&mut ledger, &dir.join("existence"));
    solver(&mut ledger, &dir.join("solver"));
    determinism(&mut ledger, &dir.join("determinism"));
    dft_and_translation(&mut ledger);

    ledger.results.sort_by_key(|r| r.0);
    let failed: Vec<usize> = ledger.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        ledger.results.len() - failed.len(),
        ledger.results.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
