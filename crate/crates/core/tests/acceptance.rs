//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Criteria 1-9 run on an 8-thread pool. Every Monte Carlo result they
//! produce is recorded bit-for-bit; criterion 10 reruns the whole suite on a
//! single thread and compares the records byte for byte.

use std::time::Instant;

use matshrink::cli::{self, stein_cell, CommandKind, ExperimentConfig, OutputFormat};
use matshrink::estimators::{
    cauchy_schwarz_chain, cross_product_stats, efron_morris, estimate, js_shrink_vector,
    EstimatorSpec,
};
use matshrink::linalg::Mat;
use matshrink::oracles::{a_lambda, counterexample_quadratic, matrix_risk_origin};
use matshrink::replicate::with_threads;
use matshrink::risk::{
    dominance_check, make_theta, mc_matrix_risk, paired_risk, DominanceReport, ThetaScenario,
    Verdict, DEFAULT_Z_THRESHOLD,
};
use matshrink::sampling::{ModelSpec, SeedSpec, VarianceMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPS: u64 = 1_000_000;
const SEED: u64 = 42;
const Z: f64 = DEFAULT_Z_THRESHOLD;

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

/// Bit-exact transcript of every number a run produced.
#[derive(Default, PartialEq)]
struct Payload(Vec<String>);

impl Payload {
    fn record(&mut self, label: impl Into<String>, values: &[f64]) {
        let bits: Vec<String> = values.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        self.0.push(format!("{}:{}", label.into(), bits.join(",")));
    }

    fn record_mat(&mut self, label: impl Into<String>, m: &Mat) {
        self.record(label, m.as_slice());
    }

    fn record_text(&mut self, label: impl Into<String>, text: &str) {
        self.0.push(format!("{}:{}", label.into(), text));
    }

    fn record_report(&mut self, label: &str, r: &DominanceReport) {
        self.record_mat(format!("{label}/diff_mean"), &r.diff_mean);
        self.record_mat(format!("{label}/diff_se"), &r.diff_se);
        self.record(format!("{label}/min_eig"), &[r.min_eig, r.projected_se]);
        self.record_text(format!("{label}/verdict"), r.verdict.as_str());
    }
}

fn seed(stream: u64) -> SeedSpec {
    SeedSpec::new(SEED, stream)
}

fn scenarios() -> Vec<(&'static str, ThetaScenario)> {
    vec![
        ("zero", ThetaScenario::Zero),
        (
            "spike3",
            ThetaScenario::SpikeEqualColumns {
                kappa: 3.0,
                theta_star: None,
            },
        ),
        ("random", ThetaScenario::RandomGaussian { scale: 1.0, seed: 7 }),
    ]
}

fn model(scenario: &ThetaScenario, n: usize, p: usize, variance: VarianceMode) -> ModelSpec {
    let theta = make_theta(scenario, n, p).expect("theta");
    ModelSpec::new(theta, variance, None).expect("model")
}

fn criterion_1(payload: &mut Payload) -> Outcome {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let mut stream = 100;
    for n in [3usize, 5, 10] {
        for lambda2 in [0.0, 4.0, 25.0] {
            stream += 1;
            let t = Instant::now();
            let c = stein_cell(n, 1.0, lambda2, REPS, &seed(stream)).expect("stein cell");
            slowest = slowest.max(t.elapsed().as_secs_f64());
            payload.record(
                format!("c1/n{n}/l{lambda2}"),
                &[c.lhs, c.lhs_se, c.rhs, c.rhs_se, c.diff_se, c.series],
            );
            worst = worst.max(c.max_z());
            pass &= c.max_z() <= Z;
        }
    }
    pass &= slowest <= 60.0;
    Outcome {
        id: 1,
        title: "Stein identity: MC sides agree with each other and the series",
        pass,
        detail: format!("worst |z| = {worst:.3} (limit {Z}), slowest cell {slowest:.1}s"),
    }
}

fn criterion_2() -> Outcome {
    let grid = [0.0, 1.0, 4.0, 9.0, 25.0, 100.0];
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [3usize, 5, 6, 10, 30] {
        let vals: Vec<f64> = grid.iter().map(|&l| a_lambda(n, l).unwrap()).collect();
        pass &= vals[0] == 1.0;
        pass &= vals.windows(2).all(|w| w[1] < w[0]);
        pass &= vals.iter().all(|&v| v > 0.0 && v <= 1.0);
        notes.push(format!("n={n}: A(100)={:.5}", vals[5]));
    }
    Outcome {
        id: 2,
        title: "A(0) = 1, strictly decreasing, within (0, 1]",
        pass,
        detail: notes.join("; "),
    }
}

fn criterion_3(payload: &mut Payload) -> Outcome {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut stream = 300;
    for n in [3usize, 5, 10] {
        for p in [2usize, 3] {
            stream += 1;
            let m = model(&ThetaScenario::Zero, n, p, VarianceMode::Known { sigma2: 1.0 });
            let est = mc_matrix_risk(&m, &EstimatorSpec::diagonal(1.0), REPS, &seed(stream)).unwrap();
            let oracle = matrix_risk_origin(n, p, 1.0, 1.0).unwrap();
            payload.record_mat(format!("c3/n{n}p{p}/mean"), &est.mean);
            payload.record_mat(format!("c3/n{n}p{p}/se"), &est.se);
            for i in 0..p {
                for j in 0..p {
                    let z = (est.mean[(i, j)] - oracle[(i, j)]).abs() / est.se[(i, j)];
                    worst = worst.max(z);
                    pass &= z <= 4.0;
                }
            }
        }
    }
    Outcome {
        id: 3,
        title: "JS risk at the origin: diagonal n-(n-2), off-diagonal 0",
        pass,
        detail: format!("n in {{3,5,10}}, p in {{2,3}}; worst |z| = {worst:.3} (limit 4)"),
    }
}

/// Runs the dominance grid of criterion 4 for the given variance mode and
/// estimator constructor. Returns (all dominate, failures, slowest seconds).
fn dominance_grid(
    payload: &mut Payload,
    label: &str,
    stream_base: u64,
    variance: impl Fn() -> VarianceMode,
    make_spec: impl Fn(f64) -> EstimatorSpec,
) -> (bool, Vec<String>, f64) {
    let mut failures = Vec::new();
    let mut stream = stream_base;
    let mut slowest = 0.0f64;
    for (n, p) in [(5usize, 2usize), (6, 3), (10, 3)] {
        for frac in [0.5, 0.9] {
            let a = frac * 2.0 / p as f64;
            for (name, scenario) in scenarios() {
                stream += 1;
                let t = Instant::now();
                let m = model(&scenario, n, p, variance());
                let paired = paired_risk(&m, &make_spec(a), REPS, &seed(stream)).unwrap();
                let report = dominance_check(&paired.diff, Z).unwrap();
                slowest = slowest.max(t.elapsed().as_secs_f64());
                let key = format!("{label}/n{n}p{p}/a{frac}/{name}");
                payload.record_report(&key, &report);
                if report.verdict != Verdict::Dominates {
                    failures.push(format!(
                        "{key}: {} (min_eig {:.3e} se {:.1e})",
                        report.verdict.as_str(),
                        report.min_eig,
                        report.projected_se
                    ));
                }
            }
        }
    }
    (failures.is_empty() && slowest <= 300.0, failures, slowest)
}

fn criterion_4(payload: &mut Payload) -> Outcome {
    let (pass, failures, slowest) = dominance_grid(
        payload,
        "c4",
        400,
        || VarianceMode::Known { sigma2: 1.0 },
        EstimatorSpec::diagonal,
    );
    Outcome {
        id: 4,
        title: "Diagonal JS dominates the MLE for 0 < a < 2/p",
        pass,
        detail: if failures.is_empty() {
            format!("18/18 configurations DOMINATES; slowest {slowest:.1}s")
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_5(payload: &mut Payload) -> Outcome {
    let config = ExperimentConfig {
        command: CommandKind::Counterexample,
        n: 6,
        p: 2,
        sigma2: 1.0,
        nu: None,
        sigma_cov: None,
        scenario: ThetaScenario::SpikeEqualColumns {
            kappa: 20.0,
            theta_star: None,
        },
        estimator: matshrink::estimators::EstimatorKind::DiagonalJs,
        a: 1.5,
        a_grid: Vec::new(),
        lambda2_grid: Vec::new(),
        reps: REPS,
        master_seed: SEED,
        z_threshold: Z,
        output_format: OutputFormat::Json,
        output_path: None,
    };
    let report = cli::execute(&config).expect("counterexample");
    payload.record_text("c5/counterexample", &cli::results_payload(&report));
    let r = &report.results;
    let mc = r["mc_uniform_risk"].as_f64().unwrap();
    let se = r["mc_uniform_risk_se"].as_f64().unwrap();
    let predicted = counterexample_quadratic(6, 2, 20.0, 1.5).unwrap();
    let tol = (4.0 * se).max(0.01);
    let verdict = r["dominance"]["verdict"].as_str().unwrap().to_string();
    let mut pass = mc > 6.0 && (mc - predicted).abs() <= tol && verdict == "FAILS";
    let mut detail = format!(
        "a=1.5: projected risk {mc:.4} (se {se:.4}) vs predicted {predicted:.4}, tol {tol:.4}, {verdict}"
    );

    let mut stream = 500;
    let mut neg = Vec::new();
    for (name, scenario) in scenarios().into_iter().chain([(
        "spike20",
        ThetaScenario::SpikeEqualColumns {
            kappa: 20.0,
            theta_star: None,
        },
    )]) {
        stream += 1;
        let m = model(&scenario, 6, 2, VarianceMode::Known { sigma2: 1.0 });
        let paired = paired_risk(&m, &EstimatorSpec::diagonal(-0.1), REPS, &seed(stream)).unwrap();
        let rep = dominance_check(&paired.diff, Z).unwrap();
        payload.record_report(&format!("c5/neg/{name}"), &rep);
        pass &= rep.verdict == Verdict::Fails;
        neg.push(format!("{name} {}", rep.verdict.as_str()));
    }
    detail.push_str(&format!("; a=-0.1: {}", neg.join(", ")));
    Outcome {
        id: 5,
        title: "Sharpness counterexample: a outside (0, 2/p) fails",
        pass,
        detail,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut pass = true;
    let cases = 2000;
    for _ in 0..cases {
        let n = rng.random_range(1..8);
        let p = rng.random_range(1..7);
        let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = Mat::from_vec(n, p, data).unwrap();
        let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (quad, mid, bound) = cauchy_schwarz_chain(&g, &alpha).unwrap();
        let slack1 = (quad - mid) / mid.abs().max(f64::MIN_POSITIVE);
        let slack2 = (mid - bound) / bound.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(slack1).max(slack2);
        pass &= slack1 <= 1e-10 && slack2 <= 1e-10;
    }

    // Equality: |α_j|·‖g_(j)‖ all equal.
    let mut eq_worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..8);
        let p = rng.random_range(1..7);
        let mut g = Mat::zeros(n, p);
        let mut alpha = vec![0.0; p];
        let c = rng.random_range(0.5..2.0);
        for j in 0..p {
            let col: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.set_column(j, &col);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            alpha[j] = sign * c / norm;
        }
        let (_, mid, bound) = cauchy_schwarz_chain(&g, &alpha).unwrap();
        let rel = (mid - bound).abs() / bound;
        eq_worst = eq_worst.max(rel);
        pass &= rel <= 1e-10;
    }
    Outcome {
        id: 6,
        title: "Cauchy-Schwarz chain and its equality case",
        pass,
        detail: format!("{cases} random cases, worst slack {worst:.2e}; equality case worst rel gap {eq_worst:.2e}"),
    }
}

fn criterion_7(payload: &mut Payload) -> Outcome {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut stream = 700;
    for nu in [2u32, 5, 20] {
        for (name, scenario) in scenarios() {
            stream += 1;
            let m = model(&scenario, 6, 3, VarianceMode::Unknown { sigma2: 1.0, nu });
            let spec = EstimatorSpec::diagonal_unknown(0.5);
            let stats = cross_product_stats(&m, &spec, REPS, &seed(stream)).unwrap();
            let key = format!("c7/nu{nu}/{name}");
            payload.record(format!("{key}/delta"), &stats.delta);
            payload.record(format!("{key}/gamma"), &stats.gamma);
            payload.record(format!("{key}/diff_se"), &stats.diff_se);
            worst = worst.max(stats.max_z());
            pass &= stats.max_z() <= Z;
        }
    }
    let (dom_pass, failures, _) = dominance_grid(
        payload,
        "c7dom",
        750,
        || VarianceMode::Unknown { sigma2: 1.0, nu: 5 },
        EstimatorSpec::diagonal_unknown,
    );
    pass &= dom_pass;
    Outcome {
        id: 7,
        title: "Unknown variance: cross-product equality and dominance",
        pass,
        detail: if failures.is_empty() {
            format!("nu in {{2,5,20}}: worst |delta-gamma|/se = {worst:.3}; dominance grid (nu=5) 18/18 DOMINATES")
        } else {
            format!("worst z {worst:.3}; {}", failures.join("; "))
        },
    }
}

fn criterion_8(payload: &mut Payload) -> Outcome {
    let sigma = Mat::from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
    let (n, p) = (6usize, 2usize);
    let a = 0.9 * 2.0 / p as f64;
    let mut pass = true;
    let mut notes = Vec::new();
    let mut stream = 800;
    for (name, scenario) in scenarios() {
        stream += 1;
        let theta = make_theta(&scenario, n, p).unwrap();
        let m = ModelSpec::new(theta, VarianceMode::Known { sigma2: 1.0 }, Some(sigma.clone())).unwrap();
        let paired = paired_risk(&m, &EstimatorSpec::whitened(a), REPS, &seed(stream)).unwrap();
        let rep = dominance_check(&paired.diff, Z).unwrap();
        payload.record_report(&format!("c8/{name}"), &rep);
        pass &= rep.verdict == Verdict::Dominates;
        notes.push(format!("{name} {} (min_eig {:.3e})", rep.verdict.as_str(), rep.min_eig));
    }

    // Σ = I: whitened and diagonal estimates coincide bit for bit.
    let theta = make_theta(&ThetaScenario::RandomGaussian { scale: 1.0, seed: 8 }, n, p).unwrap();
    let m = ModelSpec::new(theta, VarianceMode::Known { sigma2: 1.0 }, Some(Mat::identity(p))).unwrap();
    let mut identical = true;
    for r in 0..10_000 {
        let draw = matshrink::sampling::draw(&m, &seed(899), r).unwrap();
        let w = estimate(&draw, &EstimatorSpec::whitened(a), &m).unwrap();
        let d = estimate(&draw, &EstimatorSpec::diagonal(a), &m).unwrap();
        identical &= w.as_slice().iter().zip(d.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let rw = mc_matrix_risk(&m, &EstimatorSpec::whitened(a), 100_000, &seed(898)).unwrap();
    let rd = mc_matrix_risk(&m, &EstimatorSpec::diagonal(a), 100_000, &seed(898)).unwrap();
    identical &= rw.mean == rd.mean && rw.se == rd.se;
    payload.record_mat("c8/identity/risk", &rw.mean);
    pass &= identical;
    notes.push(format!("Sigma=I bit-identical: {identical}"));
    Outcome {
        id: 8,
        title: "Whitened estimator dominates under correlated rows",
        pass,
        detail: notes.join("; "),
    }
}

fn criterion_9(payload: &mut Payload) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bitwise = true;
    for _ in 0..1000 {
        let n = rng.random_range(3..12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let em = efron_morris(&Mat::column_vector(&x).unwrap()).unwrap();
        let js = js_shrink_vector(&x, 1.0, 1.0).unwrap();
        bitwise &= em.as_slice().iter().zip(&js).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let m = model(
        &ThetaScenario::RandomGaussian { scale: 1.0, seed: 9 },
        10,
        3,
        VarianceMode::Known { sigma2: 1.0 },
    );
    let risk = mc_matrix_risk(&m, &EstimatorSpec::efron_morris(), REPS, &seed(900));
    let produced = match &risk {
        Ok(r) => {
            payload.record_mat("c9/risk/mean", &r.mean);
            payload.record_mat("c9/risk/se", &r.se);
            r.mean.as_slice().iter().all(|v| v.is_finite())
        }
        Err(_) => false,
    };
    Outcome {
        id: 9,
        title: "Efron-Morris: p=1 reduction and risk report",
        pass: bitwise && produced,
        detail: match risk {
            Ok(r) => format!("p=1 bitwise: {bitwise}; n=10 p=3 risk trace {:.4}", r.mean.trace()),
            Err(e) => format!("p=1 bitwise: {bitwise}; risk run failed: {e}"),
        },
    }
}

fn run_suite() -> (Vec<Outcome>, Payload) {
    let mut payload = Payload::default();
    let outcomes = vec![
        criterion_1(&mut payload),
        criterion_2(),
        criterion_3(&mut payload),
        criterion_4(&mut payload),
        criterion_5(&mut payload),
        criterion_6(),
        criterion_7(&mut payload),
        criterion_8(&mut payload),
        criterion_9(&mut payload),
    ];
    (outcomes, payload)
}

fn main() {
    let started = Instant::now();
    let (outcomes, parallel) = with_threads(8, run_suite).expect("8-thread pool");
    let mut failed = 0;
    for o in &outcomes {
        println!(
            "criterion {:>2} {}: {} ({})",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.detail
        );
        failed += !o.pass as usize;
    }

    let (_, serial) = with_threads(1, run_suite).expect("1-thread pool");
    let mismatches = parallel
        .0
        .iter()
        .zip(&serial.0)
        .filter(|(a, b)| a != b)
        .count()
        + parallel.0.len().abs_diff(serial.0.len());
    let det_pass = mismatches == 0 && parallel == serial;
    println!(
        "criterion 10 {}: Determinism at 1 vs 8 threads ({} payload records, {} mismatches)",
        if det_pass { "PASS" } else { "FAIL" },
        parallel.0.len(),
        mismatches
    );
    failed += !det_pass as usize;

    println!(
        "acceptance: {} of 10 criteria passed in {:.0}s",
        10 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
