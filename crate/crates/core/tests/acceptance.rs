//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use mvsde::coefficients::catalog::{self, fixtures, NAMES};
use mvsde::coefficients::validate::{validate_hypotheses, SamplerSpec};
use mvsde::coefficients::{eval_all, eval_b1, eval_sigma, Coefficients};
use mvsde::diagnostics::{
    catalog_pairs, degeneracy_check, increment_moment4, independence_test, ladder, leak_fixture, moment_sup4,
    sliced_w1, DegeneracyReport, FutureFn, LadderAxis, PastFn, StateBlock,
};
use mvsde::integrator::{simulate, InitialLawSpec, SimulationConfig, TrajectoryStore};
use mvsde::mollifier::{mollify, MollifierKernel, QuadratureSpec};
use mvsde::persistence::{load_store, save_store_at};
use mvsde::report::RunReport;
use mvsde::rng::{CounterRng, Domain};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Degeneracy reports of every stored run produced by the suite.
#[derive(Default)]
struct Runs {
    checks: Vec<(String, DegeneracyReport)>,
}

impl Runs {
    fn simulate(&mut self, label: &str, cfg: &SimulationConfig) -> TrajectoryStore {
        let store = simulate(cfg).expect("simulation failed");
        let cs = cfg.coefficients().unwrap();
        let r = degeneracy_check(&store, cs.as_ref()).unwrap();
        self.checks.push((label.to_string(), r));
        store
    }
}

fn gaussian(d: usize) -> InitialLawSpec {
    InitialLawSpec::Gaussian {
        mean: vec![0.0; 2 * d],
        scale: 1.0,
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> (bool, String) {
    let ok = elapsed.as_secs_f64() < limit_secs as f64;
    (ok, format!("{:.1}s of {limit_secs}s", elapsed.as_secs_f64()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = SamplerSpec {
        num_points: 10_000,
        box_radius: 10.0,
        ..SamplerSpec::default()
    };
    let mut failing = Vec::new();
    for name in NAMES {
        let r = validate_hypotheses(&catalog::by_name(name).unwrap(), &spec).unwrap();
        if !r.all_pass {
            failing.push(name.to_string());
        }
    }
    let nu = 0.5;
    let neg = validate_hypotheses(&fixtures::zero_diffusion(1, nu).unwrap(), &spec).unwrap();
    let neg_ok = !neg.all_pass && !neg.ellipticity.pass && (neg.ellipticity.margin + nu).abs() < 1e-12;
    let (fast, time) = within(start.elapsed(), 30);
    outcome(
        failing.is_empty() && neg_ok && fast,
        format!(
            "{} systems pass, failing {failing:?}; zero-diffusion margin {} (nu = {nu}); {time}",
            NAMES.len() - failing.len(),
            neg.ellipticity.margin
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let spec = SamplerSpec {
        num_points: 10_000,
        ..SamplerSpec::default()
    };
    let mut worst_eig = f64::INFINITY;
    let mut worst_bound = f64::INFINITY;
    let mut failing = Vec::new();
    for name in NAMES {
        let cs = catalog::by_name(name).unwrap();
        for n in [1, 2, 4, 8] {
            let m = mollify(&cs, n, &QuadratureSpec::default_for(cs.dim())).unwrap();
            let r = validate_hypotheses(&m, &spec).unwrap();
            assert_eq!(r.declared_ellipticity, cs.ellipticity().min(1.0));
            worst_eig = worst_eig.min(r.ellipticity.margin);
            worst_bound = worst_bound.min(r.bound.margin);
            if !(r.ellipticity.pass && r.bound.pass) {
                failing.push(format!("{name}/n={n}"));
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 300);
    outcome(
        failing.is_empty() && fast,
        format!("worst eigen margin {worst_eig:e}, worst bound margin {worst_bound:e}, failing {failing:?}; {time}"),
    )
}

fn criterion_3() -> Outcome {
    // Constant coefficients are reproduced once the time kernel has left
    // the extension region.
    let cs = fixtures::constant_drift(vec![0.7]).unwrap();
    let rng = CounterRng::new(3);
    let mut const_err = 0.0f64;
    for n in [1, 2, 4, 8] {
        let m = mollify(&cs, n, &QuadratureSpec::tensor(9)).unwrap();
        for i in 0..2000 {
            let mut u = [0.0; 5];
            rng.fill_uniforms(Domain::Validator, i, n, &mut u);
            let t = 1.0 / f64::from(n) + 2.0 * u[0];
            let z = [20.0 * u[1] - 10.0, 20.0 * u[2] - 10.0];
            let zeta = [20.0 * u[3] - 10.0, 20.0 * u[4] - 10.0];
            let s = eval_all(&m, t, &z, &zeta).unwrap();
            const_err = const_err.max((s.b0[0] - 0.7).abs()).max(s.b1[0].abs()).max((s.sigma[0] - 1.0).abs());
        }
    }
    // sign(x) mollifies to an odd function of x.
    let sign = fixtures::sign_x_drift().unwrap();
    let mut sym = 0.0f64;
    for n in [1, 2, 4, 8] {
        let m = mollify(&sign, n, &QuadratureSpec::tensor(9)).unwrap();
        for t in [0.0, 0.3, 1.0] {
            sym = sym.max(eval_b1(&m, t, &[0.0, 0.4], &[1.0, -2.0]).unwrap()[0].abs());
        }
    }
    // sigma = 2 blended with the identity at t = 0 against a fine
    // quadrature of the time kernel's mass on each side.
    let cs = fixtures::scaled_identity(1, 2.0, 1.0).unwrap();
    let mut blend = 0.0f64;
    for n in [1, 2, 4, 8] {
        let k = MollifierKernel::for_level(n).unwrap();
        let cells = 200_000;
        let h = k.bandwidth / cells as f64;
        let mass: f64 = (0..cells).map(|i| k.profile((i as f64 + 0.5) * h)).sum::<f64>() * h;
        let oracle = 2.0 * mass + (1.0 - mass);
        let m = mollify(&cs, n, &QuadratureSpec::tensor(9)).unwrap();
        let got = eval_sigma(&m, 0.0, &[0.2, -0.1], &[0.0, 0.0]).unwrap()[0];
        blend = blend.max((got - oracle).abs());
    }
    outcome(
        const_err < 1e-10 && sym < 1e-10 && blend < 1e-3,
        format!("constant error {const_err:e}, sign symmetry {sym:e}, t=0 blend error {blend:e}"),
    )
}

fn criterion_4(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let mut free = SimulationConfig::new("free", 1, 100_000, 1.0, 64, 2024);
    free.init = gaussian(1);
    let store = runs.simulate("free N=1e5", &free);
    let lags = [0.25, 0.0625, 0.015625];
    let r = increment_moment4(&store, &lags, StateBlock::Y).unwrap();
    drop(store);
    let rel: Vec<f64> = r.increments.iter().map(|row| row.moment / (3.0 * row.h * row.h) - 1.0).collect();
    let free_ok = rel.iter().all(|e| e.abs() < 0.05);

    let mut rough = SimulationConfig::new("rough", 1, 10_000, 1.0, 256, 77);
    rough.level = 4;
    rough.init = gaussian(1);
    let store = runs.simulate("rough n=4 N=1e4", &rough);
    let lags: Vec<f64> = (4..=8).map(|k| 0.5f64.powi(k)).collect();
    let s = increment_moment4(&store, &lags, StateBlock::Full).unwrap();
    let slope = s.slope.unwrap_or(f64::NAN);
    let slope_ok = (1.7..=2.3).contains(&slope);
    let (fast, time) = within(start.elapsed(), 300);
    outcome(
        free_ok && slope_ok && fast,
        format!(
            "free relative errors {:?}, rough slope {slope:.4}; {time}",
            rel.iter().map(|e| format!("{e:+.4}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_5(runs: &mut Runs) -> Outcome {
    let mut est = Vec::new();
    for seed in [101, 202] {
        let mut cfg = SimulationConfig::new("rough", 1, 100_000, 1.0, 100, seed);
        cfg.level = 4;
        cfg.init = gaussian(1);
        let store = runs.simulate(&format!("rough n=4 N=1e5 seed={seed}"), &cfg);
        est.push(moment_sup4(&store).unwrap().sup_moment.unwrap());
    }
    let rel = (est[0] - est[1]).abs() / est[0].max(est[1]);
    outcome(rel < 0.1, format!("sup moments {est:?}, relative difference {rel:.4}"))
}

fn criterion_6(runs: &mut Runs) -> Outcome {
    // A few more shapes: raw rough coefficients, a dense interaction with a
    // subsampled independent copy, two dimensions.
    let mut raw = SimulationConfig::new("rough", 1, 2000, 1.0, 50, 5);
    raw.init = gaussian(1);
    runs.simulate("rough raw", &raw);
    let mut sat = SimulationConfig::new("saturating", 1, 1000, 1.0, 40, 6);
    sat.level = 2;
    sat.init = gaussian(1);
    sat.subsample = mvsde::meanfield::Subsample::Count(200);
    sat.independent_copy = true;
    runs.simulate("saturating n=2 subsample copy", &sat);
    let mut two = SimulationConfig::new("rough-d2", 2, 2000, 1.0, 40, 7);
    two.level = 2;
    two.init = gaussian(2);
    runs.simulate("rough-d2 n=2", &two);
    let mut aniso = SimulationConfig::new("anisotropic-d2", 2, 2000, 1.0, 40, 8);
    aniso.init = gaussian(2);
    runs.simulate("anisotropic-d2", &aniso);

    let failing: Vec<&str> = runs.checks.iter().filter(|(_, r)| !r.pass).map(|(l, _)| l.as_str()).collect();
    let replayed: usize = runs.checks.iter().map(|(_, r)| r.replayed_steps).sum();
    let excess = runs.checks.iter().map(|(_, r)| r.envelope_excess).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        failing.is_empty() && replayed > 0,
        format!(
            "{} runs, {replayed} steps replayed bitwise, max envelope excess {excess:e}, failing {failing:?}",
            runs.checks.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut free = SimulationConfig::new("free", 1, 100, 1.0, 20, 31);
    free.init = gaussian(1);
    let a = ladder(&free, LadderAxis::Particles, &[100, 1_000, 10_000], Some(100_000)).unwrap();
    let rough = SimulationConfig::new("rough", 1, 10_000, 1.0, 100, 42);
    let b = ladder(&rough, LadderAxis::Mollification, &[2, 4, 8], None).unwrap();
    let fmt = |r: &mvsde::diagnostics::LadderReport| {
        r.distances.iter().map(|d| format!("{:.5}", d.distance)).collect::<Vec<_>>().join(", ")
    };
    let (fast, time) = within(start.elapsed(), 600);
    outcome(
        a.strictly_decreasing && b.nonincreasing_within_slack && b.final_below_half_initial && fast,
        format!("(a) N ladder [{}] strictly decreasing = {}; (b) n ladder [{}] {}; {time}", fmt(&a), a.strictly_decreasing, fmt(&b), b.verdict),
    )
}

fn criterion_8(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let mut cfg = SimulationConfig::new("free", 1, 10_000, 1.0, 100, 8);
    cfg.init = gaussian(1);
    cfg.retain_increments = true;
    let store = runs.simulate("free N=1e4 increments", &cfg);
    let times = [0.25, 0.5, 0.75];
    let mut passed = 0;
    let mut stats = Vec::new();
    for (f, g) in catalog_pairs() {
        let r = independence_test(&store, &times, f, g).unwrap();
        passed += r.pass as usize;
        stats.push(format!("{:.2}", r.statistic));
    }
    let leaked = leak_fixture(&store, 0.5, 0.75).unwrap();
    let leak = independence_test(&leaked, &times, PastFn::ClipW, FutureFn::ClipDw).unwrap();
    let (fast, time) = within(start.elapsed(), 120);
    outcome(
        passed >= 9 && !leak.pass && fast,
        format!(
            "{passed}/10 pairs pass, statistics [{}]; leak statistic {:.1}; {time}",
            stats.join(", "),
            leak.statistic
        ),
    )
}

fn report_for(store: &TrajectoryStore, cs: &dyn Coefficients) -> RunReport {
    let mut r = RunReport::new("diagnose", &store.config).unwrap();
    r.sup_moment = Some(moment_sup4(store).unwrap());
    r.increment_moment = Some(increment_moment4(store, &[0.2, 0.1, 0.05], StateBlock::Full).unwrap());
    r.degeneracy = Some(degeneracy_check(store, cs).unwrap());
    r.content_hash = r.compute_hash().unwrap();
    r
}

fn criterion_9() -> Outcome {
    let mut cfg = SimulationConfig::new("rough", 1, 5000, 1.0, 20, 99);
    cfg.level = 4;
    cfg.init = gaussian(1);
    cfg.retain_increments = true;
    cfg.independent_copy = true;
    let tmp = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    let mut hashes = Vec::new();
    for workers in [1, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let (store, report) = pool.install(|| {
            let store = simulate(&cfg).unwrap();
            let cs = cfg.coefficients().unwrap();
            let report = report_for(&store, cs.as_ref());
            (store, report)
        });
        let dir = tmp.path().join(format!("w{workers}"));
        save_store_at(&store, &dir, "2026-01-01T00:00:00Z").unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        bytes.push(files);
        hashes.push(report.content_hash.clone());
    }
    let same_store = bytes[0] == bytes[1];
    let same_report = hashes[0] == hashes[1];
    let dir = tmp.path().join("w1");
    let loaded = load_store(&dir).unwrap();
    let again = tmp.path().join("again");
    save_store_at(&loaded, &again, "2026-01-01T00:00:00Z").unwrap();
    let round_trip = bytes[0].iter().all(|(name, b)| std::fs::read(again.join(name)).unwrap() == *b);
    outcome(
        same_store && same_report && round_trip,
        format!(
            "{} store files identical across 1/8 workers = {same_store}, report hash identical = {same_report}, round trip bitwise = {round_trip}",
            bytes[0].len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let a = sliced_w1(&[0.5, -1.5, 2.0], &[0.5, -1.5, 2.0], 1, 64, 0).unwrap();
    let b = sliced_w1(&[-0.75], &[2.5], 1, 64, 0).unwrap();
    let c = sliced_w1(&[0.0, 1.0], &[0.0, 2.0], 1, 64, 0).unwrap();
    let a2 = sliced_w1(&[0.5, -1.5, 2.0, 1.0], &[0.5, -1.5, 2.0, 1.0], 2, 64, 0).unwrap();
    let errs = [a.abs(), a2.abs(), (b - 3.25).abs(), (c - 0.5).abs()];
    outcome(
        errs.iter().all(|e| *e <= 1e-12),
        format!("identical {a} (d=1) {a2} (d=2), point masses {b} (expect 3.25), {{0,1}} vs {{0,2}} {c} (expect 0.5)"),
    )
}

fn main() {
    let mut runs = Runs::default();
    let start = Instant::now();
    let results = vec![
        ("hypothesis validation", criterion_1()),
        ("mollification preservation", criterion_2()),
        ("mollifier correctness oracles", criterion_3()),
        ("fourth-moment increment law", criterion_4(&mut runs)),
        ("sup-moment seed stability", criterion_5(&mut runs)),
        ("structural degeneracy", criterion_6(&mut runs)),
        ("convergence ladders", criterion_7()),
        ("increment independence", criterion_8(&mut runs)),
        ("reproducibility", criterion_9()),
        ("Wasserstein oracle", criterion_10()),
    ];
    println!();
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "acceptance criterion {:>2} {:<32} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += !o.pass as usize;
    }
    println!(
        "acceptance: {}/{} criteria pass in {:.0}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
