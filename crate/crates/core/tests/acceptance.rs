//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Every seed and tolerance is pinned below.

use std::time::{Duration, Instant};

use ibcast::chunked::{payload_width, run_chunked_noiseless, ChunkConfig, MAX_PAYLOAD_BITS};
use ibcast::coding::{
    build_gv_code, majority_error_exact, majority_or_zero, parse, rho_error_bound, Sym, TreeCode, TreeCodeOptions,
};
use ibcast::exchange::{Profile, StrategyConfig, StrategyKind, StrategyOverrides};
use ibcast::harness::{
    degrades_monotonically, run_experiment, select_regime, EngineConfig, ExperimentConfig, ProtocolSpec, Setup,
    Summary, Thresholds, TreeSpec,
};
use ibcast::model::{run_noiseless, Protocol, ProtocolKind, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

const PARSE_STRINGS: usize = 100_000;
const PARSE_BUDGET: Duration = Duration::from_secs(1);

const TREE_SYMBOLS: u32 = 64;
const TREE_DEPTH: usize = 6;
const TREE_DECODE_PATHS: u64 = 100_000;
const TREE_BUDGET: Duration = Duration::from_secs(60);

const GV_M: usize = 4;
const GV_K: usize = 8;
const GV_DELTA: f64 = 0.025;
const GV_MIN_DISTANCE: u32 = 16;
const GV_BUDGET: Duration = Duration::from_secs(5);

const MAJORITY_EPS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.3];
const MAJORITY_RHO: [u32; 4] = [1, 5, 11, 21];
const MAJORITY_TRIALS: usize = 100_000;
const MAJORITY_SIGMAS: f64 = 3.0;
const MAJORITY_BUDGET: Duration = Duration::from_secs(10);

const TOTALITY_PROTOCOLS: usize = 50;
const MAX_PARTIES: usize = 13;
const MAX_RC: usize = 8;
const TOTALITY_BUDGET: Duration = Duration::from_secs(300);
const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(120);

const NOISY_EPSILONS: [f64; 4] = [0.005, 0.02, 0.05, 0.1];
const NOISY_TRIALS_PER_POINT: usize = 70;
/// Inner codes barely longer than their messages.
const WEAK_NAIVE_WIDTH: usize = 12;
const WEAK_ECC_NC: usize = 14;
const WEAK_ECC_C: usize = 9;
const NOISY_BUDGET: Duration = Duration::from_secs(600);

const RESILIENCE_RS_TRIALS: usize = 300;
const RESILIENCE_CHUNKED_TRIALS: usize = 200;
const RESILIENCE_MIN_RATE: f64 = 0.99;
/// Success rates observed on the first build; later builds must keep them
/// inside their Wilson interval.
const ANCHOR_RS: f64 = 1.0;
const ANCHOR_CHUNKED: f64 = 1.0;
const RESILIENCE_BUDGET: Duration = Duration::from_secs(900);

const MONOTONE_SIGMAS: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!("{} ({:.2}s, budget {}s)", out.detail, took.as_secs_f64(), budget.as_secs());
    out.pass &= took <= budget;
    out
}

fn rs_engine(kind: StrategyKind, overrides: StrategyOverrides) -> EngineConfig {
    EngineConfig::Rs {
        strategy: StrategyConfig { kind, profile: Profile::Desk, overrides, seed: SEED },
        tree: TreeSpec::default(),
    }
}

fn chunked_engine(k: usize, fallback_simple: bool) -> EngineConfig {
    EngineConfig::Chunked(ChunkConfig { k: Some(k), fallback_simple, seed: SEED, ..ChunkConfig::default() })
}

fn config(topology: Topology, rc: usize, seed: u64, epsilon: f64, trials: usize, engine: EngineConfig) -> ExperimentConfig {
    ExperimentConfig {
        topology,
        protocol: ProtocolSpec { kind: ProtocolKind::Random { seed }, round_count: rc, input_width: 8, input_seed: seed },
        epsilon,
        seed,
        trials,
        engine,
        check_progress: true,
        thresholds: Thresholds::default(),
    }
}

/// Valid parse iff no prefix has more BK than data symbols.
fn prefix_oracle(x: &[Sym]) -> Option<usize> {
    let mut depth = 0i64;
    for s in x {
        depth += if s.is_back() { -1 } else { 1 };
        if depth < 0 {
            return None;
        }
    }
    Some(depth as usize)
}

fn criterion_1() -> Outcome {
    use Sym::{Back as B, Data as D};
    timed(PARSE_BUDGET, || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut parseable = 0;
        for _ in 0..PARSE_STRINGS {
            let len = rng.gen_range(0..48);
            let x: Vec<Sym> = (0..len)
                .map(|_| match rng.gen_range(0..4) {
                    0 => B,
                    v => D(v as u32 & 1),
                })
                .collect();
            let backs = x.iter().filter(|s| s.is_back()).count();
            let got = parse(&x);
            if got.as_ref().map(Vec::len) != prefix_oracle(&x) {
                return Outcome::new(false, format!("parseability mismatch on {x:?}"));
            }
            if let Some(v) = got {
                parseable += 1;
                if v.len() != x.len() - 2 * backs {
                    return Outcome::new(false, format!("length law broken on {x:?}"));
                }
            }
        }
        let ex1 = parse(&[D(0), D(0), B, D(1), D(1), B, B, D(1), D(0)]) == Some(vec![0, 1, 0]);
        let ex2 = parse(&[D(1), B, B, D(0), D(0), D(1)]).is_none();
        Outcome::new(ex1 && ex2, format!("{PARSE_STRINGS} strings, {parseable} parseable, worked examples {ex1}/{ex2}"))
    })
}

fn criterion_2() -> Outcome {
    timed(TREE_BUDGET, || {
        let opts = TreeCodeOptions { symbols: Some(TREE_SYMBOLS), ..TreeCodeOptions::default() };
        let tc = match TreeCode::build(3, 0.5, TREE_DEPTH, SEED, opts) {
            Ok(tc) => tc,
            Err(e) => return Outcome::new(false, format!("construction failed: {e}")),
        };
        if let Err(v) = tc.verify_exhaustive(TREE_DEPTH) {
            return Outcome::new(false, format!("distance violated: {v:?}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..2000 {
            let len = rng.gen_range(1..=TREE_DEPTH);
            let path: Vec<u32> = (0..len).map(|_| rng.gen_range(0..3)).collect();
            if tc.decode(&tc.encode(&path).unwrap()).unwrap() != path {
                return Outcome::new(false, format!("round trip failed on {path:?}"));
            }
        }
        // Deeper labelled code for the decoder comparison up to 3^r <= 1e5.
        let max_r = (1..).take_while(|&r| 3u64.pow(r) <= TREE_DECODE_PATHS).last().unwrap() as usize;
        let deep = TreeCode::build(3, 0.5, TREE_DEPTH, SEED, TreeCodeOptions { depth: Some(max_r), ..opts }).unwrap();
        let mut compared = 0;
        for r in 1..=max_r {
            let samples = if r <= 6 { 300 } else { 40 };
            for _ in 0..samples {
                let path: Vec<u32> = (0..r).map(|_| rng.gen_range(0..3)).collect();
                let mut y = deep.encode(&path).unwrap();
                for v in y.iter_mut() {
                    if rng.gen_bool(0.3) {
                        *v = rng.gen_range(0..TREE_SYMBOLS);
                    }
                }
                if deep.decode(&y).unwrap() != deep.decode_exhaustive(&y).unwrap() {
                    return Outcome::new(false, format!("decoder disagrees with exhaustive search on {y:?}"));
                }
                compared += 1;
            }
        }
        Outcome::new(true, format!("d=3 |S|={TREE_SYMBOLS} depth {TREE_DEPTH} verified, {compared} decodes match up to r={max_r}"))
    })
}

fn criterion_3() -> Outcome {
    timed(GV_BUDGET, || match build_gv_code(GV_M, GV_DELTA, Some(GV_K), SEED) {
        Ok(code) => {
            let d = code.min_distance();
            Outcome::new(
                d >= GV_MIN_DISTANCE && f64::from(d) > code.distance_threshold(),
                format!("min distance {d}, threshold {:.1}", code.distance_threshold()),
            )
        }
        Err(e) => Outcome::new(false, format!("construction failed: {e}")),
    })
}

fn criterion_4() -> Outcome {
    timed(MAJORITY_BUDGET, || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut worst_z = 0.0f64;
        for &eps in &MAJORITY_EPS {
            for &rho in &MAJORITY_RHO {
                let exact = majority_error_exact(eps, rho);
                if exact > rho_error_bound(eps, rho) + 1e-12 {
                    return Outcome::new(false, format!("bound fails at eps={eps} rho={rho}"));
                }
                let mut bits = vec![0u8; rho as usize];
                let errors = (0..MAJORITY_TRIALS)
                    .filter(|_| {
                        bits.iter_mut().for_each(|b| *b = u8::from(rng.gen_bool(eps)));
                        majority_or_zero(&bits) == 1
                    })
                    .count();
                let est = errors as f64 / MAJORITY_TRIALS as f64;
                let se = (exact * (1.0 - exact) / MAJORITY_TRIALS as f64).sqrt().max(1.0 / MAJORITY_TRIALS as f64);
                worst_z = worst_z.max((est - exact).abs() / se);
            }
        }
        Outcome::new(
            worst_z <= MAJORITY_SIGMAS,
            format!("{} grid points, worst Monte Carlo deviation {worst_z:.2} SE", MAJORITY_EPS.len() * MAJORITY_RHO.len()),
        )
    })
}

/// A topology with at most `MAX_PARTIES` parties whose chunk messages fit
/// for chunk size `k`.
fn random_topology(rng: &mut ChaCha8Rng, k: usize) -> Topology {
    loop {
        let n1 = rng.gen_range(1..MAX_PARTIES);
        let n2 = rng.gen_range(1..=(MAX_PARTIES - 1) / n1);
        if payload_width(n1, k).is_some_and(|w| w <= MAX_PAYLOAD_BITS) {
            return Topology::new(n1, n2).unwrap();
        }
    }
}

fn criterion_5(summaries: &mut Vec<Summary>) -> Outcome {
    timed(TOTALITY_BUDGET, || {
        // (name, chunk size, steps for RC, engine)
        type Steps = fn(usize, usize) -> usize;
        let mut engines: Vec<(String, usize, Steps, EngineConfig)> = StrategyKind::ALL
            .iter()
            .map(|&s| (format!("rs/{s:?}"), 1, (|rc, _| 2 * rc) as Steps, rs_engine(s, StrategyOverrides::default())))
            .collect();
        for k in 1..=3 {
            engines.push((format!("chunked k={k}"), k, |rc, k| 2 * rc.div_ceil(k), chunked_engine(k, false)));
        }
        // The simple variant makes a single pass with no rewinding.
        engines.push(("simple k=2".into(), 2, |rc, k| rc.div_ceil(k), chunked_engine(2, true)));
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut runs = 0;
        for (name, k, steps, engine) in &engines {
            for i in 0..TOTALITY_PROTOCOLS {
                let topo = random_topology(&mut rng, *k);
                let rc = rng.gen_range(1..=MAX_RC);
                let mut c = config(topo, rc, SEED + i as u64, 0.0, 1, engine.clone());
                c.check_progress = false;
                let setup = match Setup::new(&c) {
                    Ok(s) => s,
                    Err(e) => return Outcome::new(false, format!("{name} {topo:?} rc={rc}: {e}")),
                };
                let out = match setup.run_trial(0, false) {
                    Ok(o) => o,
                    Err(e) => return Outcome::new(false, format!("{name} {topo:?} rc={rc}: {e}")),
                };
                let want_steps = steps(rc, *k);
                let r = &out.report;
                if out.estimates != run_noiseless(&setup.protocol)
                    || r.total_backs() != 0
                    || r.steps != want_steps
                    || !r.invariant_violations.is_empty()
                {
                    return Outcome::new(false, format!("{name} {topo:?} rc={rc}: steps {} backs {}", r.steps, r.total_backs()));
                }
                summaries.push(ibcast::harness::summarize(&setup, std::slice::from_ref(r)));
                runs += 1;
            }
        }
        Outcome::new(true, format!("{runs} noiseless runs over {} engines match the protocol", engines.len()))
    })
}

fn criterion_6() -> Outcome {
    timed(EQUIVALENCE_BUDGET, || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);
        let mut checked = 0;
        for seed in 0..50u64 {
            // Messages grow like 2^(n1·k), so wide links stay at small n2.
            let n1 = rng.gen_range(1..=2);
            let n2 = rng.gen_range(1..=if n1 == 1 { 12 } else { 3 });
            let topo = Topology::new(n1, n2).unwrap();
            for rc in 1..=MAX_RC {
                let p = Protocol::from_kind(topo, rc, &ProtocolKind::Random { seed }, 8, seed).unwrap();
                let truth = run_noiseless(&p);
                for k in 1..=rc {
                    match run_chunked_noiseless(&p, k) {
                        Ok(t) if t == truth => checked += 1,
                        Ok(_) => return Outcome::new(false, format!("{topo:?} rc={rc} k={k} seed={seed} differs")),
                        Err(e) => return Outcome::new(false, format!("{topo:?} rc={rc} k={k}: {e}")),
                    }
                }
            }
        }
        Outcome::new(true, format!("{checked} (seed, RC, k) cases equal the protocol"))
    })
}

/// Default-strength engines plus deliberately weak inner codes, so that the
/// progress bound is exercised by real decoding errors and rewinds.
fn noisy_configs() -> Vec<(&'static str, ExperimentConfig)> {
    let weak_rs = StrategyOverrides { naive_width: Some(WEAK_NAIVE_WIDTH), ..Default::default() };
    let weak_chunked = EngineConfig::Chunked(ChunkConfig {
        k: Some(2),
        ecc_nc_width: Some(WEAK_ECC_NC),
        ecc_c_width: Some(WEAK_ECC_C),
        seed: SEED,
        ..ChunkConfig::default()
    });
    let small = Topology::new(2, 2).unwrap();
    let wide = Topology::new(2, 4).unwrap();
    let mut out = Vec::new();
    for &eps in &NOISY_EPSILONS {
        let t = NOISY_TRIALS_PER_POINT;
        out.push(("rs", config(small, 6, SEED, eps, t, rs_engine(StrategyKind::Naive, StrategyOverrides::default()))));
        out.push(("rs-weak", config(small, 6, SEED, eps, t, rs_engine(StrategyKind::Naive, weak_rs.clone()))));
        out.push(("chunked", config(wide, 6, SEED, eps, t, chunked_engine(2, false))));
        out.push(("chunked-weak", config(wide, 6, SEED, eps, t, weak_chunked.clone())));
    }
    out
}

fn criterion_7(rows: &mut Vec<(&'static str, Summary)>) -> Outcome {
    timed(NOISY_BUDGET, || {
        let mut trials = 0;
        let mut violations = 0;
        let mut tree_errors = 0;
        let mut backs = 0.0;
        for (name, c) in noisy_configs() {
            match run_experiment(&c) {
                Ok(r) => {
                    trials += r.summary.trials;
                    violations += r.summary.progress_violations + r.summary.invariant_violations;
                    tree_errors += r.summary.tree_errors;
                    backs += r.summary.mean_backs * r.summary.trials as f64;
                    rows.push((name, r.summary));
                }
                Err(e) => return Outcome::new(false, format!("{name} eps={}: {e}", c.epsilon)),
            }
        }
        Outcome::new(
            violations == 0 && trials >= 500,
            format!("{trials} noisy trials, {tree_errors} tree decoding errors, {backs} back steps, {violations} violations"),
        )
    })
}

fn anchored(s: &Summary, anchor: f64) -> bool {
    const SLACK: f64 = 1e-9;
    s.success_rate >= RESILIENCE_MIN_RATE && s.wilson_low - SLACK <= anchor && anchor <= s.wilson_high + SLACK
}

fn criterion_8(summaries: &mut Vec<Summary>) -> Outcome {
    timed(RESILIENCE_BUDGET, || {
        let topo = Topology::new(2, 2).unwrap();
        let width = 24 * (topo.n() as f64).log2().ceil() as usize;
        let rs = rs_engine(StrategyKind::Naive, StrategyOverrides { naive_width: Some(width), ..Default::default() });
        let rs = run_experiment(&config(topo, 6, SEED, 0.01, RESILIENCE_RS_TRIALS, rs));
        let ch = config(Topology::new(2, 4).unwrap(), 6, SEED, 0.005, RESILIENCE_CHUNKED_TRIALS, chunked_engine(2, false));
        let ch = run_experiment(&ch);
        match (rs, ch) {
            (Ok(rs), Ok(ch)) => {
                let pass = anchored(&rs.summary, ANCHOR_RS) && anchored(&ch.summary, ANCHOR_CHUNKED);
                let detail = format!(
                    "rewind (width {width}) {:.4} [{:.4}, {:.4}], chunked {:.4} [{:.4}, {:.4}]",
                    rs.summary.success_rate,
                    rs.summary.wilson_low,
                    rs.summary.wilson_high,
                    ch.summary.success_rate,
                    ch.summary.wilson_low,
                    ch.summary.wilson_high
                );
                summaries.push(rs.summary);
                summaries.push(ch.summary);
                Outcome::new(pass, detail)
            }
            (Err(e), _) | (_, Err(e)) => Outcome::new(false, e.to_string()),
        }
    })
}

fn criterion_9(rows: &[(&'static str, Summary)]) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for name in ["rs", "rs-weak", "chunked", "chunked-weak"] {
        let mut series: Vec<Summary> = rows.iter().filter(|(n, _)| *n == name).map(|(_, s)| s.clone()).collect();
        series.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        pass &= series.len() == NOISY_EPSILONS.len() && degrades_monotonically(&series, MONOTONE_SIGMAS);
        let rates: Vec<String> = series.iter().map(|s| format!("{:.3}", s.success_rate)).collect();
        detail.push(format!("{name} [{}]", rates.join(", ")));
    }
    Outcome::new(pass, detail.join("; "))
}

fn criterion_10(summaries: &[Summary]) -> Outcome {
    let bad: Vec<String> = summaries
        .iter()
        .filter(|s| !s.rounds_exact)
        .map(|s| format!("{} {}x{} rc={}", s.engine, s.n1, s.n2, s.round_count))
        .collect();
    Outcome::new(bad.is_empty(), format!("{} configurations, mismatches: {:?}", summaries.len(), bad))
}

fn criterion_11() -> Outcome {
    let t = Thresholds::default();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let mut failures = Vec::new();
    let r = select_regime(256, 4.0, &t).unwrap();
    if !(r.regime == 1 && close(r.overhead, 3.0)) {
        failures.push("n1=256 n2=16");
    }
    if ![2usize, 3, 16, 256, 1 << 20].iter().all(|&n1| {
        let r = select_regime(n1, 0.0, &t).unwrap();
        r.regime == 1 && close(r.overhead, (n1 as f64).log2().log2())
    }) {
        failures.push("n2=1");
    }
    if select_regime(4, 64.0, &t).unwrap().regime != 3 {
        failures.push("n1=4 n2=2^64");
    }
    // One point inside each remaining case, with half-open boundaries.
    if select_regime(4, 3.0, &t).unwrap().regime != 2 || select_regime(4, 2.0, &t).unwrap().regime != 1 {
        failures.push("regime 2");
    }
    if select_regime(16, 2f64.powi(33), &t).unwrap().regime != 4 || select_regime(16, 2f64.powi(32), &t).unwrap().regime != 3 {
        failures.push("regime 4");
    }
    Outcome::new(failures.is_empty(), format!("failures: {failures:?}"))
}

fn main() {
    let mut summaries = Vec::new();
    let mut noisy_rows = Vec::new();
    let results = vec![
        ("parse laws", criterion_1()),
        ("tree-code distance and decoding", criterion_2()),
        ("greedy GV code distance", criterion_3()),
        ("majority bound", criterion_4()),
        ("noiseless totality", criterion_5(&mut summaries)),
        ("chunked noiseless equivalence", criterion_6()),
        ("progress invariant under noise", criterion_7(&mut noisy_rows)),
        ("noise resilience anchors", criterion_8(&mut summaries)),
        ("degradation monotonicity", criterion_9(&noisy_rows)),
        ("rounds accounting", {
            summaries.extend(noisy_rows.iter().map(|(_, s)| s.clone()));
            criterion_10(&summaries)
        }),
        ("regime selector", criterion_11()),
    ];
    let mut failed = 0;
    for (i, (name, out)) in results.iter().enumerate() {
        println!("criterion {:>2} {}: {}: {}", i + 1, if out.pass { "PASS" } else { "FAIL" }, name, out.detail);
        failed += usize::from(!out.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
