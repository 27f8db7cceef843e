//! Acceptance criteria 1-7, one PASS/FAIL line each.
//!
//! `cargo test --release --test acceptance -- 3 7` runs a subset.

use std::time::{Duration, Instant};

use nilheat::diffusion::{self, SimConfig};
use nilheat::kernel::{self, QuadratureConfig};
use nilheat::validation::{self, SuiteReport};
use nilheat::{GroupPoint, GroupTag};

struct Outcome {
    passed: bool,
    detail: String,
    failures: Vec<String>,
}

fn suite(report: SuiteReport, budget: Duration) -> Outcome {
    let elapsed = Duration::from_secs_f64(report.wall_seconds);
    let failures: Vec<String> =
        report.table().lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    let in_time = elapsed <= budget;
    Outcome {
        passed: report.passed() && in_time,
        detail: format!(
            "{} of {} checks passed in {:.1} s (budget {} s)",
            report.checks.len() - failures.len(),
            report.checks.len(),
            report.wall_seconds,
            budget.as_secs()
        ),
        failures,
    }
}

fn min(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

type Criterion = (u32, &'static str, Box<dyn Fn() -> Outcome>);

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Everything criterion 7 compares, as raw bits and bytes.
fn fingerprint() -> nilheat::Result<(Vec<u8>, Vec<u64>)> {
    let mut bytes = Vec::new();
    for (tag, seed) in [(GroupTag::Engel, 7), (GroupTag::Cartan, 8)] {
        let s = diffusion::simulate(&SimConfig::new(tag, 0.25, 20_000, 200, seed))?;
        s.write_csv(&mut bytes)?;
    }
    let mut bits = Vec::new();
    let cfg = QuadratureConfig { error_estimate: false, ..QuadratureConfig::default() };
    let points = [
        GroupPoint::new(GroupTag::Engel, &[0.0; 4])?,
        GroupPoint::new(GroupTag::Engel, &[0.3, 0.2, 0.1, 0.05])?,
    ];
    for r in kernel::heat_kernel_batch(&points, 0.25, &cfg)? {
        bits.extend([r.value.to_bits(), r.imag_residual.to_bits(), r.tail_estimate.to_bits(), r.node_count]);
    }
    let x = GroupPoint::new(GroupTag::Cartan, &[0.0, 0.0, 0.2, 0.0, 0.0])?;
    let e = diffusion::bridge_density(&x, 0.25, 5_000, 200, 3, 1e-3)?;
    bits.extend([e.value.to_bits(), e.stderr.to_bits()]);
    let s = diffusion::simulate(&SimConfig::new(GroupTag::Engel, 0.25, 20_000, 200, 9))?;
    let k = diffusion::kde_estimate(&s, &points[1], &diffusion::default_bandwidths(&s))?;
    bits.extend([k.value.to_bits(), k.stderr.to_bits()]);
    Ok((bytes, bits))
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let runs: Vec<_> = [1, 3, 1].iter().map(|&n| pool(n).install(fingerprint)).collect();
    let mut failures = Vec::new();
    match (&runs[0], &runs[1], &runs[2]) {
        (Ok(a), Ok(b), Ok(c)) => {
            if a.0 != b.0 || a.0 != c.0 {
                failures.push("FAIL  sample CSV bytes differ between runs".into());
            }
            if a.1 != b.1 || a.1 != c.1 {
                failures.push("FAIL  kernel or estimator bits differ between runs".into());
            }
        }
        _ => failures.push(format!("FAIL  error: {:?}", runs.iter().find_map(|r| r.as_ref().err()))),
    }
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "1, 3 and 1 threads: sample CSV, kernel results, conditional and KDE estimates compared bitwise ({:.1} s)",
            start.elapsed().as_secs_f64()
        ),
        failures,
    }
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: u32| wanted.is_empty() || wanted.contains(&k);

    let criteria: [Criterion; 7] = [
        (1, "group suite", Box::new(|| suite(validation::group_suite(), Duration::from_secs(10)))),
        (2, "representation suite", Box::new(|| suite(validation::rep_suite(), min(1)))),
        (3, "propagator suite", Box::new(|| suite(validation::propagator_suite(), min(2)))),
        (4, "Engel kernel suite", Box::new(|| suite(validation::kernel_g4_suite(), min(20)))),
        (5, "Cartan kernel suite", Box::new(|| suite(validation::kernel_g5_suite(), min(60)))),
        (6, "Monte Carlo cross-validation", Box::new(|| suite(validation::mc_suite(), min(60)))),
        (7, "determinism", Box::new(determinism)),
    ];

    let mut all = true;
    for (k, name, f) in &criteria {
        if !run(*k) {
            continue;
        }
        let o = f();
        all &= o.passed;
        println!("{}  criterion {k}: {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        for line in &o.failures {
            println!("      {line}");
        }
    }
    if !all {
        std::process::exit(1);
    }
}
