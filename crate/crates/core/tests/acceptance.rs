//! Acceptance suite. Runs every exit criterion at its pinned tolerance and
//! prints one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use adaptive_mdiqkd::cli::{self, RunConfig};
use adaptive_mdiqkd::device::{ChannelParams, DeviceParams};
use adaptive_mdiqkd::{keyrate, stats, RateReport};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// C(m,k) p^k (1-p)^(m-k) by plain multiplication, independent of the library.
fn pmf_oracle(k: u64, m: u64, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (m - i) as f64;
        c /= (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((m - k) as i32)
}

fn ac1_closed_form_identity() -> Outcome {
    let mut worst = 0.0f64;
    for m in 1..=200u64 {
        for i in 1..=19 {
            let p = i as f64 * 0.05;
            let closed = m as f64 * (p - stats::g_m(m, p).map_err(|e| e.to_string())?.value);
            let f = stats::min_pair_dist(m, p).map_err(|e| e.to_string())?;
            let direct: f64 = f.iter().enumerate().map(|(l, x)| l as f64 * x).sum();
            let gap = (closed - direct).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-10, format!("m={m} p={p}: |gap| = {gap:e}"))?;
        }
    }
    Ok(format!("max |m(p-g_m) - sum l f_l| = {worst:e} <= 1e-10"))
}

fn ac2_brute_force_min() -> Outcome {
    let mut worst = 0.0f64;
    for m in 1..=50u64 {
        for i in 0..=20 {
            let p = i as f64 * 0.05;
            let b: Vec<f64> = (0..=m).map(|k| pmf_oracle(k, m, p)).collect();
            let mut oracle = vec![0.0; b.len()];
            for (x, bx) in b.iter().enumerate() {
                for (y, by) in b.iter().enumerate() {
                    oracle[x.min(y)] += bx * by;
                }
            }
            let f = stats::min_pair_dist(m, p).map_err(|e| e.to_string())?;
            for (l, (a, o)) in f.iter().zip(&oracle).enumerate() {
                let gap = (a - o).abs();
                worst = worst.max(gap);
                ensure(gap <= 1e-12, format!("m={m} p={p} l={l}: {a} vs {o}"))?;
            }
        }
    }
    Ok(format!(
        "max deviation from exhaustive enumeration = {worst:e} <= 1e-12"
    ))
}

fn ac3_monte_carlo_agreement() -> Outcome {
    let config = RunConfig::default();
    ensure(
        config.mc.trials == 100_000 && config.mc.seed == 42,
        "unexpected defaults",
    )?;
    let start = Instant::now();
    let report = cli::validate(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let failures = report.failures().len();
    ensure(
        report.passed(),
        format!(
            "{failures} of {} points outside |z| <= 3",
            report.points.len()
        ),
    )?;
    ensure(
        failures * 20 <= report.points.len().max(20),
        "more than one exception per 20 grid points",
    )?;
    ensure(
        elapsed < Duration::from_secs(60),
        format!("took {elapsed:?}"),
    )?;
    let max_z = report
        .points
        .iter()
        .map(|g| g.z_score.abs())
        .fold(0.0, f64::max);
    Ok(format!(
        "{} grid points, {failures} outside |z| <= 3, max |z| = {max_z:.2}, {:.1}s",
        report.points.len(),
        elapsed.as_secs_f64()
    ))
}

fn ac4_limit_behavior() -> Outcome {
    let values: Vec<f64> = [10u64, 100, 1000, 10_000]
        .iter()
        .map(|&m| stats::g_m(m, 0.5).map(|g| g.value))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(
        values.windows(2).all(|w| w[1] < w[0]),
        format!("not strictly decreasing: {values:?}"),
    )?;
    ensure(values[3] < 0.02, format!("g_10000(0.5) = {}", values[3]))?;
    Ok(format!("g_m(0.5) at m=10,100,1000,10000: {values:?}"))
}

fn default_sweep() -> Result<Vec<RateReport>, String> {
    cli::sweep(&RunConfig::default()).map_err(|e| e.to_string())
}

fn ac5_crossover() -> Outcome {
    let config = RunConfig::default();
    let rows = default_sweep()?;
    let l_star =
        keyrate::crossover_distance(&config.device, &config.channel).map_err(|e| e.to_string())?;
    ensure((36.0..38.0).contains(&l_star), format!("L* = {l_star}"))?;
    let step = config.sweep.step;
    for r in &rows {
        let ahead = r.g_adaptive > r.g_original;
        if (r.length_km - l_star).abs() < step {
            continue;
        }
        ensure(
            ahead == (r.length_km > l_star),
            format!(
                "L = {}: G_adaptive > G_original is {ahead}, L* = {l_star}",
                r.length_km
            ),
        )?;
    }
    let first = rows
        .iter()
        .find(|r| r.g_adaptive > r.g_original)
        .map(|r| r.length_km)
        .ok_or("adaptive protocol never ahead")?;
    ensure(
        first - l_star < step && first >= l_star - step,
        format!("first ahead at {first}"),
    )?;
    Ok(format!(
        "L* = {l_star:.4} km; adaptive ahead from L = {first} km onward ({} rows)",
        rows.len()
    ))
}

fn fitted_slope(rows: &[RateReport], pick: impl Fn(&RateReport) -> f64) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| (400.0..=800.0).contains(&r.length_km))
        .map(|r| (r.length_km, pick(r).log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn ac6_scaling_exponents() -> Outcome {
    let rows = default_sweep()?;
    let l_att = ChannelParams::default().l_att;
    let expected_adaptive = -1.0 / (2.0 * l_att * std::f64::consts::LN_10);
    let expected_original = -1.0 / (l_att * std::f64::consts::LN_10);
    let adaptive = fitted_slope(&rows, |r| r.g_adaptive);
    let original = fitted_slope(&rows, |r| r.g_original);
    let rel_a = (adaptive / expected_adaptive - 1.0).abs();
    let rel_o = (original / expected_original - 1.0).abs();
    ensure(
        rel_a <= 0.05,
        format!("adaptive slope {adaptive} vs {expected_adaptive}"),
    )?;
    ensure(
        rel_o <= 0.05,
        format!("original slope {original} vs {expected_original}"),
    )?;
    Ok(format!(
        "slopes per km: adaptive {adaptive:.6} (target {expected_adaptive:.6}, rel {rel_a:.1e}), \
         original {original:.6} (target {expected_original:.6}, rel {rel_o:.1e})"
    ))
}

fn report_at_800() -> Result<RateReport, String> {
    RateReport::evaluate(
        &DeviceParams::default(),
        &ChannelParams::default().at_length(800.0),
    )
    .map_err(|e| e.to_string())
}

fn ac7_throughput_anchor() -> Outcome {
    let r = report_at_800()?;
    ensure(
        DeviceParams::default().source_rep_rate == 1e9,
        "source rate is not 1 GHz",
    )?;
    let ratio = r.key_hz_adaptive / 0.15;
    ensure(
        (1.0 / 30.0..=30.0).contains(&ratio),
        format!(
            "key rate {} Hz is {ratio:.2}x the 0.15 Hz anchor",
            r.key_hz_adaptive
        ),
    )?;
    Ok(format!(
        "key_hz_adaptive(800 km) = {:.4} Hz, {ratio:.2}x of 0.15 Hz (allowed 1/30..30)",
        r.key_hz_adaptive
    ))
}

fn ac8_multiplexing_estimate() -> Outcome {
    let m = report_at_800()?.m_required.ok_or("no finite m at 800 km")?;
    ensure(
        (1e8..=1e9).contains(&(m as f64)),
        format!("m_required = {m}"),
    )?;
    Ok(format!("m_required(800 km) = {m} in [1e8, 1e9]"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mdiqkd"))
        .args(args)
        .status()
        .map_err(|e| e.to_string())?;
    ensure(
        status.success(),
        format!("mdiqkd {args:?} exited with {status}"),
    )
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn ac9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_owned();

    run_cli(&["sweep", "--quiet", "--out", &s(&p("sweep1.csv"))])?;
    run_cli(&["sweep", "--quiet", "--out", &s(&p("sweep2.csv"))])?;
    ensure(
        read(&p("sweep1.csv"))? == read(&p("sweep2.csv"))?,
        "sweep outputs differ",
    )?;

    let sequential = p("sequential.json");
    std::fs::write(&sequential, r#"{"mc": {"parallel": false}}"#).map_err(|e| e.to_string())?;
    run_cli(&[
        "validate",
        "--quiet",
        "--seed",
        "42",
        "--out",
        &s(&p("v1.csv")),
    ])?;
    run_cli(&[
        "validate",
        "--quiet",
        "--seed",
        "42",
        "--out",
        &s(&p("v2.csv")),
    ])?;
    run_cli(&[
        "validate",
        "--quiet",
        "--seed",
        "42",
        "--config",
        &s(&sequential),
        "--out",
        &s(&p("v3.csv")),
    ])?;
    let v1 = read(&p("v1.csv"))?;
    ensure(
        v1 == read(&p("v2.csv"))?,
        "validate outputs differ between runs",
    )?;
    ensure(
        v1 == read(&p("v3.csv"))?,
        "validate differs between parallel and sequential",
    )?;
    Ok(format!(
        "sweep x2 and validate x3 (parallel, parallel, sequential) byte-identical ({} + {} bytes)",
        read(&p("sweep1.csv"))?.len(),
        v1.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 closed-form identity", ac1_closed_form_identity),
        ("AC2 brute-force min-pair oracle", ac2_brute_force_min),
        ("AC3 Monte Carlo agreement", ac3_monte_carlo_agreement),
        ("AC4 limit behavior of g_m", ac4_limit_behavior),
        ("AC5 crossover reproduction", ac5_crossover),
        ("AC6 scaling exponents", ac6_scaling_exponents),
        ("AC7 throughput anchor", ac7_throughput_anchor),
        ("AC8 multiplexing estimate", ac8_multiplexing_estimate),
        ("AC9 determinism", ac9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
