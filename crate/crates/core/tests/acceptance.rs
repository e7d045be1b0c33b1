//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use altproj::diagnostics::*;
use altproj::engine::*;
use altproj::frames::*;
use altproj::numerics::DenseMatrix;
use altproj::projections::*;
use common::*;
use nalgebra::DVector;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let elapsed = start.elapsed();
    ensure(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })?;
    Ok(elapsed)
}

/// 1. Every projector beats 10³ sampled members on each of 100 inputs.
fn projector_optimality() -> Outcome {
    let start = Instant::now();
    let mut comparisons = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for case in all_cases(2024) {
        let mut r = rng(7);
        let members: Vec<DenseMatrix> = (0..1000).map(|_| (case.member)(&mut r)).collect();
        let name = case.projector.name().to_string();
        for m in &members {
            ensure(case.projector.contains(m, 1e-8), || {
                format!("{name}: sampled member not feasible")
            })?;
        }
        for _ in 0..100 {
            let z = (case.input)(&mut r);
            let best = z.distance(&case.projector.project(&z).map_err(|e| e.to_string())?);
            for w in &members {
                let excess = best - z.distance(w);
                worst = worst.max(excess);
                ensure(excess <= 1e-9, || {
                    format!("{name}: projection loses to a member by {excess:e}")
                })?;
                comparisons += 1;
            }
        }
    }
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{comparisons} comparisons, worst excess {worst:.2e}, {t:.2?}"
    ))
}

fn set_pair(kind: usize, seed: u64) -> (Case, Case) {
    let mut r = rng(seed);
    match kind {
        0 => (box_case(&mut r, 5), box_case(&mut r, 5)),
        1 => (oriented_box_case(&mut r, 4), halfspace_case(&mut r, 4)),
        2 => (halfspace_case(&mut r, 3), affine_case(&mut r, 3, 2)),
        3 => (affine_case(&mut r, 4, 2), box_case(&mut r, 4)),
        4 => (
            tight_frame_case(&mut r, 3, 5),
            column_norm_case(&mut r, 3, 5),
        ),
        5 => (
            gram_tight_case(&mut r, 6, 3),
            gram_coherence_case(&mut r, 6),
        ),
        _ => (oriented_box_case(&mut r, 3), oriented_box_case(&mut r, 3)),
    }
}

/// 2. Objective monotone and residual identity over 20 randomized runs.
fn monotonicity_and_residual() -> Outcome {
    let mut records = 0;
    for run in 0..20u64 {
        let (x, y) = set_pair(run as usize % 7, 100 + run);
        let mut r = rng(run);
        let y0 = y
            .projector
            .project(&(y.input)(&mut r))
            .map_err(|e| e.to_string())?;
        let t = run_alternating_projections(
            x.projector.as_ref(),
            y.projector.as_ref(),
            &y0,
            &RunConfig::new(500, 1e-12),
        )
        .map_err(|e| e.to_string())?;
        let f0 = t.records[0].f;
        for w in t.records.windows(2) {
            ensure(w[1].f <= w[0].f + 1e-12 * (1.0 + f0), || {
                format!(
                    "run {run}: f rose from {} to {} at k={}",
                    w[0].f, w[1].f, w[1].k
                )
            })?;
        }
        for rec in &t.records {
            ensure(rec.residual.to_bits() == (2.0 * rec.dy).to_bits(), || {
                format!("run {run}: residual ≠ 2·dy at k={}", rec.k)
            })?;
        }
        records += t.records.len();
    }
    Ok(format!(
        "20 runs over 7 set pairs, {records} records checked"
    ))
}

/// Two randomly oriented boxes in ℝ¹⁰ whose interiors overlap in a thin slab
/// near a shared point, with a start far out in the second box.
fn random_box_pair(seed: u64) -> (OrientedBox, OrientedBox, DenseMatrix) {
    let mut r = rng(seed);
    let q1 = orthonormal(&mut r, 10, 10);
    let q2 = orthonormal(&mut r, 10, 10);
    let shared = &q1 * DVector::from_element(10, 0.95);
    let coords = q2.transpose() * shared;
    let b1 = OrientedBox::new(dense(q1), vec![-1.0; 10], vec![1.0; 10]).unwrap();
    let lower: Vec<f64> = coords.iter().map(|v| v - 0.01).collect();
    let upper: Vec<f64> = coords.iter().map(|v| v + 5.0).collect();
    let b2 = OrientedBox::new(dense(q2), lower, upper.clone()).unwrap();
    let y0 = b2.point_from_coords(&upper);
    (b1, b2, y0)
}

/// 3. Linear rate on convex pairs.
fn convex_linear_rate() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for seed in 0..4 {
        let (b1, b2, y0) = random_box_pair(seed);
        let t = run_alternating_projections(&b1, &b2, &y0, &RunConfig::new(100_000, 1e-10))
            .map_err(|e| e.to_string())?;
        ensure(t.stop_reason == StopReason::Tolerance, || {
            format!("boxes seed {seed}: stopped by {:?}", t.stop_reason)
        })?;
        let kl = estimate_kl_exponent(&t.records).map_err(|e| format!("boxes seed {seed}: {e}"))?;
        ensure(
            kl.rate_class == RateClass::Linear && kl.fit_r2 >= 0.99,
            || {
                format!(
                    "boxes seed {seed}: {:?} with r² {}",
                    kl.rate_class, kl.fit_r2
                )
            },
        )?;
        notes.push(format!(
            "boxes#{seed} k={} r²={:.6}",
            t.iterations, kl.fit_r2
        ));
    }
    for deg in [30.0f64, 45.0, 60.0] {
        let phi = deg.to_radians();
        let lx = AffineSet::line_2d(0.0, 0.0).unwrap();
        let ly = AffineSet::line_2d(phi, 0.0).unwrap();
        let y0 = DenseMatrix::column_vector(&[10.0 * phi.cos(), 10.0 * phi.sin()]).unwrap();
        let t = run_alternating_projections(
            &lx,
            &ly,
            &y0,
            &RunConfig::new(400, 1e-60).with_stagnation(1e-300),
        )
        .map_err(|e| e.to_string())?;
        let kl = estimate_kl_exponent(&t.records).map_err(|e| format!("{deg}°: {e}"))?;
        let rho = kl
            .rho_hat
            .ok_or_else(|| format!("{deg}°: classified {:?}", kl.rate_class))?;
        let expected = phi.cos().powi(2);
        ensure((rho / expected - 1.0).abs() <= 0.05, || {
            format!("{deg}°: ρ̂ = {rho}, cos²φ = {expected}")
        })?;
        notes.push(format!("{deg}° ρ̂={rho:.6}"));
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("{}, {t:.2?}", notes.join(", ")))
}

/// 4. Prescribed-norm design certificates.
fn prescribed_norm_design() -> Outcome {
    let start = Instant::now();
    let c = ColumnNormTargets::ones(5);
    let cfg = FrameDesignConfig::new(3, 5, 1, RunConfig::new(10_000, 1e-7).with_iterates());
    let res = design_prescribed_norm_frame(&cfg).map_err(|e| e.to_string())?;
    ensure(res.gap <= 1e-6, || format!("gap {}", res.gap))?;
    let hist = res.trace.history.as_ref().ok_or("no iterates")?;
    let guards = check_prop1_guards(hist, &c).map_err(|e| e.to_string())?;
    ensure(guards.holds(), || format!("guards: {guards:?}"))?;
    let tp = check_three_point_frames(hist, &c).map_err(|e| e.to_string())?;
    ensure(tp.holds, || format!("three-point margin {}", tp.margin))?;
    let bound = column_norm_contraction_constant(&c, 3) + 1e-6;
    let cb = check_contraction_bound(&res.trace.records, bound).map_err(|e| e.to_string())?;
    ensure(cb.holds, || {
        format!("contraction ratio {} > {}", cb.worst_ratio, cb.bound)
    })?;
    let t = within(Duration::from_secs(20), start)?;
    Ok(format!(
        "gap {:.2e} at k={}, three-point margin {:.1e}, worst dx/dy {:.4} ≤ {:.4}, {t:.2?}",
        res.gap, res.trace.iterations, tp.margin, cb.worst_ratio, cb.bound
    ))
}

/// 5. ETF design over 10 seeds.
fn etf_design() -> Outcome {
    let start = Instant::now();
    let xi = welch_bound(3, 6).map_err(|e| e.to_string())?;
    let mut best = f64::INFINITY;
    let mut certified = 0;
    let mut final_dy_max = 0.0f64;
    let mut rising = Vec::new();
    for seed in 1..=10u64 {
        let cfg = FrameDesignConfig::new(3, 6, seed, RunConfig::new(5000, 1e-10));
        let res = design_etf(&cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        best = best.min(res.coherence);
        let Some(cert) = res.certificate else {
            continue;
        };
        certified += 1;
        let col = res
            .trace
            .extra_index("eigen_gap")
            .ok_or("no eigen_gap column")?;
        let tail: Vec<&TraceRecord> = res.trace.records.iter().filter(|r| r.k >= cert.k).collect();
        for r in &tail {
            ensure(r.extras[col] >= cert.threshold - 1e-9, || {
                format!(
                    "seed {seed}: eigen gap {} < ν/a = {} at k={}",
                    r.extras[col], cert.threshold, r.k
                )
            })?;
        }
        let rises: Vec<usize> = tail
            .windows(2)
            .filter(|w| w[1].dy > w[0].dy)
            .map(|w| w[1].k)
            .collect();
        if let Some(last) = rises.last() {
            rising.push(format!(
                "seed {seed} ({} rises, last at k={last})",
                rises.len()
            ));
        }
        let last = tail.last().map_or(f64::NAN, |r| r.dy);
        final_dy_max = final_dy_max.max(last);
        ensure(last < 1e-8, || format!("seed {seed}: final dy {last:e}"))?;
    }
    ensure(best <= xi + 5e-3, || {
        format!("best coherence {best} > {}", xi + 5e-3)
    })?;
    let t = within(Duration::from_secs(60), start)?;
    let summary = format!(
        "best coherence {best:.7} (Welch {xi:.7}), {certified}/10 seeds certified, eigen gap ≥ ν/a throughout, final dy ≤ {final_dy_max:.1e}, {t:.2?}"
    );
    ensure(rising.is_empty(), || {
        format!(
            "{summary}; but dy is not nonincreasing after the certificate: {}",
            rising.join(", ")
        )
    })?;
    Ok(summary)
}

/// 6. KL estimator recovers known regimes.
fn kl_oracles() -> Outcome {
    let mut notes = Vec::new();
    for rho in [0.5f64, 0.9, 0.99] {
        let e: Vec<(f64, f64)> = (1..=1000).map(|k| (k as f64, rho.powi(k))).collect();
        let est = estimate_kl_exponent_from_errors(&e).map_err(|x| x.to_string())?;
        let got = est.rho_hat.unwrap_or(f64::NAN);
        ensure(
            est.rate_class == RateClass::Linear && (got - rho).abs() <= 1e-6,
            || format!("geometric {rho}: {:?} ρ̂={got}", est.rate_class),
        )?;
    }
    notes.push("geometric ρ∈{0.5,0.9,0.99}".to_string());
    for p in [1.0f64, 2.0, 3.0] {
        let theta = (1.0 + p) / (1.0 + 2.0 * p);
        let e: Vec<(f64, f64)> = (1..=2000)
            .map(|k| (k as f64, (k as f64).powf(-p)))
            .collect();
        let est = estimate_kl_exponent_from_errors(&e).map_err(|x| x.to_string())?;
        ensure(
            est.rate_class == RateClass::Sublinear && (est.theta_hat - theta).abs() <= 0.02,
            || format!("power {p}: {:?} θ̂={}", est.rate_class, est.theta_hat),
        )?;
        // the same decay seen through trace increments
        let q = |k: usize| (k as f64).powf(-p);
        let recs: Vec<TraceRecord> = (1..=3000)
            .map(|k| {
                TraceRecord::new(
                    k,
                    q(k),
                    (k > 1).then(|| q(k) - q(k + 1)),
                    q(k) - q(k + 1),
                    vec![],
                )
            })
            .collect();
        let est = estimate_kl_exponent(&recs).map_err(|x| x.to_string())?;
        ensure(
            est.rate_class == RateClass::Sublinear && (est.theta_hat - theta).abs() <= 0.02,
            || format!("power {p} trace: {:?} θ̂={}", est.rate_class, est.theta_hat),
        )?;
        notes.push(format!("p={p} θ̂={:.4}", est.theta_hat));
    }
    let e: Vec<(f64, f64)> = (1..=50)
        .map(|k| (k as f64, if k < 7 { 1.0 / k as f64 } else { 0.0 }))
        .collect();
    let est = estimate_kl_exponent_from_errors(&e).map_err(|x| x.to_string())?;
    ensure(est.rate_class == RateClass::Finite, || {
        format!("finite hit: {:?}", est.rate_class)
    })?;
    notes.push("finite hit".to_string());
    Ok(notes.join(", "))
}

/// 7. Welch bound over random unit-norm frames.
fn welch_property() -> Outcome {
    let mut r = rng(77);
    let mut margin = f64::INFINITY;
    for i in 0..100 {
        let (n, l) = [(2, 3), (3, 6), (4, 8)][i % 3];
        let scale = r.random_range(0.1..10.0);
        let d = project_column_norms(
            &dense(gaussian(&mut r, n, l, scale)),
            &ColumnNormTargets::ones(l),
        )
        .map_err(|e| e.to_string())?;
        let mu = mutual_coherence(&d).map_err(|e| e.to_string())?;
        let xi = welch_bound(n, l).map_err(|e| e.to_string())?;
        margin = margin.min(mu - xi);
        ensure(mu >= xi - 1e-12, || format!("({n},{l}): μ={mu} < ξ={xi}"))?;
    }
    Ok(format!("100 frames, smallest μ − ξ = {margin:.4}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_altproj"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

/// 8. Byte-identical CLI outputs and analyze round-trip.
fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        ("run-etf", "n = 3\nl = 6\nseeds = 1..4\nmax_iter = 2000\ntol = 1e-10\n"),
        ("run-norms", "n = 3\nl = 5\nc = ones\nseed = 1\nmax_iter = 10000\ntol = 1e-7\n"),
        (
            "convex-demo",
            "set_x = line\nx_angle_deg = 0\nx_offset = 0\nset_y = line\ny_angle_deg = 45\ny_offset = 0\nseed = 3\nmax_iter = 2000\ntol = 1e-40\n",
        ),
        (
            "convex-demo",
            "set_x = box\nx_lower = -1,-1,-1\nx_upper = 1,1,1\nset_y = halfspace\ny_normal = 1,1,1\ny_offset = -2.5\nseed = 9\nmax_iter = 500\ntol = 1e-12\n",
        ),
    ];
    let mut traces = 0;
    for (i, (cmd, text)) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.cfg"));
        fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|tag| dir.path().join(format!("out{i}{tag}")))
            .collect();
        for out in &runs {
            run_cli(&[
                cmd,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])?;
        }
        let (a, b) = (snapshot(&runs[0])?, snapshot(&runs[1])?);
        ensure(a == b, || {
            format!("{cmd} (config {i}) outputs differ between identical runs")
        })?;
        for (name, _) in a.iter().filter(|(n, _)| n.ends_with(".csv")) {
            let analysis = dir.path().join(format!("an{i}_{name}"));
            let trace = runs[0].join(name);
            run_cli(&[
                "analyze",
                "--config",
                trace.to_str().unwrap(),
                "--out",
                analysis.to_str().unwrap(),
            ])?;
            let report =
                fs::read_to_string(analysis.join("analysis.json")).map_err(|e| e.to_string())?;
            ensure(!report.contains("\"invalid\""), || {
                format!("analyze flagged {name} as invalid")
            })?;
            traces += 1;
        }
    }
    Ok(format!(
        "{} configs reproduced byte for byte, {traces} traces analyzed",
        configs.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("projector optimality", projector_optimality),
        (
            "monotone objective and residual identity",
            monotonicity_and_residual,
        ),
        ("linear rate on convex pairs", convex_linear_rate),
        ("prescribed-norm design", prescribed_norm_design),
        ("equiangular tight frame design", etf_design),
        ("KL estimator oracles", kl_oracles),
        ("Welch bound", welch_property),
        ("CLI determinism and round-trip", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("acceptance {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {}: FAIL {name}: {why}", i + 1);
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
