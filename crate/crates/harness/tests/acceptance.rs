//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 even when a criterion fails so that the workspace test run stays
//! usable; set `ACCEPTANCE_STRICT=1` to turn failures into a non-zero exit.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trackreg::coords::jacobians_at;
use trackreg::{
    build_fim, compose_steps, kf_predict, ncv_model, rlsb_update, rlsb_update_naive, sfa,
    tracklet_inverse_kf, BiasEstimate, CartesianMeasurement, FimBlock, FusedTrack,
    GaussianEstimate, PseudoMeasurement,
};
use trackreg_harness::{presets, run_monte_carlo, scenario_crlb, Method, RunMetrics};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spd4(rng: &mut ChaCha8Rng, scale: f64) -> Matrix4<f64> {
    let a = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    (a * a.transpose() + Matrix4::identity()) * scale
}

fn spd2(rng: &mut ChaCha8Rng, scale: f64) -> Matrix2<f64> {
    let a = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    (a * a.transpose() + Matrix2::identity() * 0.5) * scale
}

fn gauss4(rng: &mut ChaCha8Rng) -> Vector4<f64> {
    Vector4::from_fn(|_, _| rng.sample(StandardNormal))
}

fn rot(a: f64) -> Matrix2<f64> {
    Matrix2::new(a.cos(), -a.sin(), a.sin(), a.cos())
}

fn final_sensor(m: &RunMetrics, s: usize) -> &[f64] {
    &m.bias_rmse[m.frames][s]
}

fn identity_property() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let steps = 1 + i % 10;
        let model = compose_steps(
            &ncv_model(rng.random_range(0.2..3.0), rng.random_range(0.01..5.0), 1.0).unwrap(),
            steps,
        )
        .unwrap();
        let prev = GaussianEstimate::new(gauss4(&mut rng), spd4(&mut rng, 10.0), 0);
        let pred = kf_predict(&prev, &model).unwrap();
        let post = (pred.cov.try_inverse().unwrap() + spd4(&mut rng, 0.05))
            .try_inverse()
            .unwrap();
        let curr = GaussianEstimate::new(
            gauss4(&mut rng),
            (post + post.transpose()) * 0.5,
            steps as i64,
        );
        let t = tracklet_inverse_kf(&prev, &curr, &model).unwrap();
        let r = (t.a * curr.cov - (t.a - Matrix4::identity()) * pred.cov).norm() / t.cov.norm();
        worst = worst.max(r);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 5.0,
        format!("worst relative residual {worst:.3e}, {secs:.2} s"),
    )
}

fn gain_reconstruction(exl: &RunMetrics) -> Outcome {
    match exl.gain_rel_err {
        Some(e) => outcome(e <= 1e-6, format!("max relative gain error {e:.3e}")),
        None => outcome(false, "no gain comparison recorded".into()),
    }
}

fn ex_vs_exl(ex: &RunMetrics, exl: &RunMetrics, secs: f64) -> Outcome {
    let initial = [20.0, 1e-3];
    let mut pass = true;
    let mut parts = Vec::new();
    for s in 0..ex.sensors {
        for c in 0..2 {
            let a = final_sensor(ex, s)[c];
            let b = final_sensor(exl, s)[c];
            pass &= (b - a).abs() <= 0.25 * a && a < 0.2 * initial[c] && b < 0.2 * initial[c];
            parts.push(format!("s{} c{}: EX {a:.4e} EXL {b:.4e}", s + 1, c));
        }
    }
    pass &= secs < 120.0;
    outcome(pass, format!("{}; {secs:.1} s", parts.join(", ")))
}

fn fbe_convergence(kf: &RunMetrics, secs: f64) -> Outcome {
    let r = final_sensor(kf, 0);
    let pass = (0.70..=1.25).contains(&r[0]) && (7.0e-5..=1.3e-4).contains(&r[1]) && secs < 900.0;
    outcome(
        pass,
        format!(
            "sensor 1 b_r {:.4} m (want [0.70, 1.25]), b_theta {:.4e} rad (want [7.0e-5, 1.3e-4]); {} runs, {secs:.1} s",
            r[0], r[1], kf.runs
        ),
    )
}

fn neg_log_lik(blocks: &[FimBlock<f64>], ys: &[Vector2<f64>], b: &DVector<f64>) -> f64 {
    blocks
        .iter()
        .zip(ys)
        .map(|(blk, y)| {
            let gb = &blk.g * b;
            let e = y - Vector2::new(gb[0], gb[1]);
            0.5 * (e.transpose() * blk.r.try_inverse().unwrap() * e)[(0, 0)]
        })
        .sum()
}

fn crlb_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let d = if instance % 2 == 0 { 2 } else { 4 };
        let n = rng.random_range(3..8);
        let blocks: Vec<FimBlock<f64>> = (0..n)
            .map(|i| {
                let r = rng.random_range(5000.0..25000.0);
                let th = rng.random_range(-3.0..3.0);
                let a = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                let noise = a * a.transpose() * 100.0 + Matrix2::identity() * 50.0;
                FimBlock::against_reference(i, 0, &jacobians_at(r, th), d, noise)
            })
            .collect();
        let ys: Vec<Vector2<f64>> = (0..n)
            .map(|_| Vector2::from_fn(|_, _| 30.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let j = build_fim(d, &blocks).unwrap().j;
        let b0 = DVector::from_column_slice(&[20.0, 1e-3, 1e-3, 1e-3][..d]);
        let steps = DVector::from_column_slice(&[1e-1, 1e-5, 1e-5, 1e-5][..d]);
        for a in 0..d {
            for c in 0..d {
                let f = |sa: f64, sc: f64| {
                    let mut b = b0.clone();
                    b[a] += sa * steps[a];
                    b[c] += sc * steps[c];
                    neg_log_lik(&blocks, &ys, &b)
                };
                let h = (f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0))
                    / (4.0 * steps[a] * steps[c]);
                worst = worst.max((h - j[(a, c)]).abs() / (j[(a, a)] * j[(c, c)]).sqrt());
            }
        }
    }
    let s = presets::five_sensor_offset();
    let bound = scenario_crlb(&s).unwrap();
    let b_r = bound[s.frames][0].as_ref().map_or(f64::NAN, |v| v[0]);
    let rel = (b_r / 0.8795 - 1.0).abs();
    outcome(
        worst <= 1e-3 && rel <= 0.05,
        format!(
            "worst Hessian mismatch {worst:.3e}; sqrt CRLB(b_r) {b_r:.5} m vs 0.8795 ({:.2}%)",
            100.0 * rel
        ),
    )
}

fn sequential_fusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = compose_steps(&ncv_model(1.0, 0.5, 0.5).unwrap(), 2).unwrap();
    let h = trackreg::linalg::position_selection::<f64>();
    let mut worst = 0.0f64;
    for trial in 0..10_000 {
        let m = 2 + trial % 4;
        let prev = FusedTrack::new(GaussianEstimate::new(
            gauss4(&mut rng) * 100.0,
            spd4(&mut rng, 50.0),
            0,
        ));
        let ms: Vec<(usize, CartesianMeasurement<f64>)> = (0..m)
            .map(|s| {
                let z = Vector2::from_fn(|_, _| 100.0 * rng.sample::<f64, _>(StandardNormal));
                (
                    s,
                    CartesianMeasurement {
                        z,
                        r: spd2(&mut rng, 30.0),
                    },
                )
            })
            .collect();
        let out = sfa(&prev, &model, &ms).unwrap();
        let pred = kf_predict(&prev.estimate, &model).unwrap();
        let pinv = pred.cov.try_inverse().unwrap();
        let mut info = pinv;
        let mut rhs = pinv * pred.mean;
        for (_, z) in &ms {
            let r_inv = z.r.try_inverse().unwrap();
            info += h.transpose() * r_inv * h;
            rhs += h.transpose() * r_inv * z.z;
        }
        let cov = info.try_inverse().unwrap();
        let mean = cov * rhs;
        let ec = (out.track.estimate.cov - cov).norm() / cov.norm();
        let em = (out.track.estimate.mean - mean).norm() / mean.norm().max(cov.norm().sqrt());
        worst = worst.max(ec).max(em);
    }
    outcome(
        worst <= 1e-10,
        format!("worst relative difference {worst:.3e} over 10000 trials"),
    )
}

/// Random pseudo-measurement whose leading 2×2 block has condition `cond`.
fn random_pm(rng: &mut ChaCha8Rng, cond: f64, d: usize) -> PseudoMeasurement<f64> {
    let s1 = 10f64.powf(rng.random_range(-1.0..4.3));
    let core = rot(rng.random_range(0.0..6.3))
        * Matrix2::new(s1, 0.0, 0.0, s1 / cond)
        * rot(rng.random_range(0.0..6.3));
    let mut h = DMatrix::zeros(2, d);
    for c in 0..d {
        let scale = if c < 2 {
            1.0
        } else {
            rng.random_range(0.5..2.0)
        };
        for r in 0..2 {
            h[(r, c)] = core[(r, c % 2)] * scale;
        }
    }
    let e = Matrix2::new(
        10f64.powf(rng.random_range(0.0..3.0)),
        0.0,
        0.0,
        10f64.powf(rng.random_range(0.0..3.0)),
    );
    let q = rot(rng.random_range(0.0..6.3));
    PseudoMeasurement {
        z_b: Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
        h,
        r: q * e * q.transpose(),
    }
}

fn initial(d: usize) -> BiasEstimate<f64> {
    BiasEstimate::zero(&[20.0, 1e-3, 0.01, 0.01][..d])
}

fn joseph_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut lost = 0;
    for chain in 0..1000 {
        let d = if chain % 2 == 0 { 2 } else { 4 };
        let mut est = initial(d);
        for _ in 0..100 {
            let cond = [1.0, 1e4, 1e8][rng.random_range(0..3)];
            est = rlsb_update(&est, &random_pm(&mut rng, cond, d)).unwrap();
            if Cholesky::new(est.sigma.clone()).is_none() {
                lost += 1;
            }
        }
    }
    let mut naive_failures = 0;
    for _ in 0..200 {
        let mut naive = initial(2);
        for _ in 0..20 {
            naive = rlsb_update_naive(&naive, &random_pm(&mut rng, 1e10, 2)).unwrap();
            if Cholesky::new(naive.sigma.clone()).is_none() {
                naive_failures += 1;
                break;
            }
        }
    }
    outcome(
        lost == 0 && naive_failures >= 1,
        format!(
            "{lost} non-PD covariances in 100000 Joseph updates; short form lost definiteness in {naive_failures}/200 chains at cond 1e10"
        ),
    )
}

/// Fraction of frames at which every sensor's average NEES satisfies `ok`.
fn nees_fraction(m: &RunMetrics, ok: impl Fn(f64) -> bool) -> f64 {
    let good = (1..=m.frames)
        .filter(|&k| m.bias_nees[k].iter().all(|&v| ok(v)))
        .count();
    good as f64 / m.frames as f64
}

fn nees_consistency(exl: &RunMetrics, fbe: &[&RunMetrics]) -> Outcome {
    let b = exl.nees;
    let two = nees_fraction(exl, |v| v >= b.lower && v <= b.upper);
    let mut pass = two >= 0.90;
    let mut parts = vec![format!(
        "EXL in [{:.3}, {:.3}] at {:.0}% of frames",
        b.lower,
        b.upper,
        100.0 * two
    )];
    for m in fbe {
        let up = m.nees.one_sided_upper;
        let f = nees_fraction(m, |v| v <= up);
        pass &= f >= 0.95;
        parts.push(format!(
            "FBE {} below {up:.3} at {:.0}%",
            m.local_filter,
            100.0 * f
        ));
    }
    outcome(pass, parts.join("; "))
}

/// One-sided test that `mean(a − b) ≥ 0` within 3 standard errors.
fn not_below(pairs: &[(f64, f64)]) -> (bool, f64, f64) {
    let n = pairs.len() as f64;
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    (mean >= -3.0 * se, mean, se)
}

fn rmse_ordering(kf: &RunMetrics) -> Outcome {
    let se = &kf.final_track_se;
    if se.is_empty() {
        return outcome(false, "no fused frames".into());
    }
    let rms = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        (se.iter().map(f).sum::<f64>() / se.len() as f64).sqrt()
    };
    let (l, f, nb) = (rms(&|t| t.0), rms(&|t| t.1), rms(&|t| t.2));
    let (p1, m1, s1) = not_below(&se.iter().map(|t| (t.1, t.2)).collect::<Vec<_>>());
    let (p2, m2, s2) = not_below(&se.iter().map(|t| (t.0, t.1)).collect::<Vec<_>>());
    outcome(
        p1 && p2,
        format!(
            "no-bias {nb:.3} m <= corrected {f:.3} m <= local {l:.3} m (MSE gaps {m1:.3}±{s1:.3}, {m2:.3}±{s2:.3})"
        ),
    )
}

fn scale_run(m: &RunMetrics) -> Outcome {
    let k = m.last_fusion_frame().unwrap_or(m.frames);
    let local = m.local_rmse[k].rmse;
    match m.fused_rmse[k] {
        Some(f) => outcome(
            f.rmse <= 0.6 * local,
            format!(
                "fused {:.3} m vs local {local:.3} m ({:.0}%)",
                f.rmse,
                100.0 * f.rmse / local
            ),
        ),
        None => outcome(false, "no fused estimate at the final frame".into()),
    }
}

/// Median over single-threaded repetitions of the paired EXL/EX time ratio.
fn relative_cost(s: &trackreg_harness::Scenario) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let mut pairs: Vec<(f64, f64)> = (0..9)
        .map(|_| {
            pool.install(|| {
                let ex = run_monte_carlo(s, Method::Ex, 50, s.rng_seed).unwrap();
                let exl = run_monte_carlo(s, Method::Exl, 50, s.rng_seed).unwrap();
                (
                    ex.estimator_time.as_secs_f64(),
                    exl.estimator_time.as_secs_f64(),
                )
            })
        })
        .collect();
    pairs.sort_by(|x, y| (x.1 / x.0).total_cmp(&(y.1 / y.0)));
    let (a, b) = pairs[pairs.len() / 2];
    let ratio = b / a;
    outcome(
        ratio <= 2.0,
        format!(
            "median EXL/EX estimator time ratio {ratio:.2} (EXL {b:.4} s, EX {a:.4} s; range {:.2} to {:.2})",
            pairs[0].1 / pairs[0].0,
            pairs[pairs.len() - 1].1 / pairs[pairs.len() - 1].0
        ),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!(
            "{} {n:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    report(1, "tracklet identity", identity_property());

    let two = presets::two_sensor();
    let ((ex, exl), secs) = timed(|| {
        let ex = run_monte_carlo(&two, Method::Ex, 100, two.rng_seed).unwrap();
        let exl = run_monte_carlo(&two, Method::Exl, 100, two.rng_seed).unwrap();
        (ex, exl)
    });
    report(2, "gain reconstruction", gain_reconstruction(&exl));
    report(3, "EX vs EXL bias RMSE", ex_vs_exl(&ex, &exl, secs));

    let offset = presets::five_sensor_offset();
    let (kf, secs) = timed(|| run_monte_carlo(&offset, Method::Fbe, 100, offset.rng_seed).unwrap());
    report(4, "five-sensor FBE convergence", fbe_convergence(&kf, secs));
    report(5, "CRLB", crlb_check());
    report(6, "sequential fusion", sequential_fusion());
    report(7, "Joseph form", joseph_robustness());

    let imm1 = presets::five_sensor_imm_ncv_ncv();
    let imm2 = presets::five_sensor_imm_nca_ncv();
    let ncv = run_monte_carlo(&imm1, Method::Fbe, 100, imm1.rng_seed).unwrap();
    let nca = run_monte_carlo(&imm2, Method::Fbe, 100, imm2.rng_seed).unwrap();
    report(
        8,
        "NEES consistency",
        nees_consistency(&exl, &[&kf, &ncv, &nca]),
    );
    report(9, "RMSE ordering", rmse_ordering(&kf));

    let scale = presets::five_sensor_scale();
    let sc = run_monte_carlo(&scale, Method::Fbe, 100, scale.rng_seed).unwrap();
    report(10, "offset and scale", scale_run(&sc));
    report(11, "relative cost", relative_cost(&two));

    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!(
        "{}/{} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
