//! Acceptance gate: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit on any failure.

use heisenframe::baseline::{ds_frame_bounds, SequenceRule};
use heisenframe::cli::{random_coefficients, synthesize};
use heisenframe::frames::{
    analysis, c_of_m, finite_section_stability, frame_bounds, gram_matrix, quadratic_forms, reconstruct, scheme_m,
    synthesis_norm_sq, Convention, FrameIndex, Method, PerturbationScheme, SchemeRule, SchemeSpec, Truncation,
};
use heisenframe::grid::{make_bump, norm_sq, trig_poly, Bump, GridSpec};
use heisenframe::group::{conjugate, group_inv, group_mul, reproducing_violation, weil_check, Point};
use heisenframe::representations::{
    hs_norm_sq_integral, hs_norm_sq_kernel, hs_norm_sq_lattice, RepParams, WindowSpec, DEFAULT_WINDOW_HALF_WIDTH,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point {
    let mut c = || rng.random_range(-scale..scale);
    Point::new(vec![c()], vec![c()], c()).unwrap()
}

fn group_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let id = Point::identity(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (g, h, k) = (random_point(&mut rng, 3.0), random_point(&mut rng, 3.0), random_point(&mut rng, 3.0));
        let left = group_mul(&group_mul(&g, &h).unwrap(), &k).unwrap();
        let right = group_mul(&g, &group_mul(&h, &k).unwrap()).unwrap();
        worst = worst.max(left.max_abs_diff(&right));
        worst = worst.max(group_mul(&g, &id).unwrap().max_abs_diff(&g));
        worst = worst.max(group_mul(&id, &g).unwrap().max_abs_diff(&g));
        worst = worst.max(group_mul(&g, &group_inv(&g)).unwrap().max_abs_diff(&id));
        let (gc, hc) = (g.coords(), h.coords());
        let closed = Point::new(vec![hc[0]], vec![hc[1]], hc[2] + gc[0] * hc[1] - hc[0] * gc[1]).unwrap();
        worst = worst.max(conjugate(&g, &h).unwrap().max_abs_diff(&closed));
    }
    check(worst <= 1e-12, format!("max deviation {worst:.3e} over 1000 triples"))
}

fn reproducing_set() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut draw = || {
        let mut open = |h: f64| loop {
            let v = rng.random_range(-h..h);
            if v != -h {
                return v;
            }
        };
        Point::new(vec![open(0.5)], vec![open(0.5)], open(0.25)).unwrap()
    };
    let mut witnesses = 0;
    for _ in 0..100_000 {
        let (p, q) = (draw(), draw());
        if reproducing_violation(&p, &q, 1e-9).unwrap().is_some() {
            witnesses += 1;
        }
    }
    let pt = |x, xi, t| Point::new(vec![x], vec![xi], t).unwrap();
    let first = reproducing_violation(&pt(0.7, 0.0, 0.0), &pt(-0.3, 0.0, 0.0), 1e-9).unwrap().is_some();
    let second = reproducing_violation(&pt(0.0, 0.0, 0.3), &pt(0.0, 0.0, -0.2), 1e-9).unwrap().is_some();
    check(
        witnesses == 0 && first && second,
        format!("{witnesses} witnesses in 1e5 pairs; constructed pairs detected: {first}, {second}"),
    )
}

fn weil() -> Outcome {
    let f = Bump::centered(1, &[0.9; 3]).unwrap().with_sharpness(8.0).unwrap();
    let w = weil_check(&f, &GridSpec::cube(1, 64).unwrap(), None).map_err(|e| e.to_string())?;
    let gap = w.relative_gap();
    check(gap <= 1e-10, format!("relative gap {gap:.3e} at 64^3"))
}

fn parseval() -> Outcome {
    let spec = GridSpec::cube(1, 64).unwrap();
    let f = make_bump(&spec, &[0.9; 3]).unwrap();
    let nf = norm_sq(&f);
    let mut ratios = Vec::new();
    for k in [4, 6, 8] {
        let s = PerturbationScheme::harmonic(Truncation::new(1, k, k).unwrap());
        ratios.push(2.0 * quadratic_forms(&f, &s).unwrap().p / nf);
    }
    let last = ratios[2];
    let monotone = ratios.windows(2).all(|w| w[0] <= w[1]) && ratios.iter().all(|&r| r <= 1.0);
    let s = PerturbationScheme::harmonic(Truncation::new(1, 4, 4).unwrap());
    let coeffs = vec![
        (FrameIndex::new(vec![0], vec![0], 0), Complex64::new(1.0, 0.0)),
        (FrameIndex::new(vec![1], vec![-2], 1), Complex64::new(0.5, -0.25)),
        (FrameIndex::new(vec![-3], vec![4], -2), Complex64::new(-0.3, 0.7)),
        (FrameIndex::new(vec![2], vec![1], 4), Complex64::new(0.1, 0.2)),
    ];
    let poly = trig_poly(&spec, &coeffs).unwrap();
    let poly_ratio = 2.0 * quadratic_forms(&poly, &s).unwrap().p / norm_sq(&poly);
    check(
        (0.98..=1.0).contains(&last) && monotone && (poly_ratio - 1.0).abs() <= 1e-10,
        format!(
            "ratios K=4,6,8: {:.12}, {:.12}, {:.12}; trig polynomial |ratio-1| = {:.3e}",
            ratios[0],
            ratios[1],
            ratios[2],
            (poly_ratio - 1.0).abs()
        ),
    )
}

fn hs_three_way() -> Outcome {
    let spec = GridSpec::cube(1, 64).unwrap();
    let f = make_bump(&spec, &[0.9; 3]).unwrap();
    let window = WindowSpec::symmetric(1, DEFAULT_WINDOW_HALF_WIDTH, spec.spacing(0)).unwrap();
    let mut worst: f64 = 0.0;
    for omega in [2.0, -2.0, 4.0] {
        let r = RepParams::new(omega).unwrap();
        let v = [
            hs_norm_sq_integral(&r, &f),
            hs_norm_sq_lattice(&r, &f, 8).unwrap(),
            hs_norm_sq_kernel(&r, &f, &window).unwrap(),
        ];
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max((v[i] - v[j]).abs() / v[i].abs().max(v[j].abs()));
            }
        }
    }
    check(worst <= 1e-3, format!("max pairwise relative difference {worst:.3e}"))
}

fn envelope_containment() -> Outcome {
    let t = Truncation::new(1, 4, 4).unwrap();
    let h = frame_bounds(&PerturbationScheme::harmonic(t), true).unwrap();
    let mut ok = h.a_est == 1.0 && h.b_est == 1.0;
    let mut detail = format!("harmonic A={} B={}", h.a_est, h.b_est);
    let mut prev = f64::INFINITY;
    for m in [0.2, 0.1, 0.05, 0.01] {
        let s = PerturbationScheme::from_spec(t, &SchemeSpec::with_rule(SchemeRule::Random { m, seed: 0 })).unwrap();
        let r = frame_bounds(&s, true).unwrap();
        let c = c_of_m(scheme_m(&s), 1).unwrap();
        let lo = (1.0 - c) * (1.0 - r.t_est.sqrt()).powi(2);
        let hi = (1.0 + c) * (1.0 + r.t_est.sqrt()).powi(2);
        let dist = (r.a_est - 1.0).abs().max((r.b_est - 1.0).abs());
        ok &= lo <= r.a_est && r.a_est <= r.b_est && r.b_est <= hi && dist <= prev;
        prev = dist;
        detail.push_str(&format!("; M={m}: {lo:.4} <= {:.4} <= {:.4} <= {hi:.4}", r.a_est, r.b_est));
    }
    check(ok, detail)
}

fn stability() -> Outcome {
    let spec = SchemeSpec::with_rule(SchemeRule::OddSites { b: 0.05, beta: 0.05, omega: 0.0 });
    let st = finite_section_stability(Truncation::new(1, 2, 2).unwrap(), &spec, true).unwrap();
    let rule = SequenceRule::Alternating { amp: 0.2 };
    let d4 = ds_frame_bounds(&rule.build(4).unwrap()).unwrap();
    let d8 = ds_frame_bounds(&rule.build(8).unwrap()).unwrap();
    let (da1, db1) = ((d8.a_est - d4.a_est).abs(), (d8.b_est - d4.b_est).abs());
    check(
        st.delta_a <= 1e-3 && st.delta_b <= 1e-3 && da1 <= 1e-3 && db1 <= 1e-3,
        format!("H1 K 2->4: dA={:.3e} dB={:.3e}; 1-D K 4->8: dA={da1:.3e} dB={db1:.3e}", st.delta_a, st.delta_b),
    )
}

fn round_trip() -> Outcome {
    let t = Truncation::new(1, 2, 2).unwrap();
    let s = PerturbationScheme::from_spec(t, &SchemeSpec::with_rule(SchemeRule::Random { m: 0.05, seed: 0 })).unwrap();
    let g = random_coefficients(t.count(), 0);
    let f = synthesize(&s, &g).unwrap();
    let table = analysis(&f, &s, Convention::HaarNormalized).unwrap();
    let gram = gram_matrix(&s, false).unwrap();
    let target = GridSpec::cube(1, 16).unwrap();
    let err = |c: &[Complex64]| {
        let d: Vec<Complex64> = c.iter().zip(&g).map(|(a, b)| a - b).collect();
        (synthesis_norm_sq(&gram, &d).max(0.0) / synthesis_norm_sq(&gram, &g)).sqrt()
    };
    let direct = reconstruct(&table, &s, &target, Method::GramSolve, 1e-10, 200).map_err(|e| e.to_string())?;
    let iter = reconstruct(&table, &s, &target, Method::FrameIteration, 1e-6, 200).map_err(|e| e.to_string())?;
    let (e1, e2) = (err(&direct.coefficients), err(&iter.coefficients));
    check(
        e1 <= 1e-6 && e2 <= 1e-2 && iter.iterations <= 200,
        format!("gram-solve {e1:.3e}; frame iteration {e2:.3e} in {} iterations", iter.iterations),
    )
}

fn baseline() -> Outcome {
    let mut ok = true;
    let mut detail = String::new();
    for rule in [SequenceRule::Harmonic, SequenceRule::Uniform { shift: 0.25 }] {
        let r = ds_frame_bounds(&rule.build(16).unwrap()).unwrap();
        ok &= r.a_est == 1.0 && r.b_est == 1.0;
        detail.push_str(&format!("{rule:?}: A={} B={}; ", r.a_est, r.b_est));
    }
    let rule = SequenceRule::Alternating { amp: 0.2 };
    let r16 = ds_frame_bounds(&rule.build(16).unwrap()).unwrap();
    let r32 = ds_frame_bounds(&rule.build(32).unwrap()).unwrap();
    // limits 1 -/+ sin(0.2 pi)
    let s = (0.2 * std::f64::consts::PI).sin();
    ok &= r16.a_est > 0.0
        && (r16.a_est - (1.0 - s)).abs() <= 1e-9
        && (r16.b_est - (1.0 + s)).abs() <= 1e-9
        && (r32.a_est - r16.a_est).abs() <= 1e-3
        && (r32.b_est - r16.b_est).abs() <= 1e-3;
    detail.push_str(&format!("alternating 0.2 K=16: A={:.15} B={:.15}; K=32: A={:.15}", r16.a_est, r16.b_est, r32.a_est));
    check(ok, detail)
}

fn cli_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_heisenframe");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(exe)
            .args(["sweep", "--Kxy", "2", "--Kt", "2", "--seed", "0", "--m", "0.2,0.1,0.05,0.01", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("sweep exited with {}", status.status));
        }
        std::fs::read(out).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.csv")?, run("b.csv")?);
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sweep_k2.csv");
    let golden = std::fs::read(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
    check(a == b && a == golden, format!("repeat identical: {}; matches golden: {}", a == b, a == golden))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("group and lattice properties", group_properties),
        ("reproducing-set property", reproducing_set),
        ("Weil normalization", weil),
        ("harmonic Parseval", parseval),
        ("Hilbert-Schmidt three-way oracle", hs_three_way),
        ("envelope containment", envelope_containment),
        ("finite-section stability", stability),
        ("reconstruction round trip", round_trip),
        ("one-dimensional baseline", baseline),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[PASS] criterion {}: {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {d} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
