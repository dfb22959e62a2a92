//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria in `KNOWN_UNATTAINABLE` are still run and still print FAIL when
//! they fail; only an unexpected failure makes the process exit non-zero.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use orthant_lab::bounds::{corollary_ratio, eigenvalue_bounds, p_from_lambda, yamabe_lower_bound};
use orthant_lab::fpt::{
    arcsine_cdf, default_window, fit_tail_exponent, ks_distance, occupation_times,
    one_particle_survival, survival_curve, ExponentFit, WalkConfig,
};
use orthant_lab::spectral::{richardson_extrapolate, solve_levels, GridSpec};
use orthant_lab::volume::{estimate_fraction, lemma1_report, recursion_bound};
use orthant_lab::{DomainSpec, Substreams};
use orthant_lab_cli::manifest_path;

/// The ratio `p d / lambda` tends to `d / (d - 2)` as `lambda -> 0`, so it
/// is about 1.11 at d = 20 and cannot be within 1e-2 of one there.
const KNOWN_UNATTAINABLE: &[u32] = &[5];

const SEED: u64 = 20_240_601;

struct Outcome {
    id: u32,
    passed: bool,
    detail: String,
}

fn report(id: u32, title: &str, passed: bool, detail: String, started: Instant) -> Outcome {
    println!(
        "{} criterion {id} ({title}): {detail} [{:.1}s]",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    Outcome { id, passed, detail }
}

fn fit(dim: usize, step: f64, paths: usize, seed: u64) -> ExponentFit {
    let cfg = WalkConfig::brownian(dim, step, 1000.0, paths, seed).unwrap();
    fit_tail_exponent(&survival_curve(&cfg).unwrap(), default_window(1000.0)).unwrap()
}

fn criterion1() -> Outcome {
    let t0 = Instant::now();
    let h = 1e-3;
    let cfg = WalkConfig::brownian(1, h, 1.0, 100_000, SEED)
        .unwrap()
        .with_start(vec![1.0])
        .unwrap();
    let c = survival_curve(&cfg).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for (i, &t) in c.times.iter().enumerate() {
        let exact = one_particle_survival(1.0, t);
        let allowance = one_particle_survival(1.0 + 0.5826 * h.sqrt(), t) - exact;
        let se = (exact * (1.0 - exact) / c.n_paths as f64).sqrt();
        let gap = (c.survival[i] - exact).abs();
        ok &= gap <= 4.0 * se + allowance;
        if se > 0.0 {
            worst = worst.max((gap - allowance) / se);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        1,
        "one-particle erf oracle",
        ok && secs < 60.0,
        format!(
            "{} grid points, worst excess {worst:.2} sigma, {secs:.1}s",
            c.times.len()
        ),
        t0,
    )
}

fn criterion2() -> (Outcome, [f64; 3]) {
    let t0 = Instant::now();
    let targets = [(1.0, 0.05), (2.0 / 3.0, 0.05), (0.4542, 0.06)];
    let mut p = [0.0; 3];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(target, tol)) in targets.iter().enumerate() {
        let f = fit(i + 1, 0.1, 300_000, SEED + i as u64);
        p[i] = f.p_hat;
        ok &= (f.p_hat - target).abs() <= tol;
        parts.push(format!("p{}={:.4}+-{:.4}", i + 1, f.p_hat, f.p_stderr));
    }
    (report(2, "known exponents", ok, parts.join(", "), t0), p)
}

fn criterion3() -> Outcome {
    let t0 = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    let cases = [
        ("U3", DomainSpec::OrthantComplement { dim: 3 }, 0.660, 0.03),
        ("hemisphere", DomainSpec::Hemisphere { dim: 3 }, 2.0, 0.02),
        (
            "lune",
            DomainSpec::Lune {
                dim: 3,
                beta: 1.5 * PI,
            },
            10.0 / 9.0,
            0.02 * 10.0 / 9.0,
        ),
    ];
    for (name, dom, target, tol) in cases {
        let start = Instant::now();
        let levels = solve_levels(&GridSpec::new(32, 64, dom).unwrap(), 4, 1e-8).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let e = richardson_extrapolate(&levels).unwrap();
        ok &= (e.value - target).abs() <= tol && secs < 120.0;
        parts.push(format!(
            "{name} {:.5} (q={:.2}, {secs:.1}s to 256x512)",
            e.value, e.order
        ));
    }
    report(3, "spectral certification", ok, parts.join(", "), t0)
}

fn criterion4() -> Outcome {
    let t0 = Instant::now();
    let streams = Substreams::new(SEED).fork("rayleigh");
    let mut ok = true;
    let (mut lo, mut up) = (
        (f64::INFINITY, f64::NEG_INFINITY),
        (f64::INFINITY, f64::NEG_INFINITY),
    );
    for d in 4..=30 {
        let b = eigenvalue_bounds(d, 200_000, &streams).unwrap();
        let lower = b.lower.unwrap();
        if d <= 12 {
            ok &= lower <= b.upper + 4.0 * b.upper_stderr;
        }
        let (lr, ur) = (b.lower_ratio.unwrap(), b.upper_ratio);
        ok &= lr.is_finite() && lr > 0.0 && ur.is_finite() && ur > 0.0;
        lo = (lo.0.min(lr), lo.1.max(lr));
        up = (up.0.min(ur), up.1.max(ur));
    }
    let f4 = fit(4, 1.0, 100_000, SEED + 4);
    let y4 = yamabe_lower_bound(4).unwrap();
    ok &= y4 <= f4.lambda_hat;
    report(
        4,
        "eigenvalue sandwich",
        ok,
        format!(
            "lower*2^d/d in [{:.4}, {:.4}], upper*2^d/d^3 in [{:.4}, {:.4}] over d=4..30; yamabe(4)={y4:.4} <= lambda_mc(4)={:.4}",
            lo.0, lo.1, up.0, up.1, f4.lambda_hat
        ),
        t0,
    )
}

fn criterion5() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for d in [4, 10, 20, 40, 100] {
        let l = yamabe_lower_bound(d).unwrap();
        let r = corollary_ratio(l, d).unwrap();
        if d >= 20 {
            ok &= (r - 1.0).abs() <= 1e-2;
        }
        parts.push(format!("d={d}: {r:.4}"));
    }
    let p20 = p_from_lambda(yamabe_lower_bound(20).unwrap(), 20).unwrap();
    parts.push(format!("p(20)={p20:.3e}"));
    report(5, "p d / lambda -> 1", ok, parts.join(", "), t0)
}

fn criterion6() -> Outcome {
    let t0 = Instant::now();
    let lemma = lemma1_report(25, 1.6).unwrap();
    let tail_max = lemma
        .rows
        .iter()
        .filter(|r| r.d >= 20)
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    let head_max = lemma
        .rows
        .iter()
        .filter(|r| r.d < 20)
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    let mut ok = lemma.max_ratio.is_finite() && tail_max <= 1.5 * head_max;

    let mut worst_dom = f64::NEG_INFINITY;
    for d in [3, 6, 10] {
        for k in [1, d / 2, d] {
            for a in [0.01, 0.05, 0.2] {
                let s = Substreams::new(SEED).fork(&format!("{k}-{d}-{a}"));
                let dom = if k == d {
                    DomainSpec::SigmaSlab { dim: d, a }
                } else {
                    DomainSpec::VSlab { dim: d, k, a }
                };
                let e = estimate_fraction(&dom, 200_000, &s).unwrap();
                let b = recursion_bound(k, d, a).unwrap().bound_fraction;
                let z = (e.fraction - b) / e.stderr.max(1e-300);
                worst_dom = worst_dom.max(z);
                ok &= e.fraction <= b + 4.0 * e.stderr;
            }
        }
    }

    let mut worst_orthant = 0.0f64;
    for d in 1..=12 {
        let s = Substreams::new(SEED).fork(&format!("sigma0-{d}"));
        let e = estimate_fraction(&DomainSpec::SigmaSlab { dim: d, a: 0.0 }, 400_000, &s).unwrap();
        let exact = 0.5f64.powi(d as i32);
        let z = (e.fraction - exact).abs() / e.stderr.max(1e-300);
        worst_orthant = worst_orthant.max(z);
        ok &= (e.fraction - exact).abs() <= 4.0 * e.stderr;
    }
    report(
        6,
        "volume recursion",
        ok,
        format!(
            "max bound*2^d over d<=25 = {:.4} (d>=20: {tail_max:.4}); MC - bound <= {worst_dom:.2} sigma; |MC - 2^-d| <= {worst_orthant:.2} sigma",
            lemma.max_ratio
        ),
        t0,
    )
}

fn criterion7(p: [f64; 3]) -> Outcome {
    let t0 = Instant::now();
    let n = 100_000;
    let sample = occupation_times(1, 1e-3, n, SEED).unwrap();
    let ks = ks_distance(&sample, arcsine_cdf);
    let mut ok = ks <= 0.01;
    let mut parts = vec![format!("d=1 KS {ks:.4}")];
    for d in [2usize, 3] {
        let mut s = occupation_times(d, 1e-3, 20_000, SEED + d as u64).unwrap();
        s.sort_by(f64::total_cmp);
        let ratios: Vec<f64> = (0..=8)
            .map(|i| {
                let t = 10f64.powf(-3.0 + 0.25 * i as f64);
                let cdf = s.partition_point(|&x| x <= t) as f64 / s.len() as f64;
                cdf / t.powf(p[d - 1] / 2.0)
            })
            .collect();
        let (min, max) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        ok &= min > 0.0 && max / min <= 10.0;
        parts.push(format!("d={d} ratio band [{min:.3}, {max:.3}]"));
    }
    report(7, "occupation time", ok, parts.join(", "), t0)
}

fn run_cli(args: &[&str]) -> i32 {
    orthant_lab_cli::run(std::iter::once("orthant-lab").chain(args.iter().copied()))
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".manifest.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion8() -> Outcome {
    let t0 = Instant::now();
    let commands: &[(&str, &[&str])] = &[
        (
            "simulate",
            &[
                "simulate", "--dim", "2", "--step", "0.5", "--tmax", "200", "--paths", "5000",
            ],
        ),
        (
            "render",
            &[
                "render", "--dim", "2", "--tmax", "30", "--count", "3", "--paths", "2000",
            ],
        ),
        (
            "volume",
            &[
                "volume",
                "--domain",
                "v-slab",
                "--dim",
                "6",
                "--k",
                "3",
                "--a",
                "0.05",
                "--samples",
                "100000",
            ],
        ),
        (
            "bounds",
            &["bounds", "--dims", "4..6", "--samples", "20000"],
        ),
        (
            "spectral",
            &[
                "spectral", "--domain", "lune", "--ntheta", "16", "--nphi", "32", "--levels", "3",
            ],
        ),
        (
            "report",
            &[
                "report",
                "--dims",
                "1..4",
                "--paths",
                "5000",
                "--rayleigh-samples",
                "20000",
                "--spectral-ntheta",
                "16",
                "--spectral-levels",
                "3",
            ],
        ),
        ("selfcheck", &["selfcheck"]),
    ];
    let root = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut bad = Vec::new();
    for (name, args) in commands {
        let dirs: Vec<_> = ["t1", "t2", "replay"]
            .iter()
            .map(|s| root.path().join(name).join(s))
            .collect();
        dirs.iter()
            .for_each(|d| std::fs::create_dir_all(d).unwrap());
        let out = |i: usize| dirs[i].join("out").to_string_lossy().into_owned();
        let mut codes = Vec::new();
        for (i, threads) in [(0, "1"), (1, "2")] {
            let mut a: Vec<&str> = args.to_vec();
            let o = out(i);
            a.extend(["--seed", "7", "--threads", threads, "--out", o.as_str()]);
            codes.push(run_cli(&a));
        }
        let m = manifest_path(&dirs[0].join("out"))
            .to_string_lossy()
            .into_owned();
        let o = out(2);
        codes.push(run_cli(&["replay", &m, "--out", &o, "--threads", "3"]));
        let same = outputs(&dirs[0]) == outputs(&dirs[1]) && outputs(&dirs[0]) == outputs(&dirs[2]);
        let passed = codes.iter().all(|&c| c == 0) && same && !outputs(&dirs[0]).is_empty();
        if !passed {
            bad.push(format!("{name} (exit codes {codes:?}, identical {same})"));
        }
        ok &= passed;
    }
    let detail = if bad.is_empty() {
        format!(
            "{} subcommands identical across 1, 2 threads and replay on 3",
            commands.len()
        )
    } else {
        format!("mismatch: {}", bad.join("; "))
    };
    report(8, "determinism", ok, detail, t0)
}

fn main() {
    println!("acceptance run, seed {SEED}");
    let mut outcomes = vec![criterion1()];
    let (c2, p) = criterion2();
    outcomes.push(c2);
    outcomes.push(criterion3());
    outcomes.push(criterion4());
    outcomes.push(criterion5());
    outcomes.push(criterion6());
    outcomes.push(criterion7(p));
    outcomes.push(criterion8());

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.passed).collect();
    let unexpected: Vec<&&Outcome> = failed
        .iter()
        .filter(|o| !KNOWN_UNATTAINABLE.contains(&o.id))
        .collect();
    println!(
        "{} of {} criteria pass; known unattainable: {:?}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        KNOWN_UNATTAINABLE
    );
    for o in &unexpected {
        println!("unexpected failure of criterion {}: {}", o.id, o.detail);
    }
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
