//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Criteria run one
//! after another (their runtime limits are part of the check). Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --test acceptance -- 1 5`.

use std::time::{Duration, Instant};

use faer::Mat;
use hetsense::c64;
use hetsense::coverage::{self, DensityMap, LloydOptions, RobotConfiguration};
use hetsense::dmd::{self, DmdModel, RankPolicy, SnapshotPair};
use hetsense::field::{self, Workspace};
use hetsense::harness::bench::{find, run_timing_benchmark, PAPER_ENVS};
use hetsense::harness::forgetting::{errors, run_forgetting_comparison, Regime};
use hetsense::harness::metrics::{strip_timing, write_metrics_csv};
use hetsense::harness::scenario::final_third_mean;
use hetsense::harness::trials::run_eigenvalue_trials;
use hetsense::harness::{run_scenario, ExperimentConfig, Generator, Method, MvOnlyPlacement};
use hetsense::linalg;
use hetsense::online;
use hetsense::placement;
use hetsense::recon::{self, ObservationSet};
use hetsense::rng::{self, Purpose};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const EXACT_TOL: f64 = 1e-8;
const EQUIV_TOL: f64 = 1e-8;

/// Half-width of the band around Re(ω) = -1. Batch calibration (seed 7, all three
/// noise levels) put the medians within 0.044 of -1; the band is three times that,
/// rounded up.
const EIG_BAND: f64 = 0.15;

/// Ratio `exp((ld_greedy - ld_opt) / r)`. Calibration on 800 separate instances (seed 60)
/// bottomed out at 0.390, always for one radius-1 disk, where the norm-sum pivot and
/// the log-det disagree most; the floor sits just below that.
const PLACEMENT_RATIO_FLOOR: f64 = 0.35;

const LLOYD_TOL: f64 = 1e-6;
const MIN_WINS: usize = 8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn randn(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_splits(total: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 {
        let w = rng.random_range(1..=left.min(7));
        out.push(w);
        left -= w;
    }
    out
}

fn criterion_1() -> Outcome {
    let cases: [(usize, usize, &[c64]); 4] = [
        (20, 20, &[c64::new(-0.1, 2.0), c64::new(-0.1, -2.0), c64::new(-0.3, 5.0), c64::new(-0.3, -5.0), c64::new(-0.5, 0.0), c64::new(0.05, 0.0)]),
        (10, 10, &[c64::new(-0.2, 1.0), c64::new(-0.2, -1.0), c64::new(-1.0, 0.0), c64::new(-0.05, 3.0), c64::new(-0.05, -3.0)]),
        (7, 5, &[c64::new(-0.4, 0.0), c64::new(-0.8, 0.0), c64::new(-1.2, 0.0), c64::new(0.0, 0.0)]),
        (16, 25, &[c64::new(0.0, 1.5), c64::new(0.0, -1.5)]),
    ];
    let mut worst_eig = 0.0f64;
    let mut worst_rec = 0.0f64;
    let mut ranks_ok = true;
    for (i, (w, h, eigs)) in cases.iter().enumerate() {
        let ws = Workspace::grid(*w, *h).unwrap();
        let s = field::gen_lti_field(&ws, eigs, 100 + i as u64, 60, 0.1).unwrap();
        let m = dmd::fit_dmd(&dmd::make_pair(&s).unwrap(), RankPolicy::default()).unwrap();
        ranks_ok &= m.rank() == eigs.len();
        let omegas = dmd::continuous_eigenvalues(&m).unwrap();
        for e in eigs.iter() {
            let d = omegas.iter().map(|o| (o - e).norm()).fold(f64::INFINITY, f64::min);
            worst_eig = worst_eig.max(d);
        }
        for k in 0..s.len() {
            let truth = s.get(k).unwrap();
            let rec = dmd::reconstruct(&m, k);
            let err = rec.values.iter().zip(&truth.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst_rec = worst_rec.max(err / truth.norm());
        }
    }
    outcome(
        ranks_ok && worst_eig <= EXACT_TOL && worst_rec <= EXACT_TOL,
        format!("max eigenvalue error {worst_eig:.2e}, max relative reconstruction error {worst_rec:.2e}, ranks ok: {ranks_ok}"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let mut r = rng::stream(2, case, Purpose::Misc);
        let n = r.random_range(1..=20);
        let t0 = n + r.random_range(0..5);
        let more = r.random_range(1..40);
        let x = randn(n, t0 + more, &mut r);
        let y = randn(n, t0 + more, &mut r);
        let init = SnapshotPair::new(x.subcols(0, t0).to_owned(), y.subcols(0, t0).to_owned(), 1.0).unwrap();
        let mut st = online::init_longterm(&init, 1.0).unwrap();
        let mut c = t0;
        for w in random_splits(more, &mut r) {
            online::update_longterm(&mut st, x.subcols(c, w), y.subcols(c, w)).unwrap();
            c += w;
        }
        let oracle = online::batch_operator(x.as_ref(), y.as_ref()).unwrap();
        worst = worst.max(linalg::relative_frobenius(st.a_op(), oracle.as_ref()));
    }
    outcome(worst <= EQUIV_TOL, format!("50 streams, max relative Frobenius difference {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut worst_sigma = 0.0f64;
    let mut worst_angle = 0.0f64;
    let mut worst_orth = 0.0f64;
    for case in 0..50u64 {
        let mut r = rng::stream(3, case, Purpose::Misc);
        let n = r.random_range(4..=40);
        let t0 = r.random_range(1..6);
        let more = r.random_range(1..30);
        let total = t0 + more;
        // half the sequences are exactly low-rank
        let x = if case % 2 == 0 {
            randn(n, total, &mut r)
        } else {
            let k = r.random_range(1..=n.min(6));
            randn(n, k, &mut r) * randn(k, total, &mut r)
        };
        let init = SnapshotPair::new(x.subcols(0, t0).to_owned(), x.subcols(0, t0).to_owned(), 1.0).unwrap();
        let mut st = online::init_general(&init, RankPolicy::default()).unwrap();
        let mut c = t0;
        for w in random_splits(more, &mut r) {
            online::update_general(&mut st, x.subcols(c, w), x.subcols(c, w)).unwrap();
            c += w;
            worst_orth = worst_orth.max(linalg::orthonormality_error(st.svd().u.as_ref()));
            worst_orth = worst_orth.max(linalg::orthonormality_error(st.svd().w.as_ref()));
        }
        let direct = dmd::truncated_svd(x.as_ref(), RankPolicy::default()).unwrap();
        if direct.rank() != st.rank() {
            return outcome(false, format!("case {case}: rank {} vs direct {}", st.rank(), direct.rank()));
        }
        for (a, b) in st.svd().sigma.iter().zip(&direct.sigma) {
            worst_sigma = worst_sigma.max((a - b).abs() / direct.sigma[0]);
        }
        let sines = linalg::principal_angle_sines(direct.u.as_ref(), st.svd().u.as_ref()).unwrap();
        worst_angle = worst_angle.max(sines.iter().copied().fold(0.0, f64::max));
    }
    outcome(
        worst_sigma <= EQUIV_TOL && worst_angle <= EQUIV_TOL && worst_orth <= EQUIV_TOL,
        format!("50 sequences, sigma {worst_sigma:.2e}, principal-angle sine {worst_angle:.2e}, orthonormality {worst_orth:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let cfg = ExperimentConfig { seed: Some(1), ..ExperimentConfig::eigtrials_preset() };
    let rep = run_eigenvalue_trials(&cfg, &Method::ALL).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for method in Method::ALL {
        let mut prev_iqr = f64::NEG_INFINITY;
        for &v in &cfg.variances {
            let s = rep.summary(method, v).unwrap();
            let in_band = (s.median_re + 1.0).abs() <= EIG_BAND;
            let grows = s.iqr_re() > prev_iqr;
            pass &= in_band && grows;
            prev_iqr = s.iqr_re();
            parts.push(format!("{}@{v}: median {:.4} iqr {:.4}", method.name(), s.median_re, s.iqr_re()));
        }
    }
    outcome(pass, format!("band ±{EIG_BAND}; {}", parts.join("; ")))
}

fn random_modes(n: usize, r: usize, rng: &mut impl Rng) -> DmdModel {
    let modes = Mat::from_fn(n, r, |_, _| c64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    DmdModel {
        modes,
        eigenvalues: vec![c64::new(1.0, 0.0); r],
        amplitudes: vec![c64::new(1.0, 0.0); r],
        svd: None,
        dt: 1.0,
        anchor: 0,
        span_residual: None,
    }
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut monotone = true;
    let mut checked = 0;
    for case in 0..200u64 {
        let mut r = rng::stream(5, case, Purpose::Misc);
        let n = r.random_range(6..=60);
        // real modes keep Re(Φ a) in the span for real amplitudes
        let rank = r.random_range(1..=6.min(n - 1));
        let modes = Mat::from_fn(n, rank, |_, _| c64::new(StandardNormal.sample(&mut r), 0.0));
        let m = DmdModel { modes, ..random_modes(n, rank, &mut r) };
        let a: Vec<c64> = (0..rank).map(|_| c64::new(StandardNormal.sample(&mut r), 0.0)).collect();
        let truth = recon::combine_modes(m.modes.as_ref(), &a);
        let size = r.random_range(rank..n);
        let mut picked = sample(&mut r, n, size).into_vec();
        let obs = ObservationSet::from_unsorted(picked.clone(), n).unwrap();
        let x_l: Vec<f64> = obs.indices().iter().map(|&i| truth[i]).collect();
        let before = recon::placement_objective(&m, &obs);
        if before.is_finite() {
            checked += 1;
            let rec = recon::reconstruct_full(&m, &obs, &x_l).unwrap();
            let err = rec.values.iter().zip(&truth).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let scale = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(err / scale);
        }
        let extra = (0..n).find(|i| !obs.contains(*i)).unwrap();
        picked.push(extra);
        let after = recon::placement_objective(&m, &ObservationSet::from_unsorted(picked, n).unwrap());
        monotone &= after >= before - 1e-10 * before.abs().max(1.0);
    }
    outcome(
        worst <= EXACT_TOL && monotone && checked >= 190,
        format!("{checked} full-rank cases, max relative error {worst:.2e}, log-det monotone: {monotone}"),
    )
}

fn criterion_6() -> Outcome {
    let mut disjoint = true;
    let mut bounded = true;
    let mut alg1 = true;
    let mut min_ratio = f64::INFINITY;
    let mut instances = 0;
    for side in [6usize, 8] {
        let ws = Workspace::grid(side, side).unwrap();
        for inst in 0..30u64 {
            let mut r = rng::stream(6, (side as u64) << 8 | inst, Purpose::Misc);
            let rank = r.random_range(1..=4);
            let m = random_modes(ws.len(), rank, &mut r);
            let compressed = placement::compressed_gram(&m);
            for radius in [0.0, 1.0] {
                for count in [1usize, 2] {
                    instances += 1;
                    let g = placement::optimal_placement(&m, &ws, radius, count).unwrap();
                    disjoint &= g.is_disjoint();
                    if radius == 0.0 {
                        let points = placement::pivoted_qr_points(placement::gram(&m).as_ref(), count).unwrap();
                        alg1 &= g.centers() == points;
                        alg1 &= placement::block_pivoted_qr(compressed.as_ref(), &ws, 0.0, count).unwrap().centers() == points;
                    }
                    let ld_g = recon::placement_objective(&m, &g.observations(ws.len()).unwrap());
                    let (_, ld_opt) = placement::brute_force_placement(&m, &ws, radius, count).unwrap();
                    if ld_opt.is_finite() {
                        bounded &= ld_g <= ld_opt + 1e-9 * ld_opt.abs().max(1.0);
                        let ratio = if ld_g.is_finite() { ((ld_g - ld_opt) / rank as f64).exp() } else { 0.0 };
                        min_ratio = min_ratio.min(ratio);
                    } else {
                        bounded &= !ld_g.is_finite();
                    }
                }
            }
        }
    }
    outcome(
        disjoint && bounded && alg1 && min_ratio >= PLACEMENT_RATIO_FLOOR,
        format!(
            "{instances} runs; disjoint {disjoint}, greedy <= optimum {bounded}, point case = pivoted QR {alg1}, min ratio {min_ratio:.3} (floor {PLACEMENT_RATIO_FLOOR})"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut monotone = true;
    for case in 0..100u64 {
        let mut r = rng::stream(7, case, Purpose::Misc);
        let ws = Workspace::grid(r.random_range(2..16), r.random_range(1..16)).unwrap();
        let weights: Vec<f64> = (0..ws.len()).map(|_| r.random::<f64>().powi(2) + 1e-3).collect();
        let density = DensityMap::new(weights).unwrap();
        let robots = RobotConfiguration::random(r.random_range(1..6), &ws, &mut r).unwrap();
        let res = coverage::lloyd(&ws, &robots, &density, LloydOptions::default()).unwrap();
        monotone &= res.costs.windows(2).all(|c| c[1] <= c[0] * (1.0 + 1e-12) + 1e-12);
    }
    let ws = Workspace::grid(10, 1).unwrap();
    let start = RobotConfiguration::new(vec![(0.0, 0.0), (1.0, 0.0)], &ws).unwrap();
    let res = coverage::lloyd(&ws, &start, &DensityMap::uniform(10), LloydOptions { max_iters: 200, tol: 1e-9 }).unwrap();
    let mut xs: Vec<f64> = res.config.positions().iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    let converged = (xs[0] - 2.0).abs() <= LLOYD_TOL && (xs[1] - 7.0).abs() <= LLOYD_TOL;
    outcome(monotone && converged, format!("100 cases non-increasing: {monotone}; 1x10 centroids {xs:?}"))
}

fn criterion_8() -> Outcome {
    let cfg = ExperimentConfig { seed: Some(8), ..ExperimentConfig::bench_preset() };
    let rows = run_timing_benchmark(&PAPER_ENVS, &cfg).unwrap();
    let big = &PAPER_ENVS[2];
    let long = &PAPER_ENVS[3];
    let get = |env, m| find(&rows, env, m).unwrap();
    let (b, g, l) = (get(big, Method::Batch), get(big, Method::General), get(big, Method::Longterm));
    let a = g.seconds_with_eig < b.seconds_with_eig && l.seconds_with_eig < b.seconds_with_eig;
    let bb = g.seconds_with_eig < l.seconds_with_eig;
    let (g2, l2) = (get(long, Method::General), get(long, Method::Longterm));
    let c = l2.seconds_no_eig < g2.seconds_no_eig;
    outcome(
        a && bb && c,
        format!(
            "(a) {a}: batch {:.3}s general {:.3}s long-term {:.3}s with eig on {}; (b) {bb}; (c) {c}: long-term {:.3}s vs general {:.3}s without eig on {}",
            b.seconds_with_eig,
            g.seconds_with_eig,
            l.seconds_with_eig,
            big.label(),
            l2.seconds_no_eig,
            g2.seconds_no_eig,
            long.label()
        ),
    )
}

fn criterion_9() -> Outcome {
    let cfg = ExperimentConfig { seed: Some(9), trials: 10, gammas: vec![1.0, 0.9], ..ExperimentConfig::forgetting_preset() };
    let rows = run_forgetting_comparison(&cfg, &[Regime::Switched]).unwrap();
    let one = errors(&rows, Regime::Switched, Some(1.0));
    let forget = errors(&rows, Regime::Switched, Some(0.9));
    let wins = one.iter().zip(&forget).filter(|(a, b)| b <= a).count();
    outcome(wins >= MIN_WINS, format!("gamma 0.9 at least as accurate in {wins}/10 trials"))
}

fn criterion_10() -> Outcome {
    let mut het_wins = 0;
    let mut worst_count = 0;
    let (mut het_sum, mut av_sum, mut mv_sum) = (0.0, 0.0, 0.0);
    for seed in 0..10u64 {
        let cfg = ExperimentConfig { seed: Some(seed), generator: Generator::DampedOscillation, ..ExperimentConfig::default() };
        let records = run_scenario(&cfg).unwrap().records;
        let het = final_third_mean(&records, |r| r.mse_heterogeneous);
        let av = final_third_mean(&records, |r| r.mse_av_only);
        let random = ExperimentConfig { mv_only_placement: MvOnlyPlacement::Random, ..cfg };
        let mv = final_third_mean(&run_scenario(&random).unwrap().records, |r| r.mse_mv_only);
        het_wins += usize::from(het <= av);
        worst_count += usize::from(mv > het && mv > av);
        het_sum += het;
        av_sum += av;
        mv_sum += mv;
    }
    let (het, av, mv) = (het_sum / 10.0, av_sum / 10.0, mv_sum / 10.0);
    // The worst-of-three claim is judged on the seed-averaged errors.
    let worst = mv > het && mv > av;
    outcome(
        het_wins >= MIN_WINS && worst,
        format!(
            "het <= av-only in {het_wins}/10 seeds; mean MSE het {het:.3e}, av-only {av:.3e}, mv-only random {mv:.3e} (worst in {worst_count}/10 seeds)"
        ),
    )
}

fn criterion_11() -> Outcome {
    let cfg = ExperimentConfig { seed: Some(11), ..ExperimentConfig::default() };
    let csv = |c: &ExperimentConfig| {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &run_scenario(c).unwrap().records).unwrap();
        strip_timing(&String::from_utf8(buf).unwrap())
    };
    let first = csv(&cfg);
    let same = first == csv(&cfg);
    let random = ExperimentConfig { mv_only_placement: MvOnlyPlacement::Random, ..cfg.clone() };
    let same_random = csv(&random) == csv(&random);
    let other = first != csv(&ExperimentConfig { seed: Some(12), ..cfg });
    outcome(same && same_random && other, format!("identical reruns {same}/{same_random}, other seed differs {other}"))
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "exact recovery", Duration::from_secs(10), criterion_1),
        (2, "long-term vs batch operator", Duration::from_secs(30), criterion_2),
        (3, "incremental SVD", Duration::from_secs(30), criterion_3),
        (4, "eigenvalue trials", Duration::from_secs(600), criterion_4),
        (5, "gappy reconstruction", Duration::from_secs(10), criterion_5),
        (6, "placement oracle", Duration::from_secs(120), criterion_6),
        (7, "Lloyd coverage", Duration::from_secs(10), criterion_7),
        (8, "timing", Duration::from_secs(900), criterion_8),
        (9, "forgetting factor", Duration::from_secs(120), criterion_9),
        (10, "heterogeneity ablation", Duration::from_secs(300), criterion_10),
        (11, "determinism", Duration::from_secs(120), criterion_11),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let clock = Instant::now();
        let out = run();
        let elapsed = clock.elapsed();
        let pass = out.pass && elapsed < limit;
        if !pass {
            failed.push(id);
        }
        println!(
            "criterion {id:>2} {}: {name} — {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
