use std::path::Path;

use hetsense::c64;
use hetsense::dmd::{self, RankPolicy, SnapshotPair};
use hetsense::field::{self, Workspace};
use hetsense::harness::forgetting::{errors, run_forgetting_comparison, Regime};
use hetsense::harness::ExperimentConfig;
use hetsense::io::{self, Checkpoint, SnapshotMatrix};
use hetsense::online::{self, AmplitudeAnchor};
use hetsense::placement;

fn noisy_lti(ws: &Workspace, steps: usize, seed: u64) -> hetsense::Mat<f64> {
    let eigs = [c64::new(-0.3, 2.0), c64::new(-0.3, -2.0), c64::new(-0.6, 0.0), c64::new(-1.0, 0.0)];
    let clean = field::gen_lti_field(ws, &eigs, seed, steps, 0.05).unwrap();
    field::inject_noise_series(&clean, 1e-4, seed).unwrap().to_matrix()
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let dir = tempfile_dir();
    let ws = Workspace::grid(3, 3).unwrap();
    let m = noisy_lti(&ws, 80, 4);
    let init = SnapshotPair::new(m.subcols(0, 20).to_owned(), m.subcols(1, 20).to_owned(), 0.05).unwrap();

    let mut lt = online::init_longterm_with(&init, 0.95, AmplitudeAnchor::Latest).unwrap();
    let mut gen = online::init_general_with(&init, RankPolicy::Fixed(4), 1, AmplitudeAnchor::Latest).unwrap();
    let mut lt_resumed = lt.clone();
    let mut gen_resumed = gen.clone();
    for (k, c) in (20..79).step_by(10).enumerate() {
        let w = 10.min(79 - c);
        let (x, y) = (m.subcols(c, w), m.subcols(c + 1, w));
        online::update_longterm(&mut lt, x, y).unwrap();
        online::update_general(&mut gen, x, y).unwrap();
        online::update_longterm(&mut lt_resumed, x, y).unwrap();
        online::update_general(&mut gen_resumed, x, y).unwrap();
        if k % 2 == 0 {
            // stop and resume through the container
            let p = dir.join(format!("lt{k}.hsmd"));
            io::save_checkpoint(&p, &Checkpoint::LongTerm(lt_resumed)).unwrap();
            lt_resumed = match io::load_checkpoint(&p).unwrap() {
                Checkpoint::LongTerm(st) => st,
                other => panic!("{}", other.kind()),
            };
            let p = dir.join(format!("gen{k}.hsmd"));
            io::save_checkpoint(&p, &Checkpoint::General(gen_resumed)).unwrap();
            gen_resumed = match io::load_checkpoint(&p).unwrap() {
                Checkpoint::General(st) => st,
                other => panic!("{}", other.kind()),
            };
        }
    }
    assert_eq!(lt.a_op(), lt_resumed.a_op());
    assert_eq!(lt.s_mat(), lt_resumed.s_mat());
    assert_eq!(lt.pairs_seen(), lt_resumed.pairs_seen());
    assert_eq!(gen.svd(), gen_resumed.svd());
    let (a, b) = (online::general_model(&gen).unwrap(), online::general_model(&gen_resumed).unwrap());
    assert_eq!(a.eigenvalues, b.eigenvalues);
    assert_eq!(a.anchor, b.anchor);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn series_file_to_placement() {
    let dir = tempfile_dir();
    let ws = Workspace::grid(6, 5).unwrap();
    let series = field::SnapshotSeries::from_matrix(noisy_lti(&ws, 60, 8).as_ref(), 0.05, 0.0).unwrap();
    for name in ["s.csv", "s.bin"] {
        let p = dir.join(name);
        io::save_snapshots(&p, &SnapshotMatrix::from_series(&series, Some(&ws))).unwrap();
        let back = io::load_snapshots(&p).unwrap();
        assert_eq!(back.to_series().unwrap(), series);
        let ws_back = back.workspace().unwrap().unwrap();
        let model = dmd::fit_dmd(&dmd::make_pair(&series).unwrap(), RankPolicy::Fixed(4)).unwrap();
        let pl = placement::optimal_placement(&model, &ws_back, 1.0, 3).unwrap();
        assert!(pl.is_disjoint());
        let out = dir.join(format!("{name}.placement.csv"));
        io::save_placement(&out, &pl, &ws_back).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 4);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn heavy_forgetting_costs_accuracy_on_stationary_stream() {
    let cfg = ExperimentConfig { seed: Some(21), trials: 4, gammas: vec![1.0, 0.1], ..ExperimentConfig::forgetting_preset() };
    let rows = run_forgetting_comparison(&cfg, &[Regime::Stationary]).unwrap();
    let one = errors(&rows, Regime::Stationary, Some(1.0));
    let heavy = errors(&rows, Regime::Stationary, Some(0.1));
    for (a, b) in one.iter().zip(&heavy) {
        assert!(b >= a, "gamma 0.1 error {b} below gamma 1 error {a}");
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let base = std::env::temp_dir().join(format!("hetsense-workflows-{}-{:?}", std::process::id(), std::thread::current().id()));
    std::fs::create_dir_all(&base).unwrap();
    assert!(Path::new(&base).is_dir());
    base
}
