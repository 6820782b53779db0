use sparsense::ensemble::{run_ensemble, summary_csv, trials_csv, SplitPlan, TrialJob};
use sparsense_core::bench::{run_pipeline, trial_seed, PipelineKind, PipelineSpec};
use sparsense_core::snapshots::{
    gen_synthetic, Generator, RankRandomParams, SnapshotMatrix, SplitSpec, SplitStrategy, TravelingWaveParams,
};

fn wave(rows: usize, cols: usize, snapshots: usize) -> SnapshotMatrix {
    gen_synthetic(
        &Generator::TravelingWave(TravelingWaveParams {
            rows,
            cols,
            snapshots,
            components: 3,
            amplitude: 1.0,
            waves: vec![],
            dt: 0.02,
            envelope: None,
        }),
        4,
    )
    .unwrap()
}

fn small_sdn(kind: PipelineKind, n: usize, seed: u64) -> PipelineSpec {
    let mut spec = PipelineSpec::new(kind, n, seed);
    spec.hidden = vec![8, 8];
    spec.train.learning_rate = 0.01;
    spec.train.max_epochs = 40;
    spec
}

const SPLIT: SplitPlan = SplitPlan {
    train_count: 40,
    strategy: SplitStrategy::Random,
};

#[test]
fn single_trial_has_zero_spread() {
    let data = wave(10, 12, 60);
    let jobs = vec![TrialJob { spec: small_sdn(PipelineKind::QSdn, 3, 1), trial: 0 }];
    let res = run_ensemble(&data, &jobs, SPLIT, 1, None).unwrap();
    let s = &res.summaries[0].summary;
    assert_eq!(s.count, 1);
    assert_eq!(s.mean, res.reports[0].relative_error);
    assert_eq!((s.std, s.std_err), (0.0, 0.0));
}

#[test]
fn identical_seeds_give_identical_errors() {
    let data = wave(10, 12, 60);
    let spec = small_sdn(PipelineKind::RSdn, 2, 77);
    let jobs: Vec<TrialJob> = (0..4).map(|t| TrialJob { spec: spec.clone(), trial: t }).collect();
    let res = run_ensemble(&data, &jobs, SPLIT, 2, None).unwrap();
    assert_eq!(res.summaries[0].summary.std, 0.0);
    let first = res.reports[0].relative_error;
    assert!(res.reports.iter().all(|r| r.relative_error.to_bits() == first.to_bits()));
}

#[test]
fn summary_mean_is_the_mean_of_the_reports() {
    let data = wave(8, 10, 50);
    let jobs: Vec<TrialJob> = (0..100)
        .map(|t| {
            let mut spec = small_sdn(PipelineKind::RSdn, 2, trial_seed(5, t));
            spec.train.max_epochs = 3;
            spec.hidden = vec![4];
            TrialJob { spec, trial: t }
        })
        .collect();
    let res = run_ensemble(&data, &jobs, SPLIT, 0, None).unwrap();
    assert_eq!(res.reports.len(), 100);
    // pairwise summation, a different order from the summary's
    let mut values: Vec<f64> = res.reports.iter().map(|r| r.relative_error).collect();
    while values.len() > 1 {
        values = values.chunks(2).map(|c| c.iter().sum()).collect();
    }
    let mean = values[0] / 100.0;
    assert!((res.summaries[0].summary.mean - mean).abs() <= 1e-12);
}

#[test]
fn reports_come_back_in_job_order_regardless_of_workers() {
    let data = wave(8, 10, 50);
    let mut jobs = Vec::new();
    for t in 0..3 {
        for kind in [PipelineKind::QPod, PipelineKind::RSdn] {
            for n in [1, 2] {
                let mut spec = small_sdn(kind, n, trial_seed(2, t));
                spec.train.max_epochs = 5;
                jobs.push(TrialJob { spec, trial: t });
            }
        }
    }
    let one = run_ensemble(&data, &jobs, SPLIT, 1, None).unwrap();
    let three = run_ensemble(&data, &jobs, SPLIT, 3, None).unwrap();
    let strip = |s: String| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(trials_csv(&one.reports)), strip(trials_csv(&three.reports)));
    assert_eq!(summary_csv(&one.summaries), summary_csv(&three.summaries));
    let keys: Vec<(PipelineKind, usize)> = one.summaries.iter().map(|r| (r.pipeline, r.n_sensors)).collect();
    assert_eq!(
        keys,
        vec![(PipelineKind::QPod, 1), (PipelineKind::QPod, 2), (PipelineKind::RSdn, 1), (PipelineKind::RSdn, 2)]
    );
}

#[test]
fn failed_trials_are_counted_not_averaged() {
    let data = gen_synthetic(
        &Generator::RankRRandom(RankRandomParams { m: 30, snapshots: 20, rank: 2, amplitude: 1.0 }),
        1,
    )
    .unwrap();
    let split = SplitPlan { train_count: 10, strategy: SplitStrategy::Random };
    let jobs = vec![
        TrialJob { spec: PipelineSpec::new(PipelineKind::QPod, 2, 1), trial: 0 },
        // a rank-12 basis cannot come from 10 training columns
        TrialJob { spec: PipelineSpec::new(PipelineKind::QPod, 12, 2), trial: 1 },
    ];
    let res = run_ensemble(&data, &jobs, split, 1, None).unwrap();
    assert_eq!(res.reports.len(), 1);
    assert_eq!(res.failures.len(), 1);
    assert_eq!(res.failures[0].n_sensors, 12);
    assert_eq!(res.summaries[1].summary.count, 0);
    assert_eq!(res.summaries[1].summary.failures, 1);
}

#[test]
fn q_sdn_learns_a_traveling_wave_from_three_sensors() {
    let data = wave(38, 48, 251);
    let (train, test) = data
        .split(&SplitSpec { train_count: 200, seed: 3, strategy: SplitStrategy::Random })
        .unwrap();
    let mut spec = PipelineSpec::new(PipelineKind::QSdn, 3, 12);
    spec.train.learning_rate = 0.01;
    spec.train.max_epochs = 1000;
    spec.train.patience = 20;
    let out = run_pipeline(&spec, &train, &test).unwrap();
    assert_eq!(out.per_sample_errors.len(), 51);
    assert!(out.relative_error < 0.05, "RE {}", out.relative_error);
}
