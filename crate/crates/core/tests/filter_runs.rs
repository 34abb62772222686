use imo_core::eval::{ate_translation, AlignedPair, Pose};
use imo_core::filter::{
    run_filter, run_filter_observed, CovarianceHealth, FilterConfig, FilterEvent, FilterRun,
};
use imo_core::providers::{DeadReckoning, ModelProvider, OracleProvider};
use imo_core::sim::{simulate, Dataset, SimConfig, TrackKind};

fn ate(run: &FilterRun, ds: &Dataset) -> f64 {
    let est: Vec<Pose> = run
        .trajectory
        .iter()
        .map(|e| Pose { t: e.t, position: e.nav.position, attitude: e.nav.attitude })
        .collect();
    let gt: Vec<Pose> = ds
        .gt
        .iter()
        .map(|g| Pose { t: g.t, position: g.position, attitude: g.attitude })
        .collect();
    ate_translation(&AlignedPair::new(&est, &gt).unwrap()).unwrap()
}

#[test]
fn noiseless_dead_reckoning_follows_ground_truth() {
    let ds = simulate(&SimConfig::ideal(TrackKind::default_lemniscate(), 10.0, 1)).unwrap();
    let run = run_filter(&ds, &mut DeadReckoning, &FilterConfig::default()).unwrap();
    let worst = run
        .trajectory
        .iter()
        .zip(&ds.gt)
        .map(|(e, g)| (e.nav.position - g.position).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "worst position error {worst}");
    assert!(ate(&run, &ds) < 1e-2);
}

#[test]
fn oracle_updates_bound_the_drift() {
    let ds = simulate(&SimConfig::new(TrackKind::default_lemniscate(), 20.0, 11)).unwrap();
    let cfg = FilterConfig::default();
    let dr = ate(&run_filter(&ds, &mut DeadReckoning, &cfg).unwrap(), &ds);
    let oracle = run_filter(&ds, &mut OracleProvider::new(&ds.gt, 0.01, 11), &cfg).unwrap();
    assert!(ate(&oracle, &ds) < 0.1);
    assert!(dr > 10.0 * ate(&oracle, &ds), "dead reckoning {dr}");
    assert_eq!(oracle.stats.ticks, 400);
}

#[test]
fn covariance_stays_healthy() {
    let ds = simulate(&SimConfig::new(TrackKind::Racetrack, 10.0, 5)).unwrap();
    let mut checked = 0;
    let cfg = FilterConfig { gate: None, ..FilterConfig::default() };
    run_filter_observed(
        &ds,
        &mut ModelProvider::ground_truth(&ds, 0.5, 0.01),
        &cfg,
        |s, _| {
            assert!(CovarianceHealth::check(s.covariance(), 1e-10), "unhealthy P at t = {}", s.time);
            assert!(s.clones().len() <= 10);
            checked += 1;
        },
    )
    .unwrap();
    assert!(checked > 1000);
}

#[test]
fn updates_always_find_their_clone() {
    let ds = simulate(&SimConfig::new(TrackKind::default_lemniscate(), 5.0, 2)).unwrap();
    let mut last_times: Vec<f64> = Vec::new();
    run_filter_observed(
        &ds,
        &mut OracleProvider::new(&ds.gt, 0.01, 2),
        &FilterConfig::default(),
        |s, e| {
            let times: Vec<f64> = s.clones().iter().map(|c| c.t).collect();
            assert!(times.windows(2).all(|w| w[0] < w[1]));
            if let FilterEvent::Augmented = e {
                if last_times.len() == 10 {
                    assert_eq!(&times[..9], &last_times[1..]);
                }
            }
            last_times = times;
        },
    )
    .unwrap();
}
