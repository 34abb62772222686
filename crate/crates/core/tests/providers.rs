use imo_core::providers::{
    concatenate_displacements, model_displacement, thrust_from_displacement, window_from_ground_truth,
    DisplacementProvider, DisplacementQuery, OracleProvider, PositionSample,
};
use imo_core::sim::{simulate, SimConfig, TrackKind};
use imo_core::so3;
use nalgebra::Vector3;

/// Body-frame force beyond the commanded thrust, recovered from consecutive
/// ground-truth states, should be the simulator's drag.
#[test]
fn force_accounting_recovers_drag() {
    let mut cfg = SimConfig::new(TrackKind::default_lemniscate(), 20.0, 3);
    cfg.noise.gyro = 0.0;
    let ds = simulate(&cfg).unwrap();
    let dt = 1.0 / ds.imu_rate;
    let drag = Vector3::from(cfg.drag);
    let (mut err, mut mag) = (0.0, 0.0);
    for k in 0..ds.imu.len() {
        let (a, b) = (&ds.gt[k], &ds.gt[k + 1]);
        let rate = ds.imu[k].gyro - a.gyro_bias;
        // The displacement weights the attitude path towards its start: the
        // effective constant orientation sits a third of the way in.
        let r = a.attitude * so3::exp(&(rate * (dt / 3.0))).unwrap();
        let thrust = thrust_from_displacement(&(b.position - a.position), &a.velocity, &r, dt).unwrap();
        let force = thrust - Vector3::new(0.0, 0.0, ds.cmds[k].thrust);
        let mid = a.attitude * so3::exp(&(rate * (dt / 2.0))).unwrap();
        let expected = -(mid.inverse() * ((a.velocity + b.velocity) * 0.5)).component_mul(&drag);
        err += (force - expected).norm_squared();
        mag += expected.norm_squared();
    }
    let rel = (err / mag).sqrt();
    assert!(rel < 0.05, "relative RMS {rel}");
    assert!(mag.sqrt() > 1.0);
}

fn model_errors(track: TrackKind) -> Vec<(f64, f64)> {
    let ds = simulate(&SimConfig::new(track, 20.0, 4)).unwrap();
    (0..390)
        .map(|k| {
            let t_i = k as f64 * 0.05;
            let m = model_displacement(&window_from_ground_truth(&ds, t_i, 0.5).unwrap(), 0.0);
            let truth = ds.gt[5 * k + 50].position - ds.gt[5 * k].position;
            (ds.gt[5 * k + 25].velocity.norm(), (m.delta - truth).norm())
        })
        .collect()
}

#[test]
fn model_error_grows_with_speed_under_drag() {
    let mean = |v: &[(f64, f64)]| v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64;
    let hover = model_errors(TrackKind::Hover { position: Vector3::new(0.0, 0.0, 2.0) });
    let mut flight = model_errors(TrackKind::default_lemniscate());
    flight.sort_by(|a, b| a.0.total_cmp(&b.0));
    let third = flight.len() / 3;
    let (slow, fast) = (mean(&flight[..third]), mean(&flight[2 * third..]));
    assert!(mean(&hover) < 0.01 * slow, "hover {} vs slow {slow}", mean(&hover));
    assert!(fast > 1.1 * slow, "fast {fast} vs slow {slow}");
}

#[test]
fn concatenated_oracle_drifts_like_a_random_walk() {
    let sigma = 0.01;
    let ds = simulate(&SimConfig::ideal(TrackKind::default_lemniscate(), 60.0, 0)).unwrap();
    let end = ds.gt.len() - 1;
    let mut sq = 0.0;
    let seeds = 200;
    for seed in 0..seeds {
        let mut provider = OracleProvider::new(&ds.gt, sigma, seed);
        let ms: Vec<_> = (1..=120)
            .map(|k| {
                let t_j = k as f64 * 0.5;
                provider.displacement(&DisplacementQuery { t_i: t_j - 0.5, t_j, window: None }).unwrap()
            })
            .collect();
        let chain = concatenate_displacements(PositionSample { t: 0.0, position: ds.gt[0].position }, &ms, 20.0);
        assert_eq!(chain.len(), 1201);
        sq += (chain[1200].position - ds.gt[end].position).norm_squared();
    }
    // Per-axis RMS drift after n steps is σ·√n.
    let per_axis = (sq / (3.0 * seeds as f64)).sqrt();
    let expected = sigma * 120f64.sqrt();
    assert!((per_axis - expected).abs() < 0.1 * expected, "{per_axis} vs {expected}");
}
