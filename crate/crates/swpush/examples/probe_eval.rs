//! Scratch: greedy-policy evaluation across orientation ranges.

use swpush::bench::{evaluate, EvalOptions, Policy};
use swpush::env::EpisodeConfig;
use swpush::geometry::ShapeName;
use swpush::mpc::MpcConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let angle_weight: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let q_omega: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let episodes: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40);
    let shape: ShapeName = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(ShapeName::T);

    println!("greedy eval: shape={shape} angle_weight={angle_weight} q_omega={q_omega} n={episodes}");
    for theta_max in [0.01, 0.2, 0.4, 0.6, 1.0, 3.2] {
        let cfg = EpisodeConfig {
            shape,
            init_theta_max: theta_max,
            angle_weight,
            ..EpisodeConfig::default()
        };
        let mpc = MpcConfig { q_weights: [100.0, 100.0, q_omega], ..MpcConfig::default() };
        let opts = EvalOptions { episodes, base_seed: 1000, ..EvalOptions::default() };
        let t0 = std::time::Instant::now();
        let (report, _) = evaluate(&Policy::Greedy, &cfg, &mpc, &opts).unwrap();
        let agg = report.aggregates.unwrap();
        println!(
            "theta_max {:>4.2}: success {:.2}  rounds {:>5.1}  steps {:>6.0}  traj {:.3}  angle {:.3}  ({:.1}s)",
            theta_max,
            report.success_rate.unwrap(),
            agg.rounds.mean,
            agg.plant_steps.mean,
            agg.trajectory_length.mean,
            agg.angle_trajectory_length.mean,
            t0.elapsed().as_secs_f64(),
        );
    }
}
