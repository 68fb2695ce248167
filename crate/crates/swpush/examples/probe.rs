//! Scratch experiment runner for tuning training defaults.

use std::time::Instant;
use swpush::bench::{evaluate, EvalOptions, Policy};
use swpush::env::{EpisodeConfig, PushEnv};
use swpush::geometry::ShapeName;
use swpush::mpc::MpcConfig;
use swpush::qlearn::{train, TrainConfig};

fn trailing_success(log: &[swpush::qlearn::EpisodeRecord], n: usize) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    let tail = &log[log.len().saturating_sub(n)..];
    tail.iter().filter(|r| r.success).count() as f64 / tail.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |i: usize, d: f64| args.get(i).and_then(|s| s.parse::<f64>().ok()).unwrap_or(d);
    let theta_max = get(1, 0.4);
    let episodes = get(2, 400.0) as usize;
    let upr = get(3, 8.0) as usize;
    let eps_end = get(4, 0.1);
    let sync = get(5, 200.0) as usize;
    let eps_decay = get(6, 150.0) as usize;
    let seed = get(7, 1.0) as u64;
    let shape: ShapeName = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(ShapeName::T);

    let cfg = EpisodeConfig {
        shape,
        init_theta_max: theta_max,
        angle_weight: 1.0,
        seed,
        ..EpisodeConfig::default()
    };
    let mpc = MpcConfig { q_weights: [100.0, 100.0, 100.0], ..MpcConfig::default() };
    println!(
        "shape={shape} theta_max={theta_max} episodes={episodes} upr={upr} eps_end={eps_end} sync={sync} eps_decay={eps_decay} seed={seed}"
    );

    let mut env = PushEnv::new(cfg, mpc);
    let tcfg = TrainConfig {
        episodes,
        seed,
        updates_per_round: upr,
        eps_end,
        target_sync_every: sync,
        eps_decay_episodes: eps_decay,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let out = train(&mut env, &tcfg).expect("training");
    let dt = t0.elapsed().as_secs_f64();
    for end in (50..=out.log.len()).step_by(50) {
        let window = &out.log[..end];
        println!(
            "ep {:>4}  trail50 {:.2}  mean_rounds {:.1}",
            end,
            trailing_success(window, 50),
            window[window.len().saturating_sub(50)..]
                .iter()
                .map(|r| r.rounds as f64)
                .sum::<f64>()
                / 50.0,
        );
    }
    println!("train {:.1}s  grad_steps {}", dt, out.gradient_steps);

    // Exploration-free evaluation of the trained net.
    let opts = EvalOptions { episodes: 40, base_seed: 9000, ..EvalOptions::default() };
    let (report, _) = evaluate(&Policy::Net(&out.net), &cfg, &mpc, &opts).unwrap();
    let agg = report.aggregates.unwrap();
    println!(
        "eval: success {:.2}  rounds {:.1}  angle_travel {:.3}",
        report.success_rate.unwrap(),
        agg.rounds.mean,
        agg.angle_trajectory_length.mean
    );
}
