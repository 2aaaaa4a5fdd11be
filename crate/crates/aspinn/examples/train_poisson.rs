//! Minimal library-level training run: solve the Poisson benchmark with
//! 4x2 nodes and print the loss trajectory and final error.
//!
//!     cargo run --release --example train_poisson

use aspinn::{train, BatchSize, TrainConfig};

fn main() {
    let mut config = TrainConfig::defaults("poisson2d");
    config.batch = BatchSize::Count(8);
    config.seed = 0;

    let report = train(&config).expect("training failed to start");
    assert!(!report.failed, "training diverged");

    for m in report.metrics.iter().step_by(20) {
        println!(
            "iter {:>6}  test loss {:.4e}  relative L2 {:.4}",
            m.iteration,
            m.test_loss,
            m.l2.unwrap()
        );
    }
    let last = report.metrics.last().unwrap();
    println!(
        "finished in {:.1}s: relative L2 {:.4}",
        report.wall_time_secs,
        last.l2.unwrap()
    );
    for (i, node) in report.final_params.nodes.iter().enumerate() {
        let zone = aspinn::zone_of_influence(node, report.final_params.scale);
        println!(
            "node {i}: center ({:+.3}, {:+.3})  weight {:+.3}  semi-axes ({:.3}, {:.3})",
            node.center[0], node.center[1], node.weight, zone.semi_axes[0], zone.semi_axes[1]
        );
    }
}
