//! Capacity-region membership and the min-norm drift at a state.

use mwlab::fluid::min_norm_drift;
use mwlab::scenario::three_queue_network;

fn main() -> mwlab::Result<()> {
    let net = three_queue_network();
    for lambda in [[0.5, 0.5, 0.25], [0.5, 0.5, 0.75], [0.5, 0.5, 1.0], [0.9, 0.9, 0.9]] {
        let v = net.capacity_membership(&lambda)?;
        println!("{lambda:?}: {:?} (margin {:.4})", v.classification, v.margin);
    }

    // At q = (1, 0, 0) only schedules serving queue 1 are Max-Weight.
    let q = [1.0, 0.0, 0.0];
    let d = min_norm_drift(&net, &[0.5, 0.5, 0.75], &q)?;
    println!("\ndrift at {q:?}: {:?}", d.drift);
    for (mu, w) in d.active_set.iter().zip(&d.weights) {
        println!("  {:?} weight {w:.4}", mu.rates());
    }
    println!("certified: {}", d.is_certified(1e-9));
    Ok(())
}
