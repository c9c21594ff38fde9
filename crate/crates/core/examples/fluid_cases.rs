//! Fluid trajectories of the three-queue pair network.
//!
//! With a little backlog at queue 1, queue 3 builds up at rate
//! (λ₃ - 0.5)/2 when λ₃ = 0.75 and stays empty when λ₃ = 0.25.
//!
//! ```bash
//! cargo run --example fluid_cases
//! ```

use mwlab::integrate_fluid;
use mwlab::scenario::three_queue_network;

fn main() -> mwlab::Result<()> {
    let net = three_queue_network();
    for l3 in [0.75, 0.25] {
        let traj = integrate_fluid(&net, &[0.5, 0.5, l3], &[1.0, 0.0, 0.0], 10.0)?;
        println!("λ = (0.5, 0.5, {l3}), q(0) = (1, 0, 0)");
        for b in &traj.breakpoints {
            println!("  t = {:<6.3} q = {:?} drift = {:?}", b.t, b.state, b.drift);
        }
        println!("  max q₃ on [0,10]: {:.4}\n", traj.breakpoints.iter().map(|b| b.state[2]).fold(0.0, f64::max));
    }
    Ok(())
}
