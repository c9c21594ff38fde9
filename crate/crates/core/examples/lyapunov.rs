//! Distance-to-reachable-set Lyapunov candidates.
//!
//! One heavy queue: the candidate passes all four properties. Two heavy
//! queues with γ = 0.8: the lattice includes two simultaneous jumps, which
//! lift queue 3, so the candidate's zero set and drift checks fail.

use mwlab::lyapunov::{build_distance_lyapunov, heavy_lattice, sample_clouds, verify_special, LyapunovCandidate};
use mwlab::scenario::three_queue;

fn main() -> mwlab::Result<()> {
    let s = three_queue(2)?;
    for (heavy, max_jumps) in [(vec![0], 3), (vec![0, 1], 2)] {
        let lattice = heavy_lattice(3, &heavy, max_jumps);
        let clouds = sample_clouds(&s.network, &s.lambda_star, s.epsilon, &lattice, 300, 0)?;
        let v = build_distance_lyapunov(&clouds, heavy.clone(), s.epsilon, true)?;
        let r = verify_special(&v, &s.network, &s.lambda_star, s.epsilon, s.queue, 10_000, 0)?;
        println!("heavy {heavy:?}: overall {}", if r.overall { "PASS" } else { "FAIL" });
        for p in &r.properties {
            println!("  {:<48} {} violations {}", p.name, if p.passed { "pass" } else { "fail" }, p.violations);
        }
    }

    let bad = LyapunovCandidate::user(3, "x_1", vec![0], s.epsilon, |x| x[0])?;
    let r = verify_special(&bad, &s.network, &s.lambda_star, s.epsilon, s.queue, 1000, 0)?;
    println!("V = x₁ with queue 1 heavy: property 4 passed = {}", r.property(4).passed);
    Ok(())
}
