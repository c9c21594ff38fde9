//! From an RJF violation to stochastic instability.
//!
//! The case-3 witness (two jumps into the heavy queues) becomes an arrival
//! plan. The forced run replaces each jump by its bulk and checks the
//! tracking bound; the concatenation grows episodes geometrically.

use mwlab::arrivals::{concatenate_episodes, PilotConfig};
use mwlab::jf::{check_rjf, SearchConfig};
use mwlab::scenario::three_queue;
use mwlab::stability::{forced_jump_run, run_witness, WitnessConfig};

fn main() -> mwlab::Result<()> {
    let s = three_queue(3)?;
    let v = check_rjf(&s.network, &s.lambda_star, &s.gamma, s.epsilon, s.queue, &SearchConfig::default())?;
    let w = v.witness.expect("case 3 violates RJF");
    println!("witness: q₃(1) = {:.4}, n = {:?}", w.value, w.n);

    let run = forced_jump_run(&s.network, &w, 10_000, 0.02, 1000)?;
    println!("forced run T = 10⁴: Q₃ = {:.1}, target {:.1}, {:?}", run.q_m, run.target, run.verdict);

    let conc = concatenate_episodes(&s.network, &w, 100, 6, &PilotConfig::default())?;
    println!("episode boundaries {:?}", conc.boundaries);
    let report = run_witness(&s.network, &conc.plan, &WitnessConfig::default())?;
    for (i, e) in report.episodes.iter().enumerate() {
        println!("  episode {i}: length {:>6} P(Q₃ ≥ threshold) ≈ {:.3}", e.length, e.exceedance);
    }
    Ok(())
}
