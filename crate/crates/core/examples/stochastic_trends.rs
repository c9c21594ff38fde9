//! Monte Carlo growth trends under Pareto-mixture arrivals.
//!
//! Queue 3 grows in case 1 (λ₃ = 0.75, outside what the heavy queues leave
//! over) and stays bounded in case 2. Smaller than the acceptance run.

use mwlab::arrivals::StationaryPlan;
use mwlab::scenario::three_queue;
use mwlab::stability::{geometric_horizons, monte_carlo, MonteCarloConfig};

fn main() -> mwlab::Result<()> {
    for case in [1, 2] {
        let s = three_queue(case)?;
        let plan = StationaryPlan::new(s.arrival_specs())?;
        let cfg = MonteCarloConfig { horizons: geometric_horizons(16, 1 << 15), replications: 32, ..Default::default() };
        let report = monte_carlo(&s.network, &plan, &cfg)?;
        let q3 = &report.queues[2];
        println!(
            "case {case}: {:?}  growth exponent {:.3} in ({:.3}, {:.3})",
            q3.verdict, q3.growth_exponent, q3.growth_exponent_band.0, q3.growth_exponent_band.1
        );
        println!("  trimmed means {:?}", q3.trimmed_mean.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
    Ok(())
}
