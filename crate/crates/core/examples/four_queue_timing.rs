//! Jump timing matters: a jump of 2 at queue 1 at t = 5 pushes queue 4
//! off zero, while the single initial jump never touches it.

use mwlab::jf::{integrate_jf, JumpSchedule, RateProfile};
use mwlab::scenario::four_queue_timing;

fn main() -> mwlab::Result<()> {
    for second in [false, true] {
        let s = four_queue_timing(second);
        let profile = RateProfile::constant(s.lambda_star.clone(), 0.0)?;
        let traj = integrate_jf(&s.network, &profile, &JumpSchedule::new(s.jumps.clone())?, 10.0)?;
        println!("second jump: {second}");
        for b in &traj.breakpoints {
            println!("  t = {:<7.4} q = {:?}", b.t, b.state.iter().map(|x| (x * 1e6).round() / 1e6).collect::<Vec<_>>());
        }
        let peak = traj.breakpoints.iter().map(|b| b.state[3]).fold(0.0, f64::max);
        println!("  peak q₄ = {peak:.4}\n");
    }
    Ok(())
}
