//! Robust jumping-fluid search: which (γ, λ) pairs make queue 3 fragile.

use mwlab::jf::{check_rjf, SearchConfig};
use mwlab::scenario::three_queue_network;

const INF: f64 = f64::INFINITY;

fn main() -> mwlab::Result<()> {
    let net = three_queue_network();
    let cfg = SearchConfig::default();
    let table = [
        ("γ = 0.4, λ₃ = 0.25", [0.4, 0.4, INF], [0.5, 0.5, 0.25]),
        ("γ = 0.8, λ₃ = 0.25", [0.8, 0.8, INF], [0.5, 0.5, 0.25]),
        ("γ = 0.8, λ₃ = 0.75", [0.8, 0.8, INF], [0.5, 0.5, 0.75]),
        ("γ₃ = 1", [INF, INF, 1.0], [0.5, 0.5, 0.25]),
    ];
    for (label, gamma, lambda) in table {
        let t = std::time::Instant::now();
        let v = check_rjf(&net, &lambda, &gamma, 0.05, 2, &cfg)?;
        print!("{label:<20} {:?} in {:.2?}", v.status, t.elapsed());
        if let Some(w) = &v.witness {
            print!("  q₃(1) = {:.4}, jumps {:?}", w.value, w.n);
        }
        println!();
    }
    Ok(())
}
