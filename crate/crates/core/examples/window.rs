//! How the contraction window reacts to the choice of `R`, with `kappa` and
//! `mu` resampled on the enlarged ball each time.
//!
//! cargo run --release --example window

use std::path::Path;

use combsim::scenario::Scenario;
use combsim::solver::WindowChoices;

fn main() -> combsim::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/constant_2layer.toml");
    let mut s = Scenario::load(&path)?;
    let report = s.validate();
    let beta_tilde = s.beta_tilde(&s.problem(&report)?)?;
    let rho = s.rho();
    println!("rho={rho:.4} beta={:.4} beta~={beta_tilde:.4}", report.beta_max());
    println!("{:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7}", "R/rho", "T", "M", "kappa", "mu", "T'", "binds");
    for ratio in [1.05, 1.1, 1.5, 2.0, 4.0] {
        s.window.choices = WindowChoices { r: Some(ratio * rho), ..WindowChoices::default() };
        let (w, _) = s.window_params(&report, beta_tilde)?;
        let binds = (0..4).min_by(|&a, &b| w.bound_terms[a].total_cmp(&w.bound_terms[b])).unwrap();
        println!(
            "{ratio:>6.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>7}",
            w.t, w.m, w.kappa, w.mu, w.t_prime, binds
        );
    }
    Ok(())
}
