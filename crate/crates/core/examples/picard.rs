//! One Picard window: derive the contraction window, iterate the mild-solution
//! map to tolerance and show the contraction ratios against their bound.
//!
//! cargo run --release --example picard

use std::path::Path;

use combsim::scenario::{Method, Scenario};

fn main() -> combsim::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/arrhenius_2layer.toml");
    let s = Scenario::load(&path)?;
    let run = s.run(Method::Picard)?;
    let w = run.window.expect("picard always derives a window");
    let out = run.picard.expect("picard outcome");

    println!("rho={:.4} M={:.4} R={:.4} T={:.4}", w.rho, w.m, w.r, w.t);
    println!("kappa={:.4} mu={:.4} beta={:.4} beta~={:.4}", w.kappa, w.mu, w.beta, w.beta_tilde);
    println!("T'={:.5} ({} steps), contraction bound {:.4}", w.t_prime, out.steps, w.contraction_bound);
    for (k, (d, q)) in out.defects.iter().zip(out.ratios.iter().chain(std::iter::repeat(&f64::NAN))).enumerate() {
        println!("  iter {:>2}  defect {:.3e}  ratio {:.4}", k + 1, d, q);
    }
    let inside = out.membership.iter().all(|m| m.inside);
    println!("iterates stayed in the contraction set: {inside}");
    Ok(())
}
