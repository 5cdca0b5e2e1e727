//! Check the hypothesis clauses on every shipped scenario, valid and invalid.
//!
//! cargo run --release --example validate

use std::path::Path;

use combsim::scenario::Scenario;

fn main() -> combsim::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<_> = [root.clone(), root.join("invalid")]
        .iter()
        .flat_map(|d| std::fs::read_dir(d).unwrap())
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();

    for path in paths {
        let s = Scenario::load(&path)?;
        let r = s.validate();
        println!(
            "{:<24} {}  mu0={:.4} mu1={:.4} beta={:.4}",
            s.name,
            if r.passed { "ok  " } else { "FAIL" },
            r.mu0,
            r.mu1,
            r.beta_max()
        );
        for v in &r.violations {
            println!("    {} (layer {}, value {:.3e})", v.clause, v.layer, v.value);
        }
    }
    Ok(())
}
