//! Compare the windowed mild solution with the method-of-lines oracle on the
//! same grid and time step.
//!
//! cargo run --release --example mol_cross_check

use std::path::Path;

use combsim::scenario::{Method, Scenario};
use combsim::NormKind;

fn main() -> combsim::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/constant_2layer.toml");
    let s = Scenario::load(&path)?;
    let mild = s.run(Method::Global)?.trajectory;
    let mol = s.mol_like(&mild)?;

    println!("sup_t L2 distance  {:.3e}", mild.sup_distance(&mol, NormKind::L2)?);
    println!("sup_t H2 distance  {:.3e}", mild.sup_distance(&mol, NormKind::H2)?);
    println!("relative distance  {:.3e}", mild.relative_distance(&mol)?);
    Ok(())
}
