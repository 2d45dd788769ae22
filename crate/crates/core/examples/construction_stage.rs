//! The seed stage and one further stage of the construction, with the
//! structural constraints checked mechanically.

use brlie::diverge::{construction_stage, ConstructionStage, DivergenceConfig};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let rs = RootSystem::from_spec_str("A1")?;
    let seed = ConstructionStage::seed(&rs);
    let cfg = DivergenceConfig {
        probes: 20,
        n_max: 32,
        budget: 10_000,
        max_retries: 0,
        ..DivergenceConfig::default()
    };
    let stage = match construction_stage(&rs, &seed, &cfg)? {
        Ok(s) => s,
        Err(f) => {
            println!("certificate failed: {}", f.reason);
            f.stage
        }
    };
    println!(
        "stage {}: eta {:.4e}, R {:.3e}, sup|K̄| {:.4e}, invariants hold {}, max|III| {:.3e}",
        stage.index,
        stage.eta,
        stage.scale,
        stage.kbar_sup,
        stage.invariants_hold(),
        stage.third_term_max
    );
    Ok(())
}
