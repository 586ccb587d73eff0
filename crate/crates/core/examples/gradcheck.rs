//! Finite-difference check of every parameter gradient for the toy
//! configuration of each variant.
//!
//! cargo run --release --example gradcheck -- [variant] [eps]

use dga::gradcheck::{gradcheck, GradcheckOptions};
use dga::model::{ModelConfig, Variant};

fn main() -> dga::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().map_or(Ok(Variant::Proposed), |a| a.parse())?;
    let eps = args.next().map_or(1e-5, |a| a.parse().expect("eps"));
    let cfg = ModelConfig::toy(variant, 10);
    let report = gradcheck(&cfg, &GradcheckOptions { eps, ..GradcheckOptions::default() })?;
    for p in &report.params {
        println!("{:<32} {:>4}/{:<7} rel {:.2e} abs {:.2e}", p.name, p.checked, p.total, p.max_rel_err, p.max_abs_err);
    }
    println!("loss {:.6} checked {} max rel err {:.3e}", report.loss, report.checked(), report.max_rel_err());
    Ok(())
}
