//! Intermediate shapes and parameter counts of every variant at full scale.
//!
//! cargo run --example shapes -- [classes]

use dga::model::{count_model_params, infer_shapes, ModelConfig, Variant};

fn main() -> dga::Result<()> {
    let classes = std::env::args().nth(1).map_or(509, |a| a.parse().expect("classes"));
    let r = infer_shapes(&ModelConfig::full_scale(Variant::Proposed, classes))?;
    println!("F_rgb {:?}  F_guidance {:?}  pooled {:?}  attention {:?}", r.f_rgb, r.f_guidance, r.pooled, r.attention);
    for v in Variant::ALL {
        let n = count_model_params(&ModelConfig::full_scale(v, classes));
        println!("{v:<12} {:>12} params ({:.1}M)", n, n as f64 / 1e6);
    }
    Ok(())
}
