//! Prints parameter counts of every variant across adapter bottleneck widths.

use jointmotion_core::network::{adapter_param_count, Denoiser};
use jointmotion_core::{ModelConfig, Variant};

fn main() -> jointmotion_core::Result<()> {
    for (label, base) in [
        ("desk", ModelConfig::default()),
        ("full width", ModelConfig::full_width()),
    ] {
        for div in [4, 8, 16] {
            let cfg = ModelConfig {
                bottleneck: base.d / div,
                ..base.clone()
            };
            let mut counts = Vec::new();
            for v in Variant::ALL {
                let (_, p) = Denoiser::new(&ModelConfig {
                    variant: v,
                    ..cfg.clone()
                })?;
                counts.push((v, p.count(), adapter_param_count(&p)));
            }
            let joint = counts[0].1 as f64;
            let separate = counts[1].1 as f64;
            println!(
                "{label:>12} d={} d_b={:>3}  joint={:>9} (adapters {:>8})  separate={:>9}  combined={:>9}  split={:>9}  ratio={:.4}",
                cfg.d, cfg.bottleneck, counts[0].1, counts[0].2, counts[1].1, counts[2].1, counts[3].1, joint / separate
            );
        }
    }
    Ok(())
}
