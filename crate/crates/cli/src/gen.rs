use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use mcpr_core::instance::{derive_budget_variants, generate_synthetic, SyntheticConfig};

use crate::{budget_variant_name, GenArgs, INSTANCE_EXT};

/// Writes the generated instances and returns their paths.
pub fn generate(args: &GenArgs) -> Result<Vec<PathBuf>> {
    let cfg = SyntheticConfig {
        cap: args.cap,
        budget_ratio: args.budget_ratio,
        ..SyntheticConfig::new(args.m as usize, args.zones as usize, args.seed)
    };
    let mut inst = generate_synthetic(&cfg)?;
    inst.name = args.name.clone().unwrap_or_else(|| format!("syn_m{}_n{}_s{}", args.m, args.zones, args.seed));
    let variants = if args.budgets.is_empty() {
        vec![inst]
    } else {
        derive_budget_variants(&inst, &args.budgets)
            .into_iter()
            .zip(&args.budgets)
            .map(|(mut v, &k)| {
                v.name = budget_variant_name(&inst.name, k);
                v
            })
            .collect()
    };
    std::fs::create_dir_all(&args.out)?;
    let mut paths = Vec::new();
    for v in variants {
        let path = args.out.join(format!("{}.{INSTANCE_EXT}", v.name));
        std::fs::write(&path, v.to_text())?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    for path in generate(args)? {
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}
