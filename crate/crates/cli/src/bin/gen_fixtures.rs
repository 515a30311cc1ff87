//! Regenerates the bundled synthetic fixtures and their run configs.
//!
//! The CSVs are deterministic (fixed seeds), so re-running this binary
//! reproduces the committed files byte for byte.

use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use tabshift_core::data::write_csv;
use tabshift_core::synth::{income_like, IncomeConfig};

#[derive(Parser)]
#[command(about = "Write the bundled fixture CSVs and configs")]
struct Args {
    /// Target directory for the fixtures.
    #[arg(long, default_value = "fixtures")]
    dir: PathBuf,
}

const DEMO_CONFIG: &str = r#"# Small end-to-end demo; run from the repository root:
#   cargo run -p tabshift-cli --bin tabshift -- --config fixtures/demo.toml run-all
seed = 7
out_dir = "runs/demo"

[data]
path = "fixtures/demo_2k.csv"
target = "income"
task = "classification"
norm = "l2"

[split]
tail_size = 300
proxy_epochs = 15

[pretrain]
epochs = 40
batch_size = 128
corruption_rate = 0.15

[continual]
epochs = 10

[head]
epochs = 150

[baseline]
epochs = 50
"#;

const INCOME_CONFIG: &str = r#"# Income-style 5k-row benchmark with the OpenMax detector and L2 rows.
# The wide Weibull tail makes the detector carve out the shifted
# subpopulation rather than only the extreme outliers.
seed = 1
out_dir = "runs/income"

[data]
path = "fixtures/income_synth_5k.csv"
target = "income"
task = "classification"
norm = "l2"

[split]
detector = "openmax"
tail_size = 700

[pretrain]
epochs = 30
batch_size = 256

[continual]
epochs = 10
"#;

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    std::fs::create_dir_all(&args.dir)
        .with_context(|| format!("creating {}", args.dir.display()))?;

    let five_k = income_like(&IncomeConfig {
        rows: 5000,
        shifted_fraction: 0.18,
        shifted_class1_fraction: 0.65,
        shifted_core_scale: 0.6,
        seed: 20240,
    })?;
    write_csv(&five_k, args.dir.join("income_synth_5k.csv"))?;

    let demo = income_like(&IncomeConfig {
        rows: 2000,
        shifted_fraction: 0.18,
        shifted_class1_fraction: 0.65,
        shifted_core_scale: 0.6,
        seed: 20241,
    })?;
    write_csv(&demo, args.dir.join("demo_2k.csv"))?;

    std::fs::write(args.dir.join("demo.toml"), DEMO_CONFIG)?;
    std::fs::write(args.dir.join("income_openmax_l2.toml"), INCOME_CONFIG)?;

    println!("fixtures written to {}", args.dir.display());
    Ok(())
}
