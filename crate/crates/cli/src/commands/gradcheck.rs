use std::path::PathBuf;

use multipatch::nn::gradcheck::{check_gradients, micro_network, random_batch, DEFAULT_STEP, DEFAULT_TOLERANCE};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

pub const REPORT_NAME: &str = "gradcheck.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Examples in the checked batch.
    #[arg(long, default_value_t = 2)]
    examples: usize,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Scale the analytic gradient of the second branch layer (test fixture).
    #[arg(long, hide = true)]
    corrupt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

pub fn run(args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    if args.examples == 0 || !(args.step > 0.0) || !(args.tolerance > 0.0) {
        return Err(crate::error::invalid!("examples, step and tolerance must be positive"));
    }
    let weights = micro_network(cfg.seed)?;
    let batch = random_batch(cfg.seed, args.examples, 3);
    let corrupt = args.corrupt;
    let report = check_gradients(&weights, &batch, args.step, args.tolerance, |w, b| {
        let (loss, mut g) = w.backward(b)?;
        if let Some(f) = corrupt {
            g.branch[1].kernels.scale(f);
        }
        Ok((loss, g))
    })?;
    println!("{:<14} {:>7} {:>12}  worst parameter", "layer", "params", "rel. error");
    for l in &report.layers {
        println!(
            "{:<14} {:>7} {:>12.3e}  {} (analytic {:.6e}, numeric {:.6e})",
            l.layer, l.params, l.worst_rel_error, l.worst_param, l.analytic, l.numeric
        );
    }
    println!(
        "max relative error {:.3e} (tolerance {:.0e}): {}",
        report.max_rel_error,
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    let mut manifest = Manifest::new("gradcheck", cfg);
    std::fs::create_dir_all(out)?;
    let path = out.join(REPORT_NAME);
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    manifest.output(&path)?;
    manifest.results = serde_json::to_value(&report)?;
    manifest.write(out)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: max relative error {:.3e}",
            report.max_rel_error
        )))
    }
}
