use clap::Args;
use vitmae::trainer::ddp_check;
use vitmae::Result;

#[derive(Args)]
pub struct DdpArgs {
    /// Worker count.
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Steps per equivalence run.
    #[arg(long, default_value_t = 10)]
    steps: u64,
    #[arg(long)]
    json: bool,
}

pub fn run(args: DdpArgs) -> Result<i32> {
    let report = ddp_check(args.k, args.steps)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "replicated({}x) vs sequential: max deviation {:.3e}",
            report.workers, report.replicated_vs_sequential
        );
        println!(
            "sharded vs replicated:        max deviation {:.3e}",
            report.sharded_vs_replicated
        );
        println!(
            "rerun bitwise identical:      {}",
            report.rerun_bit_identical
        );
    }
    if report.passed() {
        println!("PASS (tolerance {:.0e})", report.tolerance);
        Ok(0)
    } else {
        println!("FAIL (tolerance {:.0e})", report.tolerance);
        Ok(2)
    }
}
