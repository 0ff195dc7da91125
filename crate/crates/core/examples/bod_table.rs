//! Prints moment rows for the BOD conditional in the layout of the accuracy
//! table: `cargo run --release -p trimap --example bod_table [M] [seed] [p...]`.

use trimap::bod::{run_inverse_experiment, ConditionVia, MOMENT_COLUMNS};

fn main() -> trimap::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(50_000) as usize;
    let seed = args.get(1).copied().unwrap_or(2024);
    let degrees: Vec<usize> = if args.len() > 2 { args[2..].iter().map(|&p| p as usize).collect() } else { vec![1, 3] };
    println!("p M via {} build_s regression_s online_s", MOMENT_COLUMNS.join(" "));
    for p in degrees {
        for via in [ConditionVia::InverseMap, ConditionVia::RegressedDirect] {
            let e = run_inverse_experiment(m, p, seed, via)?;
            let row: Vec<String> = e.moments.as_array().iter().map(|v| format!("{v:.3}")).collect();
            println!(
                "{p} {m} {via:?} {} {:.2} {:.2} {:.2}",
                row.join(" "),
                e.build_seconds,
                e.regression_seconds,
                e.online_seconds
            );
        }
    }
    Ok(())
}
