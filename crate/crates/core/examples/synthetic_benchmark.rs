//! Compares the three methods on synthetic spatio-temporal data over several
//! seeds. Usage: `synthetic_benchmark [SEEDS] [CONFIG.json]`.

use std::time::Instant;

use neugap::config::ModelKind;
use neugap::data::{SynthConfig, SYNTH_TARGET};
use neugap::eval::{run_benchmark, BenchmarkConfig};

fn main() -> neugap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut base = match args.get(2) {
        Some(path) => BenchmarkConfig::load(std::path::Path::new(path))?,
        None => BenchmarkConfig::default(),
    };
    if base.data.synthetic.is_none() && base.data.path.is_none() {
        base.data.synthetic = Some(SynthConfig::default());
    }
    if base.targets.is_empty() {
        base.targets = vec![SYNTH_TARGET.into()];
    }
    if base.data.location_columns.is_none() {
        base.data.location_columns = Some(["lat".into(), "lon".into()]);
    }
    let mut wins = 0;
    for seed in 0..seeds {
        let mut cfg = base.clone();
        cfg.data.seed = seed;
        let start = Instant::now();
        let report = run_benchmark(&cfg)?;
        let ll = |m| report.average(m).map_or(f64::NAN, |a| a.test_loglik);
        let (p, g, n) = (ll(ModelKind::Proposed), ll(ModelKind::Gp), ll(ModelKind::Nn));
        let win = p >= g && p >= n;
        wins += win as usize;
        println!(
            "seed {seed}: proposed {p:.3} gp {g:.3} nn {n:.3} {} ({:.1}s)",
            if win { "win" } else { "loss" },
            start.elapsed().as_secs_f64()
        );
        print!("{}", report.render());
    }
    println!("proposed best in {wins}/{seeds}");
    Ok(())
}
