//! Rebuilds the arraignment confusion tables from their published margins, then tunes
//! per-group cutoffs on a synthetic dataset of the same shape and prints the resulting
//! error-rate gap.
//!
//! cargo run -p fairlens --example arraignment_tables

use fairlens::correct_in::{tune_group_thresholds, TuneTarget};
use fairlens::data::synthetic::{generate_synthetic, GroupSpec, SyntheticSpec};
use fairlens::feasibility::{reconstruct_from_rates, EMPIRICAL_MARGINS};
use fairlens::{tables_at_thresholds, Execution};

fn main() -> fairlens::Result<()> {
    println!("reconstruction from published margins");
    for (group, n, success_rate, npv, fnr, fpr) in EMPIRICAL_MARGINS {
        let t = reconstruct_from_rates(n, success_rate, fnr, fpr)?;
        let q = t.quantities()?;
        println!(
            "  {group:<6} cells tp={} fn={} fp={} tn={}  npv={:.4} (published {npv})  fnr={:.4}  fpr={:.4}  \
             FP:FN={:.3}  FN:FP={:.3}",
            t.tp(),
            t.fn_(),
            t.fp(),
            t.tn(),
            q.npv().unwrap_or(f64::NAN),
            q.fnr.unwrap_or(f64::NAN),
            q.fpr.unwrap_or(f64::NAN),
            t.fp() / t.fn_(),
            t.fn_() / t.fp(),
        );
    }

    println!("\ncutoffs tuned so predicted-failure accuracy matches the white group at .5");
    println!("  {:>9} {:>9} {:>10} {:>10} {:>9} {:>9}", "q_black", "q_white", "t_black", "ppv_gap", "fnr_b", "fnr_w");
    for (qb, qw) in [(1.0, 1.0), (1.2, 0.8), (1.5, 0.8), (1.2, 1.2)] {
        let data = generate_synthetic(&SyntheticSpec::new(
            9,
            vec![GroupSpec::new("black", 13_396, 0.11, qb), GroupSpec::new("white", 6_604, 0.06, qw)],
        ))?;
        let tuned = tune_group_thresholds(&data, "white", None, TuneTarget::Ppv, 0.01, Execution::default())?;
        let th = &tuned.policy.per_group_threshold;
        let tables = tables_at_thresholds(&data, th)?;
        let (b, w) = (tables["black"].quantities()?, tables["white"].quantities()?);
        let gap = (b.ppv().unwrap_or(f64::NAN) - w.ppv().unwrap_or(f64::NAN)).abs();
        println!(
            "  {qb:>9.1} {qw:>9.1} {:>10.4} {gap:>10.4} {:>9.3} {:>9.3}",
            th["black"],
            b.fnr.unwrap_or(f64::NAN),
            w.fnr.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
