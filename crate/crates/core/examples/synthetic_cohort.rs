//! Generate a synthetic cohort, inspect its prevalence skew and the best
//! achievable LOS error, and write it in the ingestion format.

use lstm_gnn::synth::{generate, oracle_best_msle, prevalence_summary, SynthConfig};

fn main() -> lstm_gnn::Result<()> {
    let config = SynthConfig {
        n_patients: 500,
        seed: 7,
        ..SynthConfig::default()
    };
    let cohort = generate(&config)?;
    let prevalence = prevalence_summary(&cohort.truth);
    println!(
        "{} patients, {} leaf diagnoses in use",
        cohort.records.len(),
        prevalence.leaves
    );
    println!(
        "patients per diagnosis: mean {:.1}, median {:.1}, max {} (mean/median {:.2})",
        prevalence.mean,
        prevalence.median,
        prevalence.max,
        prevalence.skew_ratio()
    );
    println!("oracle MSLE {:.4}", oracle_best_msle(&cohort.truth, None)?);

    let mut effects = cohort.truth.effects.clone();
    effects.sort_by(|a, b| b.los_effect.total_cmp(&a.los_effect));
    println!("largest log-LOS effects:");
    for e in effects.iter().take(3) {
        println!("  {:<14} {:+.3} ({} patients)", e.code, e.los_effect, e.count);
    }

    let dir = std::env::temp_dir().join("lstm-gnn-synthetic-cohort");
    cohort.save(&dir)?;
    println!("written to {}", dir.display());
    Ok(())
}
