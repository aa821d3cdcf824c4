//! Synthetic phantom datasets in the on-disk layout, with matching survival
//! metadata and a small-network configuration.

use std::path::Path;

use glioma_core::phantom::{phantom_cohort, PhantomConfig};
use glioma_core::{ResectionStatus, SubregionId, SurvivalRecord};

use crate::dataset::{self, CaseLayout};
use crate::error::Result;
use crate::fsutil;
use crate::tables::{self, SurvivalColumns};

/// Configuration written next to a synthetic dataset: a narrow network of the
/// standard topology and a short training budget.
pub const SYNTH_CONFIG: &str = "\
seed: 7
data:
  cases_dir: cases
  survival_csv: survival.csv
output_dir: out
network:
  encoder_maps: [8, 16, 32]
  decoder_maps: [16, 8]
  dense_block_depth: 3
training:
  loss: dice
  epochs: 2
  batch_size: 8
  max_steps: 4
  learning_rate: 0.001
  split_fraction: 0.75
  threshold: 0.5
survival:
  n_trees: 20
  evaluation: resubstitution
";

/// Writes `count` phantom cases under `<root>/cases`, `survival.csv` and
/// `config.yaml`. Survival shrinks with tumor-core size so the regressor has
/// signal to learn.
pub fn write_synthetic_dataset(root: &Path, count: usize, dims: [usize; 3], seed: u64) -> Result<Vec<SurvivalRecord>> {
    let cfg = PhantomConfig {
        dims,
        ..PhantomConfig::default()
    };
    let layout = CaseLayout::default();
    let cases = phantom_cohort(count, &cfg, seed);
    let mut records = Vec::with_capacity(count);
    for (i, case) in cases.iter().enumerate() {
        dataset::save_case(&root.join("cases"), case, &layout)?;
        let core = glioma_core::subregion_mask(&case.labels, SubregionId::TC).count() as f64;
        let brain = case.scan.brain_mask().count().max(1) as f64;
        let days = (1200.0 - 60_000.0 * core / brain).max(30.0).round();
        let resection = match i % 4 {
            3 => ResectionStatus::STR,
            _ => ResectionStatus::GTR,
        };
        let age = 35.0 + (i * 7 % 40) as f64;
        records.push(SurvivalRecord::new(case.case_id(), age, Some(days), resection)?);
    }
    tables::write_survival_table(&root.join("survival.csv"), &records, &SurvivalColumns::default())?;
    fsutil::write_atomic(&root.join("config.yaml"), SYNTH_CONFIG.as_bytes())?;
    Ok(records)
}
