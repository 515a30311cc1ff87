//! Deterministic synthetic dataset generators.
//!
//! Two families back the bundled fixtures and the benchmark suites:
//!
//! - [`two_phase_gaussians`]: a pair of Gaussian class clusters plus a
//!   mean-shifted copy of them, the canonical distribution-shift task for
//!   retention experiments.
//! - [`income_like`]: a census-style mixed numeric/categorical binary
//!   classification table with a shifted minority subpopulation whose
//!   context features leave the majority regime entirely. Supervised models
//!   trained on the majority extrapolate badly onto the shifted rows while
//!   the label-relevant core features stay intact.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnSpec, Dataset, Targets, TaskKind};
use crate::error::Result;
use crate::seed;

/// Settings for the two-phase Gaussian shift task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPhaseConfig {
    pub dim: usize,
    /// Rows per class in the base phase.
    pub phase1_per_class: usize,
    /// Rows per class in the shifted phase.
    pub phase2_per_class: usize,
    /// Distance between the two class means.
    pub class_separation: f64,
    pub noise_sigma: f64,
    /// Euclidean length of the phase-2 mean shift, in units of sigma.
    pub shift_sigmas: f64,
    pub seed: u64,
}

impl Default for TwoPhaseConfig {
    fn default() -> Self {
        TwoPhaseConfig {
            dim: 8,
            phase1_per_class: 300,
            phase2_per_class: 60,
            class_separation: 3.0,
            noise_sigma: 1.0,
            shift_sigmas: 2.0,
            seed: 0,
        }
    }
}

/// Two Gaussian class clusters plus a mean-shifted second phase.
///
/// Returns the combined dataset (phase 1 rows first) and a phase-2 mask.
pub fn two_phase_gaussians(cfg: &TwoPhaseConfig) -> Result<(Dataset, Vec<bool>)> {
    let mut rng = seed::rng(cfg.seed, "two-phase");
    let n1 = 2 * cfg.phase1_per_class;
    let n2 = 2 * cfg.phase2_per_class;
    let n = n1 + n2;

    // Class means sit on the first axis; the shift moves along the all-ones
    // direction so every coordinate participates.
    let shift_per_coord = cfg.shift_sigmas * cfg.noise_sigma / (cfg.dim as f64).sqrt();

    let mut features = Array2::zeros((n, cfg.dim));
    let mut labels = Vec::with_capacity(n);
    let mut phase2 = vec![false; n];
    for i in 0..n {
        let shifted = i >= n1;
        phase2[i] = shifted;
        let class = i % 2;
        labels.push(class);
        let class_mean = if class == 0 {
            -cfg.class_separation / 2.0
        } else {
            cfg.class_separation / 2.0
        };
        for j in 0..cfg.dim {
            let mean = if j == 0 { class_mean } else { 0.0 };
            let offset = if shifted { shift_per_coord } else { 0.0 };
            let noise: f64 = StandardNormal.sample(&mut rng);
            features[[i, j]] = mean + offset + cfg.noise_sigma * noise;
        }
    }
    let ds = Dataset::from_numeric(features, Targets::Classes(labels), TaskKind::Classification { classes: 2 })?;
    Ok((ds, phase2))
}

/// Settings for the income-style table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncomeConfig {
    pub rows: usize,
    /// Fraction of rows drawn from the shifted subpopulation.
    pub shifted_fraction: f64,
    /// Class-1 rate inside the shifted subpopulation (the majority stays
    /// balanced). Shifted demographics rarely share the base rates.
    pub shifted_class1_fraction: f64,
    /// Core-signal strength inside the shifted subpopulation relative to the
    /// majority; below 1 the shifted rows are intrinsically harder.
    pub shifted_core_scale: f64,
    pub seed: u64,
}

impl Default for IncomeConfig {
    fn default() -> Self {
        IncomeConfig {
            rows: 5000,
            shifted_fraction: 0.18,
            shifted_class1_fraction: 0.65,
            shifted_core_scale: 0.6,
            seed: 0,
        }
    }
}

/// Census-style mixed-column binary classification table.
///
/// Columns: four core numerics whose class relationship holds everywhere,
/// two context numerics that carry the strongest class signal in the
/// majority population but collapse to a class-independent far-negative
/// regime in the shifted minority, an age-like neutral numeric, and two
/// categorical columns (one class-skewed with a shifted-population
/// signature, one noise). Models that lean on the context block extrapolate
/// badly onto the shifted rows; the core block stays faithful there.
pub fn income_like(cfg: &IncomeConfig) -> Result<Dataset> {
    let mut rng = seed::rng(cfg.seed, "income");
    let n = cfg.rows;

    let sectors = ["agriculture", "manufacturing", "services", "technology"];
    let regions = ["east", "north", "south", "west"];

    let mut numeric = Array2::zeros((n, 7));
    let mut sector_ids = Vec::with_capacity(n);
    let mut region_ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);

    for i in 0..n {
        let shifted = rng.random::<f64>() < cfg.shifted_fraction;
        let class1_rate = if shifted { cfg.shifted_class1_fraction } else { 0.5 };
        let label = usize::from(rng.random::<f64>() < class1_rate);
        let sign = if label == 1 { 1.0 } else { -1.0 };

        // Core block: class signal that stays faithful everywhere, though
        // attenuated in the shifted minority.
        let core_scale = if shifted { cfg.shifted_core_scale } else { 1.0 };
        for j in 0..4 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            numeric[[i, j]] = 0.9 * core_scale * sign + noise;
        }
        // Context block: strong signal in the majority; in the shifted
        // minority it collapses to a class-independent far-negative regime.
        for j in 4..6 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            numeric[[i, j]] = if shifted {
                -6.0 + 0.8 * noise
            } else {
                1.6 * sign + 0.8 * noise
            };
        }
        // Age-like neutral column, pre-standardized so no single column
        // dominates the row norm.
        let noise: f64 = StandardNormal.sample(&mut rng);
        numeric[[i, 6]] = noise;

        // Sector: class-skewed in the majority; the shifted minority
        // concentrates in the first two sectors regardless of class.
        let u: f64 = rng.random();
        let sector = if shifted {
            if u < 0.5 {
                0
            } else {
                1
            }
        } else if label == 1 {
            match u {
                x if x < 0.1 => 0,
                x if x < 0.25 => 1,
                x if x < 0.55 => 2,
                _ => 3,
            }
        } else {
            match u {
                x if x < 0.35 => 0,
                x if x < 0.65 => 1,
                x if x < 0.85 => 2,
                _ => 3,
            }
        };
        sector_ids.push(sector);
        region_ids.push(rng.random_range(0..regions.len()));
        labels.push(label);
    }

    // Assemble the expanded matrix: 7 numerics, then the two one-hot blocks.
    let width = 7 + sectors.len() + regions.len();
    let mut features = Array2::zeros((n, width));
    for i in 0..n {
        for j in 0..7 {
            features[[i, j]] = numeric[[i, j]];
        }
        features[[i, 7 + sector_ids[i]]] = 1.0;
        features[[i, 7 + sectors.len() + region_ids[i]]] = 1.0;
    }

    let mut schema: Vec<ColumnSpec> = (0..7)
        .map(|j| ColumnSpec {
            name: ["core_0", "core_1", "core_2", "core_3", "context_0", "context_1", "age_scaled"][j].to_string(),
            kind: ColumnKind::Numeric,
        })
        .collect();
    schema.push(ColumnSpec {
        name: "sector".into(),
        kind: ColumnKind::Categorical {
            categories: sectors.iter().map(|s| s.to_string()).collect(),
        },
    });
    schema.push(ColumnSpec {
        name: "region".into(),
        kind: ColumnKind::Categorical {
            categories: regions.iter().map(|s| s.to_string()).collect(),
        },
    });

    Dataset::from_parts(
        features,
        Targets::Classes(labels),
        TaskKind::Classification { classes: 2 },
        schema,
        "income",
        vec!["high".into(), "low".into()],
    )
}
