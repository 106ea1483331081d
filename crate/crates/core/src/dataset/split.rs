use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::UrgencyLevel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Per-label test counts: largest-remainder rounding of `count * fraction`
/// so the total hits `round(n * fraction)`, clamped so each label keeps at
/// least one row on either side.
fn test_quotas(counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let target = (n as f64 * fraction).round() as usize;
    let ideal: Vec<f64> = counts.iter().map(|&c| c as f64 * fraction).collect();
    let mut quotas: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    // Larger remainder first; ties go to the lower label for determinism.
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    for (q, &c) in quotas.iter_mut().zip(counts) {
        if c >= 2 {
            *q = (*q).clamp(1, c - 1);
        }
    }
    quotas
}

/// Stratified split of row indices by label; returns sorted `(train, test)`.
pub fn split_stratified(labels: &[u8], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(DatasetError::InvalidSplit(format!(
            "test fraction must be in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); UrgencyLevel::COUNT];
    for (i, &label) in labels.iter().enumerate() {
        let slot = by_label
            .get_mut(label as usize)
            .ok_or_else(|| DatasetError::InvalidSplit(format!("label ordinal {label} out of range")))?;
        slot.push(i);
    }
    for (label, rows) in by_label.iter().enumerate() {
        if rows.len() == 1 {
            return Err(DatasetError::LabelTooRare {
                label: UrgencyLevel::from_ordinal(label as u8).map(|l| l.to_string()).unwrap_or_default(),
                count: 1,
            });
        }
    }
    let counts: Vec<usize> = by_label.iter().map(Vec::len).collect();
    let quotas = test_quotas(&counts, spec.test_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (mut rows, quota) in by_label.into_iter().zip(quotas) {
        rows.shuffle(&mut rng);
        test.extend_from_slice(&rows[..quota]);
        train.extend_from_slice(&rows[quota..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Experimental / training / evaluation row sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tiers {
    pub experimental: Vec<usize>,
    pub training: Vec<usize>,
    pub evaluation: Vec<usize>,
}

/// Two chained stratified splits: an experimental subset of
/// `experimental_fraction` of the cohort, then an 80/20 training/evaluation
/// split of the rest.
pub fn split_tiers(labels: &[u8], experimental_fraction: f64, seed: u64) -> Result<Tiers, DatasetError> {
    let (rest, experimental) = split_stratified(
        labels,
        &SplitSpec {
            test_fraction: experimental_fraction,
            seed,
        },
    )?;
    let rest_labels: Vec<u8> = rest.iter().map(|&i| labels[i]).collect();
    let (train, eval) = split_stratified(&rest_labels, &SplitSpec::with_seed(seed.wrapping_add(1)))?;
    Ok(Tiers {
        experimental,
        training: train.into_iter().map(|i| rest[i]).collect(),
        evaluation: eval.into_iter().map(|i| rest[i]).collect(),
    })
}
