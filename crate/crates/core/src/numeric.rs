//! Small numerical helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value()
}

/// Mean and batch-means standard error of `values` split into `batches`
/// contiguous blocks. Trailing samples that do not fill a block are dropped
/// from the error estimate but kept in the mean.
pub fn batch_means(values: &[f64], batches: usize) -> Option<(f64, f64)> {
    if batches < 2 || values.len() < batches {
        return None;
    }
    let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
    let size = values.len() / batches;
    let block_means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| compensated_sum(c.iter().copied()) / size as f64)
        .collect();
    let grand = block_means.iter().sum::<f64>() / batches as f64;
    let var = block_means
        .iter()
        .map(|m| (m - grand) * (m - grand))
        .sum::<f64>()
        / (batches - 1) as f64;
    Some((mean, (var / batches as f64).sqrt()))
}

/// SplitMix64 finalizer over `(master, index)`; gives each replicate or grid
/// point an independent stream regardless of evaluation order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}
