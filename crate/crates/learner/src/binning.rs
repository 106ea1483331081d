use serde::{Deserialize, Serialize};
use triage_core::dataset::{ColumnKind, EncodedDataset, EncodingMode, FeatureSchema, SparseRow};

/// Bin id reserved for missing values; never produced for a present value.
pub const MISSING_BIN: u8 = u8::MAX;

/// Largest vocabulary an identity-binned column can hold (values 0..=254).
const MAX_IDENTITY_VALUES: usize = MISSING_BIN as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnBins {
    /// Bin `i` holds values `<= edges[i]`; values above every edge land in
    /// bin `edges.len()`.
    Numeric { edges: Vec<f64> },
    /// Integer values `0..n_values` are their own bin. Category columns get
    /// subset splits, everything else threshold splits.
    Identity { n_values: usize, categorical: bool },
}

impl ColumnBins {
    pub fn n_value_bins(&self) -> usize {
        match self {
            ColumnBins::Numeric { edges } => edges.len() + 1,
            ColumnBins::Identity { n_values, .. } => *n_values,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnBins::Identity { categorical: true, .. })
    }

    /// Bin of a present value. Non-finite values and identity values outside
    /// the known range are treated as missing.
    pub fn bin(&self, value: f64) -> u8 {
        if !value.is_finite() {
            return MISSING_BIN;
        }
        match self {
            ColumnBins::Numeric { edges } => edges.partition_point(|&e| e < value) as u8,
            ColumnBins::Identity { n_values, .. } => {
                if value >= 0.0 && value.fract() == 0.0 && (value as usize) < *n_values {
                    value as u8
                } else {
                    MISSING_BIN
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub mode: EncodingMode,
    pub columns: Vec<ColumnBins>,
}

impl Binning {
    /// Bin for an absent entry: the missing bin, or the bin of 0 when the
    /// dataset was zero-filled.
    pub fn absent_bin(&self, col: usize) -> u8 {
        match self.mode {
            EncodingMode::MissingAware => MISSING_BIN,
            EncodingMode::ZeroFilled => self.columns[col].bin(0.0),
        }
    }

    pub fn bin_sparse_row(&self, row: SparseRow<'_>) -> Vec<u8> {
        let mut bins: Vec<u8> = (0..self.columns.len()).map(|c| self.absent_bin(c)).collect();
        for (col, value) in row.entries() {
            bins[col as usize] = self.columns[col as usize].bin(value);
        }
        bins
    }

    /// Dense input where `NaN` marks a missing value.
    pub fn bin_dense_row(&self, values: &[f64]) -> Vec<u8> {
        values
            .iter()
            .enumerate()
            .map(|(c, &v)| if v.is_nan() { self.absent_bin(c) } else { self.columns[c].bin(v) })
            .collect()
    }

    pub fn bin_dataset(&self, dataset: &EncodedDataset) -> BinnedData {
        let n_rows = dataset.n_rows();
        let mut columns: Vec<Vec<u8>> = (0..self.columns.len()).map(|c| vec![self.absent_bin(c); n_rows]).collect();
        for (r, row) in dataset.matrix.rows().enumerate() {
            for (col, value) in row.entries() {
                columns[col as usize][r] = self.columns[col as usize].bin(value);
            }
        }
        BinnedData::new(n_rows, columns, self.columns.iter().map(FeatureMeta::of).collect())
    }
}

/// Equal-frequency upper edges over weighted sorted values. With at most
/// `n_bins` distinct values every value but the largest becomes an edge.
pub fn quantile_edges(sorted: &[(f64, usize)], n_bins: usize) -> Vec<f64> {
    let Some(&(max, _)) = sorted.last() else {
        return Vec::new();
    };
    if sorted.len() <= n_bins {
        return sorted[..sorted.len() - 1].iter().map(|v| v.0).collect();
    }
    let total: usize = sorted.iter().map(|v| v.1).sum();
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    let mut cursor = 0;
    let mut seen = 0;
    for j in 1..n_bins {
        // 1-based rank of the j-th quantile.
        let rank = (j * total).div_ceil(n_bins);
        while seen + sorted[cursor].1 < rank {
            seen += sorted[cursor].1;
            cursor += 1;
        }
        let edge = sorted[cursor].0;
        if edge < max && edges.last().is_none_or(|&last| last < edge) {
            edges.push(edge);
        }
    }
    edges
}

pub fn build_bins(dataset: &EncodedDataset, n_bins: usize) -> Binning {
    build_bins_for(&dataset.schema, dataset, n_bins)
}

fn build_bins_for(schema: &FeatureSchema, dataset: &EncodedDataset, n_bins: usize) -> Binning {
    assert!((2..=255).contains(&n_bins), "n_bins out of range");
    let mut present: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for row in dataset.matrix.rows() {
        for (col, value) in row.entries() {
            if matches!(schema.columns[col as usize].kind, ColumnKind::Number) {
                present[col as usize].push(value);
            }
        }
    }
    let n_rows = dataset.n_rows();
    let columns = schema
        .columns
        .iter()
        .zip(present)
        .map(|(column, mut values)| match &column.kind {
            ColumnKind::Boolean => ColumnBins::Identity {
                n_values: 2,
                categorical: false,
            },
            ColumnKind::Category { vocabulary } => ColumnBins::Identity {
                n_values: (vocabulary.len() + 1).min(MAX_IDENTITY_VALUES),
                categorical: true,
            },
            ColumnKind::Number => {
                if dataset.mode == EncodingMode::ZeroFilled {
                    let implicit = n_rows - values.len();
                    values.extend(std::iter::repeat_n(0.0, implicit));
                }
                values.sort_by(f64::total_cmp);
                let mut weighted: Vec<(f64, usize)> = Vec::new();
                for v in values {
                    match weighted.last_mut() {
                        Some(last) if last.0 == v => last.1 += 1,
                        _ => weighted.push((v, 1)),
                    }
                }
                ColumnBins::Numeric {
                    edges: quantile_edges(&weighted, n_bins),
                }
            }
        })
        .collect();
    Binning {
        mode: dataset.mode,
        columns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMeta {
    pub n_value_bins: usize,
    pub categorical: bool,
}

impl FeatureMeta {
    pub fn of(bins: &ColumnBins) -> Self {
        Self {
            n_value_bins: bins.n_value_bins(),
            categorical: bins.is_categorical(),
        }
    }
}

/// Column-major bin ids for a whole training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedData {
    columns: Vec<Vec<u8>>,
    meta: Vec<FeatureMeta>,
    n_rows: usize,
}

impl BinnedData {
    /// Every bin must be below its column's `n_value_bins` or be [`MISSING_BIN`].
    pub fn new(n_rows: usize, columns: Vec<Vec<u8>>, meta: Vec<FeatureMeta>) -> Self {
        assert_eq!(columns.len(), meta.len());
        for (col, m) in columns.iter().zip(&meta) {
            assert_eq!(col.len(), n_rows, "ragged columns");
            assert!(m.n_value_bins >= 1 && m.n_value_bins <= MISSING_BIN as usize);
            debug_assert!(col.iter().all(|&b| b == MISSING_BIN || (b as usize) < m.n_value_bins));
        }
        Self { columns, meta, n_rows }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, f: usize) -> &[u8] {
        &self.columns[f]
    }

    pub fn meta(&self, f: usize) -> FeatureMeta {
        self.meta[f]
    }

    pub fn row(&self, r: usize) -> Vec<u8> {
        self.columns.iter().map(|c| c[r]).collect()
    }
}
