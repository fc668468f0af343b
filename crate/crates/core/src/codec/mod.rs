//! Reversible table <-> grayscale-image codec.
//!
//! A table of `n` samples and `d + 1` variables (response last) becomes an
//! `n x (d + 1)` grayscale image. Each column is first passed through the
//! chosen monotone map (`e^{a v}` or identity) and then min-max normalised
//! to `[0, 1]`. The [`CodecManifest`] keeps the per-column range of the
//! mapped values so that [`decode`] can invert both steps exactly.

mod png_io;

pub use png_io::{
    image_from_png_bytes, manifest_path, png_bytes, read_manifest, read_png, write_manifest,
    write_png,
};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest admissible `|a * v|` for the exponential map.
pub const EXP_ARG_LIMIT: f64 = 700.0;

/// Pixel value assigned to every cell of a zero-range column.
pub const CONSTANT_COLUMN_PIXEL: f64 = 0.5;

/// Numeric table; rows are samples, one column is the response.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    response_col: usize,
    column_names: Option<Vec<String>>,
}

impl DataMatrix {
    /// Table with the response in the last column.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let c = values.ncols();
        Self::with_response(values, c.saturating_sub(1))
    }

    pub fn with_response(values: DMatrix<f64>, response_col: usize) -> Result<Self> {
        if values.nrows() < 1 || values.ncols() < 2 {
            return Err(Error::invalid(format!(
                "data matrix needs n >= 1 and c >= 2, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if response_col >= values.ncols() {
            return Err(Error::invalid(format!(
                "response column {response_col} out of range for {} columns",
                values.ncols()
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::NonFinite(format!("row {r}, column {c}")));
        }
        Ok(Self {
            values,
            response_col,
            column_names: None,
        })
    }

    /// Build from predictors `x` (n x d) and response `y`.
    pub fn from_xy(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::mismatch(x.nrows(), y.len()));
        }
        let d = x.ncols();
        let mut values = DMatrix::zeros(x.nrows(), d + 1);
        values.view_mut((0, 0), (x.nrows(), d)).copy_from(x);
        for (i, v) in y.iter().enumerate() {
            values[(i, d)] = *v;
        }
        Self::new(values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.ncols() {
            return Err(Error::mismatch(self.ncols(), names.len()));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn response_col(&self) -> usize {
        self.response_col
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Response values.
    pub fn response(&self) -> Vec<f64> {
        self.values
            .column(self.response_col)
            .iter()
            .copied()
            .collect()
    }

    /// Predictor block, columns in original order with the response removed.
    pub fn predictors(&self) -> DMatrix<f64> {
        self.values.clone().remove_column(self.response_col)
    }

    /// Same table with the response moved to the last column.
    pub fn with_response_last(&self) -> DataMatrix {
        let c = self.ncols();
        if self.response_col == c - 1 {
            return self.clone();
        }
        let order: Vec<usize> = (0..c)
            .filter(|&j| j != self.response_col)
            .chain(std::iter::once(self.response_col))
            .collect();
        let values = DMatrix::from_fn(self.nrows(), c, |i, j| self.values[(i, order[j])]);
        DataMatrix {
            values,
            response_col: c - 1,
            column_names: self
                .column_names
                .as_ref()
                .map(|names| order.iter().map(|&j| names[j].clone()).collect()),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let values = DMatrix::from_fn(indices.len(), self.ncols(), |i, j| {
            self.values[(indices[i], j)]
        });
        DataMatrix {
            values,
            response_col: self.response_col,
            column_names: self.column_names.clone(),
        }
    }

    /// Row-wise concatenation. Both tables must share the column layout.
    pub fn vstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if other.ncols() != self.ncols() || other.response_col != self.response_col {
            return Err(Error::mismatch(
                format!("{} columns, response {}", self.ncols(), self.response_col),
                format!("{} columns, response {}", other.ncols(), other.response_col),
            ));
        }
        let (n1, n2, c) = (self.nrows(), other.nrows(), self.ncols());
        let values = DMatrix::from_fn(n1 + n2, c, |i, j| {
            if i < n1 {
                self.values[(i, j)]
            } else {
                other.values[(i - n1, j)]
            }
        });
        Ok(DataMatrix {
            values,
            response_col: self.response_col,
            column_names: self.column_names.clone(),
        })
    }

    /// Concatenate a non-empty list of tables.
    pub fn concat(parts: &[&DataMatrix]) -> Result<DataMatrix> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        rest.iter()
            .try_fold((*first).clone(), |acc, m| acc.vstack(m))
    }
}

/// Monotone per-entry map applied before min-max normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    Exponential,
    Minmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub col_min: f64,
    pub col_max: f64,
}

impl ColumnRange {
    pub fn is_constant(&self) -> bool {
        self.col_max == self.col_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub response_col: usize,
}

/// Everything needed to turn an encoded image back into a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecManifest {
    pub mapping_kind: MappingKind,
    pub exp_coefficient: f64,
    /// Range of the *mapped* values per column (`e^{a v}` for the exponential map).
    pub per_column: Vec<ColumnRange>,
    pub quantization_bits: u32,
    pub layout: Layout,
}

impl CodecManifest {
    fn forward(&self, v: f64) -> f64 {
        match self.mapping_kind {
            MappingKind::Exponential => (self.exp_coefficient * v).exp(),
            MappingKind::Minmax => v,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.exp_coefficient > 0.0) {
            return Err(Error::invalid("exp_coefficient must be positive"));
        }
        if self.per_column.len() != self.layout.cols {
            return Err(Error::mismatch(self.layout.cols, self.per_column.len()));
        }
        if self.per_column.iter().any(|r| !(r.col_max >= r.col_min)) {
            return Err(Error::invalid("manifest column with col_max < col_min"));
        }
        if self.quantization_bits != 0 && self.quantization_bits != 8 {
            return Err(Error::invalid("quantization_bits must be 0 or 8"));
        }
        Ok(())
    }
}

/// Grayscale pixel grid with values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != height * width {
            return Err(Error::mismatch(height * width, pixels.len()));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("pixel {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Clamp arbitrary (finite or not) values into `[0, 1]`; NaN becomes 0.
    /// Returns the image and the number of pixels that had to be changed.
    pub fn from_unclamped(height: usize, width: usize, raw: Vec<f64>) -> Result<(Self, usize)> {
        let mut changed = 0;
        let pixels = raw
            .into_iter()
            .map(|p| {
                let c = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
                if c != p {
                    changed += 1;
                }
                c
            })
            .collect();
        Ok((Self::new(height, width, pixels)?, changed))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.height).map(|r| self.get(r, col)).collect()
    }

    /// Round every pixel to the nearest `k / 255`.
    pub fn quantized8(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| quantize8(p)).collect(),
        }
    }
}

fn quantize8(p: f64) -> f64 {
    (p * 255.0).round() / 255.0
}

/// Split rows into `(V1, V2)` with `|V1| = floor(fraction * n)`.
///
/// Without shuffling this is the literal top/bottom bisection.
pub fn partition(
    data: &DataMatrix,
    fraction: f64,
    seed: u64,
    shuffle: bool,
) -> Result<(DataMatrix, DataMatrix)> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::invalid("partition needs at least 2 rows"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} not in (0, 1)")));
    }
    let m = (fraction * n as f64).floor() as usize;
    if m == 0 || m == n {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {n} rows leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut rng::stream(seed, &[0x7061_7274]));
    }
    Ok((data.select_rows(&order[..m]), data.select_rows(&order[m..])))
}

/// Encode a table as a grayscale image plus its inversion manifest.
pub fn encode(
    data: &DataMatrix,
    mapping_kind: MappingKind,
    exp_coefficient: f64,
    quantization_bits: u32,
) -> Result<(GrayImage, CodecManifest)> {
    let (n, c) = (data.nrows(), data.ncols());
    let mut manifest = CodecManifest {
        mapping_kind,
        exp_coefficient,
        per_column: Vec::with_capacity(c),
        quantization_bits,
        layout: Layout {
            rows: n,
            cols: c,
            response_col: data.response_col(),
        },
    };
    if !(exp_coefficient > 0.0) {
        return Err(Error::invalid("exp_coefficient must be positive"));
    }
    if quantization_bits != 0 && quantization_bits != 8 {
        return Err(Error::invalid("quantization_bits must be 0 or 8"));
    }

    let mut mapped = DMatrix::zeros(n, c);
    for ((i, j), v) in data
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| ((k % n, k / n), v))
    {
        if mapping_kind == MappingKind::Exponential && (exp_coefficient * v).abs() > EXP_ARG_LIMIT {
            return Err(Error::ExpOverflow((exp_coefficient * v).abs()));
        }
        mapped[(i, j)] = manifest.forward(*v);
    }

    let mut pixels = vec![0.0; n * c];
    for j in 0..c {
        let col = mapped.column(j);
        let lo = col.min();
        let hi = col.max();
        manifest.per_column.push(ColumnRange {
            col_min: lo,
            col_max: hi,
        });
        for i in 0..n {
            let p = if hi > lo {
                ((col[i] - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                CONSTANT_COLUMN_PIXEL
            };
            pixels[i * c + j] = if quantization_bits == 8 {
                quantize8(p)
            } else {
                p
            };
        }
    }
    Ok((GrayImage::new(n, c, pixels)?, manifest))
}

/// Decoded table plus counters for cells that needed repair.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub data: DataMatrix,
    /// Cells whose logarithm argument was not positive and was clamped.
    pub log_clamped: usize,
}

/// Invert [`encode`]. Pixels are assumed to lie in `[0, 1]` (see
/// [`GrayImage::from_unclamped`] for generator output).
pub fn decode(image: &GrayImage, manifest: &CodecManifest) -> Result<Decoded> {
    manifest.validate()?;
    let Layout {
        rows,
        cols,
        response_col,
    } = manifest.layout;
    if image.height() != rows || image.width() != cols {
        return Err(Error::mismatch(
            format!("{rows}x{cols}"),
            format!("{}x{}", image.height(), image.width()),
        ));
    }
    let mut log_clamped = 0;
    let mut values = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let range = manifest.per_column[j];
        for i in 0..rows {
            let p = image.get(i, j);
            let w = if range.is_constant() {
                range.col_min
            } else {
                p * (range.col_max - range.col_min) + range.col_min
            };
            values[(i, j)] = match manifest.mapping_kind {
                MappingKind::Minmax => w,
                MappingKind::Exponential => {
                    let arg = if w > 0.0 && w.is_finite() {
                        w
                    } else {
                        log_clamped += 1;
                        f64::MIN_POSITIVE
                    };
                    arg.ln() / manifest.exp_coefficient
                }
            };
        }
    }
    if log_clamped > 0 {
        log::warn!("decode clamped {log_clamped} cells with non-positive log argument");
    }
    Ok(Decoded {
        data: DataMatrix::with_response(values, response_col)?,
        log_clamped,
    })
}

/// Threshold the response: strictly above `threshold` becomes 1, else 0.
pub fn binarize_response(data: &DataMatrix, threshold: f64) -> Result<DataMatrix> {
    let rc = data.response_col();
    let mut values = data.values().clone();
    for i in 0..data.nrows() {
        let y = values[(i, rc)];
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::invalid(format!(
                "response {y} at row {i} outside [0, 1]"
            )));
        }
        values[(i, rc)] = if y > threshold { 1.0 } else { 0.0 };
    }
    let mut out = DataMatrix::with_response(values, rc)?;
    out.column_names = data.column_names.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(vals: &[f64]) -> DataMatrix {
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v, 0.0]).collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    fn seq(n: usize) -> DataMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, -(i as f64)]).collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(DataMatrix::from_rows(&[vec![1.0]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(DataMatrix::with_response(DMatrix::zeros(2, 2), 2).is_err());
    }

    #[test]
    fn bisection_without_shuffle() {
        let data = seq(100);
        let (v1, v2) = partition(&data, 0.5, 0, false).unwrap();
        assert_eq!(v1.nrows(), 50);
        assert_eq!(v2.nrows(), 50);
        assert_eq!(v1.row(0)[0], 0.0);
        assert_eq!(v1.row(49)[0], 49.0);
        assert_eq!(v2.row(0)[0], 50.0);
        assert_eq!(v2.row(49)[0], 99.0);
    }

    #[test]
    fn partition_floor_and_errors() {
        let (v1, v2) = partition(&seq(3), 0.5, 0, false).unwrap();
        assert_eq!((v1.nrows(), v2.nrows()), (1, 2));
        assert!(partition(&seq(3), 0.1, 0, false).is_err());
        assert!(partition(&seq(1), 0.5, 0, false).is_err());
        assert!(partition(&seq(4), 1.0, 0, false).is_err());
    }

    #[test]
    fn shuffled_partition_is_seeded() {
        let data = seq(40);
        let a = partition(&data, 0.5, 11, true).unwrap();
        let b = partition(&data, 0.5, 11, true).unwrap();
        assert_eq!(a, b);
        let c = partition(&data, 0.5, 12, true).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn exponential_endpoints() {
        let (img, manifest) =
            encode(&column(&[0.0, 20.0]), MappingKind::Exponential, 0.05, 0).unwrap();
        assert_eq!(manifest.per_column[0].col_min, 1.0);
        assert!((manifest.per_column[0].col_max - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(img.column(0), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_half() {
        let (img, manifest) =
            encode(&column(&[3.0, 3.0, 3.0]), MappingKind::Minmax, 0.05, 0).unwrap();
        assert_eq!(img.column(0), vec![0.5; 3]);
        assert_eq!(manifest.per_column[0].col_min, 3.0);
        assert_eq!(manifest.per_column[0].col_max, 3.0);
        let back = decode(&img, &manifest).unwrap();
        assert_eq!(
            back.data
                .values()
                .column(0)
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            vec![3.0; 3]
        );
    }

    #[test]
    fn minmax_is_affine() {
        let (img, _) = encode(&column(&[1.0, 2.0, 4.0]), MappingKind::Minmax, 0.05, 0).unwrap();
        let col = img.column(0);
        assert_eq!(col[0], 0.0);
        assert!((col[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(col[2], 1.0);
    }

    #[test]
    fn analytic_exponential_inverse() {
        let manifest = CodecManifest {
            mapping_kind: MappingKind::Exponential,
            exp_coefficient: 0.05,
            per_column: vec![
                ColumnRange {
                    col_min: 1.0,
                    col_max: std::f64::consts::E,
                },
                ColumnRange {
                    col_min: 1.0,
                    col_max: 1.0,
                },
            ],
            quantization_bits: 0,
            layout: Layout {
                rows: 1,
                cols: 2,
                response_col: 1,
            },
        };
        let img = GrayImage::new(1, 2, vec![1.0, 0.5]).unwrap();
        let out = decode(&img, &manifest).unwrap();
        assert!((out.data.values()[(0, 0)] - 20.0).abs() < 1e-12);
        assert_eq!(out.data.values()[(0, 1)], 0.0);
    }

    #[test]
    fn eight_bit_error_on_two_value_column() {
        // Both values sit exactly on the quantization grid ends, so the
        // enumerated error over {0, 20} is 0 <= 20/255.
        let data = column(&[0.0, 20.0]);
        let (img, manifest) = encode(&data, MappingKind::Minmax, 0.05, 8).unwrap();
        let back = decode(&img, &manifest).unwrap();
        let err = (0..2)
            .map(|i| (back.data.values()[(i, 0)] - data.values()[(i, 0)]).abs())
            .fold(0.0, f64::max);
        assert!(err <= 20.0 / 255.0);
    }

    #[test]
    fn overflow_guard() {
        let err = encode(&column(&[0.0, 20_000.0]), MappingKind::Exponential, 0.05, 0);
        assert!(matches!(err, Err(Error::ExpOverflow(_))));
    }

    #[test]
    fn decode_rejects_wrong_shape() {
        let (_, manifest) = encode(&seq(4), MappingKind::Minmax, 0.05, 0).unwrap();
        let img = GrayImage::filled(3, 2, 0.5).unwrap();
        assert!(matches!(
            decode(&img, &manifest),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn log_argument_clamp_counts() {
        let manifest = CodecManifest {
            mapping_kind: MappingKind::Exponential,
            exp_coefficient: 0.05,
            // A hand-written manifest whose lower end is not a valid pre-image.
            per_column: vec![
                ColumnRange {
                    col_min: -1.0,
                    col_max: 1.0,
                },
                ColumnRange {
                    col_min: 1.0,
                    col_max: 2.0,
                },
            ],
            quantization_bits: 0,
            layout: Layout {
                rows: 2,
                cols: 2,
                response_col: 1,
            },
        };
        let img = GrayImage::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = decode(&img, &manifest).unwrap();
        assert_eq!(out.log_clamped, 1);
        assert!(out.data.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn clamping_unclamped_generator_output() {
        let (img, changed) = GrayImage::from_unclamped(1, 3, vec![-0.2, 0.5, 1.3]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.5, 1.0]);
        assert_eq!(changed, 2);
    }

    #[test]
    fn binarize_strict_threshold() {
        let data =
            DataMatrix::from_rows(&[vec![9.0, 0.7], vec![9.0, 0.5], vec![9.0, 0.0]]).unwrap();
        let out = binarize_response(&data, 0.5).unwrap();
        assert_eq!(out.response(), vec![1.0, 0.0, 0.0]);
        assert_eq!(out.values().column(0), data.values().column(0));
        let bad = DataMatrix::from_rows(&[vec![0.0, 1.5]]).unwrap();
        assert!(binarize_response(&bad, 0.5).is_err());
    }

    #[test]
    fn response_reordering() {
        let data = DataMatrix::with_response(DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]), 0)
            .unwrap()
            .with_column_names(vec!["y".into(), "a".into(), "b".into()])
            .unwrap();
        let moved = data.with_response_last();
        assert_eq!(moved.row(0), vec![2.0, 3.0, 1.0]);
        assert_eq!(moved.column_names().unwrap(), &["a", "b", "y"]);
        assert_eq!(moved.response(), vec![1.0]);
    }
}
