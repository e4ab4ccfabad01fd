//! Instrument matrices: linear maps from density matrices to detection
//! probabilities or N-fold correlations.
//!
//! Everything is stored as the single-photon factor. Its complex form acts
//! on row-major vec(ρ), `M[l,(u,v)] = (F_l)_vu`. Its real form acts on the
//! Hermitian-basis coordinates of [`basis`], `M_R = M·B` with B unitary, so
//! both share one singular spectrum. N-photon instruments are the Kronecker
//! power of the real factor and are applied matrix-free.
//!
//! Reductions:
//! * click detectors keep only rows whose pixels are pairwise distinct;
//! * indistinguishable photons (N = 2) sum the columns of coordinate pairs
//!   `(a,b)` and `(b,a)` onto the canonical `a ≤ b`, and average rows
//!   `(l₁,l₂)`, `(l₂,l₁)` onto `l₁ ≤ l₂`.

pub mod basis;
mod conditioning;

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::json;

use crate::error::{Error, Result};
use crate::forward::{PixelBinning, TransmissionMatrix};
use crate::linalg::{self, mode_product};
use crate::matfile::{Kind, MatrixFile};
use crate::state::DensityMatrix;
use crate::C64;

pub use conditioning::{
    condition_number, condition_number_dense, sic_gram, sic_povm_explicit, sic_reference,
    Conditioning, SicReference,
};

/// Default cap on any dense materialization, in bytes.
pub const DEFAULT_MEMORY_CAP: u128 = 2 << 30;

/// Index maps are written to files only below this many rows.
const INLINE_MAP_ROWS: usize = 10_000;

#[derive(Debug)]
struct Factor {
    dim: usize,
    complex: DMatrix<C64>,
    real: DMatrix<f64>,
}

/// A measured row: one full multi-index, or the average of a multi-index and
/// its photon-exchanged partner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Row {
    primary: usize,
    partner: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct InstrumentMatrix {
    factor: Arc<Factor>,
    photons: usize,
    click: bool,
    indistinguishable: bool,
    rows: Option<Arc<Vec<Row>>>,
    memory_cap: u128,
}

impl InstrumentMatrix {
    fn from_factor(dim: usize, complex: DMatrix<C64>, real: DMatrix<f64>) -> Result<Self> {
        if complex
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
            || real.iter().any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("instrument matrix".into()));
        }
        Ok(Self {
            factor: Arc::new(Factor { dim, complex, real }),
            photons: 1,
            click: false,
            indistinguishable: false,
            rows: None,
            memory_cap: DEFAULT_MEMORY_CAP,
        })
    }

    /// Single-photon instrument from complex rows acting on row-major vec(ρ).
    pub fn from_complex_rows(m: DMatrix<C64>, dim: usize) -> Result<Self> {
        if m.ncols() != dim * dim || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "{}x{} instrument for D={dim} (expected L x {})",
                m.nrows(),
                m.ncols(),
                dim * dim
            )));
        }
        let real = (&m * basis::hermitian_basis(dim)).map(|z| z.re);
        Self::from_factor(dim, m, real)
    }

    /// Single-photon instrument from rows acting on Hermitian-basis coordinates.
    pub fn from_real_rows(m: DMatrix<f64>, dim: usize) -> Result<Self> {
        if m.ncols() != dim * dim || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "{}x{} instrument for D={dim} (expected L x {})",
                m.nrows(),
                m.ncols(),
                dim * dim
            )));
        }
        let complex = m.map(|x| C64::new(x, 0.0)) * basis::hermitian_basis(dim).adjoint();
        Self::from_factor(dim, complex, m)
    }

    /// Row l, column (u,v): Σ over channels c in pixel l of T_cu T*_cv.
    pub fn from_transmission(t: &TransmissionMatrix, binning: &PixelBinning) -> Result<Self> {
        if binning.channels() != t.channels() {
            return Err(Error::Dimension(format!(
                "binning covers {} channels, transmission matrix has {}",
                binning.channels(),
                t.channels()
            )));
        }
        let d = t.modes();
        let mut m = DMatrix::<C64>::zeros(binning.pixels(), d * d);
        for l in 0..binning.pixels() {
            let range = binning.bin(l);
            let block = t.entries.rows(range.start, range.len());
            // a[u, v] = Σ_c T_cu conj(T_cv)
            let a = block.transpose() * block.map(|z| z.conj());
            for u in 0..d {
                for v in 0..d {
                    m[(l, u * d + v)] = a[(u, v)];
                }
            }
        }
        Self::from_complex_rows(m, d)
    }

    /// Instrument of an explicit POVM: p_l = Tr(F_l ρ).
    pub fn from_povm(elements: &[DMatrix<C64>]) -> Result<Self> {
        let d = elements
            .first()
            .map(|e| e.nrows())
            .ok_or_else(|| Error::Parameter("empty POVM".into()))?;
        let mut m = DMatrix::<C64>::zeros(elements.len(), d * d);
        for (l, f) in elements.iter().enumerate() {
            if f.nrows() != d || f.ncols() != d {
                return Err(Error::Dimension(format!("POVM element {l} is not {d}x{d}")));
            }
            if linalg::frobenius_max_abs(&(f - f.adjoint())) > 1e-12 {
                return Err(Error::Validation(format!(
                    "POVM element {l} is not Hermitian"
                )));
            }
            for u in 0..d {
                for v in 0..d {
                    m[(l, u * d + v)] = f[(v, u)];
                }
            }
        }
        Self::from_complex_rows(m, d)
    }

    pub fn with_memory_cap(mut self, bytes: u128) -> Self {
        self.memory_cap = bytes;
        self
    }

    pub fn memory_cap(&self) -> u128 {
        self.memory_cap
    }

    pub fn dim(&self) -> usize {
        self.factor.dim
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn pixels(&self) -> usize {
        self.factor.real.nrows()
    }

    pub fn is_click(&self) -> bool {
        self.click
    }

    pub fn is_indistinguishable(&self) -> bool {
        self.indistinguishable
    }

    /// L^N, the row count before reductions.
    pub fn full_rows(&self) -> usize {
        self.pixels().pow(self.photons as u32)
    }

    /// D^(2N), the column count before reductions.
    pub fn full_cols(&self) -> usize {
        self.dim().pow(2 * self.photons as u32)
    }

    pub fn rows(&self) -> usize {
        self.rows.as_ref().map_or(self.full_rows(), |r| r.len())
    }

    pub fn cols(&self) -> usize {
        if self.indistinguishable {
            let d2 = self.dim() * self.dim();
            d2 * (d2 + 1) / 2
        } else {
            self.full_cols()
        }
    }

    /// Complex single-photon factor, L × D².
    pub fn single_complex(&self) -> &DMatrix<C64> {
        &self.factor.complex
    }

    /// Real single-photon factor, L × D².
    pub fn single_real(&self) -> &DMatrix<f64> {
        &self.factor.real
    }

    fn guard(&self, what: &str, bytes: u128) -> Result<()> {
        if bytes > self.memory_cap {
            return Err(Error::Resource {
                what: what.to_string(),
                required_bytes: bytes,
                cap_bytes: self.memory_cap,
            });
        }
        Ok(())
    }

    /// N-fold Kronecker power of an unreduced single-photon instrument.
    pub fn tensor_power(&self, photons: usize) -> Result<Self> {
        if self.photons != 1 || self.click || self.indistinguishable {
            return Err(Error::Parameter(
                "tensor power needs an unreduced single-photon instrument".into(),
            ));
        }
        if photons == 0 {
            return Err(Error::Parameter("photon number must be ≥ 1".into()));
        }
        let rows = (self.pixels() as u128).checked_pow(photons as u32);
        let cols = (self.dim() as u128).checked_pow(2 * photons as u32);
        match (rows, cols) {
            (Some(r), Some(c)) if r < usize::MAX as u128 && c < usize::MAX as u128 => {
                // matrix-free workspace: one full-length measurement and coordinate vector
                self.guard("N-photon workspace", (r + c) * 8 * 2)?;
            }
            _ => {
                return Err(Error::Resource {
                    what: "N-photon instrument".into(),
                    required_bytes: u128::MAX,
                    cap_bytes: self.memory_cap,
                })
            }
        }
        let mut out = self.clone();
        out.photons = photons;
        Ok(out)
    }

    /// Drops every row in which two photons land on the same pixel.
    pub fn reduce_click(&self) -> Self {
        if self.photons < 2 {
            log::warn!("click reduction has no effect on a single-photon instrument");
            return self.clone();
        }
        let mut out = self.clone();
        out.click = true;
        out.rows = Some(Arc::new(out.build_rows()));
        out
    }

    /// Exchange-symmetric reduction for two indistinguishable photons.
    pub fn reduce_indistinguishable(&self) -> Result<Self> {
        if self.photons != 2 {
            return Err(Error::Unsupported(format!(
                "indistinguishability reduction for N = {} (only N = 2)",
                self.photons
            )));
        }
        let mut out = self.clone();
        out.indistinguishable = true;
        out.rows = Some(Arc::new(out.build_rows()));
        Ok(out)
    }

    fn build_rows(&self) -> Vec<Row> {
        let l = self.pixels();
        let n = self.photons;
        if self.indistinguishable {
            let mut rows = Vec::new();
            for a in 0..l {
                let start = if self.click { a + 1 } else { a };
                for b in start..l {
                    rows.push(Row {
                        primary: a * l + b,
                        partner: (a != b).then_some(b * l + a),
                    });
                }
            }
            return rows;
        }
        (0..self.full_rows())
            .filter(|&i| {
                let digits = multi_index(i, l, n);
                (0..n).all(|p| (p + 1..n).all(|q| digits[p] != digits[q]))
            })
            .map(|primary| Row {
                primary,
                partner: None,
            })
            .collect()
    }

    /// Pixel multi-indices averaged into measurement row `r`.
    pub fn row_label(&self, r: usize) -> Vec<Vec<usize>> {
        let (l, n) = (self.pixels(), self.photons);
        match &self.rows {
            None => vec![multi_index(r, l, n)],
            Some(rows) => {
                let row = rows[r];
                std::iter::once(row.primary)
                    .chain(row.partner)
                    .map(|i| multi_index(i, l, n))
                    .collect()
            }
        }
    }

    /// Coordinate slots merged into column `c`; each alternative lists one
    /// `(u, v)` slot per photon (see [`basis::slot`]).
    pub fn col_label(&self, c: usize) -> Vec<Vec<(usize, usize)>> {
        let d = self.dim();
        let to_pairs = |full: usize| -> Vec<(usize, usize)> {
            multi_index(full, d * d, self.photons)
                .into_iter()
                .map(|k| (k / d, k % d))
                .collect()
        };
        if self.indistinguishable {
            let (a, b) = canonical_pair(c, d * d);
            let d2 = d * d;
            let mut out = vec![to_pairs(a * d2 + b)];
            if a != b {
                out.push(to_pairs(b * d2 + a));
            }
            out
        } else {
            vec![to_pairs(c)]
        }
    }

    /// Multiplier turning reduced coordinates into an isometric parametrization:
    /// ‖ρ‖_F = ‖w ∘ y‖.
    pub fn coord_weights(&self) -> Vec<f64> {
        if !self.indistinguishable {
            return vec![1.0; self.cols()];
        }
        let d2 = self.dim() * self.dim();
        (0..self.cols())
            .map(|c| {
                let (a, b) = canonical_pair(c, d2);
                if a == b {
                    1.0
                } else {
                    std::f64::consts::SQRT_2
                }
            })
            .collect()
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim() || rho.photons() != self.photons {
            return Err(Error::Dimension(format!(
                "state with D={}, N={} on an instrument with D={}, N={}",
                rho.dim(),
                rho.photons(),
                self.dim(),
                self.photons
            )));
        }
        if self.indistinguishable && !rho.is_exchange_symmetric() {
            return Err(Error::Validation(
                "indistinguishable instrument needs an exchange-symmetric state".into(),
            ));
        }
        Ok(())
    }

    /// Reduced real coordinates of ρ (the vector this instrument acts on).
    pub fn coords_of(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        self.check_state(rho)?;
        let full = basis::coordinates(rho.entries(), self.dim(), self.photons);
        Ok(self.fold_symmetric(&full))
    }

    /// Reduced coordinates of any Hermitian matrix of the right size, unchecked.
    pub(crate) fn coords_of_matrix(&self, rho: &DMatrix<C64>) -> Vec<f64> {
        self.fold_symmetric(&basis::coordinates(rho, self.dim(), self.photons))
    }

    /// Operator with the given reduced coordinates (Hermitian, not necessarily physical).
    pub fn density_from_coords(&self, y: &[f64]) -> Result<DMatrix<C64>> {
        if y.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} columns",
                y.len(),
                self.cols()
            )));
        }
        Ok(basis::operator(&self.expand(y), self.dim(), self.photons))
    }

    /// Copies each canonical coordinate to both exchange-partner slots.
    fn expand(&self, y: &[f64]) -> Vec<f64> {
        if !self.indistinguishable {
            return y.to_vec();
        }
        let d2 = self.dim() * self.dim();
        let mut full = vec![0.0; d2 * d2];
        for (c, &v) in y.iter().enumerate() {
            let (a, b) = canonical_pair(c, d2);
            full[a * d2 + b] = v;
            full[b * d2 + a] = v;
        }
        full
    }

    /// Symmetrized canonical coordinates (mean of the two partner slots).
    fn fold_symmetric(&self, full: &[f64]) -> Vec<f64> {
        if !self.indistinguishable {
            return full.to_vec();
        }
        let d2 = self.dim() * self.dim();
        (0..self.cols())
            .map(|c| {
                let (a, b) = canonical_pair(c, d2);
                0.5 * (full[a * d2 + b] + full[b * d2 + a])
            })
            .collect()
    }

    /// Transpose of [`Self::expand`]: partner slots are summed.
    fn fold_sum(&self, full: &[f64]) -> Vec<f64> {
        if !self.indistinguishable {
            return full.to_vec();
        }
        let d2 = self.dim() * self.dim();
        (0..self.cols())
            .map(|c| {
                let (a, b) = canonical_pair(c, d2);
                if a == b {
                    full[a * d2 + a]
                } else {
                    full[a * d2 + b] + full[b * d2 + a]
                }
            })
            .collect()
    }

    /// Measurement vector for reduced coordinates `y`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} columns",
                y.len(),
                self.cols()
            )));
        }
        let full = self.expand(y);
        let shape = vec![self.dim() * self.dim(); self.photons];
        let mut t = full;
        let mut current = shape.clone();
        for mode in 0..self.photons {
            t = mode_product(&t, &current, mode, &self.factor.real);
            current[mode] = self.pixels();
        }
        Ok(match &self.rows {
            None => t,
            Some(rows) => rows
                .iter()
                .map(|r| match r.partner {
                    None => t[r.primary],
                    Some(p) => 0.5 * (t[r.primary] + t[p]),
                })
                .collect(),
        })
    }

    /// Transpose action: measurement-space vector → reduced coordinates.
    pub fn adjoint(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.rows() {
            return Err(Error::Dimension(format!(
                "{} values for {} rows",
                g.len(),
                self.rows()
            )));
        }
        let mut full = match &self.rows {
            None => g.to_vec(),
            Some(rows) => {
                let mut f = vec![0.0; self.full_rows()];
                for (r, &v) in rows.iter().zip(g) {
                    match r.partner {
                        None => f[r.primary] += v,
                        Some(p) => {
                            f[r.primary] += 0.5 * v;
                            f[p] += 0.5 * v;
                        }
                    }
                }
                f
            }
        };
        let rt = self.factor.real.transpose();
        let mut current = vec![self.pixels(); self.photons];
        for mode in 0..self.photons {
            full = mode_product(&full, &current, mode, &rt);
            current[mode] = self.dim() * self.dim();
        }
        Ok(self.fold_sum(&full))
    }

    /// Dense real matrix acting on reduced coordinates.
    pub fn dense_real(&self) -> Result<DMatrix<f64>> {
        let (rows, cols) = (self.rows(), self.cols());
        self.guard("dense instrument matrix", rows as u128 * cols as u128 * 8)?;
        if self.photons == 1 {
            return Ok(self.factor.real.clone());
        }
        let (l, n) = (self.pixels(), self.photons);
        let full_row = |i: usize| -> Vec<f64> {
            let digits = multi_index(i, l, n);
            let mut v = vec![1.0];
            for &li in &digits {
                let r = self.factor.real.row(li);
                v = v
                    .iter()
                    .flat_map(|&a| r.iter().map(move |&b| a * b))
                    .collect();
            }
            v
        };
        let mut out = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let row = match &self.rows {
                None => full_row(r),
                Some(rs) => {
                    let entry = rs[r];
                    let mut v = full_row(entry.primary);
                    if let Some(p) = entry.partner {
                        for (a, b) in v.iter_mut().zip(full_row(p)) {
                            *a = 0.5 * (*a + b);
                        }
                    }
                    v
                }
            };
            for (c, x) in self.fold_sum(&row).into_iter().enumerate() {
                out[(r, c)] = x;
            }
        }
        Ok(out)
    }

    /// Complex matrix on Kronecker-ordered ρ entries, for unreduced instruments.
    pub fn dense_complex(&self) -> Result<DMatrix<C64>> {
        if self.click || self.indistinguishable {
            return Err(Error::Unsupported(
                "complex form of a reduced instrument".into(),
            ));
        }
        self.guard(
            "dense complex instrument matrix",
            self.rows() as u128 * self.cols() as u128 * 16,
        )?;
        let m = &self.factor.complex;
        let mut out = m.clone();
        for _ in 1..self.photons {
            out = out.kronecker(m);
        }
        Ok(out)
    }

    /// Entry of the unreduced complex instrument at pixel multi-index `row` and
    /// per-photon ρ index pairs `col`.
    pub fn entry_complex(&self, row: &[usize], col: &[(usize, usize)]) -> C64 {
        let d = self.dim();
        row.iter()
            .zip(col)
            .map(|(&l, &(u, v))| self.factor.complex[(l, u * d + v)])
            .product()
    }

    /// Gram matrix AᵀA of the reduced real matrix.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let cols = self.cols();
        let full_cols = self.full_cols();
        self.guard("Gram matrix", full_cols as u128 * full_cols as u128 * 8 * 2)?;
        let g1 = self.factor.real.transpose() * &self.factor.real;
        if self.photons == 1 {
            return Ok(g1);
        }
        if self.photons == 2 {
            let mut x = g1.kronecker(&g1);
            if self.click || self.indistinguishable {
                let r = &self.factor.real;
                let q = DMatrix::from_fn(self.pixels(), full_cols, |l, k| {
                    let d2 = r.ncols();
                    r[(l, k / d2)] * r[(l, k % d2)]
                });
                let qq = q.transpose() * q;
                if self.click {
                    x -= qq;
                } else {
                    x += qq;
                }
            }
            if !self.indistinguishable {
                return Ok(x);
            }
            let d2 = self.dim() * self.dim();
            let pairs: Vec<(usize, usize)> = (0..cols).map(|c| canonical_pair(c, d2)).collect();
            let members = |(a, b): (usize, usize)| -> Vec<usize> {
                if a == b {
                    vec![a * d2 + a]
                } else {
                    vec![a * d2 + b, b * d2 + a]
                }
            };
            let groups: Vec<Vec<usize>> = pairs.into_iter().map(members).collect();
            let mut out = DMatrix::zeros(cols, cols);
            for (i, gi) in groups.iter().enumerate() {
                for (j, gj) in groups.iter().enumerate().skip(i) {
                    let mut s = 0.0;
                    for &p in gi {
                        for &q in gj {
                            s += x[(p, q)];
                        }
                    }
                    out[(i, j)] = 0.5 * s;
                    out[(j, i)] = 0.5 * s;
                }
            }
            return Ok(out);
        }
        if !self.click {
            return Ok(linalg::kron_power(&g1, self.photons));
        }
        let a = self.dense_real()?;
        Ok(a.transpose() * a)
    }

    pub fn to_file(&self) -> MatrixFile {
        let mut meta = json!({
            "D": self.dim(),
            "N": self.photons,
            "L": self.pixels(),
            "click_detector": self.click,
            "indistinguishable": self.indistinguishable,
            "rows": self.rows(),
            "cols": self.cols(),
            "payload": "single-photon factor acting on row-major vec(rho)",
            "row_order": "lexicographic pixel multi-index of surviving rows",
            "col_order": "Kronecker order of per-photon Hermitian-basis slots",
        });
        if self.rows() <= INLINE_MAP_ROWS && self.cols() <= INLINE_MAP_ROWS {
            meta["row_index_map"] = json!((0..self.rows())
                .map(|r| self.row_label(r))
                .collect::<Vec<_>>());
            meta["col_index_map"] = json!((0..self.cols())
                .map(|c| self.col_label(c))
                .collect::<Vec<_>>());
        }
        MatrixFile::complex(Kind::Instrument, &self.factor.complex, meta)
    }

    pub fn from_file(file: &MatrixFile) -> Result<Self> {
        file.expect_kind(Kind::Instrument)?;
        let dim = file.meta_usize("D")?;
        let photons = file.meta_usize("N")?;
        let mut m = Self::from_complex_rows(file.complex_matrix()?, dim)?;
        if photons > 1 {
            m = m.tensor_power(photons)?;
        }
        if file.meta_bool("click_detector")? {
            m = m.reduce_click();
        }
        if file.meta_bool("indistinguishable")? {
            m = m.reduce_indistinguishable()?;
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_file().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(&MatrixFile::read(path)?)
    }
}

/// Base-`radix` digits of `i`, most significant first.
fn multi_index(mut i: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = i % radix;
        i /= radix;
    }
    out
}

/// c-th pair (a, b), a ≤ b < n, in lexicographic order.
fn canonical_pair(c: usize, n: usize) -> (usize, usize) {
    let mut a = 0;
    let mut start = 0;
    while start + (n - a) <= c {
        start += n - a;
        a += 1;
    }
    (a, a + (c - start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::state::basis_ket;
    use nalgebra::DVector;
    use rand_distr::{Distribution, StandardNormal};

    fn random_t(channels: usize, modes: usize, seed: u64) -> TransmissionMatrix {
        let mut r = rng::seeded(seed);
        let mut m = DMatrix::from_fn(channels, modes, |_, _| {
            C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r))
        });
        let scale = 1.1 * m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        m /= C64::new(scale, 0.0);
        TransmissionMatrix::imported(m, vec![0.0; channels], 810.0).unwrap()
    }

    fn instrument(d: usize, l: usize, seed: u64) -> InstrumentMatrix {
        let t = random_t(l, d, seed);
        InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(l)).unwrap()
    }

    #[test]
    fn canonical_pairs_enumerate_upper_triangle() {
        let n = 5;
        let pairs: Vec<_> = (0..n * (n + 1) / 2).map(|c| canonical_pair(c, n)).collect();
        let mut expected = Vec::new();
        for a in 0..n {
            for b in a..n {
                expected.push((a, b));
            }
        }
        assert_eq!(pairs, expected);
    }

    #[test]
    fn rank_one_case_is_detection_probability() {
        let t = random_t(8, 1, 3);
        let m = InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(8)).unwrap();
        for l in 0..8 {
            assert!((m.single_complex()[(l, 0)].re - t.entries[(l, 0)].norm_sqr()).abs() < 1e-15);
            assert!((m.single_real()[(l, 0)] - t.entries[(l, 0)].norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_direct_output_probabilities() {
        let (d, l) = (3, 12);
        let t = random_t(l, d, 5);
        let m = InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(l)).unwrap();
        for seed in 0..100 {
            let rho = DensityMatrix::random(d, 1, 1 + (seed as usize % 3), seed).unwrap();
            let via_m = m.single_complex() * DVector::from_vec(rho.flatten());
            let out = &t.entries * rho.entries() * t.entries.adjoint();
            let real = m.apply(&m.coords_of(&rho).unwrap()).unwrap();
            for i in 0..l {
                assert!((via_m[i] - out[(i, i)]).norm() < 1e-12);
                assert!((real[i] - out[(i, i)].re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermiticity_structure() {
        let m = instrument(4, 9, 2);
        let c = m.single_complex();
        for l in 0..9 {
            for u in 0..4 {
                for v in 0..4 {
                    assert!((c[(l, u * 4 + v)] - c[(l, v * 4 + u)].conj()).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn binned_rows_sum_channel_rows() {
        let t = random_t(30, 3, 8);
        let fine = InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(30)).unwrap();
        let coarse =
            InstrumentMatrix::from_transmission(&t, &PixelBinning::contiguous(30, 7).unwrap())
                .unwrap();
        let total =
            InstrumentMatrix::from_transmission(&t, &PixelBinning::contiguous(30, 1).unwrap())
                .unwrap();
        let sum_fine = fine.single_complex().row_sum();
        let sum_coarse = coarse.single_complex().row_sum();
        assert!((&sum_fine - &sum_coarse).norm() < 1e-14);
        assert!((total.single_complex().row(0) - sum_fine).norm() < 1e-14);
    }

    #[test]
    fn tensor_power_entries_and_shape() {
        let m1 = instrument(3, 12, 4);
        let m2 = m1.tensor_power(2).unwrap();
        assert_eq!((m2.rows(), m2.cols()), (144, 81));
        let dense = m2.dense_complex().unwrap();
        let mut r = rng::seeded(1);
        use rand::Rng;
        for _ in 0..50 {
            let (l1, l2) = (r.random_range(0..12), r.random_range(0..12));
            let (u1, v1, u2, v2) = (
                r.random_range(0..3),
                r.random_range(0..3),
                r.random_range(0..3),
                r.random_range(0..3),
            );
            let want =
                m1.single_complex()[(l1, u1 * 3 + v1)] * m1.single_complex()[(l2, u2 * 3 + v2)];
            let col = (u1 * 3 + v1) * 9 + (u2 * 3 + v2);
            assert!((dense[(l1 * 12 + l2, col)] - want).norm() < 1e-15);
            assert!((m2.entry_complex(&[l1, l2], &[(u1, v1), (u2, v2)]) - want).norm() < 1e-15);
        }
        let same = m1.tensor_power(1).unwrap();
        assert_eq!(same.dense_real().unwrap(), m1.dense_real().unwrap());
    }

    #[test]
    fn product_state_correlations_factorize() {
        let m1 = instrument(3, 10, 6);
        let m2 = m1.tensor_power(2).unwrap();
        let a = DensityMatrix::random(3, 1, 2, 1).unwrap();
        let b = DensityMatrix::random(3, 1, 1, 2).unwrap();
        let ga = m1.apply(&m1.coords_of(&a).unwrap()).unwrap();
        let gb = m1.apply(&m1.coords_of(&b).unwrap()).unwrap();
        let gab = m2
            .apply(&m2.coords_of(&a.tensor(&b).unwrap()).unwrap())
            .unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert!((gab[i * 10 + j] - ga[i] * gb[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn click_reduction_drops_coincident_rows() {
        let m2 = instrument(2, 10, 1).tensor_power(2).unwrap();
        let cl = m2.reduce_click();
        assert_eq!(cl.rows(), 90);
        let rho = DensityMatrix::random(2, 1, 1, 3).unwrap();
        let prod = rho.tensor(&rho).unwrap();
        let full = m2.apply(&m2.coords_of(&prod).unwrap()).unwrap();
        let red = cl.apply(&cl.coords_of(&prod).unwrap()).unwrap();
        let kept: Vec<f64> = (0..100)
            .filter(|i| i / 10 != i % 10)
            .map(|i| full[i])
            .collect();
        assert_eq!(red, kept);
        assert_eq!(cl.row_label(0), vec![vec![0, 1]]);
        assert!(instrument(2, 10, 1).reduce_click().rows() == 10);
    }

    #[test]
    fn indistinguishable_column_count() {
        let m = instrument(2, 6, 1).tensor_power(2).unwrap();
        let ind = m.reduce_indistinguishable().unwrap();
        assert_eq!(ind.cols(), 10);
        assert_eq!(ind.rows(), 21);
        assert_eq!(ind.reduce_click().rows(), 15);
        let d7 = instrument(7, 50, 2).tensor_power(2).unwrap();
        assert_eq!(d7.reduce_indistinguishable().unwrap().cols(), 1225);
        assert!(matches!(
            instrument(2, 6, 1).reduce_indistinguishable(),
            Err(Error::Unsupported(_))
        ));
    }

    fn symmetric_state(d: usize, seed: u64) -> DensityMatrix {
        // random mixture of exchange-symmetric pure states
        let mut r = rng::seeded(seed);
        let mut comps = Vec::new();
        for _ in 0..3 {
            let psi = DVector::from_fn(d * d, |_, _| {
                C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r))
            });
            let sym = DVector::from_fn(d * d, |i, _| psi[i] + psi[(i % d) * d + i / d]);
            comps.push((1.0 / 3.0, sym));
        }
        DensityMatrix::mixed(&comps, d, 2).unwrap()
    }

    #[test]
    fn indistinguishable_reduction_is_consistent() {
        let m = instrument(3, 8, 9).tensor_power(2).unwrap();
        for click in [false, true] {
            let base = if click { m.reduce_click() } else { m.clone() };
            let ind = base.reduce_indistinguishable().unwrap();
            for seed in 0..50 {
                let rho = symmetric_state(3, seed);
                let full = m.apply(&m.coords_of(&rho).unwrap()).unwrap();
                let y = ind.coords_of(&rho).unwrap();
                let red = ind.apply(&y).unwrap();
                for (r, v) in red.iter().enumerate() {
                    let label = ind.row_label(r);
                    let idx = label[0][0] * 8 + label[0][1];
                    assert!((v - full[idx]).abs() < 1e-12);
                }
                let back = ind.density_from_coords(&y).unwrap();
                assert!((back - rho.entries()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn weights_make_coordinates_isometric() {
        let ind = instrument(2, 6, 1)
            .tensor_power(2)
            .unwrap()
            .reduce_indistinguishable()
            .unwrap();
        let rho = symmetric_state(2, 4);
        let y = ind.coords_of(&rho).unwrap();
        let norm: f64 = y
            .iter()
            .zip(ind.coord_weights())
            .map(|(a, w)| (a * w).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((norm - rho.entries().norm()).abs() < 1e-13);
    }

    #[test]
    fn asymmetric_state_on_indistinguishable_instrument_fails() {
        let ind = instrument(2, 6, 1)
            .tensor_power(2)
            .unwrap()
            .reduce_indistinguishable()
            .unwrap();
        let rho = DensityMatrix::from_pure(&basis_ket(2, &[0, 1]), 2, 2).unwrap();
        assert!(matches!(ind.coords_of(&rho), Err(Error::Validation(_))));
    }

    #[test]
    fn adjoint_and_gram_agree_with_dense() {
        let m = instrument(2, 7, 3).tensor_power(2).unwrap();
        let variants = vec![
            m.clone(),
            m.reduce_click(),
            m.reduce_indistinguishable().unwrap(),
            m.reduce_click().reduce_indistinguishable().unwrap(),
        ];
        for v in variants {
            let a = v.dense_real().unwrap();
            let g = v.gram().unwrap();
            assert!((&g - a.transpose() * &a).norm() < 1e-12 * g.norm());
            let x: Vec<f64> = (0..v.cols()).map(|i| (i as f64 * 0.37).sin()).collect();
            let y: Vec<f64> = (0..v.rows()).map(|i| (i as f64 * 0.11).cos()).collect();
            let ax = v.apply(&x).unwrap();
            let dense_ax = &a * DVector::from_vec(x.clone());
            for (p, q) in ax.iter().zip(dense_ax.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
            let aty = v.adjoint(&y).unwrap();
            let dense_aty = a.transpose() * DVector::from_vec(y);
            for (p, q) in aty.iter().zip(dense_aty.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resource_guard_reports_bytes() {
        let m = instrument(3, 50, 1);
        match m.tensor_power(6) {
            Err(Error::Resource { required_bytes, .. }) => {
                assert!(required_bytes > DEFAULT_MEMORY_CAP)
            }
            other => panic!("expected resource error, got {other:?}"),
        }
        let small = m.clone().with_memory_cap(1000);
        assert!(matches!(small.dense_real(), Err(Error::Resource { .. })));
    }

    #[test]
    fn file_round_trip() {
        let m = instrument(3, 12, 2).tensor_power(2).unwrap().reduce_click();
        let back =
            InstrumentMatrix::from_file(&MatrixFile::from_text(&m.to_file().to_text()).unwrap())
                .unwrap();
        assert_eq!(back.single_complex(), m.single_complex());
        assert_eq!(
            (back.rows(), back.cols(), back.photons()),
            (m.rows(), m.cols(), 2)
        );
        assert!(back.is_click());
    }
}
