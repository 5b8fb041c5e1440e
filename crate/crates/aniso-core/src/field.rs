//! Sampled complex fields on centered boxes, and their discrete Fourier
//! calculus.
//!
//! A [`Grid`] is a uniform lattice on `[-X, X)^n` with `P` points per axis
//! (`P` a power of two), spacing `h = 2X/P`, and the origin exactly on the
//! lattice at index `P/2`. The same struct describes a frequency lattice:
//! under the transform the dual grid has half-extent `P/(4X)` and spacing
//! `1/(2X)`, and the duality map is an involution.
//!
//! The transform convention matches the continuous normalization
//! `f^(xi) = ∫ f(x) e^{-2 pi i x.xi} dx` discretized as a Riemann sum:
//!
//! ```text
//! f^(xi_m) = h^n (-1)^{m_1+...+m_n} FFT[f][m mod P],   m in [-P/2, P/2)^n
//! ```
//!
//! so that (to rounding) the inverse is the mirror Riemann sum with the
//! frequency spacing, Plancherel holds exactly
//! (`h^n sum |f|^2 = hf^n sum |f^|^2`), and [`convolve`] equals `h^n` times
//! the centered circular Riemann convolution.
//!
//! Everything here is sequential, so outputs are byte-identical regardless
//! of how many worker threads the process owns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dilation::Dilation;
use crate::error::{Error, Result};

/// Highest spectral-derivative order the library hands out.
pub const MAX_DERIVATIVE_ORDER: usize = 6;

/// Relative boundary-mass threshold above which zero-extension of a dilated
/// field is considered unjustified.
pub const SUPPORT_EXIT_TOL: f64 = 1e-9;

/// Which domain a field's samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Space,
    Frequency,
}

impl DomainTag {
    fn name(self) -> &'static str {
        match self {
            DomainTag::Space => "space",
            DomainTag::Frequency => "frequency",
        }
    }
}

/// A centered uniform lattice on `[-X, X)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    points: usize,
    half_extent: f64,
}

impl Grid {
    /// Validate and build: `dim in 1..=3`, `points` a power of two in
    /// `[8, 4096]`, positive finite `half_extent`.
    pub fn new(dim: usize, points: usize, half_extent: f64) -> Result<Grid> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension { dim });
        }
        if !points.is_power_of_two() || !(8..=4096).contains(&points) {
            return Err(Error::BadGrid {
                what: format!("points per axis = {points}: need a power of two in [8, 4096]"),
            });
        }
        if !(half_extent > 0.0) || !half_extent.is_finite() {
            return Err(Error::BadGrid {
                what: format!("half extent = {half_extent}: need a positive finite value"),
            });
        }
        Ok(Grid {
            dim,
            points,
            half_extent,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Box half-extent `X`.
    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Lattice spacing `h = 2X/P` (exact: division by a power of two).
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points as f64
    }

    /// Total number of lattice points `P^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The dual lattice: half-extent `P/(4X)`, same point count. Applying
    /// this twice returns the original grid.
    pub fn dual(&self) -> Grid {
        Grid {
            dim: self.dim,
            points: self.points,
            half_extent: self.points as f64 / (4.0 * self.half_extent),
        }
    }

    /// Row-major stride of `axis` (last axis contiguous).
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Multi-index of a flat index.
    pub fn multi_of_flat(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.points;
            rest /= self.points;
        }
        idx
    }

    /// Flat index of a multi-index.
    pub fn flat_of_multi(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (axis, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.points);
            flat = flat * self.points + i;
            let _ = axis;
        }
        flat
    }

    /// Physical coordinate of a multi-index: `x_i = -X + i h` per axis.
    pub fn coord(&self, idx: &[usize]) -> Vec<f64> {
        let h = self.spacing();
        idx.iter()
            .map(|&i| -self.half_extent + i as f64 * h)
            .collect()
    }

    /// Physical coordinate of a flat index, written into `out`.
    pub fn coord_into(&self, flat: usize, out: &mut [f64]) {
        let h = self.spacing();
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = -self.half_extent + (rest % self.points) as f64 * h;
            rest /= self.points;
        }
    }

    /// Fractional lattice position of a physical point: `u = (x + X)/h`.
    pub fn fractional_index(&self, x: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        x.iter().map(|&c| (c + self.half_extent) / h).collect()
    }
}

/// Complex samples of a function on a [`Grid`], tagged by domain.
#[derive(Debug, Clone)]
pub struct SampledField {
    grid: Grid,
    tag: DomainTag,
    data: Vec<Complex64>,
}

impl SampledField {
    /// Sample a closure at every lattice point.
    pub fn sample<F: FnMut(&[f64]) -> Complex64>(grid: &Grid, tag: DomainTag, mut f: F) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        let mut x = vec![0.0; grid.dim()];
        for flat in 0..grid.len() {
            grid.coord_into(flat, &mut x);
            data.push(f(&x));
        }
        SampledField {
            grid: grid.clone(),
            tag,
            data,
        }
    }

    /// The zero field.
    pub fn zeros(grid: &Grid, tag: DomainTag) -> Self {
        SampledField {
            grid: grid.clone(),
            tag,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Build from raw samples (row-major, length `grid.len()`).
    pub fn from_data(grid: &Grid, tag: DomainTag, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::BadGrid {
                what: format!("sample count {} != grid size {}", data.len(), grid.len()),
            });
        }
        Ok(SampledField {
            grid: grid.clone(),
            tag,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Value at a multi-index.
    pub fn value(&self, idx: &[usize]) -> Complex64 {
        self.data[self.grid.flat_of_multi(idx)]
    }

    pub(crate) fn expect_tag(&self, tag: DomainTag) -> Result<()> {
        if self.tag != tag {
            return Err(Error::TagMismatch {
                expected: tag.name(),
                got: self.tag.name(),
            });
        }
        Ok(())
    }

    fn expect_same_grid(&self, other: &SampledField) -> Result<()> {
        if self.grid != other.grid || self.tag != other.tag {
            return Err(Error::BadGrid {
                what: "fields live on different grids or domains".into(),
            });
        }
        Ok(())
    }

    /// Forward transform: a space field becomes its frequency samples on the
    /// dual grid, per the Riemann-sum normalization in the module docs.
    pub fn dft(&self) -> Result<SampledField> {
        self.expect_tag(DomainTag::Space)?;
        let data = transform(
            &self.grid,
            &self.data,
            Direction::Forward,
            self.grid.spacing(),
        );
        Ok(SampledField {
            grid: self.grid.dual(),
            tag: DomainTag::Frequency,
            data,
        })
    }

    /// Inverse transform: frequency samples back to the dual (space) grid.
    pub fn idft(&self) -> Result<SampledField> {
        self.expect_tag(DomainTag::Frequency)?;
        // The inverse Riemann sum carries the *frequency* spacing, which
        // equals 1/(P h_space): dual spacings multiply to 1/P, so the
        // round trip is exact without any further normalization.
        let data = transform(
            &self.grid,
            &self.data,
            Direction::Inverse,
            self.grid.spacing(),
        );
        Ok(SampledField {
            grid: self.grid.dual(),
            tag: DomainTag::Space,
            data,
        })
    }

    /// Pointwise product (same grid and domain).
    pub fn pointwise_mul(&self, other: &SampledField) -> Result<SampledField> {
        self.expect_same_grid(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(SampledField {
            grid: self.grid.clone(),
            tag: self.tag,
            data,
        })
    }

    /// Pointwise sum (same grid and domain).
    pub fn add(&self, other: &SampledField) -> Result<SampledField> {
        self.expect_same_grid(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(SampledField {
            grid: self.grid.clone(),
            tag: self.tag,
            data,
        })
    }

    /// Scalar multiple.
    pub fn scale(&self, c: Complex64) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            tag: self.tag,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Apply a function to every sample.
    pub fn map<F: FnMut(Complex64) -> Complex64>(&self, mut f: F) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            tag: self.tag,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Riemann `L^2` energy `h^n sum |v|^2`.
    pub fn l2_energy(&self) -> f64 {
        let cell = self.grid.spacing().powi(self.grid.dim() as i32);
        cell * self.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Riemann `L^p` quasi-norm `(h^n sum |v|^p)^{1/p}`, any `p > 0`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::BadExponent {
                what: format!("lp_norm needs finite p > 0, got {p}"),
            });
        }
        let cell = self.grid.spacing().powi(self.grid.dim() as i32);
        let sum: f64 = self.data.iter().map(|v| v.norm().powf(p)).sum();
        Ok((cell * sum).powf(1.0 / p))
    }

    /// Largest sample modulus.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    /// Largest sample modulus over the outermost lattice layer (any index 0
    /// or `P-1`). Used to decide whether zero-extension is justified.
    pub fn boundary_sup(&self) -> f64 {
        let p = self.grid.points();
        let mut best = 0.0f64;
        for (flat, v) in self.data.iter().enumerate() {
            let mut rest = flat;
            let mut on_edge = false;
            for _ in 0..self.grid.dim() {
                let i = rest % p;
                if i == 0 || i == p - 1 {
                    on_edge = true;
                    break;
                }
                rest /= p;
            }
            if on_edge {
                best = best.max(v.norm());
            }
        }
        best
    }
}

enum Direction {
    Forward,
    Inverse,
}

/// Shared core of `dft`/`idft`: per-axis strided FFT with centered index
/// remapping, alternating-sign phases, and the per-axis Riemann factor.
fn transform(grid: &Grid, input: &[Complex64], dir: Direction, spacing: f64) -> Vec<Complex64> {
    let p = grid.points();
    let half = (p / 2) as i64;
    let mut planner = FftPlanner::<f64>::new();
    let fft: Arc<dyn Fft<f64>> = match dir {
        Direction::Forward => planner.plan_fft_forward(p),
        Direction::Inverse => planner.plan_fft_inverse(p),
    };
    let mut data = input.to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); p];
    let mut out_line = vec![Complex64::new(0.0, 0.0); p];

    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let lines = data.len() / p;
        for line_id in 0..lines {
            let base = (line_id / stride) * (stride * p) + line_id % stride;
            match dir {
                Direction::Forward => {
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride];
                    }
                    fft.process(&mut line);
                    for (ip, out) in out_line.iter_mut().enumerate() {
                        let m = ip as i64 - half;
                        let k = m.rem_euclid(p as i64) as usize;
                        let sign = if m & 1 == 0 { spacing } else { -spacing };
                        *out = line[k] * sign;
                    }
                }
                Direction::Inverse => {
                    for v in line.iter_mut() {
                        *v = Complex64::new(0.0, 0.0);
                    }
                    for ip in 0..p {
                        let m = ip as i64 - half;
                        let k = m.rem_euclid(p as i64) as usize;
                        let sign = if m & 1 == 0 { 1.0 } else { -1.0 };
                        line[k] = data[base + ip * stride] * sign;
                    }
                    fft.process(&mut line);
                    // The inverse is the mirror Riemann sum: it carries the
                    // input (frequency) spacing, and the unnormalized P from
                    // the FFT pair is absorbed by h hf = 1/P.
                    for (j, out) in out_line.iter_mut().enumerate() {
                        *out = line[j] * spacing;
                    }
                }
            }
            for (ip, out) in out_line.iter().enumerate() {
                data[base + ip * stride] = *out;
            }
        }
    }
    data
}

/// Convolution via the transform: `idft(dft(f) . dft(g))`, which equals the
/// centered circular Riemann convolution `h^n sum_l f(x_l) g(x - x_l)`.
pub fn convolve(f: &SampledField, g: &SampledField) -> Result<SampledField> {
    f.expect_same_grid(g)?;
    f.expect_tag(DomainTag::Space)?;
    f.dft()?.pointwise_mul(&g.dft()?)?.idft()
}

/// Multiply a frequency field by the monomial `prod_a (2 pi i xi_a)^{beta_a}`.
///
/// This is the transform-side image of the partial derivative `D^beta`;
/// orders above [`MAX_DERIVATIVE_ORDER`] are refused.
pub fn apply_frequency_monomial(fhat: &SampledField, beta: &[u32]) -> Result<SampledField> {
    fhat.expect_tag(DomainTag::Frequency)?;
    if beta.len() != fhat.grid().dim() {
        return Err(Error::BadGrid {
            what: format!(
                "multi-index length {} != dimension {}",
                beta.len(),
                fhat.grid().dim()
            ),
        });
    }
    let order: u32 = beta.iter().sum();
    if order as usize > MAX_DERIVATIVE_ORDER {
        return Err(Error::DerivativeOrderExceeded {
            order: order as usize,
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    let grid = fhat.grid().clone();
    let mut data = Vec::with_capacity(grid.len());
    let mut xi = vec![0.0; grid.dim()];
    let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    for (flat, &v) in fhat.data().iter().enumerate() {
        grid.coord_into(flat, &mut xi);
        let mut w = Complex64::new(1.0, 0.0);
        for (a, &b) in beta.iter().enumerate() {
            for _ in 0..b {
                w *= two_pi_i * xi[a];
            }
        }
        data.push(v * w);
    }
    Ok(SampledField {
        grid,
        tag: DomainTag::Frequency,
        data,
    })
}

/// Spectral partial derivative `D^beta f` of a space field: transform,
/// multiply by the frequency monomial, transform back.
pub fn spectral_derivative(f: &SampledField, beta: &[u32]) -> Result<SampledField> {
    apply_frequency_monomial(&f.dft()?, beta)?.idft()
}

/// Rescale a space field through the dilation: `g(x) = b^k f(A^k x)`.
///
/// When `A^k` has integer entries the pullback maps lattice to lattice and
/// sampling is exact; otherwise multilinear interpolation is used. Points
/// whose image leaves the box are extended by zero; the extension is an
/// error ([`Error::ScaleOutOfRange`]) when `f` carries boundary mass larger
/// than [`SUPPORT_EXIT_TOL`] times its sup.
pub fn dilate_field(f: &SampledField, dil: &Dilation, k: i64) -> Result<SampledField> {
    f.expect_tag(DomainTag::Space)?;
    let grid = f.grid().clone();
    let n = grid.dim();
    if dil.dim() != n {
        return Err(Error::BadGrid {
            what: format!("dilation dimension {} != grid dimension {}", dil.dim(), n),
        });
    }
    let m = dil.power(k)?;
    let factor = dil.b().powi(k as i32);
    let p = grid.points();
    let half = (p / 2) as i64;

    // Lattice compatibility: A^k x_i = h * M (i - P/2) stays on the lattice
    // exactly when M has integer entries.
    let mut integral = true;
    for v in m.iter() {
        if (v - v.round()).abs() > 1e-9 {
            integral = false;
            break;
        }
    }

    let mut data = Vec::with_capacity(grid.len());
    let mut exited = false;
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut idx = vec![0i64; n];

    for flat in 0..grid.len() {
        grid.coord_into(flat, &mut x);
        let mut rest = flat;
        for axis in (0..n).rev() {
            idx[axis] = (rest % p) as i64 - half;
            rest /= p;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m[(i, j)] * x[j];
            }
            *yi = acc;
        }
        let v = if integral {
            // Exact index map: j = M (i - P/2) + P/2 per axis.
            let mut target = 0usize;
            let mut inside = true;
            for i in 0..n {
                let mut acc = 0.0f64;
                for (j, &ij) in idx.iter().enumerate() {
                    acc += m[(i, j)].round() * ij as f64;
                }
                let ti = acc.round() as i64 + half;
                if ti < 0 || ti >= p as i64 {
                    inside = false;
                    break;
                }
                target = target * p + ti as usize;
            }
            if inside {
                f.data()[target]
            } else {
                exited = true;
                Complex64::new(0.0, 0.0)
            }
        } else {
            // Multilinear interpolation at the fractional lattice position.
            let u = grid.fractional_index(&y);
            let mut base = vec![0i64; n];
            let mut frac = vec![0.0; n];
            let mut inside = true;
            for a in 0..n {
                let fl = u[a].floor();
                base[a] = fl as i64;
                frac[a] = u[a] - fl;
                if base[a] < 0 || base[a] + 1 >= p as i64 {
                    inside = false;
                    break;
                }
            }
            if inside {
                let mut acc = Complex64::new(0.0, 0.0);
                for corner in 0..(1usize << n) {
                    let mut w = 1.0;
                    let mut target = 0usize;
                    for a in 0..n {
                        let hi = (corner >> a) & 1 == 1;
                        w *= if hi { frac[a] } else { 1.0 - frac[a] };
                        let ia = base[a] + if hi { 1 } else { 0 };
                        target = target * p + ia as usize;
                    }
                    // target accumulated axis 0 first = row-major order.
                    acc += f.data()[target] * w;
                }
                acc
            } else {
                exited = true;
                Complex64::new(0.0, 0.0)
            }
        };
        data.push(v * factor);
    }

    if exited {
        let sup = f.sup_norm();
        let edge = f.boundary_sup();
        if sup > 0.0 && edge > SUPPORT_EXIT_TOL * sup {
            return Err(Error::ScaleOutOfRange {
                k,
                support: edge,
                extent: grid.half_extent(),
            });
        }
    }

    Ok(SampledField {
        grid,
        tag: DomainTag::Space,
        data,
    })
}

/// Sidecar header describing a binary field file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub points: usize,
    pub half_extent: f64,
    pub domain: DomainTag,
    pub count: usize,
    /// Sample encoding: interleaved little-endian f64 (re, im) pairs.
    pub format: String,
}

/// Encoding tag written into every sidecar.
pub const FIELD_FORMAT: &str = "complex128-le";

/// Write `<base>.bin` (interleaved little-endian f64 re/im pairs, row-major)
/// and `<base>.json` (the [`FieldHeader`] sidecar).
pub fn write_field(field: &SampledField, base: &Path) -> Result<()> {
    let header = FieldHeader {
        dim: field.grid().dim(),
        points: field.grid().points(),
        half_extent: field.grid().half_extent(),
        domain: field.tag(),
        count: field.data().len(),
        format: FIELD_FORMAT.to_string(),
    };
    let mut bin = BufWriter::new(File::create(base.with_extension("bin"))?);
    for v in field.data() {
        bin.write_all(&v.re.to_le_bytes())?;
        bin.write_all(&v.im.to_le_bytes())?;
    }
    bin.flush()?;
    let json = File::create(base.with_extension("json"))?;
    serde_json::to_writer_pretty(BufWriter::new(json), &header)?;
    Ok(())
}

/// Read a field written by [`write_field`].
pub fn read_field(base: &Path) -> Result<SampledField> {
    let header: FieldHeader =
        serde_json::from_reader(BufReader::new(File::open(base.with_extension("json"))?))?;
    if header.format != FIELD_FORMAT {
        return Err(Error::BadGrid {
            what: format!("unknown field format {:?}", header.format),
        });
    }
    let grid = Grid::new(header.dim, header.points, header.half_extent)?;
    if header.count != grid.len() {
        return Err(Error::BadGrid {
            what: format!("header count {} != grid size {}", header.count, grid.len()),
        });
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(base.with_extension("bin"))?).read_to_end(&mut bytes)?;
    if bytes.len() != 16 * grid.len() {
        return Err(Error::BadGrid {
            what: format!(
                "binary payload is {} bytes, expected {}",
                bytes.len(),
                16 * grid.len()
            ),
        });
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..16].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    SampledField::from_data(&grid, header.domain, data)
}

/// Write a CSV slice of the field: the axes in `fixed` are pinned to the
/// given indices, the remaining axes sweep the lattice. Columns are the free
/// coordinates followed by `re,im`, printed with full float precision.
pub fn write_slice_csv<W: IoWrite>(field: &SampledField, fixed: &[(usize, usize)], mut w: W) -> Result<()> {
    let grid = field.grid();
    let n = grid.dim();
    for &(axis, idx) in fixed {
        if axis >= n || idx >= grid.points() {
            return Err(Error::BadGrid {
                what: format!("pinned axis {axis} at index {idx} is out of range"),
            });
        }
    }
    let free: Vec<usize> = (0..n).filter(|a| !fixed.iter().any(|&(fa, _)| fa == *a)).collect();
    let mut header: Vec<String> = free.iter().map(|a| format!("x{a}")).collect();
    header.push("re".into());
    header.push("im".into());
    writeln!(w, "{}", header.join(","))?;

    let p = grid.points();
    let mut idx = vec![0usize; n];
    for &(axis, i) in fixed {
        idx[axis] = i;
    }
    let rows = p.pow(free.len() as u32);
    for row in 0..rows {
        let mut rest = row;
        for &a in free.iter().rev() {
            idx[a] = rest % p;
            rest /= p;
        }
        let x = grid.coord(&idx);
        let v = field.value(&idx);
        let mut cols: Vec<String> = free.iter().map(|&a| format!("{:.17e}", x[a])).collect();
        cols.push(format!("{:.17e}", v.re));
        cols.push(format!("{:.17e}", v.im));
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::new_dilation;
    use rand::Rng;

    fn gauss(x: &[f64]) -> Complex64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::new((-std::f64::consts::PI * r2).exp(), 0.0)
    }

    #[test]
    fn grid_geometry_and_duality() {
        let g = Grid::new(2, 256, 8.0).unwrap();
        assert_eq!(g.spacing(), 1.0 / 16.0);
        assert_eq!(g.len(), 65536);
        // Origin is exactly on the lattice.
        assert_eq!(g.coord(&[128, 128]), vec![0.0, 0.0]);
        // Duality is an involution; here X = 8, P = 256 is self-dual.
        assert_eq!(g.dual().half_extent(), 8.0);
        assert_eq!(g.dual().dual(), g);
        let g2 = Grid::new(1, 64, 5.0).unwrap();
        assert_eq!(g2.dual().half_extent(), 64.0 / 20.0);
        assert_eq!(g2.dual().dual(), g2);
        // Validation.
        assert!(Grid::new(4, 64, 1.0).is_err());
        assert!(Grid::new(2, 100, 1.0).is_err());
        assert!(Grid::new(2, 64, 0.0).is_err());
    }

    #[test]
    fn dft_of_gaussian_matches_closed_form() {
        // exp(-pi x^2) is its own transform; discretization error is below
        // rounding at X = 8 (tails ~ 1e-87).
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, gauss);
        let fhat = f.dft().unwrap();
        let mut xi = [0.0];
        let mut worst = 0.0f64;
        for (flat, v) in fhat.data().iter().enumerate() {
            fhat.grid().coord_into(flat, &mut xi);
            worst = worst.max((v - gauss(&xi)).norm());
        }
        assert!(worst < 1e-12, "sup error {worst}");
    }

    #[test]
    fn dft_of_gaussian_matches_closed_form_2d() {
        let g = Grid::new(2, 128, 8.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, gauss);
        let fhat = f.dft().unwrap();
        let mut xi = [0.0, 0.0];
        let mut worst = 0.0f64;
        for (flat, v) in fhat.data().iter().enumerate() {
            fhat.grid().coord_into(flat, &mut xi);
            worst = worst.max((v - gauss(&xi)).norm());
        }
        assert!(worst < 1e-12, "sup error {worst}");
    }

    #[test]
    fn round_trip_and_plancherel() {
        let g = Grid::new(2, 64, 4.0).unwrap();
        let mut rng = crate::sampling::seeded_rng(7);
        let f = SampledField::sample(&g, DomainTag::Space, |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let fhat = f.dft().unwrap();
        let back = fhat.idft().unwrap();
        let mut worst = 0.0f64;
        for (a, b) in f.data().iter().zip(back.data()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-13, "round-trip error {worst}");
        // Plancherel is an algebraic identity of the normalization.
        let e_space = f.l2_energy();
        let e_freq = fhat.l2_energy();
        assert!(
            (e_space - e_freq).abs() < 1e-12 * e_space,
            "{e_space} vs {e_freq}"
        );
    }

    #[test]
    fn lattice_shift_becomes_modulation() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, gauss);
        let shifted = SampledField::sample(&g, DomainTag::Space, |x| gauss(&[x[0] - 1.0]));
        let fhat = f.dft().unwrap();
        let shat = shifted.dft().unwrap();
        let mut xi = [0.0];
        let mut worst = 0.0f64;
        for (flat, v) in shat.data().iter().enumerate() {
            shat.grid().coord_into(flat, &mut xi);
            let phase = Complex64::new(0.0, -2.0 * std::f64::consts::PI * xi[0]).exp();
            worst = worst.max((v - fhat.data()[flat] * phase).norm());
        }
        assert!(worst < 1e-12, "sup error {worst}");
    }

    #[test]
    fn convolve_matches_direct_circular_sum() {
        let g = Grid::new(1, 16, 2.0).unwrap();
        let mut rng = crate::sampling::seeded_rng(11);
        let f = SampledField::sample(&g, DomainTag::Space, |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let gg = SampledField::sample(&g, DomainTag::Space, |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let conv = convolve(&f, &gg).unwrap();
        let p = 16usize;
        let h = g.spacing();
        // Centered convention: g is evaluated at the periodized coordinate
        // x_j - x_l, whose lattice index is (j - l) + P/2 mod P.
        for j in 0..p {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..p {
                let d = (j as i64 - l as i64 + (p / 2) as i64).rem_euclid(p as i64) as usize;
                acc += f.data()[l] * gg.data()[d];
            }
            acc *= h;
            assert!(
                (acc - conv.data()[j]).norm() < 1e-13,
                "index {j}: {acc} vs {}",
                conv.data()[j]
            );
        }
    }

    #[test]
    fn convolve_gaussians_matches_closed_form() {
        // exp(-pi x^2) * exp(-pi x^2) = 2^{-1/2} exp(-pi x^2 / 2), per axis.
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, gauss);
        let conv = convolve(&f, &f).unwrap();
        let mut x = [0.0];
        let mut worst = 0.0f64;
        for (flat, v) in conv.data().iter().enumerate() {
            conv.grid().coord_into(flat, &mut x);
            let want = (0.5f64).sqrt() * (-0.5 * std::f64::consts::PI * x[0] * x[0]).exp();
            worst = worst.max((v - Complex64::new(want, 0.0)).norm());
        }
        assert!(worst < 1e-12, "sup error {worst}");
    }

    #[test]
    fn spectral_derivatives_of_gaussian() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, gauss);
        let d1 = spectral_derivative(&f, &[1]).unwrap();
        let d2 = spectral_derivative(&f, &[2]).unwrap();
        let pi = std::f64::consts::PI;
        let mut x = [0.0];
        let (mut w1, mut w2) = (0.0f64, 0.0f64);
        for flat in 0..g.len() {
            g.coord_into(flat, &mut x);
            let f0 = gauss(&x).re;
            let want1 = -2.0 * pi * x[0] * f0;
            let want2 = (4.0 * pi * pi * x[0] * x[0] - 2.0 * pi) * f0;
            w1 = w1.max((d1.data()[flat] - Complex64::new(want1, 0.0)).norm());
            w2 = w2.max((d2.data()[flat] - Complex64::new(want2, 0.0)).norm());
        }
        assert!(w1 < 1e-9, "first derivative sup error {w1}");
        assert!(w2 < 1e-8, "second derivative sup error {w2}");
        // Order cap.
        assert!(matches!(
            spectral_derivative(&f, &[7]),
            Err(Error::DerivativeOrderExceeded { .. })
        ));
    }

    #[test]
    fn dilate_contracting_power_matches_closed_form() {
        // k = -1 for A = 2I: g(x) = b^{-1} f(x/2), everything stays inside.
        // A^{-1} = I/2 is not lattice-compatible: even multi-indices map to
        // lattice points (exact), odd ones interpolate (second order in h).
        let d = new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], None).unwrap();
        let g = Grid::new(2, 128, 8.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, gauss);
        let dil = dilate_field(&f, &d, -1).unwrap();
        let mut x = [0.0, 0.0];
        let (mut worst_even, mut worst) = (0.0f64, 0.0f64);
        for flat in 0..g.len() {
            g.coord_into(flat, &mut x);
            let want = 0.25 * gauss(&[x[0] / 2.0, x[1] / 2.0]).re;
            let err = (dil.data()[flat] - Complex64::new(want, 0.0)).norm();
            let idx = g.multi_of_flat(flat);
            if idx.iter().all(|i| i % 2 == 0) {
                worst_even = worst_even.max(err);
            }
            worst = worst.max(err);
        }
        assert!(worst_even < 1e-15, "even sub-lattice error {worst_even}");
        assert!(worst < 1e-2, "sup error {worst}");
    }

    #[test]
    fn inverse_is_exact_off_the_self_dual_grid() {
        // Grids with 4 X^2 != P have h != hf, so any misplaced 1/P in the
        // inverse normalization shows up as a pure scale error here (it
        // cancels identically when h = hf, which every self-dual test hides).
        let g = Grid::new(1, 64, 8.0).unwrap();
        assert!((g.spacing() - 0.25).abs() < 1e-15);
        assert!((g.dual().spacing() - 1.0 / 16.0).abs() < 1e-15);

        // Analytic inverse: sampling a Gaussian narrow enough to vanish at
        // the frequency box edge (the flat Gaussian's tail at |xi| = 2 is
        // ~3e-6 and would dominate) and inverting must reproduce its exact
        // transform (1/2) e^{-pi x^2 / 4}.
        let fhat = SampledField::sample(&g.dual(), DomainTag::Frequency, |xi| {
            Complex64::new((-4.0 * std::f64::consts::PI * xi[0] * xi[0]).exp(), 0.0)
        });
        let f = fhat.idft().unwrap();
        let mut x = [0.0];
        let mut worst = 0.0f64;
        for (flat, v) in f.data().iter().enumerate() {
            f.grid().coord_into(flat, &mut x);
            let want = 0.5 * (-std::f64::consts::PI * x[0] * x[0] / 4.0).exp();
            worst = worst.max((v - Complex64::new(want, 0.0)).norm());
        }
        assert!(worst < 1e-12, "analytic inverse error {worst}");

        // Round trip and energy identity on a 2-d non-self-dual grid.
        let g2 = Grid::new(2, 32, 3.0).unwrap();
        let mut rng = crate::sampling::seeded_rng(11);
        let f2 = SampledField::sample(&g2, DomainTag::Space, |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let back = f2.dft().unwrap().idft().unwrap();
        let mut worst2 = 0.0f64;
        for (a, b) in f2.data().iter().zip(back.data()) {
            worst2 = worst2.max((a - b).norm());
        }
        assert!(worst2 < 1e-13, "round-trip error {worst2}");
        let (e_s, e_f) = (f2.l2_energy(), f2.dft().unwrap().l2_energy());
        assert!(
            (e_s - e_f).abs() < 1e-12 * e_s,
            "energy identity broken: {e_s} vs {e_f}"
        );
    }

    #[test]
    fn dilate_expanding_power_is_lattice_exact() {
        // Narrow bump: zero-extension beyond the box is exact to f64.
        let d = new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], None).unwrap();
        let g = Grid::new(2, 128, 8.0).unwrap();
        let narrow = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-4.0 * std::f64::consts::PI * r2).exp(), 0.0)
        };
        let f = SampledField::sample(&g, DomainTag::Space, narrow);
        let dil = dilate_field(&f, &d, 1).unwrap();
        let mut x = [0.0, 0.0];
        let mut worst = 0.0f64;
        for flat in 0..g.len() {
            g.coord_into(flat, &mut x);
            let want = 4.0 * narrow(&[2.0 * x[0], 2.0 * x[1]]).re;
            worst = worst.max((dil.data()[flat] - Complex64::new(want, 0.0)).norm());
        }
        assert!(worst < 1e-13, "sup error {worst}");
    }

    #[test]
    fn dilate_rejects_unjustified_zero_extension() {
        let d = new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], None).unwrap();
        let g = Grid::new(2, 64, 8.0).unwrap();
        let wide = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / 50.0).exp(), 0.0)
        };
        let f = SampledField::sample(&g, DomainTag::Space, wide);
        assert!(matches!(
            dilate_field(&f, &d, 1),
            Err(Error::ScaleOutOfRange { .. })
        ));
    }

    #[test]
    fn dilate_interpolates_non_lattice_maps() {
        // A = 1.5 I is expansive but not lattice-compatible: multilinear
        // interpolation, second-order accurate in h (error drops ~4x when
        // the lattice is refined 2x).
        let d = new_dilation(&[vec![1.5, 0.0], vec![0.0, 1.5]], None).unwrap();
        let worst_at = |points: usize| {
            let g = Grid::new(2, points, 8.0).unwrap();
            let f = SampledField::sample(&g, DomainTag::Space, gauss);
            let dil = dilate_field(&f, &d, 1).unwrap();
            let mut x = [0.0, 0.0];
            let mut worst = 0.0f64;
            for flat in 0..g.len() {
                g.coord_into(flat, &mut x);
                let want = 2.25 * gauss(&[1.5 * x[0], 1.5 * x[1]]).re;
                worst = worst.max((dil.data()[flat] - Complex64::new(want, 0.0)).norm());
            }
            worst
        };
        let coarse = worst_at(256);
        let fine = worst_at(512);
        assert!(coarse < 2e-2, "sup error at P=256: {coarse}");
        assert!(fine < coarse / 3.0, "no quadratic refinement: {coarse} -> {fine}");
    }

    #[test]
    fn io_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("field");
        let g = Grid::new(2, 16, 3.0).unwrap();
        let mut rng = crate::sampling::seeded_rng(3);
        let f = SampledField::sample(&g, DomainTag::Frequency, |_| {
            Complex64::new(rng.gen(), rng.gen())
        });
        write_field(&f, &base).unwrap();
        let back = read_field(&base).unwrap();
        assert_eq!(back.tag(), DomainTag::Frequency);
        assert_eq!(back.grid(), f.grid());
        for (a, b) in f.data().iter().zip(back.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn csv_slice_has_expected_shape() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let f = SampledField::sample(&g, DomainTag::Space, |x| {
            Complex64::new(x[0] + 10.0 * x[1], 0.0)
        });
        let mut buf = Vec::new();
        write_slice_csv(&f, &[(1, 4)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,re,im");
        assert_eq!(lines.len(), 9);
        // Row at index 4 of axis 0: x0 = -1 + 4/4 = 0, pinned x1 = 0.
        let cols: Vec<&str> = lines[5].split(',').collect();
        assert_eq!(cols[0].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[1].parse::<f64>().unwrap(), 0.0);
        // Full-grid slice (nothing pinned) has P^2 rows.
        let mut buf2 = Vec::new();
        write_slice_csv(&f, &[], &mut buf2).unwrap();
        assert_eq!(String::from_utf8(buf2).unwrap().lines().count(), 65);
    }

    #[test]
    fn tag_mismatch_is_rejected() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let f = SampledField::zeros(&g, DomainTag::Frequency);
        assert!(matches!(f.dft(), Err(Error::TagMismatch { .. })));
        let s = SampledField::zeros(&g, DomainTag::Space);
        assert!(matches!(s.idft(), Err(Error::TagMismatch { .. })));
        assert!(matches!(
            apply_frequency_monomial(&s, &[1]),
            Err(Error::TagMismatch { .. })
        ));
        assert!(s.pointwise_mul(&f).is_err());
    }

    #[test]
    fn repeated_transforms_are_deterministic() {
        let g = Grid::new(2, 64, 4.0).unwrap();
        let mut rng = crate::sampling::seeded_rng(19);
        let f = SampledField::sample(&g, DomainTag::Space, |_| {
            Complex64::new(rng.gen(), rng.gen())
        });
        let a = f.dft().unwrap();
        let b = f.dft().unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }
}
