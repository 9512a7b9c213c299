//! Dense complex matrix helpers: the matrix exponential (scaling and squaring
//! with Padé approximants), Kronecker products and Hermitian spectra.
//!
//! Matrices are `ndarray::Array2<Complex64>`. Linear solves and eigenvalues
//! are delegated to `nalgebra`.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Result, SptError};

pub type CMatrix = Array2<Complex64>;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

// Higham (2005), Table 2.3: largest 1-norm for which the degree-m Padé
// approximant reaches unit roundoff in double precision.
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(a: &CMatrix) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Conjugate transpose.
pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
        block.zip_mut_with(b, |o, &y| *o = x * y);
    }
    out
}

fn to_nalgebra(a: &CMatrix) -> DMatrix<Complex64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<Complex64>) -> CMatrix {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Solves `a x = b` for a square `a` by LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let lu = to_nalgebra(a).lu();
    lu.solve(&to_nalgebra(b))
        .map(|x| from_nalgebra(&x))
        .ok_or_else(|| SptError::Numerical("singular matrix in linear solve".into()))
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the lower
/// triangle is trusted; callers should pass a Hermitian matrix.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = to_nalgebra(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn weighted_sum(terms: &[(&CMatrix, f64)], n: usize) -> CMatrix {
    let mut out = Array2::zeros((n, n));
    for (m, w) in terms {
        out.scaled_add(Complex64::new(*w, 0.0), *m);
    }
    out
}

/// Low-degree Padé numerator/denominator pair `(U, V)` with
/// `exp(A) ≈ (V - U)^{-1} (V + U)`.
fn pade_low(a: &CMatrix, powers: &[CMatrix], b: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let eye = identity(n);
    // powers = [A², A⁴, ...]; odd coefficients go to U, even to V.
    let mut u_inner = eye.mapv(|z| z * b[1]);
    let mut v = eye.mapv(|z| z * b[0]);
    for (k, p) in powers.iter().enumerate() {
        u_inner.scaled_add(Complex64::new(b[2 * k + 3], 0.0), p);
        v.scaled_add(Complex64::new(b[2 * k + 2], 0.0), p);
    }
    (a.dot(&u_inner), v)
}

fn pade_13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let b = &PADE_13;
    let eye = identity(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let w1 = weighted_sum(&[(&a6, b[13]), (&a4, b[11]), (&a2, b[9])], n);
    let w2 = weighted_sum(&[(&a6, b[7]), (&a4, b[5]), (&a2, b[3]), (&eye, b[1])], n);
    let u = a.dot(&(a6.dot(&w1) + w2));

    let z1 = weighted_sum(&[(&a6, b[12]), (&a4, b[10]), (&a2, b[8])], n);
    let z2 = weighted_sum(&[(&a6, b[6]), (&a4, b[4]), (&a2, b[2]), (&eye, b[0])], n);
    let v = a6.dot(&z1) + z2;
    (u, v)
}

/// Matrix exponential by scaling and squaring (Higham 2005).
///
/// The Padé degree is picked from the 1-norm of `a`; above `THETA_13` the
/// matrix is scaled by `2^-s` and the approximant is squared `s` times.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let (r, c) = a.dim();
    if r != c {
        return Err(SptError::DimensionMismatch {
            expected: r,
            found: c,
        });
    }
    if r == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(SptError::Numerical("non-finite matrix passed to expm".into()));
    }

    let (u, v, squarings) = if norm <= THETA_3 {
        let a2 = a.dot(a);
        let (u, v) = pade_low(a, &[a2], &PADE_3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let a2 = a.dot(a);
        let a4 = a2.dot(&a2);
        let (u, v) = pade_low(a, &[a2, a4], &PADE_5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let a2 = a.dot(a);
        let a4 = a2.dot(&a2);
        let a6 = a4.dot(&a2);
        let (u, v) = pade_low(a, &[a2, a4, a6], &PADE_7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let a2 = a.dot(a);
        let a4 = a2.dot(&a2);
        let a6 = a4.dot(&a2);
        let a8 = a6.dot(&a2);
        let (u, v) = pade_low(a, &[a2, a4, a6, a8], &PADE_9);
        (u, v, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = a.mapv(|z| z * 2f64.powi(-s));
        let (u, v) = pade_13(&scaled);
        (u, v, s)
    };

    let mut x = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        x = x.dot(&x);
    }
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SptError::Numerical("matrix exponential overflowed".into()));
    }
    Ok(x)
}
