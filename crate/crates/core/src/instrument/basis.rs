//! Orthonormal Hermitian operator basis and real coordinates of density matrices.
//!
//! Slot `k = u·D + v` holds
//!
//! ```text
//! u = v : E_uu                      coordinate ρ_uu
//! u < v : (E_uv + E_vu)/√2          coordinate √2 Re ρ_uv
//! u > v : (i E_vu − i E_uv)/√2      coordinate √2 Im ρ_vu
//! ```
//!
//! N-photon coordinates use tensor products of these operators, indexed in
//! Kronecker order `(k₁,…,k_N)`.

use nalgebra::DMatrix;

use crate::linalg::mode_product;
use crate::C64;

/// Which part of ρ a slot measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Diagonal(usize),
    Real(usize, usize),
    Imag(usize, usize),
}

pub fn slot(dim: usize, k: usize) -> Slot {
    let (u, v) = (k / dim, k % dim);
    match u.cmp(&v) {
        std::cmp::Ordering::Equal => Slot::Diagonal(u),
        std::cmp::Ordering::Less => Slot::Real(u, v),
        std::cmp::Ordering::Greater => Slot::Imag(v, u),
    }
}

/// Unitary D²×D² matrix whose column k is the row-major vec of the k-th basis operator.
pub fn hermitian_basis(dim: usize) -> DMatrix<C64> {
    let n = dim * dim;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut b = DMatrix::zeros(n, n);
    for k in 0..n {
        match slot(dim, k) {
            Slot::Diagonal(u) => b[(u * dim + u, k)] = C64::new(1.0, 0.0),
            Slot::Real(u, v) => {
                b[(u * dim + v, k)] = C64::new(h, 0.0);
                b[(v * dim + u, k)] = C64::new(h, 0.0);
            }
            Slot::Imag(u, v) => {
                b[(u * dim + v, k)] = C64::new(0.0, h);
                b[(v * dim + u, k)] = C64::new(0.0, -h);
            }
        }
    }
    b
}

/// Reorders ρ[(i₁…i_N),(j₁…j_N)] into the pair tensor indexed by
/// `(i₁ D + j₁, …, i_N D + j_N)`, flattened row-major.
fn to_pair_tensor(rho: &DMatrix<C64>, dim: usize, photons: usize) -> Vec<C64> {
    let total = dim.pow(2 * photons as u32);
    let mut out = vec![C64::new(0.0, 0.0); total];
    for (p, slot) in out.iter_mut().enumerate() {
        let (i, j) = split_pair_index(p, dim, photons);
        *slot = rho[(i, j)];
    }
    out
}

fn split_pair_index(p: usize, dim: usize, photons: usize) -> (usize, usize) {
    let d2 = dim * dim;
    let (mut i, mut j) = (0, 0);
    let mut scale = 1;
    let mut rest = p;
    for _ in 0..photons {
        let pair = rest % d2;
        rest /= d2;
        i += (pair / dim) * scale;
        j += (pair % dim) * scale;
        scale *= dim;
    }
    (i, j)
}

/// Full real coordinates `c_(k₁…k_N) = Tr[(H_k₁ ⊗ … ⊗ H_k_N) ρ]`.
pub fn coordinates(rho: &DMatrix<C64>, dim: usize, photons: usize) -> Vec<f64> {
    let b_adj = hermitian_basis(dim).adjoint();
    let shape = vec![dim * dim; photons];
    let mut t = to_pair_tensor(rho, dim, photons);
    for mode in 0..photons {
        t = mode_product(&t, &shape, mode, &b_adj);
    }
    t.into_iter().map(|z| z.re).collect()
}

/// Inverse of [`coordinates`]: Σ c_k H_k, Hermitian by construction.
pub fn operator(coords: &[f64], dim: usize, photons: usize) -> DMatrix<C64> {
    let b = hermitian_basis(dim);
    let shape = vec![dim * dim; photons];
    let mut t: Vec<C64> = coords.iter().map(|&x| C64::new(x, 0.0)).collect();
    for mode in 0..photons {
        t = mode_product(&t, &shape, mode, &b);
    }
    let n = dim.pow(photons as u32);
    let mut rho = DMatrix::zeros(n, n);
    for (p, z) in t.into_iter().enumerate() {
        let (i, j) = split_pair_index(p, dim, photons);
        rho[(i, j)] = z;
    }
    crate::linalg::hermitian_part(&rho)
}
