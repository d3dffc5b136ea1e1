#![allow(dead_code)]

use fsmap::{parse_mapspec, FastSlowMapSpec, Jet, JetVector, MultiIndex};
use nalgebra::DMatrix;
use rand::Rng;

pub const FOLD: &str = "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n2 0 : 1\n0 1 : -1\n\
    [G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : -1\n";

/// Fold direction `x1`, slow `x2`, stable fast direction `x3` (multiplier 0.5).
pub const CONTACT_3D: &str = "dims 3 1\norder 4\nbase 0 0 0\n\
    [N 1 1]\n0 0 0 : 1\n0 0 1 : 0.2\n[N 2 1]\n1 0 0 : 0.1\n[N 3 2]\n0 0 0 : 1\n\
    [f 1]\n2 0 0 : 1\n0 1 0 : -1\n1 0 1 : 0.4\n3 0 0 : 0.3\n\
    [f 2]\n0 0 1 : -0.5\n1 1 0 : 0.3\n2 0 0 : 0.2\n\
    [G 1]\n0 0 0 0 : 0.1\n0 1 0 0 : 0.2\n[G 2]\n0 0 0 0 : -1\n1 0 0 0 : 0.3\n0 0 0 1 : 0.1\n\
    [G 3]\n1 0 0 0 : 0.2\n";

pub fn spec(text: &str) -> FastSlowMapSpec {
    parse_mapspec(text).expect("test spec parses").spec
}

pub fn planar(f: &str, g1: f64, g2: f64) -> FastSlowMapSpec {
    spec(&format!(
        "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n{f}[G 1]\n0 0 0 : {g1}\n[G 2]\n0 0 0 : {g2}\n"
    ))
}

pub fn fold() -> FastSlowMapSpec {
    spec(FOLD)
}

pub fn transcritical(lam: f64) -> FastSlowMapSpec {
    planar("2 0 : 1\n0 2 : -1\n", lam, 1.0)
}

pub fn pitchfork(lam: f64, g0: f64) -> FastSlowMapSpec {
    planar("1 1 : 1\n3 0 : -1\n", lam, g0)
}

/// Random nilpotent matrix `S J S⁻¹` with `J` a direct sum of Jordan
/// blocks and `S` unit upper triangular.
pub fn random_nilpotent<R: Rng>(rng: &mut R, m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, m);
    for i in 0..m - 1 {
        if rng.gen_bool(0.7) {
            j[(i, i + 1)] = rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    let mut s = DMatrix::identity(m, m);
    for r in 0..m {
        for c in r + 1..m {
            s[(r, c)] = rng.gen_range(-0.5..0.5);
        }
    }
    let s_inv = s.clone().try_inverse().expect("unit triangular");
    &s * j * s_inv
}

/// Random polynomial field with nilpotent linear part and coefficients in
/// `[-1, 1]` up to `degree`.
pub fn random_field<R: Rng>(rng: &mut R, m: usize, degree: u32, order: u32) -> JetVector {
    let lin = random_nilpotent(rng, m);
    let base = JetVector::linear(&lin, order);
    let comps = base
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for d in 2..=degree {
                for idx in fsmap::jet::monomials_of_degree(m, d) {
                    if rng.gen_bool(0.6) {
                        c.add_term(idx, rng.gen_range(-1.0..1.0));
                    }
                }
            }
            c
        })
        .collect();
    JetVector::new(comps).expect("consistent shapes")
}

/// `n` points on the sphere of radius `s` in `m` dimensions, from fixed
/// directions so that clouds of different radii are similar.
pub fn sphere_directions<R: Rng>(rng: &mut R, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn monomial(m: usize, order: u32, exps: &[u32], c: f64) -> Jet {
    let mut j = Jet::zero(m, order);
    j.add_term(MultiIndex::new(exps.to_vec()), c);
    j
}
