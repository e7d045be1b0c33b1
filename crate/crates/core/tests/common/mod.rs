#![allow(dead_code)]

use altproj::numerics::DenseMatrix;
use altproj::projections::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn dense(m: DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::new(m).unwrap()
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DenseMatrix {
    let m = gaussian(rng, n, n, scale);
    dense((&m + m.transpose()) * 0.5)
}

/// `rows×cols` matrix with orthonormal columns (`rows ≥ cols`).
pub fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    gaussian(rng, rows, cols, 1.0)
        .qr()
        .q()
        .columns(0, cols)
        .into_owned()
}

/// A built-in set together with samplers for arbitrary inputs and for members.
pub struct Case {
    pub projector: Box<dyn Projector>,
    pub input: Box<dyn Fn(&mut ChaCha8Rng) -> DenseMatrix>,
    pub member: Box<dyn Fn(&mut ChaCha8Rng) -> DenseMatrix>,
}

fn vector_input(dim: usize) -> Box<dyn Fn(&mut ChaCha8Rng) -> DenseMatrix> {
    Box::new(move |r| dense(gaussian(r, dim, 1, 3.0)))
}

pub fn box_case(rng: &mut ChaCha8Rng, dim: usize) -> Case {
    let lower: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper: Vec<f64> = lower
        .iter()
        .map(|l| l + rng.random_range(0.0..2.0))
        .collect();
    let set = BoxSet::new(
        DenseMatrix::column_vector(&lower).unwrap(),
        DenseMatrix::column_vector(&upper).unwrap(),
    )
    .unwrap();
    Case {
        projector: Box::new(set),
        input: vector_input(dim),
        member: Box::new(move |r| {
            let v: Vec<f64> = lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| if l == u { *l } else { r.random_range(*l..*u) })
                .collect();
            DenseMatrix::column_vector(&v).unwrap()
        }),
    }
}

pub fn oriented_box_case(rng: &mut ChaCha8Rng, dim: usize) -> Case {
    let frame = orthonormal(rng, dim, dim);
    let lower: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper: Vec<f64> = lower
        .iter()
        .map(|l| l + rng.random_range(0.1..2.0))
        .collect();
    let set = OrientedBox::new(dense(frame), lower.clone(), upper.clone()).unwrap();
    let sampler = set.clone();
    Case {
        projector: Box::new(set),
        input: vector_input(dim),
        member: Box::new(move |r| {
            let u: Vec<f64> = lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| r.random_range(*l..*u))
                .collect();
            sampler.point_from_coords(&u)
        }),
    }
}

pub fn halfspace_case(rng: &mut ChaCha8Rng, dim: usize) -> Case {
    let normal = gaussian(rng, dim, 1, 1.0);
    let offset = rng.random_range(-1.0..1.0);
    let set = HalfSpace::new(dense(normal.clone()), offset).unwrap();
    Case {
        projector: Box::new(set),
        input: vector_input(dim),
        member: Box::new(move |r| {
            let z = gaussian(r, dim, 1, 3.0);
            let excess = normal.dot(&z) - offset + r.random_range(0.0..1.0);
            dense(&z - &normal * (excess.max(0.0) / normal.norm_squared()))
        }),
    }
}

pub fn affine_case(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> Case {
    let basis = gaussian(rng, dim, k, 1.0);
    let point = gaussian(rng, dim, 1, 1.0);
    let set = AffineSet::new(dense(basis.clone()), dense(point.clone())).unwrap();
    Case {
        projector: Box::new(set),
        input: vector_input(dim),
        member: Box::new(move |r| dense(&point + &basis * gaussian(r, k, 1, 3.0))),
    }
}

pub fn column_norm_case(rng: &mut ChaCha8Rng, n: usize, l: usize) -> Case {
    let c: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..3.0)).collect();
    let targets = ColumnNormTargets::new(c.clone()).unwrap();
    Case {
        projector: Box::new(ColumnNormSet::new(n, targets).unwrap()),
        input: Box::new(move |r| dense(gaussian(r, n, l, 2.0))),
        member: Box::new(move |r| {
            let mut m = gaussian(r, n, l, 1.0);
            for (j, cj) in c.iter().enumerate() {
                let norm = m.column(j).norm();
                m.column_mut(j).scale_mut(cj.sqrt() / norm);
            }
            dense(m)
        }),
    }
}

pub fn tight_frame_case(rng: &mut ChaCha8Rng, n: usize, l: usize) -> Case {
    let a = rng.random_range(0.5..3.0);
    Case {
        projector: Box::new(TightFrameSet::new(n, l, a).unwrap()),
        input: Box::new(move |r| dense(gaussian(r, n, l, 2.0))),
        member: Box::new(move |r| dense(orthonormal(r, l, n).transpose() * a.sqrt())),
    }
}

pub fn gram_tight_case(rng: &mut ChaCha8Rng, l: usize, n: usize) -> Case {
    let a = rng.random_range(0.5..3.0);
    Case {
        projector: Box::new(GramTightSet::new(l, n, a).unwrap()),
        input: Box::new(move |r| symmetric(r, l, 2.0)),
        member: Box::new(move |r| {
            let q = orthonormal(r, l, n);
            let g = &q * q.transpose() * a;
            dense((&g + g.transpose()) * 0.5)
        }),
    }
}

pub fn gram_coherence_case(rng: &mut ChaCha8Rng, l: usize) -> Case {
    let xi = rng.random_range(0.1..0.9);
    Case {
        projector: Box::new(GramCoherenceSet::new(l, xi).unwrap()),
        input: Box::new(move |r| symmetric(r, l, 1.0)),
        member: Box::new(move |r| {
            let mut m = DMatrix::identity(l, l);
            for i in 0..l {
                for j in i + 1..l {
                    let v = r.random_range(-xi..=xi);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            dense(m)
        }),
    }
}

/// One case per built-in projector.
pub fn all_cases(seed: u64) -> Vec<Case> {
    let mut r = rng(seed);
    vec![
        box_case(&mut r, 6),
        oriented_box_case(&mut r, 5),
        halfspace_case(&mut r, 4),
        affine_case(&mut r, 5, 2),
        column_norm_case(&mut r, 3, 5),
        tight_frame_case(&mut r, 3, 5),
        gram_tight_case(&mut r, 6, 3),
        gram_coherence_case(&mut r, 5),
    ]
}
