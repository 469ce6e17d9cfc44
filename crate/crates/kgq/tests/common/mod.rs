//! Random models shared by the storage tests and the acceptance harness.
#![allow(dead_code)]

use kgq_core::rgcn::{EmbeddingTable, Head, Hyper, LayerWeights, RgcnModel};
use kgq_core::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f32> {
    let special = [0.0, -0.0, f32::MIN_POSITIVE, 1e-38, f32::MAX, -1.5e-7];
    let data = (0..rows * cols)
        .map(|_| if rng.gen_bool(0.05) { special[rng.gen_range(0..special.len())] } else { rng.gen_range(-3.0..3.0) })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Random shapes; relation names include characters that need escaping.
pub fn random_model(seed: u64) -> RgcnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(0..5);
    let relations: Vec<String> = (0..r).map(|i| format!("http://ex.org/rel#{i}/x y")).chain((0..r).map(|i| format!("^http://ex.org/rel#{i}/x y"))).collect();
    let layers_n = rng.gen_range(1..4);
    let mut dims = vec![rng.gen_range(1..9)];
    for _ in 0..layers_n {
        dims.push(rng.gen_range(1..9));
    }
    let layers = dims
        .windows(2)
        .map(|w| LayerWeights { relations: relations.iter().map(|_| matrix(&mut rng, w[0], w[1])).collect(), self_loop: matrix(&mut rng, w[0], w[1]) })
        .collect();
    let embeddings = (0..rng.gen_range(0..4))
        .map(|t| {
            let rows = rng.gen_range(0..40);
            EmbeddingTable { node_type: format!("http://ex.org/T{t}"), matrix: matrix(&mut rng, rows, dims[0]) }
        })
        .collect();
    let out = *dims.last().unwrap();
    let head = if rng.gen_bool(0.5) {
        let c = rng.gen_range(1..5);
        Head::Classifier { weight: matrix(&mut rng, out, c), bias: matrix(&mut rng, 1, c).into_vec() }
    } else {
        Head::DistMult { relations: matrix(&mut rng, relations.len(), out) }
    };
    RgcnModel { hyper: Hyper { layers: layers_n, hidden_dim: dims[1], seed }, relations, layers, embeddings, head }
}

pub fn bits(m: &Matrix<f32>) -> Vec<u32> {
    m.as_slice().iter().map(|x| x.to_bits()).collect()
}

pub fn assert_bit_exact(a: &RgcnModel, b: &RgcnModel) {
    assert_eq!(a.relations, b.relations);
    assert_eq!(a.hyper, b.hyper);
    for (x, y) in a.layers.iter().zip(&b.layers) {
        assert_eq!(bits(&x.self_loop), bits(&y.self_loop));
        for (u, v) in x.relations.iter().zip(&y.relations) {
            assert_eq!(bits(u), bits(v));
        }
    }
    assert_eq!(a.layers.len(), b.layers.len());
    let mut ta: Vec<_> = a.embeddings.iter().filter(|t| t.matrix.rows() > 0).map(|t| (&t.node_type, bits(&t.matrix))).collect();
    ta.sort();
    let tb: Vec<_> = b.embeddings.iter().filter(|t| t.matrix.rows() > 0).map(|t| (&t.node_type, bits(&t.matrix))).collect();
    assert_eq!(ta, tb);
    match (&a.head, &b.head) {
        (Head::Classifier { weight: w1, bias: b1 }, Head::Classifier { weight: w2, bias: b2 }) => {
            assert_eq!(bits(w1), bits(w2));
            assert_eq!(b1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b2.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
        (Head::DistMult { relations: r1 }, Head::DistMult { relations: r2 }) => assert_eq!(bits(r1), bits(r2)),
        _ => panic!("head kind changed"),
    }
}
