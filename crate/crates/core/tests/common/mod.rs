#![allow(dead_code)]

use std::collections::BTreeMap;

use medium_fusion::fusion::{layer_param, EntityTable, Side};
use medium_fusion::numeric::{ParameterStore, Tensor};

pub fn table(dim: usize, vectors: &[(&str, &[f64])]) -> EntityTable {
    let map: BTreeMap<String, Vec<f64>> = vectors.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect();
    EntityTable::new(dim, 0).with_vectors(map)
}

pub fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

pub fn vector(data: &[f64]) -> Tensor {
    Tensor::vector(data.to_vec())
}

pub struct LayerFixture<'a> {
    pub w_msg: &'a [f64],
    pub a_att: &'a [f64],
    pub j_w1: &'a [f64],
    pub j_b1: &'a [f64],
    pub j_w2: &'a [f64],
    pub j_b2: &'a [f64],
}

impl LayerFixture<'_> {
    pub fn insert(&self, store: &mut ParameterStore, side: Side, layer: usize, d: usize) {
        let p = |n: &str| layer_param(side, layer, n);
        store.insert(p("w_msg"), mat(d, 3 * d, self.w_msg));
        store.insert(p("a_att"), vector(self.a_att));
        store.insert(p("j_w1"), mat(d, d, self.j_w1));
        store.insert(p("j_b1"), vector(self.j_b1));
        store.insert(p("j_w2"), mat(d, d, self.j_w2));
        store.insert(p("j_b2"), vector(self.j_b2));
    }
}

pub fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len(), "length of {actual:?} vs {expected:?}");
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!((a - e).abs() <= tol, "index {i}: {a} vs {e} (tol {tol})");
    }
}
