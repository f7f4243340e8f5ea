mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{assert_close, mat, table, vector};
use medium_fusion::coupled_graph::EntityId;
use medium_fusion::fusion::{GraphState, PreparedGraph, Side};
use medium_fusion::numeric::{softmax_nll, ParameterStore, Tape, Tensor};
use medium_fusion::objectives::{
    answer_scores, gaussian_kernel, head_params, inference_loss, inference_loss_value, joint_loss, mmd_loss,
    mmd_loss_tape, predict, AnswerHead, KernelConfig, LossBreakdown,
};

fn head_store() -> ParameterStore {
    let mut store = ParameterStore::new();
    store.insert(head_params::CTX_PROJ, mat(3, 2, &[0.5, -0.2, 0.1, 0.3, -0.4, 0.6]));
    store.insert(
        head_params::W1,
        mat(3, 3, &[0.3, -0.1, 0.2, 0.7, 0.4, -0.5, -0.6, 0.2, 0.1]),
    );
    store.insert(head_params::B1, vector(&[0.05, -0.1, 0.0]));
    store.insert(head_params::W2, mat(1, 3, &[0.8, -0.3, 0.5]));
    store.insert(head_params::B2, vector(&[0.2]));
    store
}

#[test]
fn five_candidate_head_matches_perceptron_oracle() {
    let t = table(
        3,
        &[
            ("e1", &[0.1, 0.2, 0.3]),
            ("e2", &[-0.5, 0.4, 0.0]),
            ("e3", &[1.0, -1.0, 0.5]),
            ("e4", &[0.0, 0.0, 0.0]),
            ("e5", &[0.3, 0.9, -0.7]),
        ],
    );
    let entities: BTreeSet<EntityId> = ["e1", "e2", "e3", "e4", "e5"]
        .iter()
        .map(|e| EntityId::new(e))
        .collect();
    let graph = PreparedGraph::new(Side::Concept, &entities, &[], &t);
    let store = head_store();
    let mut tape = Tape::new();
    let state = GraphState::initial(&mut tape, &store, &graph).unwrap();
    let head = AnswerHead::load(&mut tape, &store, 0.01).unwrap();
    let c = tape.constant(vector(&[0.4, -1.0]));
    let scores = answer_scores(&mut tape, &state, c, &head).unwrap();
    assert_close(
        tape.value(scores).data(),
        &[
            0.15261000000000002,
            0.125032,
            0.4778100000000001,
            0.09656000000000002,
            -0.21575799999999995,
        ],
        1e-12,
    );
}

#[test]
fn four_score_nll_matches_log_sum_exp_oracle() {
    let expected = 0.4401896985611953;
    let scores = Tensor::vector(vec![2.0, 1.0, 0.0, -1.0]);
    assert!((softmax_nll(&scores, 0).unwrap() - expected).abs() < 1e-12);

    let mut tape = Tape::new();
    let s = tape.constant(scores);
    let loss = inference_loss(&mut tape, s, &[0]).unwrap();
    assert!((tape.scalar(loss) - expected).abs() < 1e-12);

    let map: BTreeMap<EntityId, f64> = [("a", 2.0), ("b", 1.0), ("c", 0.0), ("d", -1.0)]
        .iter()
        .map(|(k, v)| (EntityId::new(k), *v))
        .collect();
    assert!((inference_loss_value(&map, &[EntityId::new("a")]).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn multiple_golds_average_their_terms() {
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::vector(vec![2.0, 1.0, 0.0, -1.0]));
    let both = inference_loss(&mut tape, s, &[0, 1]).unwrap();
    let v = Tensor::vector(vec![2.0, 1.0, 0.0, -1.0]);
    let mean = (softmax_nll(&v, 0).unwrap() + softmax_nll(&v, 1).unwrap()) / 2.0;
    assert!((tape.scalar(both) - mean).abs() < 1e-15);
}

#[test]
fn kernel_matches_scalar_oracle() {
    let k = gaussian_kernel(&[0.3, -1.2, 0.5, 2.0], &[-0.4, 0.1, 0.9, 1.5], 1.0);
    assert!((k - 0.27389786433144553).abs() < 1e-12);
}

#[test]
fn two_pair_mmd_matches_double_sum_oracle() {
    let s = vec![vec![0.1, 0.5, -0.3], vec![1.0, -0.2, 0.4]];
    let c = vec![vec![0.0, 0.3, 0.2], vec![-0.5, 0.8, 0.1]];
    let kernel = KernelConfig::new(1.0).unwrap();
    let expected = 0.4363915690199521;
    assert!((mmd_loss(&s, &c, kernel).unwrap() - expected).abs() < 1e-12);

    let mut tape = Tape::new();
    let sv: Vec<_> = s.iter().map(|v| tape.constant(Tensor::vector(v.clone()))).collect();
    let cv: Vec<_> = c.iter().map(|v| tape.constant(Tensor::vector(v.clone()))).collect();
    let m = mmd_loss_tape(&mut tape, &sv, &cv, kernel).unwrap();
    assert!((tape.scalar(m) - expected).abs() < 1e-12);
}

#[test]
fn joint_loss_arithmetic() {
    let b = LossBreakdown::new(1.0, 2.0, 1e-3);
    assert_eq!(b.joint, 1.0 + 1e-3 * 2.0);
    assert!((b.joint - 1.002).abs() < 1e-15);
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::scalar(1.0));
    let m = tape.constant(Tensor::scalar(2.0));
    let j = joint_loss(&mut tape, i, m, 1e-3).unwrap();
    assert_eq!(tape.scalar(j).to_bits(), b.joint.to_bits());
    assert_eq!(LossBreakdown::new(0.7, 5.0, 0.0).joint, 0.7);
    assert_eq!(LossBreakdown::new(0.7, 0.0, 0.1).joint, 0.7);
}

#[test]
fn predict_examples() {
    let m = |pairs: &[(&str, f64)]| -> BTreeMap<EntityId, f64> {
        pairs.iter().map(|(k, v)| (EntityId::new(k), *v)).collect()
    };
    assert_eq!(predict(&m(&[("a", 1.0), ("b", 2.0)])), Some(EntityId::new("b")));
    assert_eq!(
        predict(&m(&[("c", 0.5), ("a", 0.5), ("b", 0.5)])),
        Some(EntityId::new("a"))
    );
    assert_eq!(predict(&BTreeMap::new()), None);
}
