//! Invariance-measure behavior on a real (untrained) network, and the
//! retrieval pipeline on a synthetic grouped corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ticnn::analysis::{
    extract_descriptors, grouped_corpus, invariance_scores, retrieval_ranks, TransformSweep,
};
use ticnn::data::{DistortKind, LabeledImageSet, SetMeta};
use ticnn::tensor::{Shape, Tensor};
use ticnn::training::{randomize_params_uniform, LayerSpec, Network, NetworkSpec};
use ticnn::Real;

fn probe_net(seed: u64) -> Network {
    let spec = NetworkSpec {
        input: [1, 12, 12],
        seed,
        layers: vec![
            LayerSpec::Conv { filters: 6, kernel: 3, stride: 1, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::Maxpool { window: 2, stride: 2 },
            LayerSpec::Conv { filters: 6, kernel: 3, stride: 1, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::Maxpool { window: 3, stride: 1 },
            LayerSpec::Dense { units: 4 },
        ],
    };
    let mut net = Network::build(&spec).unwrap();
    // an untrained but non-degenerate net: scores are still defined
    randomize_params_uniform(&mut net, 0.4, seed);
    net
}

fn base_set(n: usize, seed: u64) -> LabeledImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(n, 1, 12, 12);
    LabeledImageSet {
        images: Tensor::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap(),
        labels: vec![0; n],
        meta: SetMeta { name: "probe".into(), distortion: "none".into(), seed, canvas: 12 },
    }
}

// With an identity-only sweep every firing input keeps firing: L(i) = 1
// exactly for every reported neuron.
#[test]
fn identity_sweep_gives_unit_local_rates() {
    let mut net = probe_net(3);
    let base = base_set(200, 4);
    let report =
        invariance_scores(&mut net, &base, &TransformSweep::identity_only(), 0.2).unwrap();
    assert!(!report.neurons.is_empty());
    for neuron in &report.neurons {
        assert_eq!(neuron.local_rate, 1.0, "neuron {neuron:?}");
        assert!(neuron.global_rate > 0.01);
        assert_eq!(neuron.score, 1.0 / neuron.global_rate);
    }
}

#[test]
fn default_sweep_reports_all_layers() {
    let mut net = probe_net(5);
    let base = base_set(150, 6);
    let report =
        invariance_scores(&mut net, &base, &TransformSweep::paper_default(), 0.2).unwrap();
    assert_eq!(report.layers.len(), 2, "one entry per activation layer");
    assert_eq!(report.variants, 32); // 11 + 12 + 11 minus two duplicate identities
    for layer in &report.layers {
        assert!(layer.mean_top_score >= 0.0);
        assert!(layer.top_count >= 1);
    }
    for neuron in &report.neurons {
        assert!(neuron.global_rate > 0.01);
        assert!((0.0..=1.0).contains(&neuron.local_rate));
    }
}

#[test]
fn descriptors_are_unit_norm_and_deterministic() {
    let mut net = probe_net(7);
    let images = base_set(20, 8).images;
    let a = extract_descriptors(&mut net, &images).unwrap();
    let b = extract_descriptors(&mut net, &images).unwrap();
    assert_eq!(a, b);
    // dimension equals the channel count of the last pooling layer
    assert!(a.iter().all(|d| d.len() == 6));
    for d in &a {
        let norm: Real = d.iter().map(|v| v * v).sum::<Real>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-10);
        assert!(d.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn grouped_corpus_retrieval_end_to_end() {
    let mut net = probe_net(9);
    let seeds = base_set(10, 10);
    let (corpus, groups) = grouped_corpus(&seeds, 10, DistortKind::Rotate, 11).unwrap();
    assert_eq!(corpus.len(), 40);
    assert_eq!(groups.len(), 40);
    let descriptors = extract_descriptors(&mut net, &corpus.images).unwrap();
    let report = retrieval_ranks(&descriptors, &groups).unwrap();
    assert!(report.ns_score >= 1.0, "query itself always ranks first");
    assert!(report.ns_score <= 4.0);
    // every query's top hit is itself (distance zero, lowest index tie)
    for q in &report.per_query {
        assert_eq!(q.top[0], q.query);
    }
}
