//! Invariance measurement and retrieval-descriptor evaluation.
//!
//! A neuron is one feature-map channel read at the spatial center after the
//! layer's activation. It "fires" on an input when its response exceeds a
//! per-neuron threshold t_i picked so the global firing rate G(i) stays just
//! above 0.01. The local rate L(i) is how often the neuron keeps firing
//! across a grid of transformed copies of inputs it fired on; L/G is the
//! invariance-to-selectivity score.
//!
//! Retrieval descriptors are channel-wise spatial means of the last pooling
//! layer, square-rooted and L2-normalized; corpora are scored with the
//! average number of same-group images in each query's top four neighbours.

use serde::Serialize;

use crate::data::{distort, DistortKind, DistortionSpec, LabeledImageSet};
use crate::layers::Mode;
use crate::tensor::{Shape, Tensor};
use crate::training::{Layer, Network};
use crate::transform::{apply, build_sampler, compose, AffineParams};
use crate::{Error, Real, Result};

/// Grids of transform magnitudes swept when measuring invariance. Each grid
/// contains its identity point; the identity variant itself is measured
/// once.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformSweep {
    pub rotations_deg: Vec<Real>,
    pub scales: Vec<Real>,
    pub translations: Vec<Real>,
}

impl TransformSweep {
    /// Rotation ±45° in 9° steps, scale 0.7–1.5 in 0.08 steps (plus the
    /// identity scale 1.0, which the raw grid misses), translation ±0.2 in
    /// 0.04 steps.
    pub fn paper_default() -> TransformSweep {
        let rotations_deg = (0..11).map(|i| -45.0 + 9.0 * i as Real).collect();
        let mut scales: Vec<Real> = (0..11).map(|i| 0.7 + 0.08 * i as Real).collect();
        if !scales.iter().any(|&s| (s - 1.0).abs() < 1e-9) {
            scales.push(1.0);
            scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let translations = (0..11).map(|i| -0.2 + 0.04 * i as Real).collect();
        TransformSweep { rotations_deg, scales, translations }
    }

    pub fn identity_only() -> TransformSweep {
        TransformSweep {
            rotations_deg: vec![0.0],
            scales: vec![1.0],
            translations: vec![0.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rotations_deg.is_empty() || self.scales.is_empty() || self.translations.is_empty()
        {
            return Err(Error::Input("sweep grids must be non-empty".into()));
        }
        let has = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Input(format!("sweep {what} grid misses its identity point")))
            }
        };
        has(self.rotations_deg.iter().any(|&r| r.abs() < 1e-9), "rotation")?;
        has(self.scales.iter().any(|&s| (s - 1.0).abs() < 1e-9), "scale")?;
        has(self.translations.iter().any(|&t| t.abs() < 1e-9), "translation")
    }

    /// One transform per grid point. Exact identity duplicates across the
    /// three grids collapse into a single identity variant.
    pub fn variants(&self) -> Vec<AffineParams> {
        let mut out = Vec::new();
        let mut seen_identity = false;
        let mut push = |p: AffineParams, out: &mut Vec<AffineParams>| {
            if p == AffineParams::identity() {
                if seen_identity {
                    return;
                }
                seen_identity = true;
            }
            out.push(p);
        };
        for &theta in &self.rotations_deg {
            push(AffineParams { theta_deg: theta, ..AffineParams::identity() }, &mut out);
        }
        for &s in &self.scales {
            push(AffineParams { sx: s, sy: s, ..AffineParams::identity() }, &mut out);
        }
        for &t in &self.translations {
            push(AffineParams { dx: t, dy: t, ..AffineParams::identity() }, &mut out);
        }
        out
    }
}

/// Threshold t_i for one neuron from its responses on the base inputs:
/// the (1 − 0.01) quantile, moved down to the next distinct value as needed
/// until the strict global rate G = #{r > t}/N exceeds 0.01. Returns
/// (t, G); a neuron whose responses cannot satisfy that (e.g. constant
/// output) is degenerate.
pub fn firing_threshold(responses: &[Real]) -> Result<(Real, Real)> {
    let n = responses.len();
    if n < 100 {
        return Err(Error::Input(format!(
            "need at least 100 base responses to place a threshold, got {n}"
        )));
    }
    let mut sorted = responses.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let want = n / 100 + 1; // smallest count with count/N > 0.01
    let mut idx = want;
    loop {
        if idx >= n {
            return Err(Error::Degenerate(
                "no threshold admits a strict global firing rate above 0.01".into(),
            ));
        }
        let t = sorted[idx];
        let firing = sorted.iter().take_while(|&&r| r > t).count();
        let g = firing as Real / n as Real;
        if g > 0.01 {
            return Ok((t, g));
        }
        // skip past the tie block
        while idx < n && sorted[idx] == t {
            idx += 1;
        }
    }
}

/// Per-neuron invariance statistics.
#[derive(Clone, Debug, Serialize)]
pub struct NeuronScore {
    /// Index of the activation layer in the network's layer list.
    pub layer: usize,
    pub channel: usize,
    pub threshold: f64,
    pub global_rate: f64,
    pub local_rate: f64,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerInvariance {
    pub layer: usize,
    /// Neurons measured at this layer after degenerate ones are dropped.
    pub neurons: usize,
    /// Count entering the top-p mean.
    pub top_count: usize,
    pub mean_top_score: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub p: f64,
    pub base_inputs: usize,
    pub variants: usize,
    /// How a neuron is read off the network.
    pub neuron_rule: String,
    pub degenerate_neurons: usize,
    pub neurons: Vec<NeuronScore>,
    pub layers: Vec<LayerInvariance>,
}

fn l_rate(base: &[Real], fired_counts: &[u32], variants: usize, t: Real) -> Option<Real> {
    let mut total = 0.0;
    let mut firing = 0usize;
    for (i, &r) in base.iter().enumerate() {
        if r > t {
            firing += 1;
            total += fired_counts[i] as Real / variants as Real;
        }
    }
    (firing > 0).then(|| total / firing as Real)
}

/// Examples per forward chunk when probing activations.
const PROBE_CHUNK: usize = 128;

/// Responses of every activation-layer channel at the spatial center, for a
/// batch. Row layout: per tap, per channel, one value per example.
fn center_responses(net: &mut Network, x: &Tensor) -> Result<Vec<(usize, Vec<Vec<Real>>)>> {
    let s = x.shape();
    let relu_indices: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| matches!(l, Layer::Relu(_)).then_some(i))
        .collect();
    if relu_indices.is_empty() {
        return Err(Error::Input("network has no activation layers to measure".into()));
    }
    let mut out: Vec<(usize, Vec<Vec<Real>>)> = Vec::new();
    let mut start = 0usize;
    while start < s.n {
        let count = PROBE_CHUNK.min(s.n - start);
        let f = s.features();
        let chunk = Tensor::from_vec(
            Shape::new(count, s.c, s.h, s.w),
            x.data()[start * f..(start + count) * f].to_vec(),
        )?;
        let (_, taps) = net.forward_with_taps(&chunk, Mode::Test)?;
        let mut tap_slot = 0usize;
        for tap in taps {
            if !relu_indices.contains(&tap.layer) {
                continue;
            }
            let ts = tap.output.shape();
            let (cy, cx) = (ts.h / 2, ts.w / 2);
            if out.len() <= tap_slot {
                out.push((tap.layer, vec![Vec::with_capacity(s.n); ts.c]));
            }
            let (_, per_channel) = &mut out[tap_slot];
            for n in 0..ts.n {
                for (c, bucket) in per_channel.iter_mut().enumerate() {
                    bucket.push(tap.output.at(n, c, cy, cx));
                }
            }
            tap_slot += 1;
        }
        start += count;
    }
    Ok(out)
}

/// Measure invariance scores over a base set and a sweep, reporting the
/// mean of the top `p` fraction per layer.
pub fn invariance_scores(
    net: &mut Network,
    base_set: &LabeledImageSet,
    sweep: &TransformSweep,
    p: Real,
) -> Result<InvarianceReport> {
    if base_set.is_empty() {
        return Err(Error::Input("base set is empty".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Input(format!("p must lie in (0, 1], got {p}")));
    }
    sweep.validate()?;
    let variants = sweep.variants();
    let n = base_set.len();
    let s = base_set.images.shape();

    let base = center_responses(net, &base_set.images)?;

    // thresholds per neuron; None marks degenerate neurons
    let mut thresholds: Vec<Vec<Option<(Real, Real)>>> = Vec::with_capacity(base.len());
    let mut degenerate = 0usize;
    for (_, channels) in &base {
        let mut layer_ts = Vec::with_capacity(channels.len());
        for responses in channels {
            match firing_threshold(responses) {
                Ok(tg) => layer_ts.push(Some(tg)),
                Err(Error::Degenerate(_)) => {
                    degenerate += 1;
                    layer_ts.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        thresholds.push(layer_ts);
    }

    // count transformed variants each neuron fires on, per base input
    let mut fired: Vec<Vec<Vec<u32>>> = base
        .iter()
        .map(|(_, channels)| vec![vec![0u32; n]; channels.len()])
        .collect();
    for params in &variants {
        let plan = build_sampler(&compose(params, s.h, s.w)?, s.h, s.w)?;
        let warped = apply(&plan, &base_set.images)?;
        let responses = center_responses(net, &warped)?;
        for (k, (_, channels)) in responses.iter().enumerate() {
            for (c, resp) in channels.iter().enumerate() {
                if let Some((t, _)) = thresholds[k][c] {
                    for (i, &r) in resp.iter().enumerate() {
                        if r > t {
                            fired[k][c][i] += 1;
                        }
                    }
                }
            }
        }
    }

    let mut neurons = Vec::new();
    for (k, (layer, channels)) in base.iter().enumerate() {
        for (c, base_resp) in channels.iter().enumerate() {
            let Some((t, g)) = thresholds[k][c] else { continue };
            let Some(l) = l_rate(base_resp, &fired[k][c], variants.len(), t) else {
                continue;
            };
            neurons.push(NeuronScore {
                layer: *layer,
                channel: c,
                threshold: t as f64,
                global_rate: g as f64,
                local_rate: l as f64,
                score: (l / g) as f64,
            });
        }
    }
    if neurons.is_empty() {
        return Err(Error::Degenerate(
            "no neuron survived threshold placement; nothing to report".into(),
        ));
    }

    let mut layers = Vec::new();
    for (layer, _) in &base {
        let mut scores: Vec<f64> = neurons
            .iter()
            .filter(|ns| ns.layer == *layer)
            .map(|ns| ns.score)
            .collect();
        if scores.is_empty() {
            continue;
        }
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top = ((p as f64) * scores.len() as f64).ceil() as usize;
        let top = top.clamp(1, scores.len());
        let mean = scores[..top].iter().sum::<f64>() / top as f64;
        layers.push(LayerInvariance {
            layer: *layer,
            neurons: scores.len(),
            top_count: top,
            mean_top_score: mean,
        });
    }

    Ok(InvarianceReport {
        p: p as f64,
        base_inputs: n,
        variants: variants.len(),
        neuron_rule: "feature-map channel at the spatial center, post-activation".into(),
        degenerate_neurons: degenerate,
        neurons,
        layers,
    })
}

/// Unit-norm retrieval descriptor computed for each example in `images`:
/// channel-wise spatial mean of the last pooling layer, element-wise square
/// root, then L2 normalization.
pub fn extract_descriptors(net: &mut Network, images: &Tensor) -> Result<Vec<Vec<Real>>> {
    let s = images.shape();
    let last_pool = net
        .layers()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| matches!(l, Layer::MaxPool(_)).then_some(i))
        .last()
        .ok_or_else(|| Error::Input("network has no pooling layer to describe".into()))?;

    let mut out = Vec::with_capacity(s.n);
    let f = s.features();
    let mut start = 0usize;
    while start < s.n {
        let count = PROBE_CHUNK.min(s.n - start);
        let chunk = Tensor::from_vec(
            Shape::new(count, s.c, s.h, s.w),
            images.data()[start * f..(start + count) * f].to_vec(),
        )?;
        let (_, taps) = net.forward_with_taps(&chunk, Mode::Test)?;
        let pooled = &taps
            .iter()
            .find(|t| t.layer == last_pool)
            .expect("tap exists for every layer")
            .output;
        let ps = pooled.shape();
        let area = (ps.h * ps.w) as Real;
        for n in 0..ps.n {
            let mut means = Vec::with_capacity(ps.c);
            for c in 0..ps.c {
                let plane = &pooled.data()[(n * ps.c + c) * ps.h * ps.w..][..ps.h * ps.w];
                means.push(plane.iter().sum::<Real>() / area);
            }
            out.push(descriptor_from_means(&means).map_err(|e| match e {
                Error::Degenerate(msg) => {
                    Error::Degenerate(format!("example {}: {msg}", start + n))
                }
                other => other,
            })?);
        }
        start += count;
    }
    Ok(out)
}

/// Root + L2 step of the descriptor: element-wise square root of channel
/// means followed by unit normalization.
pub fn descriptor_from_means(means: &[Real]) -> Result<Vec<Real>> {
    if let Some(bad) = means.iter().find(|&&m| m < 0.0) {
        return Err(Error::Numeric(format!(
            "channel mean {bad} is negative; descriptors need non-negative activations"
        )));
    }
    let mut desc: Vec<Real> = means.iter().map(|&m| m.sqrt()).collect();
    let norm = desc.iter().map(|v| v * v).sum::<Real>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate(
            "all-zero pooled activations; descriptor undefined".into(),
        ));
    }
    for v in &mut desc {
        *v /= norm;
    }
    Ok(desc)
}

/// One query's retrieval outcome.
#[derive(Clone, Debug, Serialize)]
pub struct QueryResult {
    pub query: usize,
    pub top: [usize; 4],
    pub same_group: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RetrievalReport {
    pub ns_score: f64,
    pub per_query: Vec<QueryResult>,
}

/// NS-score over a corpus of groups of exactly four: for every item as
/// query, rank the whole corpus (query included) by Euclidean distance with
/// ties broken by ascending index, and count group members in the top four.
pub fn retrieval_ranks(descriptors: &[Vec<Real>], groups: &[usize]) -> Result<RetrievalReport> {
    if descriptors.len() != groups.len() || descriptors.is_empty() {
        return Err(Error::Input(format!(
            "{} descriptors vs {} group ids",
            descriptors.len(),
            groups.len()
        )));
    }
    let dim = descriptors[0].len();
    if descriptors.iter().any(|d| d.len() != dim) {
        return Err(Error::Input("descriptors must share one dimension".into()));
    }
    let mut sizes = std::collections::BTreeMap::new();
    for &g in groups {
        *sizes.entry(g).or_insert(0usize) += 1;
    }
    if let Some((&g, &count)) = sizes.iter().find(|(_, &c)| c != 4) {
        return Err(Error::Input(format!(
            "group {g} has {count} members; every group must have exactly 4"
        )));
    }

    let n = descriptors.len();
    let mut per_query = Vec::with_capacity(n);
    let mut total = 0usize;
    for q in 0..n {
        let dq = &descriptors[q];
        let mut order: Vec<(Real, usize)> = descriptors
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let dist2: Real =
                    d.iter().zip(dq).map(|(a, b)| (a - b) * (a - b)).sum();
                (dist2, i)
            })
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let top = [order[0].1, order[1].1, order[2].1, order[3].1];
        let same_group = top.iter().filter(|&&i| groups[i] == groups[q]).count();
        total += same_group;
        per_query.push(QueryResult { query: q, top, same_group });
    }
    Ok(RetrievalReport { ns_score: total as f64 / n as f64, per_query })
}

/// NS-score alone.
pub fn ns_score(descriptors: &[Vec<Real>], groups: &[usize]) -> Result<Real> {
    Ok(retrieval_ranks(descriptors, groups)?.ns_score as Real)
}

/// Build a synthetic grouped retrieval corpus: the first `group_count`
/// images of `seeds` each become a group of four variants drawn by the
/// given distortion protocol. Group id = seed index.
pub fn grouped_corpus(
    seeds: &LabeledImageSet,
    group_count: usize,
    kind: DistortKind,
    seed: u64,
) -> Result<(LabeledImageSet, Vec<usize>)> {
    if seeds.len() < group_count || group_count == 0 {
        return Err(Error::Input(format!(
            "need {group_count} seed images, have {}",
            seeds.len()
        )));
    }
    let indices: Vec<usize> = (0..group_count).flat_map(|i| [i, i, i, i]).collect();
    let (images, labels) = seeds.gather(&indices)?;
    let repeated = LabeledImageSet { images, labels, meta: seeds.meta.clone() };
    let corpus = distort(&repeated, &DistortionSpec::new(kind, seed))?;
    let groups = (0..group_count).flat_map(|i| [i, i, i, i]).collect();
    Ok((corpus, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_on_distinct_ramp() {
        let responses: Vec<Real> = (1..=100).map(|i| i as Real).collect();
        let (t, g) = firing_threshold(&responses).unwrap();
        assert_eq!(t, 98.0);
        assert!((g - 0.02).abs() < 1e-12);
    }

    #[test]
    fn constant_neuron_is_degenerate() {
        let responses = vec![1.0; 200];
        assert!(matches!(
            firing_threshold(&responses),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn threshold_needs_hundred_samples() {
        let responses = vec![0.0; 99];
        assert!(matches!(firing_threshold(&responses), Err(Error::Input(_))));
    }

    // Exhaustive quantile oracle on sampled normals: G must land in
    // (0.01, 0.03].
    #[test]
    fn threshold_rate_on_gaussian_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let normal = rand_distr::StandardNormal;
        let responses: Vec<Real> =
            (0..1000).map(|_| rand_distr::Distribution::sample(&normal, &mut rng)).collect();
        let (t, g) = firing_threshold(&responses).unwrap();
        assert!(g > 0.01 && g <= 0.03, "g = {g}");
        // oracle: recount directly
        let count = responses.iter().filter(|&&r| r > t).count();
        assert_eq!(count as Real / 1000.0, g);
    }

    #[test]
    fn perfectly_invariant_neuron_scores_one_over_g() {
        // fires on exactly 2 of 100 inputs and on all their variants
        let mut base = vec![0.0 as Real; 100];
        base[17] = 1.0;
        base[42] = 1.0;
        let (t, g) = firing_threshold(&base).unwrap();
        assert!((g - 0.02).abs() < 1e-12);
        let variants = 7usize;
        let mut fired = vec![0u32; 100];
        fired[17] = variants as u32;
        fired[42] = variants as u32;
        let l = l_rate(&base, &fired, variants, t).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!(((l / g) - 50.0).abs() < 1e-9);
    }

    // A neuron firing independently at rate q on transformed inputs has
    // expected L ≈ q.
    #[test]
    fn random_firing_neuron_has_l_near_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let n = 2000usize;
        let base: Vec<Real> = (0..n).map(|_| rng.gen::<Real>()).collect();
        let (t, _) = firing_threshold(&base).unwrap();
        let q = 0.3;
        let variants = 50usize;
        let fired: Vec<u32> = (0..n)
            .map(|_| (0..variants).filter(|_| rng.gen::<Real>() < q).count() as u32)
            .collect();
        let l = l_rate(&base, &fired, variants, t).unwrap();
        assert!((l - q).abs() < 0.05, "L = {l}, expected about {q}");
    }

    #[test]
    fn sweep_defaults_include_identity() {
        let sweep = TransformSweep::paper_default();
        sweep.validate().unwrap();
        assert_eq!(sweep.rotations_deg.len(), 11);
        assert_eq!(sweep.scales.len(), 12); // 11-point grid plus inserted 1.0
        assert_eq!(sweep.translations.len(), 11);
        // identity appears exactly once across all variants
        let identity_count = sweep
            .variants()
            .iter()
            .filter(|&&p| p == AffineParams::identity())
            .count();
        assert_eq!(identity_count, 1);
    }

    #[test]
    fn ns_score_orthogonal_groups_is_four() {
        // groups of identical one-hot descriptors, orthogonal across groups
        let mut descriptors = Vec::new();
        let mut groups = Vec::new();
        for g in 0..5 {
            for _ in 0..4 {
                let mut d = vec![0.0 as Real; 5];
                d[g] = 1.0;
                descriptors.push(d);
                groups.push(g);
            }
        }
        let report = retrieval_ranks(&descriptors, &groups).unwrap();
        assert_eq!(report.ns_score, 4.0);
    }

    #[test]
    fn single_group_of_identical_vectors_scores_four() {
        let descriptors = vec![vec![0.5, 0.5]; 4];
        let groups = vec![0, 0, 0, 0];
        assert_eq!(ns_score(&descriptors, &groups).unwrap(), 4.0);
    }

    // All-identical descriptors across two groups: ranking degenerates to
    // index order; verify against a brute-force oracle.
    #[test]
    fn tie_breaking_matches_brute_force_oracle() {
        let descriptors = vec![vec![1.0 as Real, 2.0]; 8];
        let groups = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let report = retrieval_ranks(&descriptors, &groups).unwrap();
        // oracle: for each query, the top four are the lowest indices
        let mut total = 0usize;
        for q in 0..8 {
            let mut ranked: Vec<usize> = (0..8).collect();
            ranked.sort_by(|&a, &b| {
                let da: Real = 0.0;
                let db: Real = 0.0;
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            let hits = ranked[..4].iter().filter(|&&i| groups[i] == groups[q]).count();
            total += hits;
        }
        assert_eq!(report.ns_score, total as f64 / 8.0);
        assert_eq!(report.ns_score, 2.0);
    }

    #[test]
    fn descriptor_root_and_normalize() {
        // channel means [4, 0, 1] -> roots [2, 0, 1] -> unit norm
        let d = descriptor_from_means(&[4.0, 0.0, 1.0]).unwrap();
        let s5 = (5.0 as Real).sqrt();
        for (a, b) in d.iter().zip([2.0 / s5, 0.0, 1.0 / s5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let norm: Real = d.iter().map(|v| v * v).sum::<Real>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-10);
        assert!(matches!(
            descriptor_from_means(&[0.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            descriptor_from_means(&[-1.0, 2.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn malformed_groups_rejected() {
        let descriptors = vec![vec![1.0 as Real]; 5];
        let groups = vec![0, 0, 0, 0, 1];
        assert!(matches!(
            retrieval_ranks(&descriptors, &groups),
            Err(Error::Input(_))
        ));
    }

    // Euclidean distances are preserved by any orthogonal map, so the score
    // must be too. Use a random rotation built via Gram-Schmidt.
    #[test]
    fn ns_score_invariant_under_global_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let dim = 6usize;
        let n_groups = 6usize;
        let descriptors: Vec<Vec<Real>> = (0..4 * n_groups)
            .map(|_| (0..dim).map(|_| rng.gen::<Real>() - 0.5).collect())
            .collect();
        let groups: Vec<usize> = (0..n_groups).flat_map(|g| [g, g, g, g]).collect();

        // random orthogonal matrix
        let mut basis: Vec<Vec<Real>> = Vec::new();
        while basis.len() < dim {
            let mut v: Vec<Real> = (0..dim).map(|_| rng.gen::<Real>() - 0.5).collect();
            for b in &basis {
                let proj: Real = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm: Real = v.iter().map(|a| a * a).sum::<Real>().sqrt();
            if norm > 1e-6 {
                for vi in &mut v {
                    *vi /= norm;
                }
                basis.push(v);
            }
        }
        let rotated: Vec<Vec<Real>> = descriptors
            .iter()
            .map(|d| {
                basis
                    .iter()
                    .map(|b| b.iter().zip(d).map(|(a, c)| a * c).sum())
                    .collect()
            })
            .collect();
        let a = ns_score(&descriptors, &groups).unwrap();
        let b = ns_score(&rotated, &groups).unwrap();
        assert_eq!(a, b);
    }
}
