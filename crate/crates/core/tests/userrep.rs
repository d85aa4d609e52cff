mod common;

use std::collections::{HashMap, HashSet};

use pathrec_core::datastore::{derive_sequences, EmbeddingTable, Modality, UserSequence};
use pathrec_core::linalg::{self, Matrix};
use pathrec_core::rq::{self, CodebookStack, KMeansConfig, ProjectionParams};
use pathrec_core::userrep::{
    self, encode_user, infonce, item_feature, loss_and_grad, sample_negatives, FeatureContext, SeqEncoderParams,
    TrainSample, UserRepTrainConfig,
};
use pathrec_core::{seed, synth};
use proptest::prelude::*;
use rand::Rng;

struct Fixture {
    text: EmbeddingTable,
    visual: EmbeddingTable,
    text_stack: CodebookStack,
    visual_stack: CodebookStack,
    params: SeqEncoderParams,
}

impl Fixture {
    fn new(s: u64, items: usize, d: usize) -> Self {
        let mut rng = seed::rng_from(s);
        let (dt, dv) = (5, 4);
        let rows = |dim: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            (0..items)
                .map(|i| (format!("i{i}"), Matrix::gaussian(1, dim, 1.0, rng).row(0).to_vec()))
                .collect::<Vec<_>>()
        };
        let text = EmbeddingTable::from_rows(Modality::Text, dt, rows(dt, &mut rng)).unwrap();
        let visual = EmbeddingTable::from_rows(Modality::Visual, dv, rows(dv, &mut rng)).unwrap();
        let projections = ProjectionParams::seeded(dt, dv, d, &mut rng);
        let cfg = KMeansConfig { layers: 2, codebook_size: 4, seed: s, ..Default::default() };
        let text_stack = rq::fit_codebooks(&text, &projections.text, &cfg).unwrap();
        let visual_stack = rq::fit_codebooks(&visual, &projections.visual, &cfg).unwrap();
        let params = SeqEncoderParams::seeded(projections, &mut rng);
        Self { text, visual, text_stack, visual_stack, params }
    }

    fn ctx(&self) -> FeatureContext<'_> {
        FeatureContext {
            text: &self.text,
            visual: &self.visual,
            text_stack: &self.text_stack,
            visual_stack: &self.visual_stack,
        }
    }
}

#[test]
fn item_feature_blocks_are_projection_and_codeword_sums() {
    let fx = Fixture::new(1, 12, 3);
    let ctx = fx.ctx();
    for id in ctx.items() {
        let f = item_feature(&id, &ctx, &fx.params.projections).unwrap();
        assert_eq!(f.vector.len(), 12);
        let zt = fx.params.projections.text.apply(fx.text.get(&id).unwrap());
        let zv = fx.params.projections.visual.apply(fx.visual.get(&id).unwrap());
        let qt = fx.text_stack.quantize_latent(&zt).unwrap();
        let qv = fx.visual_stack.quantize_latent(&zv).unwrap();
        let sum = |stack: &CodebookStack, idx: &[usize]| {
            let mut s = vec![0.0; 3];
            for (l, &c) in idx.iter().enumerate() {
                linalg::axpy(&mut s, 1.0, stack.codeword(l, c));
            }
            s
        };
        assert_eq!(&f.vector[..3], zt.as_slice());
        assert_eq!(f.vector[3..6].to_vec(), sum(&fx.text_stack, &qt.sid.indices));
        assert_eq!(&f.vector[6..9], zv.as_slice());
        assert_eq!(f.vector[9..].to_vec(), sum(&fx.visual_stack, &qv.sid.indices));
    }
    assert!(matches!(item_feature("nope", &ctx, &fx.params.projections), Err(userrep::UserRepError::UnknownItem(_))));
}

#[test]
fn encode_user_matches_hand_matvec() {
    let fx = Fixture::new(2, 10, 3);
    let feats = userrep::all_item_features(&fx.ctx(), &fx.params.projections).unwrap();
    let mut params = fx.params.clone();
    let mut rng = seed::rng_from(20);
    params.bias = (0..12).map(|_| rng.random::<f64>()).collect();
    let seq = UserSequence { user: "u".into(), items: vec!["i1".into(), "i4".into(), "i4".into(), "i9".into()] };
    let got = encode_user(&seq, &feats, &params).unwrap().vector;
    for r in 0..12 {
        let mut acc = params.bias[r];
        for c in 0..12 {
            let mean = seq.items.iter().map(|i| feats[i][c]).sum::<f64>() / 4.0;
            acc += params.w_u.get(r, c) * mean;
        }
        assert!((got[r] - acc).abs() < 1e-12);
    }
    let empty = UserSequence { user: "u".into(), items: vec![] };
    assert!(encode_user(&empty, &feats, &params).is_err());
}

#[test]
fn infonce_matches_naive_evaluation() {
    let mut rng = seed::rng_from(3);
    for _ in 0..100 {
        let v = |rng: &mut rand_chacha::ChaCha8Rng| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let h = v(&mut rng);
        let pos = v(&mut rng);
        let negs: Vec<Vec<f64>> = (0..5).map(|_| v(&mut rng)).collect();
        let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let num = linalg::dot(&h, &pos).exp();
        let den = num + negs.iter().map(|n| linalg::dot(&h, n).exp()).sum::<f64>();
        assert!((infonce(&h, &pos, &refs, 1.0) - (-(num / den).ln())).abs() < 1e-9);
    }
}

#[test]
fn infonce_gradient_matches_finite_differences() {
    let mut rng = seed::rng_from(4);
    for instance in 0..20 {
        let fx = Fixture::new(100 + instance, 14, 3);
        let ctx = fx.ctx();
        let universe = ctx.items();
        let batch: Vec<TrainSample> = (0..rng.random_range(1..4))
            .map(|b| {
                let len = rng.random_range(1..5);
                let history: Vec<String> = (0..len).map(|_| universe[rng.random_range(0..14)].clone()).collect();
                let positive = universe[rng.random_range(0..14)].clone();
                let exclude: HashSet<&str> = history.iter().chain([&positive]).map(String::as_str).collect();
                let negatives = sample_negatives(&universe, &exclude, 4, &mut rng);
                TrainSample { user: format!("u{b}"), history, positive, negatives }
            })
            .collect();
        let (_, mut grad) = loss_and_grad(&fx.params, &batch, &ctx, 1.0).unwrap();
        let total = common::seq_scalars(&mut fx.params.clone()).len();
        let coords: Vec<usize> = (0..total).collect();
        let err = common::gradient_rel_err(
            &fx.params,
            &mut grad,
            common::seq_scalars,
            |p| loss_and_grad(p, &batch, &ctx, 1.0).unwrap().0,
            &coords,
            1e-6,
        );
        assert!(err < 1e-4, "instance {instance}: rel err {err}");
    }
}

#[test]
fn training_with_zero_rate_changes_nothing_and_positive_rate_lowers_loss() {
    let fx = Fixture::new(5, 20, 3);
    let seqs: Vec<UserSequence> = (0..8)
        .map(|u| UserSequence {
            user: format!("u{u}"),
            items: (0..5).map(|t| format!("i{}", (u * 2 + t) % 20)).collect(),
        })
        .collect();
    let cfg = UserRepTrainConfig { epochs: 3, lr: 0.0, negatives: 5, batch_size: 4, seed: 1, ..Default::default() };
    let same = userrep::train_user_rep(&seqs, &fx.ctx(), fx.params.clone(), &cfg).unwrap();
    assert_eq!(same.params, fx.params);

    let cfg = UserRepTrainConfig { epochs: 40, lr: 0.05, ..cfg };
    let a = userrep::train_user_rep(&seqs, &fx.ctx(), fx.params.clone(), &cfg).unwrap();
    let b = userrep::train_user_rep(&seqs, &fx.ctx(), fx.params.clone(), &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.epoch_loss.last().unwrap() < &a.epoch_loss[0], "{:?}", a.epoch_loss);
}

#[test]
fn negatives_are_distinct_and_outside_history() {
    let universe: Vec<String> = (0..50).map(|i| format!("i{i}")).collect();
    let mut rng = seed::rng_from(6);
    for n_ex in [0, 10, 30, 45, 50] {
        let exclude: HashSet<&str> = universe[..n_ex].iter().map(String::as_str).collect();
        let negs = sample_negatives(&universe, &exclude, 8, &mut rng);
        assert_eq!(negs.len(), 8.min(50 - n_ex));
        let set: HashSet<&String> = negs.iter().collect();
        assert_eq!(set.len(), negs.len());
        assert!(negs.iter().all(|n| !exclude.contains(n.as_str())));
    }
}

#[test]
fn planted_sequences_beat_random_ranking() {
    let planted = synth::planted(&synth::PlantedConfig { users: 200, items: 100, ..Default::default() });
    let ds = &planted.dataset;
    let mut rng = seed::rng_from(7);
    let d = 16;
    let projections = ProjectionParams::seeded(ds.text.dim(), ds.visual.dim(), d, &mut rng);
    let kcfg = KMeansConfig { layers: 2, codebook_size: 16, seed: 7, ..Default::default() };
    let ts = rq::fit_codebooks(&ds.text, &projections.text, &kcfg).unwrap();
    let vs = rq::fit_codebooks(&ds.visual, &projections.visual, &kcfg).unwrap();
    let ctx = FeatureContext { text: &ds.text, visual: &ds.visual, text_stack: &ts, visual_stack: &vs };
    let seqs = derive_sequences(&ds.interactions);
    let (train, targets): (Vec<UserSequence>, Vec<String>) = seqs
        .iter()
        .map(|s| {
            let (last, head) = s.items.split_last().unwrap();
            (UserSequence { user: s.user.clone(), items: head.to_vec() }, last.clone())
        })
        .unzip();
    let init = SeqEncoderParams::seeded(projections, &mut rng);
    let cfg = UserRepTrainConfig { epochs: 10, seed: 7, ..Default::default() };
    let report = userrep::train_user_rep(&train, &ctx, init, &cfg).unwrap();
    let feats: HashMap<String, Vec<f64>> = userrep::all_item_features(&ctx, &report.params.projections).unwrap();
    let recall = userrep::recall_at_k(&train, &targets, &feats, &report.params, 10).unwrap();
    assert!(recall >= 3.0 * 10.0 / 100.0, "recall@10 {recall}");
    let top1 = userrep::recall_at_k(&train, &targets, &feats, &report.params, 1).unwrap();
    assert!(top1 > 1.0 / 100.0, "recall@1 {top1}");
}

proptest! {
    #[test]
    fn infonce_is_shift_invariant(
        h in prop::collection::vec(-2.0f64..2.0, 4),
        pos in prop::collection::vec(-2.0f64..2.0, 4),
        negs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..6),
        shift in -50.0f64..50.0,
    ) {
        // Appending a coordinate where h is 1 and every candidate holds `shift`
        // adds the same constant to every logit.
        let ext = |v: &[f64], x: f64| v.iter().copied().chain([x]).collect::<Vec<f64>>();
        let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let base = infonce(&h, &pos, &refs, 1.0);
        let negs2: Vec<Vec<f64>> = negs.iter().map(|n| ext(n, shift)).collect();
        let refs2: Vec<&[f64]> = negs2.iter().map(Vec::as_slice).collect();
        let shifted = infonce(&ext(&h, 1.0), &ext(&pos, shift), &refs2, 1.0);
        prop_assert!((base - shifted).abs() < 1e-9);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn cosine_is_bounded_symmetric_and_scale_free(
        a in prop::collection::vec(-1e3f64..1e3, 5),
        b in prop::collection::vec(-1e3f64..1e3, 5),
        lambda in 1e-3f64..1e3,
    ) {
        let c = userrep::cosine_sim(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
        prop_assert_eq!(c, userrep::cosine_sim(&b, &a).unwrap());
        let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
        prop_assert!((userrep::cosine_sim(&scaled, &b).unwrap() - c).abs() < 1e-9);
    }

    #[test]
    fn sequence_params_round_trip(s in any::<u64>()) {
        let fx = Fixture::new(s, 6, 2);
        let dir = tempfile::tempdir().unwrap();
        fx.params.save(dir.path()).unwrap();
        prop_assert_eq!(SeqEncoderParams::load(dir.path()).unwrap(), fx.params);
    }
}
