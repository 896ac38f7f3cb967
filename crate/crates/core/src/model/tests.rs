use super::*;
use crate::harness::Pose;

const VOCAB: usize = 20;

fn tiny(seed: u64) -> Model {
    Model::new(ModelConfig::tiny(), VOCAB, seed).unwrap()
}

fn obs(model: &Model, seed: u64, grid: usize) -> Observation {
    let f = model.config().feature_dim;
    let mut rng = Rng::new(seed);
    Observation {
        rgb_pooled: Tensor::uniform(&[f], 1.0, &mut rng),
        depth_pooled: Tensor::uniform(&[f], 1.0, &mut rng),
        rgb_spatial: Tensor::uniform(&[grid, f], 1.0, &mut rng),
        depth_spatial: Tensor::uniform(&[grid, f], 1.0, &mut rng),
    }
}

#[test]
fn low_level_encoding() {
    let m = tiny(1);
    let mut g = m.graph();
    let one = m.encode_low(&mut g, &[5]).unwrap();
    assert_eq!(g.shape(one), [1, 6]);
    let a = m.encode_low(&mut g, &[4, 5, 6]).unwrap();
    let b = m.encode_low(&mut g, &[6, 5, 4]).unwrap();
    assert_ne!(g.value(a).row(1).unwrap(), g.value(b).row(1).unwrap());
    assert!(m.encode_low(&mut g, &[]).is_err());
    assert!(m.encode_low(&mut g, &[VOCAB as u32]).is_err());

    let m2 = tiny(1);
    let mut g2 = m2.graph();
    let a2 = m2.encode_low(&mut g2, &[4, 5, 6]).unwrap();
    assert_eq!(g.value(a), g2.value(a2));
}

#[test]
fn high_level_encoding() {
    let m = tiny(2);
    let mut g = m.graph();
    let one = m.encode_high(&mut g, &[vec![4, 5]]).unwrap();
    assert_eq!(g.shape(one), [1, 6]);
    let dup = m.encode_high(&mut g, &[vec![4, 7], vec![9], vec![4, 7]]).unwrap();
    let t = g.value(dup);
    assert_eq!(t.row(0).unwrap(), t.row(2).unwrap());
    let norm: f64 = t.row(1).unwrap().iter().map(|v| v * v).sum();
    assert!(norm.is_finite() && norm > 0.0);
    assert!(m.encode_high(&mut g, &[]).is_err());
    assert!(m.encode_high(&mut g, &[vec![]]).is_err());
}

#[test]
fn memory_units() {
    let zero = Model::zeroed(ModelConfig::tiny(), VOCAB).unwrap();
    let o = obs(&zero, 3, 2);
    let mut g = zero.graph();
    let s = zero.initial_state(&mut g).unwrap();
    let ov = zero.bind_observation(&mut g, &o).unwrap();
    let (hh, hl) = zero.memory_step(&mut g, &s, &ov, &mut Dropout::Off).unwrap();
    assert!(g.value(hh).values().iter().all(|v| *v == 0.0));
    assert!(g.value(hl).values().iter().all(|v| *v == 0.0));

    let m = tiny(3);
    let mut g = m.graph();
    let s = m.initial_state(&mut g).unwrap();
    let ov = m.bind_observation(&mut g, &o).unwrap();
    let (hh, hl) = m.memory_step(&mut g, &s, &ov, &mut Dropout::Off).unwrap();
    assert_ne!(g.value(hh), g.value(hl));
    for v in g.value(hh).values().iter().chain(g.value(hl).values()) {
        assert!(v.abs() < 1.0);
    }
}

#[test]
fn observation_shapes_checked() {
    let m = tiny(4);
    let mut o = obs(&m, 1, 3);
    o.depth_spatial = Tensor::zeros(&[2, 6]);
    let mut g = m.graph();
    assert!(m.bind_observation(&mut g, &o).is_err());
    let mut o = obs(&m, 1, 3);
    o.rgb_pooled = Tensor::zeros(&[5]);
    assert!(m.bind_observation(&mut g, &o).is_err());
}

fn fused(m: &Model, subs: &[Vec<u32>]) -> Vec<f64> {
    let mut g = m.graph();
    let feats = m
        .encode_instruction(&mut g, &[4, 5, 6, 7], subs, &mut Dropout::Off)
        .unwrap();
    let s = m.initial_state(&mut g).unwrap();
    let ov = m.bind_observation(&mut g, &obs(m, 9, 2)).unwrap();
    let (hh, hl) = m.memory_step(&mut g, &s, &ov, &mut Dropout::Off).unwrap();
    let out = m.mla_fuse(&mut g, hh, hl, &feats).unwrap();
    assert_eq!(g.shape(out.fused), [8]);
    let low_sum: f64 = g.value(out.alpha_low).values().iter().sum();
    assert!((low_sum - 1.0).abs() < 1e-9);
    g.value(out.alpha).values().to_vec()
}

#[test]
fn sub_instruction_scores() {
    let m = tiny(5);
    assert_eq!(fused(&m, &[vec![4, 5]]), [1.0]);
    for n in 2..6 {
        let subs: Vec<Vec<u32>> = (0..n).map(|i| vec![4 + i as u32, 10]).collect();
        let alpha = fused(&m, &subs);
        assert_eq!(alpha.len(), n);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(alpha.iter().all(|a| *a >= 0.0));
    }
    let same = fused(&m, &[vec![7, 8], vec![7, 8], vec![7, 8]]);
    for a in same {
        assert!((a - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn spatial_attention() {
    let m = tiny(6);
    let mut g = m.graph();
    let q = g.constant(Tensor::full(&[8], 0.3)).unwrap();
    let ov = m.bind_observation(&mut g, &obs(&m, 2, 3)).unwrap();
    let scores = m.spatial_scores(&mut g, q, &ov).unwrap();
    assert_eq!(g.shape(scores), [6]);
    assert!((g.value(scores).sum() - 1.0).abs() < 1e-12);
    let a = m.spatial_attend(&mut g, q, &ov).unwrap();
    let b = m.spatial_attend(&mut g, q, &ov).unwrap();
    assert_eq!(g.value(a), g.value(b));
    assert_eq!(g.shape(a), [8]);
}

#[test]
fn zero_model_decodes_uniform_stop() {
    let m = Model::zeroed(ModelConfig::tiny(), VOCAB).unwrap();
    let mut g = m.graph();
    let feats = m
        .encode_instruction(&mut g, &[4, 5], &[vec![4], vec![5]], &mut Dropout::Off)
        .unwrap();
    let s = m.initial_state(&mut g).unwrap();
    let out = m.step(&mut g, &s, &obs(&m, 1, 2), &feats, &mut Dropout::Off).unwrap();
    assert_eq!(g.value(out.decoded.dist).values(), [0.25; 4]);
    assert_eq!(out.decoded.action, Action::Stop);
    assert_eq!(g.value(out.decoded.progress).values(), [0.5]);
}

#[test]
fn decoded_distribution() {
    let m = tiny(7);
    let mut g = m.graph();
    let feats = m
        .encode_instruction(&mut g, &[4, 5, 6], &[vec![4], vec![5, 6]], &mut Dropout::Off)
        .unwrap();
    let s = m.initial_state(&mut g).unwrap();
    let out = m.step(&mut g, &s, &obs(&m, 1, 2), &feats, &mut Dropout::Off).unwrap();
    let d = g.value(out.decoded.dist).values();
    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(d.iter().all(|p| *p > 0.0));
    assert_eq!(out.decoded.action.index(), argmax(d));
    let shifted: Vec<f64> = g.value(out.decoded.logits).values().iter().map(|l| l + 7.5).collect();
    assert_eq!(argmax(&softmax(&shifted)), out.decoded.action.index());
    let p = g.value(out.decoded.progress).values()[0];
    assert!(p > 0.0 && p < 1.0);
}

fn softmax(x: &[f64]) -> Vec<f64> {
    crate::num::softmax_values(x)
}

#[test]
fn argmax_ties_pick_lowest() {
    assert_eq!(argmax(&[0.25; 4]), 0);
    assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    assert_eq!(Action::from_index(3).unwrap(), Action::TurnRight);
    assert!(Action::from_index(4).is_err());
}

#[test]
fn dropout_only_in_training() {
    let m = tiny(8);
    let run = |dropout: &mut Dropout| {
        let mut g = m.graph();
        let feats = m
            .encode_instruction(&mut g, &[4, 5, 6], &[vec![4], vec![5, 6]], dropout)
            .unwrap();
        let s = m.initial_state(&mut g).unwrap();
        let out = m.step(&mut g, &s, &obs(&m, 1, 2), &feats, dropout).unwrap();
        g.value(out.decoded.dist).clone()
    };
    assert_eq!(run(&mut Dropout::Off), run(&mut Dropout::Off));
    let mut on = Dropout::On { rate: 0.25, rng: Rng::new(1) };
    assert_ne!(run(&mut on), run(&mut Dropout::Off));
}

#[test]
fn dropout_mask_scales_kept_entries() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[4000], 1.0)).unwrap();
    let mut d = Dropout::On { rate: 0.25, rng: Rng::new(11) };
    let y = d.apply(&mut g, x).unwrap();
    let v = g.value(y).values();
    let kept = v.iter().filter(|x| **x != 0.0).count() as f64 / v.len() as f64;
    assert!((kept - 0.75).abs() < 0.03);
    assert!(v.iter().all(|x| *x == 0.0 || (*x - 1.0 / 0.75).abs() < 1e-15));
}

#[test]
fn policy_state_round_trip() {
    let m = tiny(9);
    let s = m.initial_episode_state(Pose::default());
    assert_eq!(s.prev_action, None);
    let start_row = m.prev_action_embedding(None).unwrap();
    assert_eq!(start_row.shape(), [3]);
    let mut g = m.graph();
    let feats = m
        .encode_instruction(&mut g, &[4, 5], &[vec![4, 5]], &mut Dropout::Off)
        .unwrap();
    let snap = InstructionTensors::capture(&g, &feats);
    let mut g2 = m.graph();
    let bound = snap.bind(&mut g2).unwrap();
    assert_eq!(bound.word_count(&g2), 2);
    assert_eq!(bound.sub_count(&g2), 1);
    assert_eq!(g2.value(bound.high), g.value(feats.high));
}
