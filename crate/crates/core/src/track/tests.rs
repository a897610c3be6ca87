use super::*;
use crate::dsp::{NormStats, Spectrogram};
use crate::model::{EncoderKind, ModelConfig};
use proptest::prelude::*;
use rand::Rng;

fn small_model(kind: EncoderKind, seed: u64) -> Model<f32> {
    let cfg = ModelConfig {
        encoder: kind,
        base_filters: 2,
        depth: 3,
        film_blocks: "BCD".into(),
        encoder_channels: vec![4, 4, 4, 4],
        encoder_head: 4,
        embed_dim: 8,
        hidden: 8,
        ..ModelConfig::default()
    };
    let mut m = Model::init(cfg, NormStats::identity(78), seed).unwrap();
    // non-zero FiLM so predictions depend on the audio
    let mut rng = crate::rng::from_seed(seed);
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        if m.params.name(id).contains(".film.") {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    m
}

fn random_spec(n: usize, seed: u64) -> Spectrogram {
    let mut rng = crate::rng::from_seed(seed);
    Spectrogram::new(
        (0..n * 78).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        78,
        20.0,
        true,
    )
    .unwrap()
}

fn page(seed: u64) -> InkImage {
    let mut rng = crate::rng::from_seed(seed);
    InkImage {
        width: 24,
        height: 20,
        data: (0..480).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

#[test]
fn center_of_mass_examples() {
    let mut m = vec![0.0f32; 100];
    m[7 * 10 + 5] = 0.9;
    assert_eq!(
        center_of_mass(&m, 10, 0.5, CenterMode::Weighted),
        Some((5.0, 7.0))
    );
    let mut m = vec![0.0f32; 11];
    m[0] = 0.8;
    m[10] = 0.8;
    assert_eq!(
        center_of_mass(&m, 11, 0.5, CenterMode::Weighted),
        Some((5.0, 0.0))
    );
    assert_eq!(
        center_of_mass(&[0.0; 16], 4, 0.5, CenterMode::Weighted),
        None
    );
    let m = [0.6f32, 0.0, 1.0, 0.0];
    assert_eq!(
        center_of_mass(&m, 4, 0.5, CenterMode::Uniform),
        Some((1.0, 0.0))
    );
    let (x, y) = center_of_mass(&m, 4, 0.5, CenterMode::Weighted).unwrap();
    assert!((x - 1.25).abs() < 1e-6 && y == 0.0);
}

#[test]
fn init_state() {
    let m = small_model(EncoderKind::Cb, 1);
    let a = Tracker::new(&m, &page(1)).unwrap();
    let b = Tracker::new(&m, &page(1)).unwrap();
    assert_eq!(a.stem, b.stem);
    assert!(a
        .hidden()
        .0
        .data()
        .iter()
        .chain(a.hidden().1.data())
        .all(|&v| v == 0.0));
    assert_eq!(a.frames().count(), 40);
    assert!(a.frames().all(|f| f.iter().all(|&v| v == 0.0)));
    let fb = small_model(EncoderKind::Fb, 1);
    assert_eq!(Tracker::new(&fb, &page(1)).unwrap().frames().count(), 1);
    assert!(Tracker::new(&m, &InkImage::blank(15, 30)).is_err());
}

#[test]
fn steps_count_and_masks_are_probabilities() {
    let m = small_model(EncoderKind::Cb, 2);
    let mut t = Tracker::new(&m, &page(2)).unwrap();
    let spec = random_spec(5, 3);
    for (i, f) in spec.frames().enumerate() {
        let p = t.step(f).unwrap();
        assert_eq!(p.step, i);
        assert_eq!(t.step_count(), i + 1);
        assert_eq!(p.mask.len(), 480);
        assert!(p.mask.iter().all(|&v| v > 0.0 && v < 1.0));
    }
    assert!(t.step(&[0.0; 77]).is_err());
}

#[test]
fn streaming_matches_batch() {
    for kind in [EncoderKind::Cb, EncoderKind::Fb, EncoderKind::Ntc] {
        let m = small_model(kind, 4);
        let spec = random_spec(12, 5);
        let batch = predict_sequence(&m, &page(4), &spec).unwrap();
        let mut t = Tracker::new(&m, &page(4)).unwrap();
        for (f, expected) in spec.frames().zip(&batch) {
            assert_eq!(&t.step(f).unwrap().mask, expected, "{:?}", kind);
        }
    }
}

#[test]
fn stride_mode_reuses_masks() {
    let m = small_model(EncoderKind::Cb, 6);
    let spec = random_spec(7, 7);
    let mut every = Tracker::new(&m, &page(6)).unwrap();
    let mut strided = Tracker::new(&m, &page(6)).unwrap().with_stride(3);
    let mut last = Vec::new();
    for (i, f) in spec.frames().enumerate() {
        let a = every.step(f).unwrap();
        let b = strided.step(f).unwrap();
        assert_eq!(b.evaluated, i % 3 == 0);
        if b.evaluated {
            assert_eq!(a.mask, b.mask);
            last = b.mask.clone();
        } else {
            assert_eq!(b.mask, last);
        }
    }
}

#[test]
fn invalid_positions_hold_the_last_valid_one() {
    let m = small_model(EncoderKind::Fb, 8);
    let spec = random_spec(3, 9);
    let mut t = Tracker::new(&m, &page(8))
        .unwrap()
        .with_threshold(0.0, CenterMode::Weighted);
    let first = t.step(spec.frame(0)).unwrap();
    assert!(first.position.is_some());
    let mut t2 = t.clone().with_threshold(2.0, CenterMode::Weighted);
    let p = t2.step(spec.frame(1)).unwrap();
    assert_eq!(p.position, None);
    assert_eq!(p.held, first.position);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn future_frames_do_not_change_the_past(seed in 0u64..1000, cut in 1usize..10) {
        let m = small_model(EncoderKind::Cb, seed);
        let spec = random_spec(10, seed + 1);
        let mut altered = spec.clone();
        for v in &mut altered.data[cut * 78..] {
            *v = -*v + 1.0;
        }
        let mut a = Tracker::new(&m, &page(seed)).unwrap();
        let mut b = Tracker::new(&m, &page(seed)).unwrap();
        for t in 0..cut {
            prop_assert_eq!(a.step(spec.frame(t)).unwrap(), b.step(altered.frame(t)).unwrap());
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_pixels(seed in 0u64..1000, lo in 0.0f32..1.0, d in 0.0f32..1.0) {
        let mut rng = crate::rng::from_seed(seed);
        let mask: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let hi = lo + d;
        for &p in &mask {
            prop_assert!(!(p >= hi) || p >= lo);
        }
        let count = |t: f32| mask.iter().filter(|&&p| p >= t).count();
        prop_assert!(count(hi) <= count(lo));
    }
}
