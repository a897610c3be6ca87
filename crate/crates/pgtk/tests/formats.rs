use pgtk::config::{parse_override, RunConfig};
use pgtk::container::{decode_model, encode_model, load_model, save_model, ContainerError};
use pgtk::dataset::{
    load_dataset, load_piece, piece_dir, save_dataset, save_piece, DatasetError, Manifest,
};
use pgtk::pgm::{decode_pgm, encode_pgm};
use pgtk::wav::{read_wav, write_wav, write_wav_i16};
use pgtk_core::data::{generate_piece, GenConfig, GrayImage};
use pgtk_core::dsp::{AudioSignal, NormStats};
use pgtk_core::model::{EncoderKind, Model, ModelConfig};
use proptest::prelude::*;

fn small_model(encoder: EncoderKind, seed: u64) -> Model<f32> {
    let cfg = ModelConfig {
        encoder,
        base_filters: 2,
        ..ModelConfig::default()
    };
    let mut stats = NormStats::identity(cfg.n_bins);
    stats.mean[3] = 0.25;
    stats.std[5] = 2.0;
    Model::init(cfg, stats, seed).unwrap()
}

fn bits(m: &Model<f32>) -> Vec<(String, Vec<usize>, Vec<u32>)> {
    m.params
        .iter()
        .map(|(_, n, t)| {
            (
                n.to_string(),
                t.shape().to_vec(),
                t.data().iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

#[test]
fn model_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (i, enc) in [EncoderKind::Cb, EncoderKind::Fb, EncoderKind::Ntc]
        .into_iter()
        .enumerate()
    {
        let m = small_model(enc, 3 + i as u64);
        let path = dir.path().join(format!("m{i}.model"));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.norm_stats, m.norm_stats);
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(encode_model(&back), std::fs::read(&path).unwrap());
    }
}

#[test]
fn every_payload_byte_is_protected() {
    let m = small_model(EncoderKind::Cb, 1);
    let bytes = encode_model(&m);
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload = 16 + meta_len..bytes.len() - 8;
    let step = (payload.len() / 97).max(1);
    for pos in payload.step_by(step) {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x01;
        assert!(
            matches!(decode_model(&bad), Err(ContainerError::Checksum { .. })),
            "byte {pos}"
        );
    }
}

#[test]
fn header_damage_is_reported() {
    let bytes = encode_model(&small_model(EncoderKind::Fb, 2));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_model(&bad), Err(ContainerError::Magic)));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(
        decode_model(&bad),
        Err(ContainerError::Version(9))
    ));
    assert!(matches!(
        decode_model(&bytes[..bytes.len() / 2]),
        Err(ContainerError::Checksum { .. } | ContainerError::Truncated(_))
    ));
    assert!(matches!(
        decode_model(&bytes[..10]),
        Err(ContainerError::Truncated(_))
    ));
}

#[test]
fn dataset_round_trip_with_audio_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let wave = GenConfig {
        staves: 2,
        notes_per_staff: 6,
        ..GenConfig::default()
    };
    let feats = GenConfig {
        features: true,
        ambiguity: true,
        ..wave.clone()
    };
    let pieces = vec![
        generate_piece(11, &wave).unwrap(),
        generate_piece(12, &feats).unwrap(),
    ];
    let manifest = Manifest::for_pieces(&pieces);
    assert!(manifest.pieces[1].ambiguous);
    save_dataset(dir.path(), &pieces, &manifest).unwrap();
    assert!(piece_dir(dir.path(), &pieces[0].id)
        .join("audio.wav")
        .exists());
    assert!(piece_dir(dir.path(), &pieces[1].id)
        .join("feats.f32")
        .exists());
    let ds = load_dataset(dir.path()).unwrap();
    assert_eq!(ds.manifest, manifest);
    assert_eq!(ds.pieces, pieces);
}

#[test]
fn damaged_piece_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate_piece(
        5,
        &GenConfig {
            staves: 2,
            notes_per_staff: 4,
            ..GenConfig::default()
        },
    )
    .unwrap();
    let pd = dir.path().join(&p.id);
    save_piece(&pd, &p).unwrap();
    std::fs::write(pd.join("align.json"), "{ nope").unwrap();
    std::fs::remove_file(pd.join("page.pgm")).unwrap();
    match load_piece(&pd) {
        Err(DatasetError::Invalid(issues)) => {
            assert_eq!(issues.len(), 2, "{issues:?}");
            let text = DatasetError::Invalid(issues).to_string();
            assert!(
                text.contains("align.json") && text.contains("page.pgm"),
                "{text}"
            );
        }
        other => panic!("expected invalid piece, got {other:?}"),
    }
}

#[test]
fn missing_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::Invalid(_))
    ));
}

#[test]
fn wav_formats() {
    let dir = tempfile::tempdir().unwrap();
    let audio = AudioSignal::new(
        (0..500).map(|i| ((i as f32) * 0.05).sin() * 0.7).collect(),
        22050,
    );
    let f = dir.path().join("f.wav");
    write_wav(&f, &audio).unwrap();
    assert_eq!(read_wav(&f).unwrap(), audio);
    let i = dir.path().join("i.wav");
    write_wav_i16(&i, &audio).unwrap();
    let back = read_wav(&i).unwrap();
    assert_eq!(back.samples.len(), audio.samples.len());
    for (a, b) in back.samples.iter().zip(&audio.samples) {
        assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-7);
    }
    let wrong = dir.path().join("w.wav");
    write_wav(&wrong, &AudioSignal::new(vec![0.0; 10], 44100)).unwrap();
    assert!(read_wav(&wrong).is_err());
}

#[test]
fn pgm_accepts_comments() {
    let img = decode_pgm(&b"P5\n# made by hand\n2 1\n255\n\x00\xff"[..]).unwrap();
    assert_eq!(
        (img.width, img.height, img.pixels.clone()),
        (2, 1, vec![0, 255])
    );
    assert!(decode_pgm(&b"P2\n2 1\n255\n0 255"[..]).is_err());
    assert!(decode_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
}

#[test]
fn config_text_reproduces_the_run() {
    let mut cfg = RunConfig::default();
    cfg.set_all(&[
        ("seed".into(), "42".into()),
        ("model.encoder".into(), "ntc".into()),
        ("train.lr".into(), "0.003".into()),
        ("paths.data".into(), "/tmp/some data".into()),
    ])
    .unwrap();
    assert_eq!(cfg.train.seed, 42);
    let mut back = RunConfig::default();
    back.apply_text(&cfg.to_text()).unwrap();
    assert_eq!(back, cfg);
    assert!(RunConfig::default().set("train.nonsense", "1").is_err());
    assert!(RunConfig::default().set("train.lr", "fast").is_err());
    assert_eq!(
        parse_override("a.b = 3").unwrap(),
        ("a.b".into(), "3".into())
    );
    assert!(parse_override("novalue").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgm_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let pixels = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
        let img = GrayImage { width: w, height: h, pixels };
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)[..]).unwrap(), img);
    }

    #[test]
    fn config_values_survive_text(seed in any::<u64>(), lr in 1e-6f64..1.0, epochs in 1usize..500, tempo_aug in any::<bool>()) {
        let mut cfg = RunConfig::default();
        cfg.set("seed", &seed.to_string()).unwrap();
        cfg.set("train.lr", &lr.to_string()).unwrap();
        cfg.set("train.max_epochs", &epochs.to_string()).unwrap();
        cfg.set("train.tempo_aug", &tempo_aug.to_string()).unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
