use super::*;
use proptest::prelude::*;

fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, &v)| {
                let a = -2.0 * core::f64::consts::PI * (k * i % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

fn sine(freq: f64, n: usize, amp: f32) -> AudioSignal {
    let samples = (0..n)
        .map(|i| amp * (2.0 * core::f64::consts::PI * freq * i as f64 / 22050.0).sin() as f32)
        .collect();
    AudioSignal::new(samples, SAMPLE_RATE)
}

#[test]
fn frame_centers() {
    assert_eq!(frame_center(0, 22050, 20), 0);
    assert_eq!(frame_center(1, 22050, 20), 1103);
    assert_eq!(frame_center(2, 22050, 20), 2205);
    // no drift over long audio
    assert_eq!(frame_center(72_000, 22050, 20), 79_380_000);
}

#[test]
fn one_second_gives_twenty_frames() {
    assert_eq!(frame_count(22050, 22050, 20), 20);
    assert_eq!(frame_count(0, 22050, 20), 0);
    assert_eq!(frame_count(1, 22050, 20), 1);
    let frames = frame_signal(&sine(440.0, 22050, 0.5), 20, 2048);
    assert_eq!(frames.len(), 20);
    assert!(frame_signal(&AudioSignal::new(vec![], 22050), 20, 2048).is_empty());
}

#[test]
fn silence_frames_are_zero() {
    let frames = frame_signal(&AudioSignal::new(vec![0.0; 5000], 22050), 20, 2048);
    assert!(frames.iter().all(|f| f.iter().all(|&x| x == 0.0)));
    let mags = stft_magnitude(&frames).unwrap();
    assert!(mags
        .iter()
        .all(|m| m.len() == 1025 && m.iter().all(|&x| x == 0.0)));
}

#[test]
fn fft_matches_naive_dft() {
    let x: Vec<f64> = (0..64)
        .map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
        .collect();
    let fft = Fft::new(64).unwrap();
    let mut data: Vec<(f64, f64)> = x.iter().map(|&v| (v, 0.0)).collect();
    fft.transform(&mut data);
    for (a, b) in data.iter().zip(naive_dft(&x)) {
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }
    assert!(Fft::new(100).is_err());
}

#[test]
fn bin_center_sine_concentrates_in_its_bin() {
    let k = 40;
    let x: Vec<f64> = (0..2048)
        .map(|i| (2.0 * core::f64::consts::PI * k as f64 * i as f64 / 2048.0).sin())
        .collect();
    let mag = stft_magnitude(&[x]).unwrap().remove(0);
    let (argmax, peak) = mag
        .iter()
        .enumerate()
        .fold((0, 0.0), |a, (i, &m)| if m > a.1 { (i, m) } else { a });
    assert_eq!(argmax, k);
    assert!((peak - 1024.0).abs() < 1e-6);
    let rest: f64 = mag
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, m)| m)
        .sum();
    assert!(rest < 1e-6);
}

#[test]
fn parseval() {
    let frames = frame_signal(&sine(333.3, 8000, 0.7), 20, 2048);
    for w in &frames {
        let mag = stft_magnitude(core::slice::from_ref(w)).unwrap().remove(0);
        let n = mag.len() - 1;
        let spec: f64 =
            mag[0] * mag[0] + mag[n] * mag[n] + 2.0 * mag[1..n].iter().map(|m| m * m).sum::<f64>();
        let energy: f64 = 2048.0 * w.iter().map(|x| x * x).sum::<f64>();
        assert!((spec - energy).abs() <= 1e-6 * energy.max(1e-30));
    }
}

#[test]
fn reference_filterbank_contract() {
    let fb = Filterbank::reference();
    assert_eq!(fb.n_filters(), 78);
    assert_eq!(fb.n_fft_bins, 1025);
    assert!(fb.center_bins.windows(2).all(|w| w[0] < w[1]));
    assert!(fb.center_hz.iter().all(|&f| (60.0..=6000.0).contains(&f)));
    for i in 0..78 {
        let row = fb.row(i);
        assert!(row.iter().all(|&w| w >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(row[fb.center_bins[i]] > 0.0);
    }
}

#[test]
fn filterbank_top_is_log_spaced() {
    // above the low-frequency region the centers follow the semitone grid
    let fb = Filterbank::reference();
    let hz = 22050.0 / 2048.0;
    let top = *fb.center_bins.last().unwrap();
    assert_eq!(
        top,
        (6000.0f64.min(60.0 * 2f64.powf(79.0 / 12.0)) / hz).round() as usize
    );
    let ratio = fb.center_hz[77] / fb.center_hz[65];
    assert!((ratio - 2.0).abs() < 0.03, "octave ratio {}", ratio);
}

#[test]
fn filterbank_rejects_unreachable_counts() {
    assert!(build_semilog_filterbank(22050, 2048, 60.0, 80.0, 78).is_err());
    assert!(build_semilog_filterbank(22050, 2048, 100.0, 50.0, 10).is_err());
}

#[test]
fn filterbank_truncates_surplus_from_the_top() {
    let fb = build_semilog_filterbank(22050, 2048, 60.0, 6000.0, 40).unwrap();
    assert_eq!(fb.n_filters(), 40);
    assert!(fb.center_hz[39] < 1000.0);
}

#[test]
fn sine_peaks_near_its_frequency() {
    let spec = spectrogram(&sine(440.0, 22050, 0.5), None);
    assert_eq!(spec.n_bins, 78);
    let f = spec.frame(10);
    let argmax = (0..78)
        .max_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap())
        .unwrap();
    let fb = Filterbank::reference();
    assert!(
        (fb.center_hz[argmax] - 440.0).abs() < 30.0,
        "{}",
        fb.center_hz[argmax]
    );
}

#[test]
fn standardizing_with_own_stats() {
    let a = spectrogram(&sine(300.0, 30000, 0.4), None);
    let b = spectrogram(&sine(1200.0, 20000, 0.8), None);
    let stats = NormStats::fit([&a, &b]).unwrap();
    stats.validate().unwrap();
    let sa = a.standardized_with(&stats);
    let sb = b.standardized_with(&stats);
    for bin in 0..78 {
        let vals: Vec<f64> = sa
            .frames()
            .chain(sb.frames())
            .map(|f| f[bin] as f64)
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6 * 10.0, "bin {} mean {}", bin, mean);
        let raw_var = a
            .frames()
            .chain(b.frames())
            .map(|f| f[bin] as f64)
            .fold(0.0, |m, v| if v != 0.0 { 1.0 } else { m });
        if raw_var > 0.0 {
            assert!((var - 1.0).abs() < 1e-4, "bin {} var {}", bin, var);
        }
    }
}

#[test]
fn silence_with_stats_is_constant() {
    let stats = NormStats {
        mean: vec![0.5; 78],
        std: vec![2.0; 78],
    };
    let s = spectrogram(&AudioSignal::new(vec![0.0; 4000], 22050), Some(&stats));
    assert!(s.standardized);
    assert!(s.data.iter().all(|&x| x == -0.25));
}

#[test]
fn deterministic() {
    let audio = sine(523.0, 10000, 0.3);
    assert_eq!(spectrogram(&audio, None), spectrogram(&audio, None));
}

#[test]
fn window_ending_at_pads_with_zeros() {
    let spec = Spectrogram::new((0..6).map(|v| v as f32).collect(), 2, 20.0, true).unwrap();
    // frames: [0,1], [2,3], [4,5]
    let w = spec.window_ending_at(1, 3);
    assert_eq!(w, vec![0.0, 0.0, 2.0, 0.0, 1.0, 3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn louder_audio_never_lowers_a_bin(seed in 0u64..1000) {
        let n = 6000;
        let samples: Vec<f32> = (0..n).map(|i| {
            let x = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(seed.wrapping_mul(1442695040888963407));
            ((x >> 33) as f32 / (1u64 << 31) as f32) - 0.5
        }).collect();
        let quiet = spectrogram(&AudioSignal::new(samples.clone(), 22050), None);
        let loud = spectrogram(&AudioSignal::new(samples.iter().map(|s| s * 2.0).collect(), 22050), None);
        for (q, l) in quiet.data.iter().zip(&loud.data) {
            prop_assert!(l >= q);
        }
    }

    #[test]
    fn frames_are_causal(n in 3000usize..12000, cut in 0usize..12000) {
        let audio = sine(250.0, n, 0.5);
        let full = spectrogram(&audio, None);
        let cut = cut.min(n);
        let truncated = spectrogram(&AudioSignal::new(audio.samples[..cut].to_vec(), 22050), None);
        for t in 0..truncated.len() {
            if frame_center(t, 22050, 20) + 1024 <= cut {
                prop_assert_eq!(full.frame(t), truncated.frame(t));
            }
        }
    }

    #[test]
    fn frame_count_matches_duration(n in 1usize..200_000) {
        let floor_plus_one = n * 20 / 22050 + 1;
        let c = frame_count(n, 22050, 20);
        prop_assert!(c == floor_plus_one || (c + 1 == floor_plus_one && (n * 20) % 22050 == 0));
    }
}
