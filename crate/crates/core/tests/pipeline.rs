//! Sounding chain end to end: synthetic channels through IQ capture and back.

use std::f64::consts::PI;

use csikit::channel::Scenario;
use csikit::dataset::{CsiMatrix, CsiRecord, Dataset, GpsTag, Origin};
use csikit::ofdm::iq::IqCapture;
use csikit::ofdm::pipeline::{extract, loopback, ExtractOptions, LoopbackOptions};
use csikit::ofdm::{apply_channel, build_frame, denoise_truncate, estimate_cfo, estimate_csi, OfdmConfig, TapProjector};
use csikit::{Complex64, Error};
use rand::Rng;

/// Used-bin response of a tapped delay line with integer delays.
fn response(config: &OfdmConfig, taps: &[(usize, Complex64)]) -> Vec<Complex64> {
    config
        .used_indices()
        .iter()
        .map(|&s| {
            taps.iter()
                .map(|&(d, g)| g * Complex64::from_polar(1.0, -2.0 * PI * (s * d as i64) as f64 / config.n_sub as f64))
                .sum()
        })
        .collect()
}

fn random_taps<R: Rng>(rng: &mut R, max_delay: usize) -> Vec<(usize, Complex64)> {
    (0..6)
        .map(|_| {
            (
                rng.random_range(0..max_delay),
                Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(-PI..PI)),
            )
        })
        .collect()
}

fn confined_dataset(m: usize, n_ant: usize, seed: u64) -> Dataset {
    let config = OfdmConfig::default();
    let mut rng = csikit::seed::rng(seed);
    let records = (0..m)
        .map(|i| {
            let rows: Vec<Vec<Complex64>> = (0..n_ant).map(|_| response(&config, &random_taps(&mut rng, 128))).collect();
            CsiRecord::new(GpsTag::at(i as f64, 0.0, 1.5), CsiMatrix::from_rows_f64(&rows).unwrap())
        })
        .collect();
    Dataset {
        config,
        records,
        origin: Origin::Synthetic,
        seed: Some(seed),
    }
}

fn max_err(a: &Dataset, b: &Dataset) -> f64 {
    a.records
        .iter()
        .zip(&b.records)
        .flat_map(|(x, y)| x.h.as_slice().iter().zip(y.h.as_slice()).map(|(p, q)| (p - q).norm() as f64))
        .fold(0.0, f64::max)
}

#[test]
fn noiseless_capture_round_trips_through_files() {
    let ds = confined_dataset(4, 6, 11);
    let opts = LoopbackOptions {
        cfo_hz: -5200.0,
        chain_phase: vec![0.0, 1.0, -2.5, 0.3, 3.1, -0.7],
        ..Default::default()
    };
    let lb = loopback(&ds, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cap.iq");
    lb.capture.write(&p).unwrap();
    let capture = IqCapture::read(&p).unwrap();
    let ex = extract(&capture, &ExtractOptions::default()).unwrap();
    assert_eq!(ex.dataset.len(), 4);
    // Samples and CSI are stored as f32, which bounds both comparisons.
    for f in &ex.frames {
        assert!((f.cfo_hz + 5200.0).abs() < 1e-4, "{}", f.cfo_hz);
    }
    let err = max_err(&ex.dataset, &lb.truth);
    assert!(err < 1e-6, "max error {err}");
}

#[test]
fn chain_gains_are_levelled_by_noise_floors() {
    // Without noise a gain offset is indistinguishable from the channel.
    let ds = confined_dataset(3, 4, 12);
    let opts = LoopbackOptions {
        noise_db: Some(-40.0),
        chain_gain_db: vec![4.0, -4.0, 2.0, -2.0],
        seed: 1,
        ..Default::default()
    };
    let lb = loopback(&ds, &opts).unwrap();
    let ex = extract(&lb.capture, &ExtractOptions::default()).unwrap();
    // Floors are estimated from 924 bins each, so a few percent remain.
    for (x, y) in ex.dataset.records.iter().zip(&lb.truth.records) {
        let diff: f64 = x.h.as_slice().iter().zip(y.h.as_slice()).map(|(p, q)| (p - q).norm_sqr() as f64).sum();
        let rel = (diff / y.h.as_slice().iter().map(|q| q.norm_sqr() as f64).sum::<f64>()).sqrt();
        assert!(rel < 0.05, "relative error {rel}");
    }
}

#[test]
fn synthetic_scene_loopback_detects_every_frame() {
    let sc = Scenario::from_kv("x_min = -60\nx_max = 0\ny_min = -60\ny_max = 0\ngrid_step_m = 30\n").unwrap();
    let ds = sc.synth_dataset().unwrap();
    assert_eq!(ds.len(), 9);
    let lb = loopback(
        &ds,
        &LoopbackOptions {
            cfo_hz: 1800.0,
            noise_db: Some(-20.0),
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let ex = extract(&lb.capture, &ExtractOptions::default()).unwrap();
    assert_eq!(ex.frames.len(), 9);
    for (i, f) in ex.frames.iter().enumerate() {
        assert_eq!(f.id, i as u32);
        assert!((f.cfo_hz - 1800.0).abs() < 200.0);
    }
}

#[test]
fn cfo_error_shrinks_with_snr() {
    let c = OfdmConfig::default();
    let f = build_frame(&c, 5, &[]).unwrap();
    let h = response(&c, &[(0, Complex64::new(1.0, 0.0)), (9, Complex64::new(0.3, -0.2))]);
    let rms = |snr: f64| {
        let e2: f64 = (0..20)
            .map(|s| {
                let rx = apply_channel(&f, &h, 2500.0, snr, s).unwrap();
                (estimate_cfo(&rx, 0, &c).unwrap() - 2500.0).powi(2)
            })
            .sum();
        (e2 / 20.0).sqrt()
    };
    let (lo, hi) = (rms(5.0), rms(25.0));
    assert!(hi < lo, "{hi} vs {lo}");
    assert!(hi < 20.0, "{hi}");
}

#[test]
fn truncation_gain_tracks_tap_ratio() {
    let c = OfdmConfig::default();
    let f = build_frame(&c, 2, &[]).unwrap();
    let mut rng = csikit::seed::rng(8);
    let (mut ls, mut dn) = (0.0, 0.0);
    for s in 0..20 {
        let h = response(&c, &random_taps(&mut rng, 100));
        let rx = apply_channel(&f, &h, 0.0, 10.0, s).unwrap();
        let est = estimate_csi(&rx, &f, 0).unwrap();
        let den = denoise_truncate(&est, 128, &c).unwrap();
        ls += est.iter().zip(&h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        dn += den.iter().zip(&h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    }
    let gain = 10.0 * (ls / dn).log10();
    let ideal = 10.0 * (c.n_used() as f64 / 128.0).log10();
    assert!((gain - ideal).abs() < 0.5, "gain {gain:.2} dB, projection bound {ideal:.2} dB");
}

#[test]
fn leakage_outside_window_is_measured() {
    let c = OfdmConfig::default();
    let p = TapProjector::new(&c, 128).unwrap();
    let inside = response(&c, &[(20, Complex64::new(1.0, 0.0))]);
    let outside = response(&c, &[(400, Complex64::new(1.0, 0.0))]);
    assert!((p.energy_fraction(&inside).unwrap() - 1.0).abs() < 1e-12);
    assert!(p.energy_fraction(&outside).unwrap() < 0.5);
}

#[test]
fn silence_has_no_frames() {
    let ds = confined_dataset(1, 2, 3);
    let mut lb = loopback(&ds, &LoopbackOptions::default()).unwrap();
    for s in &mut lb.capture.streams {
        s.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    }
    assert!(matches!(
        extract(&lb.capture, &ExtractOptions::default()),
        Err(Error::NoFrameDetected { .. })
    ));
}

