use imetricgan::data::{decode_wav, encode_wav, BitDepth, Checkpoint, CHECKPOINT_MAGIC};
use imetricgan::dsp::Waveform;
use imetricgan::neural::Tensor;
use proptest::prelude::*;

proptest! {
    #[test]
    fn float32_wav_round_trips_exactly(xs in prop::collection::vec(-1.0f32..1.0, 1..2000), rate in 8000u32..96_000) {
        let w = Waveform::new(xs, rate).unwrap();
        let back: Waveform<f32> = decode_wav(&encode_wav(&w, BitDepth::Float32)).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn pcm16_wav_round_trips_within_one_step(xs in prop::collection::vec(-1.0f64..1.0, 1..2000)) {
        let w = Waveform::new(xs, 16_000).unwrap();
        let bytes = encode_wav(&w, BitDepth::Pcm16);
        prop_assert_eq!(bytes.len(), 44 + 2 * w.len());
        let back: Waveform<f64> = decode_wav(&bytes).unwrap();
        prop_assert_eq!(back.len(), w.len());
        for (a, b) in w.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn checkpoints_round_trip_byte_identically(
        shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..4), 0..6),
        seed in any::<u32>(),
        epoch in any::<u32>(),
    ) {
        let tensors: Vec<(String, Tensor<f32>)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n: usize = s.iter().product();
                let data = (0..n).map(|k| ((k as u32).wrapping_mul(seed) as f32) * 1e-6 - 3.0).collect();
                (format!("t{i}"), Tensor::new(s.clone(), data).unwrap())
            })
            .collect();
        let ck = Checkpoint { metadata: serde_json::json!({"epoch": epoch, "lr": 2e-4}), tensors };
        let bytes = ck.encode().unwrap();
        prop_assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn any_flipped_byte_is_detected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let ck = Checkpoint {
            metadata: serde_json::json!({"k": 1}),
            tensors: vec![("w".into(), Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())],
        };
        let mut bytes = ck.encode().unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(Checkpoint::decode(&bytes).is_err());
    }
}
