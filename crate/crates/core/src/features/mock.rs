use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{FeatureError, InferenceBackend};
use crate::preprocess::InputTensor;

/// Pseudo-features in `[-1, 1)`: the SHA-256 of the tensor bytes seeds a
/// ChaCha20 stream (counter mode), which is read out `dim` times.
pub fn mock_infer(tensor: &InputTensor, dim: usize) -> Vec<f64> {
    let digest: [u8; 32] = Sha256::digest(tensor.to_le_bytes()).into();
    let mut rng = ChaCha20Rng::from_seed(digest);
    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

/// Test double for a CNN.
///
/// Output is [`mock_infer`] noise with the per-channel mean of the input
/// tensor added to the first three coordinates, so image content that
/// differs in color balance is visible to the classifier.
#[derive(Debug, Clone)]
pub struct MockBackend {
    dim: usize,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "mock feature dimension must be positive");
        Self { dim }
    }
}

impl InferenceBackend for MockBackend {
    fn infer(&self, tensor: &InputTensor) -> Result<Vec<f64>, FeatureError> {
        let mut out = mock_infer(tensor, self.dim);
        let (h, w) = (tensor.height as usize, tensor.width as usize);
        let plane = (h * w).max(1) as f64;
        for (c, slot) in out.iter_mut().take(InputTensor::CHANNELS).enumerate() {
            let mut sum = 0.0;
            for y in 0..h {
                for x in 0..w {
                    sum += f64::from(tensor.get(c, y, x));
                }
            }
            *slot += sum / plane;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TensorLayout;

    fn ramp() -> InputTensor {
        let mut t = InputTensor::zeros(4, TensorLayout::Nchw);
        t.values.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 0.25);
        t
    }

    #[test]
    fn identical_tensors_give_identical_vectors() {
        assert_eq!(mock_infer(&ramp(), 32), mock_infer(&ramp().clone(), 32));
    }

    #[test]
    fn one_element_change_changes_vector() {
        let mut other = ramp();
        other.values[17] += 1e-3;
        assert_ne!(mock_infer(&ramp(), 8), mock_infer(&other, 8));
    }

    #[test]
    fn shape_and_range() {
        let v = mock_infer(&ramp(), 8);
        assert_eq!(v.len(), 8);
        assert!(v.iter().all(|x| (-1.0..1.0).contains(x)));
    }

    #[test]
    fn backend_adds_channel_means() {
        let t = ramp();
        let noise = mock_infer(&t, 5);
        let out = MockBackend::new(5).infer(&t).unwrap();
        // channel c of a 4x4 NCHW ramp spans indices 16c..16c+15
        for c in 0..3 {
            let mean = (16 * c..16 * c + 16).map(|i| i as f64 * 0.25).sum::<f64>() / 16.0;
            assert!((out[c] - noise[c] - mean).abs() < 1e-12);
        }
        assert_eq!(out[3..], noise[3..]);
    }
}
