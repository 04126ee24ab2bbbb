//! Synthetic ABR-like studies for exercising the pipeline without clinical
//! data.
//!
//! Normal and abnormal images differ in color balance (red-heavy vs.
//! blue-heavy traces) plus per-pixel noise, so under the mock backend the
//! label is carried by one direction of the feature space.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{sha256_hex, ModelManifest, TensorLayout};

#[derive(Debug, Clone)]
pub struct SyntheticStudy {
    pub normal: usize,
    pub abnormal: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Distance between the class color means, in 8-bit units.
    pub color_separation: f64,
}

impl Default for SyntheticStudy {
    fn default() -> Self {
        Self { normal: 116, abnormal: 71, width: 40, height: 30, seed: 7, color_separation: 120.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub model_manifests: Vec<PathBuf>,
}

fn channel(rng: &mut ChaCha8Rng, base: f64) -> u8 {
    (base + rng.random_range(-40.0..40.0)).round().clamp(0.0, 255.0) as u8
}

impl SyntheticStudy {
    fn image(&self, rng: &mut ChaCha8Rng, abnormal: bool) -> RgbImage {
        let half = self.color_separation / 2.0;
        let jitter: f64 = rng.random_range(-15.0..15.0);
        let (red, blue) = if abnormal { (128.0 - half, 128.0 + half) } else { (128.0 + half, 128.0 - half) };
        let mut img = RgbImage::new(self.width, self.height);
        for px in img.pixels_mut() {
            *px = Rgb([channel(rng, red + jitter), channel(rng, 128.0), channel(rng, blue + jitter)]);
        }
        img
    }

    /// Writes images, `samples.csv`, one mock model manifest per name in
    /// `models` (with a placeholder weights file) and `config.toml` into
    /// `dir`. Extra config lines are appended verbatim.
    pub fn write(&self, dir: &Path, models: &[&str], feature_dim: usize, extra_config: &str) -> std::io::Result<SyntheticPaths> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut csv = String::from("sample_id,image_path,label,ear,patient_id\n");
        let total = self.normal + self.abnormal;
        for i in 0..total {
            let abnormal = i >= self.normal;
            let ear = if i % 2 == 0 { "left" } else { "right" };
            let id = format!("s{i:03}");
            let file = format!("images/{id}.png");
            self.image(&mut rng, abnormal)
                .save(dir.join(&file))
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            let label = if abnormal { "abnormal" } else { "normal" };
            writeln!(csv, "{id},{file},{label},{ear},p{:03}", i / 2).unwrap();
        }
        let manifest = dir.join("samples.csv");
        std::fs::write(&manifest, csv)?;

        let models_dir = dir.join("models");
        std::fs::create_dir_all(&models_dir)?;
        let mut model_manifests = Vec::new();
        for name in models {
            let weights = format!("placeholder weights for {name}\n");
            std::fs::write(models_dir.join(format!("{name}.onnx")), &weights)?;
            let m = ModelManifest {
                model_name: name.to_string(),
                weights_path: PathBuf::from(format!("{name}.onnx")),
                weights_checksum: sha256_hex(weights.as_bytes()),
                input_size: 16,
                channel_means: [0.485, 0.456, 0.406],
                channel_stds: [0.229, 0.224, 0.225],
                feature_output_name: "features".into(),
                feature_dim,
                layout: TensorLayout::Nchw,
            };
            let path = models_dir.join(format!("{name}.manifest"));
            std::fs::write(&path, m.to_toml())?;
            model_manifests.push(path);
        }

        let list: Vec<String> = models.iter().map(|m| format!("\"models/{m}.manifest\"")).collect();
        let config_text = format!(
            "manifest = \"samples.csv\"\nmodels = [{}]\noutput_dir = \"out\"\nbackend = \"mock\"\n{extra_config}",
            list.join(", ")
        );
        let config = dir.join("config.toml");
        std::fs::write(&config, config_text)?;
        Ok(SyntheticPaths { manifest, config, model_manifests })
    }
}
