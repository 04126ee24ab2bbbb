use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{FeatureError, InferenceBackend, ModelManifest, TensorLayout};
use crate::preprocess::InputTensor;

type Plan = Arc<TypedRunnableModel>;

/// ONNX graph executed by tract, truncated at the manifest's feature tap.
pub struct OnnxBackend {
    plan: Plan,
    shape: [usize; 4],
}

fn backend_err(e: impl std::fmt::Display) -> FeatureError {
    FeatureError::Backend(format!("{e:#}"))
}

impl OnnxBackend {
    pub fn load(manifest: &ModelManifest) -> Result<Self, FeatureError> {
        let s = manifest.input_size as usize;
        let shape = match manifest.layout {
            TensorLayout::Nchw => [1, 3, s, s],
            TensorLayout::Nhwc => [1, s, s, 3],
        };
        let mut model = tract_onnx::onnx()
            .model_for_path(&manifest.weights_path)
            .map_err(backend_err)?
            .with_input_fact(0, f32::fact(shape).into())
            .map_err(backend_err)?;
        model
            .select_outputs_by_name([manifest.feature_output_name.as_str()])
            .map_err(backend_err)?;
        let plan = model
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(backend_err)?;
        Ok(Self { plan, shape })
    }
}

impl InferenceBackend for OnnxBackend {
    fn infer(&self, tensor: &InputTensor) -> Result<Vec<f64>, FeatureError> {
        let input = Tensor::from_shape(&self.shape, &tensor.values).map_err(backend_err)?;
        let outputs = self.plan.run(tvec!(input.into_tvalue())).map_err(backend_err)?;
        let view = outputs[0].to_plain_array_view::<f32>().map_err(backend_err)?;
        Ok(view.iter().map(|&v| f64::from(v)).collect())
    }
}
