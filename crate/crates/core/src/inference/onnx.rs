use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;
use tract_onnx::tract_hir::infer::Factoid;

use crate::CellClass;

use super::{Backend, InferenceError, ModelSpec, RawPrediction};

/// CPU backend running an ONNX graph through tract.
///
/// Output 0 must be the candidate matrix and output 1 the prototype tensor.
/// Class columns are taken in the fixed order fiber, vessel.
pub struct OnnxBackend {
    spec: ModelSpec,
    plan: Arc<TypedRunnableModel>,
}

fn load_err(path: &Path, e: impl std::fmt::Display) -> InferenceError {
    InferenceError::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl OnnxBackend {
    pub fn load(path: &Path, input_size: Option<usize>) -> Result<Self, InferenceError> {
        let mut model = tract_onnx::onnx().model_for_path(path).map_err(|e| load_err(path, e))?;
        let declared = model
            .input_fact(0)
            .ok()
            .and_then(|f| f.shape.concretize())
            .and_then(|dims| dims.last().and_then(|d| d.as_i64()).and_then(|d| usize::try_from(d).ok()));
        let size = input_size
            .or(declared)
            .ok_or_else(|| load_err(path, "input size is symbolic; pass it explicitly"))?;
        model
            .set_input_fact(0, f32::fact([1, 3, size, size]).into())
            .map_err(|e| load_err(path, e))?;
        let typed = model.into_optimized().map_err(|e| load_err(path, e))?;
        let shape_of = |i: usize| -> Result<Vec<usize>, InferenceError> {
            let fact = typed.output_fact(i).map_err(|e| load_err(path, e))?;
            fact.shape
                .as_concrete()
                .map(|s| s.to_vec())
                .ok_or_else(|| load_err(path, format!("output {i} has a symbolic shape")))
        };
        let cand = shape_of(0)?;
        let proto = shape_of(1)?;
        let nm = match proto.as_slice() {
            [1, nm, _, _] | [nm, _, _] => *nm,
            _ => {
                return Err(InferenceError::ModelContract {
                    what: "prototypes",
                    expected: vec![1, 0, size / 4, size / 4],
                    actual: proto,
                })
            }
        };
        let anchors: usize = super::STRIDES.iter().map(|s| (size / s).pow(2)).sum();
        let row = match cand.as_slice() {
            [.., a, b] if *b == anchors => *a,
            [.., a, b] if *a == anchors => *b,
            _ => {
                return Err(InferenceError::ModelContract {
                    what: "candidates",
                    expected: vec![1, 4 + CellClass::ALL.len() + nm, anchors],
                    actual: cand,
                })
            }
        };
        let nc = row.saturating_sub(4 + nm);
        if nc != CellClass::ALL.len() {
            return Err(load_err(
                path,
                format!("model has {nc} classes, expected {} (fiber, vessel)", CellClass::ALL.len()),
            ));
        }
        let spec = ModelSpec::new(size, CellClass::ALL.to_vec(), nm)?;
        let plan = typed.into_runnable().map_err(|e| load_err(path, e))?;
        Ok(Self { spec, plan })
    }
}

impl Backend for OnnxBackend {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn forward(&self, input: &[f32]) -> Result<RawPrediction, InferenceError> {
        let s = self.spec.input_size;
        let runtime = |e: TractError| InferenceError::Runtime(e.to_string());
        let tensor = Tensor::from_shape(&[1, 3, s, s], input).map_err(runtime)?;
        let outputs = self.plan.run(tvec!(tensor.into())).map_err(runtime)?;
        if outputs.len() < 2 {
            return Err(InferenceError::Runtime(format!("expected 2 outputs, got {}", outputs.len())));
        }
        let take = |i: usize| -> Result<(Vec<f32>, Vec<usize>), InferenceError> {
            let view = outputs[i].to_plain_array_view::<f32>().map_err(runtime)?;
            Ok((view.iter().copied().collect(), view.shape().to_vec()))
        };
        let (cand, cand_shape) = take(0)?;
        let (proto, proto_shape) = take(1)?;
        RawPrediction::from_outputs(&self.spec, cand, &cand_shape, proto, &proto_shape)
    }
}
