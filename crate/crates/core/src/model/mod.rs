//! Model assembly: the stacked dual-transform network and its baselines,
//! whole-sequence and frame-wise inference, and weight persistence.

mod enhance;
mod network;
mod stream;
mod topology;
mod weights;

pub use enhance::{enhance, enhance_with, Mode};
pub use network::{backward, forward_sequence, forward_train, ForwardCache};
pub use stream::{step_frame, StreamState};
pub use topology::{Basis, CoreSpec, TopologySpec, TOPOLOGY_NAMES};
pub use weights::{
    load_weights, load_weights_for, read_weights, save_weights, write_weights, WEIGHT_MAGIC,
    WEIGHT_VERSION,
};

use crate::error::{Error, Result};
use crate::nn::{init_tensors, GradientSet, Tensor};

/// Parameters of one topology, in the order given by
/// [`TopologySpec::tensor_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub topology: TopologySpec,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Wraps tensors after checking them against the topology's shape table.
    pub fn new(topology: TopologySpec, tensors: Vec<Tensor>) -> Result<Self> {
        topology.validate()?;
        check_tensor_table(&topology, &tensors)?;
        if tensors
            .iter()
            .any(|t| t.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { topology, tensors })
    }

    pub fn num_params(&self) -> usize {
        count_params(&self.tensors)
    }

    pub fn zero_grads(&self) -> GradientSet {
        GradientSet::zeros_like(&self.tensors)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Rounds every value to the nearest `f32`, as stored in weight files.
    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Fresh parameters: Glorot-uniform weights, zero biases, unit gains.
pub fn build_model(spec: &TopologySpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let tensors = init_tensors(&spec.tensor_specs(), seed);
    Ok(ModelParams {
        topology: spec.clone(),
        tensors,
    })
}

/// Total number of scalar parameters.
pub fn count_params(tensors: &[Tensor]) -> usize {
    tensors.iter().map(Tensor::numel).sum()
}

/// Fails on the first tensor whose name or shape differs from the table.
pub(crate) fn check_tensor_table(topology: &TopologySpec, tensors: &[Tensor]) -> Result<()> {
    let specs = topology.tensor_specs();
    for (i, spec) in specs.iter().enumerate() {
        match tensors.get(i) {
            Some(t) if t.name == spec.name && t.shape == spec.shape => {}
            Some(t) => {
                return Err(Error::TensorMismatch {
                    tensor: spec.name.clone(),
                    expected: format!("{} {:?}", spec.name, spec.shape),
                    found: format!("{} {:?}", t.name, t.shape),
                })
            }
            None => {
                return Err(Error::TensorMismatch {
                    tensor: spec.name.clone(),
                    expected: format!("{} {:?}", spec.name, spec.shape),
                    found: "missing".into(),
                })
            }
        }
    }
    if let Some(extra) = tensors.get(specs.len()) {
        return Err(Error::TensorMismatch {
            tensor: extra.name.clone(),
            expected: "end of tensor table".into(),
            found: format!("{} {:?}", extra.name, extra.shape),
        });
    }
    Ok(())
}
