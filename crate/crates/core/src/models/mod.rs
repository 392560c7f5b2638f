//! The four benchmark denoiser architectures: construction, training,
//! inference, and checkpointing.
//!
//! A [`Model`] is a pure function of its [`ModelSpec`] and an initialization
//! seed. All four architectures map a length-`input_len` segment to a
//! prediction of the same length:
//!
//! - [`Architecture::Fcnn`]: four ReLU+dropout dense layers, linear output.
//! - [`Architecture::SimpleCnn`]: four conv/batchnorm/ReLU layers, dense head.
//! - [`Architecture::ComplexCnn`]: multi-scale residual branches (kernel
//!   sizes 3, 5, 7) merged by a pointwise conv, dense head.
//! - [`Architecture::Rnn`]: an LSTM scanned over the samples, dense head.
//!
//! Training ([`Model::train`]) runs minibatch Adam on mean squared error in
//! the normalized domain; inference ([`Model::denoise_segment`]) wraps the
//! network in the standard normalize/denormalize sandwich, with dropout off
//! and normalization in evaluation mode.

mod checkpoint;
mod forward;
mod init;
mod train;

pub use train::{TrainConfig, TrainRecord};

use crate::autodiff::{grad_check, GradCheckReport, Tape, Tensor, Var};
use crate::dataset::ArtifactType;
use crate::error::{Error, Result};
use crate::metrics::Denoiser;
use crate::signal::Segment;

use forward::{build_network, ForwardCtx};

/// Network family identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Fcnn,
    SimpleCnn,
    ComplexCnn,
    Rnn,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Fcnn,
        Architecture::SimpleCnn,
        Architecture::ComplexCnn,
        Architecture::Rnn,
    ];

    /// Stable lowercase identifier used in manifests, CSV rows, and CLI
    /// arguments.
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Fcnn => "fcnn",
            Architecture::SimpleCnn => "simple_cnn",
            Architecture::ComplexCnn => "complex_cnn",
            Architecture::Rnn => "rnn",
        }
    }

    /// Inverse of [`Architecture::name`].
    pub fn from_name(name: &str) -> Option<Architecture> {
        Architecture::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Default epoch budget per artifact type. Dense and recurrent nets need
    /// longer schedules than the convolutional ones, and myogenic runs
    /// converge in far fewer passes.
    pub fn default_epochs(&self, artifact: ArtifactType) -> usize {
        match (self, artifact) {
            (Architecture::Fcnn, ArtifactType::Ocular) => 60,
            (Architecture::Rnn, ArtifactType::Ocular) => 100,
            (_, ArtifactType::Ocular) => 40,
            (Architecture::Fcnn | Architecture::Rnn, ArtifactType::Myogenic) => 60,
            (_, ArtifactType::Myogenic) => 10,
        }
    }
}

/// Architecture choice plus the size knobs that scale it.
///
/// Fields irrelevant to the chosen architecture are ignored (for example
/// `feature_maps` on an FCNN). Every constructor fills in the defaults;
/// builder-style `with_*` methods override them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Samples per segment; network input and output width.
    pub input_len: usize,
    /// Feature maps per conv layer (SimpleCnn).
    pub feature_maps: usize,
    /// Feature maps per residual branch (ComplexCnn).
    pub branch_width: usize,
    /// LSTM hidden dimension (Rnn).
    pub rnn_hidden: usize,
    /// Dropout rate for the dense stacks that use it.
    pub dropout: f64,
}

impl ModelSpec {
    fn with_architecture(architecture: Architecture, input_len: usize) -> Self {
        ModelSpec {
            architecture,
            input_len,
            feature_maps: 64,
            branch_width: 32,
            rnn_hidden: 1,
            dropout: 0.2,
        }
    }

    pub fn fcnn(input_len: usize) -> Self {
        Self::with_architecture(Architecture::Fcnn, input_len)
    }

    pub fn simple_cnn(input_len: usize) -> Self {
        Self::with_architecture(Architecture::SimpleCnn, input_len)
    }

    pub fn complex_cnn(input_len: usize) -> Self {
        Self::with_architecture(Architecture::ComplexCnn, input_len)
    }

    pub fn rnn(input_len: usize) -> Self {
        Self::with_architecture(Architecture::Rnn, input_len)
    }

    pub fn with_feature_maps(mut self, feature_maps: usize) -> Self {
        self.feature_maps = feature_maps;
        self
    }

    pub fn with_branch_width(mut self, branch_width: usize) -> Self {
        self.branch_width = branch_width;
        self
    }

    pub fn with_rnn_hidden(mut self, rnn_hidden: usize) -> Self {
        self.rnn_hidden = rnn_hidden;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len < 16 {
            return Err(Error::ModelSpec(format!(
                "input_len {} below the minimum of 16",
                self.input_len
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ModelSpec(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        let (knob, value) = match self.architecture {
            Architecture::SimpleCnn => ("feature_maps", self.feature_maps),
            Architecture::ComplexCnn => ("branch_width", self.branch_width),
            Architecture::Rnn => ("rnn_hidden", self.rnn_hidden),
            Architecture::Fcnn => ("input_len", self.input_len),
        };
        if value == 0 {
            return Err(Error::ModelSpec(format!("{knob} must be at least 1")));
        }
        Ok(())
    }
}

/// Running mean/variance for one normalization site, updated during training
/// and applied verbatim at evaluation time.
#[derive(Debug, Clone)]
pub(crate) struct RunningNorm {
    pub(crate) mean: Vec<f64>,
    pub(crate) variance: Vec<f64>,
}

impl RunningNorm {
    fn fresh(channels: usize) -> Self {
        RunningNorm {
            mean: vec![0.0; channels],
            variance: vec![1.0; channels],
        }
    }
}

/// A constructed network: spec, parameter tensors, and normalization state.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Tensor>,
    norms: Vec<RunningNorm>,
}

impl Model {
    /// Build and initialize a network. Deterministic: the same spec and seed
    /// always produce identical parameters.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let params = init::init_params(&spec, seed);
        let norms = init::norm_channels(&spec)
            .into_iter()
            .map(RunningNorm::fresh)
            .collect();
        Ok(Model { spec, params, norms })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn validate_batch(&self, op: &str, batch: &Tensor) -> Result<()> {
        let shape = batch.shape();
        if shape.len() != 2 || shape[1] != self.spec.input_len {
            return Err(Error::shape(
                op,
                format!(
                    "expected [batch, {}], got {:?}",
                    self.spec.input_len, shape
                ),
            ));
        }
        Ok(())
    }

    /// Evaluation-mode forward pass over a `[batch, input_len]` tensor.
    /// Dropout is off and normalization uses the running statistics, so
    /// repeated calls are bit-identical.
    pub fn forward_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        self.validate_batch("forward", inputs)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.clone(), false))
            .collect();
        let input = tape.leaf(inputs.clone(), false);
        let mut ctx = ForwardCtx::eval(&self.norms);
        let out = build_network(&mut tape, &self.spec, &vars, input, &mut ctx)?;
        Ok(tape.value(out).clone())
    }

    /// Compare reverse-mode gradients of the training loss against central
    /// finite differences, perturbing every parameter element.
    ///
    /// The loss is MSE between the forward pass and `targets`, with batch
    /// statistics in the graph (as during training) and dropout disabled so
    /// the loss is a smooth deterministic function of the parameters.
    pub fn check_gradients(
        &self,
        inputs: &Tensor,
        targets: &Tensor,
        epsilon: f64,
    ) -> Result<GradCheckReport> {
        self.validate_batch("check_gradients", inputs)?;
        self.validate_batch("check_gradients", targets)?;
        let spec = self.spec.clone();
        let inputs = inputs.clone();
        let targets = targets.clone();
        grad_check(&self.params, epsilon, move |tape, vars| {
            let input = tape.leaf(inputs.clone(), false);
            let target = tape.leaf(targets.clone(), false);
            let mut collected = Vec::new();
            let mut ctx = ForwardCtx::train(&mut collected, None, 0.0);
            let pred = build_network(tape, &spec, vars, input, &mut ctx)?;
            tape.mse(pred, target)
        })
    }

    /// Denoise one contaminated segment.
    ///
    /// The segment is scaled by its own standard deviation before the
    /// network sees it and the prediction is scaled back afterwards, so for
    /// any positive constant `c`, `denoise(c·y) = c·denoise(y)`.
    pub fn denoise_segment(&self, contaminated: &Segment) -> Result<Segment> {
        if contaminated.len() != self.spec.input_len {
            return Err(Error::shape(
                "denoise",
                format!(
                    "segment length {} does not match input_len {}",
                    contaminated.len(),
                    self.spec.input_len
                ),
            ));
        }
        let std = contaminated.std_dev();
        if std == 0.0 || !std.is_finite() {
            return Err(Error::DegenerateSignal(
                "contaminated segment has zero variance".into(),
            ));
        }
        let normalized: Vec<f64> = contaminated.samples().iter().map(|v| v / std).collect();
        let batch = Tensor::new(vec![1, self.spec.input_len], normalized)?;
        let out = self.forward_batch(&batch)?;
        let restored: Vec<f64> = out.data().iter().map(|v| v * std).collect();
        Segment::new(restored, contaminated.fs())
    }

    /// Persist parameters and normalization state under `dir`.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        checkpoint::save(self, dir)
    }

    /// Restore a model saved by [`Model::save`].
    pub fn load(dir: &std::path::Path) -> Result<Model> {
        checkpoint::load(dir)
    }
}

impl Denoiser for Model {
    fn name(&self) -> &str {
        self.spec.architecture.name()
    }

    fn denoise(&self, contaminated: &Segment) -> Result<Segment> {
        self.denoise_segment(contaminated)
    }
}

fn build_checked(spec: &ModelSpec, expected: Architecture, seed: u64) -> Result<Model> {
    if spec.architecture != expected {
        return Err(Error::ModelSpec(format!(
            "spec names {} where {} was requested",
            spec.architecture.name(),
            expected.name()
        )));
    }
    Model::new(spec.clone(), seed)
}

/// Build a fully-connected model from a spec with `architecture = Fcnn`.
pub fn build_fcnn(spec: &ModelSpec, seed: u64) -> Result<Model> {
    build_checked(spec, Architecture::Fcnn, seed)
}

/// Build a plain convolutional model from a spec with
/// `architecture = SimpleCnn`.
pub fn build_simple_cnn(spec: &ModelSpec, seed: u64) -> Result<Model> {
    build_checked(spec, Architecture::SimpleCnn, seed)
}

/// Build a multi-scale residual model from a spec with
/// `architecture = ComplexCnn`.
pub fn build_complex_cnn(spec: &ModelSpec, seed: u64) -> Result<Model> {
    build_checked(spec, Architecture::ComplexCnn, seed)
}

/// Build a recurrent model from a spec with `architecture = Rnn`.
pub fn build_rnn(spec: &ModelSpec, seed: u64) -> Result<Model> {
    build_checked(spec, Architecture::Rnn, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_specs() -> Vec<ModelSpec> {
        vec![
            ModelSpec::fcnn(16),
            ModelSpec::simple_cnn(16).with_feature_maps(4),
            ModelSpec::complex_cnn(16).with_branch_width(2),
            ModelSpec::rnn(16),
        ]
    }

    fn ramp_batch(rows: usize, cols: usize, scale: f64) -> Tensor {
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| scale * ((i as f64 * 0.37).sin() + 0.1 * i as f64 / cols as f64))
            .collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn every_architecture_preserves_length() {
        for len in [512usize, 1024, 96] {
            for arch in Architecture::ALL {
                let spec = match arch {
                    Architecture::Fcnn => ModelSpec::fcnn(len),
                    Architecture::SimpleCnn => ModelSpec::simple_cnn(len).with_feature_maps(2),
                    Architecture::ComplexCnn => ModelSpec::complex_cnn(len).with_branch_width(2),
                    Architecture::Rnn => ModelSpec::rnn(len),
                };
                let model = Model::new(spec, 1).unwrap();
                let out = model.forward_batch(&ramp_batch(2, len, 1.0)).unwrap();
                assert_eq!(out.shape(), &[2, len], "{} at {len}", arch.name());
            }
        }
    }

    #[test]
    fn fcnn_param_count_is_closed_form() {
        let n = 96;
        let model = Model::new(ModelSpec::fcnn(n), 0).unwrap();
        assert_eq!(model.param_count(), 5 * (n * n + n));
    }

    #[test]
    fn simple_cnn_shapes_follow_the_stack() {
        // 512 samples, 64 maps: conv stack output 64x512, flatten 32768,
        // dense back to 512
        let model = Model::new(ModelSpec::simple_cnn(512), 0).unwrap();
        let head_weight = model
            .params
            .iter()
            .zip(init::plans(model.spec()))
            .find(|(_, plan)| plan.name == "head_weight")
            .map(|(tensor, _)| tensor.shape().to_vec())
            .unwrap();
        assert_eq!(head_weight, vec![64 * 512, 512]);
    }

    #[test]
    fn zeroed_fcnn_outputs_its_bias() {
        let mut model = Model::new(ModelSpec::fcnn(16), 3).unwrap();
        for p in &mut model.params {
            p.data_mut().fill(0.0);
        }
        // output bias is the last parameter
        let bias_value = 0.75;
        model.params.last_mut().unwrap().data_mut().fill(bias_value);
        let a = model.forward_batch(&ramp_batch(1, 16, 1.0)).unwrap();
        let b = model.forward_batch(&ramp_batch(1, 16, -2.0)).unwrap();
        assert!(a.data().iter().all(|&v| v == bias_value));
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_weight_lstm_states_are_zero() {
        let mut model = Model::new(ModelSpec::rnn(16), 3).unwrap();
        for p in &mut model.params {
            p.data_mut().fill(0.0);
        }
        // with all-zero gates every state is 0, the head sees zeros, and the
        // zero output bias makes the full output zero
        let out = model.forward_batch(&ramp_batch(1, 16, 5.0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroed_residual_blocks_reduce_to_relu_of_stem() {
        let spec = ModelSpec::complex_cnn(16).with_branch_width(2);
        let plans = init::plans(&spec);
        let mut model = Model::new(spec, 7).unwrap();
        // zero every branch conv and shift; keep stem, merge, head
        for (tensor, plan) in model.params.iter_mut().zip(&plans) {
            if plan.name.contains("conv") && plan.name.starts_with("branch") {
                tensor.data_mut().fill(0.0);
            }
        }
        // all three branches now pass relu(relu(stem)) = relu(stem); the
        // merge conv sees three identical channel groups
        let out = model.forward_batch(&ramp_batch(2, 16, 1.0)).unwrap();
        assert_eq!(out.shape(), &[2, 16]);
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradients_match_finite_differences_for_every_architecture() {
        for spec in toy_specs() {
            let name = spec.architecture.name();
            let model = Model::new(spec, 11).unwrap();
            let inputs = ramp_batch(2, 16, 1.0);
            let targets = ramp_batch(2, 16, 0.8);
            let report = model.check_gradients(&inputs, &targets, 1e-5).unwrap();
            assert!(
                report.passes(1e-4),
                "{name}: max relative error {:.3e}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn denoise_is_positively_homogeneous() {
        let model = Model::new(ModelSpec::fcnn(32), 5).unwrap();
        let base: Vec<f64> = (0..32).map(|i| (i as f64 * 0.4).sin() + 0.2).collect();
        let seg = Segment::new(base.clone(), 256).unwrap();
        let scaled = Segment::new(base.iter().map(|v| 2.5 * v).collect(), 256).unwrap();
        let out = model.denoise_segment(&seg).unwrap();
        let out_scaled = model.denoise_segment(&scaled).unwrap();
        for (a, b) in out_scaled.samples().iter().zip(out.samples()) {
            approx::assert_relative_eq!(*a, 2.5 * b, max_relative = 1e-12);
        }
    }

    #[test]
    fn denoise_is_bit_identical_on_repeat() {
        for spec in toy_specs() {
            let model = Model::new(spec, 2).unwrap();
            let seg = Segment::new(
                (0..16).map(|i| (i as f64 * 0.7).cos() + 0.01 * i as f64).collect(),
                64,
            )
            .unwrap();
            let a = model.denoise_segment(&seg).unwrap();
            let b = model.denoise_segment(&seg).unwrap();
            assert_eq!(a.samples(), b.samples());
        }
    }

    #[test]
    fn zero_weight_model_returns_scaled_bias_for_any_input() {
        let mut model = Model::new(ModelSpec::fcnn(16), 3).unwrap();
        for p in &mut model.params {
            p.data_mut().fill(0.0);
        }
        model.params.last_mut().unwrap().data_mut().fill(1.0);
        // two inputs with equal standard deviation but different samples
        let a: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut b = a.clone();
        b.reverse();
        let seg_a = Segment::new(a, 64).unwrap();
        let seg_b = Segment::new(b, 64).unwrap();
        let out_a = model.denoise_segment(&seg_a).unwrap();
        let out_b = model.denoise_segment(&seg_b).unwrap();
        assert_eq!(out_a.samples(), out_b.samples());
        approx::assert_relative_eq!(out_a.samples()[0], seg_a.std_dev(), max_relative = 1e-12);
    }

    #[test]
    fn denoise_rejects_wrong_length_and_flat_input() {
        let model = Model::new(ModelSpec::fcnn(16), 0).unwrap();
        let short = Segment::new(vec![1.0; 8], 64).unwrap();
        assert!(matches!(
            model.denoise_segment(&short),
            Err(Error::Shape { .. })
        ));
        let flat = Segment::new(vec![3.0; 16], 64).unwrap();
        assert!(matches!(
            model.denoise_segment(&flat),
            Err(Error::DegenerateSignal(_))
        ));
    }

    #[test]
    fn spec_validation_rejects_bad_knobs() {
        assert!(ModelSpec::fcnn(8).validate().is_err());
        assert!(ModelSpec::fcnn(16).with_dropout(1.0).validate().is_err());
        assert!(ModelSpec::simple_cnn(16)
            .with_feature_maps(0)
            .validate()
            .is_err());
        assert!(ModelSpec::rnn(16).with_rnn_hidden(0).validate().is_err());
        assert!(Model::new(ModelSpec::complex_cnn(16).with_branch_width(0), 0).is_err());
    }

    #[test]
    fn builders_enforce_matching_architecture() {
        let spec = ModelSpec::fcnn(16);
        assert!(build_fcnn(&spec, 0).is_ok());
        assert!(matches!(
            build_simple_cnn(&spec, 0),
            Err(Error::ModelSpec(_))
        ));
        assert!(build_complex_cnn(&ModelSpec::complex_cnn(16).with_branch_width(2), 0).is_ok());
        assert!(build_rnn(&ModelSpec::rnn(16), 0).is_ok());
    }

    #[test]
    fn architecture_names_round_trip() {
        for arch in Architecture::ALL {
            assert_eq!(Architecture::from_name(arch.name()), Some(arch));
        }
        assert_eq!(Architecture::from_name("mlp"), None);
    }

    #[test]
    fn default_epochs_follow_the_benchmark_schedule() {
        use ArtifactType::{Myogenic, Ocular};
        assert_eq!(Architecture::Fcnn.default_epochs(Ocular), 60);
        assert_eq!(Architecture::Rnn.default_epochs(Ocular), 100);
        assert_eq!(Architecture::SimpleCnn.default_epochs(Ocular), 40);
        assert_eq!(Architecture::ComplexCnn.default_epochs(Ocular), 40);
        assert_eq!(Architecture::Fcnn.default_epochs(Myogenic), 60);
        assert_eq!(Architecture::Rnn.default_epochs(Myogenic), 60);
        assert_eq!(Architecture::SimpleCnn.default_epochs(Myogenic), 10);
    }
}
