use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BnCache, ConvShape};
use super::{gemm, Real, Tensor};
use crate::error::{ensure, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub channels: usize,
    pub stride: usize,
}

/// Architecture of the micro-CNN. Each stage is a 3×3 strided convolution
/// followed by ReLU, and with `skip_connections` an extra 3×3 convolution
/// with an identity shortcut. With no stages the model is a linear
/// classifier on the raw pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub n_classes: usize,
    pub stages: Vec<StageConfig>,
    pub skip_connections: bool,
    pub dropout_rate: f64,
    pub norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_height: 32,
            input_width: 32,
            n_classes: 10,
            stages: [16, 32, 64].map(|channels| StageConfig { channels, stride: 2 }).to_vec(),
            skip_connections: true,
            dropout_rate: 0.0,
            norm: true,
        }
    }
}

impl ModelConfig {
    pub fn linear(input_height: usize, input_width: usize, n_classes: usize) -> Self {
        Self {
            input_height,
            input_width,
            n_classes,
            stages: Vec::new(),
            skip_connections: false,
            dropout_rate: 0.0,
            norm: false,
        }
    }

    /// Channel counts scaled by `factor`, at least one channel per stage.
    pub fn widened(mut self, factor: f64) -> Self {
        for s in &mut self.stages {
            s.channels = ((s.channels as f64 * factor).round() as usize).max(1);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_classes >= 2, "need at least 2 classes, got {}", self.n_classes);
        ensure!(
            self.input_height >= 1 && self.input_width >= 1 && self.input_height * self.input_width <= 1 << 24,
            "input size {}x{} out of range",
            self.input_height,
            self.input_width
        );
        ensure!(
            (0.0..1.0).contains(&self.dropout_rate),
            "dropout rate must lie in [0, 1), got {}",
            self.dropout_rate
        );
        ensure!(self.stages.len() <= 16, "too many stages");
        for s in &self.stages {
            ensure!((1..=4096).contains(&s.channels), "stage channels {} out of range", s.channels);
            ensure!((1..=8).contains(&s.stride), "stage stride {} out of range", s.stride);
        }
        Ok(())
    }

    /// Shapes of all parameters then all normalization buffers.
    pub(crate) fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let (_, params, buffers) = build_layout(self);
        params.into_iter().chain(buffers).map(|s| s.shape).collect()
    }

    /// Width of the head input.
    pub fn feature_dim(&self) -> usize {
        match self.stages.last() {
            Some(s) => s.channels,
            None => self.input_height * self.input_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Running normalization statistics, no dropout.
    Eval,
    /// Batch statistics and a dropout mask drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
struct ConvIdx {
    weight: usize,
    bias: Option<usize>,
    c_in: usize,
    c_out: usize,
    stride: usize,
}

#[derive(Debug, Clone)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone)]
struct BlockIdx {
    conv: ConvIdx,
    bn: Option<BnIdx>,
}

#[derive(Debug, Clone)]
struct StageIdx {
    main: BlockIdx,
    residual: Option<BlockIdx>,
}

#[derive(Debug, Clone)]
struct Layout {
    stages: Vec<StageIdx>,
    head_weight: usize,
    head_bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
}

struct LayoutBuilder {
    params: Vec<Slot>,
    buffers: Vec<Slot>,
}

impl LayoutBuilder {
    fn param(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.params.push(Slot { name, shape });
        self.params.len() - 1
    }

    fn buffer(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.buffers.push(Slot { name, shape });
        self.buffers.len() - 1
    }

    fn block(&mut self, prefix: &str, c_in: usize, c_out: usize, stride: usize, norm: bool) -> BlockIdx {
        let weight = self.param(format!("{prefix}.conv.weight"), vec![c_out, c_in, 3, 3]);
        let bias = (!norm).then(|| self.param(format!("{prefix}.conv.bias"), vec![c_out]));
        let bn = norm.then(|| BnIdx {
            gamma: self.param(format!("{prefix}.bn.gamma"), vec![c_out]),
            beta: self.param(format!("{prefix}.bn.beta"), vec![c_out]),
            mean: self.buffer(format!("{prefix}.bn.running_mean"), vec![c_out]),
            var: self.buffer(format!("{prefix}.bn.running_var"), vec![c_out]),
        });
        BlockIdx { conv: ConvIdx { weight, bias, c_in, c_out, stride }, bn }
    }
}

fn build_layout(config: &ModelConfig) -> (Layout, Vec<Slot>, Vec<Slot>) {
    let mut b = LayoutBuilder { params: Vec::new(), buffers: Vec::new() };
    let mut c_in = 1;
    let mut stages = Vec::new();
    for (i, s) in config.stages.iter().enumerate() {
        let main = b.block(&format!("stage{i}"), c_in, s.channels, s.stride, config.norm);
        let residual = config
            .skip_connections
            .then(|| b.block(&format!("stage{i}.residual"), s.channels, s.channels, 1, config.norm));
        stages.push(StageIdx { main, residual });
        c_in = s.channels;
    }
    let d = config.feature_dim();
    let head_weight = b.param("head.weight".into(), vec![config.n_classes, d]);
    let head_bias = b.param("head.bias".into(), vec![config.n_classes]);
    (Layout { stages, head_weight, head_bias }, b.params, b.buffers)
}

/// Trainable network with per-parameter momentum buffers.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    param_slots: Vec<Slot>,
    buffer_slots: Vec<Slot>,
    pub(crate) params: Vec<Vec<T>>,
    pub(crate) velocity: Vec<Vec<T>>,
    pub(crate) buffers: Vec<Vec<T>>,
}

/// Gradients aligned with [`Model::params`].
pub type Gradients<T> = Vec<Vec<T>>;

/// Per-normalization-layer batch `(mean, unbiased variance)`.
pub type BatchStats<T> = Vec<(Vec<T>, Vec<T>)>;

#[derive(Debug, Clone)]
struct BlockTape<T> {
    shape: ConvShape,
    cols: Vec<T>,
    bn: Option<BnCache<T>>,
    /// Post-activation output.
    out: Vec<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    n: usize,
    blocks: Vec<(BlockTape<T>, Option<BlockTape<T>>)>,
    features: Vec<T>,
    dropout_mask: Option<Vec<T>>,
    pub batch_stats: BatchStats<T>,
}

impl<T: Real> Model<T> {
    /// Fan-in scaled uniform initialization from `seed`.
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, param_slots, buffer_slots) = build_layout(&config);
        let mut rng = seed::stream(init_seed);
        let params = param_slots
            .iter()
            .map(|slot| {
                let n: usize = slot.shape.iter().product();
                if slot.name.ends_with(".gamma") {
                    vec![T::one(); n]
                } else if slot.name.ends_with("weight") {
                    let fan_in: usize = slot.shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
                } else {
                    vec![T::zero(); n]
                }
            })
            .collect::<Vec<_>>();
        let buffers = buffer_slots
            .iter()
            .map(|slot| {
                let n: usize = slot.shape.iter().product();
                let fill = if slot.name.ends_with("running_var") { T::one() } else { T::zero() };
                vec![fill; n]
            })
            .collect();
        let velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Ok(Self { config, layout, param_slots, buffer_slots, params, velocity, buffers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    pub fn buffers(&self) -> &[Vec<T>] {
        &self.buffers
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.param_slots.iter().map(|s| s.name.as_str())
    }

    pub fn param_shape(&self, i: usize) -> &[usize] {
        &self.param_slots[i].shape
    }

    pub(crate) fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.param_slots.iter().chain(&self.buffer_slots)
    }

    /// Index of the first convolution weight (or the head weight for a
    /// linear model).
    pub fn first_layer_weight(&self) -> usize {
        self.layout.stages.first().map_or(self.layout.head_weight, |s| s.main.conv.weight)
    }

    /// Copies parameters and normalization buffers into another precision.
    /// Momentum buffers are reset.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::lit(x.to_f64().unwrap_or(f64::NAN))).collect::<Vec<U>>();
        let params: Vec<Vec<U>> = self.params.iter().map(conv).collect();
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            param_slots: self.param_slots.clone(),
            buffer_slots: self.buffer_slots.clone(),
            velocity: params.iter().map(|p| vec![U::zero(); p.len()]).collect(),
            params,
            buffers: self.buffers.iter().map(conv).collect(),
        }
    }

    /// Replaces parameters and buffers, in checkpoint order.
    pub(crate) fn load_tensors(&mut self, mut tensors: Vec<Vec<T>>) -> Result<()> {
        ensure!(
            tensors.len() == self.params.len() + self.buffers.len(),
            "expected {} tensors, got {}",
            self.params.len() + self.buffers.len(),
            tensors.len()
        );
        let buffers = tensors.split_off(self.params.len());
        for (slot, t) in self.slots().zip(tensors.iter().chain(&buffers)) {
            let n: usize = slot.shape.iter().product();
            ensure!(t.len() == n, "tensor {} has {} values, expected {n}", slot.name, t.len());
        }
        self.params = tensors;
        self.buffers = buffers;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().chain(&self.buffers).flatten().all(|v| v.is_finite())
    }

    /// Blends batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &BatchStats<T>) {
        let mom = T::lit(layers::BN_MOMENTUM);
        let keep = T::one() - mom;
        let bns = self.layout.stages.iter().flat_map(|s| std::iter::once(&s.main).chain(s.residual.as_ref()));
        for (block, (mean, var)) in bns.filter_map(|b| b.bn.as_ref()).zip(stats) {
            for (r, &m) in self.buffers[block.mean].iter_mut().zip(mean) {
                *r = keep * *r + mom * m;
            }
            for (r, &v) in self.buffers[block.var].iter_mut().zip(var) {
                *r = keep * *r + mom * v;
            }
        }
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<usize> {
        let c = &self.config;
        let shape = batch.shape();
        ensure!(
            shape.len() == 4 && shape[1] == 1 && shape[2] == c.input_height && shape[3] == c.input_width,
            "batch shape {shape:?} does not match N×1×{}×{}",
            c.input_height,
            c.input_width
        );
        ensure!(shape[0] >= 1, "empty batch");
        if !batch.is_finite() {
            return Err(Error::Validation("batch contains non-finite values".into()));
        }
        Ok(shape[0])
    }

    fn run_block(&self, x: &[T], shape: ConvShape, idx: &BlockIdx, train: bool, stats: &mut BatchStats<T>) -> BlockTape<T> {
        let bias = idx.conv.bias.map(|b| self.params[b].as_slice());
        let (mut out, cols) = layers::conv_forward(x, &shape, &self.params[idx.conv.weight], bias);
        let bn = idx.bn.as_ref().map(|bn| {
            let running = (!train).then(|| (self.buffers[bn.mean].as_slice(), self.buffers[bn.var].as_slice()));
            let (cache, s) =
                layers::bn_forward(&mut out, shape.c_out, &self.params[bn.gamma], &self.params[bn.beta], running);
            if let Some(s) = s {
                stats.push(s);
            }
            cache
        });
        BlockTape { shape, cols, bn, out }
    }

    /// Logits `N×K` plus the tape for [`Model::backward`].
    pub fn forward_tape(&self, batch: &Tensor<T>, mode: ForwardMode) -> Result<(Tensor<T>, Tape<T>)> {
        let n = self.check_input(batch)?;
        let train = matches!(mode, ForwardMode::Train { .. });
        let mut stats = Vec::new();
        let mut blocks = Vec::with_capacity(self.layout.stages.len());
        let (mut h, mut w) = (self.config.input_height, self.config.input_width);
        let mut act: Vec<T> = batch.data().to_vec();
        for stage in &self.layout.stages {
            let c = &stage.main.conv;
            let shape = ConvShape { c_in: c.c_in, c_out: c.c_out, n, h, w, stride: c.stride };
            let mut main = self.run_block(&act, shape, &stage.main, train, &mut stats);
            layers::relu_inplace(&mut main.out);
            (h, w) = (shape.out_h(), shape.out_w());
            let residual = stage.residual.as_ref().map(|r| {
                let rs = ConvShape { c_in: c.c_out, c_out: c.c_out, n, h, w, stride: 1 };
                let mut t = self.run_block(&main.out, rs, r, train, &mut stats);
                for (o, &skip) in t.out.iter_mut().zip(&main.out) {
                    *o += skip;
                }
                layers::relu_inplace(&mut t.out);
                t
            });
            act = residual.as_ref().map_or_else(|| main.out.clone(), |r| r.out.clone());
            blocks.push((main, residual));
        }
        let d = self.config.feature_dim();
        let mut features = if self.layout.stages.is_empty() { act } else { layers::global_avg_pool(&act, d, n) };
        let dropout_mask = match mode {
            ForwardMode::Train { dropout_seed } if self.config.dropout_rate > 0.0 => {
                let p = self.config.dropout_rate;
                let scale = T::lit(1.0 / (1.0 - p));
                let mut rng = seed::stream(dropout_seed);
                let mask: Vec<T> =
                    (0..features.len()).map(|_| if rng.random::<f64>() < p { T::zero() } else { scale }).collect();
                for (f, &m) in features.iter_mut().zip(&mask) {
                    *f *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        let k = self.config.n_classes;
        let mut logits = vec![T::zero(); n * k];
        for row in logits.chunks_exact_mut(k) {
            row.copy_from_slice(&self.params[self.layout.head_bias]);
        }
        gemm(n, d, k, &features, false, &self.params[self.layout.head_weight], true, T::one(), &mut logits);
        let tape = Tape { n, blocks, features, dropout_mask, batch_stats: stats };
        Ok((Tensor::new(vec![n, k], logits)?, tape))
    }

    pub fn forward(&self, batch: &Tensor<T>, mode: ForwardMode) -> Result<Tensor<T>> {
        self.forward_tape(batch, mode).map(|(logits, _)| logits)
    }

    fn block_backward(
        &self,
        mut dy: Vec<T>,
        tape: &BlockTape<T>,
        idx: &BlockIdx,
        grads: &mut Option<Gradients<T>>,
        need_dx: bool,
    ) -> Option<Vec<T>> {
        if let (Some(bn), Some(cache)) = (&idx.bn, &tape.bn) {
            let (mut dg, mut db) = (vec![T::zero(); idx.conv.c_out], vec![T::zero(); idx.conv.c_out]);
            layers::bn_backward(&mut dy, cache, &self.params[bn.gamma], &mut dg, &mut db);
            if let Some(g) = grads.as_mut() {
                g[bn.gamma] = dg;
                g[bn.beta] = db;
            }
        }
        let (mut dw, mut db) = match grads.as_mut() {
            Some(g) => (Some(std::mem::take(&mut g[idx.conv.weight])), idx.conv.bias.map(|b| std::mem::take(&mut g[b]))),
            None => (None, None),
        };
        let dx = layers::conv_backward(
            &dy,
            &tape.cols,
            &tape.shape,
            &self.params[idx.conv.weight],
            dw.as_deref_mut(),
            db.as_deref_mut(),
            need_dx,
        );
        if let Some(g) = grads.as_mut() {
            g[idx.conv.weight] = dw.unwrap_or_default();
            if let (Some(b), Some(db)) = (idx.conv.bias, db) {
                g[b] = db;
            }
        }
        dx
    }

    /// Back-propagates `dlogits` (`N×K`). Returns parameter gradients when
    /// `param_grads` is set and the input gradient (`N×1×H×W`) when
    /// `input_grad` is set.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        dlogits: &[T],
        param_grads: bool,
        input_grad: bool,
    ) -> (Option<Gradients<T>>, Option<Tensor<T>>) {
        let (n, k, d) = (tape.n, self.config.n_classes, self.config.feature_dim());
        let mut grads: Option<Gradients<T>> =
            param_grads.then(|| self.params.iter().map(|p| vec![T::zero(); p.len()]).collect());
        if let Some(g) = grads.as_mut() {
            gemm(k, n, d, dlogits, true, &tape.features, false, T::zero(), &mut g[self.layout.head_weight]);
            for row in dlogits.chunks_exact(k) {
                for (b, &v) in g[self.layout.head_bias].iter_mut().zip(row) {
                    *b += v;
                }
            }
        }
        let need_any_dx = input_grad || !self.layout.stages.is_empty();
        if !need_any_dx {
            return (grads, None);
        }
        let mut dfeat = vec![T::zero(); n * d];
        gemm(n, k, d, dlogits, false, &self.params[self.layout.head_weight], false, T::zero(), &mut dfeat);
        if let Some(mask) = &tape.dropout_mask {
            for (g, &m) in dfeat.iter_mut().zip(mask) {
                *g *= m;
            }
        }
        let (h, w) = (self.config.input_height, self.config.input_width);
        if self.layout.stages.is_empty() {
            let dx = input_grad.then(|| Tensor::new(vec![n, 1, h, w], dfeat).expect("input shape"));
            return (grads, dx);
        }
        let last = &tape.blocks.last().expect("stages").0.shape;
        let mut dact = layers::global_avg_pool_backward(&dfeat, d, n, last.out_h() * last.out_w());
        let n_stages = self.layout.stages.len();
        for (si, (stage, (main, residual))) in self.layout.stages.iter().zip(&tape.blocks).enumerate().rev() {
            let need_dx = si > 0 || input_grad;
            if let (Some(ridx), Some(rt)) = (&stage.residual, residual) {
                layers::relu_backward(&mut dact, &rt.out);
                let through = self.block_backward(dact.clone(), rt, ridx, &mut grads, true).expect("dx");
                for (a, b) in dact.iter_mut().zip(through) {
                    *a += b;
                }
            }
            layers::relu_backward(&mut dact, &main.out);
            match self.block_backward(dact, main, &stage.main, &mut grads, need_dx) {
                Some(dx) => dact = dx,
                None => {
                    debug_assert!(si == 0 && n_stages > 0);
                    return (grads, None);
                }
            }
        }
        (grads, Some(Tensor::new(vec![n, 1, h, w], dact).expect("input shape")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            input_height: 8,
            input_width: 8,
            n_classes: 3,
            stages: vec![StageConfig { channels: 4, stride: 2 }, StageConfig { channels: 6, stride: 2 }],
            skip_connections: true,
            dropout_rate: 0.3,
            norm: true,
        }
    }

    fn batch(n: usize) -> Tensor<f64> {
        let data = (0..n * 64).map(|i| ((i * 7919 % 101) as f64) / 101.0).collect();
        Tensor::new(vec![n, 1, 8, 8], data).unwrap()
    }

    #[test]
    fn output_shape_and_eval_determinism() {
        let m = Model::<f64>::new(small(), 1).unwrap();
        let x = batch(5);
        let a = m.forward(&x, ForwardMode::Eval).unwrap();
        assert_eq!(a.shape(), &[5, 3]);
        assert_eq!(a, m.forward(&x, ForwardMode::Eval).unwrap());
    }

    #[test]
    fn eval_is_batch_independent() {
        let m = Model::<f64>::new(small(), 2).unwrap();
        let x = batch(4);
        let y = m.forward(&x, ForwardMode::Eval).unwrap();
        let perm = [2, 0, 3, 1];
        let yp = m.forward(&x.select_rows(&perm), ForwardMode::Eval).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in yp.row(i).iter().zip(y.row(p)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        let m = Model::<f32>::new(small(), 0).unwrap();
        assert!(m.forward(&Tensor::zeros(vec![2, 1, 8, 7]), ForwardMode::Eval).is_err());
        let mut bad = Tensor::<f32>::zeros(vec![1, 1, 8, 8]);
        bad.data_mut()[3] = f32::NAN;
        assert!(m.forward(&bad, ForwardMode::Eval).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.n_classes = 1;
        assert!(c.validate().is_err());
        let mut c = small();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(small().widened(2.0).stages[1].channels, 12);
    }

    #[test]
    fn velocities_start_at_zero() {
        let m = Model::<f32>::new(ModelConfig::default(), 0).unwrap();
        assert!(m.velocity().iter().flatten().all(|&v| v == 0.0));
        assert_eq!(m.velocity().len(), m.params().len());
    }
}
