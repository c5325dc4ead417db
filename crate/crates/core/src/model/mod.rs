//! The exitable classifier: a residual block stack with exit heads at fixed
//! depths and a stored summary prototype used for confidence scoring.

mod artifact;
mod config;
mod network;
mod prototype;

pub use artifact::{load_model, save_model, read_model, write_model, ARTIFACT_VERSION};
pub use config::{high_importance_classes, ModelConfig};
pub use network::{Affine, Block, ExitHead};
pub use prototype::{PrototypeEma, PROTOTYPE_DECAY};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, kernels, Distribution, Graph, Gradients, Tensor, Var};
use crate::optim::{epoch_batches, sgd_step, Examples};

/// Output of one exit head for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitPrediction {
    /// 1-based exit number.
    pub exit: usize,
    pub probs: Distribution,
    pub confidence: f64,
    pub blocks_traversed: usize,
}

/// Settings for the frozen-backbone pass over intermediate heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadCalibration {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitableModel {
    config: ModelConfig,
    stem: Affine,
    blocks: Vec<Block>,
    heads: Vec<ExitHead>,
    prototype: Vec<f64>,
    trained: bool,
    heads_calibrated: bool,
    prototype_finalized: bool,
}

/// Graph handles for the parameters trained with the backbone: stem, all
/// blocks and the final head.
pub(crate) struct BackboneVars {
    stem: Affine<Var>,
    blocks: Vec<Block<Var>>,
    head: ExitHead<Var>,
}

impl ExitableModel {
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_dim;
        let stem = network::init_affine(&mut rng, config.input_dim, h);
        let blocks = (0..config.depth)
            .map(|_| network::init_block(&mut rng, h, config.block_inner()))
            .collect();
        let heads = (0..config.num_exits())
            .map(|_| ExitHead {
                block: network::init_block(&mut rng, h, config.head_inner()),
                classifier: network::init_affine(&mut rng, h, config.num_classes),
            })
            .collect();
        let k = config.num_classes;
        Ok(Self {
            prototype: vec![1.0 / k as f64; k],
            config,
            stem,
            blocks,
            heads,
            trained: false,
            heads_calibrated: false,
            prototype_finalized: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_exits(&self) -> usize {
        self.heads.len()
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn heads_calibrated(&self) -> bool {
        self.heads_calibrated
    }

    pub fn prototype_finalized(&self) -> bool {
        self.prototype_finalized
    }

    /// Ready for early-exit routing: trained, intermediate heads calibrated
    /// and a prototype stored.
    pub fn is_finalized(&self) -> bool {
        self.trained && (self.num_exits() == 1 || self.heads_calibrated) && self.prototype_finalized
    }

    pub fn ensure_finalized(&self) -> Result<()> {
        if !self.trained {
            return Err(Error::Lifecycle("model has not been trained".into()));
        }
        if self.num_exits() > 1 && !self.heads_calibrated {
            return Err(Error::Lifecycle(
                "intermediate exit heads are not calibrated; run head calibration first".into(),
            ));
        }
        if !self.prototype_finalized {
            return Err(Error::Lifecycle(
                "prototype not finalized; run prototype finalization first".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Backbone depth after which `exit` (1-based) sits.
    pub fn exit_depth(&self, exit: usize) -> Result<usize> {
        self.check_exit(exit)?;
        Ok(self.config.exit_depths[exit - 1])
    }

    /// Latency proxy for leaving at `exit`: its depth plus one head.
    pub fn blocks_for_exit(&self, exit: usize) -> Result<usize> {
        Ok(self.exit_depth(exit)? + 1)
    }

    /// Latency proxy of a full-depth pass.
    pub fn full_blocks(&self) -> usize {
        self.config.depth + 1
    }

    fn check_exit(&self, exit: usize) -> Result<()> {
        if exit == 0 || exit > self.num_exits() {
            return Err(Error::Index(format!(
                "exit {exit} outside 1..={}",
                self.num_exits()
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "input of length {} for input_dim {}",
                x.len(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    // ---- inference ----------------------------------------------------

    /// Stem output for row-major inputs.
    pub(crate) fn embed_rows(&self, x: &[f64]) -> Vec<f64> {
        self.stem.apply_rows(x)
    }

    /// Advances hidden rows through blocks `from..to` (0-based, exclusive).
    pub(crate) fn advance_rows(&self, mut h: Vec<f64>, from: usize, to: usize) -> Vec<f64> {
        for block in &self.blocks[from..to] {
            h = block.apply_rows(&h);
        }
        h
    }

    /// Logits of `exit` (1-based) applied to hidden rows at its depth.
    pub(crate) fn head_logits_rows(&self, exit: usize, h: &[f64]) -> Vec<f64> {
        self.heads[exit - 1].logits_rows(h)
    }

    /// Hidden rows after `depth` blocks.
    pub(crate) fn hidden_rows(&self, x: &[f64], depth: usize) -> Vec<f64> {
        self.advance_rows(self.embed_rows(x), 0, depth)
    }

    pub fn forward_full(&self, x: &[f64]) -> Result<Distribution> {
        self.check_input(x)?;
        let h = self.hidden_rows(x, self.config.depth);
        let logits = self.head_logits_rows(self.num_exits(), &h);
        Ok(Distribution::from_softmax(kernels::softmax_rows(
            &logits,
            self.config.num_classes,
            1.0,
        )))
    }

    pub fn forward_at_exit(&self, x: &[f64], exit: usize) -> Result<ExitPrediction> {
        self.check_exit(exit)?;
        self.check_input(x)?;
        let depth = self.config.exit_depths[exit - 1];
        let h = self.hidden_rows(x, depth);
        self.prediction_from_hidden(exit, &h)
    }

    pub(crate) fn prediction_from_hidden(&self, exit: usize, h: &[f64]) -> Result<ExitPrediction> {
        let logits = self.head_logits_rows(exit, h);
        let probs = kernels::softmax_rows(&logits, self.config.num_classes, 1.0);
        let confidence = self.confidence(&probs)?;
        Ok(ExitPrediction {
            exit,
            probs: Distribution::from_softmax(probs),
            confidence,
            blocks_traversed: self.config.exit_depths[exit - 1] + 1,
        })
    }

    /// Cosine similarity between a prediction vector and the prototype.
    pub fn confidence(&self, probs: &[f64]) -> Result<f64> {
        cosine_similarity(probs, &self.prototype)
    }

    /// Final-exit probabilities for every row of `x` at `temperature`.
    pub fn predict_rows(&self, x: &Tensor, temperature: f64) -> Result<Tensor> {
        let (n, d) = x.dims2();
        if d != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "inputs of width {d} for input_dim {}",
                self.config.input_dim
            )));
        }
        if !(temperature > 0.0) {
            return Err(Error::Parameter(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let h = self.hidden_rows(x.values(), self.config.depth);
        let logits = self.head_logits_rows(self.num_exits(), &h);
        Tensor::matrix(
            n,
            self.config.num_classes,
            kernels::softmax_rows(&logits, self.config.num_classes, temperature),
        )
    }

    // ---- training hooks -----------------------------------------------

    /// Records the backbone forward pass for a batch and returns the handles
    /// plus the final-head logits.
    pub(crate) fn backbone_graph(&self, g: &mut Graph, x: &Tensor) -> Result<(BackboneVars, Var)> {
        let mut leaf = |t: &Tensor| g.leaf(t.clone());
        let vars = BackboneVars {
            stem: self.stem.map(&mut leaf),
            blocks: self.blocks.iter().map(|b| b.map(&mut leaf)).collect(),
            head: self.heads.last().expect("at least one head").map(&mut leaf),
        };
        let xv = g.constant(x.clone());
        let mut h = network::affine_graph(g, &vars.stem, xv)?;
        for b in &vars.blocks {
            h = network::block_graph(g, b, h)?;
        }
        let logits = network::head_graph(g, &vars.head, h)?;
        Ok((vars, logits))
    }

    pub(crate) fn apply_backbone_grads(
        &mut self,
        vars: &BackboneVars,
        grads: &mut Gradients,
        learning_rate: f64,
    ) {
        let mut params: Vec<&mut Tensor> = self.stem.params_mut().into_iter().collect();
        for b in &mut self.blocks {
            params.extend(b.params_mut());
        }
        params.extend(self.heads.last_mut().expect("at least one head").params_mut());

        let mut handles: Vec<Var> = vars.stem.params().into_iter().copied().collect();
        for b in &vars.blocks {
            handles.extend(b.params().into_iter().copied());
        }
        handles.extend(vars.head.params().into_iter().copied());

        for (p, v) in params.into_iter().zip(handles) {
            if let Some(g) = grads.take(v) {
                sgd_step(p, &g, learning_rate);
            }
        }
    }

    // ---- prototype ----------------------------------------------------

    /// Replaces the prototype with the L2-normalized mean of final-exit
    /// probabilities over samples whose gold class is high-importance.
    pub fn finalize_prototype(&mut self, samples: &Examples) -> Result<()> {
        if samples.dim() != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "examples of width {} for input_dim {}",
                samples.dim(),
                self.config.input_dim
            )));
        }
        let positive = self.config.high_importance_classes();
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| positive.contains(&samples.labels()[i]))
            .collect();
        if idx.is_empty() {
            return Err(Error::Degenerate(format!(
                "no samples in high-importance classes {positive:?}"
            )));
        }
        let (x, _) = samples.gather(&idx);
        let probs = self.predict_rows(&x, 1.0)?;
        let k = self.config.num_classes;
        let mut mean = vec![0.0; k];
        for row in probs.values().chunks(k) {
            for (m, p) in mean.iter_mut().zip(row) {
                *m += p;
            }
        }
        for m in &mut mean {
            *m /= idx.len() as f64;
        }
        self.set_prototype(&mean)
    }

    /// Stores `q / ‖q‖` as the prototype.
    pub fn set_prototype(&mut self, q: &[f64]) -> Result<()> {
        if q.len() != self.config.num_classes {
            return Err(Error::Dimension(format!(
                "prototype of length {} for K={}",
                q.len(),
                self.config.num_classes
            )));
        }
        let norm = kernels::l2_norm(q);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Degenerate("prototype has zero norm".into()));
        }
        self.prototype = q.iter().map(|v| v / norm).collect();
        self.prototype_finalized = true;
        Ok(())
    }

    // ---- head calibration ---------------------------------------------

    /// Trains every intermediate head on cross-entropy at its depth with the
    /// backbone frozen. The final head and backbone are left bit-for-bit
    /// unchanged.
    pub fn calibrate_exit_heads(&mut self, data: &Examples, settings: &HeadCalibration) -> Result<()> {
        if !self.trained {
            return Err(Error::Lifecycle(
                "exit heads can only be calibrated after backbone training".into(),
            ));
        }
        if data.is_empty() {
            return Err(Error::Data("no calibration examples".into()));
        }
        if data.dim() != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "examples of width {} for input_dim {}",
                data.dim(),
                self.config.input_dim
            )));
        }
        if settings.epochs == 0 {
            return Ok(());
        }
        let h_dim = self.config.hidden_dim;
        let n = data.len();
        let embedded = self.embed_rows(data.features().values());
        let mut hidden = embedded;
        let mut at = 0;
        for exit in 1..self.num_exits() {
            let depth = self.config.exit_depths[exit - 1];
            hidden = self.advance_rows(hidden, at, depth);
            at = depth;
            let frozen = Tensor::matrix(n, h_dim, hidden.clone())?;
            let frozen = Examples::new(frozen, data.labels().to_vec())?;
            let seed = settings.seed.wrapping_add(exit as u64);
            for epoch in 0..settings.epochs {
                for batch in epoch_batches(n, settings.batch_size, seed, epoch) {
                    let (hb, yb) = frozen.gather(&batch);
                    let mut g = Graph::new();
                    let head = &self.heads[exit - 1];
                    let vars = head.map(&mut |t: &Tensor| g.leaf(t.clone()));
                    let hv = g.constant(hb);
                    let logits = network::head_graph(&mut g, &vars, hv)?;
                    let probs = g.softmax(logits, 1.0)?;
                    let loss = g.cross_entropy(probs, &yb)?;
                    let mut grads = g.backward(loss)?;
                    let handles: Vec<Var> = vars.params().into_iter().copied().collect();
                    for (p, v) in self.heads[exit - 1].params_mut().into_iter().zip(handles) {
                        if let Some(gr) = grads.take(v) {
                            sgd_step(p, &gr, settings.learning_rate);
                        }
                    }
                }
            }
        }
        self.heads_calibrated = true;
        Ok(())
    }

    // ---- checksums ----------------------------------------------------

    fn digest<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> String {
        let mut hasher = Sha256::new();
        for t in tensors {
            for v in t.values() {
                hasher.update(v.to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }

    /// Checksum of stem, blocks and final head.
    pub fn backbone_checksum(&self) -> String {
        let mut ts: Vec<&Tensor> = self.stem.params().into_iter().collect();
        for b in &self.blocks {
            ts.extend(b.params());
        }
        ts.extend(self.heads.last().unwrap().params());
        Self::digest(ts)
    }

    /// Checksum of every parameter and the prototype.
    pub fn parameter_checksum(&self) -> String {
        let proto = Tensor::vector(self.prototype.clone());
        let mut ts = self.all_params();
        ts.push(&proto);
        Self::digest(ts)
    }

    /// All parameter tensors in canonical order: stem, blocks, heads.
    pub fn all_params(&self) -> Vec<&Tensor> {
        let mut ts: Vec<&Tensor> = self.stem.params().into_iter().collect();
        for b in &self.blocks {
            ts.extend(b.params());
        }
        for h in &self.heads {
            ts.extend(h.params());
        }
        ts
    }

    pub(crate) fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ts: Vec<&mut Tensor> = self.stem.params_mut().into_iter().collect();
        for b in &mut self.blocks {
            ts.extend(b.params_mut());
        }
        for h in &mut self.heads {
            ts.extend(h.params_mut());
        }
        ts
    }

    pub fn head(&self, exit: usize) -> Result<&ExitHead> {
        self.check_exit(exit)?;
        Ok(&self.heads[exit - 1])
    }
}
