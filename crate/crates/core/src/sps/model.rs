//! The multitask perception network: a shared convolutional torso feeding a
//! target head, a next-state head, an action head, and (for the Beliefs
//! variant) a belief head. Hand-written forward and backward passes.

use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{
    lrelu_backward, lrelu_forward, softmax_rows, BatchNorm, BnCache, Conv2d, Linear, Param, HW,
};
use crate::datagen::PLANES;
use crate::gridworld::{Action, CELLS};
use crate::rng;

/// Which prediction heads the network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Target, action, and next-state heads plus the belief head.
    Bel,
    /// Target, action, and next-state heads only.
    NoBel,
}

impl Variant {
    pub fn has_belief_head(self) -> bool {
        matches!(self, Variant::Bel)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bel => "bel",
            Variant::NoBel => "nobel",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "bel" | "beliefs" => Some(Variant::Bel),
            "nobel" | "nobeliefs" => Some(Variant::NoBel),
            _ => None,
        }
    }
}

/// Channel widths; the defaults match the reported architecture, tests use
/// reduced widths for finite-difference checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelConfig {
    pub torso: usize,
    pub head_mid: usize,
    pub head_small: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { torso: 32, head_mid: 16, head_small: 4 }
    }
}

impl ChannelConfig {
    pub fn reduced() -> Self {
        ChannelConfig { torso: 8, head_mid: 4, head_small: 2 }
    }
}

/// Residual block: conv-bn-lrelu, conv-bn, skip add, lrelu.
#[derive(Debug, Clone)]
struct ResBlock {
    conv_a: Conv2d,
    bn_a: BatchNorm,
    conv_b: Conv2d,
    bn_b: BatchNorm,
}

impl ResBlock {
    fn new(name: &str, ch: usize) -> ResBlock {
        ResBlock {
            conv_a: Conv2d::new(&format!("{}.conv_a", name), ch, ch, 3, false),
            bn_a: BatchNorm::new(&format!("{}.bn_a", name), ch),
            conv_b: Conv2d::new(&format!("{}.conv_b", name), ch, ch, 3, false),
            bn_b: BatchNorm::new(&format!("{}.bn_b", name), ch),
        }
    }
}

/// Spatial head: two conv+lrelu stages, then a fully connected branch and a
/// small convolutional branch summed into 121 logits.
#[derive(Debug, Clone)]
struct SpatialHead {
    conv1: Conv2d,
    conv2: Conv2d,
    fc: Linear,
    conv3: Conv2d,
    conv4: Conv2d,
}

impl SpatialHead {
    fn new(name: &str, ch: ChannelConfig) -> SpatialHead {
        SpatialHead {
            conv1: Conv2d::new(&format!("{}.conv1", name), ch.torso, ch.torso, 3, true),
            conv2: Conv2d::new(&format!("{}.conv2", name), ch.torso, ch.head_mid, 3, true),
            fc: Linear::new(&format!("{}.fc", name), ch.head_mid * CELLS, CELLS),
            conv3: Conv2d::new(&format!("{}.conv3", name), ch.head_mid, ch.head_small, 3, true),
            conv4: Conv2d::new(&format!("{}.conv4", name), ch.head_small, 1, 1, true),
        }
    }
}

/// Action head: conv+lrelu, global average pooling, two fully connected
/// layers down to the 9 action logits.
#[derive(Debug, Clone)]
struct ActionHead {
    conv: Conv2d,
    fc1: Linear,
    fc2: Linear,
}

impl ActionHead {
    fn new(name: &str, ch: ChannelConfig) -> ActionHead {
        ActionHead {
            conv: Conv2d::new(&format!("{}.conv", name), ch.torso, ch.torso, 3, true),
            fc1: Linear::new(&format!("{}.fc1", name), ch.torso, ch.torso),
            fc2: Linear::new(&format!("{}.fc2", name), ch.torso, Action::COUNT),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpsModel {
    pub variant: Variant,
    pub channels: ChannelConfig,
    pub init_seed: u64,
    stem_conv: Conv2d,
    stem_bn: BatchNorm,
    block1: ResBlock,
    block2: ResBlock,
    target_head: SpatialHead,
    state_head: SpatialHead,
    belief_head: Option<SpatialHead>,
    action_head: ActionHead,
}

/// Batch logits, row-major per sample.
#[derive(Debug, Clone, Default)]
pub struct BatchOutputs {
    pub target_logits: Vec<f64>,
    pub action_logits: Vec<f64>,
    pub state_logits: Vec<f64>,
    pub belief_logits: Option<Vec<f64>>,
}

/// Per-sample view of the network outputs; belief head as probabilities.
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    pub target_logits: Vec<f64>,
    pub action_logits: Vec<f64>,
    pub state_logits: Vec<f64>,
    pub belief_probs: Option<Vec<f64>>,
}

/// Upstream gradients on the head logits (d loss / d logits).
#[derive(Debug, Clone, Default)]
pub struct HeadGrads {
    pub target: Vec<f64>,
    pub action: Vec<f64>,
    pub state: Vec<f64>,
    pub belief: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
struct BlockCache {
    input: Vec<f64>,
    c1: Vec<f64>,
    bn_a: BnCache,
    b1: Vec<f64>,
    r1: Vec<f64>,
    c2: Vec<f64>,
    bn_b: BnCache,
    a_pre: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct HeadCache {
    pre1: Vec<f64>,
    hc1: Vec<f64>,
    pre2: Vec<f64>,
    hc2: Vec<f64>,
    fc_in: Vec<f64>,
    g1: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct ActionCache {
    pre: Vec<f64>,
    ha: Vec<f64>,
    pooled: Vec<f64>,
    pre_f1: Vec<f64>,
    f1: Vec<f64>,
}

/// Intermediate activations for one forward pass; reused across batches.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    batch: usize,
    training: bool,
    input: Vec<f64>,
    s_conv: Vec<f64>,
    stem_bn: BnCache,
    s_bn: Vec<f64>,
    h0: Vec<f64>,
    blk1: BlockCache,
    blk2: BlockCache,
    target: HeadCache,
    state: HeadCache,
    belief: HeadCache,
    action: ActionCache,
    col: Vec<f64>,
    scratch: Vec<f64>,
}

impl SpsModel {
    pub fn new(variant: Variant, channels: ChannelConfig, init_seed: u64) -> SpsModel {
        let mut model = SpsModel {
            variant,
            channels,
            init_seed,
            stem_conv: Conv2d::new("torso.stem", PLANES, channels.torso, 3, false),
            stem_bn: BatchNorm::new("torso.stem_bn", channels.torso),
            block1: ResBlock::new("torso.block1", channels.torso),
            block2: ResBlock::new("torso.block2", channels.torso),
            target_head: SpatialHead::new("target", channels),
            state_head: SpatialHead::new("state", channels),
            belief_head: variant
                .has_belief_head()
                .then(|| SpatialHead::new("belief", channels)),
            action_head: ActionHead::new("action", channels),
        };
        model.init_weights(init_seed);
        model
    }

    /// He-style fan-in initialization for conv and linear weights.
    fn init_weights(&mut self, seed: u64) {
        let mut rng = rng::stream(seed, "init", 0);
        let gain = (2.0 / (1.0 + super::nn::LRELU_SLOPE * super::nn::LRELU_SLOPE)).sqrt();
        for p in self.params_mut() {
            if p.decay {
                // weight matrices: fan-in = elements per output row
                let fan_in = p.numel() / p.shape[0];
                let std = gain / (fan_in as f64).sqrt();
                for v in p.value.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = std * z;
                }
            }
        }
    }

    /// All parameters in a fixed, variant-stable order.
    pub fn params(&self) -> Vec<&Param> {
        fn head<'a>(h: &'a SpatialHead, out: &mut Vec<&'a Param>) {
            out.push(&h.conv1.weight);
            out.push(h.conv1.bias.as_ref().unwrap());
            out.push(&h.conv2.weight);
            out.push(h.conv2.bias.as_ref().unwrap());
            out.push(&h.fc.weight);
            out.push(&h.fc.bias);
            out.push(&h.conv3.weight);
            out.push(h.conv3.bias.as_ref().unwrap());
            out.push(&h.conv4.weight);
            out.push(h.conv4.bias.as_ref().unwrap());
        }
        let mut out = Vec::new();
        out.push(&self.stem_conv.weight);
        out.push(&self.stem_bn.gamma);
        out.push(&self.stem_bn.beta);
        for blk in [&self.block1, &self.block2] {
            out.push(&blk.conv_a.weight);
            out.push(&blk.bn_a.gamma);
            out.push(&blk.bn_a.beta);
            out.push(&blk.conv_b.weight);
            out.push(&blk.bn_b.gamma);
            out.push(&blk.bn_b.beta);
        }
        head(&self.target_head, &mut out);
        head(&self.state_head, &mut out);
        if let Some(b) = &self.belief_head {
            head(b, &mut out);
        }
        out.push(&self.action_head.conv.weight);
        out.push(self.action_head.conv.bias.as_ref().unwrap());
        out.push(&self.action_head.fc1.weight);
        out.push(&self.action_head.fc1.bias);
        out.push(&self.action_head.fc2.weight);
        out.push(&self.action_head.fc2.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        fn head<'a>(h: &'a mut SpatialHead, out: &mut Vec<&'a mut Param>) {
            out.push(&mut h.conv1.weight);
            out.push(h.conv1.bias.as_mut().unwrap());
            out.push(&mut h.conv2.weight);
            out.push(h.conv2.bias.as_mut().unwrap());
            out.push(&mut h.fc.weight);
            out.push(&mut h.fc.bias);
            out.push(&mut h.conv3.weight);
            out.push(h.conv3.bias.as_mut().unwrap());
            out.push(&mut h.conv4.weight);
            out.push(h.conv4.bias.as_mut().unwrap());
        }
        let mut out: Vec<&mut Param> = Vec::new();
        out.push(&mut self.stem_conv.weight);
        out.push(&mut self.stem_bn.gamma);
        out.push(&mut self.stem_bn.beta);
        for blk in [&mut self.block1, &mut self.block2] {
            out.push(&mut blk.conv_a.weight);
            out.push(&mut blk.bn_a.gamma);
            out.push(&mut blk.bn_a.beta);
            out.push(&mut blk.conv_b.weight);
            out.push(&mut blk.bn_b.gamma);
            out.push(&mut blk.bn_b.beta);
        }
        head(&mut self.target_head, &mut out);
        head(&mut self.state_head, &mut out);
        if let Some(b) = &mut self.belief_head {
            head(b, &mut out);
        }
        out.push(&mut self.action_head.conv.weight);
        out.push(self.action_head.conv.bias.as_mut().unwrap());
        out.push(&mut self.action_head.fc1.weight);
        out.push(&mut self.action_head.fc1.bias);
        out.push(&mut self.action_head.fc2.weight);
        out.push(&mut self.action_head.fc2.bias);
        out
    }

    /// Batch-norm running statistics as (name, values) pairs, in order.
    pub fn running_stats(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        let mut push = |name: &str, bn: &BatchNorm| {
            out.push((format!("{}.running_mean", name), bn.running_mean.clone()));
            out.push((format!("{}.running_var", name), bn.running_var.clone()));
        };
        push("torso.stem_bn", &self.stem_bn);
        push("torso.block1.bn_a", &self.block1.bn_a);
        push("torso.block1.bn_b", &self.block1.bn_b);
        push("torso.block2.bn_a", &self.block2.bn_a);
        push("torso.block2.bn_b", &self.block2.bn_b);
        out
    }

    pub fn set_running_stats(&mut self, stats: &[(String, Vec<f64>)]) {
        for (name, values) in stats {
            let bn = match name.rsplit_once('.').map(|(prefix, _)| prefix) {
                Some("torso.stem_bn") => &mut self.stem_bn,
                Some("torso.block1.bn_a") => &mut self.block1.bn_a,
                Some("torso.block1.bn_b") => &mut self.block1.bn_b,
                Some("torso.block2.bn_a") => &mut self.block2.bn_a,
                Some("torso.block2.bn_b") => &mut self.block2.bn_b,
                _ => continue,
            };
            if name.ends_with("running_mean") {
                bn.running_mean = values.clone();
            } else {
                bn.running_var = values.clone();
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn forward_block(
        blk: &mut ResBlock,
        input: &[f64],
        width: usize,
        training: bool,
        cache: &mut BlockCache,
        col: &mut Vec<f64>,
    ) {
        cache.input.clear();
        cache.input.extend_from_slice(input);
        blk.conv_a.forward(input, width / HW, col, &mut cache.c1);
        if training {
            blk.bn_a.forward_train(&cache.c1, width, &mut cache.b1, &mut cache.bn_a);
        } else {
            blk.bn_a.forward_eval(&cache.c1, width, &mut cache.b1);
        }
        lrelu_forward(&cache.b1, &mut cache.r1);
        blk.conv_b.forward(&cache.r1, width / HW, col, &mut cache.c2);
        if training {
            blk.bn_b.forward_train(&cache.c2, width, &mut cache.a_pre, &mut cache.bn_b);
        } else {
            blk.bn_b.forward_eval(&cache.c2, width, &mut cache.a_pre);
        }
        for (a, &skip) in cache.a_pre.iter_mut().zip(input) {
            *a += skip;
        }
        lrelu_forward(&cache.a_pre, &mut cache.out);
    }

    fn backward_block(
        blk: &mut ResBlock,
        width: usize,
        cache: &BlockCache,
        d_out: &[f64],
        col: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
        d_input: &mut Vec<f64>,
    ) {
        let batch = width / HW;
        let mut da = Vec::new();
        lrelu_backward(&cache.a_pre, d_out, &mut da);
        // Skip branch.
        d_input.clear();
        d_input.extend_from_slice(&da);
        // Main branch: bn_b -> conv_b -> lrelu -> bn_a -> conv_a.
        let mut dc2 = Vec::new();
        blk.bn_b.backward(&da, width, &cache.bn_b, &mut dc2);
        let mut dr1 = Vec::new();
        blk.conv_b.backward(&cache.r1, &dc2, batch, col, Some(&mut dr1));
        let mut db1 = Vec::new();
        lrelu_backward(&cache.b1, &dr1, &mut db1);
        let mut dc1 = Vec::new();
        blk.bn_a.backward(&db1, width, &cache.bn_a, &mut dc1);
        scratch.clear();
        blk.conv_a.backward(&cache.input, &dc1, batch, col, Some(scratch));
        for (d, s) in d_input.iter_mut().zip(scratch.iter()) {
            *d += s;
        }
    }

    fn forward_spatial_head(
        head: &mut SpatialHead,
        h2: &[f64],
        batch: usize,
        cache: &mut HeadCache,
        col: &mut Vec<f64>,
        logits: &mut Vec<f64>,
    ) {
        let width = batch * HW;
        let mid = head.conv2.out_c;
        head.conv1.forward(h2, batch, col, &mut cache.pre1);
        lrelu_forward(&cache.pre1, &mut cache.hc1);
        head.conv2.forward(&cache.hc1, batch, col, &mut cache.pre2);
        lrelu_forward(&cache.pre2, &mut cache.hc2);
        // Flatten [mid][B*HW] -> [B][mid*HW] for the fully connected branch.
        cache.fc_in.clear();
        cache.fc_in.resize(batch * mid * HW, 0.0);
        for c in 0..mid {
            for b in 0..batch {
                let src = &cache.hc2[c * width + b * HW..c * width + (b + 1) * HW];
                let dst = &mut cache.fc_in[b * mid * HW + c * HW..b * mid * HW + (c + 1) * HW];
                dst.copy_from_slice(src);
            }
        }
        head.fc.forward(&cache.fc_in, batch, logits);
        // Convolutional branch; [1][B*HW] aliases [B][HW] row-major.
        head.conv3.forward(&cache.hc2, batch, col, &mut cache.g1);
        let mut g2 = Vec::new();
        head.conv4.forward(&cache.g1, batch, col, &mut g2);
        for (l, g) in logits.iter_mut().zip(&g2) {
            *l += g;
        }
    }

    fn backward_spatial_head(
        head: &mut SpatialHead,
        h2: &[f64],
        batch: usize,
        cache: &HeadCache,
        dlogits: &[f64],
        col: &mut Vec<f64>,
        dh2_accum: &mut [f64],
    ) {
        let width = batch * HW;
        let mid = head.conv2.out_c;
        // Convolutional branch.
        let mut dg1 = Vec::new();
        head.conv4.backward(&cache.g1, dlogits, batch, col, Some(&mut dg1));
        let mut dhc2 = Vec::new();
        head.conv3.backward(&cache.hc2, &dg1, batch, col, Some(&mut dhc2));
        // Fully connected branch.
        let mut dfc_in = Vec::new();
        head.fc.backward(&cache.fc_in, dlogits, batch, Some(&mut dfc_in));
        for c in 0..mid {
            for b in 0..batch {
                let src = &dfc_in[b * mid * HW + c * HW..b * mid * HW + (c + 1) * HW];
                let dst = &mut dhc2[c * width + b * HW..c * width + (b + 1) * HW];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut dpre2 = Vec::new();
        lrelu_backward(&cache.pre2, &dhc2, &mut dpre2);
        let mut dhc1 = Vec::new();
        head.conv2.backward(&cache.hc1, &dpre2, batch, col, Some(&mut dhc1));
        let mut dpre1 = Vec::new();
        lrelu_backward(&cache.pre1, &dhc1, &mut dpre1);
        let mut dh2 = Vec::new();
        head.conv1.backward(h2, &dpre1, batch, col, Some(&mut dh2));
        for (acc, d) in dh2_accum.iter_mut().zip(&dh2) {
            *acc += d;
        }
    }

    /// Forward pass over a `[PLANES][batch*HW]` input block.
    pub fn forward(
        &mut self,
        input: &[f64],
        batch: usize,
        training: bool,
        cache: &mut ForwardCache,
        out: &mut BatchOutputs,
    ) {
        let width = batch * HW;
        debug_assert_eq!(input.len(), PLANES * width);
        cache.batch = batch;
        cache.training = training;
        cache.input.clear();
        cache.input.extend_from_slice(input);
        // Borrow the cache fields separately so stage outputs feed the next
        // stage without copies.
        let ForwardCache {
            s_conv,
            stem_bn,
            s_bn,
            h0,
            blk1,
            blk2,
            target,
            state,
            belief,
            action,
            col,
            input: cached_input,
            ..
        } = cache;
        let _ = cached_input;
        self.stem_conv.forward(input, batch, col, s_conv);
        if training {
            self.stem_bn.forward_train(s_conv, width, s_bn, stem_bn);
        } else {
            self.stem_bn.forward_eval(s_conv, width, s_bn);
        }
        lrelu_forward(s_bn, h0);
        Self::forward_block(&mut self.block1, h0, width, training, blk1, col);
        Self::forward_block(&mut self.block2, &blk1.out, width, training, blk2, col);
        let h2 = &blk2.out;

        Self::forward_spatial_head(&mut self.target_head, h2, batch, target, col, &mut out.target_logits);
        Self::forward_spatial_head(&mut self.state_head, h2, batch, state, col, &mut out.state_logits);
        out.belief_logits = None;
        if let Some(bh) = &mut self.belief_head {
            let mut logits = Vec::new();
            Self::forward_spatial_head(bh, h2, batch, belief, col, &mut logits);
            out.belief_logits = Some(logits);
        }

        // Action head.
        let t = self.channels.torso;
        self.action_head.conv.forward(h2, batch, col, &mut action.pre);
        lrelu_forward(&action.pre, &mut action.ha);
        action.pooled.clear();
        action.pooled.resize(batch * t, 0.0);
        for c in 0..t {
            for b in 0..batch {
                let s: f64 =
                    action.ha[c * width + b * HW..c * width + (b + 1) * HW].iter().sum();
                action.pooled[b * t + c] = s / HW as f64;
            }
        }
        self.action_head.fc1.forward(&action.pooled, batch, &mut action.pre_f1);
        lrelu_forward(&action.pre_f1, &mut action.f1);
        self.action_head.fc2.forward(&action.f1, batch, &mut out.action_logits);
    }

    /// Backward pass; requires a training-mode forward cache. Accumulates
    /// parameter gradients (no implicit zeroing).
    pub fn backward(&mut self, cache: &ForwardCache, grads: &HeadGrads) {
        assert!(cache.training, "backward needs a training-mode forward");
        let batch = cache.batch;
        let width = batch * HW;
        let t = self.channels.torso;
        let h2 = &cache.blk2.out;
        let mut dh2 = vec![0.0; t * width];

        let col = &mut Vec::new();
        Self::backward_spatial_head(&mut self.target_head, h2, batch, &cache.target, &grads.target, col, &mut dh2);
        Self::backward_spatial_head(&mut self.state_head, h2, batch, &cache.state, &grads.state, col, &mut dh2);
        if let (Some(belief), Some(db)) = (&mut self.belief_head, &grads.belief) {
            Self::backward_spatial_head(belief, h2, batch, &cache.belief, db, col, &mut dh2);
        }

        // Action head backward.
        let ac = &cache.action;
        let mut df1 = Vec::new();
        self.action_head.fc2.backward(&ac.f1, &grads.action, batch, Some(&mut df1));
        let mut dpre_f1 = Vec::new();
        lrelu_backward(&ac.pre_f1, &df1, &mut dpre_f1);
        let mut dpooled = Vec::new();
        self.action_head.fc1.backward(&ac.pooled, &dpre_f1, batch, Some(&mut dpooled));
        let mut dha = vec![0.0; t * width];
        for c in 0..t {
            for b in 0..batch {
                let g = dpooled[b * t + c] / HW as f64;
                for v in &mut dha[c * width + b * HW..c * width + (b + 1) * HW] {
                    *v = g;
                }
            }
        }
        let mut dpre = Vec::new();
        lrelu_backward(&ac.pre, &dha, &mut dpre);
        let mut dh2_action = Vec::new();
        self.action_head.conv.backward(h2, &dpre, batch, col, Some(&mut dh2_action));
        for (acc, d) in dh2.iter_mut().zip(&dh2_action) {
            *acc += d;
        }

        // Torso backward.
        let mut scratch = Vec::new();
        let mut dh1 = Vec::new();
        Self::backward_block(&mut self.block2, width, &cache.blk2, &dh2, col, &mut scratch, &mut dh1);
        let mut dh0 = Vec::new();
        Self::backward_block(&mut self.block1, width, &cache.blk1, &dh1, col, &mut scratch, &mut dh0);
        let mut ds_bn = Vec::new();
        lrelu_backward(&cache.s_bn, &dh0, &mut ds_bn);
        let mut ds_conv = Vec::new();
        self.stem_bn.backward(&ds_bn, width, &cache.stem_bn, &mut ds_conv);
        self.stem_conv.backward(&cache.input, &ds_conv, batch, col, None);
    }

    /// Per-sample outputs in inference mode; belief logits become a simplex.
    pub fn infer(&mut self, input: &[f64], batch: usize, cache: &mut ForwardCache) -> Vec<HeadOutputs> {
        let mut out = BatchOutputs::default();
        self.forward(input, batch, false, cache, &mut out);
        let mut belief_probs = None;
        if let Some(logits) = &out.belief_logits {
            let mut probs = Vec::new();
            softmax_rows(logits, batch, CELLS, &mut probs);
            belief_probs = Some(probs);
        }
        (0..batch)
            .map(|b| HeadOutputs {
                target_logits: out.target_logits[b * CELLS..(b + 1) * CELLS].to_vec(),
                action_logits: out.action_logits[b * Action::COUNT..(b + 1) * Action::COUNT].to_vec(),
                state_logits: out.state_logits[b * CELLS..(b + 1) * CELLS].to_vec(),
                belief_probs: belief_probs
                    .as_ref()
                    .map(|p| p[b * CELLS..(b + 1) * CELLS].to_vec()),
            })
            .collect()
    }
}

/// Argmax with ties broken by lowest index.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
