//! Maneuver labels, observation windows, and the recurrent maneuver
//! classifier (gated recurrent cell + softmax head) with an in-repo
//! training loop.
//!
//! Features are frame-to-frame increments expressed in the frame of the
//! window's last pose, which makes inference invariant to translating or
//! rotating the raw track.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::geometry::wrap_angle;
use crate::scenario::PoseSample;

/// Net heading change that qualifies a look-ahead segment as a turn, radians.
pub const LABEL_TURN_THRESHOLD: f64 = 30.0 * std::f64::consts::PI / 180.0;
/// Lateral displacement that qualifies as a lane change (half a default
/// 3.5 m lane), meters.
pub const LABEL_LATERAL_THRESHOLD: f64 = 1.75;
/// Mean deceleration that qualifies as a yield, m/s².
pub const LABEL_YIELD_DECEL: f64 = 1.0;
/// End speed below which the segment is a yield regardless of deceleration, m/s.
pub const LABEL_STOP_SPEED: f64 = 0.5;

pub const NUM_LABELS: usize = 6;
pub const FEATURE_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyLabel {
    Forward,
    Yield,
    TurnLeft,
    TurnRight,
    LaneChangeLeft,
    LaneChangeRight,
}

impl PolicyLabel {
    pub const ALL: [PolicyLabel; NUM_LABELS] = [
        PolicyLabel::Forward,
        PolicyLabel::Yield,
        PolicyLabel::TurnLeft,
        PolicyLabel::TurnRight,
        PolicyLabel::LaneChangeLeft,
        PolicyLabel::LaneChangeRight,
    ];

    pub fn index(self) -> usize {
        match self {
            PolicyLabel::Forward => 0,
            PolicyLabel::Yield => 1,
            PolicyLabel::TurnLeft => 2,
            PolicyLabel::TurnRight => 3,
            PolicyLabel::LaneChangeLeft => 4,
            PolicyLabel::LaneChangeRight => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<PolicyLabel> {
        PolicyLabel::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyLabel::Forward => "forward",
            PolicyLabel::Yield => "yield",
            PolicyLabel::TurnLeft => "turn_left",
            PolicyLabel::TurnRight => "turn_right",
            PolicyLabel::LaneChangeLeft => "lane_change_left",
            PolicyLabel::LaneChangeRight => "lane_change_right",
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("window has {got} frames but the model expects {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("track does not cover [i-t_obs+1, i+t_pred] for i={i}, len={len}")]
    InsufficientSpan { i: usize, len: usize },
    #[error("dataset is empty or misses labels: {0}")]
    BadDataset(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// T_obs × 4 feature matrix: per frame (Δx, Δy, Δθ, v) in the last pose's
/// frame. The first row's deltas are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub features: Vec<[f64; FEATURE_DIM]>,
}

impl ObservationWindow {
    pub fn from_track(track: &[PoseSample]) -> ObservationWindow {
        assert!(track.len() >= 2, "a window needs at least 2 frames");
        let last = track.last().unwrap();
        let (sin, cos) = last.theta.sin_cos();
        let mut features = Vec::with_capacity(track.len());
        for (i, p) in track.iter().enumerate() {
            if i == 0 {
                features.push([0.0, 0.0, 0.0, p.v]);
                continue;
            }
            let q = &track[i - 1];
            let dx = p.x - q.x;
            let dy = p.y - q.y;
            features.push([
                cos * dx + sin * dy,
                -sin * dx + cos * dy,
                wrap_angle(p.theta - q.theta),
                p.v,
            ]);
        }
        ObservationWindow { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    pub probs: [f64; NUM_LABELS],
}

impl PolicyDistribution {
    pub fn argmax(&self) -> PolicyLabel {
        let mut best = 0;
        for i in 1..NUM_LABELS {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        PolicyLabel::from_index(best).unwrap()
    }
}

pub fn nll_loss(pred: &PolicyDistribution, label: PolicyLabel) -> f64 {
    -pred.probs[label.index()].max(1e-12).ln()
}

/// Classify the maneuver evident around frame `i`: geometry (turns and
/// lane changes) is measured over the combined span
/// `track[i+1-t_obs ..= i+t_pred]` in the frame of the span's first pose,
/// so a maneuver keeps its label while the window slides across it;
/// yielding is judged on the look-ahead alone, since it is about upcoming
/// deceleration. Precedence: turn > lane change > yield > forward.
pub fn label_window(
    track: &[PoseSample],
    i: usize,
    t_obs: usize,
    t_pred: usize,
) -> Result<PolicyLabel, PolicyError> {
    if i + 1 < t_obs || i + t_pred >= track.len() {
        return Err(PolicyError::InsufficientSpan { i, len: track.len() });
    }
    let span = &track[i + 1 - t_obs..=i + t_pred];
    let net_heading: f64 =
        span.windows(2).map(|w| wrap_angle(w[1].theta - w[0].theta)).sum();
    if net_heading > LABEL_TURN_THRESHOLD {
        return Ok(PolicyLabel::TurnLeft);
    }
    if net_heading < -LABEL_TURN_THRESHOLD {
        return Ok(PolicyLabel::TurnRight);
    }
    let start = span.first().unwrap();
    let end = span.last().unwrap();
    let (sin, cos) = start.theta.sin_cos();
    let lateral = -sin * (end.x - start.x) + cos * (end.y - start.y);
    if lateral > LABEL_LATERAL_THRESHOLD {
        return Ok(PolicyLabel::LaneChangeLeft);
    }
    if lateral < -LABEL_LATERAL_THRESHOLD {
        return Ok(PolicyLabel::LaneChangeRight);
    }
    let here = &track[i];
    let dt = end.t - here.t;
    let mean_accel = if dt > 0.0 { (end.v - here.v) / dt } else { 0.0 };
    if mean_accel < -LABEL_YIELD_DECEL || end.v < LABEL_STOP_SPEED {
        return Ok(PolicyLabel::Yield);
    }
    Ok(PolicyLabel::Forward)
}

// ---------------------------------------------------------------------------
// recurrent classifier
// ---------------------------------------------------------------------------

/// All learnable tensors. Biases are column matrices so every field shares
/// one shape type.
#[derive(Debug, Clone, PartialEq)]
struct Params {
    w_z: DMatrix<f64>,
    u_z: DMatrix<f64>,
    b_z: DMatrix<f64>,
    w_r: DMatrix<f64>,
    u_r: DMatrix<f64>,
    b_r: DMatrix<f64>,
    w_c: DMatrix<f64>,
    u_c: DMatrix<f64>,
    b_c: DMatrix<f64>,
    w_o: DMatrix<f64>,
    b_o: DMatrix<f64>,
}

const PARAM_NAMES: [&str; 11] =
    ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c", "w_o", "b_o"];

impl Params {
    fn zeros_like(hidden: usize) -> Params {
        let h = hidden;
        Params {
            w_z: DMatrix::zeros(h, FEATURE_DIM),
            u_z: DMatrix::zeros(h, h),
            b_z: DMatrix::zeros(h, 1),
            w_r: DMatrix::zeros(h, FEATURE_DIM),
            u_r: DMatrix::zeros(h, h),
            b_r: DMatrix::zeros(h, 1),
            w_c: DMatrix::zeros(h, FEATURE_DIM),
            u_c: DMatrix::zeros(h, h),
            b_c: DMatrix::zeros(h, 1),
            w_o: DMatrix::zeros(NUM_LABELS, h),
            b_o: DMatrix::zeros(NUM_LABELS, 1),
        }
    }

    fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Params {
        let mut p = Params::zeros_like(hidden);
        for m in p.fields_mut() {
            let (rows, cols) = m.shape();
            if cols == 1 {
                continue; // biases start at zero
            }
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for v in m.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    fn fields(&self) -> [&DMatrix<f64>; 11] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_c,
            &self.u_c, &self.b_c, &self.w_o, &self.b_o,
        ]
    }

    fn fields_mut(&mut self) -> [&mut DMatrix<f64>; 11] {
        [
            &mut self.w_z, &mut self.u_z, &mut self.b_z, &mut self.w_r, &mut self.u_r,
            &mut self.b_r, &mut self.w_c, &mut self.u_c, &mut self.b_c, &mut self.w_o,
            &mut self.b_o,
        ]
    }

    fn hidden(&self) -> usize {
        self.u_z.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct RecurrentClassifier {
    t_obs: usize,
    params: Params,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn add_bias_per_column(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        col += b.column(0);
    }
}

/// Per-step activations kept for backpropagation.
struct StepCache {
    x: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    z: DMatrix<f64>,
    r: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl RecurrentClassifier {
    pub fn t_obs(&self) -> usize {
        self.t_obs
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden()
    }

    /// Freshly initialized model with random weights; deterministic per
    /// seed. Useful for pipeline plumbing and as a training start point.
    pub fn untrained(t_obs: usize, hidden: usize, seed: u64) -> RecurrentClassifier {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RecurrentClassifier { t_obs, params: Params::init(hidden, &mut rng) }
    }

    /// Run the cell over a batch (columns = windows); returns per-step
    /// caches and the final hidden state.
    fn run_cell(&self, windows: &[&ObservationWindow]) -> (Vec<StepCache>, DMatrix<f64>) {
        let h = self.params.hidden();
        let b = windows.len();
        let t_len = windows[0].len();
        let mut h_state = DMatrix::zeros(h, b);
        let mut caches = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let x = DMatrix::from_fn(FEATURE_DIM, b, |f, k| windows[k].features[t][f]);
            let mut z = &self.params.w_z * &x + &self.params.u_z * &h_state;
            add_bias_per_column(&mut z, &self.params.b_z);
            z.apply(|v| *v = sigmoid(*v));
            let mut r = &self.params.w_r * &x + &self.params.u_r * &h_state;
            add_bias_per_column(&mut r, &self.params.b_r);
            r.apply(|v| *v = sigmoid(*v));
            let rh = r.component_mul(&h_state);
            let mut c = &self.params.w_c * &x + &self.params.u_c * &rh;
            add_bias_per_column(&mut c, &self.params.b_c);
            c.apply(|v| *v = v.tanh());
            let h_new = h_state.clone()
                - z.component_mul(&h_state)
                + z.component_mul(&c);
            caches.push(StepCache { x, h_prev: h_state, z, r, c });
            h_state = h_new;
        }
        (caches, h_state)
    }

    fn logits(&self, h_final: &DMatrix<f64>) -> DMatrix<f64> {
        let mut l = &self.params.w_o * h_final;
        add_bias_per_column(&mut l, &self.params.b_o);
        l
    }

    pub fn infer(&self, window: &ObservationWindow) -> Result<PolicyDistribution, PolicyError> {
        if window.len() != self.t_obs {
            return Err(PolicyError::ShapeMismatch { got: window.len(), expected: self.t_obs });
        }
        let (_, h_final) = self.run_cell(&[window]);
        let logits = self.logits(&h_final);
        let probs = softmax_column(&logits.column(0).into_owned());
        let mut out = [0.0; NUM_LABELS];
        out.copy_from_slice(probs.as_slice());
        Ok(PolicyDistribution { probs: out })
    }

    /// Mean NLL over the batch plus parameter gradients (backpropagation
    /// through time) and the per-window argmax hit count.
    fn loss_and_grads(
        &self,
        windows: &[&ObservationWindow],
        labels: &[PolicyLabel],
    ) -> (f64, Params, usize) {
        let b = windows.len();
        let (caches, h_final) = self.run_cell(windows);
        let logits = self.logits(&h_final);

        let mut loss = 0.0;
        let mut hits = 0;
        let mut dlogits = DMatrix::zeros(NUM_LABELS, b);
        for k in 0..b {
            let probs = softmax_column(&logits.column(k).into_owned());
            let li = labels[k].index();
            loss += -probs[li].max(1e-12).ln();
            let mut best = 0;
            for j in 1..NUM_LABELS {
                if probs[j] > probs[best] {
                    best = j;
                }
            }
            if best == li {
                hits += 1;
            }
            for j in 0..NUM_LABELS {
                dlogits[(j, k)] = (probs[j] - if j == li { 1.0 } else { 0.0 }) / b as f64;
            }
        }
        loss /= b as f64;

        let mut g = Params::zeros_like(self.params.hidden());
        g.w_o = &dlogits * h_final.transpose();
        g.b_o = DMatrix::from_fn(NUM_LABELS, 1, |i, _| dlogits.row(i).sum());
        let mut dh = self.params.w_o.transpose() * &dlogits;

        for cache in caches.iter().rev() {
            let StepCache { x, h_prev, z, r, c } = cache;
            // h = h_prev + z ∘ (c − h_prev)
            let dz = dh.component_mul(&(c - h_prev));
            let dc = dh.component_mul(z);
            let mut dh_prev = dh.component_mul(&z.map(|v| 1.0 - v));

            let dc_pre = dc.component_mul(&c.map(|v| 1.0 - v * v));
            g.w_c += &dc_pre * x.transpose();
            g.u_c += &dc_pre * r.component_mul(h_prev).transpose();
            add_column_sums(&mut g.b_c, &dc_pre);
            let drh = self.params.u_c.transpose() * &dc_pre;
            let dr = drh.component_mul(h_prev);
            dh_prev += drh.component_mul(r);

            let dr_pre = dr.component_mul(&r.map(|v| v * (1.0 - v)));
            g.w_r += &dr_pre * x.transpose();
            g.u_r += &dr_pre * h_prev.transpose();
            add_column_sums(&mut g.b_r, &dr_pre);
            dh_prev += self.params.u_r.transpose() * &dr_pre;

            let dz_pre = dz.component_mul(&z.map(|v| v * (1.0 - v)));
            g.w_z += &dz_pre * x.transpose();
            g.u_z += &dz_pre * h_prev.transpose();
            add_column_sums(&mut g.b_z, &dz_pre);
            dh_prev += self.params.u_z.transpose() * &dz_pre;

            dh = dh_prev;
        }
        (loss, g, hits)
    }
}

fn add_column_sums(bias_grad: &mut DMatrix<f64>, d: &DMatrix<f64>) {
    for col in d.column_iter() {
        for (i, v) in col.iter().enumerate() {
            bias_grad[(i, 0)] += v;
        }
    }
}

fn softmax_column(col: &DVector<f64>) -> DVector<f64> {
    let max = col.max();
    let mut e = col.map(|v| (v - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub grad_clip: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            hidden: 64,
            grad_clip: 5.0,
            val_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingExample {
    pub window: ObservationWindow,
    pub label: PolicyLabel,
    /// Source-track identifier; the train/validation split groups by this
    /// id so windows from one track never straddle the split.
    pub group: u64,
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    version: u32,
    t_obs: usize,
    t_pred: usize,
    examples: Vec<TrainingExample>,
}

/// Canonical dataset serialization; exact f64 round-trip, so a fixed
/// generation seed yields byte-identical text.
pub fn dataset_to_json(examples: &[TrainingExample], t_obs: usize, t_pred: usize) -> String {
    let doc = DatasetDoc { version: 1, t_obs, t_pred, examples: examples.to_vec() };
    serde_json::to_string(&doc).expect("dataset serializes")
}

pub fn save_dataset(
    path: &Path,
    examples: &[TrainingExample],
    t_obs: usize,
    t_pred: usize,
) -> Result<(), PolicyError> {
    std::fs::write(path, dataset_to_json(examples, t_obs, t_pred))?;
    Ok(())
}

/// Read a dataset written by [`save_dataset`] (leading `#` header lines
/// tolerated); returns (examples, t_obs, t_pred).
pub fn load_dataset(path: &Path) -> Result<(Vec<TrainingExample>, usize, usize), PolicyError> {
    let text = std::fs::read_to_string(path)?;
    let doc: DatasetDoc = serde_json::from_str(crate::scenario::strip_header_lines(&text))
        .map_err(|e| PolicyError::ModelFile(format!("dataset parse: {e}")))?;
    if doc.version != 1 {
        return Err(PolicyError::ModelFile(format!("unsupported dataset version {}", doc.version)));
    }
    for ex in &doc.examples {
        if ex.window.len() != doc.t_obs {
            return Err(PolicyError::ModelFile(
                "dataset window length disagrees with its t_obs".into(),
            ));
        }
    }
    Ok((doc.examples, doc.t_obs, doc.t_pred))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

struct Adam {
    m: Params,
    v: Params,
    step: usize,
}

impl Adam {
    fn new(hidden: usize) -> Adam {
        Adam { m: Params::zeros_like(hidden), v: Params::zeros_like(hidden), step: 0 }
    }

    fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        let ps = params.fields_mut();
        let gs = grads.fields();
        let ms = self.m.fields_mut();
        let vs = self.v.fields_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
    }
}

fn clip_gradients(g: &mut Params, max_norm: f64) {
    let norm: f64 = g.fields().iter().map(|m| m.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for m in g.fields_mut() {
            *m *= s;
        }
    }
}

/// Train a classifier on labeled windows. Deterministic for a fixed seed:
/// identical parameters bit for bit.
pub fn train(
    dataset: &[TrainingExample],
    config: &TrainConfig,
    seed: u64,
) -> Result<(RecurrentClassifier, Vec<EpochMetrics>), PolicyError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if dataset.is_empty() {
        return Err(PolicyError::BadDataset("no examples".into()));
    }
    let t_obs = dataset[0].window.len();
    for ex in dataset {
        if ex.window.len() != t_obs {
            return Err(PolicyError::BadDataset("examples have mixed window sizes".into()));
        }
    }
    let mut present = [false; NUM_LABELS];
    for ex in dataset {
        present[ex.label.index()] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(PolicyError::BadDataset(format!(
            "label {} absent from the dataset",
            PolicyLabel::from_index(missing).unwrap().name()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // split by source track, not by window, so near-duplicate windows
    // cannot leak across the split
    let mut groups: Vec<u64> = dataset.iter().map(|e| e.group).collect();
    groups.sort_unstable();
    groups.dedup();
    groups.shuffle(&mut rng);
    let val_groups = ((groups.len() as f64 * config.val_fraction).round() as usize)
        .min(groups.len().saturating_sub(1));
    let val_set: std::collections::BTreeSet<u64> =
        groups[..val_groups].iter().copied().collect();
    let (mut train_idx, mut val_idx): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
    for (i, ex) in dataset.iter().enumerate() {
        if val_set.contains(&ex.group) {
            val_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    if train_idx.is_empty() {
        return Err(PolicyError::BadDataset("training split is empty".into()));
    }

    let mut model =
        RecurrentClassifier { t_obs, params: Params::init(config.hidden, &mut rng) };
    let mut adam = Adam::new(config.hidden);
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut train_hits = 0usize;
        let mut batches = 0usize;
        for chunk in train_idx.chunks(config.batch_size) {
            let windows: Vec<&ObservationWindow> =
                chunk.iter().map(|&i| &dataset[i].window).collect();
            let labels: Vec<PolicyLabel> = chunk.iter().map(|&i| dataset[i].label).collect();
            let (loss, mut grads, hits) = model.loss_and_grads(&windows, &labels);
            if !loss.is_finite() {
                return Err(PolicyError::Diverged { epoch, loss });
            }
            clip_gradients(&mut grads, config.grad_clip);
            adam.update(&mut model.params, &grads, config.learning_rate);
            train_loss += loss;
            train_hits += hits;
            batches += 1;
        }
        train_loss /= batches.max(1) as f64;

        let (val_loss, val_acc) = evaluate(&model, dataset, &val_idx);
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy: train_hits as f64 / train_idx.len() as f64,
            val_loss,
            val_accuracy: val_acc,
        });
    }
    Ok((model, metrics))
}

/// Mean NLL and accuracy of the model on the given example indices.
pub fn evaluate(
    model: &RecurrentClassifier,
    dataset: &[TrainingExample],
    indices: &[usize],
) -> (f64, f64) {
    if indices.is_empty() {
        return (0.0, 1.0);
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    for chunk in indices.chunks(256) {
        let windows: Vec<&ObservationWindow> =
            chunk.iter().map(|&i| &dataset[i].window).collect();
        let (_, h_final) = model.run_cell(&windows);
        let logits = model.logits(&h_final);
        for (k, &i) in chunk.iter().enumerate() {
            let probs = softmax_column(&logits.column(k).into_owned());
            let li = dataset[i].label.index();
            loss += -probs[li].max(1e-12).ln();
            let mut best = 0;
            for j in 1..NUM_LABELS {
                if probs[j] > probs[best] {
                    best = j;
                }
            }
            if best == li {
                hits += 1;
            }
        }
    }
    (loss / indices.len() as f64, hits as f64 / indices.len() as f64)
}

// ---------------------------------------------------------------------------
// model & dataset files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    t_obs: usize,
    input: usize,
    hidden: usize,
    labels: usize,
    tensors: std::collections::BTreeMap<String, TensorDoc>,
}

impl RecurrentClassifier {
    pub fn to_json(&self) -> String {
        let mut tensors = std::collections::BTreeMap::new();
        for (name, m) in PARAM_NAMES.iter().zip(self.params.fields()) {
            tensors.insert(
                name.to_string(),
                TensorDoc { rows: m.nrows(), cols: m.ncols(), data: m.as_slice().to_vec() },
            );
        }
        let doc = ModelDoc {
            version: 1,
            t_obs: self.t_obs,
            input: FEATURE_DIM,
            hidden: self.params.hidden(),
            labels: NUM_LABELS,
            tensors,
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<RecurrentClassifier, PolicyError> {
        let text = crate::scenario::strip_header_lines(text);
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| PolicyError::ModelFile(e.to_string()))?;
        if doc.version != 1 {
            return Err(PolicyError::ModelFile(format!("unsupported version {}", doc.version)));
        }
        if doc.input != FEATURE_DIM || doc.labels != NUM_LABELS {
            return Err(PolicyError::ModelFile("input/label shape mismatch".into()));
        }
        let mut params = Params::zeros_like(doc.hidden);
        for (name, field) in PARAM_NAMES.iter().zip(params.fields_mut()) {
            let t = doc
                .tensors
                .get(*name)
                .ok_or_else(|| PolicyError::ModelFile(format!("missing tensor {name}")))?;
            if (t.rows, t.cols) != field.shape() || t.data.len() != t.rows * t.cols {
                return Err(PolicyError::ModelFile(format!("tensor {name} has a bad shape")));
            }
            field.as_mut_slice().copy_from_slice(&t.data);
            if field.iter().any(|v| !v.is_finite()) {
                return Err(PolicyError::ModelFile(format!("tensor {name} is not finite")));
            }
        }
        Ok(RecurrentClassifier { t_obs: doc.t_obs, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RecurrentClassifier, PolicyError> {
        RecurrentClassifier::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn straight_track(n: usize, v: f64) -> Vec<PoseSample> {
        (0..n)
            .map(|i| PoseSample { t: i as f64 * 0.1, x: i as f64 * v * 0.1, y: 0.0, theta: 0.0, v })
            .collect()
    }

    #[test]
    fn nll_examples() {
        let mut probs = [0.0; NUM_LABELS];
        probs[2] = 1.0;
        let d = PolicyDistribution { probs };
        assert_relative_eq!(nll_loss(&d, PolicyLabel::TurnLeft), 0.0);
        let d = PolicyDistribution { probs: [1.0 / 6.0; NUM_LABELS] };
        assert_relative_eq!(nll_loss(&d, PolicyLabel::Forward), 6f64.ln(), epsilon = 1e-12);
        let mut probs = [0.1; NUM_LABELS];
        probs[0] = 0.5;
        let d = PolicyDistribution { probs };
        assert_relative_eq!(nll_loss(&d, PolicyLabel::Forward), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn labeler_straight_is_forward() {
        let track = straight_track(90, 8.0);
        assert_eq!(label_window(&track, 44, 40, 40).unwrap(), PolicyLabel::Forward);
    }

    #[test]
    fn labeler_braking_to_standstill_is_yield() {
        let mut track = straight_track(90, 10.0);
        // decelerate from 10 m/s to 0 across the look-ahead
        let mut x = track[44].x;
        let mut v: f64 = 10.0;
        for p in track.iter_mut().skip(45) {
            v = (v - 0.3).max(0.0);
            x += v * 0.1;
            p.x = x;
            p.v = v;
        }
        assert_eq!(label_window(&track, 44, 40, 40).unwrap(), PolicyLabel::Yield);
    }

    #[test]
    fn labeler_quarter_turn_is_turn_left() {
        let mut track = straight_track(90, 8.0);
        let mut theta: f64 = 0.0;
        let (mut x, mut y) = (track[44].x, 0.0);
        for p in track.iter_mut().skip(45) {
            theta += std::f64::consts::FRAC_PI_2 / 30.0;
            x += 8.0 * 0.1 * theta.cos();
            y += 8.0 * 0.1 * theta.sin();
            *p = PoseSample { t: p.t, x, y, theta, v: 8.0 };
        }
        assert_eq!(label_window(&track, 44, 40, 40).unwrap(), PolicyLabel::TurnLeft);
    }

    #[test]
    fn labeler_lateral_shift_is_lane_change() {
        let mut track = straight_track(90, 8.0);
        for (k, p) in track.iter_mut().enumerate().skip(45) {
            let u = ((k - 45) as f64 / 30.0).min(1.0);
            p.y = 3.5 * u * u * (3.0 - 2.0 * u);
        }
        assert_eq!(label_window(&track, 44, 40, 40).unwrap(), PolicyLabel::LaneChangeLeft);
        for p in track.iter_mut() {
            p.y = -p.y;
        }
        assert_eq!(label_window(&track, 44, 40, 40).unwrap(), PolicyLabel::LaneChangeRight);
    }

    #[test]
    fn labeler_rejects_short_tracks() {
        let track = straight_track(50, 8.0);
        assert!(label_window(&track, 44, 40, 40).is_err());
    }

    fn toy_model(seed: u64, hidden: usize, t_obs: usize) -> RecurrentClassifier {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RecurrentClassifier { t_obs, params: Params::init(hidden, &mut rng) }
    }

    fn toy_window(seed: u64, t: usize) -> ObservationWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ObservationWindow {
            features: (0..t)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(0.0..10.0),
                    ]
                })
                .collect(),
        }
    }

    #[test]
    fn infer_is_a_distribution_and_deterministic() {
        let model = toy_model(1, 8, 6);
        let w = toy_window(2, 6);
        let d1 = model.infer(&w).unwrap();
        let d2 = model.infer(&w).unwrap();
        assert_eq!(d1, d2);
        let sum: f64 = d1.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(d1.probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn infer_rejects_shape_mismatch() {
        let model = toy_model(1, 8, 6);
        let w = toy_window(2, 5);
        assert!(matches!(model.infer(&w), Err(PolicyError::ShapeMismatch { .. })));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut model = toy_model(7, 6, 5);
        let windows: Vec<ObservationWindow> =
            (0..3).map(|k| toy_window(100 + k, 5)).collect();
        let refs: Vec<&ObservationWindow> = windows.iter().collect();
        let labels = [PolicyLabel::Forward, PolicyLabel::TurnLeft, PolicyLabel::Yield];
        let (_, analytic, _) = model.loss_and_grads(&refs, &labels);

        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for f in 0..11 {
            let len = model.params.fields()[f].len();
            for i in 0..len {
                let orig = model.params.fields()[f][i];
                model.params.fields_mut()[f][i] = orig + eps;
                let (lp, _, _) = model.loss_and_grads(&refs, &labels);
                model.params.fields_mut()[f][i] = orig - eps;
                let (lm, _, _) = model.loss_and_grads(&refs, &labels);
                model.params.fields_mut()[f][i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let a = analytic.fields()[f][i];
                let rel = (a - fd).abs() / fd.abs().max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    fn separable_toy_dataset() -> Vec<TrainingExample> {
        // class A: positive Δx ramps; class B: negative. Trivially separable.
        let mut out = Vec::new();
        for k in 0..40 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let label = if k % 2 == 0 { PolicyLabel::Forward } else { PolicyLabel::Yield };
            let features =
                (0..6).map(|t| [sign * (t as f64 + 1.0) * 0.1, 0.0, 0.0, 1.0]).collect();
            out.push(TrainingExample {
                window: ObservationWindow { features },
                label,
                group: k as u64,
            });
        }
        out
    }

    #[test]
    fn training_separates_a_separable_toy_set() {
        // the dataset check requires all six labels, so pad with tiny
        // per-label clusters that are also separable
        let mut data = separable_toy_dataset();
        for (li, label) in PolicyLabel::ALL.iter().enumerate().skip(2) {
            for k in 0..10 {
                let features = (0..6)
                    .map(|t| [0.0, (li as f64) * 0.5, (t as f64) * 0.01, k as f64 * 0.1])
                    .collect();
                data.push(TrainingExample {
                    window: ObservationWindow { features },
                    label: *label,
                    group: 1000 + (li * 100 + k) as u64,
                });
            }
        }
        let config = TrainConfig { epochs: 50, hidden: 16, ..TrainConfig::default() };
        let (_, metrics) = train(&data, &config, 3).unwrap();
        let best = metrics.iter().map(|m| m.val_accuracy).fold(0.0, f64::max);
        assert_eq!(best, 1.0, "validation accuracy never reached 100%: {best}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = {
            let mut d = separable_toy_dataset();
            for (li, label) in PolicyLabel::ALL.iter().enumerate().skip(2) {
                let features = (0..6).map(|t| [0.0, li as f64, t as f64 * 0.01, 0.0]).collect();
                d.push(TrainingExample {
                    window: ObservationWindow { features },
                    label: *label,
                    group: 1000 + li as u64,
                });
            }
            d
        };
        let config = TrainConfig { epochs: 3, hidden: 8, ..TrainConfig::default() };
        let (m1, _) = train(&data, &config, 42).unwrap();
        let (m2, _) = train(&data, &config, 42).unwrap();
        assert_eq!(m1.to_json(), m2.to_json());
    }

    #[test]
    fn model_json_round_trips_bit_exactly() {
        let model = toy_model(9, 12, 7);
        let text = model.to_json();
        let back = RecurrentClassifier::from_json(&text).unwrap();
        assert_eq!(model.params, back.params);
        assert_eq!(model.t_obs, back.t_obs);
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn dataset_round_trips() {
        let data = separable_toy_dataset();
        let t_obs = data[0].window.len();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        save_dataset(&path, &data, t_obs, 40).unwrap();
        let (back, back_obs, back_pred) = load_dataset(&path).unwrap();
        assert_eq!((back_obs, back_pred), (t_obs, 40));
        assert_eq!(data.len(), back.len());
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.window, b.window);
            assert_eq!(a.label, b.label);
            assert_eq!(a.group, b.group);
        }
        // a prepended artifact header is skipped on load
        let raw = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, format!("# trajpred v0.0.0 params=x\n{raw}")).unwrap();
        let (again, _, _) = load_dataset(&path).unwrap();
        assert_eq!(again.len(), data.len());
    }

    #[test]
    fn features_invariant_under_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let track: Vec<PoseSample> = (0..12)
                .map(|i| PoseSample {
                    t: i as f64 * 0.1,
                    x: i as f64 * 0.7 + rng.gen_range(-0.05..0.05),
                    y: (i as f64 * 0.3).sin(),
                    theta: rng.gen_range(-0.4..0.4),
                    v: rng.gen_range(0.0..12.0),
                })
                .collect();
            let dx = rng.gen_range(-100.0..100.0);
            let dy = rng.gen_range(-100.0..100.0);
            let phi: f64 = rng.gen_range(-3.0..3.0);
            let (s, c) = (phi.sin(), phi.cos());
            let moved: Vec<PoseSample> = track
                .iter()
                .map(|p| PoseSample {
                    t: p.t,
                    x: c * p.x - s * p.y + dx,
                    y: s * p.x + c * p.y + dy,
                    theta: wrap_angle(p.theta + phi),
                    v: p.v,
                })
                .collect();
            let a = ObservationWindow::from_track(&track);
            let b = ObservationWindow::from_track(&moved);
            for (ra, rb) in a.features.iter().zip(&b.features) {
                for (va, vb) in ra.iter().zip(rb) {
                    assert!((va - vb).abs() < 1e-9, "{va} vs {vb}");
                }
            }
        }
    }
}
