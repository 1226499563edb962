//! Gradient-descent training of the toy model on synthetic scenes.
//!
//! Gradients are derived by hand. The loss splits into three heads whose
//! activations are sigmoids or affine box shifts, so each parameter
//! gradient is a short chain: probability-space gradients come from the
//! loss module, `dp/dlogit = p (1 - p)` maps them to logits, and
//! regression gradients pass through the stride scaling and the
//! degenerate-box repair of the forward pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assignment::{
    build_ac_targets, label_locations, AnchorTarget, AssignmentResult, LocationLabeler,
};
use crate::error::{Error, Result};
use crate::evaluation::{map_report, DetRecord, EvalReport, GtRecord};
use crate::geometry::{iou, AnchorGrid, AnchorSpec, BBox};
use crate::inference::{nms, run_inference, Detection, InferenceConfig};
use crate::losses::{anchor_cls_loss, iou_loss, location_cls_loss, total_loss, LossConfig, LossReport};
use crate::toytrain::model::{ModelDims, ToyModel};
use crate::toytrain::scene::{generate_dataset, SceneConfig, SyntheticScene};

/// Everything a training run needs to be reproducible.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Master seed; scenes, and the anchor-sampling baseline, derive all
    /// randomness from it.
    pub seed: u64,
    /// Number of optimizer steps.
    pub steps: usize,
    pub learning_rate: f64,
    /// Momentum coefficient in `[0,1)`.
    pub momentum: f64,
    /// Global gradient-norm clip; 0 disables clipping. The log-IoU
    /// regression loss has gradients proportional to `1/IoU`, so batches
    /// with badly overlapping anchors can otherwise blow up the shared
    /// heads.
    pub grad_clip_norm: f64,
    /// Images per step; batches cycle through the training set in index
    /// order.
    pub batch_size: usize,
    /// Training set size (scene indices `0..num_images`).
    pub num_images: usize,
    /// Held-out set size (scene indices continue after the training set).
    pub num_eval_images: usize,
    pub scene: SceneConfig,
    /// Anchor shape set; together with `stride` it fixes the grid.
    pub spec: AnchorSpec,
    /// Grid stride in pixels (the toy grid has a single level whose base
    /// anchor size is the scene's `base_size`).
    pub stride: f64,
    /// Location labeling strategy used to build targets.
    pub labeler: LocationLabeler,
    /// Anchor-label IoU band.
    pub fg_thresh: f64,
    pub bg_thresh: f64,
    /// Post-regression IoU at which an anchor counts as correctly
    /// refined.
    pub ac_iou_thresh: f64,
    pub loss: LossConfig,
    /// When false, the anchor-classification loss is dropped and its head
    /// stays at initialization; evaluation then needs the
    /// anchor-sampling baseline.
    pub ac_head_enabled: bool,
    /// Prior probability used to initialize the anchor-head bias, the
    /// usual trick for focal-style losses: most anchors at a location are
    /// not the best one, so starting their probability low means training
    /// only has to push the good anchors up.
    pub ac_prior: f64,
    pub inference: InferenceConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            steps: 800,
            learning_rate: 0.03,
            momentum: 0.9,
            grad_clip_norm: 2.0,
            batch_size: 4,
            num_images: 16,
            num_eval_images: 8,
            scene: SceneConfig::default(),
            spec: AnchorSpec::new(3, 3).expect("static spec"),
            stride: 8.0,
            labeler: LocationLabeler::Simplified,
            fg_thresh: 0.5,
            bg_thresh: 0.4,
            ac_iou_thresh: 0.5,
            loss: LossConfig::default(),
            ac_head_enabled: true,
            ac_prior: 0.2,
            inference: InferenceConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.loss.validate()?;
        self.inference.validate()?;
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(
                "learning_rate",
                format!("must be positive and finite, got {}", self.learning_rate),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(
                "momentum",
                format!("must be in [0,1), got {}", self.momentum),
            ));
        }
        if !(self.grad_clip_norm.is_finite() && self.grad_clip_norm >= 0.0) {
            return Err(Error::invalid(
                "grad_clip_norm",
                format!("must be finite and >= 0, got {}", self.grad_clip_norm),
            ));
        }
        if !(self.ac_prior > 0.0 && self.ac_prior < 1.0) {
            return Err(Error::invalid(
                "ac_prior",
                format!("must be in (0,1), got {}", self.ac_prior),
            ));
        }
        if self.batch_size == 0 || self.batch_size > self.num_images {
            return Err(Error::invalid(
                "batch_size",
                format!(
                    "must be in 1..={} (the training set size), got {}",
                    self.num_images, self.batch_size
                ),
            ));
        }
        if self.num_images == 0 || self.num_eval_images == 0 {
            return Err(Error::invalid(
                "num_images/num_eval_images",
                "both splits need at least one image",
            ));
        }
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::invalid(
                "stride",
                format!("must be positive and finite, got {}", self.stride),
            ));
        }
        for (name, v) in [("fg_thresh", self.fg_thresh), ("bg_thresh", self.bg_thresh)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    match name {
                        "fg_thresh" => "fg_thresh",
                        _ => "bg_thresh",
                    },
                    format!("must be in [0,1], got {v}"),
                ));
            }
        }
        if self.bg_thresh > self.fg_thresh {
            return Err(Error::invalid(
                "bg_thresh",
                format!(
                    "must not exceed fg_thresh ({} > {})",
                    self.bg_thresh, self.fg_thresh
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.ac_iou_thresh) {
            return Err(Error::invalid(
                "ac_iou_thresh",
                format!("must be in [0,1], got {}", self.ac_iou_thresh),
            ));
        }
        Ok(())
    }
}

/// An anchor that takes part in the regression loss: it sits at a
/// positive location and overlaps a ground-truth box of that location's
/// class before regression. Its target is fixed for the whole run.
#[derive(Debug, Clone, Copy)]
pub struct RegParticipant {
    /// Flat anchor index.
    pub anchor: usize,
    pub target: BBox,
}

/// Trains a [`ToyModel`] with momentum SGD on a fixed synthetic dataset.
#[derive(Debug, Clone)]
pub struct ToyTrainer {
    cfg: TrainConfig,
    grid: AnchorGrid,
    pub model: ToyModel,
    velocity: Vec<f64>,
    steps_taken: usize,
    train_scenes: Vec<SyntheticScene>,
    eval_scenes: Vec<SyntheticScene>,
    assignments: Vec<AssignmentResult>,
    reg_participants: Vec<Vec<RegParticipant>>,
}

impl ToyTrainer {
    /// Builds the dataset, labels it once (labels are
    /// regression-independent, so they never change during training), and
    /// initializes the model at zero.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let size = cfg.scene.image_size;
        let grid =
            AnchorGrid::for_image(cfg.spec.clone(), size, size, cfg.stride, cfg.scene.base_size)?;
        let train_scenes = generate_dataset(cfg.seed, cfg.num_images, 0, &cfg.scene, &grid)?;
        let eval_scenes = generate_dataset(
            cfg.seed,
            cfg.num_eval_images,
            cfg.num_images,
            &cfg.scene,
            &grid,
        )?;
        let mut assignments = Vec::with_capacity(train_scenes.len());
        let mut reg_participants = Vec::with_capacity(train_scenes.len());
        for scene in &train_scenes {
            let assign =
                label_locations(&grid, &scene.gt, cfg.labeler, cfg.fg_thresh, cfg.bg_thresh)?;
            reg_participants.push(collect_reg_participants(&grid, &assign, scene));
            assignments.push(assign);
        }
        let dims = ModelDims {
            num_classes: cfg.scene.num_classes,
            dx: cfg.scene.dx(),
            dz: cfg.scene.dz(),
        };
        let mut model = ToyModel::zeros(dims);
        model.ac.bias[0] = (cfg.ac_prior / (1.0 - cfg.ac_prior)).ln();
        let velocity = vec![0.0; model.num_params()];
        Ok(ToyTrainer {
            cfg,
            grid,
            model,
            velocity,
            steps_taken: 0,
            train_scenes,
            eval_scenes,
            assignments,
            reg_participants,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn train_scenes(&self) -> &[SyntheticScene] {
        &self.train_scenes
    }

    pub fn eval_scenes(&self) -> &[SyntheticScene] {
        &self.eval_scenes
    }

    pub fn assignments(&self) -> &[AssignmentResult] {
        &self.assignments
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// The training images used at a given step: a cyclic window over the
    /// dataset, so every run visits images in the same order.
    pub fn batch_for_step(&self, step: usize) -> Vec<usize> {
        let n = self.cfg.num_images;
        let start = (step * self.cfg.batch_size) % n;
        (0..self.cfg.batch_size).map(|j| (start + j) % n).collect()
    }

    /// Builds the anchor-classification targets for a batch from the
    /// model's current regressed boxes. The targets freeze what the loss
    /// treats as ground truth for one step: the finite-difference oracle
    /// evaluates the loss at perturbed parameters against these same
    /// targets.
    pub fn build_targets(
        &self,
        model: &ToyModel,
        batch: &[usize],
    ) -> Result<Vec<Vec<AnchorTarget>>> {
        let mut out = Vec::with_capacity(batch.len());
        for &img in batch {
            if !self.cfg.ac_head_enabled {
                out.push(Vec::new());
                continue;
            }
            let scene = &self.train_scenes[img];
            let assign = &self.assignments[img];
            let fwd = model.forward(scene, &self.grid)?;
            out.push(build_ac_targets(
                &self.grid,
                &fwd.refined,
                &assign.locations,
                &assign.anchor_labels,
                &scene.gt,
                self.cfg.ac_iou_thresh,
                self.cfg.loss.sigma,
            )?);
        }
        Ok(out)
    }

    /// Evaluates the batch loss at the given parameters with targets held
    /// fixed. This is the scalar function the finite-difference check
    /// differentiates.
    pub fn batch_loss(
        &self,
        model: &ToyModel,
        batch: &[usize],
        targets: &[Vec<AnchorTarget>],
    ) -> Result<f64> {
        let report = self.batch_pass(model, batch, targets, None)?;
        Ok(report.l_total)
    }

    /// Computes the batch loss report and the gradient of the total loss
    /// with respect to every parameter, laid out like
    /// [`ToyModel::params`].
    pub fn batch_grads(
        &self,
        model: &ToyModel,
        batch: &[usize],
        targets: &[Vec<AnchorTarget>],
    ) -> Result<(LossReport, Vec<f64>)> {
        let mut grads = vec![0.0; model.num_params()];
        let report = self.batch_pass(model, batch, targets, Some(&mut grads))?;
        Ok((report, grads))
    }

    /// Shared forward (and optional backward) pass over a batch. Losses
    /// are averaged over the batch; positive counts are summed.
    fn batch_pass(
        &self,
        model: &ToyModel,
        batch: &[usize],
        targets: &[Vec<AnchorTarget>],
        mut grads: Option<&mut Vec<f64>>,
    ) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::invalid("batch", "must contain at least one image"));
        }
        if targets.len() != batch.len() {
            return Err(Error::invalid(
                "targets",
                format!("need {} target sets, got {}", batch.len(), targets.len()),
            ));
        }
        let dims = model.dims();
        let (c, k) = (dims.num_classes, self.grid.anchors_per_location());
        let cfg = &self.cfg.loss;
        let wimg = 1.0 / batch.len() as f64;
        let (mut l_cls, mut l_reg, mut l_ac) = (0.0, 0.0, 0.0);
        let (mut pos_locs, mut pos_anchors) = (0, 0);

        // Parameter layout offsets within the flat gradient vector.
        let loc_w = 0;
        let loc_b = loc_w + model.loc.weights.len();
        let reg_w = loc_b + model.loc.bias.len();
        let reg_b = reg_w + model.reg.weights.len();
        let ac_w = reg_b + model.reg.bias.len();
        let ac_b = ac_w + model.ac.weights.len();

        for (bi, &img) in batch.iter().enumerate() {
            if img >= self.train_scenes.len() {
                return Err(Error::invalid(
                    "batch",
                    format!(
                        "image index {img} out of range ({} training images)",
                        self.train_scenes.len()
                    ),
                ));
            }
            let scene = &self.train_scenes[img];
            let assign = &self.assignments[img];
            let fwd = model.forward(scene, &self.grid)?;

            // Location classification head.
            let (cls, dp_loc, np) =
                location_cls_loss(&fwd.loc_probs, &assign.locations, c, cfg)?;
            l_cls += wimg * cls;
            pos_locs += np;
            if let Some(g) = grads.as_deref_mut() {
                for i in 0..self.grid.num_locations() {
                    let x = &scene.loc_features[i * dims.dx..(i + 1) * dims.dx];
                    for cc in 0..c {
                        let dp = dp_loc[i * c + cc];
                        if dp == 0.0 {
                            continue;
                        }
                        let p = fwd.loc_probs[i * c + cc];
                        let dlogit = dp * p * (1.0 - p) * wimg;
                        let row = loc_w + cc * dims.dx;
                        for (j, &xv) in x.iter().enumerate() {
                            g[row + j] += dlogit * xv;
                        }
                        g[loc_b + cc] += dlogit;
                    }
                }
            }

            // Box regression head.
            let parts = &self.reg_participants[img];
            let norm = (parts.len().max(1)) as f64;
            for part in parts {
                let (l, d) = iou_loss(&fwd.refined[part.anchor], &part.target, cfg)?;
                l_reg += wimg * l / norm;
                if let Some(g) = grads.as_deref_mut() {
                    let scale = cfg.lambda_reg * wimg / norm;
                    let anchor_box = self.grid.anchor(part.anchor / k, part.anchor % k);
                    let (aw, ah) = (anchor_box.width(), anchor_box.height());
                    // Chain through the degenerate-box repair: when a pair
                    // was recentered, both repaired corners depend on both
                    // raw corners with weight 1/2.
                    let (dx1, dx2) = if fwd.repaired_x[part.anchor] {
                        let s = 0.5 * (d[0] + d[2]);
                        (s, s)
                    } else {
                        (d[0], d[2])
                    };
                    let (dy1, dy2) = if fwd.repaired_y[part.anchor] {
                        let s = 0.5 * (d[1] + d[3]);
                        (s, s)
                    } else {
                        (d[1], d[3])
                    };
                    let d_offsets =
                        [dx1 * aw, dy1 * ah, dx2 * aw, dy2 * ah].map(|v| v * scale);
                    let z = &scene.anchor_features
                        [part.anchor * dims.dz..(part.anchor + 1) * dims.dz];
                    for (r, &dr) in d_offsets.iter().enumerate() {
                        if dr == 0.0 {
                            continue;
                        }
                        let row = reg_w + r * dims.dz;
                        for (j, &zv) in z.iter().enumerate() {
                            g[row + j] += dr * zv;
                        }
                        g[reg_b + r] += dr;
                    }
                }
            }

            // Anchor classification head.
            let img_targets = &targets[bi];
            if self.cfg.ac_head_enabled && !img_targets.is_empty() {
                let probs: Vec<f64> = img_targets
                    .iter()
                    .map(|t| fwd.ac_probs[t.location * k + t.anchor])
                    .collect();
                let (ac, dp_ac, np_ac) = anchor_cls_loss(&probs, img_targets, cfg)?;
                l_ac += wimg * ac;
                pos_anchors += np_ac;
                if let Some(g) = grads.as_deref_mut() {
                    for (t, (&dp, &p)) in
                        img_targets.iter().zip(dp_ac.iter().zip(probs.iter()))
                    {
                        if dp == 0.0 {
                            continue;
                        }
                        let dlogit = dp * p * (1.0 - p) * cfg.lambda_ac * wimg;
                        let a = t.location * k + t.anchor;
                        let z = &scene.anchor_features[a * dims.dz..(a + 1) * dims.dz];
                        for (j, &zv) in z.iter().enumerate() {
                            g[ac_w + j] += dlogit * zv;
                        }
                        g[ac_b] += dlogit;
                    }
                }
            }
        }

        total_loss(l_cls, l_reg, l_ac, pos_locs, pos_anchors, cfg)
    }

    /// Runs one optimizer step and returns its loss report.
    pub fn step(&mut self) -> Result<LossReport> {
        let batch = self.batch_for_step(self.steps_taken);
        let targets = self.build_targets(&self.model, &batch)?;
        let (report, mut grads) = self.batch_grads(&self.model, &batch, &targets)?;
        if self.cfg.grad_clip_norm > 0.0 {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > self.cfg.grad_clip_norm {
                let scale = self.cfg.grad_clip_norm / norm;
                grads.iter_mut().for_each(|g| *g *= scale);
            }
        }
        let mut params = self.model.params();
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(&grads) {
            *v = self.cfg.momentum * *v - self.cfg.learning_rate * g;
            *p += *v;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters after update"));
        }
        self.model.set_params(&params)?;
        self.steps_taken += 1;
        Ok(report)
    }

    /// Runs the configured number of steps, returning one report per
    /// step.
    pub fn run(&mut self) -> Result<Vec<LossReport>> {
        let mut reports = Vec::with_capacity(self.cfg.steps);
        for _ in 0..self.cfg.steps {
            reports.push(self.step()?);
        }
        Ok(reports)
    }

    /// Detection and ground-truth records for the held-out scenes under
    /// the given inference settings.
    pub fn eval_records_with(
        &self,
        inf: &InferenceConfig,
    ) -> Result<(Vec<DetRecord>, Vec<GtRecord>)> {
        let dims = self.model.dims();
        let k = self.grid.anchors_per_location();
        let mut dets = Vec::new();
        let mut gts = Vec::new();
        for scene in &self.eval_scenes {
            let fwd = self.model.forward(scene, &self.grid)?;
            let image_id = scene.index as i64;
            let found = run_inference(
                &fwd.loc_probs,
                &fwd.ac_probs,
                &fwd.refined,
                dims.num_classes,
                k,
                inf,
            )?;
            dets.extend(found.into_iter().map(|d| DetRecord {
                image_id,
                bbox: d.bbox,
                class_id: d.class_id,
                score: d.score,
            }));
            gts.extend(scene.gt.objects().iter().map(|o| GtRecord {
                image_id,
                bbox: o.bbox,
                class_id: o.class_id,
            }));
        }
        Ok((dets, gts))
    }

    /// Evaluates the held-out scenes with the configured inference
    /// settings.
    pub fn evaluate(&self) -> Result<EvalReport> {
        self.evaluate_with(&self.cfg.inference)
    }

    /// Evaluates with alternative inference settings (used to compare
    /// selection strategies on one trained model).
    pub fn evaluate_with(&self, inf: &InferenceConfig) -> Result<EvalReport> {
        let (dets, gts) = self.eval_records_with(inf)?;
        map_report(&dets, &gts)
    }

    /// Evaluates without the anchor-classification head: every location
    /// contributes one uniformly sampled anchor box scored by the
    /// location probability alone. The best report over `repetitions`
    /// seeded draws is returned, which gives the no-head baseline its
    /// most favorable shake.
    pub fn evaluate_sampled_anchor(&self, repetitions: usize) -> Result<EvalReport> {
        if repetitions == 0 {
            return Err(Error::invalid("repetitions", "must be at least 1"));
        }
        let dims = self.model.dims();
        let k = self.grid.anchors_per_location();
        let inf = &self.cfg.inference;
        let mut best: Option<EvalReport> = None;
        for rep in 0..repetitions {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(0x5eed_0000 + rep as u64);
            let mut dets = Vec::new();
            let mut gts = Vec::new();
            for scene in &self.eval_scenes {
                let fwd = self.model.forward(scene, &self.grid)?;
                let image_id = scene.index as i64;
                let mut candidates = Vec::new();
                for i in 0..self.grid.num_locations() {
                    let pick = rng.gen_range(0..k);
                    let bbox = fwd.refined[i * k + pick];
                    for c in 0..dims.num_classes {
                        let score = fwd.loc_probs[i * dims.num_classes + c];
                        if score >= inf.pre_nms_score_thresh {
                            candidates.push(Detection {
                                bbox,
                                class_id: c + 1,
                                score,
                                location: i,
                                anchor: pick,
                            });
                        }
                    }
                }
                let kept = nms(&candidates, inf.nms_iou_thresh, inf.max_detections)?;
                dets.extend(kept.into_iter().map(|d| DetRecord {
                    image_id,
                    bbox: d.bbox,
                    class_id: d.class_id,
                    score: d.score,
                }));
                gts.extend(scene.gt.objects().iter().map(|o| GtRecord {
                    image_id,
                    bbox: o.bbox,
                    class_id: o.class_id,
                }));
            }
            let report = map_report(&dets, &gts)?;
            if best.as_ref().map_or(true, |b| report.ap > b.ap) {
                best = Some(report);
            }
        }
        Ok(best.expect("repetitions >= 1"))
    }
}

/// Anchors that contribute to the regression loss, with their fixed
/// targets: at each positive location, every anchor that overlaps a
/// ground-truth box of the location's class is pulled toward the one it
/// overlaps most. Anchors without overlap are skipped — a log-IoU loss
/// has no gradient for them.
fn collect_reg_participants(
    grid: &AnchorGrid,
    assign: &AssignmentResult,
    scene: &SyntheticScene,
) -> Vec<RegParticipant> {
    let k = grid.anchors_per_location();
    let mut out = Vec::new();
    for (i, loc) in assign.locations.iter().enumerate() {
        if !loc.positive {
            continue;
        }
        for kk in 0..k {
            let anchor_box = grid.anchor(i, kk);
            let mut best: Option<(f64, BBox)> = None;
            for obj in scene.gt.objects() {
                if obj.class_id != loc.label {
                    continue;
                }
                let v = iou(&anchor_box, &obj.bbox);
                if v > 0.0 && best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, obj.bbox));
                }
            }
            if let Some((_, target)) = best {
                out.push(RegParticipant {
                    anchor: i * k + kk,
                    target,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::SelectionStrategy;

    fn small_config() -> TrainConfig {
        TrainConfig {
            steps: 40,
            num_images: 4,
            num_eval_images: 2,
            batch_size: 4,
            spec: AnchorSpec::new(2, 1).expect("static spec"),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_over_full_batch_training() {
        let mut trainer = ToyTrainer::new(small_config()).unwrap();
        let reports = trainer.run().unwrap();
        let first = reports.first().unwrap().l_total;
        let last = reports.last().unwrap().l_total;
        assert!(
            last < first,
            "loss went from {first} to {last} over {} steps",
            reports.len()
        );
        assert!(last.is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut trainer = ToyTrainer::new(small_config()).unwrap();
            let reports = trainer.run().unwrap();
            (trainer.model.params(), reports.last().unwrap().l_total)
        };
        let (params_a, loss_a) = run();
        let (params_b, loss_b) = run();
        assert_eq!(params_a, params_b);
        assert_eq!(loss_a.to_bits(), loss_b.to_bits());
    }

    #[test]
    fn regression_targets_only_cover_positive_locations() {
        let trainer = ToyTrainer::new(small_config()).unwrap();
        let k = trainer.grid().anchors_per_location();
        for (assign, parts) in trainer.assignments().iter().zip(&trainer.reg_participants) {
            for part in parts {
                let loc = part.anchor / k;
                assert!(assign.locations[loc].positive);
                assert!(iou(&trainer.grid().anchor(loc, part.anchor % k), &part.target) > 0.0);
            }
        }
    }

    #[test]
    fn disabled_ac_head_reports_zero_ac_loss_and_keeps_head_frozen() {
        let mut cfg = small_config();
        cfg.ac_head_enabled = false;
        let prior_logit = (cfg.ac_prior / (1.0 - cfg.ac_prior)).ln();
        let mut trainer = ToyTrainer::new(cfg).unwrap();
        let reports = trainer.run().unwrap();
        assert!(reports.iter().all(|r| r.l_ac == 0.0));
        assert!(trainer.model.ac.weights.iter().all(|&w| w == 0.0));
        assert_eq!(trainer.model.ac.bias, vec![prior_logit]);
        // The other heads must still have moved.
        assert!(trainer.model.loc.weights.iter().any(|&w| w != 0.0));
        assert!(trainer.model.reg.weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn evaluation_produces_a_report_over_heldout_scenes() {
        let mut trainer = ToyTrainer::new(small_config()).unwrap();
        trainer.run().unwrap();
        let report = trainer.evaluate().unwrap();
        assert!(report.num_gt > 0);
        assert!((0.0..=1.0).contains(&report.ap));
        let sampled = trainer.evaluate_sampled_anchor(3).unwrap();
        assert!((0.0..=1.0).contains(&sampled.ap));
    }

    #[test]
    fn sampled_anchor_baseline_is_deterministic_per_repetition_count() {
        let mut trainer = ToyTrainer::new(small_config()).unwrap();
        trainer.run().unwrap();
        let a = trainer.evaluate_sampled_anchor(5).unwrap();
        let b = trainer.evaluate_sampled_anchor(5).unwrap();
        assert_eq!(a.ap.to_bits(), b.ap.to_bits());
    }

    #[test]
    fn strategy_sweep_reuses_one_trained_model() {
        let mut trainer = ToyTrainer::new(small_config()).unwrap();
        trainer.run().unwrap();
        let top1 = trainer
            .evaluate_with(&InferenceConfig {
                strategy: SelectionStrategy::TopK { k: 1 },
                ..trainer.config().inference.clone()
            })
            .unwrap();
        let pos = trainer
            .evaluate_with(&InferenceConfig {
                strategy: SelectionStrategy::Pos { tau: 0.1 },
                ..trainer.config().inference.clone()
            })
            .unwrap();
        assert!((0.0..=1.0).contains(&top1.ap));
        assert!((0.0..=1.0).contains(&pos.ap));
    }

    #[test]
    fn batch_cycling_visits_all_images() {
        let mut cfg = small_config();
        cfg.batch_size = 3;
        cfg.num_images = 4;
        let trainer = ToyTrainer::new(cfg).unwrap();
        let mut seen = [false; 4];
        for step in 0..4 {
            for img in trainer.batch_for_step(step) {
                seen[img] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = small_config();
        cfg.momentum = 1.0;
        assert!(ToyTrainer::new(cfg).is_err());
        let mut cfg = small_config();
        cfg.batch_size = 99;
        assert!(ToyTrainer::new(cfg).is_err());
        let mut cfg = small_config();
        cfg.learning_rate = f64::NAN;
        assert!(ToyTrainer::new(cfg).is_err());
        let mut cfg = small_config();
        cfg.stride = 0.0;
        assert!(ToyTrainer::new(cfg).is_err());
    }
}
