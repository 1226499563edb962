//! Linear prediction heads over the engineered scene features.
//!
//! The model is deliberately tiny: three independent linear maps with
//! sigmoid activations on the classification outputs. All capacity lives
//! in the engineered features, which keeps every gradient computable by
//! hand and every training run fast enough for tests.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{AnchorGrid, BBox};
use crate::io::write_atomic;
use crate::toytrain::scene::SyntheticScene;

/// Smallest box extent the forward pass will emit. Degenerate regressed
/// boxes are repaired around their midpoint instead of being swapped, so
/// the gradient path stays well defined.
pub const MIN_EXTENT: f64 = 1e-3;

/// A dense affine map `y = W x + b` with row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    in_dim: usize,
    out_dim: usize,
    /// `out_dim * in_dim` entries; row `o` starts at `o * in_dim`.
    pub weights: Vec<f64>,
    /// `out_dim` entries.
    pub bias: Vec<f64>,
}

impl LinearHead {
    /// Creates a head with all parameters at zero.
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Computes `out[o] = b[o] + sum_j W[o][j] x[j]` for every output row.
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *slot = acc;
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Input/output dimensions shared by the three heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Number of foreground classes (location head outputs).
    pub num_classes: usize,
    /// Location feature width.
    pub dx: usize,
    /// Anchor feature width.
    pub dz: usize,
}

/// The toy detector: a location classifier over per-location features and
/// a box regressor plus anchor classifier over per-anchor features.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    dims: ModelDims,
    /// Location classification head, `dx -> num_classes` logits.
    pub loc: LinearHead,
    /// Box regression head, `dz -> 4` corner offsets in units of the
    /// anchor's width (x corners) and height (y corners).
    pub reg: LinearHead,
    /// Anchor classification head, `dz -> 1` logit.
    pub ac: LinearHead,
}

/// Everything the forward pass produces for one image.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Sigmoid location probabilities, `num_locations * num_classes`,
    /// indexed `i * num_classes + c` for class id `c + 1`.
    pub loc_probs: Vec<f64>,
    /// Sigmoid anchor probabilities, `num_locations * anchors_per_location`,
    /// indexed `i * k_per_loc + k`.
    pub ac_probs: Vec<f64>,
    /// Raw regression outputs in units of the anchor extent,
    /// `num_anchors * 4`.
    pub offsets: Vec<f64>,
    /// Regressed boxes after the minimum-extent repair, one per anchor.
    pub refined: Vec<BBox>,
    /// Whether the x-pair of the corresponding box was repaired.
    pub repaired_x: Vec<bool>,
    /// Whether the y-pair of the corresponding box was repaired.
    pub repaired_y: Vec<bool>,
}

impl ToyModel {
    /// Creates a model with every weight and bias at zero. Such a model
    /// outputs probability 0.5 everywhere and leaves anchor boxes
    /// untouched, which anchors several tests.
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            loc: LinearHead::zeros(dims.dx, dims.num_classes),
            reg: LinearHead::zeros(dims.dz, 4),
            ac: LinearHead::zeros(dims.dz, 1),
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn num_params(&self) -> usize {
        self.loc.num_params() + self.reg.num_params() + self.ac.num_params()
    }

    /// Flattens all parameters into one vector, in the fixed order
    /// `loc.w, loc.b, reg.w, reg.b, ac.w, ac.b`. Gradient vectors use the
    /// same layout.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for head in [&self.loc, &self.reg, &self.ac] {
            out.extend_from_slice(&head.weights);
            out.extend_from_slice(&head.bias);
        }
        out
    }

    /// Overwrites all parameters from a flat vector laid out like
    /// [`ToyModel::params`].
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::invalid(
                "params",
                format!(
                    "expected {} parameters, got {}",
                    self.num_params(),
                    params.len()
                ),
            ));
        }
        let mut at = 0;
        for head in [&mut self.loc, &mut self.reg, &mut self.ac] {
            let nw = head.weights.len();
            head.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = head.bias.len();
            head.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Runs all three heads over one scene. Regression outputs are
    /// scaled by the anchor's own extent — the usual anchor-relative
    /// parameterization — so a unit output moves an x corner by one
    /// anchor width.
    pub fn forward(&self, scene: &SyntheticScene, grid: &AnchorGrid) -> Result<ForwardPass> {
        let n = grid.num_locations();
        let k_per_loc = grid.anchors_per_location();
        let c = self.dims.num_classes;
        if scene.loc_features.len() != n * self.dims.dx {
            return Err(Error::Inconsistent(format!(
                "scene has {} location feature values, grid expects {}",
                scene.loc_features.len(),
                n * self.dims.dx
            )));
        }
        if scene.anchor_features.len() != n * k_per_loc * self.dims.dz {
            return Err(Error::Inconsistent(format!(
                "scene has {} anchor feature values, grid expects {}",
                scene.anchor_features.len(),
                n * k_per_loc * self.dims.dz
            )));
        }

        let mut loc_probs = vec![0.0; n * c];
        let mut logits = vec![0.0; c];
        for i in 0..n {
            let x = &scene.loc_features[i * self.dims.dx..(i + 1) * self.dims.dx];
            self.loc.forward_into(x, &mut logits);
            for (cc, &l) in logits.iter().enumerate() {
                loc_probs[i * c + cc] = sigmoid(l);
            }
        }

        let num_anchors = n * k_per_loc;
        let mut ac_probs = vec![0.0; num_anchors];
        let mut offsets = vec![0.0; num_anchors * 4];
        let mut refined = Vec::with_capacity(num_anchors);
        let mut repaired_x = vec![false; num_anchors];
        let mut repaired_y = vec![false; num_anchors];
        let mut reg_out = [0.0; 4];
        let mut ac_out = [0.0; 1];
        for i in 0..n {
            for k in 0..k_per_loc {
                let a = i * k_per_loc + k;
                let z = &scene.anchor_features[a * self.dims.dz..(a + 1) * self.dims.dz];
                self.reg.forward_into(z, &mut reg_out);
                self.ac.forward_into(z, &mut ac_out);
                ac_probs[a] = sigmoid(ac_out[0]);
                offsets[a * 4..a * 4 + 4].copy_from_slice(&reg_out);

                let anchor = grid.anchor(i, k);
                let (aw, ah) = (anchor.width(), anchor.height());
                let (x1, x2, rx) = repair_pair(
                    anchor.x1 + reg_out[0] * aw,
                    anchor.x2 + reg_out[2] * aw,
                );
                let (y1, y2, ry) = repair_pair(
                    anchor.y1 + reg_out[1] * ah,
                    anchor.y2 + reg_out[3] * ah,
                );
                repaired_x[a] = rx;
                repaired_y[a] = ry;
                refined.push(BBox::new(x1, y1, x2, y2));
            }
        }

        Ok(ForwardPass {
            loc_probs,
            ac_probs,
            offsets,
            refined,
            repaired_x,
            repaired_y,
        })
    }

    /// Serializes the model to a small line-oriented text file. Floats are
    /// written with shortest round-trip formatting, so save/load is exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("semi-anchored-toy-model v1\n");
        out.push_str(&format!(
            "dims {} {} {}\n",
            self.dims.num_classes, self.dims.dx, self.dims.dz
        ));
        for (name, head) in [("loc", &self.loc), ("reg", &self.reg), ("ac", &self.ac)] {
            push_values(&mut out, &format!("{name}.weights"), &head.weights);
            push_values(&mut out, &format!("{name}.bias"), &head.bias);
        }
        write_atomic(path, &out)
    }

    /// Loads a model written by [`ToyModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, reason: String| Error::Parse {
            file: file.clone(),
            line: line + 1,
            reason,
        };

        let (ln, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty checkpoint file".into()))?;
        if header.trim() != "semi-anchored-toy-model v1" {
            return Err(parse_err(
                ln,
                format!("unsupported checkpoint header {header:?}"),
            ));
        }

        let (ln, dims_line) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing dims line".into()))?;
        let fields: Vec<&str> = dims_line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "dims" {
            return Err(parse_err(ln, "expected `dims <classes> <dx> <dz>`".into()));
        }
        let parse_dim = |s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| parse_err(ln, format!("bad dimension {s:?}")))
        };
        let dims = ModelDims {
            num_classes: parse_dim(fields[1])?,
            dx: parse_dim(fields[2])?,
            dz: parse_dim(fields[3])?,
        };
        if dims.num_classes == 0 || dims.dx == 0 || dims.dz == 0 {
            return Err(parse_err(ln, "dimensions must be positive".into()));
        }

        let total_lines = text.lines().count();
        let mut model = Self::zeros(dims);
        let expected: [(String, usize); 6] = [
            ("loc.weights".into(), dims.dx * dims.num_classes),
            ("loc.bias".into(), dims.num_classes),
            ("reg.weights".into(), dims.dz * 4),
            ("reg.bias".into(), 4),
            ("ac.weights".into(), dims.dz),
            ("ac.bias".into(), 1),
        ];
        for (label, len) in &expected {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(total_lines, format!("missing `{label}` line")))?;
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some(tag) if tag == label => {}
                other => {
                    return Err(parse_err(
                        ln,
                        format!("expected `{label}` line, found {other:?}"),
                    ))
                }
            }
            let values: Vec<f64> = fields
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| parse_err(ln, format!("bad float {s:?} in `{label}`")))
                })
                .collect::<Result<_>>()?;
            if values.len() != *len {
                return Err(parse_err(
                    ln,
                    format!("`{label}` expects {len} values, got {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(ln, format!("non-finite value in `{label}`")));
            }
            let dest: &mut Vec<f64> = match label.as_str() {
                "loc.weights" => &mut model.loc.weights,
                "loc.bias" => &mut model.loc.bias,
                "reg.weights" => &mut model.reg.weights,
                "reg.bias" => &mut model.reg.bias,
                "ac.weights" => &mut model.ac.weights,
                _ => &mut model.ac.bias,
            };
            dest.copy_from_slice(&values);
        }
        if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(parse_err(ln, format!("unexpected trailing line {extra:?}")));
        }
        Ok(model)
    }
}

fn push_values(out: &mut String, label: &str, values: &[f64]) {
    out.push_str(label);
    for v in values {
        out.push(' ');
        out.push_str(&format!("{v}"));
    }
    out.push('\n');
}

/// Returns the stride of the pyramid level that owns flat location `i`.
pub fn location_stride(grid: &AnchorGrid, i: usize) -> f64 {
    for level in grid.levels.iter().rev() {
        if i >= level.loc_offset {
            return level.stride;
        }
    }
    grid.levels.first().map_or(1.0, |l| l.stride)
}

/// Repairs a degenerate corner pair around its midpoint so the extent is
/// at least [`MIN_EXTENT`]. Returns the repaired pair and whether the
/// repair fired; when it does, both outputs depend on both inputs with
/// weight 1/2 each, which the backward pass mirrors.
pub fn repair_pair(lo: f64, hi: f64) -> (f64, f64, bool) {
    if hi - lo >= MIN_EXTENT {
        (lo, hi, false)
    } else {
        let mid = 0.5 * (lo + hi);
        (mid - 0.5 * MIN_EXTENT, mid + 0.5 * MIN_EXTENT, true)
    }
}
