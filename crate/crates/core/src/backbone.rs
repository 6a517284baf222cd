// SPDX-License-Identifier: Apache-2.0

//! Declarative layer graph of the range-image encoder-decoder backbone.
//!
//! The graph carries no weights. It exists to check shape propagation and
//! receptive-field arithmetic, and [`conv2d_naive`] gives a direct-summation
//! reference kernel for numerically checking dilation behaviour.
//!
//! Block structure:
//! * dilated residual block (DRB): three 3x3 convolutions at dilations 1, 2, 3
//!   on the same input, concatenated, fused by a 1x1 convolution and added back
//!   to the block input;
//! * downsample block: 1x1 conv, DRB, dropout, then 2x2 pooling (omitted in
//!   the first two encoder blocks);
//! * upsample block: bilinear x2 upsampling, concatenation with the matching
//!   encoder feature, DRB.

use std::fmt;

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Input,
    Conv {
        kernel: usize,
        dilation: usize,
        stride: usize,
        padding: usize,
    },
    Pool {
        kernel: usize,
        stride: usize,
    },
    BilinearUpsample {
        factor: usize,
    },
    Concat,
    Add,
    /// No-op at inference; kept so the plan mirrors the block layout.
    Dropout {
        rate: f64,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv { dilation, .. } if *dilation > 1 => "dilated_conv",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Pool { .. } => "pool",
            LayerKind::BilinearUpsample { .. } => "bilinear_upsample",
            LayerKind::Concat => "concat",
            LayerKind::Add => "add",
            LayerKind::Dropout { .. } => "dropout",
        }
    }

    /// "Same" convolution: stride 1, padding preserving the spatial size.
    pub fn same_conv(kernel: usize, dilation: usize) -> Self {
        LayerKind::Conv {
            kernel,
            dilation,
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Indices of earlier nodes feeding this one.
    pub inputs: Vec<usize>,
}

/// Nodes in topological order; every edge points from a lower index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkPlan {
    nodes: Vec<LayerSpec>,
}

impl NetworkPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[LayerSpec] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn output(&self) -> Option<usize> {
        self.nodes.len().checked_sub(1)
    }

    pub fn input(&mut self, name: &str, channels: usize) -> usize {
        self.nodes.push(LayerSpec {
            name: name.into(),
            kind: LayerKind::Input,
            in_channels: channels,
            out_channels: channels,
            inputs: vec![],
        });
        self.nodes.len() - 1
    }

    /// Appends a node, deriving its input channel count from its inputs.
    /// `out_channels` is ignored for kinds that cannot change channel count.
    pub fn push(
        &mut self,
        name: impl Into<String>,
        kind: LayerKind,
        inputs: &[usize],
        out_channels: usize,
    ) -> Result<usize> {
        let name = name.into();
        if inputs.is_empty() {
            return Err(Error::InvalidConfig(format!("node `{name}` has no inputs")));
        }
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(Error::InvalidConfig(format!(
                "node `{name}` references unknown or later node {bad}"
            )));
        }
        let chans: Vec<usize> = inputs.iter().map(|&i| self.nodes[i].out_channels).collect();
        let (in_channels, out_channels) = match &kind {
            LayerKind::Input => {
                return Err(Error::InvalidConfig("use NetworkPlan::input for inputs".into()))
            }
            LayerKind::Concat => {
                let total = chans.iter().sum();
                (total, total)
            }
            LayerKind::Add => {
                if chans.iter().any(|&c| c != chans[0]) {
                    return Err(Error::ShapeMismatch(format!(
                        "node `{name}` adds tensors with channels {chans:?}"
                    )));
                }
                (chans[0], chans[0])
            }
            _ if inputs.len() != 1 => {
                return Err(Error::InvalidConfig(format!(
                    "node `{name}` ({}) takes exactly one input",
                    kind.name()
                )))
            }
            LayerKind::Conv {
                kernel,
                dilation,
                stride,
                ..
            } => {
                if *kernel == 0 || *dilation == 0 || *stride == 0 || out_channels == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "node `{name}`: kernel, dilation, stride and channels must be positive"
                    )));
                }
                (chans[0], out_channels)
            }
            LayerKind::Pool { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "node `{name}`: pool kernel and stride must be positive"
                    )));
                }
                (chans[0], chans[0])
            }
            LayerKind::BilinearUpsample { factor } => {
                if *factor == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "node `{name}`: upsample factor must be positive"
                    )));
                }
                (chans[0], chans[0])
            }
            LayerKind::Dropout { .. } => (chans[0], chans[0]),
        };
        self.nodes.push(LayerSpec {
            name,
            kind,
            in_channels,
            out_channels,
            inputs: inputs.to_vec(),
        });
        Ok(self.nodes.len() - 1)
    }

    /// Largest cumulative stride reached anywhere in the plan.
    pub fn downsample_factor(&self) -> usize {
        let mut factor = vec![1usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let base = n.inputs.iter().map(|&j| factor[j]).max().unwrap_or(1);
            factor[i] = match n.kind {
                LayerKind::Pool { stride, .. } | LayerKind::Conv { stride, .. } => base * stride,
                LayerKind::BilinearUpsample { factor: f } => (base / f).max(1),
                _ => base,
            };
        }
        factor.into_iter().max().unwrap_or(1)
    }

    /// Padding `(dh, dw)` that makes `(h, w)` acceptable to [`propagate_shapes`].
    pub fn required_padding(&self, h: usize, w: usize) -> (usize, usize) {
        let f = self.downsample_factor();
        (h.next_multiple_of(f) - h, w.next_multiple_of(f) - w)
    }
}

/// One node per line: `name kind params in=C out=C <- inputs`.
impl fmt::Display for NetworkPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.nodes {
            write!(f, "{} {}", n.name, n.kind.name())?;
            match &n.kind {
                LayerKind::Conv {
                    kernel,
                    dilation,
                    stride,
                    padding,
                } => write!(f, " k={kernel} d={dilation} s={stride} p={padding}")?,
                LayerKind::Pool { kernel, stride } => write!(f, " k={kernel} s={stride}")?,
                LayerKind::BilinearUpsample { factor } => write!(f, " x{factor}")?,
                LayerKind::Dropout { rate } => write!(f, " rate={rate}")?,
                _ => {}
            }
            write!(f, " in={} out={}", n.in_channels, n.out_channels)?;
            if !n.inputs.is_empty() {
                let names: Vec<&str> = n.inputs.iter().map(|&i| self.nodes[i].name.as_str()).collect();
                write!(f, " <- {}", names.join(","))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Channel widths and regularisation of the range-image backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    pub input_channels: usize,
    pub encoder_widths: Vec<usize>,
    /// Per encoder block: whether it ends with a 2x2 pool.
    pub encoder_pools: Vec<bool>,
    pub decoder_widths: Vec<usize>,
    pub dropout: f64,
}

impl BackboneConfig {
    pub fn new(input_channels: usize) -> Self {
        Self {
            input_channels,
            encoder_widths: vec![32, 64, 128, 128, 128, 128],
            encoder_pools: vec![false, false, true, true, true, true],
            decoder_widths: vec![128, 128, 64, 64],
            dropout: 0.2,
        }
    }

    pub fn build(&self) -> Result<NetworkPlan> {
        if self.encoder_widths.len() != self.encoder_pools.len() {
            return Err(Error::InvalidConfig(
                "encoder widths and pool flags differ in length".into(),
            ));
        }
        let pooled: Vec<usize> = (0..self.encoder_pools.len())
            .filter(|&i| self.encoder_pools[i])
            .collect();
        if pooled.len() != self.decoder_widths.len() {
            return Err(Error::InvalidConfig(format!(
                "{} pooling blocks need {} upsample blocks, got {}",
                pooled.len(),
                pooled.len(),
                self.decoder_widths.len()
            )));
        }

        let mut plan = NetworkPlan::new();
        let mut x = plan.input("input", self.input_channels);
        let mut skips = Vec::new();
        for (b, (&width, &pool)) in self
            .encoder_widths
            .iter()
            .zip(&self.encoder_pools)
            .enumerate()
        {
            let p = format!("enc{}", b + 1);
            x = plan.push(format!("{p}.conv1x1"), LayerKind::same_conv(1, 1), &[x], width)?;
            x = dilated_residual_block(&mut plan, &format!("{p}.drb"), x, width)?;
            x = plan.push(
                format!("{p}.dropout"),
                LayerKind::Dropout { rate: self.dropout },
                &[x],
                width,
            )?;
            if pool {
                skips.push(x);
                x = plan.push(
                    format!("{p}.pool"),
                    LayerKind::Pool { kernel: 2, stride: 2 },
                    &[x],
                    width,
                )?;
            }
        }
        for (b, &width) in self.decoder_widths.iter().enumerate() {
            let p = format!("dec{}", b + 1);
            let skip = skips.pop().expect("one skip per pooled block");
            let up = plan.push(
                format!("{p}.upsample"),
                LayerKind::BilinearUpsample { factor: 2 },
                &[x],
                0,
            )?;
            let cat = plan.push(format!("{p}.concat"), LayerKind::Concat, &[up, skip], 0)?;
            x = dilated_residual_block(&mut plan, &format!("{p}.drb"), cat, width)?;
        }
        Ok(plan)
    }
}

/// Appends a DRB. A 1x1 projection is put on the shortcut when the block
/// changes channel count.
pub fn dilated_residual_block(
    plan: &mut NetworkPlan,
    prefix: &str,
    input: usize,
    out_channels: usize,
) -> Result<usize> {
    let branches = [1, 2, 3]
        .iter()
        .map(|&d| {
            plan.push(
                format!("{prefix}.conv3x3_d{d}"),
                LayerKind::same_conv(3, d),
                &[input],
                out_channels,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let cat = plan.push(format!("{prefix}.concat"), LayerKind::Concat, &branches, 0)?;
    let fuse = plan.push(format!("{prefix}.fuse1x1"), LayerKind::same_conv(1, 1), &[cat], out_channels)?;
    let shortcut = if plan.nodes[input].out_channels == out_channels {
        input
    } else {
        plan.push(
            format!("{prefix}.shortcut1x1"),
            LayerKind::same_conv(1, 1),
            &[input],
            out_channels,
        )?
    };
    plan.push(format!("{prefix}.add"), LayerKind::Add, &[fuse, shortcut], 0)
}

/// Backbone plan for a 5-channel (KITTI) or 6-channel (Waymo) range image.
pub fn build_rangercnn_backbone(input_channels: usize) -> Result<NetworkPlan> {
    if !(input_channels == 5 || input_channels == 6) {
        return Err(Error::InvalidConfig(format!(
            "backbone expects 5 or 6 input channels, got {input_channels}"
        )));
    }
    BackboneConfig::new(input_channels).build()
}

/// Per-node `(h, w, c)` produced by [`propagate_shapes`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTrace {
    pub names: Vec<String>,
    pub shapes: Vec<(usize, usize, usize)>,
}

impl ShapeTrace {
    pub fn output(&self) -> Option<(usize, usize, usize)> {
        self.shapes.last().copied()
    }

    pub fn shape_of(&self, name: &str) -> Option<(usize, usize, usize)> {
        self.names.iter().position(|n| n == name).map(|i| self.shapes[i])
    }
}

fn windowed(node: &str, size: usize, kernel: usize, dilation: usize, stride: usize, padding: usize) -> Result<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = size + 2 * padding;
    if padded < span {
        return Err(Error::ShapeMismatch(format!(
            "node `{node}`: input size {size} smaller than window {span}"
        )));
    }
    if !(padded - span).is_multiple_of(stride) {
        return Err(Error::IndivisibleShape {
            node: node.to_string(),
            size,
            stride,
        });
    }
    Ok((padded - span) / stride + 1)
}

/// Propagates an `h x w` input through the plan.
pub fn propagate_shapes(plan: &NetworkPlan, h: usize, w: usize) -> Result<ShapeTrace> {
    let mut shapes: Vec<(usize, usize, usize)> = Vec::with_capacity(plan.len());
    for n in plan.nodes() {
        let ins: Vec<(usize, usize, usize)> = n.inputs.iter().map(|&i| shapes[i]).collect();
        let shape = match n.kind {
            LayerKind::Input => (h, w, n.out_channels),
            LayerKind::Conv {
                kernel,
                dilation,
                stride,
                padding,
            } => {
                let (ih, iw, _) = ins[0];
                (
                    windowed(&n.name, ih, kernel, dilation, stride, padding)?,
                    windowed(&n.name, iw, kernel, dilation, stride, padding)?,
                    n.out_channels,
                )
            }
            LayerKind::Pool { kernel, stride } => {
                let (ih, iw, c) = ins[0];
                if ih % stride != 0 || iw % stride != 0 {
                    return Err(Error::IndivisibleShape {
                        node: n.name.clone(),
                        size: if ih % stride != 0 { ih } else { iw },
                        stride,
                    });
                }
                (
                    windowed(&n.name, ih, kernel, 1, stride, 0)?,
                    windowed(&n.name, iw, kernel, 1, stride, 0)?,
                    c,
                )
            }
            LayerKind::BilinearUpsample { factor } => {
                let (ih, iw, c) = ins[0];
                (ih * factor, iw * factor, c)
            }
            LayerKind::Concat | LayerKind::Add => {
                let (ih, iw, _) = ins[0];
                if let Some(bad) = ins.iter().find(|s| (s.0, s.1) != (ih, iw)) {
                    return Err(Error::ShapeMismatch(format!(
                        "node `{}` joins spatial sizes {:?} and {:?}",
                        n.name,
                        (ih, iw),
                        (bad.0, bad.1)
                    )));
                }
                (ih, iw, n.out_channels)
            }
            LayerKind::Dropout { .. } => ins[0],
        };
        shapes.push(shape);
    }
    Ok(ShapeTrace {
        names: plan.nodes().iter().map(|n| n.name.clone()).collect(),
        shapes,
    })
}

/// Receptive field `(rf_h, rf_w)` of a node in input pixels.
///
/// Standard recurrence `rf' = rf + (k_eff - 1) * jump`, `jump' = jump * stride`
/// with `k_eff = dilation * (k - 1) + 1`. Bilinear x`f` upsampling reads a
/// 2-tap neighbourhood of the coarse grid and divides the jump by `f`.
/// Joins take the maximum over their inputs.
pub fn receptive_field(plan: &NetworkPlan, node: usize) -> Result<(f64, f64)> {
    if node >= plan.len() {
        return Err(Error::IndexOutOfBounds(format!(
            "node {node} in a plan of {} nodes",
            plan.len()
        )));
    }
    // (rf, jump); square kernels keep both axes equal.
    let mut state: Vec<(f64, f64)> = Vec::with_capacity(node + 1);
    for n in &plan.nodes()[..=node] {
        let ins: Vec<(f64, f64)> = n.inputs.iter().map(|&i| state[i]).collect();
        let s = match n.kind {
            LayerKind::Input => (1.0, 1.0),
            LayerKind::Conv {
                kernel,
                dilation,
                stride,
                ..
            } => {
                let (rf, jump) = ins[0];
                let k_eff = (dilation * (kernel - 1) + 1) as f64;
                (rf + (k_eff - 1.0) * jump, jump * stride as f64)
            }
            LayerKind::Pool { kernel, stride } => {
                let (rf, jump) = ins[0];
                (rf + (kernel as f64 - 1.0) * jump, jump * stride as f64)
            }
            LayerKind::BilinearUpsample { factor } => {
                let (rf, jump) = ins[0];
                (rf + jump, jump / factor as f64)
            }
            LayerKind::Concat | LayerKind::Add => ins
                .iter()
                .fold((0.0f64, 0.0f64), |acc, s| (acc.0.max(s.0), acc.1.max(s.1))),
            LayerKind::Dropout { .. } => ins[0],
        };
        state.push(s);
    }
    let rf = state[node].0;
    Ok((rf, rf))
}

/// Direct-summation 2D cross-correlation with zero padding.
///
/// `input` is `(C_in, H, W)`, `kernel` is `(C_out, C_in, kh, kw)`.
pub fn conv2d_naive<T: Real>(
    input: &Array3<T>,
    kernel: &Array4<T>,
    dilation: usize,
    stride: usize,
    padding: usize,
) -> Result<Array3<T>> {
    let (cin, h, w) = input.dim();
    let (cout, kin, kh, kw) = kernel.dim();
    if kin != cin {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {kin} input channels, tensor has {cin}"
        )));
    }
    if dilation == 0 || stride == 0 || kh == 0 || kw == 0 {
        return Err(Error::InvalidConfig(
            "dilation, stride and kernel size must be positive".into(),
        ));
    }
    let span_h = dilation * (kh - 1) + 1;
    let span_w = dilation * (kw - 1) + 1;
    if h + 2 * padding < span_h || w + 2 * padding < span_w {
        return Err(Error::ShapeMismatch(format!(
            "input {h}x{w} smaller than window {span_h}x{span_w}"
        )));
    }
    let out_h = (h + 2 * padding - span_h) / stride + 1;
    let out_w = (w + 2 * padding - span_w) / stride + 1;
    let mut out = Array3::from_elem((cout, out_h, out_w), T::zero());
    for o in 0..cout {
        for y in 0..out_h {
            for x in 0..out_w {
                let mut acc = T::zero();
                for c in 0..cin {
                    for ky in 0..kh {
                        let iy = (y * stride + ky * dilation) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (x * stride + kx * dilation) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += input[[c, iy as usize, ix as usize]] * kernel[[o, c, ky, kx]];
                        }
                    }
                }
                out[[o, y, x]] = acc;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn single(kind: LayerKind) -> NetworkPlan {
        let mut p = NetworkPlan::new();
        let i = p.input("in", 1);
        p.push("layer", kind, &[i], 1).unwrap();
        p
    }

    #[test]
    fn block_counts() {
        let plan = build_rangercnn_backbone(5).unwrap();
        let count = |pat: &str| plan.nodes().iter().filter(|n| n.name.ends_with(pat)).count();
        assert_eq!(count(".conv1x1"), 6);
        assert_eq!(count(".upsample"), 4);
        assert_eq!(count(".drb.add"), 10);
        assert_eq!(count(".pool"), 4);
        assert!(plan.find("enc1.pool").is_none());
        assert!(plan.find("enc2.pool").is_none());
        assert!(plan.find("enc3.pool").is_some());
        assert!(build_rangercnn_backbone(4).is_err());
    }

    #[test]
    fn encoder_drb_node_layout() {
        let plan = build_rangercnn_backbone(6).unwrap();
        let drb: Vec<&LayerSpec> = plan
            .nodes()
            .iter()
            .filter(|n| n.name.starts_with("enc3.drb."))
            .collect();
        let kinds: Vec<&str> = drb.iter().map(|n| n.kind.name()).collect();
        assert_eq!(kinds, ["conv", "dilated_conv", "dilated_conv", "concat", "conv", "add"]);
    }

    #[test]
    fn kitti_shape_contract() {
        let plan = build_rangercnn_backbone(5).unwrap();
        let trace = propagate_shapes(&plan, 48, 512).unwrap();
        assert_eq!(trace.output(), Some((48, 512, 64)));
        assert_eq!(trace.shape_of("enc6.pool"), Some((3, 32, 128)));
        assert_eq!(plan.downsample_factor(), 16);
    }

    #[test]
    fn waymo_width_needs_padding() {
        let plan = build_rangercnn_backbone(6).unwrap();
        match propagate_shapes(&plan, 64, 2650) {
            Err(Error::IndivisibleShape { node, size, stride }) => {
                assert_eq!(node, "enc4.pool");
                assert_eq!((size, stride), (1325, 2));
            }
            other => panic!("expected indivisible error, got {other:?}"),
        }
        assert_eq!(plan.required_padding(64, 2650), (0, 6));
        let trace = propagate_shapes(&plan, 64, 2656).unwrap();
        assert_eq!(trace.output(), Some((64, 2656, 64)));
    }

    #[test]
    fn same_conv_keeps_shape() {
        let plan = single(LayerKind::same_conv(3, 1));
        assert_eq!(propagate_shapes(&plan, 7, 9).unwrap().output(), Some((7, 9, 1)));
    }

    #[test]
    fn receptive_field_examples() {
        assert_eq!(receptive_field(&single(LayerKind::same_conv(3, 2)), 1).unwrap(), (5.0, 5.0));
        assert_eq!(receptive_field(&single(LayerKind::same_conv(3, 3)), 1).unwrap(), (7.0, 7.0));
        let mut p = NetworkPlan::new();
        let i = p.input("in", 4);
        let out = dilated_residual_block(&mut p, "drb", i, 4).unwrap();
        assert_eq!(receptive_field(&p, out).unwrap(), (7.0, 7.0));
    }

    #[test]
    fn receptive_field_is_monotone_along_edges() {
        let plan = build_rangercnn_backbone(5).unwrap();
        let rf: Vec<f64> = (0..plan.len())
            .map(|i| receptive_field(&plan, i).unwrap().0)
            .collect();
        for (i, n) in plan.nodes().iter().enumerate() {
            for &j in &n.inputs {
                assert!(rf[i] >= rf[j], "{} shrinks the receptive field", n.name);
            }
        }
    }

    #[test]
    fn text_graph_lists_every_node() {
        let plan = build_rangercnn_backbone(5).unwrap();
        let text = plan.to_string();
        assert_eq!(text.lines().count(), plan.len());
        assert!(text.contains("enc1.drb.conv3x3_d3 dilated_conv k=3 d=3 s=1 p=3 in=32 out=32 <- enc1.conv1x1"));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = Array::from_shape_fn((2, 4, 5), |(c, y, x)| (c * 20 + y * 5 + x) as f64);
        let mut k = Array4::<f64>::zeros((2, 2, 1, 1));
        k[[0, 0, 0, 0]] = 1.0;
        k[[1, 1, 0, 0]] = 1.0;
        assert_eq!(conv2d_naive(&x, &k, 1, 1, 0).unwrap(), x);
    }

    #[test]
    fn impulse_response_is_flipped_dilated_kernel() {
        // 9x9 impulse at (4, 4), 3x3 kernel with distinct taps, dilation 2, pad 2.
        let mut x = Array3::<f64>::zeros((1, 9, 9));
        x[[0, 4, 4]] = 1.0;
        let k = Array::from_shape_fn((1, 1, 3, 3), |(_, _, a, b)| (1 + 3 * a + b) as f64);
        let y = conv2d_naive(&x, &k, 2, 1, 2).unwrap();
        assert_eq!(y.dim(), (1, 9, 9));
        for oy in 0..9 {
            for ox in 0..9 {
                // Output (oy, ox) reads input (oy - 2 + 2a, ox - 2 + 2b).
                let mut expect = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        if oy + 2 * a == 6 && ox + 2 * b == 6 {
                            expect = k[[0, 0, a, b]];
                        }
                    }
                }
                assert_eq!(y[[0, oy, ox]], expect, "at ({oy}, {ox})");
            }
        }
        // Hand-checked taps: output (6, 6) sees the top-left tap, (2, 2) the bottom-right.
        assert_eq!(y[[0, 6, 6]], 1.0);
        assert_eq!(y[[0, 2, 2]], 9.0);
        assert_eq!(y[[0, 4, 2]], 6.0);
        assert_eq!(y[[0, 2, 4]], 8.0);
    }

    #[test]
    fn conv_shape_mismatch() {
        let x = Array3::<f64>::zeros((2, 4, 4));
        let k = Array4::<f64>::zeros((1, 3, 3, 3));
        assert!(matches!(conv2d_naive(&x, &k, 1, 1, 1), Err(Error::ShapeMismatch(_))));
    }
}
