//! Layer plans for the generator and discriminator.
//!
//! The discriminator body halves the spatial size with 4×4/stride-2
//! convolutions while the result stays at least `min_spatial` wide, then
//! continues with size-preserving 3×3 convolutions. Its head is a single
//! convolution whose kernel covers the remaining map. The generator mirrors
//! the body in reverse with transposed convolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Single (K+1)-way head.
    Adgan,
    /// Source head (2 logits) plus class head (K logits).
    Acgan,
    /// Source head trained with the two-player objective; the class head
    /// only learns from real samples.
    Vanilla,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adgan" => Ok(Self::Adgan),
            "acgan" => Ok(Self::Acgan),
            "vanilla" => Ok(Self::Vanilla),
            other => Err(Error::Config(format!("unknown loss mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adgan => "adgan",
            Self::Acgan => "acgan",
            Self::Vanilla => "vanilla",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    /// Number of real classes K.
    pub num_classes: usize,
    /// Patch side S (generator output and discriminator input).
    pub patch_size: usize,
    pub channels: usize,
    pub noise_dim: usize,
    /// Layers per network, head and output layer included.
    pub depth: usize,
    /// Width of the first discriminator layer; doubles per layer up to
    /// `8 · base_width`.
    pub base_width: usize,
    pub min_spatial: usize,
    /// 1-based generator layer followed by the regularizer.
    pub g_reg_layer: usize,
    /// 1-based discriminator layer followed by the regularizer.
    pub d_reg_layer: usize,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub init_std: f64,
    pub loss_mode: LossMode,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            patch_size: 27,
            channels: 3,
            noise_dim: 100,
            depth: 5,
            base_width: 32,
            min_spatial: 4,
            g_reg_layer: 2,
            d_reg_layer: 4,
            leaky_slope: 0.2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            init_std: 0.02,
            loss_mode: LossMode::Adgan,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    Conv,
    Transpose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    None,
    Bias,
    BatchNorm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
    Relu,
    /// `0.5 · tanh`, mapping onto `[-0.5, 0.5]`.
    HalfTanh,
}

/// One convolution with its normalization and activation.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan {
    pub name: String,
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_size: usize,
    pub out_size: usize,
    pub norm: Norm,
    pub activation: Activation,
    /// Regularizer applied after the activation.
    pub regularize: bool,
}

impl LayerPlan {
    /// Weight shape: OIHW for convolutions, `(in, out, kh, kw)` for
    /// transposed convolutions.
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            ConvKind::Conv => vec![self.out_channels, self.in_channels, self.kernel, self.kernel],
            ConvKind::Transpose => vec![self.in_channels, self.out_channels, self.kernel, self.kernel],
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.depth < 2 {
            return bad(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.patch_size < 3 {
            return bad(format!("patch size must be at least 3, got {}", self.patch_size));
        }
        if self.channels == 0 || self.noise_dim == 0 || self.base_width == 0 || self.min_spatial == 0 {
            return bad("channels, noise_dim, base_width and min_spatial must be positive".into());
        }
        let body = self.depth - 1;
        if !(1..=body).contains(&self.g_reg_layer) {
            return bad(format!(
                "g_reg_layer must lie in 1..={body} (hidden generator layers), got {}",
                self.g_reg_layer
            ));
        }
        if !(1..=body).contains(&self.d_reg_layer) {
            return bad(format!(
                "d_reg_layer must lie in 1..={body} (discriminator body layers), got {}",
                self.d_reg_layer
            ));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || self.bn_eps <= 0.0 {
            return bad("bn_momentum must lie in (0, 1] and bn_eps must be positive".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        Ok(())
    }

    /// Spatial size after each discriminator body layer, starting with the
    /// input (`depth` entries).
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.patch_size];
        let mut s = self.patch_size;
        for _ in 1..self.depth {
            if s / 2 >= self.min_spatial {
                s /= 2;
            }
            sizes.push(s);
        }
        sizes
    }

    /// Output channels of each discriminator body layer.
    pub fn widths(&self) -> Vec<usize> {
        (0..self.depth - 1)
            .map(|i| self.base_width << i.min(3))
            .collect()
    }

    pub fn discriminator_body(&self) -> Vec<LayerPlan> {
        let sizes = self.spatial_sizes();
        let widths = self.widths();
        let mut layers = Vec::new();
        let mut c_in = self.channels;
        for i in 0..self.depth - 1 {
            let (kernel, stride) = if sizes[i + 1] < sizes[i] { (4, 2) } else { (3, 1) };
            layers.push(LayerPlan {
                name: format!("d.conv{}", i + 1),
                kind: ConvKind::Conv,
                in_channels: c_in,
                out_channels: widths[i],
                kernel,
                stride,
                pad: 1,
                in_size: sizes[i],
                out_size: sizes[i + 1],
                norm: if i == 0 { Norm::Bias } else { Norm::BatchNorm },
                activation: Activation::LeakyRelu(self.leaky_slope),
                regularize: i + 1 == self.d_reg_layer,
            });
            c_in = widths[i];
        }
        layers
    }

    /// Discriminator heads as `(suffix, logits)`: one `K+1` head in ADGAN
    /// mode, otherwise a 2-way source head and a K-way class head.
    pub fn head_outputs(&self) -> Vec<(&'static str, usize)> {
        match self.loss_mode {
            LossMode::Adgan => vec![("head", self.num_classes + 1)],
            LossMode::Acgan | LossMode::Vanilla => {
                vec![("head_source", 2), ("head_class", self.num_classes)]
            }
        }
    }

    pub fn discriminator_heads(&self) -> Vec<LayerPlan> {
        let s = *self.spatial_sizes().last().unwrap();
        let c_in = *self.widths().last().unwrap();
        self.head_outputs()
            .into_iter()
            .map(|(suffix, out)| LayerPlan {
                name: format!("d.{suffix}"),
                kind: ConvKind::Conv,
                in_channels: c_in,
                out_channels: out,
                kernel: s,
                stride: 1,
                pad: 0,
                in_size: s,
                out_size: 1,
                norm: Norm::Bias,
                activation: Activation::Identity,
                regularize: false,
            })
            .collect()
    }

    pub fn generator_layers(&self) -> Vec<LayerPlan> {
        let sizes = self.spatial_sizes();
        let widths = self.widths();
        let body = self.depth - 1;
        let mut layers = Vec::new();
        layers.push(LayerPlan {
            name: "g.deconv1".into(),
            kind: ConvKind::Transpose,
            in_channels: self.noise_dim + self.num_classes,
            out_channels: widths[body - 1],
            kernel: sizes[body],
            stride: 1,
            pad: 0,
            in_size: 1,
            out_size: sizes[body],
            norm: Norm::BatchNorm,
            activation: Activation::Relu,
            regularize: self.g_reg_layer == 1,
        });
        // Layer j undoes discriminator layer `body - j + 2`.
        for j in 2..=self.depth {
            let d = body + 1 - j;
            let (s_in, s_out) = (sizes[d + 1], sizes[d]);
            let (kernel, stride) = if s_out > s_in {
                (s_out - 2 * (s_in - 1) + 2, 2)
            } else {
                (3, 1)
            };
            let last = j == self.depth;
            layers.push(LayerPlan {
                name: format!("g.deconv{j}"),
                kind: ConvKind::Transpose,
                in_channels: widths[d],
                out_channels: if last { self.channels } else { widths[d - 1] },
                kernel,
                stride,
                pad: 1,
                in_size: s_in,
                out_size: s_out,
                norm: if last { Norm::Bias } else { Norm::BatchNorm },
                activation: if last { Activation::HalfTanh } else { Activation::Relu },
                regularize: !last && j == self.g_reg_layer,
            });
        }
        layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_out(l: &LayerPlan) -> usize {
        match l.kind {
            ConvKind::Conv => (l.in_size + 2 * l.pad - l.kernel) / l.stride + 1,
            ConvKind::Transpose => (l.in_size - 1) * l.stride + l.kernel - 2 * l.pad,
        }
    }

    #[test]
    fn layer_geometry_is_consistent() {
        for s in [9, 11, 15, 16, 19, 27, 31, 64] {
            for depth in [3, 4, 5, 6, 7] {
                let cfg = ArchConfig {
                    patch_size: s,
                    depth,
                    g_reg_layer: 2.min(depth - 1),
                    d_reg_layer: 4.min(depth - 1),
                    ..ArchConfig::default()
                };
                cfg.validate().unwrap();
                let d = cfg.discriminator_body();
                let g = cfg.generator_layers();
                assert_eq!(d.len(), depth - 1);
                assert_eq!(g.len(), depth);
                for l in d.iter().chain(&g).chain(&cfg.discriminator_heads()) {
                    assert_eq!(conv_out(l), l.out_size, "{s} {depth} {}", l.name);
                }
                for w in d.windows(2).chain(g.windows(2)) {
                    assert_eq!(w[0].out_channels, w[1].in_channels);
                    assert_eq!(w[0].out_size, w[1].in_size);
                }
                assert_eq!(g.last().unwrap().out_size, s);
                assert_eq!(g.last().unwrap().out_channels, 3);
            }
        }
    }

    #[test]
    fn default_widths_and_sizes() {
        let cfg = ArchConfig::default();
        assert_eq!(cfg.widths(), vec![32, 64, 128, 256]);
        assert_eq!(cfg.spatial_sizes(), vec![27, 13, 6, 6, 6]);
        let g: Vec<usize> = cfg.generator_layers().iter().map(|l| l.out_channels).collect();
        assert_eq!(g, vec![256, 128, 64, 32, 3]);
        let s15 = ArchConfig {
            patch_size: 15,
            ..cfg.clone()
        };
        assert_eq!(s15.spatial_sizes(), vec![15, 7, 7, 7, 7]);
        let s64 = ArchConfig { patch_size: 64, ..cfg };
        assert_eq!(s64.spatial_sizes(), vec![64, 32, 16, 8, 4]);
    }

    #[test]
    fn head_count_per_mode() {
        let mut cfg = ArchConfig::default();
        let heads = cfg.discriminator_heads();
        assert_eq!(heads.len(), 1);
        assert_eq!(heads[0].out_channels, 4);
        cfg.loss_mode = LossMode::Acgan;
        let outs: Vec<usize> = cfg.discriminator_heads().iter().map(|h| h.out_channels).collect();
        assert_eq!(outs, vec![2, 3]);
    }

    #[test]
    fn regularizer_placement() {
        let cfg = ArchConfig::default();
        let d: Vec<bool> = cfg.discriminator_body().iter().map(|l| l.regularize).collect();
        assert_eq!(d, vec![false, false, false, true]);
        let g: Vec<bool> = cfg.generator_layers().iter().map(|l| l.regularize).collect();
        assert_eq!(g, vec![false, true, false, false, false]);
    }
}
